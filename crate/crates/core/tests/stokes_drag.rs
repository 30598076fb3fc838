use fsi_core::cli::stokes_report;
use fsi_core::config::SimConfig;

fn drag_at(resolution: usize) -> f64 {
    let cfg = SimConfig::parse(&format!("geometry.resolution = {resolution}\ngeometry.ball_radius = 0.3\n")).unwrap();
    let r = stokes_report(&cfg).unwrap();
    // reactions and direct traction quadrature measure the same force
    assert!((r.drag - r.surface_drag).abs() <= 0.1 * r.drag.abs(), "{} vs {}", r.drag, r.surface_drag);
    // a wall-bounded ball is slowed more than in unbounded fluid
    assert!(r.drag > r.unbounded_drag);
    r.drag
}

#[test]
fn translating_ball_drag_converges() {
    let coarse = drag_at(16);
    let fine = drag_at(32);
    let rel = (coarse - fine).abs() / fine;
    assert!(rel <= 0.15, "drag {coarse} at 16 vs {fine} at 32: {rel:.3}");
}
