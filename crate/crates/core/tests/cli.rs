use fsi_core::cli::{main_with_args, simulate};
use fsi_core::config::SimConfig;
use fsi_core::stepper::Termination;

const REST: &str = "geometry.resolution = 8\ngeometry.ball_radius = 0.4\ntime.dt = 0.05\ntime.t_end = 1.0\n";

fn write_config(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn rest_run_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig::parse(REST).unwrap();
    let s = simulate(&cfg, dir.path(), true).unwrap();
    assert_eq!(s.reason, Termination::Completed);
    assert_eq!(s.steps, 20);
    assert_eq!(s.h_norm, 0.0);
    assert_eq!(s.max_energy, 0.0);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["reason"], "completed");
    assert_eq!(summary["h_norm"], 0.0);

    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    let zero_cols = [
        "h_x", "h_y", "h_z", "h_dot_x", "h_dot_y", "h_dot_z", "omega_x", "omega_y", "omega_z",
        "kinetic_energy", "dissipation", "energy_residual", "deformation_power",
        "momentum_x", "momentum_y", "momentum_z", "momentum_gap",
    ];
    for name in zero_cols {
        let c = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("column {name}"));
        assert!(rows.iter().all(|r| r[c] == 0.0), "{name} not identically zero");
    }
}

#[test]
fn diagnostics_are_reproducible_and_config_is_echoed() {
    let text = "geometry.resolution = 8\ngeometry.ball_radius = 0.4\nfluid.nu = 0.5\n\
                deformation.family = travelling_wave\ndeformation.amplitude = 0.01\n\
                time.dt = 0.05\ntime.t_end = 0.2\n";
    let cfg = SimConfig::parse(text).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(&cfg, a.path(), true).unwrap();
    simulate(&cfg, b.path(), true).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "diagnostics.csv"), read(&b, "diagnostics.csv"));

    let echoed = String::from_utf8(read(&a, "config.txt")).unwrap();
    assert_eq!(SimConfig::parse(&echoed).unwrap(), cfg);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(main_with_args(["fsisim", "no-such-command"]), 2);

    let bad = write_config(dir.path(), "fluid.nu = -1\n");
    assert_eq!(main_with_args(["fsisim", "--quiet", "stokes", bad.to_str().unwrap()]), 1);

    let missing = dir.path().join("absent.cfg");
    assert_eq!(main_with_args(["fsisim", "--quiet", "simulate", missing.to_str().unwrap()]), 1);

    let wave = write_config(
        dir.path(),
        "geometry.resolution = 8\ngeometry.ball_radius = 0.4\ndeformation.family = travelling_wave\n\
         deformation.amplitude = 0.01\ntime.dt = 0.02\ntime.t_end = 0.5\n",
    );
    assert_eq!(main_with_args(["fsisim", "--quiet", "check-deformation", wave.to_str().unwrap()]), 0);
}
