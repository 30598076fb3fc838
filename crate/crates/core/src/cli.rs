//! Problem setup from a configuration and the `fsisim` subcommands.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{FamilyKind, InitialVelocity, SimConfig};
use crate::diagnostics::{write_csv, DiagnosticsRecord};
use crate::error::{FsiError, Result};
use crate::kinematics::{project_deformation, residuals_of, DeformationFamily, DeformationField, Tabulated};
use crate::linsolve::coupled::FluidState;
use crate::linsolve::fe::{qp_bases, qp_weight, FeSpace, MiniField};
use crate::linsolve::stokes::{manufactured_stokes, solve_steady_stokes, surface_traction};
use crate::mesh::{generate_ball_in_box, load_mesh, BoundaryTag, Mesh, NodeKind, SolidMesh};
use crate::stepper::{run_simulation, RunOptions, SimContext, StepParams, Termination};
use crate::Vec3;

pub fn build_mesh(cfg: &SimConfig) -> Result<(Mesh, SolidMesh)> {
    match &cfg.geometry.mesh_path {
        Some(p) => {
            let (mesh, solid) = load_mesh(p)?;
            let solid = solid.ok_or_else(|| {
                FsiError::ConfigInvalid(format!("{} has no SOLIDTETS section", p.display()))
            })?;
            Ok((mesh, solid))
        }
        None => generate_ball_in_box(cfg.geometry.box_half_width, cfg.geometry.ball_radius, cfg.geometry.resolution),
    }
}

/// Radius of the solid's reference surface (largest node distance from the origin).
fn solid_radius(solid: &SolidMesh) -> f64 {
    solid.nodes.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// The deformation as configured, before projection.
pub fn raw_deformation(cfg: &SimConfig, solid: &SolidMesh) -> Result<DeformationField> {
    let d = &cfg.deformation;
    let radius = solid_radius(solid);
    let omega = 2.0 * std::f64::consts::PI * d.frequency;
    let family = match d.family {
        FamilyKind::None => DeformationFamily::Identity,
        FamilyKind::Dilation => DeformationFamily::Dilation { amplitude: d.amplitude, omega, radius, ramp: d.ramp },
        FamilyKind::TravellingWave => DeformationFamily::TravellingWave {
            amplitude: d.amplitude,
            omega,
            wavenumber: d.wavenumber.unwrap_or(std::f64::consts::PI / radius),
            radius,
            ramp: d.ramp,
        },
        FamilyKind::File => {
            let path = d.path.as_ref().expect("validated");
            DeformationFamily::Tabulated(Arc::new(Tabulated::parse(&std::fs::read_to_string(path)?)?))
        }
    };
    DeformationField::new(family, solid, cfg.rho_s)
}

/// Sampled horizon of the projected track: one step past t_end.
fn track_horizon(cfg: &SimConfig) -> f64 {
    (cfg.n_steps() + 1) as f64 * cfg.time.dt
}

pub fn build_deformation(cfg: &SimConfig, solid: &SolidMesh) -> Result<DeformationField> {
    let raw = raw_deformation(cfg, solid)?;
    if cfg.deformation.project && cfg.deformation.family != FamilyKind::None {
        project_deformation(&raw, solid, track_horizon(cfg), cfg.time.dt)
    } else {
        Ok(raw)
    }
}

pub fn step_params(cfg: &SimConfig) -> StepParams {
    let t = &cfg.tolerances;
    StepParams {
        nu: cfg.nu,
        dt: cfg.time.dt,
        tol_picard: t.tol_picard,
        max_picard: t.max_picard,
        tol_ext: t.tol_ext,
        max_ext_iter: t.max_ext_iter,
        theta: t.theta,
        anderson: t.anderson,
    }
}

pub fn build_context(cfg: &SimConfig) -> Result<SimContext> {
    let (mesh, solid) = build_mesh(cfg)?;
    let deform = build_deformation(cfg, &solid)?;
    SimContext::new(mesh, solid, deform, step_params(cfg))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialDataReport {
    /// max_j |∫ ψⱼ div u₀| / ∫ ψⱼ.
    pub divergence: f64,
    /// max |u₀| on wall nodes.
    pub wall: f64,
    /// max |u₀ − (h1 + ω0∧y + ∂tX*(y,0))| on interface nodes.
    pub interface: f64,
}

/// Residuals of the initial compatibility conditions; errors above `bound`.
pub fn validate_initial_velocity(
    u0: &FluidState,
    h1: &Vec3,
    omega0: &Vec3,
    mesh: &Mesh,
    fe: &FeSpace,
    v_star: &[Vec3],
    bound: f64,
) -> Result<InitialDataReport> {
    let mut div = vec![0.0; mesh.nodes.len()];
    for (e, t) in mesh.tets.iter().enumerate() {
        let w = qp_weight(fe, e);
        for b in qp_bases(fe, e).iter() {
            let d = u0.velocity.grad(t, e, b).trace();
            for a in 0..4 {
                div[t[a]] += w * b.phi[a] * d;
            }
        }
    }
    let divergence = div.iter().zip(&fe.lumped).map(|(d, m)| d.abs() / m).fold(0.0, f64::max);
    let mut wall: f64 = 0.0;
    let mut interface: f64 = 0.0;
    for (i, k) in mesh.node_kind.iter().enumerate() {
        let u = u0.velocity.nodal[i];
        match k {
            NodeKind::Wall => wall = wall.max(u.norm()),
            NodeKind::Interface => {
                interface = interface.max((u - h1 - omega0.cross(&mesh.nodes[i]) - v_star[i]).norm())
            }
            NodeKind::Interior => {}
        }
    }
    let report = InitialDataReport { divergence, wall, interface };
    if !(divergence <= bound && wall <= bound && interface <= bound) {
        return Err(FsiError::IncompatibleInitialData { divergence, wall, interface });
    }
    Ok(report)
}

/// `FSIVELOCITY 1 nodes=N` followed by N lines `ux uy uz`.
pub fn parse_velocity_file(text: &str, n_nodes: usize) -> Result<Vec<Vec3>> {
    let bad = |msg: String| FsiError::ConfigInvalid(format!("velocity file: {msg}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 || h[0] != "FSIVELOCITY" || h[1] != "1" {
        return Err(bad(format!("bad header '{header}'")));
    }
    let n: usize = h[2]
        .strip_prefix("nodes=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(format!("bad node count '{}'", h[2])))?;
    if n != n_nodes {
        return Err(bad(format!("{n} nodes, mesh has {n_nodes}")));
    }
    let mut out = Vec::with_capacity(n);
    for (k, l) in lines.enumerate() {
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("line {}: not a number", k + 2)))?;
        if v.len() != 3 {
            return Err(bad(format!("line {}: expected 3 values", k + 2)));
        }
        out.push(Vec3::new(v[0], v[1], v[2]));
    }
    if out.len() != n {
        return Err(bad(format!("{} rows, header says {n}", out.len())));
    }
    Ok(out)
}

/// Initial fluid state per configuration, validated against the compatibility conditions.
pub fn initial_fluid(cfg: &SimConfig, ctx: &SimContext) -> Result<(FluidState, InitialDataReport)> {
    let mesh = &ctx.mesh;
    let (_, v_star) = ctx.interface_datum(0.0)?;
    let h1 = cfg.initial.h1;
    let om = cfg.initial.omega0;
    let (fluid, bound) = match cfg.initial.u0 {
        InitialVelocity::Zero => (FluidState::rest(mesh), f64::INFINITY),
        InitialVelocity::Rigid => {
            let data: Vec<Vec3> = (0..mesh.nodes.len())
                .map(|i| match mesh.node_kind[i] {
                    NodeKind::Interface => h1 + om.cross(&mesh.nodes[i]) + v_star[i],
                    _ => Vec3::zeros(),
                })
                .collect();
            let sol = solve_steady_stokes(mesh, &ctx.fe, cfg.nu, &data, None, None)?;
            (FluidState { velocity: sol.velocity, pressure: vec![0.0; mesh.nodes.len()] }, f64::INFINITY)
        }
        InitialVelocity::File => {
            let path = cfg.initial.u0_path.as_ref().expect("validated");
            let nodal = parse_velocity_file(&std::fs::read_to_string(path)?, mesh.nodes.len())?;
            (
                FluidState { velocity: MiniField::from_nodal(mesh, nodal), pressure: vec![0.0; mesh.nodes.len()] },
                1e-8,
            )
        }
    };
    let report = validate_initial_velocity(&fluid, &h1, &om, mesh, &ctx.fe, &v_star, bound)?;
    Ok((fluid, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub reason: Termination,
    pub steps: usize,
    pub t_final: f64,
    pub h_final: [f64; 3],
    pub h_norm: f64,
    pub max_energy: f64,
    pub total_dissipation: f64,
    pub min_dist_to_wall: f64,
    pub max_det_residual: f64,
    pub max_interface_residual: f64,
    pub max_picard_iterations: usize,
    pub initial_data: InitialDataReport,
    pub failure: Option<String>,
}

pub fn summarize(records: &[DiagnosticsRecord], reason: Termination, init: InitialDataReport, failure: Option<String>) -> RunSummary {
    let last = records.last().expect("initial record");
    let mut total_dissipation = 0.0;
    for w in records.windows(2) {
        total_dissipation += w[1].dissipation * (w[1].t - w[0].t);
    }
    let fold = |f: fn(&DiagnosticsRecord) -> f64| records.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    RunSummary {
        reason,
        steps: records.len() - 1,
        t_final: last.t,
        h_final: [last.h[0], last.h[1], last.h[2]],
        h_norm: last.h.norm(),
        max_energy: fold(|r| r.kinetic_energy),
        total_dissipation,
        min_dist_to_wall: records.iter().map(|r| r.dist_to_wall).fold(f64::INFINITY, f64::min),
        max_det_residual: fold(|r| r.det_residual),
        max_interface_residual: fold(|r| r.interface_bc_residual),
        max_picard_iterations: records.iter().map(|r| r.picard_iterations).max().unwrap_or(0),
        initial_data: init,
        failure,
    }
}

/// Full run writing config.txt, diagnostics.csv, summary.json and snapshots into `out`.
pub fn simulate(cfg: &SimConfig, out: &Path, quiet: bool) -> Result<RunSummary> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    let ctx = build_context(cfg)?;
    let (fluid, init) = initial_fluid(cfg, &ctx)?;
    let state = ctx.initial_state(fluid, cfg.initial.h1, cfg.initial.omega0)?;
    let opts = RunOptions {
        n_steps: cfg.n_steps(),
        d_min: cfg.tolerances.d_min.unwrap_or(2.0 * ctx.mesh.cell_size),
        snapshot_every: cfg.time.snapshot_every,
        snapshot_dir: Some(out.to_path_buf()),
    };
    let outcome = run_simulation(&ctx, state, &opts, |r| {
        if !quiet {
            eprintln!(
                "t = {:.6}  |h| = {:.3e}  E = {:.3e}  picard = {}  det = {:.1e}",
                r.t,
                r.h.norm(),
                r.kinetic_energy,
                r.picard_iterations,
                r.det_residual
            );
        }
    })?;
    let f = std::fs::File::create(out.join("diagnostics.csv"))?;
    write_csv(std::io::BufWriter::new(f), &outcome.records)?;
    let summary = summarize(&outcome.records, outcome.reason, init, outcome.failure);
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializable"))?;
    Ok(summary)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ResidualMax {
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
    pub min_det: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeformationCheck {
    pub times: usize,
    pub raw: ResidualMax,
    pub projected: ResidualMax,
    pub passed: bool,
}

fn residual_max(field: &DeformationField, solid: &SolidMesh, times: &[f64]) -> Result<ResidualMax> {
    let mut m = ResidualMax { min_det: f64::INFINITY, ..Default::default() };
    for &t in times {
        let s = field.sample(solid, t)?;
        let r = residuals_of(solid, field.rho_s, &s, t)?;
        let (h2, h3, h4) = r.scaled(field.rho_s);
        m.h2 = m.h2.max(h2);
        m.h3 = m.h3.max(h3);
        m.h4 = m.h4.max(h4);
        m.min_det = m.min_det.min(r.min_det);
    }
    Ok(m)
}

/// Constraint residuals before and after projection on 50 uniform times in [0, t_end].
pub fn check_deformation(cfg: &SimConfig) -> Result<DeformationCheck> {
    let (_, solid) = build_mesh(cfg)?;
    let raw = raw_deformation(cfg, &solid)?;
    let projected = project_deformation(&raw, &solid, track_horizon(cfg), cfg.time.dt)?;
    let times: Vec<f64> = (0..50).map(|k| cfg.time.t_end * k as f64 / 49.0).collect();
    let r = residual_max(&raw, &solid, &times)?;
    let p = residual_max(&projected, &solid, &times)?;
    let passed = p.h2 <= 1e-10 && p.h3 <= 1e-10 && p.h4 <= 1e-10;
    Ok(DeformationCheck { times: times.len(), raw: r, projected: p, passed })
}

#[derive(Clone, Debug, Serialize)]
pub struct StokesReport {
    pub resolution: usize,
    pub cell_size: f64,
    pub velocity_l2_error: f64,
    pub relative_velocity_error: f64,
    pub pressure_l2_error: f64,
    /// Drag on the ball translating with unit speed along e₁.
    /// Drag from the momentum-row reactions on the interface nodes.
    pub drag: f64,
    /// Same force by direct quadrature of σn with element gradients.
    pub surface_drag: f64,
    pub unbounded_drag: f64,
}

/// Manufactured-solution error and the translating-ball drag at the configured mesh.
pub fn stokes_report(cfg: &SimConfig) -> Result<StokesReport> {
    let (mesh, _) = build_mesh(cfg)?;
    let fe = FeSpace::new(&mesh);
    let m = manufactured_stokes(&mesh, &fe, cfg.nu)?;
    let data: Vec<Vec3> = mesh
        .node_kind
        .iter()
        .map(|k| if *k == NodeKind::Interface { Vec3::x() } else { Vec3::zeros() })
        .collect();
    let sol = solve_steady_stokes(&mesh, &fe, cfg.nu, &data, None, None)?;
    // n_F points into the ball, so the drag is the e₁ part of ∫σ n_F
    let drag: f64 = mesh.interface_nodes().map(|i| sol.reaction[i][0]).sum();
    let surface_drag =
        surface_traction(&mesh, &fe, &sol.velocity, &sol.pressure, cfg.nu, BoundaryTag::SolidInterface)[0];
    let a = cfg.geometry.ball_radius;
    Ok(StokesReport {
        resolution: cfg.geometry.resolution,
        cell_size: m.cell_size,
        velocity_l2_error: m.velocity_l2_error,
        relative_velocity_error: m.velocity_l2_error / m.velocity_l2_norm,
        pressure_l2_error: m.pressure_l2_error,
        drag,
        surface_drag,
        unbounded_drag: 6.0 * std::f64::consts::PI * cfg.nu * a,
    })
}

#[derive(Parser, Debug)]
#[command(name = "fsisim", version, about = "Self-propelled deformable solid in a viscous incompressible fluid")]
pub struct Cli {
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for element assembly.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Reserved; does not affect results.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Constraint residuals of the deformation before and after projection.
    CheckDeformation { config: PathBuf },
    /// Full run.
    Simulate { config: PathBuf },
    /// Built-in property suite at resolution 12.
    Verify,
    /// Steady Stokes solve with manufactured-solution error report.
    Stokes { config: PathBuf },
}

fn load_config(path: &Path) -> Result<SimConfig> {
    SimConfig::parse(&std::fs::read_to_string(path)?)
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
}

pub fn error_json(e: &FsiError) -> String {
    let t = match e {
        FsiError::StepFailed { t, .. } => Some(*t),
        _ => None,
    };
    serde_json::to_string(&ErrorJson { error: e.root().kind(), message: e.to_string(), t }).expect("serializable")
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let mut stdout = std::io::stdout().lock();
    match &cli.command {
        Command::CheckDeformation { config } => {
            let cfg = load_config(config)?;
            let c = check_deformation(&cfg)?;
            writeln!(stdout, "{:<12} {:>12} {:>12} {:>12} {:>10}", "", "H2", "H3", "H4", "min det")?;
            for (name, r) in [("raw", c.raw), ("projected", c.projected)] {
                writeln!(stdout, "{:<12} {:>12.3e} {:>12.3e} {:>12.3e} {:>10.4}", name, r.h2, r.h3, r.h4, r.min_det)?;
            }
            writeln!(stdout, "{}", if c.passed { "PASS" } else { "FAIL" })?;
            Ok(if c.passed { 0 } else { 1 })
        }
        Command::Simulate { config } => {
            let cfg = load_config(config)?;
            let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("fsisim-out"));
            let s = simulate(&cfg, &out, cli.quiet)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&s).expect("serializable"))?;
            Ok(0)
        }
        Command::Verify => {
            let results = crate::verify::run_all(cli.quiet);
            for r in &results {
                writeln!(stdout, "{:<4} {:<44} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            writeln!(stdout, "{} checks, {} failed", results.len(), failed)?;
            Ok(if failed == 0 { 0 } else { 1 })
        }
        Command::Stokes { config } => {
            let cfg = load_config(config)?;
            let r = stokes_report(&cfg)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&r).expect("serializable"))?;
            Ok(0)
        }
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", error_json(&FsiError::ConfigInvalid(format!("--threads: {e}"))));
            return 2;
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_file_roundtrip_and_errors() {
        let v = parse_velocity_file("FSIVELOCITY 1 nodes=2\n1 2 3\n0 0 -1\n", 2).unwrap();
        assert_eq!(v[1], Vec3::new(0.0, 0.0, -1.0));
        assert!(parse_velocity_file("FSIVELOCITY 1 nodes=2\n1 2 3\n", 2).is_err());
        assert!(parse_velocity_file("FSIVELOCITY 1 nodes=3\n", 2).is_err());
    }

    #[test]
    fn error_json_carries_kind_and_time() {
        let e = FsiError::StepFailed { t: 0.5, source: Box::new(FsiError::PicardDiverged { iterations: 7, increment: 2.0 }) };
        let j: serde_json::Value = serde_json::from_str(&error_json(&e)).unwrap();
        assert_eq!(j["error"], "PicardDiverged");
        assert_eq!(j["t"], 0.5);
    }
}
