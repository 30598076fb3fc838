//! Acceptance suite: one line per criterion, thresholds pinned below.
//!
//! `cargo test --test acceptance` runs everything; `-- 4 7` runs a subset.

use std::process::ExitCode;
use std::time::Instant;

use fsi_core::cli::{build_context, initial_fluid};
use fsi_core::config::SimConfig;
use fsi_core::diagnostics::DiagnosticsRecord;
use fsi_core::extension::{
    advance_extension, cofactor, extension_target, piola_residual, ExtensionMap, ExtensionOptions,
};
use fsi_core::kinematics::{
    constraint_residuals, integrate_rotation, project_deformation, project_velocity, DeformationFamily,
    DeformationField, RigidState,
};
use fsi_core::linsolve::coupled::{assemble_coupled, FluidState};
use fsi_core::linsolve::fe::{FeSpace, MiniField};
use fsi_core::linsolve::stokes::manufactured_stokes;
use fsi_core::mesh::generate_ball_in_box;
use fsi_core::stepper::{
    fixed_point_step, run_simulation, to_body_frame, to_physical, to_tilde, RunOptions, RunOutcome, SimContext,
    StepParams, Termination,
};
use fsi_core::{Mat3, Vec3};
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ADJUGATE_TOL: f64 = 1e-12;
const AFFINE_PIOLA_TOL: f64 = 1e-12;
/// Halving h must bring the Piola residual down to this fraction, unless it
/// already sits at the affine (rounding) level.
const PIOLA_DECAY_RATIO: f64 = 0.6;
const ORTHO_TOL: f64 = 1e-12;
const ROTATION_TOL: f64 = 1e-6;
const PROJECTOR_TOL: f64 = 1e-12;
const CONSTRAINT_TOL: f64 = 1e-10;
const IDENTITY_DET_TOL: f64 = 1e-12;
const MATRIX_SYM_TOL: f64 = 1e-12;
const MOBILITY_SYM_TOL: f64 = 1e-8;
const PRESSURE_MEAN_TOL: f64 = 1e-10;
/// First-order balance: halving dt must shrink the residual to at most this fraction.
const HALVING_RATIO: f64 = 0.6;
const MAX_PICARD: usize = 10;
const INTERFACE_FLOOR: f64 = 1e-8;
const ROUND_TRIP_TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn sim_config(text: &str) -> SimConfig {
    SimConfig::parse(text).expect("valid configuration")
}

fn run(cfg: &SimConfig) -> (SimContext, RunOutcome) {
    let ctx = build_context(cfg).expect("context");
    let (fluid, _) = initial_fluid(cfg, &ctx).expect("initial data");
    let s0 = ctx.initial_state(fluid, cfg.initial.h1, cfg.initial.omega0).expect("initial state");
    let opts = RunOptions {
        n_steps: cfg.n_steps(),
        d_min: cfg.tolerances.d_min.unwrap_or(2.0 * ctx.mesh.cell_size),
        snapshot_every: 0,
        snapshot_dir: None,
    };
    let out = run_simulation(&ctx, s0, &opts, |_| {}).expect("run");
    (ctx, out)
}

fn max_of(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    records.iter().map(f).fold(0.0, f64::max)
}

fn swimmer_config(resolution: usize, dt: f64, t_end: f64) -> SimConfig {
    sim_config(&format!(
        "geometry.resolution = {resolution}\nfluid.nu = 1\nsolid.rho_s = 1\n\
         deformation.family = travelling_wave\ndeformation.amplitude = 0.01\ndeformation.frequency = 1\n\
         deformation.project = true\ntime.dt = {dt}\ntime.t_end = {t_end}\n"
    ))
}

fn cofactor_piola() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut adj: f64 = 0.0;
    for _ in 0..1000 {
        let m = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        // adj(M) M = det(M) I, with the adjugate built from explicit 2×2 minors
        let minor = |r: usize, c: usize| {
            let rs: Vec<usize> = (0..3).filter(|&i| i != r).collect();
            let cs: Vec<usize> = (0..3).filter(|&j| j != c).collect();
            m[(rs[0], cs[0])] * m[(rs[1], cs[1])] - m[(rs[0], cs[1])] * m[(rs[1], cs[0])]
        };
        let oracle = Mat3::from_fn(|r, c| if (r + c) % 2 == 0 { minor(r, c) } else { -minor(r, c) });
        let cof = cofactor(&m);
        let d = (cof - oracle).abs().max().max((m.transpose() * cof - Mat3::identity() * m.determinant()).abs().max());
        adj = adj.max(d);
    }

    let (mesh, _) = generate_ball_in_box(1.0, 0.3, 12).expect("mesh");
    let fe = FeSpace::new(&mesh);
    let a = Mat3::new(1.05, 0.1, -0.02, 0.0, 0.95, 0.07, 0.03, -0.04, 1.0);
    let c = Vec3::new(0.01, -0.02, 0.005);
    let xt = MiniField::from_nodal(&mesh, mesh.nodes.iter().map(|y| a * y + c).collect());
    let affine = piola_residual(&ExtensionMap::from_fields(&mesh, &fe, xt, MiniField::zeros(&mesh)), &mesh, &fe);

    // X̃ = Id + 1e-2 ψ(|y|) s(y), ψ a C∞ bump supported in 0.4 < |y| < 0.9, MINI interpolant
    let smooth = |n: usize| {
        let (mesh, _) = generate_ball_in_box(1.0, 0.3, n).expect("mesh");
        let fe = FeSpace::new(&mesh);
        let pi = std::f64::consts::PI;
        let f = |y: &Vec3| {
            let r = y.norm();
            let psi = if r > 0.4 && r < 0.9 { (0.1 / 0.0625 - 0.1 / ((r - 0.4) * (0.9 - r))).exp() } else { 0.0 };
            y + Vec3::new((pi * y[1]).sin(), (pi * y[2]).sin(), (pi * y[0]).sin()) * (1e-2 * psi)
        };
        let nodal: Vec<Vec3> = mesh.nodes.iter().map(f).collect();
        let bubble = mesh
            .tets
            .iter()
            .map(|t| {
                let c: Vec3 = t.iter().map(|&i| mesh.nodes[i]).sum::<Vec3>() / 4.0;
                f(&c) - t.iter().map(|&i| nodal[i]).sum::<Vec3>() / 4.0
            })
            .collect();
        let xt = MiniField { nodal, bubble };
        piola_residual(&ExtensionMap::from_fields(&mesh, &fe, xt, MiniField::zeros(&mesh)), &mesh, &fe)
    };
    let (p16, p32) = (smooth(16), smooth(32));
    let ratio = p32 / p16;
    outcome(
        adj <= ADJUGATE_TOL && affine <= AFFINE_PIOLA_TOL && p32 <= (PIOLA_DECAY_RATIO * p16).max(AFFINE_PIOLA_TOL),
        format!(
            "adjugate {adj:.1e} (≤ {ADJUGATE_TOL:.0e}), affine piola {affine:.1e} (≤ {AFFINE_PIOLA_TOL:.0e}), \
             smooth piola {p16:.2e} → {p32:.2e}, ratio {ratio:.2} (≤ {PIOLA_DECAY_RATIO} or at rounding)"
        ),
    )
}

fn rotation_group() -> Outcome {
    let mut r = Mat3::identity();
    for k in 0..100_000 {
        let w = Vec3::new((k as f64 * 1e-3).sin(), 0.5, (k as f64 * 7e-4).cos());
        r = integrate_rotation(&r, &w, 1e-3);
    }
    let drift = (r.transpose() * r - Mat3::identity()).abs().max();

    // Constant body rate: R(t) = R0 exp(t S(ω)); compared against nalgebra's axis-angle map.
    let mut worst: f64 = 0.0;
    let cases = [
        (Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 1.0, 1000),
        (Vec3::new(1.0, -2.0, 0.5), 0.7, 350),
        (Vec3::new(0.3, 0.1, -4.0), 2.0, 4000),
    ];
    let r0 = Rotation3::from_euler_angles(0.2, -0.4, 1.1).into_inner();
    for (w, t, n) in cases {
        let dt = t / n as f64;
        let mut r = r0;
        for _ in 0..n {
            r = integrate_rotation(&r, &w, dt);
        }
        let exact = r0 * Rotation3::from_scaled_axis(w * t).into_inner();
        worst = worst.max((r - exact).abs().max());
    }
    let quarter = integrate_rotation(&Mat3::identity(), &Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 1.0);
    let expect = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    worst = worst.max((quarter - expect).abs().max());
    outcome(
        drift <= ORTHO_TOL && worst <= ROTATION_TOL,
        format!("drift {drift:.1e} (≤ {ORTHO_TOL:.0e}), closed forms {worst:.1e} (≤ {ROTATION_TOL:.0e})"),
    )
}

fn projector() -> Outcome {
    let (_, solid) = generate_ball_in_box(1.0, 0.3, 12).expect("mesh");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rv = |rng: &mut ChaCha8Rng| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let x: Vec<Vec3> = solid.nodes.iter().map(|y| y * 1.02).collect();
    let v: Vec<Vec3> = x.iter().map(|_| rv(&mut rng)).collect();
    let p1 = project_velocity(&solid, 2.0, &x, &v, 0.0).expect("projection");
    let p2 = project_velocity(&solid, 2.0, &x, &p1, 0.0).expect("projection");
    let scale = p1.iter().map(|a| a.amax()).fold(0.0, f64::max);
    let idem = p1.iter().zip(&p2).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max) / scale;
    let (l, w) = (rv(&mut rng), rv(&mut rng));
    let rigid: Vec<Vec3> = x.iter().map(|y| l + w.cross(y)).collect();
    let ann = project_velocity(&solid, 2.0, &x, &rigid, 0.0)
        .expect("projection")
        .iter()
        .map(|a| a.amax())
        .fold(0.0, f64::max);

    let r = solid.nodes.iter().map(|y| y.norm()).fold(0.0, f64::max);
    let two_pi = 2.0 * std::f64::consts::PI;
    let families = [
        ("dilation", DeformationFamily::Dilation { amplitude: 0.02, omega: two_pi, radius: r, ramp: None }),
        (
            "travelling_wave",
            DeformationFamily::TravellingWave {
                amplitude: 0.01,
                omega: two_pi,
                wavenumber: std::f64::consts::PI / r,
                radius: r,
                ramp: Some(0.2),
            },
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut per_family = Vec::new();
    for (name, fam) in families {
        let raw = DeformationField::new(fam, &solid, 1.0).expect("field");
        let p = project_deformation(&raw, &solid, 2.0, 0.01).expect("projection");
        let mut fam_worst: f64 = 0.0;
        for _ in 0..50 {
            let t = rng.random_range(0.0..2.0);
            // a breathing mode is projected to ≈ 0, so scale by the raw velocity
            let mut res = constraint_residuals(&p, &solid, t).expect("residuals");
            res.velocity_scale = constraint_residuals(&raw, &solid, t).expect("residuals").velocity_scale;
            let (a, b, c) = res.scaled(1.0);
            fam_worst = fam_worst.max(a).max(b).max(c);
        }
        per_family.push(format!("{name} {fam_worst:.1e}"));
        worst = worst.max(fam_worst);
    }
    outcome(
        idem <= PROJECTOR_TOL && ann <= PROJECTOR_TOL && worst <= CONSTRAINT_TOL,
        format!(
            "idempotence {idem:.1e}, rigid remainder {ann:.1e} (≤ {PROJECTOR_TOL:.0e}), H2-H4 {} (≤ {CONSTRAINT_TOL:.0e})",
            per_family.join(", ")
        ),
    )
}

/// Contraction ratios of the extension iteration for the first swimmer step,
/// driven past its stopping rule so enough iterates exist to measure.
fn extension_ratio(dt: f64) -> f64 {
    let cfg = swimmer_config(12, dt, 4.0 * dt);
    let ctx = build_context(&cfg).expect("context");
    let prev = RigidState::rest();
    let target = extension_target(&ctx.mesh, &ctx.solid, &ctx.deform, &prev, &Vec3::zeros(), &Vec3::zeros(), dt, dt)
        .expect("target");
    let id = ExtensionMap::identity(&ctx.mesh, &ctx.fe);
    let opts = ExtensionOptions { tol: 1e-300, max_iter: 5 };
    let map = advance_extension(&id, &ctx.mesh, &ctx.fe, &ctx.extension_solver, &target, dt, opts, None)
        .expect("extension");
    // ratios once increments reach rounding carry no information
    map.stats
        .ratios
        .iter()
        .zip(&map.stats.increments[1..])
        .filter(|(_, inc)| **inc > 1e-14)
        .map(|(r, _)| *r)
        .fold(0.0, f64::max)
}

fn extension_map() -> Outcome {
    let (mesh, _) = generate_ball_in_box(1.0, 0.3, 12).expect("mesh");
    let fe = FeSpace::new(&mesh);
    let id = ExtensionMap::identity(&mesh, &fe);
    let id_det = id.stats.det_residual.max(id.stats.max_det_deviation);
    let id_piola = piola_residual(&id, &mesh, &fe);

    let rigid = sim_config(
        "geometry.resolution = 12\nfluid.nu = 0.1\nsolid.rho_s = 2\ninitial.u0 = rigid\n\
         initial.h1 = 0.2, 0.1, 0\ninitial.omega0 = 0, 0, 1\ntime.dt = 0.02\ntime.t_end = 0.2\n",
    );
    let tol_ext = rigid.tolerances.tol_ext;
    let (_, out) = run(&rigid);
    let rigid_det = max_of(&out.records, |r| r.det_residual);

    let (c1, c2) = (extension_ratio(1e-2), extension_ratio(5e-3));
    outcome(
        id_det <= IDENTITY_DET_TOL
            && id_piola <= IDENTITY_DET_TOL
            && out.reason == Termination::Completed
            && rigid_det <= tol_ext
            && c1 < 1.0
            && c2 <= c1,
        format!(
            "identity det {id_det:.1e}, piola {id_piola:.1e} (≤ {IDENTITY_DET_TOL:.0e}), rigid det {rigid_det:.1e} \
             (≤ {tol_ext:.0e}), contraction {c1:.3e} at dt 1e-2, {c2:.3e} at dt 5e-3"
        ),
    )
}

fn rigid_decay(dt: f64, steps: usize) -> (SimContext, RunOutcome) {
    run(&sim_config(&format!(
        "geometry.resolution = 12\nfluid.nu = 0.1\nsolid.rho_s = 2\ninitial.u0 = rigid\n\
         initial.h1 = 0.2, 0.1, 0\ninitial.omega0 = 0, 0, 1\ntime.dt = {dt}\ntime.t_end = {}\n",
        dt * steps as f64
    )))
}

fn linear_solver() -> Outcome {
    let err = |n: usize| {
        let (mesh, _) = generate_ball_in_box(1.0, 0.3, n).expect("mesh");
        let fe = FeSpace::new(&mesh);
        let r = manufactured_stokes(&mesh, &fe, 1.0).expect("manufactured solve");
        r.velocity_l2_error / r.velocity_l2_norm
    };
    let (e8, e12) = (err(8), err(12));

    let (mesh, _) = generate_ball_in_box(1.0, 0.3, 12).expect("mesh");
    let fe = FeSpace::new(&mesh);
    let sys = assemble_coupled(&mesh, &fe, 0.02, 0.1, 0.2, Mat3::identity() * 0.01).expect("coupled system");
    let a = sys.system.reduced_matrix();
    let asym = a.asymmetry() / a.max_abs();
    let m = sys.mobility(&mesh).expect("mobility");
    let scale = (0..6).map(|i| m[i][i].abs()).fold(0.0, f64::max);
    let mob = (0..36).map(|k| (m[k / 6][k % 6] - m[k % 6][k / 6]).abs() / scale).fold(0.0, f64::max);
    drop(sys);

    let (ctx, coarse) = rigid_decay(0.02, 10);
    let (_, fine) = rigid_decay(0.01, 20);
    let mean = |s: &FluidState| {
        let m: f64 = s.pressure.iter().zip(&ctx.fe.lumped).map(|(p, w)| p * w).sum();
        let a: f64 = s.pressure.iter().zip(&ctx.fe.lumped).map(|(p, w)| p.abs() * w).sum();
        m.abs() / a
    };
    let p_mean = mean(&coarse.final_state.fluid).max(mean(&fine.final_state.fluid));
    let monotone = |o: &RunOutcome| o.records.windows(2).all(|w| w[1].kinetic_energy <= w[0].kinetic_energy);
    // balance residual at the coarse times, excluding the start-up step
    let mut ratio: f64 = 0.0;
    for k in 2..coarse.records.len() {
        let rc = coarse.records[k].energy_residual.abs();
        let rf = fine.records[2 * k].energy_residual.abs();
        ratio = ratio.max(rf / rc);
    }
    let completed = coarse.reason == Termination::Completed && fine.reason == Termination::Completed;
    outcome(
        e12 < e8
            && asym <= MATRIX_SYM_TOL
            && mob <= MOBILITY_SYM_TOL
            && p_mean <= PRESSURE_MEAN_TOL
            && completed
            && monotone(&coarse)
            && monotone(&fine)
            && ratio <= HALVING_RATIO,
        format!(
            "manufactured error {e8:.2e} → {e12:.2e}, matrix asymmetry {asym:.1e} (≤ {MATRIX_SYM_TOL:.0e}), \
             mobility {mob:.1e} (≤ {MOBILITY_SYM_TOL:.0e}), pressure mean {p_mean:.1e} (≤ {PRESSURE_MEAN_TOL:.0e}), \
             energy monotone {}/{}, balance ratio {ratio:.3} (≤ {HALVING_RATIO})",
            monotone(&coarse),
            monotone(&fine)
        ),
    )
}

fn nonlinear_stepper() -> Outcome {
    let (mesh, solid) = generate_ball_in_box(1.0, 0.3, 12).expect("mesh");
    let deform = DeformationField::identity(&solid, 1.0).expect("field");
    let ctx = SimContext::new(mesh, solid, deform, StepParams::new(1.0, 0.02)).expect("context");
    let s0 = ctx.initial_state(FluidState::rest(&ctx.mesh), Vec3::zeros(), Vec3::zeros()).expect("state");
    let (s1, st, _) = fixed_point_step(&ctx, &s0).expect("step");
    let zero = st.iterations == 1
        && s1.fluid.velocity.max_abs() == 0.0
        && s1.fluid.pressure.iter().all(|p| *p == 0.0)
        && s1.rigid.h == Vec3::zeros()
        && s1.rigid.r == Mat3::identity();
    drop(ctx);

    let cfg = swimmer_config(12, 0.02, 0.4);
    let bound = cfg.tolerances.tol_picard.max(INTERFACE_FLOOR);
    let (_, out) = run(&cfg);
    let iters = out.stats.iter().map(|s| s.iterations).max().unwrap_or(0);
    let last_ratio = out
        .stats
        .iter()
        .map(|s| s.contraction_ratios.last().copied().unwrap_or(0.0))
        .fold(0.0, f64::max);
    let iface = out.stats.iter().map(|s| s.interface_residual).fold(0.0, f64::max);
    let converged = out.stats.iter().all(|s| s.converged);

    let s = &out.final_state;
    let (x, u) = to_physical(s);
    let back_x = to_body_frame(&s.rigid, &x);
    let back_u = to_tilde(&s.rigid, &u);
    let scale = s.ext.xt.nodal.iter().map(|v| v.amax()).fold(1.0, f64::max);
    let rt_x = back_x.iter().zip(&s.ext.xt.nodal).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max) / scale;
    let u_scale = s.fluid.velocity.nodal.iter().map(|v| v.amax()).fold(f64::MIN_POSITIVE, f64::max);
    let rt_u =
        back_u.iter().zip(&s.fluid.velocity.nodal).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max) / u_scale;
    let rt = rt_x.max(rt_u);
    outcome(
        zero && out.reason == Termination::Completed
            && out.stats.len() == 20
            && converged
            && iters <= MAX_PICARD
            && last_ratio < 1.0
            && iface <= bound
            && rt <= ROUND_TRIP_TOL,
        format!(
            "zero fixed point {zero}, {} steps, picard ≤ {iters} (≤ {MAX_PICARD}), final ratio ≤ {last_ratio:.3}, \
             interface {iface:.1e} (≤ {bound:.0e}), round trip {rt:.1e} (≤ {ROUND_TRIP_TOL:.0e})",
            out.stats.len()
        ),
    )
}

fn self_propulsion() -> Outcome {
    let gap_stats = |o: &RunOutcome| {
        let g: Vec<f64> = o.records[1..].iter().map(|r| r.momentum_gap).collect();
        g.iter().sum::<f64>() / g.len() as f64
    };
    let coarse_cfg = swimmer_config(12, 0.02, 2.0);
    let (_, coarse) = run(&coarse_cfg);
    let (_, fine) = run(&swimmer_config(16, 0.01, 2.0));
    let h = coarse.final_state.rigid.h.norm();
    let det = max_of(&coarse.records, |r| r.det_residual).max(max_of(&fine.records, |r| r.det_residual));
    let det_bound = coarse_cfg.tolerances.tol_ext;
    let (g0, g1) = (gap_stats(&coarse), gap_stats(&fine));
    outcome(
        coarse.reason == Termination::Completed
            && fine.reason == Termination::Completed
            && h > 0.0
            && g1 < g0
            && det <= det_bound,
        format!(
            "completed {:?}/{:?}, |h(T)| = {h:.3e}, mean momentum gap {g0:.2e} → {g1:.2e}, \
             det residual {det:.1e} (≤ {det_bound:.0e})",
            coarse.reason, fine.reason
        ),
    )
}

fn blow_up_alternative() -> Outcome {
    // Plain Picard stops contracting once the approach strains the reference
    // domain by about a quarter of the gap; Anderson mixing carries it to d_min.
    let contact_cfg = sim_config(
        "geometry.resolution = 10\nfluid.nu = 0.01\nsolid.rho_s = 10\ninitial.u0 = rigid\n\
         initial.h1 = 1, 0, 0\ntime.dt = 0.02\ntime.t_end = 2\n\
         tolerances.anderson = 10\ntolerances.max_picard = 200\n",
    );
    let (ctx, contact) = run(&contact_cfg);
    let d_min = 2.0 * ctx.mesh.cell_size;
    let dist = contact.records.last().map_or(f64::NAN, |r| r.dist_to_wall);
    drop(ctx);
    let quiet_cfg = sim_config("geometry.resolution = 12\ntime.dt = 0.02\ntime.t_end = 0.2\n");
    let (_, quiet) = run(&quiet_cfg);
    outcome(
        contact.reason == Termination::Contact && dist <= d_min && quiet.reason == Termination::Completed,
        format!(
            "wall approach {:?} at t = {:.2} with dist {dist:.3} (≤ {d_min:.3}), quiescent {:?}",
            contact.reason,
            contact.final_state.t,
            quiet.reason
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("cofactor and Piola identities", cofactor_piola),
        ("rotation group", rotation_group),
        ("constraint projector", projector),
        ("extension map", extension_map),
        ("linear solver", linear_solver),
        ("nonlinear stepper", nonlinear_stepper),
        ("self-propulsion", self_propulsion),
        ("blow-up alternative", blow_up_alternative),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let n = k + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        println!(
            "{} criterion {n} {name}: {} [{:.1} s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
