//! Quick property suite behind `fsisim verify`, all at resolution 12.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;
use crate::extension::{cofactor, piola_residual, ExtensionMap};
use crate::kinematics::{
    constraint_residuals, integrate_rotation, project_deformation, project_velocity, DeformationFamily,
    DeformationField,
};
use crate::linsolve::coupled::{assemble_coupled, FluidState};
use crate::linsolve::fe::{FeSpace, MiniField};
use crate::linsolve::stokes::solve_steady_stokes;
use crate::mesh::{generate_ball_in_box, Mesh, SolidMesh};
use crate::stepper::{fixed_point_step, SimContext, StepParams};
use crate::{Mat3, Vec3};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String), String>) -> CheckResult {
    let t0 = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult { name, passed, detail: format!("{detail} ({:.1} s)", t0.elapsed().as_secs_f64()) }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

fn travelling_wave(solid: &SolidMesh, amplitude: f64) -> Result<DeformationField, String> {
    let r = solid.nodes.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let fam = DeformationFamily::TravellingWave {
        amplitude,
        omega: 2.0 * std::f64::consts::PI,
        wavenumber: std::f64::consts::PI / r,
        radius: r,
        ramp: None,
    };
    DeformationField::new(fam, solid, 1.0).map_err(err)
}

pub fn run_all(quiet: bool) -> Vec<CheckResult> {
    let progress = |r: &CheckResult| {
        if !quiet {
            eprintln!("{} {}", if r.passed { "ok  " } else { "FAIL" }, r.name);
        }
    };
    let mut out = Vec::new();
    let mut push = |r: CheckResult| {
        progress(&r);
        out.push(r);
    };

    push(check("adjugate identity, 1000 random matrices", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let m = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let d = (m.transpose() * cofactor(&m) - Mat3::identity() * m.determinant()).abs().max();
            worst = worst.max(d);
        }
        Ok((worst <= 1e-12, format!("max defect {worst:.1e}")))
    }));

    push(check("rotation stays orthonormal over 1e5 steps", || {
        let mut r = Mat3::identity();
        for k in 0..100_000 {
            let w = Vec3::new((k as f64 * 1e-3).sin(), 0.5, (k as f64 * 7e-4).cos());
            r = integrate_rotation(&r, &w, 1e-3);
        }
        let d = (r.transpose() * r - Mat3::identity()).abs().max();
        Ok((d <= 1e-12, format!("drift {d:.1e}")))
    }));

    let mesh_pair = generate_ball_in_box(1.0, 0.3, 12);
    let Ok((mesh, solid)) = mesh_pair else {
        push(CheckResult { name: "mesh generation", passed: false, detail: format!("{:?}", mesh_pair.err()) });
        return out;
    };
    let fe = FeSpace::new(&mesh);

    push(check("projector is idempotent and removes rigid fields", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec3> = solid.nodes.clone();
        let v: Vec<Vec3> = x.iter().map(|_| rand_vec(&mut rng, 1.0)).collect();
        let p1 = project_velocity(&solid, 1.0, &x, &v, 0.0).map_err(err)?;
        let p2 = project_velocity(&solid, 1.0, &x, &p1, 0.0).map_err(err)?;
        let idem = p1.iter().zip(&p2).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        let (l, w) = (rand_vec(&mut rng, 1.0), rand_vec(&mut rng, 1.0));
        let rigid: Vec<Vec3> = x.iter().map(|y| l + w.cross(y)).collect();
        let pr = project_velocity(&solid, 1.0, &x, &rigid, 0.0).map_err(err)?;
        let ann = pr.iter().map(|a| a.amax()).fold(0.0, f64::max);
        Ok((idem <= 1e-12 && ann <= 1e-12, format!("idempotence {idem:.1e}, rigid remainder {ann:.1e}")))
    }));

    push(check("projected travelling wave satisfies H2-H4", || {
        let raw = travelling_wave(&solid, 0.01)?;
        let p = project_deformation(&raw, &solid, 1.0, 0.01).map_err(err)?;
        let mut worst: f64 = 0.0;
        for k in 0..=20 {
            let (a, b, c) = constraint_residuals(&p, &solid, k as f64 * 0.05).map_err(err)?.scaled(1.0);
            worst = worst.max(a).max(b).max(c);
        }
        Ok((worst <= 1e-10, format!("max scaled residual {worst:.1e}")))
    }));

    push(check("identity extension is exact", || {
        let ext = ExtensionMap::identity(&mesh, &fe);
        let d = ext.stats.det_residual;
        let p = piola_residual(&ext, &mesh, &fe);
        Ok((d <= 1e-12 && p <= 1e-12, format!("det residual {d:.1e}, piola {p:.1e}")))
    }));

    push(check("affine map has zero Piola residual", || {
        let a = Mat3::new(1.1, 0.2, 0.0, -0.1, 0.9, 0.3, 0.05, 0.0, 1.0);
        let xt = MiniField::from_nodal(&mesh, mesh.nodes.iter().map(|y| a * y).collect());
        let ext = ExtensionMap::from_fields(&mesh, &fe, xt, MiniField::zeros(&mesh));
        let p = piola_residual(&ext, &mesh, &fe);
        Ok((p <= 1e-12, format!("piola {p:.1e}")))
    }));

    push(check("steady Stokes with zero data is zero", || {
        let sol = solve_steady_stokes(&mesh, &fe, 1.0, &vec![Vec3::zeros(); mesh.nodes.len()], None, None)
            .map_err(err)?;
        let m = sol.velocity.max_abs().max(sol.pressure.iter().fold(0.0, |a, p| a.max(p.abs())));
        Ok((m == 0.0, format!("max |u|,|p| = {m:.1e}")))
    }));

    push(check("coupled matrix and mobility are symmetric", || {
        let sys = assemble_coupled(&mesh, &fe, 0.01, 0.1, 1.0, Mat3::identity() * 0.05).map_err(err)?;
        let k = sys.system.full_matrix();
        let asym = k.asymmetry() / k.max_abs();
        let m = sys.mobility(&mesh).map_err(err)?;
        let scale = (0..6).map(|i| m[i][i].abs()).fold(0.0, f64::max);
        let mut ms: f64 = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                ms = ms.max((m[i][j] - m[j][i]).abs() / scale);
            }
        }
        Ok((asym <= 1e-12 && ms <= 1e-8, format!("matrix {asym:.1e}, mobility {ms:.1e}")))
    }));

    push(check("zero state is a fixed point", || zero_fixed_point(&mesh, &solid)));

    push(check("configuration echo re-parses identically", || {
        let c = SimConfig::parse(
            "fluid.nu = 0.1\ndeformation.family = travelling_wave\ndeformation.amplitude = 0.01\n\
             time.dt = 0.005\ntime.t_end = 2\ninitial.h1 = 0.1, 0, 3e-7\n",
        )
        .map_err(err)?;
        let again = SimConfig::parse(&c.to_text()).map_err(err)?;
        Ok((again == c, "round trip".into()))
    }));
    out
}

fn zero_fixed_point(mesh: &Mesh, solid: &SolidMesh) -> Result<(bool, String), String> {
    let deform = DeformationField::identity(solid, 1.0).map_err(err)?;
    let ctx = SimContext::new(mesh.clone(), solid.clone(), deform, StepParams::new(0.1, 0.01)).map_err(err)?;
    let s0 = ctx.initial_state(FluidState::rest(mesh), Vec3::zeros(), Vec3::zeros()).map_err(err)?;
    let (s1, stats, _) = fixed_point_step(&ctx, &s0).map_err(err)?;
    let zero = s1.fluid.velocity.max_abs() == 0.0 && s1.rigid.h == Vec3::zeros();
    Ok((zero && stats.iterations == 1, format!("{} iteration(s)", stats.iterations)))
}
