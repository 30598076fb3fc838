//! Implicit Euler time stepping with a per-step Picard iteration on the
//! transformed system.

use crate::diagnostics::{record, DiagnosticsRecord};
use crate::error::{FsiError, Result};
use crate::extension::{
    advance_extension, candidate_placement, extension_target, ExtensionMap, ExtensionOptions, ExtensionTarget,
};
use crate::kinematics::{inertia, integrate_rotation, DeformationField, InertiaTensor, RigidState};
use crate::linsolve::coupled::{assemble_coupled, CoupledSystem, FluidState, LinearStep};
use crate::linsolve::fe::{integrate, FeSpace, MiniField};
use crate::linsolve::StokesSolver;
use crate::mesh::{Mesh, SolidMesh};
use crate::operators::{build_coefficients, picard_rhs, PicardIterate, PicardRhs, RhsContext};
use crate::{Mat3, Vec3};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct CoupledState {
    pub t: f64,
    pub fluid: FluidState,
    pub rigid: RigidState,
    pub ext: ExtensionMap,
    pub inertia: InertiaTensor,
}

#[derive(Clone, Debug, Default)]
pub struct PicardStats {
    pub iterations: usize,
    pub increments: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
    /// max over interface nodes of |ũ − (h̃' + ω̃∧X* + ∂tX*)|.
    pub interface_residual: f64,
    pub linear_residual: f64,
    pub flux_mismatch: f64,
    pub multiplier: f64,
    pub extension_iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct StepParams {
    pub nu: f64,
    pub dt: f64,
    pub tol_picard: f64,
    pub max_picard: usize,
    pub tol_ext: f64,
    pub max_ext_iter: usize,
    /// Under-relaxation factor in (0, 1].
    pub theta: f64,
    /// Anderson mixing depth; 0 is plain (relaxed) Picard.
    pub anderson: usize,
}

impl StepParams {
    pub fn new(nu: f64, dt: f64) -> Self {
        StepParams { nu, dt, tol_picard: 1e-8, max_picard: 50, tol_ext: 1e-6, max_ext_iter: 20, theta: 1.0, anderson: 0 }
    }
}

/// Everything that stays fixed over a run.
pub struct SimContext {
    pub mesh: Mesh,
    pub solid: SolidMesh,
    pub fe: FeSpace,
    pub deform: DeformationField,
    pub params: StepParams,
    pub extension_solver: StokesSolver,
    pub coupled: CoupledSystem,
}

impl SimContext {
    pub fn new(mesh: Mesh, solid: SolidMesh, deform: DeformationField, params: StepParams) -> Result<Self> {
        let fe = FeSpace::new(&mesh);
        // H2 is checked on the datum itself before every extension solve
        let extension_solver = StokesSolver::new(&mesh, &fe, 1.0)?.with_mismatch_tol(f64::INFINITY);
        let i0 = crate::kinematics::reference_inertia(&solid, deform.rho_s);
        let coupled = assemble_coupled(&mesh, &fe, params.dt, params.nu, deform.mass, i0)?;
        Ok(SimContext { mesh, solid, fe, deform, params, extension_solver, coupled })
    }

    /// State at t = 0 with the given fluid velocity and rigid velocities.
    pub fn initial_state(&self, fluid: FluidState, h_dot: Vec3, omega: Vec3) -> Result<CoupledState> {
        Ok(CoupledState {
            t: 0.0,
            fluid,
            rigid: RigidState { h: Vec3::zeros(), h_dot, r: Mat3::identity(), omega },
            ext: ExtensionMap::identity(&self.mesh, &self.fe),
            inertia: inertia(&self.deform, &self.solid, 0.0)?,
        })
    }

    /// X* and ∂tX* at time t, indexed by fluid node.
    pub fn interface_datum(&self, t: f64) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
        let s = self.deform.sample(&self.solid, t)?;
        let n = self.mesh.nodes.len();
        let mut x = self.mesh.nodes.clone();
        let mut v = vec![Vec3::zeros(); n];
        for i in self.mesh.interface_nodes() {
            let j = self.mesh.solid_node[i].expect("interface node linked to solid");
            x[i] = s.x[j];
            v[i] = s.v[j];
        }
        Ok((x, v))
    }
}

/// Combined discrete H¹ + L² velocity norm plus Euclidean rigid part.
fn combined_norm(mesh: &Mesh, fe: &FeSpace, u: &MiniField, l: &Vec3, w: &Vec3) -> f64 {
    let h1 = integrate(mesh, fe, 0.0, |e, t, b, wq| {
        wq * (u.value(t, e, b).norm_squared() + u.grad(t, e, b).norm_squared())
    });
    h1.sqrt() + l.norm() + w.norm()
}

pub fn interface_residual(mesh: &Mesh, u: &MiniField, l: &Vec3, w: &Vec3, x_star: &[Vec3], v_star: &[Vec3]) -> f64 {
    mesh.interface_nodes()
        .map(|i| (u.nodal[i] - (l + w.cross(&x_star[i]) + v_star[i])).amax())
        .fold(0.0, f64::max)
}

struct Iterate {
    fluid: FluidState,
    l: Vec3,
    w: Vec3,
}

impl Iterate {
    fn from_step(lin: &LinearStep) -> Self {
        Iterate { fluid: lin.fluid.clone(), l: lin.h_tilde_dot, w: lin.omega_tilde }
    }

    /// Velocity, bubbles and rigid velocities first, pressure last.
    fn pack(&self) -> DVector<f64> {
        let u = &self.fluid.velocity;
        let it = u.nodal.iter().chain(&u.bubble).chain([&self.l, &self.w]).flat_map(|v| v.iter().copied());
        DVector::from_iterator(self.len(), it.chain(self.fluid.pressure.iter().copied()))
    }

    fn len(&self) -> usize {
        3 * (self.fluid.velocity.nodal.len() + self.fluid.velocity.bubble.len() + 2) + self.fluid.pressure.len()
    }

    fn unpack(&mut self, x: &DVector<f64>) {
        let v = |k: usize| Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
        let n = self.fluid.velocity.nodal.len();
        let nb = self.fluid.velocity.bubble.len();
        for i in 0..n {
            self.fluid.velocity.nodal[i] = v(i);
        }
        for e in 0..nb {
            self.fluid.velocity.bubble[e] = v(n + e);
        }
        self.l = v(n + nb);
        self.w = v(n + nb + 1);
        let off = 3 * (n + nb + 2);
        for (i, p) in self.fluid.pressure.iter_mut().enumerate() {
            *p = x[off + i];
        }
    }
}

/// Anderson mixing over the last `depth` Picard pairs. The coefficients are
/// fitted on the leading `fit` entries (velocities) and applied to all.
struct Anderson {
    depth: usize,
    fit: usize,
    x: Vec<DVector<f64>>,
    f: Vec<DVector<f64>>,
}

impl Anderson {
    fn new(depth: usize, fit: usize) -> Self {
        Anderson { depth, fit, x: Vec::new(), f: Vec::new() }
    }

    /// Next iterate from the current one `x` and its image `g`.
    fn update(&mut self, x: DVector<f64>, g: &DVector<f64>, theta: f64) -> DVector<f64> {
        let f = g - &x;
        self.x.push(x);
        self.f.push(f);
        if self.x.len() > self.depth + 1 {
            self.x.remove(0);
            self.f.remove(0);
        }
        let k = self.x.len() - 1;
        let (xk, fk) = (&self.x[k], &self.f[k]);
        let mut next = xk + fk * theta;
        if k == 0 {
            return next;
        }
        let df = DMatrix::from_fn(self.fit, k, |r, c| self.f[c + 1][r] - self.f[c][r]);
        let rhs = df.tr_mul(&fk.rows(0, self.fit));
        let gram = df.tr_mul(&df);
        let eps = 1e-12 * gram.diagonal().max();
        let Ok(gamma) = gram.svd(true, true).solve(&rhs, eps) else {
            return next;
        };
        for c in 0..k {
            let dx = &self.x[c + 1] - &self.x[c];
            let dfc = &self.f[c + 1] - &self.f[c];
            next -= (dx + dfc * theta) * gamma[c];
        }
        next
    }
}

fn evaluate_map(
    ctx: &SimContext,
    state: &CoupledState,
    it: &Iterate,
    target: &mut ExtensionTarget,
    guess: Option<&MiniField>,
    rhs_ctx: &RhsContext,
) -> Result<(ExtensionMap, PicardRhs, LinearStep)> {
    let p = &ctx.params;
    let (rot, center) = candidate_placement(&state.rigid, &it.l, &it.w, p.dt);
    target.rotation = rot;
    target.center = center;
    let opts = ExtensionOptions { tol: p.tol_ext, max_iter: p.max_ext_iter };
    let ext = advance_extension(&state.ext, &ctx.mesh, &ctx.fe, &ctx.extension_solver, target, p.dt, opts, guess)?;
    let coeffs = build_coefficients(&ext, &ctx.mesh, &ctx.fe, &it.l, &it.w);
    let pit = PicardIterate {
        velocity: &it.fluid.velocity,
        pressure: &it.fluid.pressure,
        h_tilde_dot: it.l,
        omega_tilde: it.w,
    };
    let rhs = picard_rhs(&pit, &coeffs, &ext, &ctx.mesh, &ctx.fe, rhs_ctx);
    let lin = ctx.coupled.solve_linear_step(
        &ctx.mesh,
        &ctx.fe,
        &state.fluid,
        &state.rigid.h_tilde_dot(),
        &state.rigid.omega_tilde(),
        &rhs,
    )?;
    Ok((ext, rhs, lin))
}

/// Advances `state` by one step; the result carries the wall reaction of the accepted solve.
pub fn fixed_point_step(ctx: &SimContext, state: &CoupledState) -> Result<(CoupledState, PicardStats, LinearStep)> {
    let p = &ctx.params;
    let t = state.t + p.dt;
    let wrap = |e: FsiError| match e {
        FsiError::StepFailed { .. } => e,
        other => FsiError::StepFailed { t, source: Box::new(other) },
    };
    let (x_star, v_star) = ctx.interface_datum(t).map_err(wrap)?;
    let inert = inertia(&ctx.deform, &ctx.solid, t).map_err(wrap)?;
    let mut it = Iterate {
        fluid: state.fluid.clone(),
        l: state.rigid.h_tilde_dot(),
        w: state.rigid.omega_tilde(),
    };
    let mut target = extension_target(&ctx.mesh, &ctx.solid, &ctx.deform, &state.rigid, &it.l, &it.w, t, p.dt)
        .map_err(wrap)?;
    let rhs_ctx = RhsContext {
        nu: p.nu,
        dt: p.dt,
        mass: ctx.deform.mass,
        inertia: inert,
        omega_prev: state.rigid.omega_tilde(),
        x_star: &x_star,
        v_star: &v_star,
    };

    let mut stats = PicardStats::default();
    let mut growth = 0;
    let mut guess: Option<MiniField> = None;
    let mut accepted: Option<(ExtensionMap, LinearStep)> = None;
    let mut mixer = Anderson::new(p.anderson, it.len() - ctx.mesh.nodes.len());
    for k in 0..p.max_picard.max(1) {
        let (ext, rhs, lin) = evaluate_map(ctx, state, &it, &mut target, guess.as_ref(), &rhs_ctx).map_err(wrap)?;
        stats.extension_iterations += ext.stats.iterations;
        let du = lin.fluid.velocity.lincomb(1.0, &it.fluid.velocity, -1.0);
        let incr = combined_norm(&ctx.mesh, &ctx.fe, &du, &(lin.h_tilde_dot - it.l), &(lin.omega_tilde - it.w));
        let scale = combined_norm(&ctx.mesh, &ctx.fe, &lin.fluid.velocity, &lin.h_tilde_dot, &lin.omega_tilde);
        if let Some(&last) = stats.increments.last() {
            if last > 0.0 {
                stats.contraction_ratios.push(incr / last);
            }
            growth = if incr > last { growth + 1 } else { 0 };
        }
        stats.increments.push(incr);
        stats.iterations = k + 1;
        stats.flux_mismatch = rhs.flux_mismatch;
        guess = Some(ext.dxt_dt.clone());

        let theta = p.theta.clamp(f64::MIN_POSITIVE, 1.0);
        let relax = |old: &MiniField, new: &MiniField| old.lincomb(1.0 - theta, new, theta);
        if !(incr.is_finite() && lin.fluid.velocity.is_finite()) || growth >= 5 {
            return Err(wrap(FsiError::PicardDiverged { iterations: k + 1, increment: incr }));
        }
        let converged = incr <= p.tol_picard * scale + 1e-14;
        if converged || (theta == 1.0 && p.anderson == 0) {
            it = Iterate::from_step(&lin);
        } else if p.anderson > 0 {
            let image = Iterate::from_step(&lin);
            let next = mixer.update(it.pack(), &image.pack(), theta);
            it.unpack(&next);
        } else {
            it.fluid.velocity = relax(&it.fluid.velocity, &lin.fluid.velocity);
            it.fluid.pressure = lin.fluid.pressure.clone();
            it.l = it.l * (1.0 - theta) + lin.h_tilde_dot * theta;
            it.w = it.w * (1.0 - theta) + lin.omega_tilde * theta;
        }
        if converged {
            stats.converged = true;
            accepted = Some((ext, lin));
            break;
        }
    }
    let Some((_, lin)) = accepted else {
        let incr = stats.increments.last().copied().unwrap_or(f64::NAN);
        return Err(wrap(FsiError::PicardDiverged { iterations: stats.iterations, increment: incr }));
    };

    // Geometry consistent with the converged rigid velocities.
    let (rot, center) = candidate_placement(&state.rigid, &it.l, &it.w, p.dt);
    target.rotation = rot;
    target.center = center;
    let opts = ExtensionOptions { tol: p.tol_ext, max_iter: p.max_ext_iter };
    let ext = advance_extension(&state.ext, &ctx.mesh, &ctx.fe, &ctx.extension_solver, &target, p.dt, opts, guess.as_ref())
        .map_err(wrap)?;

    stats.interface_residual = interface_residual(&ctx.mesh, &it.fluid.velocity, &it.l, &it.w, &x_star, &v_star);
    stats.linear_residual = lin.residual;
    stats.multiplier = lin.multiplier;
    let r = integrate_rotation(&state.rigid.r, &it.w, p.dt);
    let h = state.rigid.h + r * it.l * p.dt;
    let next = CoupledState {
        t,
        fluid: it.fluid,
        rigid: RigidState::from_tilde(h, r, it.l, it.w),
        ext,
        inertia: inert,
    };
    Ok((next, stats, lin))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Contact,
    PicardDiverged,
    ExtensionDiverged,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub n_steps: usize,
    pub d_min: f64,
    pub snapshot_every: usize,
    pub snapshot_dir: Option<std::path::PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub stats: Vec<PicardStats>,
    pub reason: Termination,
    pub final_state: CoupledState,
    /// The error that ended the run for the two divergence reasons.
    pub failure: Option<String>,
}

/// Steps from `initial` until `n_steps` are accepted, the solid comes within
/// `d_min` of the wall, or the nonlinear iteration breaks down. `observer`
/// sees every accepted record.
pub fn run_simulation(
    ctx: &SimContext,
    initial: CoupledState,
    opts: &RunOptions,
    mut observer: impl FnMut(&DiagnosticsRecord),
) -> Result<RunOutcome> {
    let snapshot = |step: usize, s: &CoupledState| -> Result<()> {
        match &opts.snapshot_dir {
            Some(dir) if opts.snapshot_every > 0 && step % opts.snapshot_every == 0 => {
                crate::vtk::save_snapshot(dir, step, &ctx.mesh, s)
            }
            _ => Ok(()),
        }
    };
    let first = record(ctx, &initial, None)?;
    observer(&first);
    snapshot(0, &initial)?;
    let mut out = RunOutcome {
        reason: if first.dist_to_wall < opts.d_min { Termination::Contact } else { Termination::Completed },
        records: vec![first],
        stats: Vec::new(),
        final_state: initial,
        failure: None,
    };
    if out.reason == Termination::Contact {
        return Ok(out);
    }
    for n in 1..=opts.n_steps {
        let (next, stats, lin) = match fixed_point_step(ctx, &out.final_state) {
            Ok(v) => v,
            Err(e) => {
                let reason = match e.root() {
                    FsiError::PicardDiverged { .. } => Termination::PicardDiverged,
                    FsiError::ExtensionDiverged { .. } => Termination::ExtensionDiverged,
                    _ => return Err(e),
                };
                out.reason = reason;
                out.failure = Some(e.to_string());
                return Ok(out);
            }
        };
        let rec = record(ctx, &next, Some((&out.final_state, &stats, &lin)))?;
        observer(&rec);
        snapshot(n, &next)?;
        let contact = rec.dist_to_wall < opts.d_min;
        out.records.push(rec);
        out.stats.push(stats);
        out.final_state = next;
        if contact {
            out.reason = Termination::Contact;
            return Ok(out);
        }
    }
    Ok(out)
}

/// Physical-frame node positions x = h + R X̃(y) and velocities u = R ũ.
pub fn to_physical(state: &CoupledState) -> (Vec<Vec3>, Vec<Vec3>) {
    let r = &state.rigid.r;
    let x = state.ext.xt.nodal.iter().map(|xt| state.rigid.h + r * xt).collect();
    let u = state.fluid.velocity.nodal.iter().map(|v| r * v).collect();
    (x, u)
}

/// Pulls physical nodal velocities back to the body frame: ũ = Rᵀ u.
pub fn to_tilde(rigid: &RigidState, u: &[Vec3]) -> Vec<Vec3> {
    let rt = rigid.r.transpose();
    u.iter().map(|v| rt * v).collect()
}

/// Inverse placement of physical points, Rᵀ(x − h), to compare against X̃ at nodes.
pub fn to_body_frame(rigid: &RigidState, x: &[Vec3]) -> Vec<Vec3> {
    let rt = rigid.r.transpose();
    x.iter().map(|p| rt * (p - rigid.h)).collect()
}
