//! Per-step invariants: energy balance, momentum bookkeeping, constraint and
//! geometry residuals, wall distance. Written as `diagnostics.csv`.

use std::io::Write;

use crate::error::Result;
use crate::extension::piola_residual;
use crate::kinematics::constraint_residuals;
use crate::linsolve::coupled::LinearStep;
use rayon::prelude::*;

use crate::linsolve::fe::{basis, facet_points, qp_bases, qp_weight};
use crate::mesh::quadrature::TRI_WEIGHT;
use crate::mesh::{solid_wall_distance, BoundaryTag, NodeKind};
use crate::operators::transformed_stress;
use crate::stepper::{CoupledState, PicardStats, SimContext};
use crate::Vec3;

/// Column order of `diagnostics.csv`.
pub const CSV_COLUMNS: [&str; 27] = [
    "t",
    "h_x",
    "h_y",
    "h_z",
    "h_dot_x",
    "h_dot_y",
    "h_dot_z",
    "omega_x",
    "omega_y",
    "omega_z",
    "kinetic_energy",
    "dissipation",
    "energy_residual",
    "deformation_power",
    "h2_residual",
    "h3_residual",
    "h4_residual",
    "det_residual",
    "piola_residual",
    "interface_bc_residual",
    "dist_to_wall",
    "picard_iterations",
    "linear_residual",
    "momentum_x",
    "momentum_y",
    "momentum_z",
    "momentum_gap",
];

/// One row of diagnostics. Vectors are in the physical frame.
///
/// `energy_residual` is (Eⁿ − Eⁿ⁻¹)/dt + dissipation + ½ I*' ω̃·ω̃ − deformation_power,
/// which is ≤ 0 up to O(dt) for implicit Euler (its numerical dissipation
/// makes it negative when nothing drives the flow).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub h: Vec3,
    pub h_dot: Vec3,
    pub omega: Vec3,
    pub kinetic_energy: f64,
    /// 2ν‖D(u)‖² on the fluid domain.
    pub dissipation: f64,
    pub energy_residual: f64,
    pub deformation_power: f64,
    pub h2_residual: f64,
    pub h3_residual: f64,
    pub h4_residual: f64,
    pub det_residual: f64,
    pub piola_residual: f64,
    pub interface_bc_residual: f64,
    pub dist_to_wall: f64,
    pub picard_iterations: usize,
    pub linear_residual: f64,
    /// Total linear momentum of fluid and solid.
    pub momentum: Vec3,
    /// |dP/dt − wall force| with the wall force taken from the reaction of the solve.
    pub momentum_gap: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    pub dissipation: f64,
    pub deformation_power: f64,
    pub inertia_power: f64,
    /// Zero when no previous state is given.
    pub residual: f64,
}

/// Sums `f(e, q, basis, weight)` over all quadrature points, element-ordered.
fn sum_qp<T, F>(ctx: &SimContext, zero: T, f: F) -> T
where
    T: Send + Sync + Copy + std::ops::Add<Output = T>,
    F: Fn(usize, usize, &crate::linsolve::fe::Basis, f64) -> T + Sync,
{
    let parts: Vec<T> = (0..ctx.mesh.tets.len())
        .into_par_iter()
        .map(|e| {
            let w = qp_weight(&ctx.fe, e);
            qp_bases(&ctx.fe, e).iter().enumerate().fold(zero, |acc, (q, b)| acc + f(e, q, b, w))
        })
        .collect();
    parts.into_iter().fold(zero, |a, b| a + b)
}

/// ½‖ũ‖² (det-weighted) + ½M|h̃'|² + ½I*ω̃·ω̃ and 2ν‖D‖² with the transformed gradient.
fn energy_parts(ctx: &SimContext, s: &CoupledState) -> (f64, f64) {
    let nu = ctx.params.nu;
    let u = &s.fluid.velocity;
    let v = sum_qp(ctx, Vec3::zeros(), |e, q, b, w| {
        let t = &ctx.mesh.tets[e];
        let g = &s.ext.qp[e][q];
        let gb = u.grad(t, e, b) * g.grad_y;
        let d = (gb + gb.transpose()) * 0.5;
        Vec3::new(0.5 * w * g.det * u.value(t, e, b).norm_squared(), 2.0 * nu * w * g.det * d.norm_squared(), 0.0)
    });
    let l = s.rigid.h_tilde_dot();
    let om = s.rigid.omega_tilde();
    (v[0] + 0.5 * ctx.deform.mass * l.norm_squared() + 0.5 * om.dot(&(s.inertia.i_star * om)), v[1])
}

/// ∫_∂S ∂tX* · σ̃ com∇X̃ n dΓ by facet quadrature.
pub fn deformation_power(ctx: &SimContext, s: &CoupledState) -> Result<f64> {
    let (_, v_star) = ctx.interface_datum(s.t)?;
    let mesh = &ctx.mesh;
    let mut p = 0.0;
    for f in mesh.facets_with(BoundaryTag::SolidInterface) {
        let e = f.owner;
        let t = &mesh.tets[e];
        for lam in facet_points(mesh, f) {
            let b = basis(&ctx.fe.grad[e], &lam);
            let geo = s.ext.geometry_at(mesh, &ctx.fe, e, &lam);
            let gv = s.fluid.velocity.grad(t, e, &b);
            let q: f64 = (0..4).map(|a| s.fluid.pressure[t[a]] * lam[a]).sum();
            let v: Vec3 = (0..4).map(|a| v_star[t[a]] * lam[a]).sum();
            let st = transformed_stress(&gv, &geo.grad_y, q, ctx.params.nu) * geo.cof;
            p += f.area * TRI_WEIGHT * v.dot(&(st * f.normal));
        }
    }
    Ok(p)
}

/// Power of the interface reactions of `lin` on the non-rigid part of the
/// interface velocity. This is the quantity the discrete energy balance sees.
pub fn reaction_power(ctx: &SimContext, s: &CoupledState, lin: &LinearStep) -> Result<f64> {
    let (x_star, v_star) = ctx.interface_datum(s.t)?;
    let w = lin.omega_tilde;
    Ok(ctx
        .mesh
        .interface_nodes()
        .map(|i| (w.cross(&(x_star[i] - ctx.mesh.nodes[i])) + v_star[i]).dot(&lin.reaction[i]))
        .sum())
}

/// Energy balance of `next`. With the accepted linear step the deformation
/// power comes from its interface reactions, otherwise from facet quadrature.
pub fn energy_report(
    ctx: &SimContext,
    prev: Option<&CoupledState>,
    next: &CoupledState,
    lin: Option<&LinearStep>,
) -> Result<EnergyReport> {
    let (energy, dissipation) = energy_parts(ctx, next);
    let om = next.rigid.omega_tilde();
    let inertia_power = 0.5 * om.dot(&(next.inertia.i_star_dot * om));
    let deformation_power = match lin {
        Some(lin) => reaction_power(ctx, next, lin)?,
        None => deformation_power(ctx, next)?,
    };
    let residual = match prev {
        Some(p) => {
            let (e0, _) = energy_parts(ctx, p);
            (energy - e0) / (next.t - p.t) + dissipation + inertia_power - deformation_power
        }
        None => 0.0,
    };
    Ok(EnergyReport { energy, dissipation, deformation_power, inertia_power, residual })
}

/// Total physical momentum R(∫ũ det + M h̃').
pub fn total_momentum(ctx: &SimContext, s: &CoupledState) -> Vec3 {
    let u = &s.fluid.velocity;
    let fluid = sum_qp(ctx, Vec3::zeros(), |e, q, b, w| {
        u.value(&ctx.mesh.tets[e], e, b) * (w * s.ext.qp[e][q].det)
    });
    s.rigid.r * (fluid + s.rigid.h_tilde_dot() * ctx.deform.mass)
}

/// Wall force on the fluid, physical frame, from the reaction of the solve.
pub fn wall_force(ctx: &SimContext, s: &CoupledState, lin: &LinearStep) -> Vec3 {
    let sum: Vec3 = (0..ctx.mesh.nodes.len())
        .filter(|&i| ctx.mesh.node_kind[i] == NodeKind::Wall)
        .map(|i| lin.reaction[i])
        .sum();
    s.rigid.r * sum
}

/// (P, dP/dt − wall force) for consecutive states.
pub fn momentum_report(ctx: &SimContext, prev: &CoupledState, next: &CoupledState, lin: &LinearStep) -> (Vec3, f64) {
    let p1 = total_momentum(ctx, next);
    let p0 = total_momentum(ctx, prev);
    let gap = (p1 - p0) / (next.t - prev.t) - wall_force(ctx, next, lin);
    (p1, gap.norm())
}

/// Builds the record of `next`; `step` carries the previous state, the Picard
/// statistics and the accepted linear solve (absent for the initial record).
pub fn record(
    ctx: &SimContext,
    next: &CoupledState,
    step: Option<(&CoupledState, &PicardStats, &LinearStep)>,
) -> Result<DiagnosticsRecord> {
    let energy = energy_report(ctx, step.map(|s| s.0), next, step.map(|s| s.2))?;
    let (h2, h3, h4) = constraint_residuals(&ctx.deform, &ctx.solid, next.t)?.scaled(ctx.deform.rho_s);
    let dist = solid_wall_distance(&ctx.mesh, &ctx.solid, &next.rigid, &ctx.deform, next.t)?;
    let (momentum, gap) = match step {
        Some((prev, _, lin)) => momentum_report(ctx, prev, next, lin),
        None => (total_momentum(ctx, next), 0.0),
    };
    let iface = match step {
        Some((_, st, _)) => st.interface_residual,
        None => {
            let (x, v) = ctx.interface_datum(next.t)?;
            crate::stepper::interface_residual(
                &ctx.mesh,
                &next.fluid.velocity,
                &next.rigid.h_tilde_dot(),
                &next.rigid.omega_tilde(),
                &x,
                &v,
            )
        }
    };
    Ok(DiagnosticsRecord {
        t: next.t,
        h: next.rigid.h,
        h_dot: next.rigid.h_dot,
        omega: next.rigid.omega,
        kinetic_energy: energy.energy,
        dissipation: energy.dissipation,
        energy_residual: energy.residual,
        deformation_power: energy.deformation_power,
        h2_residual: h2,
        h3_residual: h3,
        h4_residual: h4,
        det_residual: next.ext.stats.det_residual,
        piola_residual: piola_residual(&next.ext, &ctx.mesh, &ctx.fe),
        interface_bc_residual: iface,
        dist_to_wall: dist,
        picard_iterations: step.map_or(0, |s| s.1.iterations),
        linear_residual: step.map_or(0.0, |s| s.2.residual),
        momentum,
        momentum_gap: gap,
    })
}

/// C `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (16 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl DiagnosticsRecord {
    pub fn csv_fields(&self) -> Vec<String> {
        let mut v: Vec<f64> = vec![self.t];
        v.extend(self.h.iter());
        v.extend(self.h_dot.iter());
        v.extend(self.omega.iter());
        v.extend([
            self.kinetic_energy,
            self.dissipation,
            self.energy_residual,
            self.deformation_power,
            self.h2_residual,
            self.h3_residual,
            self.h4_residual,
            self.det_residual,
            self.piola_residual,
            self.interface_bc_residual,
            self.dist_to_wall,
        ]);
        let mut out: Vec<String> = v.into_iter().map(fmt_g17).collect();
        out.push(self.picard_iterations.to_string());
        out.push(fmt_g17(self.linear_residual));
        out.extend(self.momentum.iter().map(|x| fmt_g17(*x)));
        out.push(fmt_g17(self.momentum_gap));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.csv_fields().iter().all(|f| !f.contains("nan") && !f.contains("inf"))
    }
}

pub fn write_csv<W: Write>(mut w: W, records: &[DiagnosticsRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for r in records {
        writeln!(w, "{}", r.csv_fields().join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        // reference strings from C printf("%.17g")
        let cases = [
            (0.1, "0.10000000000000001"),
            (1e-5, "1.0000000000000001e-05"),
            (1.0, "1"),
            (123456789012345678.0, "1.2345678901234568e+17"),
            (1e-4, "0.0001"),
            (-2.5, "-2.5"),
            (1e300, "1.0000000000000001e+300"),
            (3e-310, "2.9999999999999908e-310"),
            (1e16, "10000000000000000"),
            (1e17, "1e+17"),
            (12345.678, "12345.678"),
            (5e-5, "5.0000000000000002e-05"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g17(x), s, "{x:e}");
        }
    }

    #[test]
    fn header_matches_row_width() {
        let r = DiagnosticsRecord::default();
        assert_eq!(r.csv_fields().len(), CSV_COLUMNS.len());
    }
}
