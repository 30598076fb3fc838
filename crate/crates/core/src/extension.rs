//! Volume-preserving extension X̃ of the solid motion into the reference fluid
//! domain, advanced one time step at a time.
//!
//! Each step solves for V = (X̃ⁿ − X̃ⁿ⁻¹)/dt in the MINI space. With A = ∇X̃ⁿ⁻¹
//! and E = dt ∇V the exact expansion
//!   det(A + E) − 1 = (det A − 1) + cof A : E + A : cof E + det E
//! turns det ∇X̃ⁿ = 1 into div V = f(V) with
//!   f = [(I − cof A) : E − A : cof E − det E + 1 − det A] / dt,
//! which is iterated to a fixed point with a Stokes-type solve per iterate.

use rayon::prelude::*;

use crate::error::{FsiError, Result};
use crate::kinematics::{integrate_rotation, residuals_of, DeformationField, RigidState};
use crate::linsolve::fe::{basis, facet_points, qp_bases, qp_weight, FeSpace, MiniField};
use crate::mesh::quadrature::TRI_WEIGHT;
use crate::linsolve::StokesSolver;
use crate::mesh::{Mesh, NodeKind, SolidMesh};
use crate::{Mat3, Vec3};

/// Matrix of signed 2×2 minors: m · cof(m)ᵀ = det(m) I.
pub fn cofactor(m: &Mat3) -> Mat3 {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
    };
    Mat3::from_fn(c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpGeometry {
    /// ∇X̃
    pub grad: Mat3,
    /// com ∇X̃
    pub cof: Mat3,
    /// ∇Ỹ(X̃) = (com ∇X̃)ᵀ / det ∇X̃
    pub grad_y: Mat3,
    pub det: f64,
}

impl QpGeometry {
    pub fn from_grad(grad: Mat3) -> Self {
        let cof = cofactor(&grad);
        let det = grad.determinant();
        QpGeometry { grad, cof, grad_y: cof.transpose() / det, det }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtensionStats {
    pub iterations: usize,
    /// dt ‖Vᵏ⁺¹ − Vᵏ‖∞ per iterate.
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Weak residual max_j |∫ φⱼ (det ∇X̃ − 1)| / ∫ φⱼ.
    pub det_residual: f64,
    /// max |det ∇X̃ − 1| over quadrature points.
    pub max_det_deviation: f64,
    /// Divergence-constraint multiplier (uniform shift absorbing the quadrature mismatch).
    pub multiplier: f64,
}

#[derive(Clone, Debug)]
pub struct ExtensionMap {
    pub xt: MiniField,
    pub dxt_dt: MiniField,
    pub qp: Vec<[QpGeometry; 4]>,
    pub stats: ExtensionStats,
}

pub fn qp_geometry(mesh: &Mesh, fe: &FeSpace, xt: &MiniField) -> Vec<[QpGeometry; 4]> {
    (0..mesh.tets.len())
        .into_par_iter()
        .map(|e| {
            let b = qp_bases(fe, e);
            std::array::from_fn(|q| QpGeometry::from_grad(xt.grad(&mesh.tets[e], e, &b[q])))
        })
        .collect()
}

/// Weak and pointwise det deviations of a tabulated geometry.
pub fn det_residuals(mesh: &Mesh, fe: &FeSpace, qp: &[[QpGeometry; 4]]) -> (f64, f64) {
    let mut r = vec![0.0; mesh.nodes.len()];
    let mut pointwise = 0.0f64;
    for (e, t) in mesh.tets.iter().enumerate() {
        let w = qp_weight(fe, e);
        for (q, b) in qp_bases(fe, e).iter().enumerate() {
            let d = qp[e][q].det - 1.0;
            pointwise = pointwise.max(d.abs());
            for a in 0..4 {
                r[t[a]] += w * b.phi[a] * d;
            }
        }
    }
    let weak = r.iter().zip(&fe.lumped).map(|(x, m)| x.abs() / m).fold(0.0, f64::max);
    (weak, pointwise)
}

impl ExtensionMap {
    pub fn identity(mesh: &Mesh, fe: &FeSpace) -> Self {
        Self::from_fields(mesh, fe, MiniField::from_nodal(mesh, mesh.nodes.clone()), MiniField::zeros(mesh))
    }

    pub fn from_fields(mesh: &Mesh, fe: &FeSpace, xt: MiniField, dxt_dt: MiniField) -> Self {
        let qp = qp_geometry(mesh, fe, &xt);
        let (det_residual, max_det_deviation) = det_residuals(mesh, fe, &qp);
        let stats = ExtensionStats { det_residual, max_det_deviation, ..Default::default() };
        ExtensionMap { xt, dxt_dt, qp, stats }
    }

    /// Geometry at an arbitrary barycentric point of element `e`.
    pub fn geometry_at(&self, mesh: &Mesh, fe: &FeSpace, e: usize, lam: &[f64; 4]) -> QpGeometry {
        QpGeometry::from_grad(self.xt.grad(&mesh.tets[e], e, &basis(&fe.grad[e], lam)))
    }
}

/// Boundary data for one extension step.
#[derive(Clone, Debug)]
pub struct ExtensionTarget {
    /// X*(·, tₙ) at fluid interface nodes (indexed by fluid node; ignored elsewhere).
    pub interface: Vec<Vec3>,
    pub rotation: Mat3,
    pub center: Vec3,
}

#[derive(Clone, Copy, Debug)]
pub struct ExtensionOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        ExtensionOptions { tol: 1e-6, max_iter: 20 }
    }
}

/// Candidate end-of-step rigid placement from the state at tₙ₋₁ and (h̃', ω̃) at tₙ.
pub fn candidate_placement(prev: &RigidState, h_tilde_dot: &Vec3, omega_tilde: &Vec3, dt: f64) -> (Mat3, Vec3) {
    let r = integrate_rotation(&prev.r, omega_tilde, dt);
    (r, prev.h + r * h_tilde_dot * dt)
}

/// Builds the target for step tₙ and checks that the datum is flux free.
pub fn extension_target(
    mesh: &Mesh,
    solid: &SolidMesh,
    deform: &DeformationField,
    prev: &RigidState,
    h_tilde_dot: &Vec3,
    omega_tilde: &Vec3,
    t: f64,
    dt: f64,
) -> Result<ExtensionTarget> {
    let sample = deform.sample(solid, t)?;
    let res = residuals_of(solid, deform.rho_s, &sample, t)?;
    let bound = 1e-6 * res.volume / dt;
    if res.flux.abs() > bound {
        return Err(FsiError::CompatibilityViolation { flux: res.flux, bound });
    }
    let mut interface = vec![Vec3::zeros(); mesh.nodes.len()];
    for i in mesh.interface_nodes() {
        interface[i] = sample.x[mesh.solid_node[i].expect("interface node linked to solid")];
    }
    let (rotation, center) = candidate_placement(prev, h_tilde_dot, omega_tilde, dt);
    Ok(ExtensionTarget { interface, rotation, center })
}

fn divergence_data(mesh: &Mesh, fe: &FeSpace, prev: &ExtensionMap, v: &MiniField, dt: f64) -> Vec<[f64; 4]> {
    (0..mesh.tets.len())
        .into_par_iter()
        .map(|e| {
            let b = qp_bases(fe, e);
            std::array::from_fn(|q| {
                let g = &prev.qp[e][q];
                let em = v.grad(&mesh.tets[e], e, &b[q]) * dt;
                let lin = (Mat3::identity() - g.cof).component_mul(&em).sum();
                let quad = g.grad.component_mul(&cofactor(&em)).sum();
                (lin - quad - em.determinant() + 1.0 - g.det) / dt
            })
        })
        .collect()
}

pub fn advance_extension(
    prev: &ExtensionMap,
    mesh: &Mesh,
    fe: &FeSpace,
    solver: &StokesSolver,
    target: &ExtensionTarget,
    dt: f64,
    opts: ExtensionOptions,
    guess: Option<&MiniField>,
) -> Result<ExtensionMap> {
    let rt = target.rotation.transpose();
    let dirichlet: Vec<Vec3> = (0..mesh.nodes.len())
        .map(|i| match mesh.node_kind[i] {
            NodeKind::Interior => Vec3::zeros(),
            NodeKind::Interface => (target.interface[i] - prev.xt.nodal[i]) / dt,
            NodeKind::Wall => (rt * (mesh.nodes[i] - target.center) - prev.xt.nodal[i]) / dt,
        })
        .collect();

    let mut v = guess.cloned().unwrap_or_else(|| MiniField::zeros(mesh));
    let mut stats = ExtensionStats::default();
    let mut growth = 0;
    let mut result: Option<ExtensionMap> = None;
    for k in 0..opts.max_iter.max(1) {
        let f = divergence_data(mesh, fe, prev, &v, dt);
        let (sol, _) = solver.solve(mesh, fe, &dirichlet, Some(&f), None)?;
        let vn = sol.velocity;
        let diff = vn.lincomb(1.0, &v, -1.0);
        let incr = dt * diff.nodal.iter().chain(&diff.bubble).map(|x| x.amax()).fold(0.0, f64::max);
        if let Some(&last) = stats.increments.last() {
            if last > 0.0 {
                stats.ratios.push(incr / last);
            }
            growth = if incr > last { growth + 1 } else { 0 };
        }
        stats.increments.push(incr);
        stats.iterations = k + 1;
        stats.multiplier = sol.multiplier;

        let mut xt = prev.xt.clone();
        xt.axpy(dt, &vn);
        let map = ExtensionMap::from_fields(mesh, fe, xt, vn.clone());
        stats.det_residual = map.stats.det_residual;
        stats.max_det_deviation = map.stats.max_det_deviation;
        v = vn;
        let done = incr <= opts.tol * dt || stats.det_residual <= 1e-3 * opts.tol;
        result = Some(map);
        if done {
            break;
        }
        if growth >= 3 || !v.is_finite() {
            return Err(FsiError::ExtensionDiverged { iterations: k + 1, residual: stats.det_residual });
        }
    }
    let mut map = result.expect("at least one iterate");
    if stats.det_residual > opts.tol && stats.iterations >= opts.max_iter {
        let growing = stats.ratios.last().is_some_and(|r| *r >= 1.0);
        if growing || !stats.det_residual.is_finite() {
            return Err(FsiError::ExtensionDiverged { iterations: stats.iterations, residual: stats.det_residual });
        }
    }
    map.stats = stats;
    Ok(map)
}

/// Discrete L² norm of the row-wise weak divergence of com ∇X̃ against P1
/// test functions, relative to ‖com ∇X̃‖.
///
/// rⱼ = ∫_∂F (com ∇X̃) n φⱼ − ∫_F (com ∇X̃) ∇φⱼ, measured as (Σ |rⱼ|²/mⱼ)^½.
/// For a P1 map the normal component of each cofactor row is continuous
/// across faces, so this vanishes up to rounding; bubbles enter through
/// quadrature only.
pub fn piola_residual(ext: &ExtensionMap, mesh: &Mesh, fe: &FeSpace) -> f64 {
    let n = mesh.nodes.len();
    let mut r = vec![Vec3::zeros(); n];
    let mut norm_sq = 0.0;
    for (e, t) in mesh.tets.iter().enumerate() {
        let w = qp_weight(fe, e);
        for q in 0..4 {
            let cof = ext.qp[e][q].cof;
            norm_sq += w * cof.norm_squared();
            for a in 0..4 {
                r[t[a]] -= cof * fe.grad[e][a] * w;
            }
        }
    }
    for f in &mesh.facets {
        let t = &mesh.tets[f.owner];
        for lam in facet_points(mesh, f) {
            let cn = ext.geometry_at(mesh, fe, f.owner, &lam).cof * f.normal * (f.area * TRI_WEIGHT);
            for a in 0..4 {
                r[t[a]] += cn * lam[a];
            }
        }
    }
    let res: f64 = r.iter().zip(&fe.lumped).map(|(ri, m)| ri.norm_squared() / m).sum();
    if norm_sq > 0.0 { (res / norm_sq).sqrt() } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cofactor_of_diagonal() {
        let m = Mat3::from_diagonal(&Vec3::new(2.0, 3.0, 5.0));
        assert_eq!(cofactor(&m), Mat3::from_diagonal(&Vec3::new(15.0, 10.0, 6.0)));
        assert_eq!(cofactor(&Mat3::identity()), Mat3::identity());
    }

    #[test]
    fn adjugate_identity_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let m = Mat3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let err = (m * cofactor(&m).transpose() - Mat3::identity() * m.determinant()).abs().max();
            assert!(err <= 1e-12);
        }
    }

    #[test]
    fn inverse_function_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m = Mat3::identity() + Mat3::from_fn(|_, _| rng.random_range(-0.3..0.3));
            let g = QpGeometry::from_grad(m);
            assert!((g.grad_y * g.grad - Mat3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn piola_residual_sees_a_broken_cofactor() {
        let (mesh, _) = crate::mesh::generate_ball_in_box(1.0, 0.4, 8).unwrap();
        let fe = FeSpace::new(&mesh);
        let pi = std::f64::consts::PI;
        let nodal = mesh.nodes.iter().map(|y| y + Vec3::new((pi * y[1]).sin(), 0.0, (pi * y[0]).cos()) * 0.02).collect();
        let mut ext = ExtensionMap::from_fields(&mesh, &fe, MiniField::from_nodal(&mesh, nodal), MiniField::zeros(&mesh));
        assert!(piola_residual(&ext, &mesh, &fe) <= 1e-12);
        let e = mesh.tets.len() / 2;
        for q in 0..4 {
            ext.qp[e][q].cof *= 1.1;
        }
        assert!(piola_residual(&ext, &mesh, &fe) > 1e-3);
    }
}
