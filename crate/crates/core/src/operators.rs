//! Geometric coefficients of the transformed system and the Picard right-hand sides.
//!
//! Stress and divergence terms are written in Piola form with com ∇X̃, which
//! coincides with the ∇Ỹ(X̃)-based expressions when det ∇X̃ = 1 and keeps the
//! interface integrals exact for a faceted geometry.

use rayon::prelude::*;

use crate::extension::ExtensionMap;
use crate::kinematics::InertiaTensor;
use crate::linsolve::fe::{basis, facet_points, qp_bases, qp_weight, FeSpace, MiniField};
use crate::mesh::quadrature::TRI_WEIGHT;
use crate::mesh::{BoundaryTag, Mesh};
use crate::{Mat3, Vec3};

#[derive(Clone, Debug)]
pub struct TransformedCoefficients {
    /// A = ∇Ỹ ∇Ỹᵀ
    pub metric: Vec<[Mat3; 4]>,
    /// B = ∇Ỹ(X̃)
    pub b: Vec<[Mat3; 4]>,
    /// h̃' + ω̃∧X̃ + ∂tX̃
    pub drift: Vec<[Vec3; 4]>,
    /// ΔỸ(X̃), weak nodal recovery interpolated to quadrature points.
    pub b_lap: Vec<[Vec3; 4]>,
    pub omega_tilde: Vec3,
}

/// Lumped weak Laplacian of Ỹ: ∫ φⱼ det ΔỸ = −∫ ∇φⱼ · (com ∇X̃)ᵀ ∇Ỹₖ + ∫_∂F φⱼ (com ∇X̃)ᵀ∇Ỹₖ · n.
fn weak_laplacian_y(ext: &ExtensionMap, mesh: &Mesh, fe: &FeSpace) -> Vec<Vec3> {
    let n = mesh.nodes.len();
    let mut num = vec![Vec3::zeros(); n];
    let mut den = vec![0.0; n];
    let flux_field = |g: &crate::extension::QpGeometry| -> Mat3 {
        // column k is (com ∇X̃)ᵀ (row k of ∇Ỹ)ᵀ
        g.cof.transpose() * g.grad_y.transpose()
    };
    for (e, t) in mesh.tets.iter().enumerate() {
        let w = qp_weight(fe, e);
        for (q, b) in qp_bases(fe, e).iter().enumerate() {
            let g = &ext.qp[e][q];
            let z = flux_field(g);
            for a in 0..4 {
                num[t[a]] -= z.transpose() * b.grad[a] * w;
                den[t[a]] += w * b.phi[a] * g.det;
            }
        }
    }
    for f in &mesh.facets {
        let t = &mesh.tets[f.owner];
        for lam in facet_points(mesh, f) {
            let g = ext.geometry_at(mesh, fe, f.owner, &lam);
            let zn = flux_field(&g).transpose() * f.normal;
            for a in 0..4 {
                num[t[a]] += zn * (lam[a] * f.area * TRI_WEIGHT);
            }
        }
    }
    num.iter().zip(&den).map(|(v, d)| v / *d).collect()
}

pub fn build_coefficients(
    ext: &ExtensionMap,
    mesh: &Mesh,
    fe: &FeSpace,
    h_tilde_dot: &Vec3,
    omega_tilde: &Vec3,
) -> TransformedCoefficients {
    let lap = weak_laplacian_y(ext, mesh, fe);
    let per: Vec<([Mat3; 4], [Mat3; 4], [Vec3; 4], [Vec3; 4])> = (0..mesh.tets.len())
        .into_par_iter()
        .map(|e| {
            let t = &mesh.tets[e];
            let bs = qp_bases(fe, e);
            let b: [Mat3; 4] = std::array::from_fn(|q| ext.qp[e][q].grad_y);
            let metric = std::array::from_fn(|q| b[q] * b[q].transpose());
            let drift = std::array::from_fn(|q| {
                h_tilde_dot + omega_tilde.cross(&ext.xt.value(t, e, &bs[q])) + ext.dxt_dt.value(t, e, &bs[q])
            });
            let b_lap = std::array::from_fn(|q| (0..4).map(|a| lap[t[a]] * bs[q].phi[a]).sum());
            (metric, b, drift, b_lap)
        })
        .collect();
    let mut c = TransformedCoefficients {
        metric: Vec::with_capacity(per.len()),
        b: Vec::with_capacity(per.len()),
        drift: Vec::with_capacity(per.len()),
        b_lap: Vec::with_capacity(per.len()),
        omega_tilde: *omega_tilde,
    };
    for (m, b, d, l) in per {
        c.metric.push(m);
        c.b.push(b);
        c.drift.push(d);
        c.b_lap.push(l);
    }
    c
}

/// σ̃(V,Q) = ν(∇V B + Bᵀ∇Vᵀ) − Q I.
pub fn transformed_stress(grad_v: &Mat3, b: &Mat3, q: f64, nu: f64) -> Mat3 {
    let gb = grad_v * b;
    (gb + gb.transpose()) * nu - Mat3::identity() * q
}

/// σ(V,Q) = ν(∇V + ∇Vᵀ) − Q I.
pub fn stress(grad_v: &Mat3, q: f64, nu: f64) -> Mat3 {
    (grad_v + grad_v.transpose()) * nu - Mat3::identity() * q
}

/// Previous Picard iterate (V, Q, K', ϖ).
#[derive(Clone, Copy, Debug)]
pub struct PicardIterate<'a> {
    pub velocity: &'a MiniField,
    pub pressure: &'a [f64],
    pub h_tilde_dot: Vec3,
    pub omega_tilde: Vec3,
}

/// Data of the current step needed by the right-hand sides.
#[derive(Clone, Debug)]
pub struct RhsContext<'a> {
    pub nu: f64,
    pub dt: f64,
    pub mass: f64,
    pub inertia: InertiaTensor,
    /// ω̃ at the previous time level, for Ω' ≈ (ϖ − ω̃ⁿ⁻¹)/dt.
    pub omega_prev: Vec3,
    /// X*(·,tₙ) and ∂tX*(·,tₙ) indexed by fluid node (meaningful on interface nodes).
    pub x_star: &'a [Vec3],
    pub v_star: &'a [Vec3],
}

#[derive(Clone, Debug)]
pub struct PicardRhs {
    /// Weak volume load against nodal basis functions.
    pub f_nodal: Vec<Vec3>,
    /// Weak volume load against element bubbles.
    pub f_bubble: Vec<Vec3>,
    /// Continuity right-hand side −∫ q div G, integrated by parts.
    pub continuity: Vec<f64>,
    /// G = (I − (com ∇X̃)ᵀ) V at quadrature points.
    pub g_field: Vec<[Vec3; 4]>,
    /// W = ϖ∧(X* − y) + ∂tX* per fluid node (zero off the interface).
    pub w_bnd: Vec<Vec3>,
    /// Full force and torque right-hand sides, with their surface stress differences.
    pub f_m: Vec3,
    pub f_i: Vec3,
    /// Parts applied to the rigid rows; the stress differences enter through the volume load.
    pub f_m_weak: Vec3,
    pub f_i_weak: Vec3,
    /// δ = ∫_∂S (G − W)·n.
    pub flux_mismatch: f64,
}

pub fn picard_rhs(
    it: &PicardIterate,
    coeffs: &TransformedCoefficients,
    ext: &ExtensionMap,
    mesh: &Mesh,
    fe: &FeSpace,
    ctx: &RhsContext,
) -> PicardRhs {
    let nu = ctx.nu;
    let varpi = it.omega_tilde;
    type Elem = ([Vec3; 4], Vec3, [f64; 4], [Vec3; 4]);
    let per: Vec<Elem> = (0..mesh.tets.len())
        .into_par_iter()
        .map(|e| {
            let t = &mesh.tets[e];
            let w = qp_weight(fe, e);
            let mut fn_ = [Vec3::zeros(); 4];
            let mut fb = Vec3::zeros();
            let mut cont = [0.0; 4];
            let mut gf = [Vec3::zeros(); 4];
            for (q, b) in qp_bases(fe, e).iter().enumerate() {
                let geo = &ext.qp[e][q];
                let v = it.velocity.value(t, e, b);
                let gv = it.velocity.grad(t, e, b);
                let qv: f64 = (0..4).map(|a| it.pressure[t[a]] * b.phi[a]).sum();
                let bq = coeffs.b[e][q];
                let force = gv * bq * (coeffs.drift[e][q] - v) - varpi.cross(&v);
                let tdiff = transformed_stress(&gv, &bq, qv, nu) * geo.cof - stress(&gv, qv, nu);
                let g = v - geo.cof.transpose() * v;
                gf[q] = g;
                for a in 0..4 {
                    fn_[a] += (force * b.phi[a] - tdiff * b.grad[a]) * w;
                    cont[a] += w * b.grad[a].dot(&g);
                }
                fb += (force * b.b - tdiff * b.grad_b) * w;
            }
            (fn_, fb, cont, gf)
        })
        .collect();

    let n = mesh.nodes.len();
    let mut f_nodal = vec![Vec3::zeros(); n];
    let mut continuity = vec![0.0; n];
    let mut f_bubble = Vec::with_capacity(per.len());
    let mut g_field = Vec::with_capacity(per.len());
    for (e, (fn_, fb, cont, gf)) in per.into_iter().enumerate() {
        let t = &mesh.tets[e];
        for a in 0..4 {
            f_nodal[t[a]] += fn_[a];
            continuity[t[a]] += cont[a];
        }
        f_bubble.push(fb);
        g_field.push(gf);
    }

    let mut w_bnd = vec![Vec3::zeros(); n];
    for i in mesh.interface_nodes() {
        w_bnd[i] = varpi.cross(&(ctx.x_star[i] - mesh.nodes[i])) + ctx.v_star[i];
    }

    let mut surf_t = Vec3::zeros();
    let mut surf_yt = Vec3::zeros();
    let mut surf_lever = Vec3::zeros();
    let mut mismatch = 0.0;
    for f in mesh.facets_with(BoundaryTag::SolidInterface) {
        let e = f.owner;
        let t = &mesh.tets[e];
        let wf = f.area * TRI_WEIGHT;
        for lam in facet_points(mesh, f) {
            let b = basis(&fe.grad[e], &lam);
            let geo = ext.geometry_at(mesh, fe, e, &lam);
            let v = it.velocity.value(t, e, &b);
            let gv = it.velocity.grad(t, e, &b);
            let qv: f64 = (0..4).map(|a| it.pressure[t[a]] * lam[a]).sum();
            let y: Vec3 = (0..4).map(|a| mesh.nodes[t[a]] * lam[a]).sum();
            let xs: Vec3 = (0..4).map(|a| ctx.x_star[t[a]] * lam[a]).sum();
            let wq: Vec3 = (0..4).map(|a| w_bnd[t[a]] * lam[a]).sum();
            let st = transformed_stress(&gv, &geo.grad_y, qv, nu) * geo.cof;
            let tn = (st - stress(&gv, qv, nu)) * f.normal;
            let g = v - geo.cof.transpose() * v;
            for a in 0..4 {
                continuity[t[a]] -= wf * lam[a] * g.dot(&f.normal);
            }
            mismatch += wf * (g - wq).dot(&f.normal);
            surf_t += tn * wf;
            surf_yt += y.cross(&tn) * wf;
            surf_lever += (xs - y).cross(&(st * f.normal)) * wf;
        }
    }

    let inert = &ctx.inertia;
    let omega_dot = (varpi - ctx.omega_prev) / ctx.dt;
    let f_m_weak = -varpi.cross(&it.h_tilde_dot) * ctx.mass;
    let inertial = -(inert.i_star - inert.i0) * omega_dot - inert.i_star_dot * varpi
        + (inert.i_star * varpi).cross(&varpi);
    let f_i_weak = inertial - surf_lever;
    PicardRhs {
        f_nodal,
        f_bubble,
        continuity,
        g_field,
        w_bnd,
        f_m: f_m_weak - surf_t,
        f_i: f_i_weak - surf_yt,
        f_m_weak,
        f_i_weak,
        flux_mismatch: mismatch,
    }
}

/// G = (I − (com ∇X̃)ᵀ) ũ at quadrature points, its continuity load and the
/// interface mismatch δ = ∫_∂S (G − W)·n against a given interface datum.
pub fn divergence_data(
    u: &MiniField,
    ext: &ExtensionMap,
    mesh: &Mesh,
    fe: &FeSpace,
    w_bnd: &[Vec3],
) -> (Vec<[Vec3; 4]>, Vec<f64>, f64) {
    let mut cont = vec![0.0; mesh.nodes.len()];
    let mut gf = Vec::with_capacity(mesh.tets.len());
    for (e, t) in mesh.tets.iter().enumerate() {
        let w = qp_weight(fe, e);
        let mut g4 = [Vec3::zeros(); 4];
        for (q, b) in qp_bases(fe, e).iter().enumerate() {
            let v = u.value(t, e, b);
            let g = v - ext.qp[e][q].cof.transpose() * v;
            g4[q] = g;
            for a in 0..4 {
                cont[t[a]] += w * b.grad[a].dot(&g);
            }
        }
        gf.push(g4);
    }
    let mut mismatch = 0.0;
    for f in mesh.facets_with(BoundaryTag::SolidInterface) {
        let e = f.owner;
        let t = &mesh.tets[e];
        let wf = f.area * TRI_WEIGHT;
        for lam in facet_points(mesh, f) {
            let b = basis(&fe.grad[e], &lam);
            let geo = ext.geometry_at(mesh, fe, e, &lam);
            let v = u.value(t, e, &b);
            let g = v - geo.cof.transpose() * v;
            let wq: Vec3 = (0..4).map(|a| w_bnd[t[a]] * lam[a]).sum();
            for a in 0..4 {
                cont[t[a]] -= wf * lam[a] * g.dot(&f.normal);
            }
            mismatch += wf * (g - wq).dot(&f.normal);
        }
    }
    (gf, cont, mismatch)
}
