//! Steady Stokes problem with prescribed divergence and Dirichlet data on the
//! whole boundary.

use super::fe::{facet_points, qp_bases, qp_weight, basis, FeSpace, MiniField};
use super::system::{MiniLoad, MiniSolution, MiniSystem, NodeRole};
use crate::error::{FsiError, Result};
use crate::mesh::quadrature::{TET_POINTS, TRI_WEIGHT};
use crate::mesh::{BoundaryTag, Mesh, NodeKind};
use crate::{Mat3, Vec3};

/// Factorized steady Stokes operator; reusable for any data on the same mesh.
pub struct StokesSolver {
    pub nu: f64,
    /// Largest accepted |∫ data·n − ∫ g| relative to the data scale; the
    /// remainder is absorbed by the mean-pressure multiplier.
    pub mismatch_tol: f64,
    system: MiniSystem,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompatibilityReport {
    /// ∫_∂F data·n − ∫_F g.
    pub mismatch: f64,
    pub scale: f64,
}

impl StokesSolver {
    pub fn new(mesh: &Mesh, fe: &FeSpace, nu: f64) -> Result<Self> {
        let roles = mesh
            .node_kind
            .iter()
            .map(|k| if *k == NodeKind::Interior { NodeRole::Free } else { NodeRole::Fixed })
            .collect();
        Ok(StokesSolver { nu, mismatch_tol: 1e-4, system: MiniSystem::new(mesh, fe, nu, 0.0, roles, None)? })
    }

    pub fn with_mismatch_tol(mut self, tol: f64) -> Self {
        self.mismatch_tol = tol;
        self
    }

    pub fn system(&self) -> &MiniSystem {
        &self.system
    }

    /// `dirichlet` is read on boundary nodes; `div_data` and `force` are given at
    /// the four quadrature points of every element.
    pub fn solve(
        &self,
        mesh: &Mesh,
        fe: &FeSpace,
        dirichlet: &[Vec3],
        div_data: Option<&[[f64; 4]]>,
        force: Option<&[[Vec3; 4]]>,
    ) -> Result<(MiniSolution, CompatibilityReport)> {
        let mut load = MiniLoad::zeros(mesh);
        load.prescribed = dirichlet.to_vec();
        let mut div_int = 0.0;
        let mut div_abs = 0.0;
        for (e, t) in mesh.tets.iter().enumerate() {
            let w = qp_weight(fe, e);
            for (q, b) in qp_bases(fe, e).iter().enumerate() {
                if let Some(g) = div_data {
                    let gq = g[e][q];
                    div_int += w * gq;
                    div_abs += w * gq.abs();
                    for a in 0..4 {
                        load.continuity[t[a]] -= w * b.phi[a] * gq;
                    }
                }
                if let Some(f) = force {
                    let fq = f[e][q];
                    for a in 0..4 {
                        load.velocity[t[a]] += fq * (w * b.phi[a]);
                    }
                    load.bubble[e] += fq * (w * b.b);
                }
            }
        }
        let (flux, flux_abs) = boundary_flux(mesh, dirichlet);
        let report = CompatibilityReport { mismatch: flux - div_int, scale: flux_abs + div_abs };
        if report.mismatch.abs() > self.mismatch_tol * report.scale + 1e-12 * fe.domain_volume() {
            return Err(FsiError::CompatibilityViolation {
                flux: report.mismatch,
                bound: self.mismatch_tol * report.scale,
            });
        }
        Ok((self.system.solve(&load)?, report))
    }
}

/// (∫_∂F d·n, ∫_∂F |d·n|) for nodal data `d` interpolated on the facets.
pub fn boundary_flux(mesh: &Mesh, d: &[Vec3]) -> (f64, f64) {
    let mut s = 0.0;
    let mut a = 0.0;
    for f in &mesh.facets {
        let m: Vec3 = f.nodes.iter().map(|&i| d[i]).sum::<Vec3>() / 3.0;
        let v = f.area * m.dot(&f.normal);
        s += v;
        a += v.abs();
    }
    (s, a)
}

/// One-shot convenience wrapper.
pub fn solve_steady_stokes(
    mesh: &Mesh,
    fe: &FeSpace,
    nu: f64,
    dirichlet: &[Vec3],
    div_data: Option<&[[f64; 4]]>,
    force: Option<&[[Vec3; 4]]>,
) -> Result<MiniSolution> {
    Ok(StokesSolver::new(mesh, fe, nu)?.solve(mesh, fe, dirichlet, div_data, force)?.0)
}

/// ∫ σ(u,p) n dΓ over the facets carrying `tag`, n pointing out of F, with
/// the owner element's gradients evaluated at the facet quadrature points.
pub fn surface_traction(mesh: &Mesh, fe: &FeSpace, u: &MiniField, p: &[f64], nu: f64, tag: BoundaryTag) -> Vec3 {
    let mut force = Vec3::zeros();
    for f in mesh.facets_with(tag) {
        let e = f.owner;
        let t = &mesh.tets[e];
        for lam in facet_points(mesh, f) {
            let b = basis(&fe.grad[e], &lam);
            let g = u.grad(t, e, &b);
            let pq: f64 = (0..4).map(|a| p[t[a]] * lam[a]).sum();
            let sigma = (g + g.transpose()) * nu - Mat3::identity() * pq;
            force += sigma * f.normal * (f.area * TRI_WEIGHT);
        }
    }
    force
}

/// Smooth divergence-free field u = curl(φ, φ, φ), φ = sin x sin y sin z,
/// with pressure x y z; returns (u, ∇p, p).
pub fn manufactured_fields(x: &Vec3) -> (Vec3, Vec3, f64) {
    let (sx, cx) = x[0].sin_cos();
    let (sy, cy) = x[1].sin_cos();
    let (sz, cz) = x[2].sin_cos();
    let dx = cx * sy * sz;
    let dy = sx * cy * sz;
    let dz = sx * sy * cz;
    let u = Vec3::new(dy - dz, dz - dx, dx - dy);
    let gp = Vec3::new(x[1] * x[2], x[0] * x[2], x[0] * x[1]);
    (u, gp, x[0] * x[1] * x[2])
}

#[derive(Clone, Copy, Debug)]
pub struct ManufacturedReport {
    pub cell_size: f64,
    pub velocity_l2_error: f64,
    pub velocity_l2_norm: f64,
    pub pressure_l2_error: f64,
}

/// Solves −div(2νD(u)) + ∇p = f, div u = 0 with the manufactured solution above
/// (Δu = −3u, so f = 3νu + ∇p) and measures the errors.
pub fn manufactured_stokes(mesh: &Mesh, fe: &FeSpace, nu: f64) -> Result<ManufacturedReport> {
    let node_data: Vec<Vec3> = mesh.nodes.iter().map(|x| manufactured_fields(x).0).collect();
    let qp_x = |e: usize, q: usize| -> Vec3 {
        let t = &mesh.tets[e];
        (0..4).map(|a| mesh.nodes[t[a]] * TET_POINTS[q][a]).sum()
    };
    let force: Vec<[Vec3; 4]> = (0..mesh.tets.len())
        .map(|e| {
            std::array::from_fn(|q| {
                let (u, gp, _) = manufactured_fields(&qp_x(e, q));
                u * (3.0 * nu) + gp
            })
        })
        .collect();
    let sol = solve_steady_stokes(mesh, fe, nu, &node_data, None, Some(&force))?;
    let mut err = 0.0;
    let mut nrm = 0.0;
    let mut perr = 0.0;
    for (e, t) in mesh.tets.iter().enumerate() {
        let w = qp_weight(fe, e);
        for (q, b) in qp_bases(fe, e).iter().enumerate() {
            let (u, _, p) = manufactured_fields(&qp_x(e, q));
            let uh = sol.velocity.value(t, e, b);
            let ph: f64 = (0..4).map(|a| sol.pressure[t[a]] * b.phi[a]).sum();
            err += w * (uh - u).norm_squared();
            nrm += w * u.norm_squared();
            perr += w * (ph - p).powi(2);
        }
    }
    Ok(ManufacturedReport {
        cell_size: mesh.cell_size,
        velocity_l2_error: err.sqrt(),
        velocity_l2_norm: nrm.sqrt(),
        pressure_l2_error: perr.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_ball_in_box;

    #[test]
    fn manufactured_fields_are_divergence_free() {
        let x = Vec3::new(0.3, -0.2, 0.7);
        let h = 1e-5;
        let mut div = 0.0;
        for c in 0..3 {
            let mut d = Vec3::zeros();
            d[c] = h;
            div += (manufactured_fields(&(x + d)).0[c] - manufactured_fields(&(x - d)).0[c]) / (2.0 * h);
        }
        assert!(div.abs() < 1e-9);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (mesh, _) = generate_ball_in_box(1.0, 0.3, 8).unwrap();
        let fe = FeSpace::new(&mesh);
        let zero = vec![Vec3::zeros(); mesh.nodes.len()];
        let sol = solve_steady_stokes(&mesh, &fe, 1.0, &zero, None, None).unwrap();
        assert_eq!(sol.velocity.max_abs(), 0.0);
        assert!(sol.pressure.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn incompatible_data_is_rejected() {
        let (mesh, _) = generate_ball_in_box(1.0, 0.3, 8).unwrap();
        let fe = FeSpace::new(&mesh);
        let data: Vec<Vec3> = mesh.nodes.clone();
        assert!(matches!(
            solve_steady_stokes(&mesh, &fe, 1.0, &data, None, None),
            Err(FsiError::CompatibilityViolation { .. })
        ));
    }
}
