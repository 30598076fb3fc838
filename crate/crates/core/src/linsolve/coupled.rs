//! Fluid–rigid linear step: implicit Stokes operator with mass 1/dt, interface
//! velocities tied to (l, w) and the no-slip outer wall.

use super::fe::{qp_bases, qp_weight, FeSpace, MiniField};
use super::system::{MiniLoad, MiniSystem, NodeRole, RigidBlock};
use crate::error::{FsiError, Result};
use crate::mesh::{Mesh, NodeKind};
use crate::operators::PicardRhs;
use crate::{Mat3, Vec3};

#[derive(Clone, Debug)]
pub struct FluidState {
    pub velocity: MiniField,
    pub pressure: Vec<f64>,
}

impl FluidState {
    pub fn rest(mesh: &Mesh) -> Self {
        FluidState { velocity: MiniField::zeros(mesh), pressure: vec![0.0; mesh.nodes.len()] }
    }
}

/// Factorized coupled operator for a fixed time step.
pub struct CoupledSystem {
    pub dt: f64,
    pub nu: f64,
    pub mass: f64,
    pub i0: Mat3,
    pub system: MiniSystem,
}

pub fn coupled_roles(mesh: &Mesh) -> Vec<NodeRole> {
    mesh.node_kind
        .iter()
        .map(|k| match k {
            NodeKind::Interior => NodeRole::Free,
            NodeKind::Wall => NodeRole::Fixed,
            NodeKind::Interface => NodeRole::Rigid,
        })
        .collect()
}

pub fn assemble_coupled(mesh: &Mesh, fe: &FeSpace, dt: f64, nu: f64, mass: f64, i0: Mat3) -> Result<CoupledSystem> {
    if !(dt > 0.0 && nu > 0.0 && mass > 0.0) {
        return Err(FsiError::InvalidParameter(format!("dt={dt}, nu={nu}, mass={mass}")));
    }
    let system = MiniSystem::new(mesh, fe, nu, 1.0 / dt, coupled_roles(mesh), Some(RigidBlock { mass, inertia: i0 }))?;
    Ok(CoupledSystem { dt, nu, mass, i0, system })
}

/// ∫ c u·φ against nodal and bubble basis functions.
pub fn mass_load(mesh: &Mesh, fe: &FeSpace, u: &MiniField, c: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut nodal = vec![Vec3::zeros(); mesh.nodes.len()];
    let mut bubble = vec![Vec3::zeros(); mesh.tets.len()];
    for (e, t) in mesh.tets.iter().enumerate() {
        let w = qp_weight(fe, e) * c;
        for b in qp_bases(fe, e).iter() {
            let v = u.value(t, e, b) * w;
            for a in 0..4 {
                nodal[t[a]] += v * b.phi[a];
            }
            bubble[e] += v * b.b;
        }
    }
    (nodal, bubble)
}

#[derive(Clone, Debug)]
pub struct LinearStep {
    pub fluid: FluidState,
    pub h_tilde_dot: Vec3,
    pub omega_tilde: Vec3,
    pub multiplier: f64,
    /// Boundary traction tested with the wall and interface basis functions.
    pub reaction: Vec<Vec3>,
    pub residual: f64,
}

impl CoupledSystem {
    /// One linear solve with the previous-time data and a frozen right-hand side.
    pub fn solve_linear_step(
        &self,
        mesh: &Mesh,
        fe: &FeSpace,
        prev: &FluidState,
        prev_h_tilde_dot: &Vec3,
        prev_omega_tilde: &Vec3,
        rhs: &PicardRhs,
    ) -> Result<LinearStep> {
        let (mn, mb) = mass_load(mesh, fe, &prev.velocity, 1.0 / self.dt);
        let mut load = MiniLoad::zeros(mesh);
        for i in 0..mn.len() {
            load.velocity[i] = mn[i] + rhs.f_nodal[i];
        }
        for e in 0..mb.len() {
            load.bubble[e] = mb[e] + rhs.f_bubble[e];
        }
        load.continuity.clone_from(&rhs.continuity);
        let lm = prev_h_tilde_dot * (self.mass / self.dt) + rhs.f_m_weak;
        let am = self.i0 * prev_omega_tilde / self.dt + rhs.f_i_weak;
        load.rigid = [lm[0], lm[1], lm[2], am[0], am[1], am[2]];
        for (i, k) in mesh.node_kind.iter().enumerate() {
            if *k == NodeKind::Interface {
                load.prescribed[i] = rhs.w_bnd[i];
            }
        }
        let sol = self.system.solve(&load)?;
        let (l, w) = sol.rigid.expect("coupled system carries rigid unknowns");
        Ok(LinearStep {
            fluid: FluidState { velocity: sol.velocity, pressure: sol.pressure },
            h_tilde_dot: l,
            omega_tilde: w,
            multiplier: sol.multiplier,
            reaction: sol.reaction,
            residual: sol.residual,
        })
    }

    /// 6×6 response of (l, w) to unit rigid loads with everything else at rest.
    pub fn mobility(&self, mesh: &Mesh) -> Result<[[f64; 6]; 6]> {
        let mut out = [[0.0; 6]; 6];
        for c in 0..6 {
            let mut load = MiniLoad::zeros(mesh);
            load.rigid[c] = 1.0;
            let sol = self.system.solve(&load)?;
            let (l, w) = sol.rigid.unwrap();
            for r in 0..3 {
                out[r][c] = l[r];
                out[r + 3][c] = w[r];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_ball_in_box;

    #[test]
    fn mobility_is_symmetric_and_positive() {
        let (mesh, _) = generate_ball_in_box(1.0, 0.4, 8).unwrap();
        let fe = FeSpace::new(&mesh);
        let sys = assemble_coupled(&mesh, &fe, 0.05, 0.1, 2.0, Mat3::identity() * 0.1).unwrap();
        let m = sys.mobility(&mesh).unwrap();
        let scale = (0..6).map(|i| m[i][i]).fold(0.0, f64::max);
        for i in 0..6 {
            assert!(m[i][i] > 0.0);
            for j in 0..6 {
                assert!((m[i][j] - m[j][i]).abs() < 1e-9 * scale, "{i} {j}");
            }
        }
    }

    #[test]
    fn reduced_matrix_is_symmetric() {
        let (mesh, _) = generate_ball_in_box(1.0, 0.4, 8).unwrap();
        let fe = FeSpace::new(&mesh);
        let sys = assemble_coupled(&mesh, &fe, 0.05, 0.1, 2.0, Mat3::identity() * 0.1).unwrap();
        let a = sys.system.reduced_matrix();
        assert!(a.asymmetry() < 1e-12 * a.max_abs());
    }

    #[test]
    fn rejects_nonpositive_step() {
        let (mesh, _) = generate_ball_in_box(1.0, 0.4, 8).unwrap();
        let fe = FeSpace::new(&mesh);
        assert!(assemble_coupled(&mesh, &fe, 0.0, 0.1, 1.0, Mat3::identity()).is_err());
    }
}
