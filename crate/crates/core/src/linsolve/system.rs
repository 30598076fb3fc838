//! Monolithic MINI saddle-point systems with static bubble condensation.
//!
//! Full unknowns are node-major: `4i + k` holds velocity component `k < 3`
//! and pressure `k = 3` of node `i`. Bubbles are condensed element by element.
//! The reduced system keeps free velocities, all pressures, optionally the six
//! rigid velocities (l, w) that drive interface nodes through l + w∧y + W,
//! and one multiplier fixing the pressure mean.

use rayon::prelude::*;

use super::fe::{qp_bases, qp_weight, FeSpace, MiniField};
use super::sparse::{CsrMatrix, DirectSolver};
use crate::error::Result;
use crate::mesh::Mesh;
use crate::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRole {
    Free,
    /// Velocity prescribed.
    Fixed,
    /// Velocity l + w∧y + prescribed offset.
    Rigid,
}

#[derive(Clone, Copy, Debug)]
pub struct RigidBlock {
    pub mass: f64,
    pub inertia: Mat3,
}

#[derive(Clone, Debug)]
struct Condensed {
    abb_inv: Mat3,
    /// Bubble rows of the element matrix against the 16 nodal unknowns.
    kbk: [[f64; 16]; 3],
}

#[derive(Clone, Debug)]
pub struct MiniLoad {
    /// Integrated load against each nodal velocity basis function.
    pub velocity: Vec<Vec3>,
    /// Integrated load against each element bubble.
    pub bubble: Vec<Vec3>,
    /// Right-hand side of the continuity rows.
    pub continuity: Vec<f64>,
    /// Loads on (l, w).
    pub rigid: [f64; 6],
    /// Prescribed velocity on `Fixed` nodes, offset W on `Rigid` nodes.
    pub prescribed: Vec<Vec3>,
}

impl MiniLoad {
    pub fn zeros(mesh: &Mesh) -> Self {
        let n = mesh.nodes.len();
        MiniLoad {
            velocity: vec![Vec3::zeros(); n],
            bubble: vec![Vec3::zeros(); mesh.tets.len()],
            continuity: vec![0.0; n],
            rigid: [0.0; 6],
            prescribed: vec![Vec3::zeros(); n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct MiniSolution {
    pub velocity: MiniField,
    pub pressure: Vec<f64>,
    /// (l, w) when the system carries rigid unknowns.
    pub rigid: Option<(Vec3, Vec3)>,
    pub multiplier: f64,
    /// Residual of the momentum rows at `Fixed` and `Rigid` nodes: the boundary traction tested with φᵢ.
    pub reaction: Vec<Vec3>,
    pub residual: f64,
}

pub struct MiniSystem {
    pub roles: Vec<NodeRole>,
    pub nu: f64,
    pub mass_coef: f64,
    pub rigid_block: Option<RigidBlock>,
    coords: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    vel_index: Vec<usize>,
    p_index: Vec<usize>,
    rigid0: usize,
    mult: usize,
    full: CsrMatrix,
    reduced: CsrMatrix,
    elem: Vec<Condensed>,
    lumped: Vec<f64>,
    /// Reduced indices kept in the factorized system: the multiplier and one
    /// pressure are dropped, which leaves a quasi-definite matrix.
    kept: Vec<usize>,
    pinned: CsrMatrix,
    solver: DirectSolver,
}

/// Local 19×19 matrix: nodal (4a + c, pressure 4a + 3), bubble 16 + c.
fn element_matrix(fe: &FeSpace, e: usize, mass_coef: f64, nu: f64) -> [[f64; 19]; 19] {
    let mut k = [[0.0; 19]; 19];
    let w = qp_weight(fe, e);
    let vidx = |s: usize, c: usize| if s < 4 { 4 * s + c } else { 16 + c };
    for b in qp_bases(fe, e).iter() {
        let vals = [b.phi[0], b.phi[1], b.phi[2], b.phi[3], b.b];
        let grads = [b.grad[0], b.grad[1], b.grad[2], b.grad[3], b.grad_b];
        for s in 0..5 {
            for t in 0..5 {
                let m = mass_coef * w * vals[s] * vals[t];
                let gg = grads[s].dot(&grads[t]);
                for c in 0..3 {
                    for d in 0..3 {
                        let mut v = nu * w * grads[s][d] * grads[t][c];
                        if c == d {
                            v += m + nu * w * gg;
                        }
                        k[vidx(s, c)][vidx(t, d)] += v;
                    }
                }
            }
        }
        for a in 0..4 {
            for t in 0..5 {
                for d in 0..3 {
                    let v = -w * b.phi[a] * grads[t][d];
                    k[4 * a + 3][vidx(t, d)] += v;
                    k[vidx(t, d)][4 * a + 3] += v;
                }
            }
        }
    }
    k
}

fn condense(k: &[[f64; 19]; 19]) -> ([[f64; 16]; 16], Condensed) {
    let abb = Mat3::from_fn(|c, d| k[16 + c][16 + d]);
    let abb_inv = abb.try_inverse().unwrap_or_else(Mat3::zeros);
    let mut kbk = [[0.0; 16]; 3];
    for c in 0..3 {
        kbk[c].copy_from_slice(&k[16 + c][..16]);
    }
    let mut s = [[0.0; 16]; 16];
    for i in 0..16 {
        let kib = Vec3::new(k[i][16], k[i][17], k[i][18]);
        let t = abb_inv.transpose() * kib;
        for j in 0..16 {
            s[i][j] = k[i][j] - (t[0] * kbk[0][j] + t[1] * kbk[1][j] + t[2] * kbk[2][j]);
        }
    }
    (s, Condensed { abb_inv, kbk })
}

fn adjacency(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); mesh.nodes.len()];
    for t in &mesh.tets {
        for &a in t {
            adj[a].extend_from_slice(t);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

impl MiniSystem {
    pub fn new(
        mesh: &Mesh,
        fe: &FeSpace,
        nu: f64,
        mass_coef: f64,
        roles: Vec<NodeRole>,
        rigid_block: Option<RigidBlock>,
    ) -> Result<MiniSystem> {
        let n = mesh.nodes.len();
        let parts: Vec<([[f64; 16]; 16], Condensed)> = (0..mesh.tets.len())
            .into_par_iter()
            .map(|e| condense(&element_matrix(fe, e, mass_coef, nu)))
            .collect();

        let adj = adjacency(mesh);
        let mut row_ptr = vec![0usize; 4 * n + 1];
        for i in 0..n {
            for k in 0..4 {
                row_ptr[4 * i + k + 1] = row_ptr[4 * i + k] + 4 * adj[i].len();
            }
        }
        let mut cols = vec![0usize; row_ptr[4 * n]];
        for i in 0..n {
            for k in 0..4 {
                let base = row_ptr[4 * i + k];
                for (p, &j) in adj[i].iter().enumerate() {
                    for l in 0..4 {
                        cols[base + 4 * p + l] = 4 * j + l;
                    }
                }
            }
        }
        let mut vals = vec![0.0; cols.len()];
        for (e, (s, _)) in parts.iter().enumerate() {
            let t = &mesh.tets[e];
            for a in 0..4 {
                for b in 0..4 {
                    let p = adj[t[a]].binary_search(&t[b]).unwrap();
                    for k in 0..4 {
                        let base = row_ptr[4 * t[a] + k] + 4 * p;
                        for l in 0..4 {
                            vals[base + l] += s[4 * a + k][4 * b + l];
                        }
                    }
                }
            }
        }
        let full = CsrMatrix { n: 4 * n, row_ptr, cols, vals };
        let elem: Vec<Condensed> = parts.into_iter().map(|p| p.1).collect();

        let mut vel_index = vec![usize::MAX; n];
        let mut p_index = vec![0usize; n];
        let mut next = 0;
        for i in 0..n {
            if roles[i] == NodeRole::Free {
                vel_index[i] = next;
                next += 3;
            }
            p_index[i] = next;
            next += 1;
        }
        let rigid0 = next;
        if rigid_block.is_some() {
            next += 6;
        }
        let mult = next;
        let n_red = next + 1;

        let mut sys = MiniSystem {
            roles,
            nu,
            mass_coef,
            rigid_block,
            coords: mesh.nodes.clone(),
            tets: mesh.tets.clone(),
            vel_index,
            p_index,
            rigid0,
            mult,
            full,
            reduced: CsrMatrix { n: 0, row_ptr: vec![0], cols: vec![], vals: vec![] },
            elem,
            lumped: fe.lumped.clone(),
            kept: Vec::new(),
            pinned: CsrMatrix { n: 0, row_ptr: vec![0], cols: vec![], vals: vec![] },
            solver: DirectSolver::factor(&CsrMatrix::from_triplets(1, vec![(0, 0, 1.0)]), &[1])?,
        };

        let mut trip = Vec::with_capacity(sys.full.nnz() + 2 * n + 36);
        for row in 0..4 * n {
            let (ti, ni) = sys.tmap(row);
            if ni == 0 {
                continue;
            }
            for q in sys.full.row_ptr[row]..sys.full.row_ptr[row + 1] {
                let v = sys.full.vals[q];
                if v == 0.0 {
                    continue;
                }
                let (tj, nj) = sys.tmap(sys.full.cols[q]);
                for &(ri, ci) in &ti[..ni] {
                    for &(rj, cj) in &tj[..nj] {
                        trip.push((ri, rj, ci * cj * v));
                    }
                }
            }
        }
        if let Some(rb) = sys.rigid_block {
            for c in 0..3 {
                trip.push((rigid0 + c, rigid0 + c, mass_coef * rb.mass));
                for d in 0..3 {
                    trip.push((rigid0 + 3 + c, rigid0 + 3 + d, mass_coef * rb.inertia[(c, d)]));
                }
            }
        }
        for i in 0..n {
            trip.push((sys.p_index[i], mult, fe.lumped[i]));
            trip.push((mult, sys.p_index[i], fe.lumped[i]));
        }
        sys.reduced = CsrMatrix::from_triplets(n_red, trip);
        let mut sign = vec![1i8; n_red];
        for &p in &sys.p_index {
            sign[p] = -1;
        }
        let pinned = sys.p_index[n - 1];
        sys.kept = (0..mult).filter(|&r| r != pinned).collect();
        let signs: Vec<i8> = sys.kept.iter().map(|&r| sign[r]).collect();
        sys.pinned = sys.reduced.submatrix(&sys.kept);
        sys.solver = DirectSolver::factor(&sys.pinned, &signs)?;
        Ok(sys)
    }

    /// Reduced-space expansion of full unknown `row`: Σ c·z[r] (+ prescribed offset).
    fn tmap(&self, row: usize) -> ([(usize, f64); 3], usize) {
        let (i, k) = (row / 4, row % 4);
        let mut out = [(0usize, 0.0f64); 3];
        if k == 3 {
            out[0] = (self.p_index[i], 1.0);
            return (out, 1);
        }
        match self.roles[i] {
            NodeRole::Free => {
                out[0] = (self.vel_index[i] + k, 1.0);
                (out, 1)
            }
            NodeRole::Fixed => (out, 0),
            NodeRole::Rigid => {
                let y = self.coords[i];
                let w = self.rigid0 + 3;
                out[0] = (self.rigid0 + k, 1.0);
                // (w∧y)_k
                match k {
                    0 => {
                        out[1] = (w + 1, y[2]);
                        out[2] = (w + 2, -y[1]);
                    }
                    1 => {
                        out[1] = (w + 2, y[0]);
                        out[2] = (w, -y[2]);
                    }
                    _ => {
                        out[1] = (w, y[1]);
                        out[2] = (w + 1, -y[0]);
                    }
                }
                (out, 3)
            }
        }
    }

    pub fn n_reduced(&self) -> usize {
        self.reduced.n
    }

    pub fn full_matrix(&self) -> &CsrMatrix {
        &self.full
    }

    pub fn reduced_matrix(&self) -> &CsrMatrix {
        &self.reduced
    }

    pub fn factor_seconds(&self) -> f64 {
        self.solver.factor_seconds
    }

    /// Reduced indices of the rigid unknowns (l then w).
    pub fn rigid_indices(&self) -> Option<std::ops::Range<usize>> {
        self.rigid_block.map(|_| self.rigid0..self.rigid0 + 6)
    }

    /// Reduced indices of all velocity-type unknowns (free nodal and rigid).
    pub fn velocity_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.roles.len())
            .filter(|&i| self.roles[i] == NodeRole::Free)
            .flat_map(|i| self.vel_index[i]..self.vel_index[i] + 3)
            .collect();
        if let Some(r) = self.rigid_indices() {
            v.extend(r);
        }
        v
    }

    /// Solves the reduced system for an arbitrary right-hand side.
    /// The constant pressure spans the kernel of the matrix without its
    /// multiplier border, so the multiplier follows from summing the
    /// continuity rows; the remaining system is solved with one pressure
    /// pinned and the pressure then shifted to the prescribed weighted mean.
    pub fn solve_reduced(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        let total: f64 = self.lumped.iter().sum();
        let lambda = self.p_index.iter().map(|&p| b[p]).sum::<f64>() / total;
        let mut bc = b.to_vec();
        for (&p, m) in self.p_index.iter().zip(&self.lumped) {
            bc[p] -= lambda * m;
        }
        let sub: Vec<f64> = self.kept.iter().map(|&r| bc[r]).collect();
        let (x, _) = self.solver.solve(&self.pinned, &sub)?;
        let mut z = vec![0.0; self.reduced.n];
        for (&r, v) in self.kept.iter().zip(&x) {
            z[r] = *v;
        }
        let mean: f64 = self.p_index.iter().zip(&self.lumped).map(|(&p, m)| m * z[p]).sum();
        let shift = (b[self.mult] - mean) / total;
        for &p in &self.p_index {
            z[p] += shift;
        }
        z[self.mult] = lambda;
        let residual = super::sparse::rel_residual(&self.reduced, &z, b, super::sparse::norm(b));
        Ok((z, residual))
    }

    pub fn solve(&self, load: &MiniLoad) -> Result<MiniSolution> {
        let n = self.roles.len();
        let mut f = vec![0.0; 4 * n];
        for i in 0..n {
            for k in 0..3 {
                f[4 * i + k] = load.velocity[i][k];
            }
            f[4 * i + 3] = load.continuity[i];
        }
        for (e, c) in self.elem.iter().enumerate() {
            let t = c.abb_inv * load.bubble[e];
            if t == Vec3::zeros() {
                continue;
            }
            let tet = &self.tets[e];
            for j in 0..16 {
                f[4 * tet[j / 4] + j % 4] -= t[0] * c.kbk[0][j] + t[1] * c.kbk[1][j] + t[2] * c.kbk[2][j];
            }
        }
        let mut off = vec![0.0; 4 * n];
        for i in 0..n {
            if self.roles[i] != NodeRole::Free {
                for k in 0..3 {
                    off[4 * i + k] = load.prescribed[i][k];
                }
            }
        }
        let kof = self.full.matvec(&off);
        let mut b = vec![0.0; self.reduced.n];
        for row in 0..4 * n {
            let r = f[row] - kof[row];
            let (t, m) = self.tmap(row);
            for &(ri, ci) in &t[..m] {
                b[ri] += ci * r;
            }
        }
        if self.rigid_block.is_some() {
            for c in 0..6 {
                b[self.rigid0 + c] += load.rigid[c];
            }
        }
        let (z, residual) = self.solve_reduced(&b)?;

        let mut x = off;
        for (row, xv) in x.iter_mut().enumerate() {
            let (t, m) = self.tmap(row);
            for &(ri, ci) in &t[..m] {
                *xv += ci * z[ri];
            }
        }
        let bubble: Vec<Vec3> = self
            .elem
            .par_iter()
            .enumerate()
            .map(|(e, c)| {
                let tet = &self.tets[e];
                let mut r = load.bubble[e];
                for j in 0..16 {
                    let xj = x[4 * tet[j / 4] + j % 4];
                    for d in 0..3 {
                        r[d] -= c.kbk[d][j] * xj;
                    }
                }
                c.abb_inv * r
            })
            .collect();
        let kx = self.full.matvec(&x);
        let reaction = (0..n)
            .map(|i| {
                if self.roles[i] != NodeRole::Free {
                    Vec3::from_fn(|k, _| kx[4 * i + k] - f[4 * i + k])
                } else {
                    Vec3::zeros()
                }
            })
            .collect();
        let nodal = (0..n).map(|i| Vec3::new(x[4 * i], x[4 * i + 1], x[4 * i + 2])).collect();
        let pressure = (0..n).map(|i| x[4 * i + 3]).collect();
        let rigid = self.rigid_block.map(|_| {
            let r = self.rigid0;
            (Vec3::new(z[r], z[r + 1], z[r + 2]), Vec3::new(z[r + 3], z[r + 4], z[r + 5]))
        });
        Ok(MiniSolution {
            velocity: MiniField { nodal, bubble },
            pressure,
            rigid,
            multiplier: z[self.mult],
            reaction,
            residual,
        })
    }
}
