//! MINI element kinematics: P1 + cubic bubble velocities, P1 pressures.

use rayon::prelude::*;

use crate::mesh::quadrature::{TET_POINTS, TET_WEIGHT, TRI_POINTS};
use crate::mesh::{barycentric_gradients, signed_volume, BoundaryFacet, Mesh};
use crate::{Mat3, Vec3};

/// Per-element geometry of the reference mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub vol: Vec<f64>,
    pub grad: Vec<[Vec3; 4]>,
    /// ∫ φ_j over F for each P1 basis function.
    pub lumped: Vec<f64>,
}

impl FeSpace {
    pub fn new(mesh: &Mesh) -> FeSpace {
        let (vol, grad): (Vec<f64>, Vec<[Vec3; 4]>) = (0..mesh.tets.len())
            .into_par_iter()
            .map(|e| {
                let x = mesh.tet_corners(e);
                (signed_volume(&x), barycentric_gradients(&x))
            })
            .unzip();
        let mut lumped = vec![0.0; mesh.nodes.len()];
        for (e, t) in mesh.tets.iter().enumerate() {
            for &i in t {
                lumped[i] += vol[e] / 4.0;
            }
        }
        FeSpace { vol, grad, lumped }
    }

    pub fn n_elements(&self) -> usize {
        self.vol.len()
    }

    pub fn domain_volume(&self) -> f64 {
        self.vol.iter().sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Basis {
    pub phi: [f64; 4],
    pub grad: [Vec3; 4],
    pub b: f64,
    pub grad_b: Vec3,
}

/// Shape functions at barycentric point `lam`; the bubble is 256 λ₀λ₁λ₂λ₃.
pub fn basis(grad: &[Vec3; 4], lam: &[f64; 4]) -> Basis {
    let b = 256.0 * lam[0] * lam[1] * lam[2] * lam[3];
    let mut grad_b = Vec3::zeros();
    for k in 0..4 {
        let others: f64 = (0..4).filter(|&j| j != k).map(|j| lam[j]).product();
        grad_b += grad[k] * (256.0 * others);
    }
    Basis { phi: *lam, grad: *grad, b, grad_b }
}

/// Shape functions at the four volume quadrature points of element `e`.
pub fn qp_bases(fe: &FeSpace, e: usize) -> [Basis; 4] {
    std::array::from_fn(|q| basis(&fe.grad[e], &TET_POINTS[q]))
}

pub fn qp_weight(fe: &FeSpace, e: usize) -> f64 {
    fe.vol[e] * TET_WEIGHT
}

/// Barycentric coordinates (in the owner tet) of the surface quadrature points of a facet.
pub fn facet_points(mesh: &Mesh, f: &BoundaryFacet) -> [[f64; 4]; 3] {
    let t = &mesh.tets[f.owner];
    let pos: [usize; 3] = std::array::from_fn(|k| t.iter().position(|&i| i == f.nodes[k]).unwrap());
    std::array::from_fn(|q| {
        let mut lam = [0.0; 4];
        for k in 0..3 {
            lam[pos[k]] = TRI_POINTS[q][k];
        }
        lam
    })
}

/// Vector field in the MINI space.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniField {
    pub nodal: Vec<Vec3>,
    pub bubble: Vec<Vec3>,
}

impl MiniField {
    pub fn zeros(mesh: &Mesh) -> Self {
        MiniField { nodal: vec![Vec3::zeros(); mesh.nodes.len()], bubble: vec![Vec3::zeros(); mesh.tets.len()] }
    }

    pub fn from_nodal(mesh: &Mesh, nodal: Vec<Vec3>) -> Self {
        MiniField { nodal, bubble: vec![Vec3::zeros(); mesh.tets.len()] }
    }

    pub fn value(&self, tet: &[usize; 4], e: usize, b: &Basis) -> Vec3 {
        let mut v = self.bubble[e] * b.b;
        for a in 0..4 {
            v += self.nodal[tet[a]] * b.phi[a];
        }
        v
    }

    /// (∇V)ᵢⱼ = ∂ⱼVᵢ.
    pub fn grad(&self, tet: &[usize; 4], e: usize, b: &Basis) -> Mat3 {
        let mut g = self.bubble[e] * b.grad_b.transpose();
        for a in 0..4 {
            g += self.nodal[tet[a]] * b.grad[a].transpose();
        }
        g
    }

    pub fn axpy(&mut self, s: f64, other: &MiniField) {
        for (a, b) in self.nodal.iter_mut().zip(&other.nodal) {
            *a += b * s;
        }
        for (a, b) in self.bubble.iter_mut().zip(&other.bubble) {
            *a += b * s;
        }
    }

    pub fn lincomb(&self, s: f64, other: &MiniField, t: f64) -> MiniField {
        MiniField {
            nodal: self.nodal.iter().zip(&other.nodal).map(|(a, b)| a * s + b * t).collect(),
            bubble: self.bubble.iter().zip(&other.bubble).map(|(a, b)| a * s + b * t).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.nodal.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.nodal.iter().chain(&self.bubble).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Σ over quadrature points of `f(e, q, basis, weight)`, reduced in element order.
pub fn integrate<T, F>(mesh: &Mesh, fe: &FeSpace, zero: T, f: F) -> T
where
    T: Send + Sync + Clone + std::ops::Add<Output = T>,
    F: Fn(usize, &[usize; 4], &Basis, f64) -> T + Sync,
{
    let parts: Vec<T> = (0..mesh.tets.len())
        .into_par_iter()
        .map(|e| {
            let w = qp_weight(fe, e);
            let mut acc = zero.clone();
            for b in qp_bases(fe, e).iter() {
                acc = acc + f(e, &mesh.tets[e], b, w);
            }
            acc
        })
        .collect();
    parts.into_iter().fold(zero, |a, b| a + b)
}

/// ‖V‖²_{L²} by quadrature.
pub fn l2_norm_sq(mesh: &Mesh, fe: &FeSpace, v: &MiniField) -> f64 {
    integrate(mesh, fe, 0.0, |e, t, b, w| w * v.value(t, e, b).norm_squared())
}

/// ‖D(V)‖²_{L²} with D the symmetric gradient.
pub fn sym_grad_norm_sq(mesh: &Mesh, fe: &FeSpace, v: &MiniField) -> f64 {
    integrate(mesh, fe, 0.0, |e, t, b, w| {
        let g = v.grad(t, e, b);
        w * (0.5 * (g + g.transpose())).norm_squared()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bubble_gradient_matches_finite_difference() {
        let x = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.1, 0.0),
            Vec3::new(0.2, 0.9, 0.1),
            Vec3::new(0.1, 0.2, 1.2),
        ];
        let g = barycentric_gradients(&x);
        let lam = [0.1, 0.2, 0.3, 0.4];
        let p: Vec3 = (0..4).map(|a| x[a] * lam[a]).sum();
        let bary = |q: Vec3| -> [f64; 4] {
            let l1 = g[1].dot(&(q - x[0]));
            let l2 = g[2].dot(&(q - x[0]));
            let l3 = g[3].dot(&(q - x[0]));
            [1.0 - l1 - l2 - l3, l1, l2, l3]
        };
        let b0 = basis(&g, &lam);
        for c in 0..3 {
            let mut d = Vec3::zeros();
            d[c] = 1e-6;
            let fd = (basis(&g, &bary(p + d)).b - basis(&g, &bary(p - d)).b) / 2e-6;
            assert!((fd - b0.grad_b[c]).abs() < 1e-7);
        }
    }

    #[test]
    fn bubble_gradient_sums_to_zero_over_quadrature() {
        let x = [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let g = barycentric_gradients(&x);
        let s: Vec3 = TET_POINTS.iter().map(|l| basis(&g, l).grad_b).sum();
        assert!(s.norm() < 1e-13);
    }
}
