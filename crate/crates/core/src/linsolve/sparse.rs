//! Sparse storage and the direct solver wrapper.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::prelude::*;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Par, Side};

use crate::error::{FsiError, Result};

/// Compressed sparse rows with merged duplicates.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> CsrMatrix {
        trip.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last = (usize::MAX, usize::MAX);
        for (r, c, v) in trip {
            if (r, c) == last {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = (r, c);
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// max |Aᵢⱼ − Aⱼᵢ|.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m = m.max((self.vals[k] - self.get(self.cols[k], i)).abs());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Lower triangle as a faer column matrix.
    fn lower_to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut t = Vec::with_capacity(self.nnz() / 2 + self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] <= i {
                    t.push(Triplet::new(i, self.cols[k], self.vals[k]));
                }
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| FsiError::SingularSystem(format!("sparse build failed: {e:?}")))
    }

    /// Principal submatrix on `keep` (sorted indices).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut t = Vec::new();
        for (ki, &i) in keep.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = map[self.cols[k]];
                if j != usize::MAX {
                    t.push((ki, j, self.vals[k]));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), t)
    }
}

/// Sparse LDLᵀ of a symmetric quasi-definite matrix under an AMD ordering.
/// `signs` gives the expected pivot sign of every row (+1 velocity-like,
/// −1 constraint-like); pivots that come out with the wrong sign are replaced
/// by a tiny value of the right one and left to iterative refinement.
pub struct DirectSolver {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    pub factor_seconds: f64,
}

impl DirectSolver {
    pub fn factor(a: &CsrMatrix, signs: &[i8]) -> Result<DirectSolver> {
        assert_eq!(signs.len(), a.n);
        let t0 = std::time::Instant::now();
        let fail = |what: &str, e: &dyn std::fmt::Debug| FsiError::SingularSystem(format!("{what}: {e:?}"));
        let lower = a.lower_to_faer()?;
        let symbolic = factorize_symbolic_cholesky(
            lower.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| fail("symbolic factorization failed", &e))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()))
            .map_err(|e| fail("out of memory", &e))?;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let reg = LdltRegularization {
            dynamic_regularization_signs: Some(signs),
            dynamic_regularization_delta: 1e-10 * scale,
            dynamic_regularization_epsilon: 1e-14 * scale,
        };
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                lower.as_ref(),
                Side::Lower,
                reg,
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| fail("LDLT factorization failed", &e))?;
        Ok(DirectSolver { symbolic, values, factor_seconds: t0.elapsed().as_secs_f64() })
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut col = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        LdltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            col.as_mat_mut(),
            Par::Seq,
            MemStack::new(&mut mem),
        );
        (0..b.len()).map(|i| col[i]).collect()
    }

    /// Solves with up to two steps of iterative refinement; returns the relative residual.
    pub fn solve(&self, a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        let bn = norm(b);
        let mut x = self.raw_solve(b);
        let mut res = rel_residual(a, &x, b, bn);
        for _ in 0..2 {
            if !(res > 1e-13) {
                break;
            }
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let dx = self.raw_solve(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let cres = rel_residual(a, &cand, b, bn);
            if cres < res {
                x = cand;
                res = cres;
            } else {
                break;
            }
        }
        if !x.iter().all(|v| v.is_finite()) || !(res < 1e-6) {
            return Err(FsiError::LinearSolveFailed { msg: "direct solve inaccurate".into(), residual: res });
        }
        Ok((x, res))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn rel_residual(a: &CsrMatrix, x: &[f64], b: &[f64], bn: f64) -> f64 {
    let ax = a.matvec(x);
    let r = norm(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    if bn > 0.0 { r / bn } else { r }
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems with an SPD
/// diagonal preconditioner `m_inv`. Returns the solution and relative residual.
pub fn minres(a: &CsrMatrix, b: &[f64], m_inv: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return (x, 0.0);
    }
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let prec = |v: &[f64]| v.iter().zip(m_inv).map(|(p, q)| p * q).collect::<Vec<f64>>();

    let mut r1 = b.to_vec();
    let mut y = prec(&r1);
    let beta1 = dot(&r1, &y).sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut res = 1.0;
    for _ in 0..max_iter {
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| yi * s).collect();
        let mut yy = a.matvec(&v);
        if oldb != 0.0 {
            for i in 0..n {
                yy[i] -= (beta / oldb) * r1[i];
            }
        }
        let alfa = dot(&v, &yy);
        for i in 0..n {
            yy[i] -= (alfa / beta) * r2[i];
        }
        r1 = std::mem::replace(&mut r2, yy);
        y = prec(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }
        let ax = a.matvec(&x);
        res = norm(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>()) / bn;
        if res <= tol || beta == 0.0 {
            break;
        }
    }
    (x, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn saddle() -> CsrMatrix {
        // [[4,1,1],[1,3,1],[1,1,-0.5]]
        let t = vec![
            (0, 0, 4.0), (0, 1, 1.0), (0, 2, 1.0),
            (1, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0),
            (2, 0, 1.0), (2, 1, 1.0), (2, 2, -0.5),
        ];
        CsrMatrix::from_triplets(3, t)
    }

    #[test]
    fn merges_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 5.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn direct_and_minres_agree() {
        let a = saddle();
        let b = [1.0, 2.0, 3.0];
        let (x, res) = DirectSolver::factor(&a, &[1, 1, -1]).unwrap().solve(&a, &b).unwrap();
        assert!(res < 1e-14);
        let (y, r2) = minres(&a, &b, &[0.25, 1.0 / 3.0, 2.0], 1e-12, 50);
        assert!(r2 < 1e-10);
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() < 1e-9);
        }
    }
}
