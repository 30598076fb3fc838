//! Fixed simplex rules: degree 2 on tetrahedra (4 points) and triangles (3 points).
//! Points are barycentric; weights are fractions of the simplex measure.

const TET_A: f64 = 0.585_410_196_624_968_5;
const TET_B: f64 = 0.138_196_601_125_010_5;

pub const TET_POINTS: [[f64; 4]; 4] = [
    [TET_A, TET_B, TET_B, TET_B],
    [TET_B, TET_A, TET_B, TET_B],
    [TET_B, TET_B, TET_A, TET_B],
    [TET_B, TET_B, TET_B, TET_A],
];
pub const TET_WEIGHT: f64 = 0.25;

pub const TRI_POINTS: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];
pub const TRI_WEIGHT: f64 = 1.0 / 3.0;

pub const TET_QP: usize = 4;
pub const TRI_QP: usize = 3;

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_tet(p: [usize; 4]) -> f64 {
        TET_POINTS
            .iter()
            .map(|l| TET_WEIGHT * (0..4).map(|i| l[i].powi(p[i] as i32)).product::<f64>())
            .sum()
    }

    fn fact(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn tet_rule_integrates_quadratics() {
        // ∫ λ^p / |T| = 3! Π p_i! / (3 + Σp)!
        for p in [[0, 0, 0, 0], [1, 0, 0, 0], [2, 0, 0, 0], [1, 1, 0, 0], [0, 1, 0, 1]] {
            let s: usize = p.iter().sum();
            let exact = 6.0 * p.iter().map(|&k| fact(k)).product::<f64>() / fact(3 + s);
            assert!((monomial_tet(p) - exact).abs() < 1e-14, "{p:?}");
        }
    }

    #[test]
    fn tri_rule_integrates_quadratics() {
        for p in [[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0]] {
            let s: usize = p.iter().sum();
            let exact = 2.0 * p.iter().map(|&k| fact(k)).product::<f64>() / fact(2 + s);
            let q: f64 = TRI_POINTS
                .iter()
                .map(|l| TRI_WEIGHT * (0..3).map(|i| l[i].powi(p[i] as i32)).product::<f64>())
                .sum();
            assert!((q - exact).abs() < 1e-14, "{p:?}");
        }
    }
}
