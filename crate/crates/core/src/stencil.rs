//! Finite-difference weights on arbitrary nodes.

/// Weights w_i with f^(m)(x0) ≈ Σ w_i f(xs_i), by Fornberg's recursion.
pub fn weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > m, "need more nodes than the derivative order");
    // c[i][k]: weight of node i for the k-th derivative
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Centred five-point first derivative on unit spacing.
pub const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
/// Centred five-point second derivative on unit spacing.
pub const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_centred_stencils() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        for (m, table) in [(1, D1), (2, D2)] {
            let w = weights(0.0, &xs, m);
            for (a, b) in w.iter().zip(table) {
                assert!((a - b).abs() < 1e-13, "{w:?}");
            }
        }
    }

    #[test]
    fn one_sided_is_exact_on_quartics() {
        let xs = [0.0, 0.3, 0.6, 0.9, 1.2];
        let w = weights(0.0, &xs, 1);
        let d: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x * x * x * x - 2.0 * x + 1.0)).sum();
        assert!((d + 2.0).abs() < 1e-10, "{d}");
    }
}
