//! Brute-force quadrature of the radial Duhamel integral, used as an
//! independent check of the conversion rules.
//!
//! For □ψ = F in 3+1 dimensions with radial F and zero data,
//! rψ(t,r) = ½ ∫∫ ρ F(s,ρ) over the backward characteristic triangle.
//! In null coordinates p = s+ρ, q = s-ρ the triangle is |u| ≤ p ≤ v,
//! -p ≤ q ≤ u, and the model source is F = ⟨ρ⟩^-α⟨p⟩^-β⟨q⟩^-η.
//!
//! Both directions are split into panels graded dyadically towards the
//! places where the integrand varies on unit scales, with 20-point
//! Gauss-Legendre on each panel.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::calculus::{CalculusError, Result};

const NODES: usize = 20;
const REL_TOL: f64 = 1e-3;

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| {
        let n = NODES;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            // Newton from the Chebyshev-like initial guess.
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

/// Panel endpoints on [a, b], graded towards each anchor inside it.
fn panels(a: f64, b: f64, anchors: &[f64], split: usize) -> Vec<(f64, f64)> {
    let mut pts = vec![a, b];
    for &c in anchors {
        if c < a || c > b {
            continue;
        }
        pts.push(c);
        for k in 0..60 {
            let d = (k as f64 - 8.0).exp2();
            if c - d > a {
                pts.push(c - d);
            }
            if c + d < b {
                pts.push(c + d);
            }
        }
    }
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    let mut out = Vec::with_capacity(pts.len() * split);
    for w in pts.windows(2) {
        let h = (w[1] - w[0]) / split as f64;
        for j in 0..split {
            out.push((w[0] + j as f64 * h, w[0] + (j + 1) as f64 * h));
        }
    }
    out
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, anchors: &[f64], split: usize) -> f64 {
    let (x, w) = gauss_legendre();
    let mut sum = 0.0;
    for (lo, hi) in panels(a, b, anchors, split) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * f(mid + half * xi);
        }
        sum += half * s;
    }
    sum
}

fn jp(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Source weights of the model integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSource {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    /// Restrict the source to 1/2 ≤ ρ/s ≤ 3/2.
    pub cone_supported: bool,
}

impl ConeSource {
    pub fn new(alpha: f64, beta: f64, eta: f64) -> Self {
        ConeSource { alpha, beta, eta, cone_supported: false }
    }

    fn density(&self, p: f64, q: f64) -> f64 {
        let rho = 0.5 * (p - q);
        if self.cone_supported {
            let s = 0.5 * (p + q);
            if s <= 0.0 || rho < 0.5 * s || rho > 1.5 * s {
                return 0.0;
            }
        }
        rho * jp(rho).powf(-self.alpha) * jp(p).powf(-self.beta) * jp(q).powf(-self.eta)
    }

    fn evaluate(&self, t: f64, r: f64, split: usize) -> f64 {
        let u = t - r;
        let v = t + r;
        let lo = u.abs();
        if v <= lo {
            return 0.0;
        }
        let outer = panels(lo, v, &[lo, 0.0], split);
        let (x, w) = gauss_legendre();
        let parts: Vec<f64> = outer
            .par_iter()
            .map(|&(a, b)| {
                let half = 0.5 * (b - a);
                let mid = 0.5 * (b + a);
                let mut s = 0.0;
                for (xi, wi) in x.iter().zip(w) {
                    let p = mid + half * xi;
                    let mut anchors = vec![0.0, u, -p];
                    if self.cone_supported {
                        anchors.extend([p / 3.0, -p / 5.0]);
                    }
                    s += wi * integrate(|q| self.density(p, q), -p, u, &anchors, split);
                }
                half * s
            })
            .collect();
        // ds dρ = ½ dp dq
        0.25 * parts.iter().sum::<f64>()
    }

    /// rψ(t, r) for the model source, checked against a refined mesh.
    pub fn integral(&self, t: f64, r: f64) -> Result<f64> {
        if !(t >= 0.0 && r >= 0.0) || ![self.alpha, self.beta, self.eta].iter().all(|x| x.is_finite()) {
            return Err(CalculusError::QuadratureNotConverged(format!(
                "invalid input t={t} r={r} weights={self:?}"
            )));
        }
        let coarse = self.evaluate(t, r, 1);
        let fine = self.evaluate(t, r, 2);
        let scale = fine.abs().max(f64::MIN_POSITIVE);
        if !fine.is_finite() || (fine - coarse).abs() > REL_TOL * scale {
            return Err(CalculusError::QuadratureNotConverged(format!(
                "t={t} r={r}: {coarse} vs {fine} after refinement"
            )));
        }
        Ok(fine)
    }

    /// r·∂_tψ, i.e. the solution for the source ∂_t F, by a centred
    /// difference of the integral. Only meaningful for cone-supported
    /// sources, which vanish at t = 0.
    pub fn dt_integral(&self, t: f64, r: f64, h: f64) -> Result<f64> {
        let plus = self.integral(t + h, r)?;
        let minus = self.integral(t - h, r)?;
        Ok((plus - minus) / (2.0 * h))
    }
}

/// rψ at (t, r) for □ψ = ⟨r⟩^-α⟨v⟩^-β⟨u⟩^-η with zero data.
pub fn oracle_cone_integral(alpha: f64, beta: f64, eta: f64, t: f64, r: f64) -> Result<f64> {
    ConeSource::new(alpha, beta, eta).integral(t, r)
}
