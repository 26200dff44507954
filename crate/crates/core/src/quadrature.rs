//! Gauss–Hermite rules and standard normal helpers.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

/// Nodes and weights for `∫ f(t) exp(-t²) dt ≈ Σ w_i f(t_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch: eigen-decomposition of the Jacobi matrix of the
    /// physicists' Hermite polynomials.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Hermite order must be positive");
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], sqrt_pi * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Symmetrize to remove eigen-solver noise.
        let n = pairs.len();
        for i in 0..n / 2 {
            let t = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
            let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
            pairs[i] = (-t, w);
            pairs[n - 1 - i] = (t, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(X)]` for `X ~ N(mean, std²)`.
    pub fn expect<F>(&self, mean: f64, std: f64, mut f: F) -> f64
    where
        F: FnMut(f64) -> f64,
    {
        let scale = std::f64::consts::SQRT_2 * std;
        let norm = std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(mean + scale * t))
            .sum::<f64>()
            / norm
    }
}

/// Cached rule of the given order; orders 20 and 40 are kept for reuse.
pub fn rule(order: usize) -> std::borrow::Cow<'static, GaussHermite> {
    static GH20: OnceLock<GaussHermite> = OnceLock::new();
    static GH40: OnceLock<GaussHermite> = OnceLock::new();
    match order {
        20 => std::borrow::Cow::Borrowed(GH20.get_or_init(|| GaussHermite::new(20))),
        40 => std::borrow::Cow::Borrowed(GH40.get_or_init(|| GaussHermite::new(40))),
        _ => std::borrow::Cow::Owned(GaussHermite::new(order)),
    }
}

/// Standard normal quantile Φ⁻¹(q) for `0 < q < 1`.
pub fn normal_quantile(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let u = (x - mean) / std;
    (-0.5 * u * u).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_gaussian_moments_exactly() {
        let gh = GaussHermite::new(20);
        assert!((gh.weights.iter().sum::<f64>() - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        // E[X^k] of N(0,1): 1, 0, 1, 0, 3, 0, 15, 0, 105
        let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
        for (k, want) in moments.iter().enumerate() {
            let got = gh.expect(0.0, 1.0, |x| x.powi(k as i32));
            assert!((got - want).abs() < 1e-10 * want.max(1.0), "moment {k}: {got}");
        }
        // Lognormal mean: E[exp(X)] for N(0.3, 0.5²).
        let got = gh.expect(0.3, 0.5, f64::exp);
        assert!((got - (0.3f64 + 0.125).exp()).abs() < 1e-13);
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let gh = GaussHermite::new(7);
        assert!(gh.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(gh.nodes[3], 0.0);
        for i in 0..3 {
            assert_eq!(gh.nodes[i], -gh.nodes[6 - i]);
        }
        // Known largest root of H_7.
        assert!((gh.nodes[6] - 2.651_961_356_835_233).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_table_values() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.1) + 1.281_551_565_544_600_5).abs() < 1e-14);
        // The CDF side goes through erfc and is only good to ~1e-12.
        assert!((normal_cdf(normal_quantile(0.1)) - 0.1).abs() < 1e-11);
    }
}
