//! Biased empirical HSIC between two scalar samples with Gaussian kernels.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::median_pairwise_distance;

pub const MIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    pub statistic: f64,
    pub bandwidth_x: f64,
    pub bandwidth_y: f64,
    pub n: usize,
}

/// Median pairwise distance, or 1.0 when that median is zero.
pub fn median_bandwidth(values: &[f64]) -> f64 {
    let m = median_pairwise_distance(values);
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

fn check(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "HSIC samples differ in length ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    if u.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "HSIC needs at least {MIN_SAMPLES} samples, got {}",
            u.len()
        )));
    }
    if u.iter().chain(v).any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite HSIC sample".into()));
    }
    Ok(())
}

/// Double-centred Gaussian Gram matrix `H K H`.
fn centred_gram(values: &[f64], bandwidth: f64) -> DMatrix<f64> {
    let n = values.len();
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut k = DMatrix::from_fn(n, n, |i, j| {
        let d = values[i] - values[j];
        (-d * d * inv).exp()
    });
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for j in 0..n {
        for i in 0..n {
            // K is symmetric, so column means equal row means.
            k[(i, j)] += grand - row_means[i] - row_means[j];
        }
    }
    k
}

/// `Σ_ij Kc_ij Lc_ij / n²`, which equals `tr(K H L H) / n²`.
fn statistic_from_centred(kc: &DMatrix<f64>, lc: &DMatrix<f64>) -> f64 {
    let n = kc.nrows() as f64;
    kc.dot(lc) / (n * n)
}

pub fn hsic_statistic(u: &[f64], v: &[f64], bandwidths: Option<(f64, f64)>) -> Result<HsicResult> {
    check(u, v)?;
    let (bx, by) = match bandwidths {
        Some((bx, by)) => {
            if !(bx > 0.0 && by > 0.0 && bx.is_finite() && by.is_finite()) {
                return Err(Error::InvalidInput("HSIC bandwidths must be positive".into()));
            }
            (bx, by)
        }
        None => (median_bandwidth(u), median_bandwidth(v)),
    };
    let kc = centred_gram(u, bx);
    let lc = centred_gram(v, by);
    Ok(HsicResult {
        statistic: statistic_from_centred(&kc, &lc),
        bandwidth_x: bx,
        bandwidth_y: by,
        n: u.len(),
    })
}

/// Empirical `(1 - level)` quantile of the statistic under random
/// permutations of `v`; the order statistic at rank `ceil((1 - level) P)`.
/// Permutation `p` draws from its own stream of a seeded generator.
pub fn permutation_threshold(
    u: &[f64],
    v: &[f64],
    level: f64,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    check(u, v)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level {level} outside (0, 1)")));
    }
    if permutations == 0 {
        return Err(Error::InvalidInput("need at least one permutation".into()));
    }
    let n = u.len();
    let kc = centred_gram(u, median_bandwidth(u));
    // Permuting v permutes rows and columns of its centred Gram matrix, and
    // the median bandwidth is permutation invariant.
    let lc = centred_gram(v, median_bandwidth(v));
    let mut stats: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut acc = 0.0;
            for j in 0..n {
                for i in 0..n {
                    acc += kc[(i, j)] * lc[(perm[i], perm[j])];
                }
            }
            acc / (n * n) as f64
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let rank = ((1.0 - level) * permutations as f64).ceil() as usize;
    Ok(stats[rank.clamp(1, permutations) - 1])
}
