//! ARD squared-exponential covariance.
//!
//! `k(x, x') = ν exp(-Σ_d (x_d - x'_d)² / (2 σ_d²))`, with an additive white
//! noise term `σ_n²` on the diagonal of training Gram matrices. Hyperparameter
//! gradients are taken with respect to the log-parameters
//! `[ln ν, ln σ_1, …, ln σ_D, ln σ_n²]`, which is also the layout used by the
//! optimizer.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First jitter rung, relative to the mean diagonal.
const JITTER_START: f64 = 1e-10;
/// Last jitter rung, relative to the mean diagonal.
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let params = Self {
            signal_variance,
            lengthscales,
            noise_variance,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidInput("at least one lengthscale required".into()));
        }
        if let Some(bad) = self
            .lengthscales
            .iter()
            .find(|s| !(**s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "lengthscales must be positive, got {bad}"
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// Input dimension D.
    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Number of log-parameters, D + 2.
    pub fn n_params(&self) -> usize {
        self.dim() + 2
    }

    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|s| s.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    /// Inverse of [`KernelParams::to_log_vec`]. `log` must hold D + 2 entries.
    pub fn from_log_slice(log: &[f64]) -> Self {
        let d = log.len() - 2;
        Self {
            signal_variance: log[0].exp(),
            lengthscales: log[1..=d].iter().map(|v| v.exp()).collect(),
            noise_variance: log[d + 1].exp(),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::InvalidInput(format!(
                "input dimension {d} does not match {} lengthscales",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Covariance between two points given as coordinate iterators.
#[inline]
fn ard<I, J>(params: &KernelParams, a: I, b: J) -> f64
where
    I: Iterator<Item = f64>,
    J: Iterator<Item = f64>,
{
    let mut r2 = 0.0;
    for ((ai, bi), s) in a.zip(b).zip(&params.lengthscales) {
        let diff = ai - bi;
        r2 += diff * diff / (s * s);
    }
    params.signal_variance * (-0.5 * r2).exp()
}

/// Covariance `k(x, x')` between two D-vectors.
pub fn eval(params: &KernelParams, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    params.check_dim(x.len())?;
    params.check_dim(x_prime.len())?;
    if x.iter().chain(x_prime).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite kernel input".into()));
    }
    Ok(ard(params, x.iter().copied(), x_prime.iter().copied()))
}

fn check_matrix(params: &KernelParams, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("no input rows".into()));
    }
    params.check_dim(x.ncols())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in input matrix".into()));
    }
    Ok(())
}

/// Noiseless N×N covariance of the rows of `x`. Symmetric by construction.
pub fn covariance(params: &KernelParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_matrix(params, x)?;
    let n = x.nrows();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = ard(params, x.row(j).iter().copied(), x.row(j).iter().copied());
        for i in (j + 1)..n {
            let v = ard(params, x.row(i).iter().copied(), x.row(j).iter().copied());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cross-covariance between the rows of `a` (N rows) and `b` (M rows), N×M.
pub fn cross_covariance(
    params: &KernelParams,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_matrix(params, a)?;
    check_matrix(params, b)?;
    let mut k = DMatrix::zeros(a.nrows(), b.nrows());
    for j in 0..b.nrows() {
        for i in 0..a.nrows() {
            k[(i, j)] = ard(params, a.row(i).iter().copied(), b.row(j).iter().copied());
        }
    }
    Ok(k)
}

/// A training covariance together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    /// Covariance entries including noise (when requested) and jitter.
    pub entries: DMatrix<f64>,
    /// Diagonal jitter that was needed for the factorization to succeed.
    pub jitter_applied: f64,
    pub cholesky: Cholesky<f64, Dyn>,
}

/// Assembles `K` (plus `σ_n² I` when `add_noise`) and factorizes it, escalating
/// diagonal jitter from 1e-10 to 1e-4 times the mean diagonal as needed.
pub fn gram(params: &KernelParams, x: &DMatrix<f64>, add_noise: bool) -> Result<GramMatrix> {
    let mut k = covariance(params, x)?;
    if add_noise {
        for i in 0..k.nrows() {
            k[(i, i)] += params.noise_variance;
        }
    }
    factorize(k)
}

/// Jitter levels tried in order, as absolute diagonal increments.
pub fn jitter_ladder(mean_diag: f64) -> impl Iterator<Item = f64> {
    let scale = if mean_diag.is_finite() && mean_diag > 0.0 {
        mean_diag
    } else {
        1.0
    };
    std::iter::once(0.0).chain(
        std::iter::successors(Some(JITTER_START), |j| Some(j * 10.0))
            .take_while(|j| *j <= JITTER_MAX * 1.000_001)
            .map(move |j| j * scale),
    )
}

fn try_cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    (0..l.nrows())
        .all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite())
        .then_some(chol)
}

/// Factorizes a symmetric matrix, adding the smallest jitter rung that works.
pub fn factorize(matrix: DMatrix<f64>) -> Result<GramMatrix> {
    let n = matrix.nrows();
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            context: "covariance has non-finite entries".into(),
            jitter: 0.0,
        });
    }
    let mean_diag = matrix.diagonal().sum() / n as f64;
    let mut last = 0.0;
    for jitter in jitter_ladder(mean_diag) {
        last = jitter;
        let mut m = matrix.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(cholesky) = try_cholesky(m.clone()) {
            return Ok(GramMatrix {
                entries: m,
                jitter_applied: jitter,
                cholesky,
            });
        }
    }
    Err(Error::NumericalFailure {
        context: "Cholesky factorization".into(),
        jitter: last,
    })
}

/// Factorizes with a fixed, previously recorded jitter.
pub fn factorize_with_jitter(mut matrix: DMatrix<f64>, jitter: f64) -> Result<GramMatrix> {
    if jitter > 0.0 {
        for i in 0..matrix.nrows() {
            matrix[(i, i)] += jitter;
        }
    }
    match try_cholesky(matrix.clone()) {
        Some(cholesky) => Ok(GramMatrix {
            entries: matrix,
            jitter_applied: jitter,
            cholesky,
        }),
        None => Err(Error::NumericalFailure {
            context: "Cholesky factorization with recorded jitter".into(),
            jitter,
        }),
    }
}

/// Derivatives of the noisy Gram matrix with respect to each log-parameter,
/// in `[ln ν, ln σ_1, …, ln σ_D, ln σ_n²]` order.
pub fn gram_gradients(params: &KernelParams, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let k = covariance(params, x)?;
    let n = x.nrows();
    let mut grads = Vec::with_capacity(params.n_params());
    grads.push(k.clone());
    for (d, s) in params.lengthscales.iter().enumerate() {
        let s2 = s * s;
        let col = x.column(d);
        grads.push(DMatrix::from_fn(n, n, |i, j| {
            let diff = col[i] - col[j];
            k[(i, j)] * diff * diff / s2
        }));
    }
    grads.push(DMatrix::from_diagonal_element(n, n, params.noise_variance));
    Ok(grads)
}

/// `Σ_ij W_ij ∂C_ij/∂θ_p` for every log-parameter `θ_p`, without materialising
/// the individual derivative matrices. `k` is the noiseless covariance of `x`.
pub(crate) fn contract_gradients(
    params: &KernelParams,
    x: &DMatrix<f64>,
    k: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Vec<f64> {
    let n = x.nrows();
    let dim = params.dim();
    let mut out = vec![0.0; params.n_params()];
    let inv_s2: Vec<f64> = params.lengthscales.iter().map(|s| 1.0 / (s * s)).collect();
    for j in 0..n {
        for i in 0..n {
            let wk = w[(i, j)] * k[(i, j)];
            out[0] += wk;
            if i != j {
                for d in 0..dim {
                    let diff = x[(i, d)] - x[(j, d)];
                    out[1 + d] += wk * diff * diff * inv_s2[d];
                }
            }
        }
    }
    out[dim + 1] = params.noise_variance * w.diagonal().sum();
    out
}
