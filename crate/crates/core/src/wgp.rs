//! Warped GP regression.
//!
//! Observations are mapped to `[-1, 1]` by an affine [`TargetScaling`], then
//! through the monotone warp `z = g(y)`, and a GP is fitted to `z`. The
//! training objective is the GP evidence of the (centred) warped targets plus
//! the change-of-variables term `Σ ln g'(y_i)`, maximized jointly over kernel
//! and warp parameters. Predictions are latent Gaussians that are pushed back
//! through `g⁻¹` by [`WarpedPredictive`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, FitReport, GpDocument, GpModel, Standardization};
use crate::kernel::KernelParams;
use crate::optimize::{self, FitConfig};
use crate::quadrature;
use crate::warp::{WarpParams, DEFAULT_STEPS};

pub const QUADRATURE_ORDER: usize = 20;

/// Upper bound on `ln a` during fitting. Larger step sizes only push the
/// warp into the saturated tanh tail, where `a tanh(·)` is a huge constant
/// plus a tiny variation and the latent values lose their precision.
pub const LOG_STEP_SIZE_LIMIT: f64 = 10.0;

/// Affine map `y_s = (y - shift) / scale` onto `[-1, 1]` over the training range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub shift: f64,
    pub scale: f64,
}

impl TargetScaling {
    pub fn identity() -> Self {
        Self {
            shift: 0.0,
            scale: 1.0,
        }
    }

    pub fn from_targets(y: &DVector<f64>) -> Self {
        let lo = y.min();
        let hi = y.max();
        let half = 0.5 * (hi - lo);
        Self {
            shift: 0.5 * (hi + lo),
            scale: if half > 0.0 && half.is_finite() { half } else { 1.0 },
        }
    }

    #[inline]
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    #[inline]
    pub fn invert(&self, y_scaled: f64) -> f64 {
        y_scaled * self.scale + self.shift
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WgpConfig {
    #[serde(flatten)]
    pub fit: FitConfig,
    /// Number of tanh steps L.
    pub steps: usize,
    pub include_identity: bool,
}

impl Default for WgpConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            steps: DEFAULT_STEPS,
            include_identity: true,
        }
    }
}

/// Joint log-likelihood of kernel and warp parameters, with its gradient in
/// `[ln ν, ln σ_1..ln σ_D, ln σ_n², ln a_1..ln a_L, ln b_1..ln b_L, c_1..c_L]`
/// order. `y` is used as given (no scaling); warped targets are centred
/// before the GP evidence is evaluated.
pub fn wgp_log_likelihood(
    kernel: &KernelParams,
    warp: &WarpParams,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(f64, Vec<f64>)> {
    warp.validate()?;
    let n = y.len();
    if n == 0 || x.nrows() != n {
        return Err(Error::InvalidInput("input/target length mismatch".into()));
    }
    let mut z = DVector::zeros(n);
    let mut log_jacobian = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let slope = warp.slope(*yi);
        if !(slope > 0.0) {
            return Err(Error::DegenerateWarp(format!(
                "g'(y) = {slope} at training row {i}"
            )));
        }
        z[i] = warp.value(*yi);
        log_jacobian += slope.ln();
    }
    let z_mean = z.mean();
    let zc = z.add_scalar(-z_mean);
    let ev = gp::evidence(kernel, x, &zc)?;

    let kp = kernel.n_params();
    let mut gradient = ev.gradient;
    gradient.resize(kp + warp.n_params(), 0.0);
    let alpha_mean = ev.alpha.mean();
    let warp_grad = &mut gradient[kp..];
    for (i, yi) in y.iter().enumerate() {
        warp.accumulate_raw_gradient(*yi, -(ev.alpha[i] - alpha_mean), 1.0, warp_grad);
    }
    Ok((ev.value + log_jacobian, gradient))
}

#[derive(Debug, Clone)]
pub struct WgpModel {
    gp: GpModel,
    warp: Arc<WarpParams>,
    scaling: TargetScaling,
    /// `g(scaling(y))` for the training targets.
    latent: DVector<f64>,
}

/// Diagnostics of the GP pre-fit and the joint fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WgpFitReport {
    pub gp_prefit: FitReport,
    pub joint: FitReport,
}

impl WgpModel {
    /// Builds a model with fixed parameters and no input standardization.
    pub fn condition(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        kernel: KernelParams,
        warp: WarpParams,
        scaling: TargetScaling,
    ) -> Result<Self> {
        Self::assemble(
            x.clone(),
            y,
            kernel,
            warp,
            scaling,
            Standardization::identity(x.ncols()),
        )
    }

    fn assemble(
        x_std: DMatrix<f64>,
        y: &DVector<f64>,
        kernel: KernelParams,
        warp: WarpParams,
        scaling: TargetScaling,
        standardization: Standardization,
    ) -> Result<Self> {
        warp.validate()?;
        let mut latent = DVector::zeros(y.len());
        for (i, yi) in y.iter().enumerate() {
            latent[i] = warp.forward(scaling.apply(*yi))?;
        }
        let mean = latent.mean();
        let gp = GpModel::assemble(
            x_std,
            latent.add_scalar(-mean),
            mean,
            kernel,
            standardization,
            None,
        )?;
        Ok(Self {
            gp,
            warp: Arc::new(warp),
            scaling,
            latent,
        })
    }

    pub fn latent_model(&self) -> &GpModel {
        &self.gp
    }

    pub fn warp(&self) -> &WarpParams {
        &self.warp
    }

    pub fn scaling(&self) -> TargetScaling {
        self.scaling
    }

    pub fn latent_targets(&self) -> &DVector<f64> {
        &self.latent
    }

    /// Joint log-likelihood at the stored parameters, in scaled target units.
    pub fn log_likelihood(&self) -> f64 {
        let jac: f64 = self
            .latent_inputs()
            .iter()
            .map(|y| self.warp.slope(*y).ln())
            .sum();
        self.gp.log_evidence() + jac
    }

    fn latent_inputs(&self) -> Vec<f64> {
        self.latent
            .iter()
            .map(|z| self.warp.inverse(*z).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn predict(&self, x_test: &DMatrix<f64>) -> Result<Vec<WarpedPredictive>> {
        Ok(self
            .gp
            .predict(x_test)?
            .into_iter()
            .map(|p| WarpedPredictive {
                latent_mean: p.mean,
                latent_std: p.std_dev(),
                warp: Arc::clone(&self.warp),
                scaling: self.scaling,
            })
            .collect())
    }

    pub fn to_document(&self) -> WgpDocument {
        WgpDocument {
            gp: self.gp.to_document(),
            warp: (*self.warp).clone(),
            target_scaling: self.scaling,
            latent_targets: self.latent.iter().copied().collect(),
        }
    }

    pub fn from_document(doc: &WgpDocument) -> Result<Self> {
        doc.warp.validate()?;
        let gp = GpModel::from_document(&doc.gp)?;
        if doc.latent_targets.len() != gp.n_train() {
            return Err(Error::Schema("latent target count mismatch".into()));
        }
        Ok(Self {
            gp,
            warp: Arc::new(doc.warp.clone()),
            scaling: doc.target_scaling,
            latent: DVector::from_vec(doc.latent_targets.clone()),
        })
    }
}

/// Serialized [`WgpModel`]: the latent GP document plus warp and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WgpDocument {
    pub gp: GpDocument,
    pub warp: WarpParams,
    pub target_scaling: TargetScaling,
    pub latent_targets: Vec<f64>,
}

pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, config: &WgpConfig) -> Result<WgpModel> {
    fit_with_report(x, y, config).map(|(m, _)| m)
}

/// Fits a GP to the scaled targets first, then maximizes the joint
/// likelihood starting from that solution with a near-identity warp.
pub fn fit_with_report(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &WgpConfig,
) -> Result<(WgpModel, WgpFitReport)> {
    config.fit.validate()?;
    if config.steps == 0 {
        return Err(Error::InvalidInput("warp needs at least one step".into()));
    }
    gp::check_training_data(x, y, 2)?;
    let scaling = TargetScaling::from_targets(y);
    let ys = y.map(|v| scaling.apply(v));

    let (prefit, gp_prefit) = gp::fit_with_report(x, &ys, &config.fit)?;
    let standardization = prefit.standardization().clone();
    let xs = prefit.training_inputs().clone();

    let mut init = prefit.kernel_params().to_log_vec();
    init.extend(WarpParams::near_identity(config.steps, config.include_identity).to_raw_vec());
    let starts = optimize::restart_points(&init, &config.fit, 1.0);
    let kp = prefit.kernel_params().n_params();
    let include_identity = config.include_identity;
    let steps = config.steps;
    let objective = |theta: &[f64]| {
        gp::log_params_in_range(&theta[..kp])?;
        gp::log_params_in_range(&theta[kp..])?;
        if theta[kp..kp + steps].iter().any(|v| *v > LOG_STEP_SIZE_LIMIT) {
            return Err(Error::InvalidInput("warp step size outside search box".into()));
        }
        let kernel = KernelParams::from_log_slice(&theta[..kp]);
        let warp = WarpParams::from_raw_slice(&theta[kp..], include_identity);
        wgp_log_likelihood(&kernel, &warp, &xs, &ys)
    };
    let (best, restarts) = optimize::multi_start(objective, &starts, &config.fit)?;
    let best_restart = restarts
        .iter()
        .position(|r| r.final_value == Some(best.value))
        .unwrap_or(0);
    let kernel = KernelParams::from_log_slice(&best.params[..kp]);
    let warp = WarpParams::from_raw_slice(&best.params[kp..], include_identity);
    let model = WgpModel::assemble(xs, y, kernel, warp, scaling, standardization)?;
    let report = WgpFitReport {
        gp_prefit,
        joint: FitReport {
            log_evidence: best.value,
            best_restart,
            restarts,
            trace: best.trace,
        },
    };
    Ok((model, report))
}

/// Latent Gaussian `N(μ*, σ*²)` at one test point, with accessors for the
/// induced distribution in original target units.
#[derive(Debug, Clone)]
pub struct WarpedPredictive {
    pub latent_mean: f64,
    pub latent_std: f64,
    warp: Arc<WarpParams>,
    scaling: TargetScaling,
}

impl WarpedPredictive {
    /// Maps a latent value to target units: `unscale(g⁻¹(z))`.
    pub fn to_output(&self, z: f64) -> Result<f64> {
        match self.warp.inverse(z) {
            Ok(y) => Ok(self.scaling.invert(y)),
            Err(Error::Range { .. }) => Err(Error::DegenerateWarp(format!(
                "latent value {z} lies outside the warp range"
            ))),
            Err(e) => Err(e),
        }
    }

    /// `g⁻¹(μ*)` in original units.
    pub fn median(&self) -> Result<f64> {
        self.to_output(self.latent_mean)
    }

    /// `g⁻¹(μ* + σ* Φ⁻¹(q))` in original units.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidInput(format!(
                "quantile level {q} outside (0, 1)"
            )));
        }
        if q == 0.5 {
            return self.median();
        }
        self.to_output(self.latent_mean + self.latent_std * quadrature::normal_quantile(q))
    }

    /// Predictive mean by Gauss–Hermite quadrature of order 20.
    pub fn mean(&self) -> Result<f64> {
        self.mean_with_order(QUADRATURE_ORDER)
    }

    pub fn mean_with_order(&self, order: usize) -> Result<f64> {
        let rule = quadrature::rule(order);
        let mut failure = None;
        let m = rule.expect(self.latent_mean, self.latent_std, |z| {
            self.to_output(z).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(m),
        }
    }

    /// Relative change of the quadrature mean when the order is doubled
    /// from 20 to 40.
    pub fn quadrature_gap(&self) -> Result<f64> {
        let a = self.mean_with_order(QUADRATURE_ORDER)?;
        let b = self.mean_with_order(2 * QUADRATURE_ORDER)?;
        Ok((a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
    }

    /// Predictive standard deviation by quadrature.
    pub fn std_dev(&self) -> Result<f64> {
        let rule = quadrature::rule(QUADRATURE_ORDER);
        let mean = self.mean()?;
        let mut failure = None;
        let second = rule.expect(self.latent_mean, self.latent_std, |z| {
            match self.to_output(z) {
                Ok(y) => (y - mean).powi(2),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(second.max(0.0).sqrt()),
        }
    }

    /// Predictive density at `y` (original units).
    pub fn density(&self, y: f64) -> f64 {
        let ys = self.scaling.apply(y);
        let z = self.warp.value(ys);
        let slope = self.warp.slope(ys);
        quadrature::normal_pdf(z, self.latent_mean, self.latent_std) * slope / self.scaling.scale
    }
}
