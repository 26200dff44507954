//! Family-agnostic fitting and prediction over plain GP and warped GP.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Transform;
use crate::error::{Error, Result};
use crate::gp::{self, GpDocument, GpModel};
use crate::quadrature;
use crate::wgp::{self, WgpConfig, WgpDocument, WgpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Gp,
    Wgp,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Gp => "gp",
            ModelFamily::Wgp => "wgp",
        })
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp" => Ok(Self::Gp),
            "wgp" => Ok(Self::Wgp),
            _ => Err(Error::InvalidInput(format!("unknown model family '{s}'"))),
        }
    }
}

/// Which summary of the predictive distribution is used as the point
/// prediction. For a plain GP both coincide.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointEstimate {
    #[default]
    Median,
    Mean,
}

impl FromStr for PointEstimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Self::Median),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::InvalidInput(format!("unknown point estimate '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Gp(GpModel),
    Wgp(WgpModel),
}

/// Summary of one predictive distribution in target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PredictionSummary {
    pub fn point(&self, estimate: PointEstimate) -> f64 {
        match estimate {
            PointEstimate::Median => self.median,
            PointEstimate::Mean => self.mean,
        }
    }
}

pub fn fit(family: ModelFamily, x: &DMatrix<f64>, y: &DVector<f64>, config: &WgpConfig) -> Result<FittedModel> {
    Ok(match family {
        ModelFamily::Gp => FittedModel::Gp(gp::fit(x, y, &config.fit)?),
        ModelFamily::Wgp => FittedModel::Wgp(wgp::fit(x, y, config)?),
    })
}

impl FittedModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            FittedModel::Gp(_) => ModelFamily::Gp,
            FittedModel::Wgp(_) => ModelFamily::Wgp,
        }
    }

    /// Log evidence (GP) or joint log-likelihood (WGP, scaled target units).
    pub fn log_likelihood(&self) -> f64 {
        match self {
            FittedModel::Gp(m) => m.log_evidence(),
            FittedModel::Wgp(m) => m.log_likelihood(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FittedModel::Gp(m) => m.dim(),
            FittedModel::Wgp(m) => m.latent_model().dim(),
        }
    }

    /// Median, mean, standard deviation and the `(lower_q, upper_q)`
    /// quantile pair, in the units the data had before `transforms` were
    /// applied. Quantiles map exactly through the monotone transforms; mean
    /// and standard deviation are recomputed by quadrature.
    pub fn summaries(
        &self,
        x: &DMatrix<f64>,
        lower_q: f64,
        upper_q: f64,
        transforms: &[Transform],
    ) -> Result<Vec<PredictionSummary>> {
        for q in [lower_q, upper_q] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidInput(format!("quantile level {q} outside (0, 1)")));
            }
        }
        let (zl, zu) = (quadrature::normal_quantile(lower_q), quadrature::normal_quantile(upper_q));
        match self {
            FittedModel::Gp(m) if transforms.is_empty() => Ok(m
                .predict(x)?
                .into_iter()
                .map(|p| {
                    let sd = p.std_dev();
                    PredictionSummary {
                        median: p.mean,
                        mean: p.mean,
                        std: sd,
                        lower: p.mean + zl * sd,
                        upper: p.mean + zu * sd,
                    }
                })
                .collect()),
            FittedModel::Wgp(m) if transforms.is_empty() => m
                .predict(x)?
                .iter()
                .map(|p| {
                    Ok(PredictionSummary {
                        median: p.median()?,
                        mean: p.mean()?,
                        std: p.std_dev()?,
                        lower: p.quantile(lower_q)?,
                        upper: p.quantile(upper_q)?,
                    })
                })
                .collect(),
            FittedModel::Gp(m) => m
                .predict(x)?
                .iter()
                .map(|p| {
                    summarize(p.mean, p.std_dev(), zl, zu, is_decreasing(transforms), |z| {
                        Ok(original_units(z, transforms))
                    })
                })
                .collect(),
            FittedModel::Wgp(m) => m
                .predict(x)?
                .iter()
                .map(|p| {
                    summarize(p.latent_mean, p.latent_std, zl, zu, is_decreasing(transforms), |z| {
                        Ok(original_units(p.to_output(z)?, transforms))
                    })
                })
                .collect(),
        }
    }

    /// Point predictions in the units the data had before `transforms`.
    pub fn point_predictions(
        &self,
        x: &DMatrix<f64>,
        estimate: PointEstimate,
        transforms: &[Transform],
    ) -> Result<Vec<f64>> {
        match (self, estimate, transforms.is_empty()) {
            (FittedModel::Gp(m), _, true) => Ok(m.predict(x)?.into_iter().map(|p| p.mean).collect()),
            (FittedModel::Wgp(m), PointEstimate::Median, _) => m
                .predict(x)?
                .iter()
                .map(|p| Ok(original_units(p.median()?, transforms)))
                .collect(),
            (FittedModel::Gp(m), PointEstimate::Median, false) => Ok(m
                .predict(x)?
                .into_iter()
                .map(|p| original_units(p.mean, transforms))
                .collect()),
            _ => Ok(self
                .summaries(x, 0.25, 0.75, transforms)?
                .iter()
                .map(|s| s.mean)
                .collect()),
        }
    }

    pub fn to_document(&self, feature_names: Vec<String>, target_name: String, transforms: Vec<Transform>) -> ModelDocument {
        ModelDocument {
            feature_names,
            target_name,
            target_transforms: transforms,
            model: match self {
                FittedModel::Gp(m) => ModelBody::Gp(m.to_document()),
                FittedModel::Wgp(m) => ModelBody::Wgp(m.to_document()),
            },
        }
    }
}

/// True when undoing `transforms` reverses order.
fn is_decreasing(transforms: &[Transform]) -> bool {
    transforms
        .iter()
        .filter(|t| matches!(t, Transform::Power(p) if *p < 0.0))
        .count()
        % 2
        == 1
}

/// Undoes `transforms` (oldest first) on a value in transformed units.
pub fn original_units(value: f64, transforms: &[Transform]) -> f64 {
    transforms.iter().rev().fold(value, |v, t| t.inverse(v))
}

/// Summary of `h(Z)` for `Z ~ N(mean, std²)` and a monotone map `h`.
fn summarize<H>(mean: f64, std: f64, zl: f64, zu: f64, decreasing: bool, h: H) -> Result<PredictionSummary>
where
    H: Fn(f64) -> Result<f64>,
{
    let rule = quadrature::rule(wgp::QUADRATURE_ORDER);
    let mut values = Vec::with_capacity(rule.order());
    for t in &rule.nodes {
        values.push(h(mean + std::f64::consts::SQRT_2 * std * t)?);
    }
    let norm = std::f64::consts::PI.sqrt();
    let m = values.iter().zip(&rule.weights).map(|(v, w)| w * v).sum::<f64>() / norm;
    let var = values
        .iter()
        .zip(&rule.weights)
        .map(|(v, w)| w * (v - m) * (v - m))
        .sum::<f64>()
        / norm;
    // Under a decreasing map the q-quantile comes from the (1 - q) tail.
    let sign = if decreasing { -1.0 } else { 1.0 };
    let lower = h(mean + sign * zl * std)?;
    let upper = h(mean + sign * zu * std)?;
    Ok(PredictionSummary {
        median: h(mean)?,
        mean: m,
        std: var.max(0.0).sqrt(),
        lower,
        upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelBody {
    Gp(GpDocument),
    Wgp(WgpDocument),
}

/// Serialized model together with the column names and target transforms
/// needed to apply it to new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub target_transforms: Vec<Transform>,
    pub model: ModelBody,
}

impl ModelDocument {
    pub fn load(&self) -> Result<FittedModel> {
        let m = match &self.model {
            ModelBody::Gp(d) => FittedModel::Gp(GpModel::from_document(d)?),
            ModelBody::Wgp(d) => FittedModel::Wgp(WgpModel::from_document(d)?),
        };
        if m.dim() != self.feature_names.len() {
            return Err(Error::Schema("feature names do not match model dimension".into()));
        }
        Ok(m)
    }
}
