//! Cause-effect direction scoring with additive-noise models.
//!
//! Each direction is fitted with the chosen regressor and scored by the HSIC
//! between the putative cause and the residuals `observed - prediction`. The
//! direction with the more independent residuals wins.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsic;
use crate::model::{self, ModelFamily, PointEstimate};
use crate::wgp::WgpConfig;

pub const MIN_PAIR_SAMPLES: usize = 20;
pub const DEFAULT_SUBSAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "x->y")]
    XToY,
    #[serde(rename = "y->x")]
    YToX,
    #[serde(rename = "unknown")]
    Unknown,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::XToY => Direction::YToX,
            Direction::YToX => Direction::XToY,
            Direction::Unknown => Direction::Unknown,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XToY => "x->y",
            Direction::YToX => "y->x",
            Direction::Unknown => "unknown",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x->y" => Ok(Self::XToY),
            "y->x" => Ok(Self::YToX),
            "unknown" => Ok(Self::Unknown),
            _ => Err(Error::InvalidInput(format!("unknown direction '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalPair {
    pub id: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ground_truth: Direction,
}

impl CausalPair {
    pub fn new(id: impl Into<String>, x: Vec<f64>, y: Vec<f64>, ground_truth: Direction) -> Self {
        Self {
            id: id.into(),
            x,
            y,
            ground_truth,
        }
    }

    /// The same pair with the variables exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            id: self.id.clone(),
            x: self.y.clone(),
            y: self.x.clone(),
            ground_truth: self.ground_truth.flipped(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::InvalidInput(format!("pair {}: unequal lengths", self.id)));
        }
        if self.x.len() < MIN_PAIR_SAMPLES {
            return Err(Error::InvalidInput(format!(
                "pair {}: {} samples, need at least {MIN_PAIR_SAMPLES}",
                self.id,
                self.x.len()
            )));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("pair {}: non-finite value", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalConfig {
    pub model: WgpConfig,
    /// Pairs longer than this are subsampled without replacement.
    pub subsample: usize,
    /// Seed of the subsample draw.
    pub seed: u64,
}

impl Default for CausalConfig {
    fn default() -> Self {
        Self {
            model: WgpConfig::default(),
            subsample: DEFAULT_SUBSAMPLE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalScore {
    pub id: String,
    pub hsic_forward: f64,
    pub hsic_backward: f64,
    /// `hsic_forward - hsic_backward`; negative favours x -> y.
    pub score: f64,
    pub decided: Direction,
    pub truth: Direction,
}

/// Sorted row indices kept for a pair of length `n`. Depends only on `n`,
/// the cap and the seed, so both orientations of a pair see the same rows.
pub fn subsample_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

fn zscore(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    v.iter().map(|t| (t - m) / sd).collect()
}

/// HSIC between `cause` and the residuals of regressing `effect` on it.
fn residual_dependence(
    cause: &[f64],
    effect: &[f64],
    family: ModelFamily,
    config: &WgpConfig,
) -> Result<f64> {
    let n = cause.len();
    let x = DMatrix::from_column_slice(n, 1, cause);
    let y = DVector::from_column_slice(effect);
    let fitted = model::fit(family, &x, &y, config)?;
    let pred = fitted.point_predictions(&x, PointEstimate::Median, &[])?;
    let resid: Vec<f64> = effect.iter().zip(&pred).map(|(o, p)| o - p).collect();
    Ok(hsic::hsic_statistic(cause, &resid, None)?.statistic)
}

pub fn score_pair(pair: &CausalPair, family: ModelFamily, config: &CausalConfig) -> Result<CausalScore> {
    pair.validate()?;
    if config.subsample < MIN_PAIR_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "subsample cap must be at least {MIN_PAIR_SAMPLES}"
        )));
    }
    let keep = subsample_indices(pair.x.len(), config.subsample, config.seed);
    let x = zscore(&keep.iter().map(|&i| pair.x[i]).collect::<Vec<_>>());
    let y = zscore(&keep.iter().map(|&i| pair.y[i]).collect::<Vec<_>>());

    let (forward, backward) = rayon::join(
        || residual_dependence(&x, &y, family, &config.model),
        || residual_dependence(&y, &x, family, &config.model),
    );
    let hsic_forward = forward.map_err(|e| Error::ScoringFailure {
        direction: "x->y",
        source: Box::new(e),
    })?;
    let hsic_backward = backward.map_err(|e| Error::ScoringFailure {
        direction: "y->x",
        source: Box::new(e),
    })?;
    let score = hsic_forward - hsic_backward;
    let decided = if score < 0.0 {
        Direction::XToY
    } else if score > 0.0 {
        Direction::YToX
    } else {
        Direction::Unknown
    };
    Ok(CausalScore {
        id: pair.id.clone(),
        hsic_forward,
        hsic_backward,
        score,
        decided,
        truth: pair.ground_truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionScores {
    /// One entry per input pair, in input order.
    pub outcomes: Vec<std::result::Result<CausalScore, PairFailure>>,
    /// Indices of scored pairs by decreasing `|score|`, ties by input order.
    pub ranking: Vec<usize>,
}

impl CollectionScores {
    pub fn scores(&self) -> impl Iterator<Item = &CausalScore> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &PairFailure> {
        self.outcomes.iter().filter_map(|o| o.as_ref().err())
    }
}

pub fn score_collection(pairs: &[CausalPair], family: ModelFamily, config: &CausalConfig) -> CollectionScores {
    let outcomes: Vec<_> = pairs
        .par_iter()
        .map(|p| {
            score_pair(p, family, config).map_err(|e| PairFailure {
                id: p.id.clone(),
                error: e.to_string(),
            })
        })
        .collect();
    let mut ranking: Vec<usize> = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_ok())
        .map(|(i, _)| i)
        .collect();
    let magnitude = |i: usize| outcomes[i].as_ref().map(|s| s.score.abs()).unwrap_or(0.0);
    ranking.sort_by(|&a, &b| magnitude(b).total_cmp(&magnitude(a)).then(a.cmp(&b)));
    CollectionScores { outcomes, ranking }
}

/// How scored pairs are turned into labelled confidences for a ROC curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RocConvention {
    /// Label: ground truth is x -> y. Confidence: `-score`.
    #[default]
    Signed,
    /// Label: decided direction is correct. Confidence: `|score|`.
    Correctness,
}

impl FromStr for RocConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Self::Signed),
            "correctness" => Ok(Self::Correctness),
            _ => Err(Error::InvalidInput(format!("unknown ROC convention '{s}'"))),
        }
    }
}

/// Labels and confidences for pairs with a known direction.
pub fn roc_inputs<'a>(
    scores: impl IntoIterator<Item = &'a CausalScore>,
    convention: RocConvention,
) -> (Vec<bool>, Vec<f64>) {
    scores
        .into_iter()
        .filter(|s| s.truth != Direction::Unknown)
        .map(|s| match convention {
            RocConvention::Signed => (s.truth == Direction::XToY, -s.score),
            RocConvention::Correctness => (s.decided == s.truth, s.score.abs()),
        })
        .unzip()
}
