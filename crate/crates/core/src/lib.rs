//! Gaussian process and warped Gaussian process regression, with HSIC-based
//! cause-effect scoring and evaluation protocols.

pub mod causal;
pub mod data;
pub mod error;
pub mod eval;
pub mod gp;
pub mod hsic;
pub mod kernel;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod warp;
pub mod wgp;

pub use causal::{CausalConfig, CausalPair, CausalScore, Direction, RocConvention};
pub use data::{Dataset, Transform, WarpScenario};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport, MetricReport, RocCurve};
pub use gp::{GpModel, PredictiveDist};
pub use hsic::HsicResult;
pub use kernel::KernelParams;
pub use model::{FittedModel, ModelDocument, ModelFamily, PointEstimate, PredictionSummary};
pub use optimize::FitConfig;
pub use warp::WarpParams;
pub use wgp::{WarpedPredictive, WgpConfig, WgpModel};

pub use nalgebra::{DMatrix, DVector};
