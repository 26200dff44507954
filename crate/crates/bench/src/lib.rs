//! Fixtures shared by the benchmarks.

use warpgp::data::{self, WarpScenario};
use warpgp::{DMatrix, DVector, FitConfig, WgpConfig};

/// Exponential-scenario regression data with `n` rows.
pub fn problem(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let (ds, _) = data::synth_warped_gp(n, 11, WarpScenario::Exponential).expect("synthetic data");
    (ds.features, ds.target)
}

/// Single-restart fit settings so a benchmark iteration is one optimizer run.
pub fn single_restart() -> WgpConfig {
    WgpConfig {
        fit: FitConfig { restarts: 1, ..FitConfig::default() },
        ..WgpConfig::default()
    }
}
