//! Regression metrics, split protocols, ROC/AUC and coefficient-of-variation masks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, ModelFamily, PointEstimate};
use crate::wgp::WgpConfig;

pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean error `mean(pred - true)`.
    pub me: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Pearson correlation; NaN when undefined.
    pub r: f64,
    /// Coefficient of determination; NaN when undefined.
    pub r2: f64,
    /// False when `y_true` or `y_pred` has zero variance and `r` is NaN.
    pub r_defined: bool,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput("metric inputs differ in length".into()));
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidInput("metrics need at least two values".into()));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in metric inputs".into()));
    }
    let n = y_true.len() as f64;
    let (mut se, mut sae, mut sse) = (0.0, 0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = p - t;
        se += e;
        sae += e.abs();
        sse += e * e;
    }
    let mt = y_true.iter().sum::<f64>() / n;
    let mp = y_pred.iter().sum::<f64>() / n;
    let (mut stt, mut spp, mut stp) = (0.0, 0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        stt += (t - mt) * (t - mt);
        spp += (p - mp) * (p - mp);
        stp += (t - mt) * (p - mp);
    }
    let r_defined = stt > 0.0 && spp > 0.0;
    let r = if r_defined {
        (stp / (stt.sqrt() * spp.sqrt())).clamp(-1.0, 1.0)
    } else {
        f64::NAN
    };
    Ok(MetricReport {
        me: se / n,
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        r,
        r2: if stt > 0.0 { 1.0 - sse / stt } else { f64::NAN },
        r_defined,
    })
}

/// Per-metric mean and sample standard deviation (0 for a single run).
fn aggregate(reports: &[MetricReport]) -> (MetricReport, MetricReport) {
    let k = reports.len() as f64;
    let stat = |f: fn(&MetricReport) -> f64| {
        let m = reports.iter().map(f).sum::<f64>() / k;
        let s = if reports.len() > 1 {
            (reports.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        (m, s)
    };
    let (me, me_s) = stat(|r| r.me);
    let (rmse, rmse_s) = stat(|r| r.rmse);
    let (mae, mae_s) = stat(|r| r.mae);
    let (r, r_s) = stat(|r| r.r);
    let (r2, r2_s) = stat(|r| r.r2);
    let defined = reports.iter().all(|r| r.r_defined);
    (
        MetricReport { me, rmse, mae, r, r2, r_defined: defined },
        MetricReport {
            me: me_s,
            rmse: rmse_s,
            mae: mae_s,
            r: r_s,
            r2: r2_s,
            r_defined: defined,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: WgpConfig,
    pub point: PointEstimate,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            model: WgpConfig::default(),
            point: PointEstimate::Median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Absent for k-fold folds with fewer than two test rows.
    pub metrics: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub family: ModelFamily,
    pub seed: u64,
    pub runs: Vec<RunRecord>,
    /// Mean and standard deviation over runs that have metrics.
    pub mean: Option<MetricReport>,
    pub std: Option<MetricReport>,
    /// Metrics of all out-of-fold predictions together (k-fold only).
    pub pooled: Option<MetricReport>,
}

/// Seeded shuffle of `0..n` split into a training part of `floor(rate n)`
/// rows and a test part with the rest.
pub fn rate_split(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidInput(format!("rate {rate} outside (0, 1)")));
    }
    let train = (rate * n as f64).floor() as usize;
    if train < 2 || n - train < 2 {
        return Err(Error::InvalidInput(format!(
            "rate {rate} on {n} rows leaves {train} training and {} test rows; need at least 2 each",
            n - train
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let test = idx.split_off(train);
    Ok((idx, test))
}

/// Fits on `train`, predicts `test`, and scores in the dataset's original
/// target units. Returns truth and predictions as well.
fn fit_and_predict(
    ds: &Dataset,
    train: &[usize],
    test: &[usize],
    family: ModelFamily,
    config: &EvalConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tr = ds.subset(train);
    let te = ds.subset(test);
    let fitted = model::fit(family, &tr.features, &tr.target, &config.model)?;
    let pred = fitted.point_predictions(&te.features, config.point, &ds.provenance.transforms)?;
    let truth = te.target.iter().map(|v| ds.to_original_units(*v)).collect();
    Ok((truth, pred))
}

pub fn repeated_split_eval(
    ds: &Dataset,
    rate: f64,
    repeats: usize,
    family: ModelFamily,
    config: &EvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    if repeats == 0 {
        return Err(Error::InvalidInput("need at least one repeat".into()));
    }
    let runs = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let (train, test) = rate_split(ds.n_rows(), rate, &mut rng)?;
            let (truth, pred) = fit_and_predict(ds, &train, &test, family, config)?;
            Ok(RunRecord {
                index: r,
                train_size: train.len(),
                test_size: test.len(),
                metrics: Some(metrics(&truth, &pred)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricReport> = runs.iter().filter_map(|r| r.metrics).collect();
    let (mean, std) = aggregate(&reports);
    Ok(EvalReport {
        protocol: format!("rate={rate}"),
        family,
        seed,
        runs,
        mean: Some(mean),
        std: Some(std),
        pooled: None,
    })
}

/// Seeded shuffle cut into `k` contiguous folds; the first `n mod k` folds
/// hold one extra row.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!("fold count {k} must lie in [2, {n}]")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

pub fn kfold_eval(ds: &Dataset, k: usize, family: ModelFamily, config: &EvalConfig, seed: u64) -> Result<EvalReport> {
    let n = ds.n_rows();
    let folds = kfold_indices(n, k, seed)?;
    if n - folds[0].len() < 2 {
        return Err(Error::InvalidInput("k-fold training sets need at least 2 rows".into()));
    }
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            let (truth, pred) = fit_and_predict(ds, &train, test, family, config)?;
            let m = if test.len() >= 2 { Some(metrics(&truth, &pred)?) } else { None };
            Ok((
                RunRecord {
                    index: f,
                    train_size: train.len(),
                    test_size: test.len(),
                    metrics: m,
                },
                truth,
                pred,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(k);
    let (mut all_truth, mut all_pred) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (run, t, p) in results {
        runs.push(run);
        all_truth.extend(t);
        all_pred.extend(p);
    }
    let reports: Vec<MetricReport> = runs.iter().filter_map(|r| r.metrics).collect();
    let (mean, std) = if reports.is_empty() {
        (None, None)
    } else {
        let (m, s) = aggregate(&reports);
        (Some(m), Some(s))
    };
    Ok(EvalReport {
        protocol: format!("kfold={k}"),
        family,
        seed,
        runs,
        mean,
        std,
        pooled: Some(metrics(&all_truth, &all_pred)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds from the highest confidence down; tied confidences form
/// one step. The area is the trapezoidal sum over the resulting points.
pub fn roc_auc(labels: &[bool], confidences: &[f64]) -> Result<RocCurve> {
    if labels.len() != confidences.len() {
        return Err(Error::InvalidInput("labels and confidences differ in length".into()));
    }
    if confidences.iter().any(|c| c.is_nan()) {
        return Err(Error::InvalidInput("NaN confidence".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput("ROC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let c = confidences[order[i]];
        while i < order.len() && confidences[order[i]] == c {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvMask {
    pub ratios: Vec<f64>,
    pub mask: Vec<bool>,
    pub pass_fraction: f64,
}

/// `ratio = std / |mean|`, kept where `ratio < threshold`. A zero mean gives
/// an infinite ratio that never passes.
pub fn cv_ratio_mask(means: &[f64], stds: &[f64], threshold: f64) -> Result<CvMask> {
    if means.len() != stds.len() {
        return Err(Error::InvalidInput("means and stds differ in length".into()));
    }
    if means.is_empty() {
        return Err(Error::InvalidInput("no predictions to mask".into()));
    }
    let ratios: Vec<f64> = means
        .iter()
        .zip(stds)
        .map(|(m, s)| if *m == 0.0 { f64::INFINITY } else { s / m.abs() })
        .collect();
    let mask: Vec<bool> = ratios
        .iter()
        .zip(means)
        .map(|(r, m)| *m != 0.0 && *r < threshold)
        .collect();
    let pass_fraction = mask.iter().filter(|m| **m).count() as f64 / mask.len() as f64;
    Ok(CvMask {
        ratios,
        mask,
        pass_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    /// `(concordant + ties / 2) / (positives * negatives)`.
    fn pair_counting_auc(labels: &[bool], conf: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in labels.iter().enumerate() {
                if *li && !*lj {
                    den += 1.0;
                    if conf[i] > conf[j] {
                        num += 1.0;
                    } else if conf[i] == conf[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn hand_computed_metrics() {
        let m = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.me, 0.0);
        assert!((m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.r2, 0.0);
        assert!(m.r.is_nan() && !m.r_defined);

        let p = metrics(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!((p.me, p.rmse, p.mae, p.r, p.r2), (0.0, 0.0, 0.0, 1.0, 1.0));

        let o = metrics(&[1.0, 2.0, 4.0], &[3.5, 4.5, 6.5]).unwrap();
        assert!((o.me - 2.5).abs() < 1e-12 && (o.rmse - 2.5).abs() < 1e-12);
        assert!((o.r - 1.0).abs() < 1e-12);

        let c = metrics(&[5.0, 5.0], &[4.0, 6.0]).unwrap();
        assert!(c.r.is_nan() && c.r2.is_nan() && !c.r_defined);
        assert!(metrics(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn metrics_permutation_invariant_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p: Vec<f64> = t.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let a = metrics(&t, &p).unwrap();
        let mut idx: Vec<usize> = (0..30).collect();
        idx.shuffle(&mut rng);
        let b = metrics(
            &idx.iter().map(|&i| t[i]).collect::<Vec<_>>(),
            &idx.iter().map(|&i| p[i]).collect::<Vec<_>>(),
        )
        .unwrap();
        for (u, v) in [(a.me, b.me), (a.rmse, b.rmse), (a.mae, b.mae), (a.r, b.r), (a.r2, b.r2)] {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(a.rmse >= a.mae && a.mae >= 0.0 && a.r2 <= 1.0);
    }

    #[test]
    fn fold_sizes_and_partition() {
        let folds = kfold_indices(135, 4, 3).unwrap();
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![34, 34, 34, 33]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..135).collect::<Vec<_>>());
        assert_eq!(kfold_indices(8, 8, 0).unwrap().len(), 8);
        assert!(kfold_indices(8, 9, 0).is_err());
        assert!(kfold_indices(8, 1, 0).is_err());
    }

    #[test]
    fn rate_split_floor_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tr, te) = rate_split(919, 0.8, &mut rng).unwrap();
        assert_eq!((tr.len(), te.len()), (735, 184));
        let (tr, _) = rate_split(919, 0.2, &mut rng).unwrap();
        assert_eq!(tr.len(), 183);
        assert!(rate_split(3, 0.5, &mut rng).is_err());
    }

    #[test]
    fn roc_fixtures() {
        let r = roc_auc(&[true, false, true, false], &[0.9, 0.8, 0.7, 0.1]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-12);
        assert_eq!(roc_auc(&[true, true, false], &[3.0, 2.0, 1.0]).unwrap().auc, 1.0);
        let flat = roc_auc(&[true, false, false, true], &[1.0; 4]).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(roc_auc(&[true, true], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn roc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=50 {
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            // Coarse grid to force ties.
            let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
            let got = roc_auc(&labels, &conf).unwrap();
            assert!((got.auc - pair_counting_auc(&labels, &conf)).abs() < 1e-12);
            assert_eq!(*got.points.last().unwrap(), (1.0, 1.0));
        }
    }

    #[test]
    fn cv_mask_fixtures() {
        let m = cv_ratio_mask(&[10.0, 10.0], &[1.0, 3.0], 0.2).unwrap();
        assert_eq!(m.ratios, vec![0.1, 0.3]);
        assert_eq!(m.mask, vec![true, false]);
        assert_eq!(m.pass_fraction, 0.5);
        assert_eq!(cv_ratio_mask(&[1.0, -2.0, 3.0], &[0.0; 3], 1e-9).unwrap().pass_fraction, 1.0);
        assert_eq!(cv_ratio_mask(&[1.0, 2.0], &[0.1, 0.1], 0.0).unwrap().pass_fraction, 0.0);
        let z = cv_ratio_mask(&[0.0, -5.0], &[0.0, 0.5], 0.2).unwrap();
        assert_eq!(z.ratios[0], f64::INFINITY);
        assert_eq!(z.mask, vec![false, true]);
    }

    fn linear_dataset(n: usize) -> Dataset {
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64 / n as f64 * 4.0 - 2.0);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 2.0 + (i as f64 * 1.7).sin() * 0.1);
        Dataset::new(x, y, vec!["x".into()], "y", "test").unwrap()
    }

    fn quick() -> EvalConfig {
        let mut c = EvalConfig::default();
        c.model.fit.restarts = 1;
        c
    }

    #[test]
    fn split_eval_determinism_and_single_repeat() {
        let ds = linear_dataset(30);
        let a = repeated_split_eval(&ds, 0.5, 3, ModelFamily::Gp, &quick(), 4).unwrap();
        let b = repeated_split_eval(&ds, 0.5, 3, ModelFamily::Gp, &quick(), 4).unwrap();
        assert_eq!(a, b);
        assert!(a.runs.iter().all(|r| r.train_size == 15));
        let one = repeated_split_eval(&ds, 0.5, 1, ModelFamily::Gp, &quick(), 4).unwrap();
        let s = one.std.unwrap();
        assert_eq!((s.me, s.rmse, s.mae, s.r, s.r2), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(a.mean.unwrap().r > 0.99);
    }

    #[test]
    fn leave_one_out_aggregates() {
        let ds = linear_dataset(8);
        let rep = kfold_eval(&ds, 8, ModelFamily::Gp, &quick(), 1).unwrap();
        assert_eq!(rep.runs.len(), 8);
        assert!(rep.runs.iter().all(|r| r.metrics.is_none() && r.test_size == 1));
        assert!(rep.mean.is_none());
        assert!(rep.pooled.unwrap().rmse.is_finite());
        let four = kfold_eval(&linear_dataset(30), 4, ModelFamily::Gp, &quick(), 1).unwrap();
        assert!(four.mean.is_some());
        assert_eq!(four.runs.iter().map(|r| r.test_size).sum::<usize>(), 30);
    }

    #[test]
    fn metrics_in_original_units_after_transform() {
        let mut ds = linear_dataset(20);
        ds.target.apply(|v| *v = v.exp());
        let logged = crate::data::apply_transform(&ds, crate::data::Transform::Log).unwrap();
        let (truth, _) = fit_and_predict(&logged, &[0, 2, 4, 6, 8, 10], &[1, 3], ModelFamily::Gp, &quick()).unwrap();
        assert!((truth[0] - ds.target[1]).abs() < 1e-12 * ds.target[1]);
    }
}
