use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use warpgp::causal::{self, CausalConfig, RocConvention};
use warpgp::data::{self, Dataset, Transform};
use warpgp::eval::{self, EvalConfig, EvalReport, MetricReport};
use warpgp::gp::{self, FitReport};
use warpgp::model::{original_units, FittedModel, ModelDocument, ModelFamily, PointEstimate};
use warpgp::wgp::{self, WgpConfig};
use warpgp::{FitConfig, WarpScenario};

use crate::args::{
    CausalArgs, DataOpts, EvalArgs, FitArgs, ModelOpts, PredictArgs, SynthPairsArgs, SynthWarpedArgs,
};
use crate::config::{CliError, Resolved};
use crate::output::{num, Provenance, Staged};

const DEFAULT_OUT: &str = "out";
const DEFAULT_RATES: [f64; 3] = [0.2, 0.5, 0.8];
const WARP_CURVE_POINTS: usize = 101;

fn out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::usage(format!("--{flag} is required")))
}

/// Names the file in I/O errors, which otherwise carry only the OS message.
fn with_path<T>(r: warpgp::Result<T>, path: &Path) -> Result<T, CliError> {
    r.map_err(|e| match e {
        warpgp::Error::Io(io) => CliError::data(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn model_config(opts: &ModelOpts, seed: u64) -> Result<WgpConfig, CliError> {
    let defaults = WgpConfig::default();
    let cfg = WgpConfig {
        fit: FitConfig {
            restarts: opts.restarts.unwrap_or(defaults.fit.restarts),
            max_iterations: opts.max_iterations.unwrap_or(defaults.fit.max_iterations),
            relative_tolerance: opts.tolerance.unwrap_or(defaults.fit.relative_tolerance),
            seed,
        },
        steps: opts.warp_l.unwrap_or(defaults.steps),
        include_identity: opts.identity.unwrap_or(defaults.include_identity),
    };
    cfg.fit.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if cfg.steps == 0 {
        return Err(CliError::usage("--warp-L must be at least 1"));
    }
    Ok(cfg)
}

fn load_dataset(opts: &DataOpts) -> Result<Dataset, CliError> {
    let path = required(&opts.data, "data")?;
    let target = required(&opts.target, "target")?;
    let transforms = opts
        .transform
        .iter()
        .flatten()
        .map(|t| t.parse::<Transform>().map_err(|e| CliError::usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let features = opts.features.clone().unwrap_or_default();
    let mut ds = with_path(data::load_csv(path, target, &features), path)?;
    for t in transforms {
        ds = data::apply_transform(&ds, t)?;
    }
    Ok(ds)
}

fn metric_cells(m: Option<&MetricReport>) -> Vec<String> {
    match m {
        Some(m) => vec![num(m.me), num(m.rmse), num(m.mae), num(m.r), num(m.r2)],
        None => vec![num(f64::NAN); 5],
    }
}

/// RFC 4180 quoting for free-text cells.
fn text_cell(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct FitReportBody<'a> {
    family: ModelFamily,
    n_train: usize,
    n_test: usize,
    log_likelihood: f64,
    /// GP pre-fit (wgp only) and main fit diagnostics.
    #[serde(skip_serializing_if = "Option::is_none")]
    gp_prefit: Option<&'a FitReport>,
    fit: &'a FitReport,
    held_out: Option<MetricReport>,
}

pub fn fit(r: Resolved<FitArgs>) -> Result<(), CliError> {
    let a = &r.args;
    let seed = a.seed.unwrap_or(0);
    let family = a.model.unwrap_or(ModelFamily::Wgp);
    let rate = a.rate.unwrap_or(1.0);
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(CliError::usage(format!("--rate {rate} outside (0, 1]")));
    }
    let config = model_config(&a.opts, seed)?;
    let ds = load_dataset(&a.data)?;

    let (train, test) = if rate < 1.0 {
        let (tr, te) = eval::rate_split(ds.n_rows(), rate, &mut ChaCha8Rng::seed_from_u64(seed))?;
        (ds.subset(&tr), Some(ds.subset(&te)))
    } else {
        (ds.clone(), None)
    };
    let transforms = &ds.provenance.transforms;
    let (model, prefit, report) = match family {
        ModelFamily::Gp => {
            let (m, rep) = gp::fit_with_report(&train.features, &train.target, &config.fit)?;
            (FittedModel::Gp(m), None, rep)
        }
        ModelFamily::Wgp => {
            let (m, rep) = wgp::fit_with_report(&train.features, &train.target, &config)?;
            (FittedModel::Wgp(m), Some(rep.gp_prefit), rep.joint)
        }
    };
    let held_out = match &test {
        Some(te) => {
            let pred = model.point_predictions(&te.features, PointEstimate::Median, transforms)?;
            let truth: Vec<f64> = te.target.iter().map(|v| original_units(*v, transforms)).collect();
            Some(eval::metrics(&truth, &pred)?)
        }
        None => None,
    };
    let curve = match &model {
        FittedModel::Wgp(m) => {
            let scaling = m.scaling();
            let mut rows = Vec::with_capacity(WARP_CURVE_POINTS);
            for i in 0..WARP_CURVE_POINTS {
                let s = -1.0 + 2.0 * i as f64 / (WARP_CURVE_POINTS - 1) as f64;
                let g = m.warp().forward(s)?;
                let t = original_units(scaling.invert(s), transforms);
                rows.push(vec![num(t), num(s), num(g)]);
            }
            Some(rows)
        }
        FittedModel::Gp(_) => None,
    };
    let doc = model.to_document(ds.feature_names.clone(), ds.target_name.clone(), transforms.clone());

    let mut staged = Staged::new(&out_dir(&a.out), Provenance::new(&r, Some(seed)));
    staged.json("model.json", &doc)?;
    staged.json(
        "fit_report.json",
        &FitReportBody {
            family,
            n_train: train.n_rows(),
            n_test: test.as_ref().map_or(0, Dataset::n_rows),
            log_likelihood: model.log_likelihood(),
            gp_prefit: prefit.as_ref(),
            fit: &report,
            held_out,
        },
    )?;
    if let Some(rows) = curve {
        let notes = ["scaled: target mapped affinely onto [-1, 1] as in training; warped: g(scaled)".to_string()];
        staged.csv("warp_curve.csv", &notes, &["target", "scaled", "warped"], &rows);
    }
    staged.commit()
}

pub fn eval(r: Resolved<EvalArgs>) -> Result<(), CliError> {
    let a = &r.args;
    let seed = a.seed.unwrap_or(0);
    let family = a.model.unwrap_or(ModelFamily::Wgp);
    let config = EvalConfig {
        model: model_config(&a.opts, seed)?,
        point: a.point.unwrap_or_default(),
    };
    enum Plan {
        Rates(Vec<f64>, usize),
        Kfold(usize),
    }
    let plan = match a.protocol.as_deref().unwrap_or("rates") {
        "rates" => {
            let rates = a.rates.clone().unwrap_or_else(|| DEFAULT_RATES.to_vec());
            if rates.is_empty() || rates.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
                return Err(CliError::usage("--rates must be fractions in (0, 1)"));
            }
            let repeats = a.repeats.unwrap_or(eval::DEFAULT_REPEATS);
            if repeats == 0 {
                return Err(CliError::usage("--repeats must be at least 1"));
            }
            Plan::Rates(rates, repeats)
        }
        "kfold" => {
            let k = a.k.unwrap_or(4);
            if k < 2 {
                return Err(CliError::usage("--k must be at least 2"));
            }
            Plan::Kfold(k)
        }
        other => return Err(CliError::usage(format!("unknown protocol '{other}' (rates | kfold)"))),
    };
    let ds = load_dataset(&a.data)?;
    let reports: Vec<EvalReport> = match plan {
        Plan::Rates(rates, repeats) => rates
            .iter()
            .map(|&rate| eval::repeated_split_eval(&ds, rate, repeats, family, &config, seed))
            .collect::<Result<_, _>>()?,
        Plan::Kfold(k) => vec![eval::kfold_eval(&ds, k, family, &config, seed)?],
    };

    let mut summary = Vec::new();
    let mut runs = Vec::new();
    for rep in &reports {
        let scored = rep.runs.iter().filter(|r| r.metrics.is_some()).count();
        let mut row = vec![rep.protocol.clone(), family.to_string(), rep.runs.len().to_string(), scored.to_string()];
        let (mean, std) = (metric_cells(rep.mean.as_ref()), metric_cells(rep.std.as_ref()));
        for (m, s) in mean.into_iter().zip(std) {
            row.push(m);
            row.push(s);
        }
        summary.push(row);
        if let Some(p) = &rep.pooled {
            let mut row = vec![format!("{} pooled", rep.protocol), family.to_string(), "1".into(), "1".into()];
            for m in metric_cells(Some(p)) {
                row.push(m);
                row.push(String::new());
            }
            summary.push(row);
        }
        for run in &rep.runs {
            let mut row = vec![
                rep.protocol.clone(),
                run.index.to_string(),
                run.train_size.to_string(),
                run.test_size.to_string(),
            ];
            row.extend(metric_cells(run.metrics.as_ref()));
            row.push(run.metrics.map_or("false".into(), |m| m.r_defined.to_string()));
            runs.push(row);
        }
    }

    let notes = [format!("point estimate: {:?}", config.point).to_lowercase()];
    let mut staged = Staged::new(&out_dir(&a.out), Provenance::new(&r, Some(seed)));
    staged.csv(
        "eval_summary.csv",
        &notes,
        &[
            "protocol", "model", "runs", "scored_runs", "me_mean", "me_std", "rmse_mean", "rmse_std", "mae_mean",
            "mae_std", "r_mean", "r_std", "r2_mean", "r2_std",
        ],
        &summary,
    );
    staged.csv(
        "eval_runs.csv",
        &notes,
        &["protocol", "run", "train_size", "test_size", "me", "rmse", "mae", "r", "r2", "r_defined"],
        &runs,
    );
    staged.json("eval_report.json", &json!({ "point": config.point, "reports": reports }))?;
    staged.commit()
}

fn read_model(path: &Path) -> Result<ModelDocument, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read model {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::data(format!("model file: {e}")))?;
    if let Value::Object(m) = &mut v {
        m.remove("provenance");
    }
    serde_json::from_value(v).map_err(|e| CliError::data(format!("model file: {e}")))
}

pub fn predict(r: Resolved<PredictArgs>) -> Result<(), CliError> {
    let a = &r.args;
    let lq = a.lower_quantile.unwrap_or(0.025);
    let uq = a.upper_quantile.unwrap_or(0.975);
    if !(0.0 < lq && lq < uq && uq < 1.0) {
        return Err(CliError::usage("quantiles must satisfy 0 < lower < upper < 1"));
    }
    let threshold = a.threshold.unwrap_or(0.2);
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(CliError::usage("--threshold must be a non-negative number"));
    }
    let doc = read_model(required(&a.model_file, "model-file")?)?;
    let model = doc.load()?;
    let path = required(&a.data, "data")?;
    let table = with_path(data::load_features_csv(path, &doc.feature_names), path)?;

    let valid_rows: Vec<usize> = (0..table.valid.len()).filter(|&i| table.valid[i]).collect();
    let summaries = if valid_rows.is_empty() {
        Vec::new()
    } else {
        model.summaries(&table.features.select_rows(&valid_rows), lq, uq, &doc.target_transforms)?
    };
    let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    let stds: Vec<f64> = summaries.iter().map(|s| s.std).collect();
    let cv = eval::cv_ratio_mask(&means, &stds, threshold)?;

    let mut rows = Vec::with_capacity(table.valid.len());
    let mut next = 0;
    for (i, &ok) in table.valid.iter().enumerate() {
        let mut row = vec![i.to_string(), ok.to_string()];
        if ok {
            let s = &summaries[next];
            row.extend([s.median, s.mean, s.std, s.lower, s.upper, cv.ratios[next]].map(num));
            row.push(cv.mask[next].to_string());
            next += 1;
        } else {
            row.extend(std::iter::repeat_n(num(f64::NAN), 6));
            row.push("false".into());
        }
        rows.push(row);
    }

    let (ql, qu) = (format!("q{lq}"), format!("q{uq}"));
    let notes = [
        format!("target: {} ({} model)", doc.target_name, model.family()),
        format!("cv_ratio: std / |mean|; mask: cv_ratio < {threshold}"),
    ];
    let mut staged = Staged::new(&out_dir(&a.out), Provenance::new(&r, None));
    staged.csv(
        "predictions.csv",
        &notes,
        &["row", "valid", "median", "mean", "std", &ql, &qu, "cv_ratio", "mask"],
        &rows,
    );
    staged.json(
        "predict_summary.json",
        &json!({
            "rows": table.valid.len(),
            "valid_rows": valid_rows.len(),
            "threshold": threshold,
            "quantiles": [lq, uq],
            "pass_fraction": cv.pass_fraction,
        }),
    )?;
    staged.commit()
}

pub fn causal(r: Resolved<CausalArgs>) -> Result<(), CliError> {
    let a = &r.args;
    let seed = a.seed.unwrap_or(0);
    let regressors = a.regressor.clone().unwrap_or_else(|| vec![ModelFamily::Wgp]);
    if regressors.is_empty() {
        return Err(CliError::usage("--regressor needs at least one model family"));
    }
    let subsample = a.subsample.unwrap_or(causal::DEFAULT_SUBSAMPLE);
    if subsample < causal::MIN_PAIR_SAMPLES {
        return Err(CliError::usage(format!(
            "--subsample must be at least {}",
            causal::MIN_PAIR_SAMPLES
        )));
    }
    let convention = a.roc.unwrap_or_default();
    let config = CausalConfig {
        model: model_config(&a.opts, seed)?,
        subsample,
        seed,
    };
    let dir = required(&a.pairs, "pairs")?;
    let pairs = with_path(data::load_pair_directory(dir), dir)?;

    let mut staged = Staged::new(&out_dir(&a.out), Provenance::new(&r, Some(seed)));
    for family in regressors {
        let scored = causal::score_collection(&pairs, family, &config);
        let mut rank = vec![String::new(); pairs.len()];
        for (pos, &i) in scored.ranking.iter().enumerate() {
            rank[i] = (pos + 1).to_string();
        }
        let rows: Vec<Vec<String>> = scored
            .outcomes
            .iter()
            .zip(&pairs)
            .zip(rank)
            .map(|((o, p), rank)| match o {
                Ok(s) => vec![
                    text_cell(&s.id),
                    num(s.hsic_forward),
                    num(s.hsic_backward),
                    num(s.score),
                    s.decided.to_string(),
                    s.truth.to_string(),
                    rank,
                    String::new(),
                ],
                Err(f) => vec![
                    text_cell(&f.id),
                    num(f64::NAN),
                    num(f64::NAN),
                    num(f64::NAN),
                    String::new(),
                    p.ground_truth.to_string(),
                    rank,
                    text_cell(&f.error),
                ],
            })
            .collect();
        let (labels, conf) = causal::roc_inputs(scored.scores(), convention);
        let (roc, note) = match eval::roc_auc(&labels, &conf) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let convention_note = match convention {
            RocConvention::Signed => "roc: positive = true direction x->y, confidence = -score",
            RocConvention::Correctness => "roc: positive = decided direction correct, confidence = |score|",
        };
        let notes = [
            "residual: observed value minus predictive median of the fitted regressor".to_string(),
            "score: hsic_forward - hsic_backward; negative decides x->y".to_string(),
            format!("regressor: {family}; subsample cap: {subsample}"),
        ];
        staged.csv(
            &format!("scores_{family}.csv"),
            &notes,
            &["id", "hsic_forward", "hsic_backward", "score", "decided", "truth", "rank", "error"],
            &rows,
        );
        let roc_rows: Vec<Vec<String>> = roc
            .iter()
            .flat_map(|c| c.points.iter().map(|&(f, t)| vec![num(f), num(t)]))
            .collect();
        staged.csv(
            &format!("roc_{family}.csv"),
            &[convention_note.to_string()],
            &["fpr", "tpr"],
            &roc_rows,
        );
        staged.json(
            &format!("auc_{family}.json"),
            &json!({
                "regressor": family,
                "convention": convention,
                "auc": roc.as_ref().map(|c| c.auc),
                "auc_note": note,
                "pairs": pairs.len(),
                "scored": scored.scores().count(),
                "failed": scored.failures().count(),
                "with_truth": labels.len(),
                "correct": scored.scores().filter(|s| s.truth != warpgp::Direction::Unknown && s.decided == s.truth).count(),
            }),
        )?;
    }
    staged.commit()
}

pub fn synth_warped(r: Resolved<SynthWarpedArgs>) -> Result<(), CliError> {
    let a = &r.args;
    let seed = a.seed.unwrap_or(0);
    let n = a.n.unwrap_or(400);
    let scenario = a.scenario.unwrap_or(WarpScenario::Exponential);
    let (ds, record) = data::synth_warped_gp(n, seed, scenario)?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(&ds.target_name);
    let rows: Vec<Vec<String>> = (0..ds.n_rows())
        .map(|i| {
            let mut row: Vec<String> = ds.features.row(i).iter().map(|v| num(*v)).collect();
            row.push(num(ds.target[i]));
            row
        })
        .collect();
    let mut staged = Staged::new(&out_dir(&a.out), Provenance::new(&r, Some(seed)));
    staged.csv("data.csv", &[format!("scenario: {scenario:?}").to_lowercase()], &header, &rows);
    staged.json("generative.json", &record)?;
    staged.commit()
}

pub fn synth_pairs(r: Resolved<SynthPairsArgs>) -> Result<(), CliError> {
    let a = &r.args;
    let seed = a.seed.unwrap_or(0);
    let count = a.count.unwrap_or(50);
    let n = a.n.unwrap_or(300);
    if n < causal::MIN_PAIR_SAMPLES {
        return Err(CliError::usage(format!("--n must be at least {}", causal::MIN_PAIR_SAMPLES)));
    }
    let pairs = data::synth_anm_pairs(count, n, seed);
    let mut staged = Staged::new(&out_dir(&a.out), Provenance::new(&r, Some(seed)));
    for (name, body) in data::pair_directory_contents(&pairs) {
        staged.raw(&name, body.into_bytes());
    }
    staged.json("provenance.json", &json!({ "count": count, "n": n }))?;
    staged.commit()
}
