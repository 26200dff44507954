use std::io::Cursor;

use warpgp::data::{self, load_csv_reader, synth_warped_gp, Transform};
use warpgp::eval::{self, kfold_eval, repeated_split_eval, roc_auc};
use warpgp::model::{self, ModelDocument};
use warpgp::{
    causal, hsic, EvalConfig, FitConfig, ModelFamily, PointEstimate, WarpScenario, WgpConfig,
};

fn quick() -> WgpConfig {
    WgpConfig {
        fit: FitConfig {
            restarts: 1,
            max_iterations: 200,
            ..FitConfig::default()
        },
        ..WgpConfig::default()
    }
}

#[test]
fn wgp_document_round_trip_predicts_identically() {
    let (ds, _) = synth_warped_gp(60, 3, WarpScenario::Exponential).unwrap();
    let fitted = model::fit(ModelFamily::Wgp, &ds.features, &ds.target, &quick()).unwrap();
    let doc = fitted.to_document(ds.feature_names.clone(), ds.target_name.clone(), vec![]);
    let text = serde_json::to_string(&doc).unwrap();
    let back: ModelDocument = serde_json::from_str(&text).unwrap();
    let reloaded = back.load().unwrap();

    let a = fitted.summaries(&ds.features, 0.1, 0.9, &[]).unwrap();
    let b = reloaded.summaries(&ds.features, 0.1, 0.9, &[]).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.median, q.median);
        assert_eq!(p.lower, q.lower);
        assert_eq!(p.upper, q.upper);
        assert!(p.lower <= p.median && p.median <= p.upper);
    }
}

#[test]
fn summaries_under_log_transform_stay_positive() {
    let (ds, _) = synth_warped_gp(50, 5, WarpScenario::Exponential).unwrap();
    let logged = data::apply_transform(&ds, Transform::Log).unwrap();
    let fitted = model::fit(ModelFamily::Gp, &logged.features, &logged.target, &quick()).unwrap();
    let s = fitted.summaries(&logged.features, 0.025, 0.975, &[Transform::Log]).unwrap();
    for p in &s {
        assert!(p.lower > 0.0 && p.lower < p.median && p.median < p.upper);
        // lognormal: mean sits above the median
        assert!(p.mean > p.median);
    }
}

#[test]
fn csv_to_eval_report() {
    let mut text = String::from("# comment line\nx,y\n");
    for i in 0..30 {
        let x = i as f64 / 10.0;
        text.push_str(&format!("{x},{}\n", (x * 1.3).sin() + 0.05 * (i % 3) as f64));
    }
    let ds = load_csv_reader(Cursor::new(text), "inline", "y", &["x".to_string()]).unwrap();
    assert_eq!(ds.n_rows(), 30);

    let config = EvalConfig {
        model: quick(),
        point: PointEstimate::Median,
    };
    let report = repeated_split_eval(&ds, 0.5, 3, ModelFamily::Gp, &config, 7).unwrap();
    assert_eq!(report.runs.len(), 3);
    assert!(report.mean.as_ref().unwrap().rmse < 0.5);
    let again = repeated_split_eval(&ds, 0.5, 3, ModelFamily::Gp, &config, 7).unwrap();
    assert_eq!(report, again);

    let folds = kfold_eval(&ds, 5, ModelFamily::Gp, &config, 1).unwrap();
    assert_eq!(folds.runs.iter().map(|r| r.test_size).sum::<usize>(), 30);
    assert!(folds.pooled.is_some());
}

#[test]
fn causal_scores_feed_roc() {
    let pairs = data::synth_anm_pairs(4, 80, 2);
    let config = warpgp::CausalConfig {
        model: quick(),
        ..Default::default()
    };
    let scores = causal::score_collection(&pairs, ModelFamily::Gp, &config);
    assert_eq!(scores.scores().count(), 4);
    for s in scores.scores() {
        assert_eq!(s.score, s.hsic_forward - s.hsic_backward);
    }
    let owned: Vec<_> = scores.scores().cloned().collect();
    let (labels, conf) = causal::roc_inputs(owned.iter(), warpgp::RocConvention::Signed);
    if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
        let roc = roc_auc(&labels, &conf).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }
}

#[test]
fn hsic_separates_dependent_from_shuffled() {
    let x: Vec<f64> = (0..120).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mut shuffled = y.clone();
    shuffled.rotate_left(61);
    let dep = hsic::hsic_statistic(&x, &y, None).unwrap().statistic;
    let thr = hsic::permutation_threshold(&x, &y, 0.05, 100, 0).unwrap();
    assert!(dep > thr);
    let weak = hsic::hsic_statistic(&x, &shuffled, None).unwrap().statistic;
    assert!(weak < dep);
}

#[test]
fn split_sizes_follow_rate() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let (train, test) = eval::rate_split(50, 0.2, &mut rng).unwrap();
    assert_eq!((train.len(), test.len()), (10, 40));
}
