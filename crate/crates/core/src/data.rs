//! Datasets: CSV ingestion, target transforms, synthetic generators and
//! cause-effect pair directories.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::causal::{CausalPair, Direction};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams};
use crate::warp::WarpParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "exponent")]
pub enum Transform {
    None,
    Log,
    Log10,
    Exp,
    Power(f64),
}

impl Transform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            Transform::None => y,
            Transform::Log => y.ln(),
            Transform::Log10 => y.log10(),
            Transform::Exp => y.exp(),
            Transform::Power(p) => y.powf(p),
        }
    }

    pub fn inverse(self, t: f64) -> f64 {
        match self {
            Transform::None => t,
            Transform::Log => t.exp(),
            Transform::Log10 => 10f64.powf(t),
            Transform::Exp => t.ln(),
            Transform::Power(p) => t.powf(1.0 / p),
        }
    }

    fn in_domain(self, y: f64) -> bool {
        match self {
            Transform::None => true,
            Transform::Log | Transform::Log10 => y > 0.0,
            Transform::Exp => y.exp().is_finite(),
            Transform::Power(p) if p > 0.0 => y >= 0.0,
            Transform::Power(_) => y > 0.0,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::None => f.write_str("none"),
            Transform::Log => f.write_str("log"),
            Transform::Log10 => f.write_str("log10"),
            Transform::Exp => f.write_str("exp"),
            Transform::Power(p) => write!(f, "power({p})"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "none" => return Ok(Transform::None),
            "log" => return Ok(Transform::Log),
            "log10" => return Ok(Transform::Log10),
            "exp" => return Ok(Transform::Exp),
            _ => {}
        }
        let p = s
            .strip_prefix("power(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("power:"))
            .ok_or_else(|| Error::InvalidInput(format!("unknown transform '{s}'")))?;
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad power exponent in '{s}'")))?;
        if p == 0.0 || !p.is_finite() {
            return Err(Error::InvalidInput("power exponent must be finite and non-zero".into()));
        }
        Ok(Transform::Power(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub dropped_rows: usize,
    /// Transforms applied to the target, oldest first.
    pub transforms: Vec<Transform>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub target: DVector<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        target: DVector<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() != target.len() {
            return Err(Error::InvalidInput("feature/target row mismatch".into()));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::InvalidInput("feature name count mismatch".into()));
        }
        if target.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite dataset entry".into()));
        }
        Ok(Self {
            features,
            target,
            feature_names,
            target_name: target_name.into(),
            provenance: Provenance {
                source: source.into(),
                dropped_rows: 0,
                transforms: Vec::new(),
            },
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows in the given order; provenance is carried over.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            target: self.target.select_rows(rows),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Maps values in the current target units back to the loaded units by
    /// undoing the transform log in reverse.
    pub fn to_original_units(&self, value: f64) -> f64 {
        crate::model::original_units(value, &self.provenance.transforms)
    }
}

pub fn load_csv(path: &Path, target: &str, features: &[String]) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, &path.display().to_string(), target, features)
}

/// Headered CSV. An empty feature list selects every non-target column in
/// file order. Rows with a missing, unparsable or non-finite selected value
/// are dropped and counted.
pub fn load_csv_reader<R: Read>(
    reader: R,
    source: &str,
    target: &str,
    features: &[String],
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let lookup = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found")))
    };
    let target_col = lookup(target)?;
    let feature_names: Vec<String> = if features.is_empty() {
        headers.iter().filter(|h| *h != target).cloned().collect()
    } else {
        features.to_vec()
    };
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns selected".into()));
    }
    let feature_cols = feature_names
        .iter()
        .map(|n| lookup(n))
        .collect::<Result<Vec<_>>>()?;

    let d = feature_cols.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    let parse = |rec: &csv::StringRecord, col: usize| {
        rec.get(col)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
    };
    for rec in rdr.records() {
        let rec = rec?;
        let y = parse(&rec, target_col);
        let row: Option<Vec<f64>> = feature_cols.iter().map(|&c| parse(&rec, c)).collect();
        match (y, row) {
            (Some(y), Some(row)) => {
                ys.push(y);
                xs.extend(row);
            }
            _ => dropped += 1,
        }
    }
    if ys.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ds = Dataset::new(
        DMatrix::from_row_slice(ys.len(), d, &xs),
        DVector::from_vec(ys),
        feature_names,
        target,
        source,
    )?;
    ds.provenance.dropped_rows = dropped;
    Ok(ds)
}

/// Feature rows for prediction. Every data row is kept so output lines up
/// with input; rows with a missing or non-finite value are flagged invalid
/// and filled with zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: DMatrix<f64>,
    pub valid: Vec<bool>,
}

pub fn load_features_csv(path: &Path, features: &[String]) -> Result<FeatureTable> {
    load_features_reader(std::fs::File::open(path)?, features)
}

pub fn load_features_reader<R: Read>(reader: R, features: &[String]) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if features.is_empty() {
        return Err(Error::Schema("no feature columns selected".into()));
    }
    let cols = features
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Schema(format!("column '{n}' not found")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut valid = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: Option<Vec<f64>> = cols
            .iter()
            .map(|&c| rec.get(c).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()))
            .collect();
        valid.push(row.is_some());
        xs.extend(row.unwrap_or_else(|| vec![0.0; cols.len()]));
    }
    Ok(FeatureTable {
        features: DMatrix::from_row_slice(valid.len(), cols.len(), &xs),
        valid,
    })
}

pub fn apply_transform(dataset: &Dataset, transform: Transform) -> Result<Dataset> {
    let bad: Vec<usize> = dataset
        .target
        .iter()
        .enumerate()
        .filter(|(_, y)| !transform.in_domain(**y))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Domain {
            transform: transform.to_string(),
            rows: bad,
        });
    }
    let mut out = dataset.clone();
    if transform != Transform::None {
        out.target.apply(|y| *y = transform.forward(*y));
        out.provenance.transforms.push(transform);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpScenario {
    Identity,
    Exponential,
    TanhSteps,
}

impl FromStr for WarpScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "exponential" | "exp" => Ok(Self::Exponential),
            "tanh-steps" | "tanh" => Ok(Self::TanhSteps),
            _ => Err(Error::InvalidInput(format!("unknown warp scenario '{s}'"))),
        }
    }
}

/// Parameters used to generate a synthetic warped-GP dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeRecord {
    pub scenario: WarpScenario,
    pub seed: u64,
    pub kernel: KernelParams,
    pub noise_std: f64,
    /// Latent function values at the inputs, before noise.
    pub latent: Vec<f64>,
    /// Forward warp for the tanh-steps scenario; the exponential scenario
    /// uses `g = ln` and identity uses `g(y) = y`.
    pub warp: Option<WarpParams>,
}

pub const SYNTH_INPUT_RANGE: (f64, f64) = (-3.0, 3.0);

fn tanh_steps_warp() -> WarpParams {
    WarpParams::new(vec![1.5, 1.5], vec![4.0, 4.0], vec![-2.0, 2.0], true)
        .expect("fixed warp is valid")
}

/// One-dimensional GP draw on uniform inputs, plus Gaussian noise, pushed
/// through the inverse of the scenario's warp.
pub fn synth_warped_gp(n: usize, seed: u64, scenario: WarpScenario) -> Result<(Dataset, GenerativeRecord)> {
    synth_warped_gp_with(n, seed, scenario, &SynthOptions::default())
}

/// Latent GP amplitude and noise for [`synth_warped_gp_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub signal_std: f64,
    pub noise_std: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            signal_std: 1.0,
            noise_std: 0.2,
        }
    }
}

pub fn synth_warped_gp_with(
    n: usize,
    seed: u64,
    scenario: WarpScenario,
    options: &SynthOptions,
) -> Result<(Dataset, GenerativeRecord)> {
    let SynthOptions { signal_std, noise_std } = *options;
    if !(noise_std > 0.0 && signal_std > 0.0 && noise_std.is_finite() && signal_std.is_finite()) {
        return Err(Error::InvalidInput("synthetic signal and noise std must be positive".into()));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = SYNTH_INPUT_RANGE;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let xm = DMatrix::from_column_slice(n, 1, &x);
    let params = KernelParams::new(signal_std * signal_std, vec![1.0], 1e-6 * signal_std * signal_std)?;
    let gram = kernel::gram(&params, &xm, true)?;
    let white = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let f = gram.cholesky.l() * white;
    let noise = Normal::new(0.0, noise_std).expect("positive std");
    let warp = (scenario == WarpScenario::TanhSteps).then(tanh_steps_warp);
    let mut y = Vec::with_capacity(n);
    for fi in f.iter() {
        let t = fi + noise.sample(&mut rng);
        y.push(match scenario {
            WarpScenario::Identity => t,
            WarpScenario::Exponential => t.exp(),
            WarpScenario::TanhSteps => warp.as_ref().unwrap().inverse(t)?,
        });
    }
    let ds = Dataset::new(
        xm,
        DVector::from_vec(y),
        vec!["x".into()],
        "y",
        format!("synth_warped_gp(n={n}, seed={seed}, scenario={scenario:?})"),
    )?;
    let record = GenerativeRecord {
        scenario,
        seed,
        kernel: params,
        noise_std,
        latent: f.iter().copied().collect(),
        warp,
    };
    Ok((ds, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Cubic,
    ExpDecay,
    SinusoidTrend,
}

impl Mechanism {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Mechanism::Cubic => x * x * x,
            Mechanism::ExpDecay => (-x).exp(),
            Mechanism::SinusoidTrend => (2.0 * x).sin() + 0.5 * x,
        }
    }
}

/// Non-Gaussian cause: uniform on (-2, 2) or an equal mixture of
/// `N(-1, 0.4²)` and `N(1, 0.4²)`.
fn draw_cause(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if rng.random_bool(0.5) {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    } else {
        (0..n)
            .map(|_| {
                let centre = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
                centre + 0.4 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }
}

/// Additive-noise pairs with recorded ground truth. Pair `i` draws from its
/// own stream so that the pairs do not depend on `count`.
pub fn synth_anm_pairs(count: usize, n: usize, seed: u64) -> Vec<CausalPair> {
    const MECHANISMS: [Mechanism; 3] = [Mechanism::Cubic, Mechanism::ExpDecay, Mechanism::SinusoidTrend];
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let cause = draw_cause(&mut rng, n);
            let mechanism = MECHANISMS[rng.random_range(0..MECHANISMS.len())];
            let f: Vec<f64> = cause.iter().map(|c| mechanism.apply(*c)).collect();
            let mean = f.iter().sum::<f64>() / n as f64;
            let sd = (f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let noise_sd = rng.random_range(0.1..0.3) * if sd > 0.0 { sd } else { 1.0 };
            let effect: Vec<f64> = f
                .iter()
                .map(|v| v + noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let id = format!("{:04}", i + 1);
            if rng.random_bool(0.5) {
                CausalPair::new(id, cause, effect, Direction::XToY)
            } else {
                CausalPair::new(id, effect, cause, Direction::YToX)
            }
        })
        .collect()
}

pub const PAIR_METADATA_FILE: &str = "pairmeta.txt";

fn pair_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("pair{id}.txt"))
}

/// Two whitespace- or comma-separated numeric columns per line; blank lines
/// and lines starting with `#` are skipped.
pub fn read_pair_values<R: BufRead>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|s| s.parse().ok()).collect();
        match parsed.as_deref() {
            Some([a, b]) if a.is_finite() && b.is_finite() => {
                x.push(*a);
                y.push(*b);
            }
            _ => {
                return Err(Error::Schema(format!(
                    "line {}: expected two numeric columns",
                    lineno + 1
                )))
            }
        }
    }
    Ok((x, y))
}

/// Reads a directory in the cause-effect-pairs layout: `pairmeta.txt` with
/// lines `id cause_first cause_last effect_first effect_last [weight]` and one
/// `pair<id>.txt` per pair. Only scalar pairs (column 1 vs column 2) get a
/// known direction; anything else is marked unknown.
pub fn load_pair_directory(dir: &Path) -> Result<Vec<CausalPair>> {
    let meta = std::fs::File::open(dir.join(PAIR_METADATA_FILE))?;
    let mut pairs = Vec::new();
    for (lineno, line) in std::io::BufReader::new(meta).lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        if fields.len() < 5 {
            return Err(Error::Schema(format!(
                "{PAIR_METADATA_FILE} line {}: expected at least 5 fields",
                lineno + 1
            )));
        }
        let cols: Vec<u32> = fields[1..5]
            .iter()
            .map(|s| s.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                Error::Schema(format!(
                    "{PAIR_METADATA_FILE} line {}: column indices must be integers",
                    lineno + 1
                ))
            })?;
        let truth = match cols.as_slice() {
            [1, 1, 2, 2] => Direction::XToY,
            [2, 2, 1, 1] => Direction::YToX,
            _ => Direction::Unknown,
        };
        let id = fields[0].to_string();
        let path = pair_file(dir, &id);
        let file = std::fs::File::open(&path).map_err(|e| {
            Error::Schema(format!("cannot open {}: {e}", path.display()))
        })?;
        let (x, y) = read_pair_values(std::io::BufReader::new(file))?;
        pairs.push(CausalPair::new(id, x, y, truth));
    }
    Ok(pairs)
}

/// Writes pairs in the layout read by [`load_pair_directory`].
/// File names and contents of a pair directory, metadata file last.
pub fn pair_directory_contents(pairs: &[CausalPair]) -> Vec<(String, String)> {
    let mut files = Vec::with_capacity(pairs.len() + 1);
    let mut meta = String::new();
    for p in pairs {
        let cols = match p.ground_truth {
            Direction::XToY => "1 1 2 2",
            Direction::YToX => "2 2 1 1",
            Direction::Unknown => "0 0 0 0",
        };
        meta.push_str(&format!("{} {cols} 1\n", p.id));
        let mut body = String::with_capacity(p.x.len() * 40);
        for (a, b) in p.x.iter().zip(&p.y) {
            body.push_str(&format!("{a:e} {b:e}\n"));
        }
        files.push((format!("pair{}.txt", p.id), body));
    }
    files.push((PAIR_METADATA_FILE.to_string(), meta));
    files
}

pub fn write_pair_directory(dir: &Path, pairs: &[CausalPair]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in pair_directory_contents(pairs) {
        std::fs::File::create(dir.join(name))?.write_all(body.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
rrs412,rrs443,rrs490,rrs510,rrs555,chl
0.1,0.2,0.3,0.4,0.5,1.5
0.2,0.3,0.4,0.5,0.6,0.019
0.3,NaN,0.5,0.6,0.7,2.0
0.4,0.5,0.6,0.7,0.8,32.79
0.5,0.6,0.7,0.8,0.9,3.0
";

    fn fixture() -> Dataset {
        load_csv_reader(FIXTURE.as_bytes(), "fixture", "chl", &[]).unwrap()
    }

    #[test]
    fn feature_table_keeps_every_row() {
        let text = "a,b,y\n1,2,3\n4,,6\n7,8,nan\n";
        let t = load_features_reader(text.as_bytes(), &["b".into(), "a".into()]).unwrap();
        assert_eq!(t.valid, vec![true, false, true]);
        assert_eq!(t.features.nrows(), 3);
        assert_eq!(t.features[(2, 0)], 8.0);
        assert_eq!(t.features[(2, 1)], 7.0);
        assert!(load_features_reader(text.as_bytes(), &["zz".into()]).is_err());
    }
    #[test]
    fn nan_row_dropped_and_counted() {
        let ds = fixture();
        assert_eq!(ds.n_rows(), 4);
        assert_eq!(ds.dim(), 5);
        assert_eq!(ds.provenance.dropped_rows, 1);
        assert_eq!(ds.target.as_slice(), &[1.5, 0.019, 32.79, 3.0]);
        assert_eq!(ds.features[(3, 4)], 0.9);
    }

    #[test]
    fn selection_by_name_ignores_column_order() {
        let permuted = "\
chl,rrs555,rrs443
1,5,2
7,6,3
";
        let original = "\
rrs443,chl,rrs555
2,1,5
3,7,6
";
        let sel = vec!["rrs443".to_string(), "rrs555".to_string()];
        let a = load_csv_reader(permuted.as_bytes(), "s", "chl", &sel).unwrap();
        let b = load_csv_reader(original.as_bytes(), "s", "chl", &sel).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.target, b.target);
        assert_eq!(a.feature_names, b.feature_names);
    }

    #[test]
    fn missing_column_and_empty_rows() {
        match load_csv_reader(FIXTURE.as_bytes(), "f", "kd490", &[]) {
            Err(Error::Schema(msg)) => assert!(msg.contains("kd490")),
            other => panic!("{other:?}"),
        }
        let sel = vec!["nope".to_string()];
        assert!(matches!(
            load_csv_reader(FIXTURE.as_bytes(), "f", "chl", &sel),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            load_csv_reader("a,b\nx,1\n".as_bytes(), "f", "b", &[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn transforms_round_trip_and_log() {
        let ds = fixture();
        assert_eq!(apply_transform(&ds, Transform::None).unwrap(), ds);
        for t in [Transform::Log, Transform::Log10, Transform::Power(0.5), Transform::Power(-2.0)] {
            let out = apply_transform(&ds, t).unwrap();
            assert_eq!(out.provenance.transforms, vec![t]);
            for (a, b) in ds.target.iter().zip(out.target.iter()) {
                assert!((out.to_original_units(*b) - a).abs() < 1e-12 * a.abs().max(1.0));
            }
        }
        let logged = apply_transform(&ds, Transform::Log).unwrap();
        let back = apply_transform(&logged, Transform::Exp).unwrap();
        for (a, b) in ds.target.iter().zip(back.target.iter()) {
            assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn domain_violation_lists_rows() {
        let mut ds = fixture();
        ds.target[1] = 0.0;
        ds.target[3] = -1.0;
        match apply_transform(&ds, Transform::Log) {
            Err(Error::Domain { rows, .. }) => assert_eq!(rows, vec![1, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transform_names_parse() {
        for t in [Transform::None, Transform::Log, Transform::Log10, Transform::Exp, Transform::Power(2.5)] {
            assert_eq!(t.to_string().parse::<Transform>().unwrap(), t);
        }
        assert!("power(0)".parse::<Transform>().is_err());
        assert!("sqrt".parse::<Transform>().is_err());
    }

    fn skewness(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
        m3 / m2.powf(1.5)
    }

    #[test]
    fn synthetic_scenarios() {
        let (a, rec) = synth_warped_gp(200, 3, WarpScenario::Exponential).unwrap();
        let (b, _) = synth_warped_gp(200, 3, WarpScenario::Exponential).unwrap();
        assert_eq!(a, b);
        assert_eq!(rec.latent.len(), 200);
        assert!(skewness(a.target.as_slice()) > 1.0);
        assert!(a.target.iter().all(|y| *y > 0.0));

        let (t, rec) = synth_warped_gp(100, 4, WarpScenario::TanhSteps).unwrap();
        let w = rec.warp.unwrap();
        for (y, f) in t.target.iter().zip(&rec.latent) {
            // Noise is 0.2, so the warped target stays near the latent draw.
            assert!((w.forward(*y).unwrap() - f).abs() < 1.5);
        }
    }

    /// Shapiro–Francia style check: squared correlation between the sorted
    /// sample and normal scores; 0.96 is well below the 1% point for n = 200.
    #[test]
    fn identity_scenario_residuals_look_gaussian() {
        let mut pass = 0;
        for seed in 0..10 {
            let (ds, rec) = synth_warped_gp(200, seed, WarpScenario::Identity).unwrap();
            let mut r: Vec<f64> = ds.target.iter().zip(&rec.latent).map(|(y, f)| y - f).collect();
            r.sort_by(f64::total_cmp);
            let n = r.len();
            let scores: Vec<f64> = (0..n)
                .map(|i| crate::quadrature::normal_quantile((i as f64 + 1.0 - 0.375) / (n as f64 + 0.25)))
                .collect();
            let mr = r.iter().sum::<f64>() / n as f64;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (a, b) in r.iter().zip(&scores) {
                sxy += (a - mr) * b;
                sxx += (a - mr).powi(2);
                syy += b * b;
            }
            if sxy * sxy / (sxx * syy) > 0.96 {
                pass += 1;
            }
        }
        assert!(pass >= 9);
    }

    #[test]
    fn anm_pairs_record_their_construction() {
        assert!(synth_anm_pairs(0, 50, 1).is_empty());
        let pairs = synth_anm_pairs(12, 80, 5);
        assert_eq!(pairs, synth_anm_pairs(12, 80, 5));
        assert_eq!(pairs[..4], synth_anm_pairs(4, 80, 5)[..]);
        for p in &pairs {
            assert_eq!(p.x.len(), 80);
            assert_ne!(p.ground_truth, Direction::Unknown);
        }
        assert!(pairs.iter().any(|p| p.ground_truth == Direction::XToY));
        assert!(pairs.iter().any(|p| p.ground_truth == Direction::YToX));
    }

    #[test]
    fn pair_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = synth_anm_pairs(3, 20, 2);
        write_pair_directory(dir.path(), &pairs).unwrap();
        let back = load_pair_directory(dir.path()).unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn pair_values_parse() {
        let (x, y) = read_pair_values("# c\n1 2\n\n3\t4.5\n5,6\n".as_bytes()).unwrap();
        assert_eq!(x, vec![1.0, 3.0, 5.0]);
        assert_eq!(y, vec![2.0, 4.5, 6.0]);
        assert!(read_pair_values("1 2 3\n".as_bytes()).is_err());
    }
}
