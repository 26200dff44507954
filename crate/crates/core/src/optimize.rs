//! Limited-memory BFGS maximizer with backtracking Armijo line search.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const GRADIENT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 500,
            relative_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "restarts and max_iterations must be positive".into(),
            ));
        }
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance.is_finite()) {
            return Err(Error::InvalidInput(
                "relative tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative improvement or gradient norm fell below tolerance.
    Converged,
    IterationLimit,
    /// No acceptable step could be found; the best point so far is returned.
    LineSearchFailed,
}

impl Termination {
    pub fn is_degraded(self) -> bool {
        self == Termination::LineSearchFailed
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub params: Vec<f64>,
    pub value: f64,
    /// Objective value at the initial point followed by every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl Maximum {
    pub fn initial_value(&self) -> f64 {
        self.trace[0]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn evaluate<F>(objective: &mut F, x: &[f64]) -> Option<(f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    match objective(x) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|gi| gi.is_finite()) => {
            // Work on the negated problem internally.
            Some((-v, g.into_iter().map(|gi| -gi).collect()))
        }
        _ => None,
    }
}

/// Two-loop recursion: returns `-H g` for the current curvature memory.
fn search_direction(grad: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Maximizes a smooth objective that returns its value and gradient.
///
/// Objective errors or non-finite values during the line search are treated
/// as rejected trial points. The returned value is never below the value at
/// `initial`.
pub fn maximize<F>(mut objective: F, initial: &[f64], config: &FitConfig) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = initial.to_vec();
    let (mut f, mut g) = match objective(&x) {
        Ok((v, grad)) if v.is_finite() && grad.iter().all(|gi| gi.is_finite()) => {
            (-v, grad.into_iter().map(|gi| -gi).collect::<Vec<_>>())
        }
        Ok((v, _)) => return Err(Error::InvalidStart(format!("objective value {v}"))),
        Err(e) => return Err(Error::InvalidStart(e.to_string())),
    };
    let mut trace = vec![-f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut termination = Termination::IterationLimit;
    let mut iterations = 0;

    'outer: while iterations < config.max_iterations {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= GRADIENT_TOLERANCE {
            termination = Termination::Converged;
            break;
        }
        iterations += 1;

        let mut retried = false;
        loop {
            let mut d = search_direction(&g, &memory);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) || memory.is_empty() {
                if !(slope < 0.0) {
                    memory.clear();
                }
                d = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
            }
            let mut t = if memory.is_empty() {
                (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
            } else {
                1.0
            };

            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
                if let Some((ft, gt)) = evaluate(&mut objective, &trial) {
                    if ft <= f + ARMIJO_C1 * t * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                t *= 0.5;
            }

            match accepted {
                Some((x_new, f_new, g_new)) => {
                    let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                        if memory.len() == MEMORY {
                            memory.pop_front();
                        }
                        memory.push_back((s, y, 1.0 / sy));
                    }
                    let improvement = f - f_new;
                    let scale = f.abs().max(f_new.abs()).max(1.0);
                    x = x_new;
                    f = f_new;
                    g = g_new;
                    trace.push(-f);
                    if improvement <= config.relative_tolerance * scale {
                        termination = Termination::Converged;
                        break 'outer;
                    }
                    break;
                }
                None if !memory.is_empty() && !retried => {
                    memory.clear();
                    retried = true;
                }
                None => {
                    termination = Termination::LineSearchFailed;
                    break 'outer;
                }
            }
        }
    }

    Ok(Maximum {
        params: x,
        value: -f,
        trace,
        iterations,
        termination,
    })
}

/// Outcome of one restart of [`multi_start`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub index: usize,
    pub initial_value: Option<f64>,
    pub final_value: Option<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

/// Start points for `restarts` runs: `base` itself, then `base` plus
/// independent N(0, spread²) perturbations drawn from per-restart streams.
pub fn restart_points(base: &[f64], config: &FitConfig, spread: f64) -> Vec<Vec<f64>> {
    (0..config.restarts)
        .map(|r| {
            if r == 0 {
                return base.to_vec();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            base.iter()
                .map(|v| v + spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Runs [`maximize`] from every start point and keeps the best result
/// (ties go to the earliest start). Fails only if every start fails.
pub fn multi_start<F>(
    objective: F,
    starts: &[Vec<f64>],
    config: &FitConfig,
) -> Result<(Maximum, Vec<RestartReport>)>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync,
{
    let outcomes: Vec<Result<Maximum>> = starts
        .par_iter()
        .map(|start| maximize(&objective, start, config))
        .collect();
    let reports = outcomes
        .iter()
        .enumerate()
        .map(|(index, o)| match o {
            Ok(m) => RestartReport {
                index,
                initial_value: Some(m.initial_value()),
                final_value: Some(m.value),
                iterations: m.iterations,
                termination: Some(m.termination),
                error: None,
            },
            Err(e) => RestartReport {
                index,
                initial_value: None,
                final_value: None,
                iterations: 0,
                termination: None,
                error: Some(e.to_string()),
            },
        })
        .collect::<Vec<_>>();
    let mut best: Option<Maximum> = None;
    for m in outcomes.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| m.value > b.value) {
            best = Some(m);
        }
    }
    match best {
        Some(b) => Ok((b, reports)),
        None => Err(Error::FitFailure {
            restarts: starts.len(),
            diagnostics: reports
                .iter()
                .map(|r| format!("restart {}: {}", r.index, r.error.as_deref().unwrap_or("?")))
                .collect(),
        }),
    }
}
