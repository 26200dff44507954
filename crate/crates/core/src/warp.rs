//! Monotone tanh-step output warp.
//!
//! `g(y) = [y] + Σ_ℓ a_ℓ tanh(b_ℓ y + c_ℓ)` with `a_ℓ, b_ℓ ≥ 0`. The leading
//! identity term is optional; with it the warp is a bijection of the real
//! line, without it the range is bounded and [`WarpParams::inverse`] only
//! accepts values strictly inside that range.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 5;
const MAX_INVERSE_ITERATIONS: usize = 200;
const INVERSE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    /// Step sizes, non-negative.
    pub a: Vec<f64>,
    /// Steepness, non-negative.
    pub b: Vec<f64>,
    /// Positions.
    pub c: Vec<f64>,
    pub include_identity: bool,
}

/// Derivatives of a scalar quantity with respect to each warp coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpGradient {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl WarpParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, include_identity: bool) -> Result<Self> {
        let w = Self {
            a,
            b,
            c,
            include_identity,
        };
        w.validate()?;
        Ok(w)
    }

    /// All step sizes zero: `g(y) = y` (or `g ≡ 0` without the identity term).
    pub fn identity(steps: usize) -> Self {
        Self {
            a: vec![0.0; steps],
            b: vec![1.0; steps],
            c: vec![0.0; steps],
            include_identity: true,
        }
    }

    /// Training start point: small steps of unit steepness whose centres are
    /// spread evenly over `[-1, 1]`.
    pub fn near_identity(steps: usize, include_identity: bool) -> Self {
        let c = (0..steps)
            .map(|l| {
                if steps == 1 {
                    0.0
                } else {
                    -(-1.0 + 2.0 * l as f64 / (steps - 1) as f64)
                }
            })
            .collect();
        Self {
            a: vec![0.01; steps],
            b: vec![1.0; steps],
            c,
            include_identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.a.len();
        if l == 0 || self.b.len() != l || self.c.len() != l {
            return Err(Error::InvalidInput(format!(
                "warp needs L >= 1 equally sized coefficient vectors, got {}/{}/{}",
                self.a.len(),
                self.b.len(),
                self.c.len()
            )));
        }
        if self
            .a
            .iter()
            .chain(&self.b)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidInput(
                "warp step sizes and steepness must be finite and non-negative".into(),
            ));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("warp positions must be finite".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.a.len()
    }

    /// Number of raw optimizer coordinates, 3L.
    pub fn n_params(&self) -> usize {
        3 * self.steps()
    }

    /// `[ln a_1..ln a_L, ln b_1..ln b_L, c_1..c_L]`.
    pub fn to_raw_vec(&self) -> Vec<f64> {
        self.a
            .iter()
            .map(|v| v.ln())
            .chain(self.b.iter().map(|v| v.ln()))
            .chain(self.c.iter().copied())
            .collect()
    }

    pub fn from_raw_slice(raw: &[f64], include_identity: bool) -> Self {
        let l = raw.len() / 3;
        Self {
            a: raw[..l].iter().map(|v| v.exp()).collect(),
            b: raw[l..2 * l].iter().map(|v| v.exp()).collect(),
            c: raw[2 * l..3 * l].to_vec(),
            include_identity,
        }
    }

    #[inline]
    pub(crate) fn value(&self, y: f64) -> f64 {
        let mut z = if self.include_identity { y } else { 0.0 };
        for ((a, b), c) in self.a.iter().zip(&self.b).zip(&self.c) {
            z += a * (b * y + c).tanh();
        }
        z
    }

    #[inline]
    pub(crate) fn slope(&self, y: f64) -> f64 {
        let mut d = if self.include_identity { 1.0 } else { 0.0 };
        for ((a, b), c) in self.a.iter().zip(&self.b).zip(&self.c) {
            let t = (b * y + c).tanh();
            d += a * b * (1.0 - t * t);
        }
        d
    }

    pub fn forward(&self, y: f64) -> Result<f64> {
        check_finite(y)?;
        Ok(self.value(y))
    }

    pub fn derivative(&self, y: f64) -> Result<f64> {
        check_finite(y)?;
        Ok(self.slope(y))
    }

    /// Open interval of attainable warped values.
    pub fn range(&self) -> (f64, f64) {
        if self.include_identity {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let mut lo = 0.0;
        let mut hi = 0.0;
        for ((a, b), c) in self.a.iter().zip(&self.b).zip(&self.c) {
            if *b > 0.0 {
                lo -= a;
                hi += a;
            } else {
                let v = a * c.tanh();
                lo += v;
                hi += v;
            }
        }
        (lo, hi)
    }

    /// Solves `g(y) = z` by safeguarded Newton iteration inside a bracket
    /// found by doubling outwards from `z`.
    pub fn inverse(&self, z: f64) -> Result<f64> {
        check_finite(z)?;
        let (lo_range, hi_range) = self.range();
        if !(z > lo_range && z < hi_range) {
            return Err(Error::Range {
                value: z,
                lower: lo_range,
                upper: hi_range,
            });
        }
        let tol = INVERSE_TOLERANCE * z.abs().max(1.0);

        let mut step = 1.0;
        let mut lo = z - step;
        while self.value(lo) > z {
            step *= 2.0;
            lo = z - step;
            if !lo.is_finite() {
                return Err(Error::Convergence(format!("cannot bracket inverse of {z}")));
            }
        }
        step = 1.0;
        let mut hi = z + step;
        while self.value(hi) < z {
            step *= 2.0;
            hi = z + step;
            if !hi.is_finite() {
                return Err(Error::Convergence(format!("cannot bracket inverse of {z}")));
            }
        }

        let mut y = z.clamp(lo, hi);
        let mut best = (f64::INFINITY, y);
        let mut prev_step = hi - lo;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let f = self.value(y) - z;
            if f.abs() < best.0 {
                best = (f.abs(), y);
            }
            if f.abs() <= tol {
                return Ok(y);
            }
            if f < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let slope = self.slope(y);
            let newton = y - f / slope;
            // Newton only while it stays inside the bracket and at least
            // halves the previous step; otherwise bisect.
            let next = if slope > 0.0
                && newton > lo
                && newton < hi
                && 2.0 * (newton - y).abs() <= prev_step
            {
                newton
            } else {
                0.5 * (lo + hi)
            };
            prev_step = (next - y).abs();
            if next == y || hi - lo <= f64::EPSILON * y.abs().max(1.0) {
                // Bracket exhausted at machine precision.
                return if best.0 <= 1e-10 * z.abs().max(1.0) {
                    Ok(best.1)
                } else {
                    Err(Error::Convergence(format!(
                        "inverse stalled at residual {:e}",
                        best.0
                    )))
                };
            }
            y = next;
        }
        if best.0 <= 1e-10 * z.abs().max(1.0) {
            Ok(best.1)
        } else {
            Err(Error::Convergence(format!(
                "inverse did not converge in {MAX_INVERSE_ITERATIONS} iterations"
            )))
        }
    }

    /// Partial derivatives of `g(y)` with respect to `a`, `b` and `c`.
    pub fn forward_gradient(&self, y: f64) -> WarpGradient {
        let l = self.steps();
        let mut g = WarpGradient {
            a: vec![0.0; l],
            b: vec![0.0; l],
            c: vec![0.0; l],
        };
        for i in 0..l {
            let t = (self.b[i] * y + self.c[i]).tanh();
            let s = 1.0 - t * t;
            g.a[i] = t;
            g.b[i] = self.a[i] * y * s;
            g.c[i] = self.a[i] * s;
        }
        g
    }

    /// Accumulates `w_z ∂g(y)/∂raw + w_j ∂ln g'(y)/∂raw` into `out`, where raw
    /// coordinates are `[ln a, ln b, c]`. Returns `(g(y), g'(y))`.
    pub(crate) fn accumulate_raw_gradient(
        &self,
        y: f64,
        w_z: f64,
        w_j: f64,
        out: &mut [f64],
    ) -> (f64, f64) {
        let l = self.steps();
        let mut z = if self.include_identity { y } else { 0.0 };
        let mut slope = if self.include_identity { 1.0 } else { 0.0 };
        let mut terms = Vec::with_capacity(l);
        for i in 0..l {
            let (a, b) = (self.a[i], self.b[i]);
            let t = (b * y + self.c[i]).tanh();
            let s = 1.0 - t * t;
            z += a * t;
            slope += a * b * s;
            terms.push((t, s));
        }
        let inv_slope = w_j / slope;
        for (i, (t, s)) in terms.into_iter().enumerate() {
            let (a, b) = (self.a[i], self.b[i]);
            // d/dln a
            let dz_a = a * t;
            let ds_a = a * b * s;
            // d/dln b
            let dz_b = b * a * y * s;
            let ds_b = b * (a * s - 2.0 * a * b * y * t * s);
            // d/dc
            let dz_c = a * s;
            let ds_c = -2.0 * a * b * t * s;
            out[i] += w_z * dz_a + inv_slope * ds_a;
            out[l + i] += w_z * dz_b + inv_slope * ds_b;
            out[2 * l + i] += w_z * dz_c + inv_slope * ds_c;
        }
        (z, slope)
    }

    /// Writes `(y, g(y))` on an evenly spaced grid over `[-1, 1]`, the
    /// normalized target range used when training.
    pub fn write_curve_csv<W: Write>(&self, out: W, points: usize) -> Result<()> {
        let points = points.max(2);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "g_y"])?;
        for i in 0..points {
            let y = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
            w.write_record([format!("{y}"), format!("{}", self.value(y))])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite warp argument {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_warp(rng: &mut ChaCha8Rng, steps: usize, identity: bool) -> WarpParams {
        WarpParams::new(
            (0..steps).map(|_| rng.random_range(0.0..2.0)).collect(),
            (0..steps).map(|_| rng.random_range(0.0..3.0)).collect(),
            (0..steps).map(|_| rng.random_range(-2.0..2.0)).collect(),
            identity,
        )
        .unwrap()
    }

    fn single(a: f64, b: f64, c: f64) -> WarpParams {
        WarpParams::new(vec![a], vec![b], vec![c], true).unwrap()
    }

    #[test]
    fn zero_steps_reduce_to_identity() {
        let w = WarpParams::identity(5);
        for y in [-3.0, -0.1, 0.0, 2.5, 40.0] {
            assert_eq!(w.forward(y).unwrap(), y);
            assert_eq!(w.derivative(y).unwrap(), 1.0);
            assert_eq!(w.inverse(y).unwrap(), y);
        }
    }

    #[test]
    fn single_step_values() {
        let w = single(1.0, 1.0, 0.0);
        assert_eq!(w.forward(0.0).unwrap(), 0.0);
        assert!((w.forward(1.0).unwrap() - 1.761594).abs() < 1e-6);
        assert!((w.inverse(1.0 + 1f64.tanh()).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(single(1.0, 2.0, 0.0).derivative(0.0).unwrap(), 3.0);
    }

    #[test]
    fn centred_steps_are_odd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = random_warp(&mut rng, 4, true);
        w.c.iter_mut().for_each(|c| *c = 0.0);
        for y in [0.3, 1.1, 2.7] {
            assert_eq!(w.forward(-y).unwrap(), -w.forward(y).unwrap());
        }
    }

    #[test]
    fn non_finite_argument_rejected() {
        let w = WarpParams::identity(1);
        assert!(w.forward(f64::NAN).is_err());
        assert!(w.derivative(f64::INFINITY).is_err());
        assert!(w.inverse(f64::NAN).is_err());
    }

    #[test]
    fn negative_coefficients_rejected() {
        assert!(WarpParams::new(vec![-0.1], vec![1.0], vec![0.0], true).is_err());
        assert!(WarpParams::new(vec![0.1], vec![-1.0], vec![0.0], true).is_err());
        assert!(WarpParams::new(vec![0.1, 0.2], vec![1.0], vec![0.0], true).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let incl = rng.random_bool(0.5);
            let w = random_warp(&mut rng, 3, incl);
            for k in 0..=60 {
                let y = -3.0 + 0.1 * k as f64;
                let h = 1e-6;
                let fd = (w.value(y + h) - w.value(y - h)) / (2.0 * h);
                let an = w.derivative(y).unwrap();
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn coefficient_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let w = random_warp(&mut rng, 3, true);
            let y = rng.random_range(-2.0..2.0);
            let g = w.forward_gradient(y);
            let h = 1e-6;
            for i in 0..3 {
                for (which, analytic) in [(0, g.a[i]), (1, g.b[i]), (2, g.c[i])] {
                    let bump = |delta: f64| {
                        let mut v = w.clone();
                        match which {
                            0 => v.a[i] += delta,
                            1 => v.b[i] += delta,
                            _ => v.c[i] += delta,
                        }
                        v.value(y)
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    assert!(
                        (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3),
                        "coef {which}/{i}: {fd} vs {analytic}"
                    );
                }
            }
        }
    }

    #[test]
    fn raw_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let w = random_warp(&mut rng, 2, true);
            let y = rng.random_range(-2.0..2.0);
            let raw = w.to_raw_vec();
            let mut grad = vec![0.0; 6];
            w.accumulate_raw_gradient(y, 0.7, -1.3, &mut grad);
            let f = |r: &[f64]| {
                let v = WarpParams::from_raw_slice(r, true);
                0.7 * v.value(y) - 1.3 * v.slope(y).ln()
            };
            for k in 0..6 {
                let h = 1e-6;
                let mut up = raw.clone();
                up[k] += h;
                let mut dn = raw.clone();
                dn[k] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                assert!((fd - grad[k]).abs() <= 1e-6 * grad[k].abs().max(1e-2));
            }
        }
    }

    #[test]
    fn bounded_warp_inverse_and_range_error() {
        let w = WarpParams::new(vec![1.0, 0.5], vec![2.0, 1.0], vec![0.0, 0.3], false).unwrap();
        let (lo, hi) = w.range();
        assert_eq!((lo, hi), (-1.5, 1.5));
        let y = w.inverse(0.9).unwrap();
        assert!((w.value(y) - 0.9).abs() < 1e-10);
        assert!(matches!(w.inverse(1.5), Err(Error::Range { .. })));
        assert!(matches!(w.inverse(-2.0), Err(Error::Range { .. })));
    }

    #[test]
    fn curve_export_has_header_and_grid() {
        let w = single(1.0, 1.0, 0.0);
        let mut buf = Vec::new();
        w.write_curve_csv(&mut buf, 5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "y,g_y");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("-1,"));
        assert!(lines[5].starts_with("1,"));
    }

    #[test]
    fn near_identity_spreads_positions() {
        let w = WarpParams::near_identity(5, true);
        assert_eq!(w.c, vec![1.0, 0.5, 0.0, -0.5, -1.0]);
        assert_eq!(WarpParams::near_identity(1, true).c, vec![0.0]);
    }

    #[test]
    fn inverse_converges_where_plain_newton_cycles() {
        let w = WarpParams::new(
            vec![1.8457562929463522, 0.03606881662291084, 0.9453260534700627, 0.36373641209631113, 1.0371184200026424],
            vec![0.20686008427207558, 2.122536258244888, 0.10225604255094134, 2.092882517854097, 2.9601105154334717],
            vec![1.3890658747035864, -0.26511159167714204, 1.6887003753069818, 0.6920445860034121, -0.3013549362343424],
            true,
        )
        .unwrap();
        let z = w.forward(0.1).unwrap();
        assert!((w.inverse(z).unwrap() - 0.1).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_and_round_trips(seed in 0u64..10_000, steps in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = random_warp(&mut rng, steps, true);
                let mut prev = f64::NEG_INFINITY;
                for k in 0..=100 {
                    let y = -5.0 + 0.1 * k as f64;
                    let z = w.forward(y).unwrap();
                    prop_assert!(z > prev);
                    prop_assert!(w.derivative(y).unwrap() > 0.0);
                    prev = z;
                    let back = w.inverse(z).unwrap();
                    prop_assert!((back - y).abs() < 1e-8, "y={} back={}", y, back);
                }
            }

            #[test]
            fn bounded_warp_non_decreasing(seed in 0u64..10_000, steps in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = random_warp(&mut rng, steps, false);
                let mut prev = f64::NEG_INFINITY;
                for k in 0..=100 {
                    let y = -5.0 + 0.1 * k as f64;
                    let z = w.forward(y).unwrap();
                    prop_assert!(z >= prev);
                    prop_assert!(w.derivative(y).unwrap() >= 0.0);
                    prev = z;
                }
            }
        }
    }
}
