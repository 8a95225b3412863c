//! Parametric model of how overfitting reshapes anomaly-score distributions.
//!
//! Normal scores follow `N(μn, σn(θ)²)` and anomaly scores `N(μa, σa²)`, where
//! `θ` is the ARQ. The normal-score spread decays exponentially with `θ` and,
//! past the noise onset `θ0`, picks up a saturating noise term:
//!
//! ```text
//! σn(θ) = σn0·e^(−kθ) + [θ > θ0]·σmax·(1 − e^(−h(θ−θ0)))
//! RADI(θ) = Φ((μa − μn) / √(σn(θ)² + σa²))
//! ```
//!
//! The RADI optimum is the minimizer of `σn`, found in closed form and by
//! golden-section search.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{parse_value, KvConfig};
use crate::error::{Error, Result};
use crate::metrics::{radi_empirical, ScoreSet};
use crate::seed::derive_indexed;
use crate::optimize::golden_section_min;
use crate::scalar::{std_normal_cdf, std_normal_pdf, Scalar};

/// Config keys, in file order.
pub const MODEL_KEYS: [&str; 8] = [
    "mu_n", "mu_a", "sigma_a", "sigma_n0", "k", "sigma_max", "h", "theta_0",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionModel<T> {
    pub mu_n: T,
    pub mu_a: T,
    pub sigma_a: T,
    pub sigma_n0: T,
    /// Decay rate of the normal-score spread.
    pub k: T,
    pub sigma_max: T,
    /// Growth rate of the overfitting noise.
    pub h: T,
    /// ARQ at which noise sets in.
    pub theta_0: T,
}

/// Analytic `dRADI/dθ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiGradient<T> {
    pub value: T,
    /// Set when evaluated exactly at the noise onset with `σmax > 0`; `value`
    /// is then the right-hand derivative.
    pub at_kink: bool,
}

/// Which closed form for `θ*` agrees with the numeric optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaStarMatch {
    Derived,
    Paper,
    Both,
    Neither,
}

/// Closed-form and numeric locations of the RADI optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaStar<T> {
    /// `[ln(kσn0) − ln(hσmax) − hθ0] / (k − h)`, from `dσn/dθ = 0`.
    pub derived_form: T,
    /// `[ln(kσn0) − ln(hσmax) + hθ0] / (k − h)`, the commonly printed variant.
    pub paper_form: T,
    /// Golden-section minimizer of `σn` on the search bracket.
    pub numeric: T,
    pub matches: ThetaStarMatch,
}

/// Options for [`DistributionModel::theta_star_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaStarOptions<T> {
    /// Bracket is `[θ0, θ0 + width]`; `None` means `20 / min(k, h)`.
    pub bracket_width: Option<T>,
    pub tolerance: T,
    /// Agreement threshold between a closed form and the numeric optimum.
    pub agreement: T,
}

impl<T: Scalar> Default for ThetaStarOptions<T> {
    fn default() -> Self {
        Self {
            bracket_width: None,
            tolerance: T::lit(1e-9),
            agreement: T::lit(1e-6),
        }
    }
}

impl<T: Scalar> DistributionModel<T> {
    /// Validated constructor.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu_n: T,
        mu_a: T,
        sigma_a: T,
        sigma_n0: T,
        k: T,
        sigma_max: T,
        h: T,
        theta_0: T,
    ) -> Result<Self> {
        let m = Self {
            mu_n,
            mu_a,
            sigma_a,
            sigma_n0,
            k,
            sigma_max,
            h,
            theta_0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !v.is_finite() {
                return Err(Error::input(format!("model parameter {name} = {v} is not finite")));
            }
        }
        let positive = |name: &str, v: T| {
            if v > T::zero() {
                Ok(())
            } else {
                Err(Error::input(format!("model parameter {name} = {v} must be positive")))
            }
        };
        positive("sigma_a", self.sigma_a)?;
        positive("sigma_n0", self.sigma_n0)?;
        positive("k", self.k)?;
        positive("h", self.h)?;
        if self.sigma_max < T::zero() {
            return Err(Error::input(format!(
                "model parameter sigma_max = {} must be nonnegative",
                self.sigma_max
            )));
        }
        if self.theta_0 < T::zero() {
            return Err(Error::input(format!(
                "model parameter theta_0 = {} must be nonnegative",
                self.theta_0
            )));
        }
        Ok(())
    }

    fn fields(&self) -> [(&'static str, T); 8] {
        [
            ("mu_n", self.mu_n),
            ("mu_a", self.mu_a),
            ("sigma_a", self.sigma_a),
            ("sigma_n0", self.sigma_n0),
            ("k", self.k),
            ("sigma_max", self.sigma_max),
            ("h", self.h),
            ("theta_0", self.theta_0),
        ]
    }

    /// Sets a parameter by config key. Does not re-validate.
    pub fn set(&mut self, key: &str, value: T) -> Result<()> {
        let slot = match key {
            "mu_n" => &mut self.mu_n,
            "mu_a" => &mut self.mu_a,
            "sigma_a" => &mut self.sigma_a,
            "sigma_n0" => &mut self.sigma_n0,
            "k" => &mut self.k,
            "sigma_max" => &mut self.sigma_max,
            "h" => &mut self.h,
            "theta_0" => &mut self.theta_0,
            other => return Err(Error::input(format!("unknown model key {other:?}"))),
        };
        *slot = value;
        Ok(())
    }

    /// Builds a model from a config holding exactly the eight model keys.
    pub fn from_config(config: &KvConfig) -> Result<Self> {
        config.reject_unknown(&MODEL_KEYS)?;
        let mut m = Self::demo();
        for key in MODEL_KEYS {
            let raw = config
                .get(key)
                .ok_or_else(|| Error::input(format!("missing model key {key:?}")))?;
            let v: f64 = parse_value(key, raw)?;
            m.set(key, T::lit(v))?;
        }
        m.validate()?;
        Ok(m)
    }

    /// Applies every assignment in `config` on top of `self`.
    pub fn with_overrides(mut self, config: &KvConfig) -> Result<Self> {
        for (key, raw) in config.iter() {
            let v: f64 = parse_value(key, raw)?;
            self.set(key, T::lit(v))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config(&KvConfig::load(path)?)
    }

    /// Serializes in the flat config format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (name, v) in self.fields() {
            let _ = writeln!(s, "{name} = {v}");
        }
        s
    }

    /// A model with an interior RADI optimum, used as the CLI default.
    pub fn demo() -> Self {
        Self {
            mu_n: T::zero(),
            mu_a: T::one(),
            sigma_a: T::lit(0.5),
            sigma_n0: T::one(),
            k: T::lit(2.0),
            sigma_max: T::lit(0.5),
            h: T::one(),
            theta_0: T::lit(0.2),
        }
    }

    fn noise_active(&self, theta: T) -> bool {
        theta > self.theta_0
    }

    /// Standard deviation of normal scores at ARQ `theta`.
    pub fn sigma_n(&self, theta: T) -> T {
        let decay = self.sigma_n0 * (-self.k * theta).exp();
        if self.noise_active(theta) {
            // 1 − e^(−x) via exp_m1 keeps precision just past the onset.
            decay - self.sigma_max * (-self.h * (theta - self.theta_0)).exp_m1()
        } else {
            decay
        }
    }

    /// `dσn/dθ`; at `θ0` itself this is the right-hand derivative.
    pub fn sigma_n_derivative(&self, theta: T) -> T {
        let decay = -self.k * self.sigma_n0 * (-self.k * theta).exp();
        if theta >= self.theta_0 && self.sigma_max > T::zero() {
            decay + self.h * self.sigma_max * (-self.h * (theta - self.theta_0)).exp()
        } else {
            decay
        }
    }

    fn separation(&self, theta: T) -> (T, T) {
        let sn = self.sigma_n(theta);
        let spread = (sn * sn + self.sigma_a * self.sigma_a).sqrt();
        ((self.mu_a - self.mu_n) / spread, spread)
    }

    /// `Φ((μa − μn) / √(σn(θ)² + σa²))`.
    pub fn radi_closed_form(&self, theta: T) -> T {
        std_normal_cdf(self.separation(theta).0)
    }

    /// Analytic derivative of [`radi_closed_form`](Self::radi_closed_form).
    pub fn radi_gradient(&self, theta: T) -> RadiGradient<T> {
        let sn = self.sigma_n(theta);
        let (z, spread) = self.separation(theta);
        let dz = -(self.mu_a - self.mu_n) * sn * self.sigma_n_derivative(theta)
            / (spread * spread * spread);
        RadiGradient {
            value: std_normal_pdf(z) * dz,
            at_kink: theta == self.theta_0 && self.sigma_max > T::zero(),
        }
    }

    /// Locates the RADI optimum with default options.
    pub fn theta_star(&self) -> Result<ThetaStar<T>> {
        self.theta_star_with(ThetaStarOptions::default())
    }

    pub fn theta_star_with(&self, opts: ThetaStarOptions<T>) -> Result<ThetaStar<T>> {
        if !(self.sigma_max > T::zero()) {
            return Err(Error::Domain {
                name: "sigma_max",
                value: self.sigma_max.as_f64(),
                reason: "θ* requires a positive noise ceiling",
            });
        }
        let denom = self.k - self.h;
        if denom == T::zero() {
            return Err(Error::Domain {
                name: "k - h (θ* denominator)",
                value: 0.0,
                reason: "k and h must differ",
            });
        }
        let log_ratio = (self.k * self.sigma_n0).ln() - (self.h * self.sigma_max).ln();
        let onset = self.h * self.theta_0;
        let derived_form = (log_ratio - onset) / denom;
        let paper_form = (log_ratio + onset) / denom;

        let width = opts
            .bracket_width
            .unwrap_or_else(|| T::lit(20.0) / self.k.min(self.h));
        let lo = self.theta_0;
        let hi = self.theta_0 + width;
        let search = golden_section_min(|t| self.sigma_n(t), lo, hi, opts.tolerance);
        let numeric = search.argmin;
        let edge = opts.tolerance * T::lit(10.0);
        if numeric - lo <= edge || hi - numeric <= edge {
            return Err(Error::NoInteriorOptimum {
                lo: lo.as_f64(),
                hi: hi.as_f64(),
                at: numeric.as_f64(),
            });
        }

        let agrees = |form: T| (form - numeric).abs() <= opts.agreement;
        let matches = match (agrees(derived_form), agrees(paper_form)) {
            (true, true) => ThetaStarMatch::Both,
            (true, false) => ThetaStarMatch::Derived,
            (false, true) => ThetaStarMatch::Paper,
            (false, false) => ThetaStarMatch::Neither,
        };
        Ok(ThetaStar {
            derived_form,
            paper_form,
            numeric,
            matches,
        })
    }

    /// Draws i.i.d. normal and anomaly scores at ARQ `theta`. The normal class
    /// is drawn first from a ChaCha8 stream seeded with `seed`.
    pub fn sample_scores(
        &self,
        theta: T,
        n_normal: usize,
        n_anomaly: usize,
        seed: u64,
    ) -> Result<ScoreSet<T>> {
        if n_normal == 0 || n_anomaly == 0 {
            return Err(Error::input("sample counts must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal_dist = Normal::new(self.mu_n.as_f64(), self.sigma_n(theta).as_f64())
            .map_err(|e| Error::input(format!("normal-score distribution: {e}")))?;
        let anomaly_dist = Normal::new(self.mu_a.as_f64(), self.sigma_a.as_f64())
            .map_err(|e| Error::input(format!("anomaly-score distribution: {e}")))?;
        let normal = (0..n_normal)
            .map(|_| T::lit(normal_dist.sample(&mut rng)))
            .collect();
        let anomaly = (0..n_anomaly)
            .map(|_| T::lit(anomaly_dist.sample(&mut rng)))
            .collect();
        Ok(ScoreSet { normal, anomaly })
    }

    /// Evaluates `σn` and closed-form RADI on a uniform grid.
    pub fn sweep(&self, theta_lo: T, theta_hi: T, steps: usize) -> Result<ThetaSweep<T>> {
        let thetas = theta_grid(theta_lo, theta_hi, steps)?;
        let sigma_values = thetas.iter().map(|&t| self.sigma_n(t)).collect();
        let radi_values = thetas.iter().map(|&t| self.radi_closed_form(t)).collect();
        Ok(ThetaSweep {
            thetas,
            sigma_values,
            radi_values,
        })
    }
}

/// `steps` evenly spaced points from `lo` to `hi` inclusive.
pub fn theta_grid<T: Scalar>(lo: T, hi: T, steps: usize) -> Result<Vec<T>> {
    if !(lo < hi) {
        return Err(Error::input(format!("theta range [{lo}, {hi}] is empty")));
    }
    if steps < 2 {
        return Err(Error::input(format!("sweep needs at least 2 steps, got {steps}")));
    }
    let last = steps - 1;
    let step = (hi - lo) / T::from_count(last);
    Ok((0..steps)
        .map(|i| if i == last { hi } else { lo + step * T::from_count(i) })
        .collect())
}

/// RADI and `σn` tabulated over a θ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSweep<T> {
    pub thetas: Vec<T>,
    pub radi_values: Vec<T>,
    pub sigma_values: Vec<T>,
}

pub const SWEEP_CSV_HEADER: &str = "theta,sigma_n,radi";

impl<T: Scalar> ThetaSweep<T> {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Index of the largest RADI value (first on ties).
    pub fn peak_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &r) in self.radi_values.iter().enumerate() {
            if best.is_none_or(|b| r > self.radi_values[b]) {
                best = Some(i);
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_CSV_HEADER);
        s.push('\n');
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{},{},{}",
                self.thetas[i], self.sigma_values[i], self.radi_values[i]
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == SWEEP_CSV_HEADER => {}
            _ => return Err(Error::parse(1, format!("expected header {SWEEP_CSV_HEADER:?}"))),
        }
        let mut sweep = ThetaSweep {
            thetas: Vec::new(),
            radi_values: Vec::new(),
            sigma_values: Vec::new(),
        };
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(idx + 1, "expected 3 fields"));
            }
            let parse = |f: &str| -> Result<T> {
                f.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::parse(idx + 1, format!("bad number {f:?}")))
            };
            sweep.thetas.push(parse(fields[0])?);
            sweep.sigma_values.push(parse(fields[1])?);
            sweep.radi_values.push(parse(fields[2])?);
        }
        Ok(sweep)
    }
}

/// One row of a closed-form vs Monte Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow<T> {
    pub theta: T,
    pub sigma_n: T,
    pub radi_closed: T,
    pub radi_mc: T,
}

pub const SIMULATION_CSV_HEADER: &str = "theta,sigma_n,radi_closed,radi_mc";

impl<T: Scalar> DistributionModel<T> {
    /// Tabulates closed-form RADI next to an empirical estimate from
    /// `mc_samples` draws per class. Row `i` samples with
    /// `derive_indexed(seed, "simulate-row", i)`.
    pub fn simulate(
        &self,
        theta_lo: T,
        theta_hi: T,
        steps: usize,
        mc_samples: usize,
        seed: u64,
    ) -> Result<Vec<SimulationRow<T>>> {
        if mc_samples == 0 {
            return Err(Error::input("mc_samples must be at least 1"));
        }
        theta_grid(theta_lo, theta_hi, steps)?
            .into_iter()
            .enumerate()
            .map(|(i, theta)| {
                let row_seed = derive_indexed(seed, "simulate-row", i as u64);
                let scores = self.sample_scores(theta, mc_samples, mc_samples, row_seed)?;
                Ok(SimulationRow {
                    theta,
                    sigma_n: self.sigma_n(theta),
                    radi_closed: self.radi_closed_form(theta),
                    radi_mc: radi_empirical(&scores)?,
                })
            })
            .collect()
    }
}

pub fn simulation_to_csv<T: Scalar>(rows: &[SimulationRow<T>]) -> String {
    let mut s = String::from(SIMULATION_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.theta, r.sigma_n, r.radi_closed, r.radi_mc);
    }
    s
}

pub fn simulation_from_csv<T: Scalar>(text: &str) -> Result<Vec<SimulationRow<T>>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SIMULATION_CSV_HEADER => {}
        _ => {
            return Err(Error::parse(
                1,
                format!("expected header {SIMULATION_CSV_HEADER:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(idx + 1, "expected 4 fields"));
        }
        let parse = |f: &str| -> Result<T> {
            f.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|_| Error::parse(idx + 1, format!("bad number {f:?}")))
        };
        rows.push(SimulationRow {
            theta: parse(fields[0])?,
            sigma_n: parse(fields[1])?,
            radi_closed: parse(fields[2])?,
            radi_mc: parse(fields[3])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::radi_empirical;

    fn model(k: f64, h: f64, sigma_max: f64, theta_0: f64) -> DistributionModel<f64> {
        DistributionModel::new(0.0, 1.0, 1.0, 1.0, k, sigma_max, h, theta_0).unwrap()
    }

    #[test]
    fn sigma_n_examples() {
        let m = model(2.0, 1.0, 1.0, 0.3);
        assert_eq!(m.sigma_n(0.0), 1.0);
        assert_eq!(m.sigma_n(0.3), (-0.6_f64).exp());
        let m = model(2.0, 1.0, 1.0, 0.0);
        assert!((m.sigma_n(2.0_f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sigma_n_continuous_at_onset() {
        let m = model(3.0, 0.5, 2.0, 0.4);
        let left = m.sigma_n(0.4 - 1e-12);
        let right = m.sigma_n(0.4 + 1e-12);
        assert!((left - right).abs() < 1e-10);
    }

    #[test]
    fn radi_closed_form_examples() {
        let m = DistributionModel::new(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(m.radi_closed_form(0.7), 0.5);
        // μa − μn = √2, σn = σa = 1 at θ = 0.
        let m = DistributionModel::new(0.0, 2.0_f64.sqrt(), 1.0, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!((m.radi_closed_form(0.0) - 0.841_344_746).abs() < 1e-6);
        let mut prev = 0.0;
        for gap in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let m = DistributionModel::new(0.0, gap, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
            let r = m.radi_closed_form(0.0);
            assert!(r > prev && r < 1.0);
            prev = r;
        }
    }

    #[test]
    fn gradient_positive_without_noise() {
        let m = model(2.0, 1.0, 0.0, 0.0);
        for i in 0..50 {
            let g = m.radi_gradient(i as f64 * 0.1);
            assert!(g.value > 0.0);
            assert!(!g.at_kink);
        }
    }

    #[test]
    fn gradient_flags_kink() {
        let m = model(2.0, 1.0, 1.0, 0.5);
        let g = m.radi_gradient(0.5);
        assert!(g.at_kink);
        // Right-hand derivative: compare with a one-sided difference.
        let step = 1e-7;
        let fd = (m.radi_closed_form(0.5 + step) - m.radi_closed_form(0.5)) / step;
        assert!((g.value - fd).abs() < 1e-5 * g.value.abs().max(1e-3));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = DistributionModel::new(0.2, 1.5, 0.7, 1.3, 2.5, 0.6, 0.8, 0.3).unwrap();
        for i in 0..100 {
            let t = 0.013 + i as f64 * 0.05;
            if (t - m.theta_0).abs() < 1e-4 {
                continue;
            }
            let step = 1e-6;
            let fd = (m.radi_closed_form(t + step) - m.radi_closed_form(t - step)) / (2.0 * step);
            let g = m.radi_gradient(t).value;
            assert!((g - fd).abs() <= 1e-4 * g.abs().max(fd.abs()), "θ={t}: {g} vs {fd}");
        }
    }

    #[test]
    fn theta_star_reference_model() {
        let ts = model(2.0, 1.0, 1.0, 0.0).theta_star().unwrap();
        let ln2 = 2.0_f64.ln();
        assert!((ts.derived_form - ln2).abs() < 1e-15);
        assert_eq!(ts.derived_form, ts.paper_form);
        assert!((ts.numeric - ln2).abs() < 1e-6);
        assert_eq!(ts.matches, ThetaStarMatch::Both);
        // σn′(ln 2) = −2e^(−2 ln 2) + e^(−ln 2) = 0.
        assert!(model(2.0, 1.0, 1.0, 0.0).sigma_n_derivative(ln2).abs() < 1e-15);
        let m = model(2.0, 1.0, 1.0, 0.0);
        assert!(m.radi_gradient(ts.numeric).value.abs() < 1e-8);
    }

    #[test]
    fn theta_star_with_onset_picks_derived() {
        let m = model(2.0, 1.0, 1.0, 0.1);
        let ts = m.theta_star().unwrap();
        assert!((ts.derived_form - (2.0_f64.ln() - 0.1)).abs() < 1e-15);
        assert!((ts.paper_form - (2.0_f64.ln() + 0.1)).abs() < 1e-15);
        assert_eq!(ts.matches, ThetaStarMatch::Derived);
        // Grid-search oracle, independent of golden section.
        let best = (0..=200_000)
            .map(|i| 0.1 + i as f64 * 1e-5)
            .min_by(|a, b| m.sigma_n(*a).partial_cmp(&m.sigma_n(*b)).unwrap())
            .unwrap();
        assert!((best - ts.numeric).abs() < 2e-5);
    }

    #[test]
    fn theta_star_errors() {
        assert!(matches!(
            model(1.0, 1.0, 1.0, 0.0).theta_star(),
            Err(Error::Domain { .. })
        ));
        assert!(model(2.0, 1.0, 0.0, 0.0).theta_star().is_err());
        // Noise rate exceeds decay: σn increasing from the onset.
        let m = model(1.0, 5.0, 2.0, 0.0);
        assert!(matches!(m.theta_star(), Err(Error::NoInteriorOptimum { .. })));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = model(2.0, 1.0, 1.0, 0.1);
        let a = m.sample_scores(0.3, 100, 50, 7).unwrap();
        let b = m.sample_scores(0.3, 100, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, m.sample_scores(0.3, 100, 50, 8).unwrap());
        assert!(m.sample_scores(0.3, 0, 50, 7).is_err());
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let m = model(2.0, 1.0, 1.0, 0.1);
        let n = 1_000_000;
        let s = m.sample_scores(0.5, n, 10, 11).unwrap();
        let mean = s.normal.iter().sum::<f64>() / n as f64;
        assert!((mean - m.mu_n).abs() < 4.0 * m.sigma_n(0.5) / (n as f64).sqrt());
    }

    #[test]
    fn monte_carlo_radi_agrees() {
        let m = DistributionModel::new(0.0, 0.8, 0.6, 1.0, 2.0, 0.4, 1.0, 0.2).unwrap();
        let theta = 0.7_f64;
        let s = m.sample_scores(theta, 200_000, 200_000, 3).unwrap();
        let mc = radi_empirical(&s).unwrap();
        assert!((mc - m.radi_closed_form(theta)).abs() < 0.005);
    }

    #[test]
    fn sweep_shapes() {
        let m = model(2.0, 1.0, 1.0, 0.1);
        let s = m.sweep(0.0, 3.0, 2).unwrap();
        assert_eq!(s.thetas, vec![0.0, 3.0]);

        let pure = model(2.0, 1.0, 0.0, 0.0).sweep(0.0, 3.0, 100).unwrap();
        assert!(pure.radi_values.windows(2).all(|w| w[1] >= w[0]));

        let s = m.sweep(0.1, 3.0, 291).unwrap();
        let ts = m.theta_star().unwrap();
        let peak = s.peak_index().unwrap();
        let nearest = (0..s.len())
            .min_by(|&a, &b| {
                (s.thetas[a] - ts.numeric)
                    .abs()
                    .partial_cmp(&(s.thetas[b] - ts.numeric).abs())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(peak, nearest);
        // Unimodal: increasing up to the peak, decreasing after.
        assert!(s.radi_values[..=peak].windows(2).all(|w| w[1] >= w[0]));
        assert!(s.radi_values[peak..].windows(2).all(|w| w[1] <= w[0]));

        assert!(m.sweep(1.0, 1.0, 5).is_err());
        assert!(m.sweep(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn sweep_csv_round_trip() {
        let s = model(2.0, 1.0, 1.0, 0.1).sweep(0.0, 2.0, 7).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("theta,sigma_n,radi\n"));
        assert_eq!(ThetaSweep::from_csv(&csv).unwrap(), s);
    }

    #[test]
    fn config_round_trip_and_strict_keys() {
        let m = DistributionModel::<f64>::demo();
        let text = m.to_config_string();
        let back = DistributionModel::from_config(&KvConfig::parse(&text).unwrap()).unwrap();
        assert_eq!(back, m);

        let bad = KvConfig::parse(&format!("{text}extra = 1\n")).unwrap();
        let err = DistributionModel::<f64>::from_config(&bad).unwrap_err();
        assert!(err.to_string().contains("extra"));

        let missing = KvConfig::parse("mu_n = 0\n").unwrap();
        assert!(DistributionModel::<f64>::from_config(&missing).is_err());
    }

    #[test]
    fn variance_floor_with_noise() {
        let m = model(3.0, 0.7, 0.4, 0.2);
        let inf = (0..20_000)
            .map(|i| m.sigma_n(i as f64 * 1e-3))
            .fold(f64::INFINITY, f64::min);
        assert!(inf > 0.0);
    }

    #[test]
    fn f32_model_works() {
        let m = DistributionModel::<f32>::new(0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        let ts = m
            .theta_star_with(ThetaStarOptions {
                tolerance: 1e-5,
                agreement: 1e-2,
                ..Default::default()
            })
            .unwrap();
        assert!((ts.numeric - std::f32::consts::LN_2).abs() < 1e-2);
    }
    #[test]
    fn simulation_table() {
        let m = DistributionModel::<f64>::demo();
        let rows = m.simulate(0.0, 2.0, 2, 100, 5).unwrap();
        assert_eq!(rows.len(), 2);
        let csv = simulation_to_csv(&rows);
        assert!(csv.starts_with("theta,sigma_n,radi_closed,radi_mc\n"));
        assert_eq!(simulation_from_csv::<f64>(&csv).unwrap(), rows);
        assert_eq!(rows, m.simulate(0.0, 2.0, 2, 100, 5).unwrap());
        assert!(m.simulate(0.0, 2.0, 2, 0, 5).is_err());
        assert!(simulation_from_csv::<f64>("theta,sigma_n,radi\n").is_err());
    }

    #[test]
    fn simulation_matches_closed_form() {
        let m = DistributionModel::<f64>::demo();
        for r in m.simulate(0.0, 2.0, 9, 100_000, 11).unwrap() {
            assert!((r.radi_mc - r.radi_closed).abs() <= 0.005, "{r:?}");
        }
    }

    #[test]
    fn no_noise_model_is_nondecreasing() {
        let mut m = DistributionModel::<f64>::demo();
        m.sigma_max = 0.0;
        let rows = m.simulate(0.0, 3.0, 31, 10, 1).unwrap();
        assert!(rows.windows(2).all(|w| w[1].radi_closed >= w[0].radi_closed));
    }
}
