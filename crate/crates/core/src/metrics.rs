//! Stateless score metrics: ARQ, empirical RADI, ROC AUC, Gaussian moment
//! fitting and histogram total variation distance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{std_normal_cdf, Scalar};

/// Anomaly scores split by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet<T> {
    pub normal: Vec<T>,
    pub anomaly: Vec<T>,
}

impl<T: Scalar> ScoreSet<T> {
    /// Builds a score set, rejecting non-finite values. Empty classes are
    /// allowed here and rejected by the separation metrics.
    pub fn new(normal: Vec<T>, anomaly: Vec<T>) -> Result<Self> {
        check_finite("normal scores", &normal)?;
        check_finite("anomaly scores", &anomaly)?;
        Ok(Self { normal, anomaly })
    }

    /// Builds a score set from `(score, is_anomalous)` pairs.
    pub fn from_labeled(iter: impl IntoIterator<Item = (T, bool)>) -> Result<Self> {
        let mut normal = Vec::new();
        let mut anomaly = Vec::new();
        for (s, is_anomaly) in iter {
            if is_anomaly {
                anomaly.push(s);
            } else {
                normal.push(s);
            }
        }
        Self::new(normal, anomaly)
    }

    /// The same scores with the class labels swapped.
    pub fn flipped(&self) -> Self {
        Self {
            normal: self.anomaly.clone(),
            anomaly: self.normal.clone(),
        }
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.normal.is_empty() {
            return Err(Error::input("normal class is empty"));
        }
        if self.anomaly.is_empty() {
            return Err(Error::input("anomaly class is empty"));
        }
        Ok(())
    }
}

fn check_finite<T: Scalar>(what: &str, xs: &[T]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::input(format!("{what}: non-finite value at index {i}"))),
        None => Ok(()),
    }
}

/// Predictions paired with their ground truth, as consumed by [`compute_arq`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair<T> {
    pub predicted: Vec<T>,
    pub ground_truth: Vec<T>,
}

impl<T: Scalar> PredictionPair<T> {
    pub fn new(predicted: Vec<T>, ground_truth: Vec<T>) -> Result<Self> {
        if predicted.len() != ground_truth.len() {
            return Err(Error::input(format!(
                "prediction length {} != ground truth length {}",
                predicted.len(),
                ground_truth.len()
            )));
        }
        if predicted.is_empty() {
            return Err(Error::input("prediction pair is empty"));
        }
        check_finite("predicted", &predicted)?;
        check_finite("ground truth", &ground_truth)?;
        Ok(Self {
            predicted,
            ground_truth,
        })
    }
}

/// Aberrance Retention Quotient of a prediction pair.
pub fn compute_arq<T: Scalar>(pair: &PredictionPair<T>) -> Result<T> {
    arq(&pair.predicted, &pair.ground_truth)
}

/// Aberrance Retention Quotient, `Σ|ŷᵢ − yᵢ| / Σyᵢ`.
///
/// The denominator sums the ground truth and must be strictly positive.
pub fn arq<T: Scalar>(predicted: &[T], ground_truth: &[T]) -> Result<T> {
    if predicted.len() != ground_truth.len() {
        return Err(Error::input(format!(
            "prediction length {} != ground truth length {}",
            predicted.len(),
            ground_truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::input("prediction pair is empty"));
    }
    let (deviation, total) = predicted
        .iter()
        .zip(ground_truth)
        .fold((T::zero(), T::zero()), |(dev, tot), (&p, &y)| {
            (dev + (p - y).abs(), tot + y)
        });
    if !(total > T::zero()) {
        return Err(Error::Domain {
            name: "sum of ground truth (ARQ denominator)",
            value: total.as_f64(),
            reason: "must be strictly positive",
        });
    }
    Ok(deviation / total)
}

/// Empirical RADI, the Mann–Whitney estimate of `P(S_a > S_n)` with ties
/// counted as one half.
///
/// Runs in `O(n log n)` via midranks. The numerator is accumulated as an
/// exact integer (twice the U statistic), so the result equals the pairwise
/// count divided by `|A|·|N|` up to the final rounding.
pub fn radi_empirical<T: Scalar>(scores: &ScoreSet<T>) -> Result<T> {
    scores.check_nonempty()?;
    check_finite("normal scores", &scores.normal)?;
    check_finite("anomaly scores", &scores.anomaly)?;

    let n_a = scores.anomaly.len() as u128;
    let n_n = scores.normal.len() as u128;

    let mut pooled: Vec<(T, bool)> = scores
        .anomaly
        .iter()
        .map(|&s| (s, true))
        .chain(scores.normal.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_unstable_by(|a, b| cmp_finite(a.0, b.0));

    // Sum of doubled midranks of the anomaly class. A tie block occupying
    // 1-based ranks i+1..=j has midrank (i+1+j)/2, i.e. doubled rank i+1+j.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let anomalies_in_block = pooled[i..j].iter().filter(|p| p.1).count() as u128;
        doubled_rank_sum += anomalies_in_block * (i as u128 + 1 + j as u128);
        i = j;
    }

    // 2U = 2R − n_a(n_a + 1)
    let doubled_u = doubled_rank_sum - n_a * (n_a + 1);
    Ok(ratio(doubled_u, 2 * n_a * n_n))
}

fn ratio<T: Scalar>(num: u128, den: u128) -> T {
    T::lit(num as f64 / den as f64)
}

#[inline]
fn cmp_finite<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).expect("finite scores are totally ordered")
}

/// A point on the ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub fpr: T,
    pub tpr: T,
}

/// ROC curve obtained by sweeping the decision threshold from `+∞` down
/// through every distinct score. The first point is `(0, 0)` at `+∞`.
pub fn roc_curve<T: Scalar>(scores: &ScoreSet<T>) -> Result<Vec<RocPoint<T>>> {
    scores.check_nonempty()?;
    let mut labeled: Vec<(T, bool)> = scores
        .anomaly
        .iter()
        .map(|&s| (s, true))
        .chain(scores.normal.iter().map(|&s| (s, false)))
        .collect();
    labeled.sort_unstable_by(|a, b| cmp_finite(b.0, a.0));

    let positives = T::from_count(scores.anomaly.len());
    let negatives = T::from_count(scores.normal.len());

    let mut curve = Vec::with_capacity(labeled.len() + 1);
    curve.push(RocPoint {
        threshold: T::infinity(),
        fpr: T::zero(),
        tpr: T::zero(),
    });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < labeled.len() {
        let threshold = labeled[i].0;
        while i < labeled.len() && labeled[i].0 == threshold {
            if labeled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(RocPoint {
            threshold,
            fpr: T::from_count(fp) / negatives,
            tpr: T::from_count(tp) / positives,
        });
    }
    Ok(curve)
}

/// Area under the ROC curve by trapezoidal integration of [`roc_curve`].
pub fn auroc<T: Scalar>(scores: &ScoreSet<T>) -> Result<T> {
    let curve = roc_curve(scores)?;
    let half = T::lit(0.5);
    Ok(curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * half)
        .sum())
}

/// Mean and standard deviation of a normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> GaussianParams<T> {
    pub fn new(mean: T, std: T) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std < T::zero() {
            return Err(Error::input(format!(
                "invalid Gaussian parameters: mean {mean}, std {std}"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn cdf(&self, x: T) -> T {
        std_normal_cdf((x - self.mean) / self.std)
    }
}

/// Maximum-likelihood Gaussian fit (population standard deviation).
pub fn fit_gaussian<T: Scalar>(samples: &[T]) -> Result<GaussianParams<T>> {
    if samples.len() < 2 {
        return Err(Error::input(format!(
            "Gaussian fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    check_finite("samples", samples)?;
    let n = T::from_count(samples.len());
    let mean = samples.iter().copied().sum::<T>() / n;
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    Ok(GaussianParams {
        mean,
        std: var.sqrt(),
    })
}

/// Discrete probability distribution over contiguous bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    edges: Vec<T>,
    masses: Vec<T>,
}

impl<T: Scalar> Histogram<T> {
    /// Builds a histogram from explicit masses. Masses must be nonnegative
    /// and sum to one within `1e-9`.
    pub fn from_masses(edges: Vec<T>, masses: Vec<T>) -> Result<Self> {
        check_edges(&edges)?;
        if masses.len() + 1 != edges.len() {
            return Err(Error::input(format!(
                "{} masses for {} edges",
                masses.len(),
                edges.len()
            )));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < T::zero()) {
            return Err(Error::input("histogram masses must be finite and nonnegative"));
        }
        let total: T = masses.iter().copied().sum();
        if (total - T::one()).abs().as_f64() > 1e-9 {
            return Err(Error::input(format!("histogram masses sum to {total}, not 1")));
        }
        Ok(Self { edges, masses })
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }
}

fn check_edges<T: Scalar>(edges: &[T]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::input("histogram needs at least two edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::input("histogram edges must be finite"));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::input("histogram edges must be strictly increasing"));
    }
    Ok(())
}

/// `bins + 1` equally spaced edges covering `[lo, hi]`; the last edge is `hi`
/// exactly.
pub fn uniform_edges<T: Scalar>(lo: T, hi: T, bins: usize) -> Result<Vec<T>> {
    if bins == 0 {
        return Err(Error::input("bin count must be positive"));
    }
    if !(lo < hi) {
        return Err(Error::input(format!("empty range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / T::from_count(bins);
    let mut edges: Vec<T> = (0..bins).map(|i| lo + width * T::from_count(i)).collect();
    edges.push(hi);
    Ok(edges)
}

/// Normalized histogram of `samples` over `edges`. Samples outside the edge
/// range are clipped into the first or last bin; interior edges belong to the
/// bin on their right.
pub fn histogram<T: Scalar>(samples: &[T], edges: &[T]) -> Result<Histogram<T>> {
    check_edges(edges)?;
    if samples.is_empty() {
        return Err(Error::input("cannot histogram an empty sample"));
    }
    check_finite("samples", samples)?;
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        // Number of edges <= x, minus one, is the bin index before clipping.
        let above = edges.partition_point(|&e| e <= x);
        let bin = above.saturating_sub(1).min(bins - 1);
        counts[bin] += 1;
    }
    let n = T::from_count(samples.len());
    let masses = counts.into_iter().map(|c| T::from_count(c) / n).collect();
    Ok(Histogram {
        edges: edges.to_vec(),
        masses,
    })
}

/// Total variation distance `½ Σ|p_b − q_b|` between two histograms sharing
/// the same edges.
pub fn tvd<T: Scalar>(p: &Histogram<T>, q: &Histogram<T>) -> Result<T> {
    if p.edges != q.edges {
        return Err(Error::input("histograms have different bin edges"));
    }
    let half = T::lit(0.5);
    Ok(half
        * p.masses
            .iter()
            .zip(&q.masses)
            .map(|(&a, &b)| (a - b).abs())
            .sum::<T>())
}

/// Discretizes a Gaussian onto `edges` by CDF differences, renormalized to
/// the probability mass inside the edge range.
pub fn gaussian_histogram<T: Scalar>(fit: &GaussianParams<T>, edges: &[T]) -> Result<Histogram<T>> {
    check_edges(edges)?;
    if !(fit.std > T::zero()) {
        return Err(Error::Degenerate(format!(
            "Gaussian with std {} cannot be discretized",
            fit.std
        )));
    }
    let cdfs: Vec<T> = edges.iter().map(|&e| fit.cdf(e)).collect();
    let raw: Vec<T> = cdfs.windows(2).map(|w| (w[1] - w[0]).max(T::zero())).collect();
    let total: T = raw.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Degenerate(format!(
            "Gaussian N({}, {}²) has no mass on [{}, {}]",
            fit.mean,
            fit.std,
            edges[0],
            edges[edges.len() - 1]
        )));
    }
    let masses = raw.into_iter().map(|m| m / total).collect();
    Ok(Histogram {
        edges: edges.to_vec(),
        masses,
    })
}

/// Fits a Gaussian to `samples` and measures how far their equal-width
/// histogram over `[min, max]` is from the discretized fit.
pub fn tvd_to_gaussian<T: Scalar>(samples: &[T], bins: usize) -> Result<(GaussianParams<T>, T)> {
    if bins < 2 {
        return Err(Error::input(format!("need at least 2 bins, got {bins}")));
    }
    let fit = fit_gaussian(samples)?;
    if !(fit.std > T::zero()) {
        return Err(Error::Degenerate(format!(
            "all {} samples equal {}",
            samples.len(),
            fit.mean
        )));
    }
    let (lo, hi) = samples
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let edges = uniform_edges(lo, hi, bins)?;
    let empirical = histogram(samples, &edges)?;
    let model = gaussian_histogram(&fit, &edges)?;
    Ok((fit, tvd(&empirical, &model)?))
}

/// Gaussian fit and Gaussianity check for one score class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary<T> {
    pub count: usize,
    pub mean: T,
    pub std: T,
    pub tvd: T,
}

/// Per-class fits plus separation metrics for a labeled score set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport<T> {
    pub bins: usize,
    pub normal: ClassSummary<T>,
    pub anomaly: ClassSummary<T>,
    pub radi: T,
    pub auroc: T,
}

pub fn score_report<T: Scalar>(scores: &ScoreSet<T>, bins: usize) -> Result<ScoreReport<T>> {
    let class = |name: &str, samples: &[T]| -> Result<ClassSummary<T>> {
        let (fit, tvd) = tvd_to_gaussian(samples, bins).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::InvalidInput(format!("{name} scores: {msg}")),
            Error::Degenerate(msg) => Error::Degenerate(format!("{name} scores: {msg}")),
            other => other,
        })?;
        Ok(ClassSummary {
            count: samples.len(),
            mean: fit.mean,
            std: fit.std,
            tvd,
        })
    };
    Ok(ScoreReport {
        bins,
        normal: class("normal", &scores.normal)?,
        anomaly: class("anomaly", &scores.anomaly)?,
        radi: radi_empirical(scores)?,
        auroc: auroc(scores)?,
    })
}
