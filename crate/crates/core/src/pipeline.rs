//! Two-stage teacher/student training on synthetic data.
//!
//! The teacher is a fixed random network. The student learns to reproduce
//! the teacher's features on normal samples; the per-sample discrepancy is the
//! anomaly score. After a standard stage at learning rate `α` the run enters
//! the overfitting stage at exactly `α / 10`, where each checkpoint feeds
//! `(ARQ, RADI)` into the dual controller and freeze signals freeze the
//! student's lowest unfrozen layer.
//!
//! * ARQ at a checkpoint compares student features (prediction) against
//!   teacher features (ground truth) over the normal training set.
//! * The controller's RADI uses a fixed set of Gaussian pseudo-anomalies
//!   (normal eval samples plus input noise) as the anomalous class.
//! * Every checkpoint also records held-out RADI against the true synthetic
//!   anomalies, which the controller never sees.
//! * In the overfitting stage each batch also carries noisy copies of its
//!   samples, and a hinge term keeps their reconstruction error above
//!   `anomaly_margin`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{parse_value, KvConfig};
use crate::controller::{ArqInterval, ControllerState, DecisionRecord, Verdict};
use crate::error::{Error, Result};
use crate::metrics::{arq, auroc, radi_empirical, ScoreSet};
use crate::seed::derive_seed;
use crate::toynet::{anomaly_score, inject_gaussian_noise_with, Activation, ScoreRule, ToyNetwork};

pub const INPUT_DIM: usize = 8;
pub const BLOBS: usize = 3;

/// Training configuration. Every field maps to the flat config key of the
/// same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub standard_epochs: usize,
    pub overfit_epochs: usize,
    pub learning_rate: f64,
    pub noise_sigma: f64,
    pub arq_theta: f64,
    pub arq_delta: f64,
    pub c_thr: usize,
    pub gradient_window: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub anomaly_shift: f64,
    /// Cap on eval samples per class used for checkpoint RADI.
    pub eval_subset: usize,
    /// Percentile of normal training scores used as the inference threshold.
    pub percentile: f64,
    pub score_rule: ScoreRule,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    /// Weight of the hinge term pushing pseudo-anomaly error above `anomaly_margin`.
    pub anomaly_weight: f64,
    pub anomaly_margin: f64,
    /// Scale applied to the teacher's random weights.
    pub teacher_gain: f64,
}

pub const TRAIN_KEYS: [&str; 21] = [
    "standard_epochs",
    "overfit_epochs",
    "learning_rate",
    "noise_sigma",
    "arq_theta",
    "arq_delta",
    "c_thr",
    "gradient_window",
    "seed",
    "batch_size",
    "n_train",
    "n_eval",
    "anomaly_shift",
    "eval_subset",
    "percentile",
    "score_rule",
    "hidden_dim",
    "feature_dim",
    "anomaly_weight",
    "anomaly_margin",
    "teacher_gain",
];

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            standard_epochs: 5,
            overfit_epochs: 40,
            learning_rate: 0.05,
            noise_sigma: 1.0,
            arq_theta: 0.2,
            arq_delta: 0.15,
            c_thr: 8,
            gradient_window: crate::controller::DEFAULT_GRADIENT_WINDOW,
            seed: 0,
            batch_size: 16,
            n_train: 1000,
            n_eval: 512,
            anomaly_shift: 3.0,
            eval_subset: 512,
            percentile: 99.0,
            score_rule: ScoreRule::L1Mean,
            hidden_dim: 32,
            feature_dim: 16,
            anomaly_weight: 0.5,
            anomaly_margin: 1.0,
            teacher_gain: 2.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.standard_epochs == 0 || self.overfit_epochs == 0 {
            return Err(Error::input("standard_epochs and overfit_epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::input(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::input("noise_sigma must be positive"));
        }
        self.interval()?;
        if self.c_thr == 0 {
            return Err(Error::input("c_thr must be at least 1"));
        }
        if self.gradient_window < 2 {
            return Err(Error::input("gradient_window must be at least 2"));
        }
        if self.batch_size == 0 {
            return Err(Error::input("batch_size must be at least 1"));
        }
        if self.n_train < 10 || self.n_eval < 10 {
            return Err(Error::input("n_train and n_eval must be at least 10"));
        }
        if !(self.anomaly_shift > 0.0 && self.anomaly_shift.is_finite()) {
            return Err(Error::input("anomaly_shift must be positive"));
        }
        if self.eval_subset < 2 {
            return Err(Error::input("eval_subset must be at least 2"));
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(Error::input("percentile must be in (0, 100]"));
        }
        if self.hidden_dim == 0 || self.feature_dim == 0 {
            return Err(Error::input("hidden_dim and feature_dim must be positive"));
        }
        if !(self.anomaly_weight >= 0.0 && self.anomaly_weight.is_finite()) {
            return Err(Error::input("anomaly_weight must be non-negative"));
        }
        if !(self.anomaly_margin >= 0.0 && self.anomaly_margin.is_finite()) {
            return Err(Error::input("anomaly_margin must be non-negative"));
        }
        if !(self.teacher_gain > 0.0 && self.teacher_gain.is_finite()) {
            return Err(Error::input("teacher_gain must be positive"));
        }
        Ok(())
    }

    pub fn interval(&self) -> Result<ArqInterval<f64>> {
        ArqInterval::new(self.arq_theta, self.arq_delta)
    }

    pub fn overfit_learning_rate(&self) -> f64 {
        self.learning_rate / 10.0
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "standard_epochs" => self.standard_epochs = parse_value(key, value)?,
            "overfit_epochs" => self.overfit_epochs = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_value(key, value)?,
            "arq_theta" => self.arq_theta = parse_value(key, value)?,
            "arq_delta" => self.arq_delta = parse_value(key, value)?,
            "c_thr" => self.c_thr = parse_value(key, value)?,
            "gradient_window" => self.gradient_window = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "n_train" => self.n_train = parse_value(key, value)?,
            "n_eval" => self.n_eval = parse_value(key, value)?,
            "anomaly_shift" => self.anomaly_shift = parse_value(key, value)?,
            "eval_subset" => self.eval_subset = parse_value(key, value)?,
            "percentile" => self.percentile = parse_value(key, value)?,
            "score_rule" => self.score_rule = value.parse()?,
            "hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "feature_dim" => self.feature_dim = parse_value(key, value)?,
            "anomaly_weight" => self.anomaly_weight = parse_value(key, value)?,
            "anomaly_margin" => self.anomaly_margin = parse_value(key, value)?,
            "teacher_gain" => self.teacher_gain = parse_value(key, value)?,
            other => return Err(Error::input(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Defaults overlaid with every assignment in `config`.
    pub fn from_config(config: &KvConfig) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in config.iter() {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let kv = [
            ("standard_epochs", self.standard_epochs.to_string()),
            ("overfit_epochs", self.overfit_epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("arq_theta", self.arq_theta.to_string()),
            ("arq_delta", self.arq_delta.to_string()),
            ("c_thr", self.c_thr.to_string()),
            ("gradient_window", self.gradient_window.to_string()),
            ("seed", self.seed.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("n_train", self.n_train.to_string()),
            ("n_eval", self.n_eval.to_string()),
            ("anomaly_shift", self.anomaly_shift.to_string()),
            ("eval_subset", self.eval_subset.to_string()),
            ("percentile", self.percentile.to_string()),
            ("score_rule", self.score_rule.as_str().to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("anomaly_weight", self.anomaly_weight.to_string()),
            ("anomaly_margin", self.anomaly_margin.to_string()),
            ("teacher_gain", self.teacher_gain.to_string()),
        ];
        for (k, v) in kv {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Gaussian-blob data in [`INPUT_DIM`] dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub centers: Vec<Vec<f64>>,
    pub blob_std: f64,
    /// Unit vector along which anomalies are displaced.
    pub shift_direction: Vec<f64>,
    pub anomaly_shift: f64,
    pub normal_train: Vec<Vec<f64>>,
    pub normal_eval: Vec<Vec<f64>>,
    pub anomaly_eval: Vec<Vec<f64>>,
}

/// Normal samples come from [`BLOBS`] isotropic blobs with unit spread and
/// centers uniform in `[-3, 3]^8`; anomalies come from the same blobs
/// translated by `anomaly_shift` along one random unit direction.
pub fn make_synthetic_dataset(
    seed: u64,
    n_train: usize,
    n_eval: usize,
    anomaly_shift: f64,
) -> Result<SyntheticDataset> {
    if n_train < 10 || n_eval < 10 {
        return Err(Error::input("dataset counts must be at least 10"));
    }
    if !(anomaly_shift > 0.0 && anomaly_shift.is_finite()) {
        return Err(Error::input(format!(
            "anomaly_shift {anomaly_shift} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..BLOBS)
        .map(|_| (0..INPUT_DIM).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let mut direction: Vec<f64> = (0..INPUT_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|d| *d /= norm);
    let blob_std = 1.0;

    let draw = |n: usize, offset: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let c = &centers[i % BLOBS];
                c.iter()
                    .zip(&direction)
                    .map(|(&ci, &di)| {
                        let e: f64 = StandardNormal.sample(rng);
                        ci + offset * di + blob_std * e
                    })
                    .collect()
            })
            .collect()
    };
    let normal_train = draw(n_train, 0.0, &mut rng);
    let normal_eval = draw(n_eval, 0.0, &mut rng);
    let anomaly_eval = draw(n_eval, anomaly_shift, &mut rng);
    Ok(SyntheticDataset {
        centers,
        blob_std,
        shift_direction: direction,
        anomaly_shift,
        normal_train,
        normal_eval,
        anomaly_eval,
    })
}

impl SyntheticDataset {
    /// CSV with columns `split,label,x0..x7`; label 1 marks anomalies.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,label");
        for i in 0..INPUT_DIM {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        let mut emit = |split: &str, label: u8, rows: &[Vec<f64>]| {
            for r in rows {
                let _ = write!(s, "{split},{label}");
                for v in r {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
        };
        emit("train", 0, &self.normal_train);
        emit("eval", 0, &self.normal_eval);
        emit("eval", 1, &self.anomaly_eval);
        s
    }
}

/// Builds the frozen teacher: `8 → hidden → feature` with tanh then relu.
/// The output bias is lifted so teacher features are mostly positive, which
/// keeps the ARQ denominator well away from zero.
pub fn make_teacher(config: &TrainConfig) -> Result<ToyNetwork<f64>> {
    let mut t = ToyNetwork::random(
        &[INPUT_DIM, config.hidden_dim, config.feature_dim],
        &[Activation::Tanh, Activation::Relu],
        derive_seed(config.seed, "teacher"),
    )?;
    t.layer_mut(1).bias.iter_mut().for_each(|b| *b = 1.0);
    for i in 0..2 {
        t.layer_mut(i)
            .weights
            .iter_mut()
            .for_each(|w| *w *= config.teacher_gain);
    }
    t.freeze_all();
    Ok(t)
}

/// Builds the student: `8 → hidden → hidden → feature`, three layers so the
/// freeze order is observable.
pub fn make_student(config: &TrainConfig) -> Result<ToyNetwork<f64>> {
    ToyNetwork::random(
        &[INPUT_DIM, config.hidden_dim, config.hidden_dim, config.feature_dim],
        &[Activation::Tanh, Activation::Tanh, Activation::Identity],
        derive_seed(config.seed, "student"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Standard,
    Overfit,
}

/// Controller output attached to an overfitting-stage checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDecision {
    pub verdict: Verdict,
    pub gradient: f64,
    pub arq_out_of_interval: bool,
    pub radi_gradient_negative: bool,
    pub freeze_counter: usize,
    pub frozen_layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub stage: Stage,
    /// 1-based epoch within the stage.
    pub epoch: usize,
    /// Global checkpoint index, strictly increasing across stages.
    pub step: u64,
    pub learning_rate: f64,
    /// Mean training loss over the epoch.
    pub loss: f64,
    pub arq: f64,
    /// RADI of pseudo-anomalies against normal eval samples.
    pub radi_eval: f64,
    /// RADI of true anomalies against normal eval samples.
    pub radi_heldout: f64,
    pub decision: Option<CheckpointDecision>,
    pub frozen_layers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    LayersExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub checkpoints: usize,
    pub stop_reason: StopReason,
    pub standard_end_arq: f64,
    pub standard_end_radi: f64,
    pub final_arq: f64,
    pub final_radi_eval: f64,
    pub final_radi: f64,
    pub final_auroc: f64,
    pub frozen_layers: Vec<usize>,
    pub freeze_signals: usize,
    pub threshold: f64,
    pub flagged_normal_eval: usize,
    pub flagged_anomaly_eval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<CheckpointRecord>,
    pub summary: RunSummary,
}

impl RunLog {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    /// Decision log lines for the overfitting stage.
    pub fn decisions_jsonl(&self) -> String {
        self.records
            .iter()
            .filter_map(|r| {
                r.decision.as_ref().map(|d| {
                    DecisionRecord {
                        step: r.step,
                        arq: r.arq,
                        radi: r.radi_eval,
                        gradient: d.gradient,
                        verdict: d.verdict.as_str().to_string(),
                        frozen_layer: d.frozen_layer,
                    }
                    .to_json_line()
                        + "\n"
                })
            })
            .collect()
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    pub fn records_from_jsonl(text: &str) -> Result<Vec<CheckpointRecord>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }
}

/// Held-out evaluation material fixed for the whole run.
#[derive(Debug, Clone)]
struct EvalSets {
    normal: Vec<Vec<f64>>,
    pseudo: Vec<Vec<f64>>,
    anomaly: Vec<Vec<f64>>,
}

impl EvalSets {
    fn new(config: &TrainConfig, data: &SyntheticDataset) -> Self {
        let n = config.eval_subset.min(data.normal_eval.len());
        let normal: Vec<Vec<f64>> = data.normal_eval[..n].to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "pseudo-anomaly-eval"));
        let pseudo = normal
            .iter()
            .map(|x| inject_gaussian_noise_with(&mut rng, x, config.noise_sigma))
            .collect();
        let m = config.eval_subset.min(data.anomaly_eval.len());
        Self {
            normal,
            pseudo,
            anomaly: data.anomaly_eval[..m].to_vec(),
        }
    }
}

/// Per-sample anomaly scores of `samples` under the teacher/student pair.
pub fn score_samples(
    teacher: &ToyNetwork<f64>,
    student: &ToyNetwork<f64>,
    samples: &[Vec<f64>],
    rule: ScoreRule,
) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|x| anomaly_score(&teacher.forward(x)?, &student.forward(x)?, rule))
        .collect()
}

/// ARQ of student features against teacher features over `samples`.
pub fn feature_arq(
    teacher: &ToyNetwork<f64>,
    student: &ToyNetwork<f64>,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let mut predicted = Vec::with_capacity(samples.len() * student.output_dim());
    let mut truth = Vec::with_capacity(predicted.capacity());
    for x in samples {
        predicted.extend(student.forward(x)?);
        truth.extend(teacher.forward(x)?);
    }
    arq(&predicted, &truth)
}

struct Checkpoint {
    arq: f64,
    radi_eval: f64,
    radi_heldout: f64,
}

fn measure(
    config: &TrainConfig,
    teacher: &ToyNetwork<f64>,
    student: &ToyNetwork<f64>,
    data: &SyntheticDataset,
    eval: &EvalSets,
) -> Result<Checkpoint> {
    let rule = config.score_rule;
    let normal = score_samples(teacher, student, &eval.normal, rule)?;
    let pseudo = score_samples(teacher, student, &eval.pseudo, rule)?;
    let anomaly = score_samples(teacher, student, &eval.anomaly, rule)?;
    Ok(Checkpoint {
        arq: feature_arq(teacher, student, &data.normal_train)?,
        radi_eval: radi_empirical(&ScoreSet::new(normal.clone(), pseudo)?)?,
        radi_heldout: radi_empirical(&ScoreSet::new(normal, anomaly)?)?,
    })
}

/// One pass over the shuffled normal training set. Each batch also draws a
/// matching batch of Gaussian pseudo-anomalies, which advances the noise
/// stream but contributes no loss term.
/// One SGD step on the batch reconstruction loss plus, when
/// `anomaly_weight > 0`, the pseudo-anomaly hinge `anomaly_weight · mean(max(0, anomaly_margin − mse(S(x̃), T(x̃))))`. Returns the reconstruction
/// loss before the update.
fn train_step(
    anomaly_weight: f64,
    anomaly_margin: f64,
    teacher: &ToyNetwork<f64>,
    student: &mut ToyNetwork<f64>,
    xs: &[&[f64]],
    targets: &[Vec<f64>],
    pseudo: &[Vec<f64>],
    learning_rate: f64,
) -> Result<f64> {
    if anomaly_weight == 0.0 {
        return student.train_batch(xs, targets, learning_rate);
    }
    let mut total = student.zero_gradients();
    let mut loss = 0.0;
    let inv_n = 1.0 / xs.len() as f64;
    for (x, y) in xs.iter().zip(targets) {
        let (l, g) = student.gradients(x, y)?;
        loss += l;
        for (acc, gi) in total.iter_mut().zip(&g) {
            acc.add_scaled(gi, inv_n);
        }
    }
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::Divergence { step: 0, loss });
    }
    let push = -anomaly_weight / pseudo.len() as f64;
    for x in pseudo {
        let y = teacher.forward(x)?;
        let (l, g) = student.gradients(x, &y)?;
        if l < anomaly_margin {
            for (acc, gi) in total.iter_mut().zip(&g) {
                acc.add_scaled(gi, push);
            }
        }
    }
    student.apply_step(&total, learning_rate)?;
    Ok(loss)
}

fn train_epoch(
    config: &TrainConfig,
    teacher: &ToyNetwork<f64>,
    student: &mut ToyNetwork<f64>,
    data: &SyntheticDataset,
    learning_rate: f64,
    rng: &mut ChaCha8Rng,
    step: u64,
    stage: Stage,
) -> Result<f64> {
    let anomaly_weight = match stage {
        Stage::Standard => 0.0,
        Stage::Overfit => config.anomaly_weight,
    };
    let mut order: Vec<usize> = (0..data.normal_train.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(config.batch_size) {
        let xs: Vec<&[f64]> = chunk.iter().map(|&i| data.normal_train[i].as_slice()).collect();
        let targets = xs
            .iter()
            .map(|x| teacher.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let pseudo: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| inject_gaussian_noise_with(rng, x, config.noise_sigma))
            .collect();
        let loss = train_step(
            anomaly_weight,
            config.anomaly_margin,
            teacher,
            student,
            &xs,
            &targets,
            &pseudo,
            learning_rate,
        )
            .map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence {
                    step: step as usize,
                    loss,
                },
                other => other,
            })?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Mutable state of one run, threaded through both stages.
pub struct Run<'a> {
    pub config: &'a TrainConfig,
    pub teacher: &'a ToyNetwork<f64>,
    pub student: &'a mut ToyNetwork<f64>,
    pub data: &'a SyntheticDataset,
    eval: EvalSets,
    rng: ChaCha8Rng,
    next_step: u64,
}

impl<'a> Run<'a> {
    pub fn new(
        config: &'a TrainConfig,
        teacher: &'a ToyNetwork<f64>,
        student: &'a mut ToyNetwork<f64>,
        data: &'a SyntheticDataset,
    ) -> Result<Self> {
        config.validate()?;
        if student.layers().len() < 2 {
            return Err(Error::input("student needs at least 2 layers"));
        }
        Ok(Self {
            eval: EvalSets::new(config, data),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "train-order")),
            config,
            teacher,
            student,
            data,
            next_step: 0,
        })
    }

    /// Standard stage: `standard_epochs` epochs at the base learning rate,
    /// no controller.
    pub fn run_standard_stage(&mut self) -> Result<Vec<CheckpointRecord>> {
        let lr = self.config.learning_rate;
        let mut records = Vec::with_capacity(self.config.standard_epochs);
        for epoch in 1..=self.config.standard_epochs {
            let step = self.next_step;
            let loss = train_epoch(
                self.config,
                self.teacher,
                self.student,
                self.data,
                lr,
                &mut self.rng,
                step,
                Stage::Standard,
            )?;
            let m = measure(self.config, self.teacher, self.student, self.data, &self.eval)?;
            records.push(CheckpointRecord {
                stage: Stage::Standard,
                epoch,
                step,
                learning_rate: lr,
                loss,
                arq: m.arq,
                radi_eval: m.radi_eval,
                radi_heldout: m.radi_heldout,
                decision: None,
                frozen_layers: Vec::new(),
            });
            self.next_step += 1;
        }
        Ok(records)
    }

    /// Overfitting stage at `α / 10` under dual control. Stops after
    /// `overfit_epochs` or when a freeze signal finds no layer left.
    pub fn run_overfit_stage(
        &mut self,
        controller: &mut ControllerState<f64>,
    ) -> Result<(Vec<CheckpointRecord>, StopReason)> {
        let lr = self.config.overfit_learning_rate();
        let interval = self.config.interval()?;
        let mut records = Vec::with_capacity(self.config.overfit_epochs);
        for epoch in 1..=self.config.overfit_epochs {
            let step = self.next_step;
            let loss = train_epoch(
                self.config,
                self.teacher,
                self.student,
                self.data,
                lr,
                &mut self.rng,
                step,
                Stage::Overfit,
            )?;
            let m = measure(self.config, self.teacher, self.student, self.data, &self.eval)?;
            let decision = controller.dual_control_step(m.arq, m.radi_eval, &interval);
            let mut exhausted = false;
            let frozen_layer = if decision.verdict == Verdict::EmitFreezeSignal {
                match controller.freeze_next_layer(self.student) {
                    Ok(i) => Some(i),
                    Err(Error::LayersExhausted { .. }) => {
                        exhausted = true;
                        None
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            records.push(CheckpointRecord {
                stage: Stage::Overfit,
                epoch,
                step,
                learning_rate: lr,
                loss,
                arq: m.arq,
                radi_eval: m.radi_eval,
                radi_heldout: m.radi_heldout,
                decision: Some(CheckpointDecision {
                    verdict: decision.verdict,
                    gradient: decision.reason.gradient_estimate,
                    arq_out_of_interval: decision.reason.arq_out_of_interval,
                    radi_gradient_negative: decision.reason.radi_gradient_negative,
                    freeze_counter: decision.freeze_counter,
                    frozen_layer,
                }),
                frozen_layers: controller.frozen_layers().to_vec(),
            });
            self.next_step += 1;
            if exhausted {
                return Ok((records, StopReason::LayersExhausted));
            }
        }
        Ok((records, StopReason::Completed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InferenceVerdict {
    Normal,
    Anomalous,
}

/// Nearest-rank percentile: the smallest score with at least `p`% of the
/// scores at or below it. At most `(100 − p)%` of `scores` exceed it.
pub fn percentile_threshold(scores: &[f64], p: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::input("no reference scores for threshold"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::input(format!("percentile {p} outside (0, 100]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Scores each sample and classifies it as anomalous iff its score is
/// strictly above `threshold`.
pub fn run_inference(
    teacher: &ToyNetwork<f64>,
    student: &ToyNetwork<f64>,
    samples: &[Vec<f64>],
    threshold: f64,
    rule: ScoreRule,
) -> Result<Vec<(f64, InferenceVerdict)>> {
    if samples.is_empty() {
        return Err(Error::input("no samples to classify"));
    }
    Ok(score_samples(teacher, student, samples, rule)?
        .into_iter()
        .map(|s| {
            let v = if s > threshold {
                InferenceVerdict::Anomalous
            } else {
                InferenceVerdict::Normal
            };
            (s, v)
        })
        .collect())
}

/// Everything a finished run produces.
pub struct Experiment {
    pub dataset: SyntheticDataset,
    pub teacher: ToyNetwork<f64>,
    pub student: ToyNetwork<f64>,
    pub log: RunLog,
}

/// Runs dataset generation, both training stages and threshold calibration.
pub fn run_experiment(config: &TrainConfig) -> Result<Experiment> {
    config.validate()?;
    let dataset = make_synthetic_dataset(
        derive_seed(config.seed, "dataset"),
        config.n_train,
        config.n_eval,
        config.anomaly_shift,
    )?;
    let teacher = make_teacher(config)?;
    let mut student = make_student(config)?;
    let mut controller = ControllerState::new(config.c_thr, config.gradient_window)?;

    let (mut records, stop_reason) = {
        let mut run = Run::new(config, &teacher, &mut student, &dataset)?;
        let mut records = run.run_standard_stage()?;
        let (overfit, stop) = run.run_overfit_stage(&mut controller)?;
        records.extend(overfit);
        (records, stop)
    };
    records.shrink_to_fit();

    let standard_end = records
        .iter()
        .rev()
        .find(|r| r.stage == Stage::Standard)
        .expect("standard stage has at least one epoch");
    let last = records.last().expect("at least one record");

    let rule = config.score_rule;
    let train_scores = score_samples(&teacher, &student, &dataset.normal_train, rule)?;
    let threshold = percentile_threshold(&train_scores, config.percentile)?;
    let normal_eval = score_samples(&teacher, &student, &dataset.normal_eval, rule)?;
    let anomaly_eval = score_samples(&teacher, &student, &dataset.anomaly_eval, rule)?;
    let full_eval = ScoreSet::new(normal_eval.clone(), anomaly_eval.clone())?;

    let summary = RunSummary {
        seed: config.seed,
        checkpoints: records.len(),
        stop_reason,
        standard_end_arq: standard_end.arq,
        standard_end_radi: standard_end.radi_heldout,
        final_arq: last.arq,
        final_radi_eval: last.radi_eval,
        final_radi: last.radi_heldout,
        final_auroc: auroc(&full_eval)?,
        frozen_layers: controller.frozen_layers().to_vec(),
        freeze_signals: controller.signals_emitted(),
        threshold,
        flagged_normal_eval: normal_eval.iter().filter(|&&s| s > threshold).count(),
        flagged_anomaly_eval: anomaly_eval.iter().filter(|&&s| s > threshold).count(),
    };
    Ok(Experiment {
        dataset,
        teacher,
        student,
        log: RunLog { records, summary },
    })
}
