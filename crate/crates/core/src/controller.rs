//! Dual control of the overfitting stage.
//!
//! Each checkpoint reports an `(ARQ, RADI)` observation. A checkpoint is a
//! violation when the ARQ leaves its optimal interval or the windowed RADI
//! slope turns negative. Violations accumulate in a freeze counter; once the
//! counter exceeds its threshold a freeze signal is emitted and the lowest
//! unfrozen layer is frozen. Any clean checkpoint resets the counter.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed ARQ interval `[θ − δ, θ + δ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArqInterval<T> {
    pub theta: T,
    pub delta: T,
}

impl<T: Scalar> ArqInterval<T> {
    pub fn new(theta: T, delta: T) -> Result<Self> {
        if !(theta > T::zero()) || !(delta > T::zero()) {
            return Err(Error::input(format!(
                "ARQ interval needs positive theta and delta, got ({theta}, {delta})"
            )));
        }
        if theta - delta < T::zero() {
            return Err(Error::input(format!(
                "ARQ interval lower bound {} is negative",
                theta - delta
            )));
        }
        Ok(Self { theta, delta })
    }

    /// `[0.001, 0.011]`, the one-class setting.
    pub fn one_class() -> Self {
        Self {
            theta: T::lit(0.006),
            delta: T::lit(0.005),
        }
    }

    /// `[0.01, 0.11]`, the multi-class setting.
    pub fn multi_class() -> Self {
        Self {
            theta: T::lit(0.06),
            delta: T::lit(0.05),
        }
    }

    pub fn lower(&self) -> T {
        self.theta - self.delta
    }

    pub fn upper(&self) -> T {
        self.theta + self.delta
    }

    pub fn contains(&self, arq: T) -> bool {
        arq_in_interval(arq, self)
    }
}

/// Whether `arq` lies in the closed interval.
pub fn arq_in_interval<T: Scalar>(arq: T, interval: &ArqInterval<T>) -> bool {
    interval.lower() <= arq && arq <= interval.upper()
}

/// Least-squares slope of RADI against ARQ over `(arq, radi)` observations.
///
/// Returns `None` when the slope is undefined: fewer than two observations
/// or all ARQ values identical.
pub fn estimate_radi_gradient<T: Scalar>(window: &[(T, T)]) -> Option<T> {
    if window.len() < 2 {
        return None;
    }
    let n = T::from_count(window.len());
    let mean_x = window.iter().map(|o| o.0).sum::<T>() / n;
    let mean_y = window.iter().map(|o| o.1).sum::<T>() / n;
    let (sxy, sxx) = window.iter().fold((T::zero(), T::zero()), |(sxy, sxx), &(x, y)| {
        let dx = x - mean_x;
        (sxy + dx * (y - mean_y), sxx + dx * dx)
    });
    if sxx == T::zero() {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Continue,
    IncrementCounter,
    EmitFreezeSignal,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Continue => "Continue",
            Verdict::IncrementCounter => "IncrementCounter",
            Verdict::EmitFreezeSignal => "EmitFreezeSignal",
        }
    }
}

/// Why a checkpoint was or was not a violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionReason<T> {
    pub arq_out_of_interval: bool,
    pub radi_gradient_negative: bool,
    /// Windowed slope, `0` when undefined.
    pub gradient_estimate: T,
    pub gradient_defined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision<T> {
    pub verdict: Verdict,
    pub reason: DecisionReason<T>,
    /// Counter value after this decision.
    pub freeze_counter: usize,
}

impl<T: Scalar> ControlDecision<T> {
    pub fn is_violation(&self) -> bool {
        self.reason.arq_out_of_interval || self.reason.radi_gradient_negative
    }
}

/// Anything with an ordered list of freezable layers.
pub trait Freezable {
    fn layer_count(&self) -> usize;
    fn is_layer_frozen(&self, index: usize) -> bool;
    fn freeze_layer(&mut self, index: usize);
}

impl Freezable for [bool] {
    fn layer_count(&self) -> usize {
        self.len()
    }
    fn is_layer_frozen(&self, index: usize) -> bool {
        self[index]
    }
    fn freeze_layer(&mut self, index: usize) {
        self[index] = true;
    }
}

impl Freezable for Vec<bool> {
    fn layer_count(&self) -> usize {
        self.len()
    }
    fn is_layer_frozen(&self, index: usize) -> bool {
        self[index]
    }
    fn freeze_layer(&mut self, index: usize) {
        self[index] = true;
    }
}

pub const DEFAULT_FREEZE_THRESHOLD: usize = 3;
pub const DEFAULT_GRADIENT_WINDOW: usize = 5;

/// Mutable state of one controller; owned by a single training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState<T> {
    freeze_counter: usize,
    freeze_threshold: usize,
    window_len: usize,
    history: VecDeque<(T, T)>,
    frozen_layers: Vec<usize>,
    signals_emitted: usize,
}

impl<T: Scalar> Default for ControllerState<T> {
    fn default() -> Self {
        Self::new(DEFAULT_FREEZE_THRESHOLD, DEFAULT_GRADIENT_WINDOW)
            .expect("defaults are valid")
    }
}

impl<T: Scalar> ControllerState<T> {
    pub fn new(freeze_threshold: usize, window_len: usize) -> Result<Self> {
        if freeze_threshold == 0 {
            return Err(Error::input("freeze threshold must be positive"));
        }
        if window_len < 2 {
            return Err(Error::input(format!(
                "gradient window must hold at least 2 observations, got {window_len}"
            )));
        }
        Ok(Self {
            freeze_counter: 0,
            freeze_threshold,
            window_len,
            history: VecDeque::with_capacity(window_len),
            frozen_layers: Vec::new(),
            signals_emitted: 0,
        })
    }

    pub fn freeze_counter(&self) -> usize {
        self.freeze_counter
    }

    pub fn freeze_threshold(&self) -> usize {
        self.freeze_threshold
    }

    pub fn frozen_layers(&self) -> &[usize] {
        &self.frozen_layers
    }

    pub fn signals_emitted(&self) -> usize {
        self.signals_emitted
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &(T, T)> {
        self.history.iter()
    }

    /// Counter update for one checkpoint, given whether it violated the
    /// dual condition.
    pub fn record_violation(&mut self, violation: bool) -> Verdict {
        if !violation {
            self.freeze_counter = 0;
            return Verdict::Continue;
        }
        self.freeze_counter += 1;
        if self.freeze_counter > self.freeze_threshold {
            self.freeze_counter = 0;
            self.signals_emitted += 1;
            Verdict::EmitFreezeSignal
        } else {
            Verdict::IncrementCounter
        }
    }

    /// Feeds one observation through the dual control check.
    pub fn dual_control_step(
        &mut self,
        arq: T,
        radi: T,
        interval: &ArqInterval<T>,
    ) -> ControlDecision<T> {
        if self.history.len() == self.window_len {
            self.history.pop_front();
        }
        self.history.push_back((arq, radi));
        let window: Vec<(T, T)> = self.history.iter().copied().collect();
        let slope = estimate_radi_gradient(&window);
        let gradient_estimate = slope.unwrap_or_else(T::zero);

        let reason = DecisionReason {
            arq_out_of_interval: !arq_in_interval(arq, interval),
            radi_gradient_negative: gradient_estimate < T::zero(),
            gradient_estimate,
            gradient_defined: slope.is_some(),
        };
        let verdict =
            self.record_violation(reason.arq_out_of_interval || reason.radi_gradient_negative);
        ControlDecision {
            verdict,
            reason,
            freeze_counter: self.freeze_counter,
        }
    }

    /// Freezes the lowest-index unfrozen layer and records it.
    pub fn freeze_next_layer<L: Freezable + ?Sized>(&mut self, layers: &mut L) -> Result<usize> {
        let next = (0..layers.layer_count()).find(|&i| !layers.is_layer_frozen(i));
        match next {
            Some(i) => {
                layers.freeze_layer(i);
                self.frozen_layers.push(i);
                self.freeze_counter = 0;
                Ok(i)
            }
            None => Err(Error::LayersExhausted {
                layers: layers.layer_count(),
            }),
        }
    }
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: u64,
    pub arq: f64,
    pub radi: f64,
    pub gradient: f64,
    pub verdict: String,
    pub frozen_layer: Option<usize>,
}

impl DecisionRecord {
    pub fn new<T: Scalar>(
        step: u64,
        arq: T,
        radi: T,
        decision: &ControlDecision<T>,
        frozen_layer: Option<usize>,
    ) -> Self {
        Self {
            step,
            arq: arq.as_f64(),
            radi: radi.as_f64(),
            gradient: decision.reason.gradient_estimate.as_f64(),
            verdict: decision.verdict.as_str().to_string(),
            frozen_layer,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("decision record serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> ArqInterval<f64> {
        ArqInterval::new(0.006, 0.005).unwrap()
    }

    #[test]
    fn interval_membership() {
        let iv = interval();
        assert!(arq_in_interval(0.006, &iv));
        assert!(arq_in_interval(iv.lower(), &iv));
        assert!(arq_in_interval(iv.upper(), &iv));
        assert!(!arq_in_interval(0.012, &iv));
        assert!(!arq_in_interval(0.0, &iv));
        assert_eq!(ArqInterval::<f64>::one_class(), iv);
        let mc = ArqInterval::<f64>::multi_class();
        assert!((mc.lower() - 0.01).abs() < 1e-15 && (mc.upper() - 0.11).abs() < 1e-15);
        assert!(ArqInterval::new(0.001, 0.002).is_err());
        assert!(ArqInterval::new(0.0, 0.0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = estimate_radi_gradient::<f64>(&[(0.001, 0.90), (0.002, 0.92)]).unwrap();
        assert!((g - 20.0).abs() < 1e-9);
        assert_eq!(estimate_radi_gradient(&[(0.1, 0.5), (0.2, 0.5), (0.4, 0.5)]), Some(0.0));
        let g = estimate_radi_gradient::<f64>(&[(0.01, 0.95), (0.02, 0.94), (0.03, 0.92)]).unwrap();
        assert!((g + 1.5).abs() < 1e-9);
        assert_eq!(estimate_radi_gradient(&[(0.1, 0.5), (0.1, 0.7)]), None);
        assert_eq!(estimate_radi_gradient(&[(0.1, 0.5)]), None);
    }

    #[test]
    fn clean_step_continues() {
        let mut c = ControllerState::<f64>::default();
        let d = c.dual_control_step(0.005, 0.90, &interval());
        assert_eq!(d.verdict, Verdict::Continue);
        let d = c.dual_control_step(0.006, 0.91, &interval());
        assert_eq!(d.verdict, Verdict::Continue);
        assert_eq!(c.freeze_counter(), 0);
        assert!(d.reason.gradient_estimate > 0.0);
    }

    #[test]
    fn four_violations_emit_at_threshold_three() {
        let mut c = ControllerState::<f64>::new(3, 5).unwrap();
        let verdicts: Vec<Verdict> = (0..4)
            .map(|_| c.dual_control_step(0.5, 0.9, &interval()).verdict)
            .collect();
        assert_eq!(
            verdicts,
            vec![
                Verdict::IncrementCounter,
                Verdict::IncrementCounter,
                Verdict::IncrementCounter,
                Verdict::EmitFreezeSignal
            ]
        );
        assert_eq!(c.freeze_counter(), 0);
        assert_eq!(c.signals_emitted(), 1);
    }

    #[test]
    fn broken_streak_resets() {
        let mut c = ControllerState::<f64>::new(3, 5).unwrap();
        c.dual_control_step(0.5, 0.9, &interval());
        assert_eq!(c.freeze_counter(), 1);
        let d = c.dual_control_step(0.006, 0.9, &interval());
        assert_eq!(d.verdict, Verdict::Continue);
        assert_eq!(c.freeze_counter(), 0);
    }

    #[test]
    fn negative_gradient_is_a_violation() {
        let mut c = ControllerState::<f64>::new(3, 5).unwrap();
        c.dual_control_step(0.004, 0.95, &interval());
        let d = c.dual_control_step(0.006, 0.90, &interval());
        assert!(d.reason.radi_gradient_negative);
        assert!(!d.reason.arq_out_of_interval);
        assert_eq!(d.verdict, Verdict::IncrementCounter);
    }

    #[test]
    fn window_is_bounded() {
        let mut c = ControllerState::<f64>::new(3, 3).unwrap();
        for i in 0..10 {
            c.dual_control_step(0.001 * i as f64, 0.5, &interval());
        }
        assert_eq!(c.history().len(), 3);
    }

    #[test]
    fn freeze_lowest_first() {
        let mut c = ControllerState::<f64>::default();
        let mut layers = vec![false, false, false];
        assert_eq!(c.freeze_next_layer(&mut layers).unwrap(), 0);
        assert_eq!(layers, vec![true, false, false]);
        let mut layers = vec![true, false, false];
        assert_eq!(c.freeze_next_layer(&mut layers).unwrap(), 1);
        let mut layers = vec![true, true, true];
        assert!(matches!(
            c.freeze_next_layer(&mut layers),
            Err(Error::LayersExhausted { layers: 3 })
        ));
        assert_eq!(c.frozen_layers(), &[0, 1]);
    }

    #[test]
    fn decision_record_json_shape() {
        let mut c = ControllerState::<f64>::default();
        let d = c.dual_control_step(0.5, 0.75, &interval());
        let line = DecisionRecord::new(7, 0.5, 0.75, &d, None).to_json_line();
        assert_eq!(
            line,
            r#"{"step":7,"arq":0.5,"radi":0.75,"gradient":0.0,"verdict":"IncrementCounter","frozen_layer":null}"#
        );
        let back: DecisionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.step, 7);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ControllerState::<f64>::new(0, 5).is_err());
        assert!(ControllerState::<f64>::new(3, 1).is_err());
    }
}
