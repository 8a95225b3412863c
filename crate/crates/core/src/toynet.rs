//! Small fully connected networks with hand-written backpropagation and
//! per-layer freezing. Used as both the frozen teacher and the trainable
//! student of the toy distillation setup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::controller::Freezable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

/// Affine map followed by an elementwise activation. Weights are row-major
/// `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub frozen: bool,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: Vec<T>, bias: Vec<T>, in_dim: usize, activation: Activation) -> Result<Self> {
        let layer = Self {
            in_dim,
            out_dim: bias.len(),
            activation,
            frozen: false,
            weights,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::input("layer dimensions must be positive"));
        }
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::input(format!(
                "layer {}x{} has {} weights and {} biases",
                self.out_dim,
                self.in_dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|p| !p.is_finite()) {
            return Err(Error::input("layer parameters must be finite"));
        }
        Ok(())
    }

    fn pre_activation(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut z = self.pre_activation(x);
        z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        z
    }
}

/// Gradient of the loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerGrad<T> {
    fn zeros_like(layer: &Layer<T>) -> Self {
        Self {
            weights: vec![T::zero(); layer.weights.len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, &b) in self.weights.iter_mut().zip(&other.weights) {
            *a = *a + b * scale;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a = *a + b * scale;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyNetwork<T> {
    layers: Vec<Layer<T>>,
}

pub const CHECKPOINT_FORMAT: &str = "toynet-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint<L> {
    format: String,
    input_dim: usize,
    output_dim: usize,
    layers: L,
}

impl<T: Scalar> ToyNetwork<T> {
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::input("network needs at least one layer"));
        }
        for l in &layers {
            l.validate()?;
        }
        if let Some(i) = layers.windows(2).position(|w| w[0].out_dim != w[1].in_dim) {
            return Err(Error::input(format!(
                "layer {} outputs {} values but layer {} expects {}",
                i,
                layers[i].out_dim,
                i + 1,
                layers[i + 1].in_dim
            )));
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `dims` lists the input width and
    /// then each layer's output width.
    pub fn random(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::input(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.random_range(-limit..limit)))
                    .collect();
                Layer::new(weights, vec![T::zero(); fan_out], fan_in, act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut Layer<T> {
        &mut self.layers[index]
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn frozen_flags(&self) -> Vec<bool> {
        self.layers.iter().map(|l| l.frozen).collect()
    }

    pub fn freeze_all(&mut self) {
        self.layers.iter_mut().for_each(|l| l.frozen = true);
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::input(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for l in &self.layers {
            a = l.forward(&a);
        }
        Ok(a)
    }

    /// Mean squared error between `forward(x)` and `target`.
    pub fn loss(&self, x: &[T], target: &[T]) -> Result<T> {
        let out = self.forward(x)?;
        self.check_target(target)?;
        Ok(mse(&out, target))
    }

    fn check_target(&self, target: &[T]) -> Result<()> {
        if target.len() != self.output_dim() {
            return Err(Error::input(format!(
                "target has {} values, network outputs {}",
                target.len(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Backpropagates the MSE loss of one sample.
    pub fn gradients(&self, x: &[T], target: &[T]) -> Result<(T, Vec<LayerGrad<T>>)> {
        self.check_input(x)?;
        self.check_target(target)?;

        // inputs[i] feeds layer i; pre[i], post[i] are its pre/post activations.
        let mut inputs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for l in &self.layers {
            let z = l.pre_activation(&a);
            let out: Vec<T> = z.iter().map(|&v| l.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut a, out.clone()));
            pre.push(z);
            post.push(out);
        }

        let loss = mse(&a, target);
        let scale = T::lit(2.0) / T::from_count(target.len());
        let mut delta: Vec<T> = a.iter().zip(target).map(|(&o, &t)| scale * (o - t)).collect();

        let mut grads: Vec<LayerGrad<T>> = self.layers.iter().map(LayerGrad::zeros_like).collect();
        for (i, l) in self.layers.iter().enumerate().rev() {
            // dL/dz = dL/da ⊙ act'(z)
            for (j, d) in delta.iter_mut().enumerate() {
                *d = *d * l.activation.derivative(pre[i][j], post[i][j]);
            }
            let g = &mut grads[i];
            for (j, &d) in delta.iter().enumerate() {
                g.bias[j] = d;
                let row = &mut g.weights[j * l.in_dim..(j + 1) * l.in_dim];
                for (w, &xin) in row.iter_mut().zip(&inputs[i]) {
                    *w = d * xin;
                }
            }
            if i > 0 {
                let mut next = vec![T::zero(); l.in_dim];
                for (j, &d) in delta.iter().enumerate() {
                    let row = &l.weights[j * l.in_dim..(j + 1) * l.in_dim];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n = *n + w * d;
                    }
                }
                delta = next;
            }
        }
        Ok((loss, grads))
    }

    /// Zero gradients shaped like this network's parameters.
    pub fn zero_gradients(&self) -> Vec<LayerGrad<T>> {
        self.layers.iter().map(LayerGrad::zeros_like).collect()
    }

    /// Applies `θ ← θ − lr·g` to every unfrozen layer.
    pub fn apply_step(&mut self, grads: &[LayerGrad<T>], learning_rate: T) -> Result<()> {
        let shapes_match = grads.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(grads)
                .all(|(l, g)| l.weights.len() == g.weights.len() && l.bias.len() == g.bias.len());
        if !shapes_match {
            return Err(Error::input("gradient shapes do not match the network"));
        }
        if !(learning_rate > T::zero()) {
            return Err(Error::input(format!("learning rate {learning_rate} must be positive")));
        }
        self.apply_gradients(grads, learning_rate);
        Ok(())
    }

    fn apply_gradients(&mut self, grads: &[LayerGrad<T>], learning_rate: T) {
        for (l, g) in self.layers.iter_mut().zip(grads) {
            if l.frozen {
                continue;
            }
            for (w, &dw) in l.weights.iter_mut().zip(&g.weights) {
                *w = *w - learning_rate * dw;
            }
            for (b, &db) in l.bias.iter_mut().zip(&g.bias) {
                *b = *b - learning_rate * db;
            }
        }
    }

    /// One SGD step on a single sample. Frozen layers are left untouched.
    pub fn backward_and_step(&mut self, x: &[T], target: &[T], learning_rate: T) -> Result<T> {
        self.train_batch(std::slice::from_ref(&x), std::slice::from_ref(&target), learning_rate)
    }

    /// One SGD step on the mean loss of a batch. Returns the mean loss
    /// measured before the update.
    pub fn train_batch<X: AsRef<[T]>, Y: AsRef<[T]>>(
        &mut self,
        xs: &[X],
        targets: &[Y],
        learning_rate: T,
    ) -> Result<T> {
        if xs.is_empty() || xs.len() != targets.len() {
            return Err(Error::input(format!(
                "batch has {} inputs and {} targets",
                xs.len(),
                targets.len()
            )));
        }
        if !(learning_rate > T::zero()) {
            return Err(Error::input(format!("learning rate {learning_rate} must be positive")));
        }
        let inv_n = T::one() / T::from_count(xs.len());
        let mut total: Vec<LayerGrad<T>> = self.layers.iter().map(LayerGrad::zeros_like).collect();
        let mut loss = T::zero();
        for (x, y) in xs.iter().zip(targets) {
            let (l, g) = self.gradients(x.as_ref(), y.as_ref())?;
            loss = loss + l;
            for (acc, gi) in total.iter_mut().zip(&g) {
                acc.add_scaled(gi, inv_n);
            }
        }
        let loss = loss * inv_n;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: 0,
                loss: loss.as_f64(),
            });
        }
        self.apply_gradients(&total, learning_rate);
        Ok(loss)
    }

    fn param_mut(&mut self, flat: usize) -> &mut T {
        let mut i = flat;
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index {flat} out of range");
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(&Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            layers: &self.layers,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let ck: Checkpoint<Vec<Layer<T>>> = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::input(format!("unsupported checkpoint format {:?}", ck.format)));
        }
        let net = Self::from_layers(ck.layers)?;
        if net.input_dim() != ck.input_dim || net.output_dim() != ck.output_dim {
            return Err(Error::input("checkpoint dims disagree with its layers"));
        }
        Ok(net)
    }
}

impl<T> Freezable for ToyNetwork<T> {
    fn layer_count(&self) -> usize {
        self.layers.len()
    }
    fn is_layer_frozen(&self, index: usize) -> bool {
        self.layers[index].frozen
    }
    fn freeze_layer(&mut self, index: usize) {
        self.layers[index].frozen = true;
    }
}

fn mse<T: Scalar>(out: &[T], target: &[T]) -> T {
    let sum: T = out.iter().zip(target).map(|(&o, &t)| (o - t) * (o - t)).sum();
    sum / T::from_count(out.len())
}

/// Worst relative disagreement between backprop gradients and central
/// finite differences over every parameter (frozen or not).
///
/// The relative error is `|g − fd| / max(|g|, |fd|)`; pairs where both are
/// below `1e-10` in magnitude count as agreeing.
pub fn finite_difference_gradcheck<T: Scalar>(
    net: &ToyNetwork<T>,
    x: &[T],
    target: &[T],
    epsilon: T,
) -> Result<T> {
    if !(epsilon > T::zero() && epsilon <= T::lit(1e-3)) {
        return Err(Error::input(format!("epsilon {epsilon} outside (0, 1e-3]")));
    }
    let (_, grads) = net.gradients(x, target)?;
    let analytic: Vec<T> = grads
        .iter()
        .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
        .collect();
    let mut probe = net.clone();
    let floor = T::lit(1e-10);
    let mut worst = T::zero();
    for (i, &g) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + epsilon;
        let up = probe.loss(x, target)?;
        *probe.param_mut(i) = orig - epsilon;
        let down = probe.loss(x, target)?;
        *probe.param_mut(i) = orig;
        let fd = (up - down) / (T::lit(2.0) * epsilon);
        let scale = g.abs().max(fd.abs());
        if scale < floor {
            continue;
        }
        worst = worst.max((g - fd).abs() / scale);
    }
    Ok(worst)
}

/// Gaussian pseudo-anomaly generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    pub sigma_noise: T,
    pub seed: u64,
}

impl<T: Scalar> NoiseSpec<T> {
    pub fn new(sigma_noise: T, seed: u64) -> Result<Self> {
        if !(sigma_noise > T::zero()) || !sigma_noise.is_finite() {
            return Err(Error::input(format!("noise sigma {sigma_noise} must be positive")));
        }
        Ok(Self { sigma_noise, seed })
    }
}

/// `features + ε`, `ε ~ N(0, σ²)` i.i.d., drawn from a stream seeded by
/// `spec.seed`.
pub fn inject_gaussian_noise<T: Scalar>(features: &[T], spec: &NoiseSpec<T>) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    inject_gaussian_noise_with(&mut rng, features, spec.sigma_noise)
}

/// Same as [`inject_gaussian_noise`] but drawing from a caller-owned stream.
pub fn inject_gaussian_noise_with<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    features: &[T],
    sigma: T,
) -> Vec<T> {
    let sigma = sigma.as_f64();
    features
        .iter()
        .map(|&f| {
            let e: f64 = StandardNormal.sample(rng);
            f + T::lit(sigma * e)
        })
        .collect()
}

/// Convenience for sampling an isotropic Gaussian vector.
pub fn gaussian_vector<T: Scalar, R: Rng + ?Sized>(rng: &mut R, mean: &[T], sigma: f64) -> Vec<T> {
    let n = Normal::new(0.0, sigma).expect("finite nonnegative sigma");
    mean.iter().map(|&m| m + T::lit(n.sample(rng))).collect()
}

/// How teacher/student discrepancies collapse to a scalar score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRule {
    /// Mean absolute difference.
    #[default]
    L1Mean,
    /// Mean squared difference.
    SquaredMean,
}

impl std::str::FromStr for ScoreRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1_mean" => Ok(ScoreRule::L1Mean),
            "squared_mean" => Ok(ScoreRule::SquaredMean),
            other => Err(Error::input(format!("unknown score rule {other:?}"))),
        }
    }
}

impl ScoreRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreRule::L1Mean => "l1_mean",
            ScoreRule::SquaredMean => "squared_mean",
        }
    }
}

/// Anomaly score: mean absolute teacher/student difference.
pub fn anomaly_map<T: Scalar>(teacher_out: &[T], student_out: &[T]) -> Result<T> {
    anomaly_score(teacher_out, student_out, ScoreRule::L1Mean)
}

pub fn anomaly_score<T: Scalar>(teacher_out: &[T], student_out: &[T], rule: ScoreRule) -> Result<T> {
    if teacher_out.len() != student_out.len() || teacher_out.is_empty() {
        return Err(Error::input(format!(
            "teacher output has {} values, student output {}",
            teacher_out.len(),
            student_out.len()
        )));
    }
    let sum: T = teacher_out
        .iter()
        .zip(student_out)
        .map(|(&t, &s)| match rule {
            ScoreRule::L1Mean => (t - s).abs(),
            ScoreRule::SquaredMean => (t - s) * (t - s),
        })
        .sum();
    Ok(sum / T::from_count(teacher_out.len()))
}
