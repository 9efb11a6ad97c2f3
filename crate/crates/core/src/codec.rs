//! Dimension reduction between the motor-sensory space and the reduced space.
//!
//! A fully connected autoencoder `|A| → hidden… → bottleneck → …hidden → |A|`
//! trained by per-sample backpropagation. The front half encodes, the back
//! half decodes.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::JointState;
use crate::babble::{Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Point of the motor-sensory space, every feature normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MotorSensoryPoint<T>(pub Vec<T>);

/// Point of the reduced space (bottleneck activations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReducedPoint<T>(pub Vec<T>);

impl<T> ReducedPoint<T> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Per-feature extrema of the raw training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormStats<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Real> NormStats<T> {
    pub fn from_rows<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let mut rows = rows.into_iter();
        let first = rows
            .next()
            .ok_or_else(|| Error::Config("cannot fit normalization on no samples".into()))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in rows {
            if row.len() != min.len() {
                return Err(Error::DimensionMismatch {
                    what: "feature count",
                    expected: min.len(),
                    got: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        let stats = Self { min, max };
        for j in stats.constant_features() {
            warn!("feature {j} is constant over the training set; it maps to 0.5");
        }
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        !(self.max[j] > self.min[j])
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.is_constant(j)).collect()
    }

    /// `(x − min) / (max − min)` clamped to `[0, 1]`; constant features map to 0.5.
    pub fn normalize(&self, raw: &[T]) -> MotorSensoryPoint<T> {
        let mut clamps = 0;
        self.normalize_counting(raw, &mut clamps)
    }

    /// As [`normalize`](Self::normalize), adding the number of clamped features to `clamps`.
    pub fn normalize_counting(&self, raw: &[T], clamps: &mut usize) -> MotorSensoryPoint<T> {
        let half = T::lit(0.5);
        MotorSensoryPoint(
            raw.iter()
                .enumerate()
                .map(|(j, &x)| {
                    if self.is_constant(j) {
                        return half;
                    }
                    let v = (x - self.min[j]) / (self.max[j] - self.min[j]);
                    if v < T::zero() || v > T::one() {
                        *clamps += 1;
                    }
                    v.max(T::zero()).min(T::one())
                })
                .collect(),
        )
    }

    pub fn denormalize(&self, point: &MotorSensoryPoint<T>) -> Vec<T> {
        point
            .0
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.is_constant(j) {
                    self.min[j]
                } else {
                    self.min[j] + v * (self.max[j] - self.min[j])
                }
            })
            .collect()
    }
}

/// Min/max of every feature over all training samples.
pub fn fit_norm_stats<T: Real>(dataset: &Dataset<T>) -> Result<NormStats<T>> {
    let rows: Vec<Vec<T>> = dataset
        .train
        .iter()
        .flat_map(|t| t.samples().iter().map(JointState::features))
        .collect();
    NormStats::from_rows(rows.iter().map(Vec::as_slice))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Tanh,
    Logistic,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Logistic => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn slope<T: Real>(self, y: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Tanh => T::one() - y * y,
            Activation::Logistic => y * (T::one() - y),
        }
    }
}

/// Dense layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    fn forward_into(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = row
                .iter()
                .zip(input)
                .fold(self.biases[o], |acc, (&w, &x)| acc + w * x);
            out.push(self.activation.apply(z));
        }
    }
}

/// Layer widths and activations, mirrored around the bottleneck.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub bottleneck_activation: Activation,
    pub output_activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            hidden_activation: Activation::Tanh,
            bottleneck_activation: Activation::Tanh,
            output_activation: Activation::Logistic,
        }
    }
}

impl Architecture {
    pub fn linear(hidden: Vec<usize>) -> Self {
        Self {
            hidden,
            hidden_activation: Activation::Linear,
            bottleneck_activation: Activation::Linear,
            output_activation: Activation::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Autoencoder<T> {
    layers: Vec<Layer<T>>,
    /// Number of layers belonging to the encoder half.
    encoder_layers: usize,
    stats: NormStats<T>,
}

impl<T: Real> Autoencoder<T> {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn new(stats: NormStats<T>, bottleneck: usize, arch: &Architecture, rng_seed: u64) -> Result<Self> {
        let input = stats.dim();
        if bottleneck == 0 || input == 0 {
            return Err(Error::Config("autoencoder needs nonzero input and bottleneck widths".into()));
        }
        if arch.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must be nonempty".into()));
        }
        let mut sizes = vec![input];
        sizes.extend(&arch.hidden);
        sizes.push(bottleneck);
        sizes.extend(arch.hidden.iter().rev());
        sizes.push(input);
        let encoder_layers = arch.hidden.len() + 1;
        let n_layers = sizes.len() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let layers = (0..n_layers)
            .map(|l| {
                let (inputs, outputs) = (sizes[l], sizes[l + 1]);
                let activation = if l + 1 == n_layers {
                    arch.output_activation
                } else if l + 1 == encoder_layers {
                    arch.bottleneck_activation
                } else {
                    arch.hidden_activation
                };
                let bound = 1.0 / (inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| T::lit(rng.gen_range(-bound..bound)))
                    .collect();
                Layer {
                    inputs,
                    outputs,
                    weights,
                    biases: vec![T::zero(); outputs],
                    activation,
                }
            })
            .collect();
        Ok(Self {
            layers,
            encoder_layers,
            stats,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn stats(&self) -> &NormStats<T> {
        &self.stats
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn bottleneck(&self) -> usize {
        self.layers[self.encoder_layers - 1].outputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    fn run(&self, layers: &[Layer<T>], input: &[T]) -> Vec<T> {
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    fn check(&self, what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected != got {
            return Err(Error::DimensionMismatch { what, expected, got });
        }
        Ok(())
    }

    pub fn encode(&self, point: &MotorSensoryPoint<T>) -> Result<ReducedPoint<T>> {
        self.check("encoder input", self.input_dim(), point.0.len())?;
        Ok(ReducedPoint(self.run(&self.layers[..self.encoder_layers], &point.0)))
    }

    pub fn decode(&self, rp: &ReducedPoint<T>) -> Result<MotorSensoryPoint<T>> {
        self.check("decoder input", self.bottleneck(), rp.0.len())?;
        Ok(MotorSensoryPoint(self.run(&self.layers[self.encoder_layers..], &rp.0)))
    }

    pub fn reconstruct(&self, point: &MotorSensoryPoint<T>) -> Result<MotorSensoryPoint<T>> {
        self.check("autoencoder input", self.input_dim(), point.0.len())?;
        Ok(MotorSensoryPoint(self.run(&self.layers, &point.0)))
    }

    /// Normalizes a raw joint state and encodes it.
    pub fn encode_state(&self, state: &JointState<T>) -> Result<ReducedPoint<T>> {
        self.encode(&self.stats.normalize(&state.features()))
    }

    /// Decodes and denormalizes back into joint positions and velocities.
    pub fn decode_state(&self, rp: &ReducedPoint<T>) -> Result<JointState<T>> {
        let raw = self.stats.denormalize(&self.decode(rp)?);
        Ok(JointState::from_features(&raw))
    }

    /// Encodes every sample, preserving count and order.
    pub fn encode_trajectory(&self, traj: &Trajectory<T>) -> Result<Vec<ReducedPoint<T>>> {
        traj.samples().iter().map(|s| self.encode_state(s)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Every weight then every bias, layer by layer.
    pub fn flat_parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_flat_parameters(&mut self, params: &[T]) -> Result<()> {
        self.check("parameter vector", self.parameter_count(), params.len())?;
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Forward pass keeping every layer's output; `acts[0]` is the input.
    fn forward_trace(&self, input: &[T], acts: &mut Vec<Vec<T>>) {
        acts.resize_with(self.layers.len() + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(l + 1);
            layer.forward_into(&head[l], &mut tail[0]);
        }
    }

    /// Backpropagates `d loss / d output` (pre-slope) through a recorded trace.
    /// With `step = Some(lr)` the parameters are updated in place (SGD);
    /// otherwise the gradient is accumulated into `grads`.
    fn backward(&mut self, acts: &[Vec<T>], mut delta: Vec<T>, step: Option<T>, grads: Option<&mut Gradients<T>>) {
        let mut grads = grads;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let out = &acts[l + 1];
            for (d, &y) in delta.iter_mut().zip(out) {
                *d *= layer.activation.slope(y);
            }
            let input = &acts[l];
            let prev_delta = if l > 0 {
                let mut pd = vec![T::zero(); layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in pd.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                Some(pd)
            } else {
                None
            };
            if let Some(lr) = step {
                let layer = &mut self.layers[l];
                for (o, &d) in delta.iter().enumerate() {
                    let g = lr * d;
                    let row = &mut layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, &x) in row.iter_mut().zip(input) {
                        *w -= g * x;
                    }
                    layer.biases[o] -= g;
                }
            } else if let Some(gr) = grads.as_deref_mut() {
                let inputs = layer.inputs;
                for (o, &d) in delta.iter().enumerate() {
                    let row = &mut gr.weights[l][o * inputs..(o + 1) * inputs];
                    for (g, &x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                    gr.biases[l][o] += d;
                }
            }
            match prev_delta {
                Some(pd) => delta = pd,
                None => break,
            }
        }
    }
}

/// Gradient of the loss with respect to every weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    fn zeros_like(model: &Autoencoder<T>) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![T::zero(); l.biases.len()]).collect(),
        }
    }

    /// Same ordering as [`Autoencoder::flat_parameters`].
    pub fn flatten(&self) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Mean squared error over all samples and output features, with its exact gradient.
pub fn loss_and_gradients_with_targets<T: Real>(
    model: &Autoencoder<T>,
    inputs: &[Vec<T>],
    targets: &[Vec<T>],
) -> Result<(T, Gradients<T>)> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "target count",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let mut grads = Gradients::zeros_like(model);
    if inputs.is_empty() {
        return Ok((T::zero(), grads));
    }
    let dim = model.input_dim();
    let denom = T::from_usize_lossy(inputs.len() * dim);
    let two = T::lit(2.0);
    let mut scratch = model.clone();
    let mut acts = Vec::new();
    let mut loss = T::zero();
    for (x, t) in inputs.iter().zip(targets) {
        model.check("batch sample", dim, x.len())?;
        model.check("batch target", dim, t.len())?;
        model.forward_trace(x, &mut acts);
        let y = &acts[acts.len() - 1];
        let delta: Vec<T> = y
            .iter()
            .zip(t)
            .map(|(&yo, &to)| {
                loss += (yo - to) * (yo - to);
                two * (yo - to) / denom
            })
            .collect();
        scratch.backward(&acts, delta, None, Some(&mut grads));
    }
    Ok((loss / denom, grads))
}

/// Reconstruction loss of an autoencoder batch (targets equal inputs).
pub fn loss_and_gradients<T: Real>(model: &Autoencoder<T>, batch: &[Vec<T>]) -> Result<(T, Gradients<T>)> {
    loss_and_gradients_with_targets(model, batch, batch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainHyper<T> {
    pub learning_rate: T,
    pub epochs: usize,
    pub rng_seed: u64,
    pub architecture: Architecture,
    /// Share of trajectories (or points) held out for early stopping.
    pub validation_fraction: T,
    /// Validation checks without improvement before stopping.
    pub patience: usize,
}

impl<T: Real> Default for TrainHyper<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(0.1),
            epochs: 50_000,
            rng_seed: 0,
            architecture: Architecture::default(),
            validation_fraction: T::lit(0.1),
            patience: 1_000,
        }
    }
}

impl<T: Real> TrainHyper<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.validation_fraction >= T::zero() && self.validation_fraction < T::one()) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainReport<T> {
    pub train_rmse: T,
    /// RMSE on the held-out validation split (train RMSE when nothing is held out).
    pub heldout_rmse: T,
    pub epochs_run: usize,
    pub final_learning_rate: T,
    /// Training loss after every accepted epoch; non-increasing.
    pub loss_history: Vec<T>,
}

/// Reconstruction quality on a point set, in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Reconstruction<T> {
    pub rmse: T,
    /// `1 − SSE / SST`, pooled over features.
    pub explained_variance: T,
}

pub fn evaluate_points<T: Real>(model: &Autoencoder<T>, points: &[Vec<T>]) -> Result<Reconstruction<T>> {
    if points.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty point set".into()));
    }
    let dim = model.input_dim();
    let n = T::from_usize_lossy(points.len());
    let mut mean = vec![T::zero(); dim];
    for p in points {
        model.check("evaluation sample", dim, p.len())?;
        for (m, &x) in mean.iter_mut().zip(p) {
            *m += x / n;
        }
    }
    let (mut sse, mut sst) = (T::zero(), T::zero());
    let mut out = Vec::new();
    let mut buf = Vec::new();
    for p in points {
        out.clear();
        out.extend_from_slice(p);
        for layer in &model.layers {
            layer.forward_into(&out, &mut buf);
            std::mem::swap(&mut out, &mut buf);
        }
        for j in 0..dim {
            sse += (out[j] - p[j]).powi(2);
            sst += (p[j] - mean[j]).powi(2);
        }
    }
    let rmse = (sse / (n * T::from_usize_lossy(dim))).sqrt();
    let explained_variance = if sst > T::zero() {
        T::one() - sse / sst
    } else {
        T::one()
    };
    Ok(Reconstruction {
        rmse,
        explained_variance,
    })
}

/// Reconstruction quality on raw trajectories (normalized with the model's stats).
pub fn evaluate_trajectories<T: Real>(model: &Autoencoder<T>, trajs: &[Trajectory<T>]) -> Result<Reconstruction<T>> {
    let points = normalized_points(&model.stats, trajs);
    evaluate_points(model, &points)
}

fn normalized_points<T: Real>(stats: &NormStats<T>, trajs: &[Trajectory<T>]) -> Vec<Vec<T>> {
    trajs
        .iter()
        .flat_map(|t| t.samples().iter().map(|s| stats.normalize(&s.features()).0))
        .collect()
}

const SPLIT_SALT: u64 = 0x5EED_0F5A_11D1_7000;

/// Trains on the dataset's training reaches, holding out whole trajectories
/// for early stopping.
pub fn train_autoencoder<T: Real>(
    dataset: &Dataset<T>,
    stats: &NormStats<T>,
    bottleneck: usize,
    hyper: &TrainHyper<T>,
) -> Result<(Autoencoder<T>, TrainReport<T>)> {
    hyper.validate()?;
    if bottleneck >= stats.dim() {
        return Err(Error::Config(format!(
            "bottleneck {bottleneck} must be smaller than the feature count {}",
            stats.dim()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.rng_seed ^ SPLIT_SALT);
    order.shuffle(&mut rng);
    let n_val = held_out_count(order.len(), hyper.validation_fraction);
    let pick = |idx: &[usize]| -> Vec<Trajectory<T>> { idx.iter().map(|&i| dataset.train[i].clone()).collect() };
    let val = normalized_points(stats, &pick(&order[..n_val]));
    let train = normalized_points(stats, &pick(&order[n_val..]));
    let model = Autoencoder::new(stats.clone(), bottleneck, &hyper.architecture, hyper.rng_seed)?;
    fit(model, &train, &val, hyper)
}

/// Trains on bare points (already normalized), holding out a point fraction.
pub fn train_on_points<T: Real>(
    points: &[Vec<T>],
    stats: NormStats<T>,
    bottleneck: usize,
    hyper: &TrainHyper<T>,
) -> Result<(Autoencoder<T>, TrainReport<T>)> {
    hyper.validate()?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.rng_seed ^ SPLIT_SALT);
    order.shuffle(&mut rng);
    let n_val = held_out_count(order.len(), hyper.validation_fraction);
    let val: Vec<Vec<T>> = order[..n_val].iter().map(|&i| points[i].clone()).collect();
    let train: Vec<Vec<T>> = order[n_val..].iter().map(|&i| points[i].clone()).collect();
    let model = Autoencoder::new(stats, bottleneck, &hyper.architecture, hyper.rng_seed)?;
    fit(model, &train, &val, hyper)
}

fn held_out_count<T: Real>(n: usize, fraction: T) -> usize {
    if n < 2 || fraction <= T::zero() {
        return 0;
    }
    let k = (fraction * T::from_usize_lossy(n)).ceil().to_usize().unwrap_or(0);
    k.clamp(1, n - 1)
}

fn mse<T: Real>(model: &Autoencoder<T>, points: &[Vec<T>]) -> T {
    if points.is_empty() {
        return T::zero();
    }
    let r = evaluate_points(model, points).expect("points match the model");
    r.rmse * r.rmse
}

/// Per-sample SGD. An epoch that raises the training loss is rolled back and
/// the learning rate halved, so accepted losses never increase.
fn fit<T: Real>(
    mut model: Autoencoder<T>,
    train: &[Vec<T>],
    val: &[Vec<T>],
    hyper: &TrainHyper<T>,
) -> Result<(Autoencoder<T>, TrainReport<T>)> {
    if train.is_empty() {
        return Err(Error::Config("no training points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.rng_seed.wrapping_add(1));
    let mut lr = hyper.learning_rate;
    let mut loss = mse(&model, train);
    let mut history = Vec::new();
    let mut best_val = if val.is_empty() { T::infinity() } else { mse(&model, val) };
    let mut best_model = model.clone();
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut acts = Vec::new();
    let mut epochs_run = 0;
    let min_lr = hyper.learning_rate * T::lit(1e-6);

    for epoch in 0..hyper.epochs {
        epochs_run = epoch + 1;
        let snapshot = model.clone();
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &train[i];
            model.forward_trace(x, &mut acts);
            let y = &acts[acts.len() - 1];
            let delta: Vec<T> = y.iter().zip(x).map(|(&yo, &xo)| yo - xo).collect();
            model.backward(&acts, delta, Some(lr), None);
        }
        let new_loss = mse(&model, train);
        if !new_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if new_loss > loss {
            model = snapshot;
            lr = lr * T::lit(0.5);
            if lr < min_lr {
                break;
            }
            continue;
        }
        loss = new_loss;
        history.push(loss);

        if !val.is_empty() {
            let v = mse(&model, val);
            if v < best_val {
                best_val = v;
                best_model = model.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= hyper.patience {
                    break;
                }
            }
        }
    }

    if !val.is_empty() && best_val.is_finite() && best_val <= mse(&model, val) {
        model = best_model;
    }
    let train_rmse = mse(&model, train).sqrt();
    let heldout_rmse = if val.is_empty() {
        train_rmse
    } else {
        mse(&model, val).sqrt()
    };
    Ok((
        model,
        TrainReport {
            train_rmse,
            heldout_rmse,
            epochs_run,
            final_learning_rate: lr,
            loss_history: history,
        },
    ))
}
