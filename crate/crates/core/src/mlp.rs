//! Dense feed-forward regressor trained by mini-batch SGD.
//!
//! Loss is the mean squared error over every sample and output component plus
//! `l2_alpha * Σ‖W‖²` over the weight matrices (biases are not penalized).
//! Weights start uniform in `±sqrt(6 / (fan_in + fan_out))`, biases at zero.
//! Inputs are expected to be standardized already.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a = act(z)`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub l2_alpha: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// `None` disables early stopping (and the internal validation split).
    pub early_stop_patience: Option<usize>,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_layers: vec![64],
            activation: Activation::Relu,
            learning_rate: 0.01,
            l2_alpha: 1e-4,
            batch_size: 32,
            max_epochs: 200,
            early_stop_patience: Some(10),
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.contains(&0) {
            return Err(Error::validation("hidden layer widths must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if !(self.l2_alpha >= 0.0 && self.l2_alpha.is_finite()) {
            return Err(Error::validation("l2_alpha must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be positive"));
        }
        if self.early_stop_patience == Some(0) {
            return Err(Error::validation("early_stop_patience must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::validation(
                "validation_fraction must lie in (0, 0.5]",
            ));
        }
        Ok(())
    }
}

/// `out = act(in · weights + bias)`; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            weights: Matrix::zeros(self.weights.rows(), self.weights.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective (MSE + penalty) averaged over this epoch's mini-batches, each
    /// evaluated just before its update. Entry 0 holds the initial network's full objective.
    pub train_loss: f64,
    /// Plain MSE on the internal validation rows, when early stopping is on.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub params: MlpParams,
    pub n_features: usize,
    pub n_outputs: usize,
    /// Entry 0 describes the initial network, before any update.
    pub training_curve: Vec<EpochRecord>,
}

/// Hidden activations of a forward pass; `acts[0]` is the input.
struct Trace {
    acts: Vec<Matrix>,
    output: Matrix,
}

fn affine(input: &Matrix, layer: &Layer) -> Matrix {
    let mut z = input.matmul(&layer.weights).expect("layer shapes chain");
    for r in 0..z.rows() {
        for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    z
}

/// `aᵀ · b` for row-aligned `a` (n×i) and `b` (n×j).
fn gram(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.cols(), b.cols());
    let j = b.cols();
    for r in 0..a.rows() {
        let br = b.row(r);
        for (i, &av) in a.row(r).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out.as_mut_slice()[i * j..(i + 1) * j].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `d · wᵀ` for `d` (n×out) and `w` (in×out).
fn back_project(d: &Matrix, w: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(d.rows(), w.rows());
    for r in 0..d.rows() {
        let dr = d.row(r);
        for (i, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = w.row(i).iter().zip(dr).map(|(a, b)| a * b).sum();
        }
    }
    out
}

fn mse_raw(y: &Matrix, yhat: &Matrix) -> f64 {
    let n = y.as_slice().len().max(1) as f64;
    y.as_slice()
        .iter()
        .zip(yhat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

impl MlpModel {
    /// Seeded initial network.
    pub fn init(n_features: usize, n_outputs: usize, params: &MlpParams) -> Result<MlpModel> {
        params.validate()?;
        if n_features == 0 || n_outputs == 0 {
            return Err(Error::dimension(
                "network needs at least one input and one output",
            ));
        }
        let mut rng = seed::rng(seed::derive(params.seed, 0));
        let mut widths = vec![n_features];
        widths.extend(&params.hidden_layers);
        widths.push(n_outputs);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(MlpModel {
            layers,
            params: params.clone(),
            n_features,
            n_outputs,
            training_curve: Vec::new(),
        })
    }

    /// Builds a model from explicit layers (e.g. hand-set weights).
    pub fn from_layers(layers: Vec<Layer>, params: MlpParams) -> Result<MlpModel> {
        let first = layers
            .first()
            .ok_or_else(|| Error::validation("a network needs at least one layer"))?;
        let n_features = first.weights.rows();
        let n_outputs = layers.last().map_or(0, |l| l.weights.cols());
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.cols() {
                return Err(Error::dimension(format!(
                    "layer {i}: bias length does not match width"
                )));
            }
            if i > 0 && layers[i - 1].weights.cols() != l.weights.rows() {
                return Err(Error::dimension(format!(
                    "layer {i}: input width does not chain"
                )));
            }
        }
        Ok(MlpModel {
            layers,
            params,
            n_features,
            n_outputs,
            training_curve: Vec::new(),
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::dimension(format!(
                "network expects {} features, got {}",
                self.n_features,
                x.cols()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &Matrix) -> Trace {
        let act = self.params.activation;
        let (hidden, out_layer) = self.layers.split_at(self.layers.len() - 1);
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for layer in hidden {
            let mut h = affine(acts.last().expect("non-empty"), layer);
            h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            acts.push(h);
        }
        let output = affine(acts.last().expect("non-empty"), &out_layer[0]);
        Trace { acts, output }
    }

    /// Hidden layers use the configured activation; the output layer is linear.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.trace(x).output)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x)
    }

    fn penalty(&self, l2_alpha: f64) -> f64 {
        if l2_alpha == 0.0 {
            return 0.0;
        }
        l2_alpha
            * self
                .layers
                .iter()
                .map(|l| l.weights.as_slice().iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>()
    }

    /// Objective value and its exact gradient, one [`Layer`]-shaped entry per layer.
    pub fn loss_and_gradients(
        &self,
        x: &Matrix,
        y: &Matrix,
        l2_alpha: f64,
    ) -> Result<(f64, Vec<Layer>)> {
        self.check_input(x)?;
        if y.rows() != x.rows() || y.cols() != self.n_outputs {
            return Err(Error::dimension(format!(
                "targets are {}x{}, expected {}x{}",
                y.rows(),
                y.cols(),
                x.rows(),
                self.n_outputs
            )));
        }
        if x.rows() == 0 {
            return Err(Error::validation("loss of an empty batch is undefined"));
        }
        let trace = self.trace(x);
        let loss = mse_raw(y, &trace.output) + self.penalty(l2_alpha);

        let scale = 2.0 / (y.rows() * y.cols()) as f64;
        let mut delta = trace.output.clone();
        for (d, t) in delta.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *d = scale * (*d - t);
        }

        let act = self.params.activation;
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.acts[l];
            let g = &mut grads[l];
            g.weights = gram(input, &delta);
            if l2_alpha != 0.0 {
                for (gw, w) in g
                    .weights
                    .as_mut_slice()
                    .iter_mut()
                    .zip(self.layers[l].weights.as_slice())
                {
                    *gw += 2.0 * l2_alpha * w;
                }
            }
            for r in 0..delta.rows() {
                for (gb, d) in g.bias.iter_mut().zip(delta.row(r)) {
                    *gb += d;
                }
            }
            if l > 0 {
                let mut next = back_project(&delta, &self.layers[l].weights);
                for (d, a) in next.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *d *= act.derivative_from_output(*a);
                }
                delta = next;
            }
        }
        Ok((loss, grads))
    }

    fn objective(&self, x: &Matrix, y: &Matrix) -> f64 {
        mse_raw(y, &self.trace(x).output) + self.penalty(self.params.l2_alpha)
    }

    fn apply_gradients(&mut self, grads: &[Layer], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (w, gw) in layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(g.weights.as_slice())
            {
                *w -= lr * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
    }
}

pub fn forward(model: &MlpModel, x: &Matrix) -> Result<Matrix> {
    model.forward(x)
}

/// Trains a network. Streams under `params.seed`: 0 initial weights,
/// 1 validation split, 2 per-epoch batch shuffling.
pub fn fit_mlp(x: &Matrix, y: &Matrix, params: &MlpParams) -> Result<MlpModel> {
    params.validate()?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::validation(format!(
            "need at least 2 training rows, got {n}"
        )));
    }
    if y.rows() != n {
        return Err(Error::dimension(format!(
            "{n} feature rows but {} target rows",
            y.rows()
        )));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::validation(
            "training data contains non-finite values",
        ));
    }
    let mut model = MlpModel::init(x.cols(), y.cols(), params)?;

    let mut order: Vec<usize> = (0..n).collect();
    let (train_idx, val_idx) = if params.early_stop_patience.is_some() {
        order.shuffle(&mut seed::rng(seed::derive(params.seed, 1)));
        let n_val = ((params.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let (v, t) = order.split_at(n_val);
        (t.to_vec(), v.to_vec())
    } else {
        (order, Vec::new())
    };
    let xt = x.select_rows(&train_idx);
    let yt = y.select_rows(&train_idx);
    let xv = x.select_rows(&val_idx);
    let yv = y.select_rows(&val_idx);
    let val_loss = |m: &MlpModel| (!val_idx.is_empty()).then(|| mse_raw(&yv, &m.trace(&xv).output));

    let mut curve = vec![EpochRecord {
        epoch: 0,
        train_loss: model.objective(&xt, &yt),
        val_loss: val_loss(&model),
    }];
    let mut best = (
        curve[0].val_loss.unwrap_or(f64::INFINITY),
        model.layers.clone(),
    );
    let mut stale = 0;
    let mut shuffle_rng = seed::rng(seed::derive(params.seed, 2));
    let mut batch: Vec<usize> = (0..xt.rows()).collect();

    for epoch in 1..=params.max_epochs {
        batch.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in batch.chunks(params.batch_size) {
            let (loss, grads) = model.loss_and_gradients(
                &xt.select_rows(chunk),
                &yt.select_rows(chunk),
                params.l2_alpha,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            model.apply_gradients(&grads, params.learning_rate);
        }
        let train_loss = loss_sum / batch.len() as f64;
        let val = val_loss(&model);
        if !train_loss.is_finite() || val.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val,
        });
        if let (Some(patience), Some(v)) = (params.early_stop_patience, val) {
            if v < best.0 {
                best = (v, model.layers.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    if params.early_stop_patience.is_some() {
        model.layers = best.1;
    }
    model.training_curve = curve;
    Ok(model)
}
