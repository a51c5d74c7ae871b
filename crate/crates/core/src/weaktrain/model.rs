use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{softmax_in_place, LossSpec};
use crate::error::{Error, Result};
use crate::ingest::LabelId;
use crate::transfer::LabeledWindowSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Multiplies the learning rate after every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub hidden_units: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-4,
            weight_decay: 1e-6,
            lr_decay: 0.9,
            decay_every: 10,
            batch_size: 8,
            hidden_units: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive_reals = [self.learning_rate, self.lr_decay];
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_units == 0 || self.decay_every == 0 {
            return Err(Error::Config("epochs, batch size, hidden units and decay interval must be positive".into()));
        }
        if positive_reals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = epoch.saturating_sub(1) / self.decay_every;
        self.learning_rate * self.lr_decay.powi(steps as i32)
    }
}

/// Adam with decoupled weight decay over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, weight_decay: f64) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] *= 1.0 - lr * self.weight_decay;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Two-layer perceptron over standardised flattened windows:
/// affine, ReLU, affine, softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    input_dim: usize,
    hidden: usize,
    num_labels: usize,
    params: Vec<f64>,
    shift: Array1<f64>,
    scale: Array1<f64>,
    loss_curve: Vec<f64>,
}

struct Forward {
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    probs: Array2<f64>,
}

impl Classifier {
    fn new(input_dim: usize, hidden: usize, num_labels: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = hidden * input_dim + hidden + num_labels * hidden + num_labels;
        let mut params = vec![0.0; n];
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        for p in &mut params[..hidden * input_dim] {
            *p = rng.random_range(-a1..a1);
        }
        let off = hidden * input_dim + hidden;
        let a2 = (6.0 / (hidden + num_labels) as f64).sqrt();
        for p in &mut params[off..off + num_labels * hidden] {
            *p = rng.random_range(-a2..a2);
        }
        Classifier {
            input_dim,
            hidden,
            num_labels,
            params,
            shift: Array1::zeros(input_dim),
            scale: Array1::ones(input_dim),
            loss_curve: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mean training loss of each epoch.
    pub fn loss_curve(&self) -> &[f64] {
        &self.loss_curve
    }

    fn layers(&self) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>, ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (f, h, a) = (self.input_dim, self.hidden, self.num_labels);
        let p = &self.params;
        let w1 = ArrayView2::from_shape((h, f), &p[..h * f]).expect("layer shape");
        let b1 = ArrayView1::from(&p[h * f..h * f + h]);
        let off = h * f + h;
        let w2 = ArrayView2::from_shape((a, h), &p[off..off + a * h]).expect("layer shape");
        let b2 = ArrayView1::from(&p[off + a * h..]);
        (w1, b1, w2, b2)
    }

    fn standardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.shift) * &self.scale
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Forward {
        let (w1, b1, w2, b2) = self.layers();
        let hidden_pre = x.dot(&w1.t()) + b1;
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let mut probs = hidden.dot(&w2.t()) + b2;
        for mut row in probs.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("contiguous row"));
        }
        Forward {
            hidden_pre,
            hidden,
            probs,
        }
    }

    /// Class probabilities, one simplex row per input row.
    pub fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "classifier takes {} features, got {}",
                self.input_dim,
                features.ncols()
            )));
        }
        Ok(self.forward(self.standardize(features).view()).probs)
    }

    /// Arg-max class per row, ties to the smaller id.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<LabelId>> {
        let probs = self.predict_proba(features)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &p)| if p > best.1 { (j, p) } else { best })
                    .0
            })
            .collect())
    }

    /// Mean loss over a batch; accumulates the parameter gradient into `grad`.
    fn batch_gradient(&self, x: ArrayView2<'_, f64>, labels: &[LabelId], spec: &LossSpec, grad: &mut [f64]) -> Result<f64> {
        let fw = self.forward(x);
        let b = labels.len() as f64;
        let mut g_out = Array2::<f64>::zeros((labels.len(), self.num_labels));
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let probs = fw.probs.row(i);
            let mut row = g_out.row_mut(i);
            total += spec.loss_and_grad_into(
                probs.as_slice().expect("contiguous row"),
                y,
                row.as_slice_mut().expect("contiguous row"),
            )?;
        }
        g_out /= b;
        let (_, _, w2, _) = self.layers();
        let mut g_hidden = g_out.dot(&w2);
        g_hidden.zip_mut_with(&fw.hidden_pre, |g, &pre| {
            if pre <= 0.0 {
                *g = 0.0
            }
        });
        let (f, h, a) = (self.input_dim, self.hidden, self.num_labels);
        let dw1 = g_hidden.t().dot(&x);
        let db1 = g_hidden.sum_axis(Axis(0));
        let dw2 = g_out.t().dot(&fw.hidden);
        let db2 = g_out.sum_axis(Axis(0));
        let off = h * f + h;
        grad[..h * f].copy_from_slice(dw1.as_standard_layout().as_slice().expect("standard layout"));
        grad[h * f..off].copy_from_slice(db1.as_slice().expect("contiguous"));
        grad[off..off + a * h].copy_from_slice(dw2.as_standard_layout().as_slice().expect("standard layout"));
        grad[off + a * h..].copy_from_slice(db2.as_slice().expect("contiguous"));
        Ok(total / b)
    }

    /// Mean loss over `data` without updating anything.
    pub fn mean_loss(&self, data: &LabeledWindowSet, spec: &LossSpec) -> Result<f64> {
        let probs = self.predict_proba(data.features.view())?;
        let mut total = 0.0;
        let mut scratch = vec![0.0; self.num_labels];
        for (row, &y) in probs.rows().into_iter().zip(&data.labels) {
            total += spec.loss_and_grad_into(row.as_slice().expect("contiguous row"), y, &mut scratch)?;
        }
        Ok(total / data.len() as f64)
    }
}

/// Mini-batch training with seeded initialisation and per-epoch shuffling.
pub fn train(data: &LabeledWindowSet, cfg: &TrainConfig, spec: &LossSpec) -> Result<Classifier> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training windows".into()));
    }
    if data.distinct_classes() < 2 {
        return Err(Error::Data("training needs at least two classes".into()));
    }
    if spec.class_weights.len() != data.num_labels {
        return Err(Error::Shape(format!(
            "{} class weights for {} classes",
            spec.class_weights.len(),
            data.num_labels
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = data.feature_dim();
    let mut model = Classifier::new(f, cfg.hidden_units, data.num_labels, &mut rng);
    model.shift = data.features.mean_axis(Axis(0)).expect("non-empty");
    model.scale = data
        .features
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-8 { 1.0 / s } else { 1.0 });
    let x = model.standardize(data.features.view());

    let mut adam = Adam::new(model.params.len(), cfg.weight_decay);
    let mut grad = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Array2::<f64>::zeros((cfg.batch_size, f));
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            labels.clear();
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).assign(&x.row(i));
                labels.push(data.labels[i]);
            }
            let xb = batch.slice(s![..chunk.len(), ..]);
            let loss = model.batch_gradient(xb, &labels, spec, &mut grad)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut model.params, &grad, lr);
        }
        model.loss_curve.push(epoch_loss / data.len() as f64);
    }
    Ok(model)
}
