use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LabelId;

/// Probabilities are clamped to this floor before logs and powers.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    WeightedCe,
    Gce,
    Phgce,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::WeightedCe => "weighted-ce",
            LossKind::Gce => "gce",
            LossKind::Phgce => "phgce",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weighted-ce" | "ce" => Ok(LossKind::WeightedCe),
            "gce" => Ok(LossKind::Gce),
            "phgce" => Ok(LossKind::Phgce),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

/// A class-weighted loss on the probability of the labelled class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// GCE exponent in (0, 1].
    pub q: f64,
    /// Bound on |dℓ/dp| for PHGCE, at least 1.
    pub tau: f64,
    pub class_weights: Vec<f64>,
}

impl LossSpec {
    pub const DEFAULT_Q: f64 = 0.7;
    pub const DEFAULT_TAU: f64 = 10.0;

    pub fn new(kind: LossKind, class_weights: Vec<f64>) -> Self {
        LossSpec {
            kind,
            q: Self::DEFAULT_Q,
            tau: Self::DEFAULT_TAU,
            class_weights,
        }
    }

    /// Unit weights over `num_labels` classes.
    pub fn unweighted(kind: LossKind, num_labels: usize) -> Self {
        Self::new(kind, vec![1.0; num_labels])
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if !(self.tau >= 1.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be finite and at least 1, got {}", self.tau)));
        }
        if self.class_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("class weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Probability below which PHGCE is linear: the point where the GCE slope
    /// `p^(q-1)` reaches `tau`. Zero when the slope never exceeds `tau`.
    pub fn pivot(&self) -> f64 {
        if self.q >= 1.0 {
            0.0
        } else {
            self.tau.powf(1.0 / (self.q - 1.0))
        }
    }

    /// Unweighted loss and its derivative with respect to `p`.
    pub fn value_and_slope(&self, p: f64) -> (f64, f64) {
        let p = p.max(PROB_FLOOR);
        let q = self.q;
        let gce = |p: f64| ((1.0 - p.powf(q)) / q, -p.powf(q - 1.0));
        match self.kind {
            LossKind::WeightedCe => (-p.ln(), -1.0 / p),
            LossKind::Gce => gce(p),
            LossKind::Phgce => {
                let p0 = self.pivot();
                if p <= p0 {
                    let (phi0, _) = gce(p0);
                    (-self.tau * (p - p0) + phi0, -self.tau)
                } else {
                    gce(p)
                }
            }
        }
    }

    /// Weighted loss of one sample and its gradient with respect to the
    /// pre-softmax scores that produced `probs`.
    pub fn loss_and_grad(&self, probs: &[f64], label: LabelId) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; probs.len()];
        let loss = self.loss_and_grad_into(probs, label, &mut grad)?;
        Ok((loss, grad))
    }

    pub(crate) fn loss_and_grad_into(&self, probs: &[f64], label: LabelId, grad: &mut [f64]) -> Result<f64> {
        if label >= probs.len() || label >= self.class_weights.len() {
            return Err(Error::Shape(format!(
                "label {label} out of range for {} classes",
                probs.len().min(self.class_weights.len())
            )));
        }
        let w = self.class_weights[label];
        let py = probs[label];
        let (loss, slope) = self.value_and_slope(py);
        match self.kind {
            // exact form, stays well-defined when p_y underflows the floor
            LossKind::WeightedCe => {
                for (j, g) in grad.iter_mut().enumerate() {
                    *g = w * (probs[j] - if j == label { 1.0 } else { 0.0 });
                }
            }
            _ => {
                let scale = w * slope * py;
                for (j, g) in grad.iter_mut().enumerate() {
                    *g = scale * (if j == label { 1.0 } else { 0.0 } - probs[j]);
                }
            }
        }
        Ok(w * loss)
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut out = scores.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
