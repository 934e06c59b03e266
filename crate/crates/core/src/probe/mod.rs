//! Linear probe trained by confidence-weighted consistency against a frozen
//! zero-shot teacher.

mod loss;
mod optim;
mod train;

pub use loss::{consistency_loss, consistency_loss_into};
pub use optim::{
    clip_global_norm, cosine_lr, sgd_step_with_clip, OptimizerState, SgdConfig, StepStats,
};
pub use train::{
    history_csv, train_probe, train_probe_observed, train_probe_with_teacher, HistoryRow,
    StrongViewPolicy, TrainConfig, TrainOutcome,
};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::tensorio::{EmbeddingStore, Manifest, ProbeShape};

/// Weights `C × D` and bias `C` of a single fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    weights: Matrix,
    bias: Vec<f64>,
}

impl ProbeParams {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        ProbeParams {
            weights: Matrix::zeros(classes, dim),
            bias: vec![0.0; classes],
        }
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::dims(format!(
                "{} weight rows but {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(ProbeParams { weights, bias })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn same_shape(&self, other: &ProbeParams) -> bool {
        self.weights.rows() == other.weights.rows()
            && self.weights.cols() == other.weights.cols()
            && self.bias.len() == other.bias.len()
    }

    /// All parameters, weights first then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(&self.bias)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.as_mut_slice().iter_mut().chain(&mut self.bias)
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `W·z + b` into `out`.
    pub fn forward_into(&self, z: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = linalg::dot(self.weights.row(c), z) + self.bias[c];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Checkpoint as a `1 × (C·D + C)` store.
    pub fn to_store(&self, class_names: Vec<String>) -> Result<EmbeddingStore> {
        let mut m = Manifest::new(class_names, "lpclip probe checkpoint");
        m.probe = Some(ProbeShape {
            C: self.num_classes(),
            D: self.dim(),
            bias: true,
        });
        let flat: Vec<f64> = self.values().copied().collect();
        let len = flat.len();
        EmbeddingStore::from_matrix(&Matrix::from_vec(1, len, flat)?, false, m)
    }

    pub fn from_store(store: &EmbeddingStore) -> Result<Self> {
        let shape = store
            .manifest
            .probe
            .ok_or_else(|| Error::Manifest("checkpoint manifest lacks `probe`".into()))?;
        if !shape.bias {
            return Err(Error::Manifest(
                "only probes with bias are supported".into(),
            ));
        }
        if store.rows() != 1 || store.cols() != shape.C * shape.D + shape.C {
            return Err(Error::dims(format!(
                "checkpoint is {}x{}, expected 1x{}",
                store.rows(),
                store.cols(),
                shape.C * shape.D + shape.C
            )));
        }
        let flat: Vec<f64> = store.data().iter().map(|&v| f64::from(v)).collect();
        let (w, b) = flat.split_at(shape.C * shape.D);
        Self::from_parts(Matrix::from_vec(shape.C, shape.D, w.to_vec())?, b.to_vec())
    }
}

/// Zero-initialized probe for `dim`-dimensional features and `classes` outputs.
pub fn init_probe(dim: usize, classes: usize) -> Result<ProbeParams> {
    if dim == 0 || classes == 0 {
        return Err(Error::InvalidArgument(format!(
            "probe needs D >= 1 and C >= 1, got D={dim}, C={classes}"
        )));
    }
    Ok(ProbeParams::zeros(dim, classes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbePrediction {
    pub labels: Vec<usize>,
    pub probs: Matrix,
    pub confidence: Vec<f64>,
}

/// Untempered softmax predictions of the probe.
pub fn predict_probe(params: &ProbeParams, embs: &Matrix) -> Result<ProbePrediction> {
    if embs.cols() != params.dim() {
        return Err(Error::dims(format!(
            "embeddings have D={}, probe D={}",
            embs.cols(),
            params.dim()
        )));
    }
    let c = params.num_classes();
    let mut probs = Matrix::zeros(embs.rows(), c);
    let mut logits = vec![0.0; c];
    let mut labels = Vec::with_capacity(embs.rows());
    let mut confidence = Vec::with_capacity(embs.rows());
    for i in 0..embs.rows() {
        params.forward_into(embs.row(i), &mut logits);
        linalg::softmax_into(&logits, 1.0, probs.row_mut(i));
        let y = linalg::argmax(probs.row(i));
        labels.push(y);
        confidence.push(probs.get(i, y));
    }
    Ok(ProbePrediction {
        labels,
        probs,
        confidence,
    })
}

pub fn predict_store(params: &ProbeParams, store: &EmbeddingStore) -> Result<ProbePrediction> {
    if !store.is_unit_norm() {
        return Err(Error::NotNormalized);
    }
    predict_probe(params, &store.to_matrix())
}
