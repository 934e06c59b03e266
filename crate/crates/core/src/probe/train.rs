use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    consistency_loss_into, cosine_lr, init_probe, sgd_step_with_clip, OptimizerState, ProbeParams,
    SgdConfig,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::tensorio::ViewGroup;
use crate::zeroshot::{
    store_logits, teacher_predict, ClassAnchors, TeacherOutput, DEFAULT_TEMPERATURE,
};

/// Which strong view each drawn sample uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongViewPolicy {
    /// View `draw_index mod K`, counting every sample draw.
    Cycle,
    #[default]
    UniformRandom,
}

/// Training hyper-parameters. Defaults are the CIFAR-10 ViT-B/32 reference
/// schedule: lr 0.1, 15 000 steps, batch 64, momentum 0.9, no weight decay,
/// gradient norm clipped at 1, teacher temperature 0.01.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub temperature: f64,
    pub seed: u64,
    pub strong_view_policy: StrongViewPolicy,
    /// Weight each sample by teacher confidence; `false` forces weight 1.
    pub weighting: bool,
    /// Train on strong views; `false` trains on the weak view only.
    pub strong_aug: bool,
    /// Use at most this many strong views.
    pub views: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            total_steps: 15_000,
            batch_size: 64,
            clip_norm: 1.0,
            temperature: DEFAULT_TEMPERATURE,
            seed: 42,
            strong_view_policy: StrongViewPolicy::default(),
            weighting: true,
            strong_aug: true,
            views: None,
        }
    }
}

impl TrainConfig {
    /// Checks ranges; error messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, msg: &str| Err(Error::InvalidArgument(format!("train.{field} {msg}")));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0", &format!("must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(
                "momentum",
                &format!("must be in [0, 1), got {}", self.momentum),
            );
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(
                "weight_decay",
                &format!("must be non-negative, got {}", self.weight_decay),
            );
        }
        if self.total_steps == 0 {
            return bad("total_steps", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad(
                "clip_norm",
                &format!("must be positive, got {}", self.clip_norm),
            );
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(
                "temperature",
                &format!("must be positive, got {}", self.temperature),
            );
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ProbeParams,
    pub history: Vec<HistoryRow>,
    pub teacher: TeacherOutput,
}

/// `step,lr,loss` table.
pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for r in history {
        let _ = writeln!(s, "{},{},{}", r.step, r.lr, r.loss);
    }
    s
}

/// Trains a linear probe on the strong views of `group` against pseudo-labels
/// from the frozen teacher on the weak view.
///
/// The teacher is evaluated once up front. Each step draws `batch_size`
/// indices with replacement, picks one strong view per draw, averages the
/// confidence-weighted losses and takes one clipped SGD step at the cosine
/// learning rate. The loop is sequential; identical inputs give bitwise
/// identical parameters.
pub fn train_probe(
    group: &ViewGroup,
    anchors: &ClassAnchors,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if group.is_empty() {
        return Err(Error::EmptyInput("view group"));
    }
    if group.dim() != anchors.dim() {
        return Err(Error::dims(format!(
            "view group has D={}, anchors D={}",
            group.dim(),
            anchors.dim()
        )));
    }
    let teacher = teacher_predict(&store_logits(&group.weak, anchors)?, config.temperature)?;
    train_probe_with_teacher(group, teacher, config)
}

/// The training loop of [`train_probe`] against precomputed teacher
/// outputs, one row per sample of `group`.
pub fn train_probe_with_teacher(
    group: &ViewGroup,
    teacher: TeacherOutput,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_probe_observed(group, teacher, config, &mut |_, _| {})
}

/// [`train_probe_with_teacher`], calling `observe(step, params)` after
/// every optimizer step.
pub fn train_probe_observed(
    group: &ViewGroup,
    teacher: TeacherOutput,
    config: &TrainConfig,
    observe: &mut dyn FnMut(u64, &ProbeParams),
) -> Result<TrainOutcome> {
    config.validate()?;
    if group.is_empty() {
        return Err(Error::EmptyInput("view group"));
    }
    if teacher.len() != group.len() {
        return Err(Error::dims(format!(
            "teacher has {} rows for {} samples",
            teacher.len(),
            group.len()
        )));
    }
    let c = teacher.probs.cols();
    if teacher.pseudo_label.iter().any(|&y| y >= c) {
        return Err(Error::OutOfRange(format!("pseudo-label outside 0..{c}")));
    }
    let weights: Vec<f64> = if config.weighting {
        teacher.confidence.clone()
    } else {
        vec![1.0; teacher.len()]
    };

    let k = config
        .views
        .map_or(group.num_strong(), |v| v.min(group.num_strong()));
    let views: Vec<Matrix> = if config.strong_aug && k > 0 {
        group.strong[..k].iter().map(|s| s.to_matrix()).collect()
    } else {
        vec![group.weak.to_matrix()]
    };

    let n = group.len();
    let batch = config.batch_size;
    let inv_batch = 1.0 / batch as f64;
    let sgd = config.sgd();

    let mut params = init_probe(group.dim(), c)?;
    let mut grads = ProbeParams::zeros(group.dim(), c);
    let mut state = OptimizerState::new(&params);
    let mut rng = rng::seeded(config.seed);
    let mut logits = vec![0.0; c];
    let mut dlogits = vec![0.0; c];
    let mut draws: u64 = 0;
    let mut history = Vec::with_capacity(config.total_steps as usize);

    for step in 0..config.total_steps {
        let lr = cosine_lr(step, config.total_steps, config.lr0);
        grads.values_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..batch {
            let i = rng.random_range(0..n);
            let v = match config.strong_view_policy {
                StrongViewPolicy::Cycle => (draws % views.len() as u64) as usize,
                StrongViewPolicy::UniformRandom => rng.random_range(0..views.len()),
            };
            draws += 1;
            let z = views[v].row(i);
            params.forward_into(z, &mut logits);
            loss +=
                consistency_loss_into(&logits, teacher.pseudo_label[i], weights[i], &mut dlogits)
                    * inv_batch;
            for (cls, &g) in dlogits.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let g = g * inv_batch;
                for (w, zj) in grads.weights_mut().row_mut(cls).iter_mut().zip(z) {
                    *w += g * zj;
                }
                grads.bias_mut()[cls] += g;
            }
        }
        history.push(HistoryRow { step, lr, loss });
        sgd_step_with_clip(&mut params, &mut grads, &mut state, lr, &sgd)?;
        observe(step, &params);
    }

    Ok(TrainOutcome {
        params,
        history,
        teacher,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::tensorio::{EmbeddingStore, Manifest};

    fn group(rows: &[Vec<f64>], strong: usize) -> ViewGroup {
        let m = Matrix::from_rows(rows).unwrap();
        let man = Manifest::new(vec!["a".into(), "b".into()], "test");
        let weak = EmbeddingStore::from_matrix(&m, true, man.clone()).unwrap();
        let strong = (0..strong).map(|_| weak.clone()).collect();
        ViewGroup::new(weak, strong, man).unwrap()
    }

    fn unit(v: [f64; 2]) -> Vec<f64> {
        let mut v = v.to_vec();
        linalg::normalize(&mut v);
        v
    }

    fn anchors() -> ClassAnchors {
        ClassAnchors::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap()).unwrap()
    }

    #[test]
    fn config_defaults_match_reference_schedule() {
        let c = TrainConfig::default();
        assert_eq!((c.lr0, c.total_steps, c.batch_size), (0.1, 15_000, 64));
        assert_eq!(
            (c.momentum, c.weight_decay, c.clip_norm, c.temperature),
            (0.9, 0.0, 1.0, 0.01)
        );
    }

    #[test]
    fn negative_lr_names_field() {
        let c = TrainConfig {
            lr0: -1.0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("train.lr0"));
    }

    #[test]
    fn empty_group_rejected() {
        let g = group(&[], 0);
        let cfg = TrainConfig {
            total_steps: 1,
            ..Default::default()
        };
        assert!(matches!(
            train_probe(&g, &anchors(), &cfg),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = group(&[unit([1.0, 0.0])], 0);
        let a = ClassAnchors::new(Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap())
            .unwrap();
        let cfg = TrainConfig {
            total_steps: 1,
            ..Default::default()
        };
        assert!(matches!(
            train_probe(&g, &a, &cfg),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn learns_pseudo_labels_and_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                if i % 2 == 0 {
                    unit([1.0, 0.1 * i as f64 / 20.0])
                } else {
                    unit([0.1, 1.0])
                }
            })
            .collect();
        let g = group(&rows, 2);
        let cfg = TrainConfig {
            total_steps: 200,
            batch_size: 8,
            strong_view_policy: StrongViewPolicy::Cycle,
            ..Default::default()
        };
        let a = train_probe(&g, &anchors(), &cfg).unwrap();
        let b = train_probe(&g, &anchors(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.len(), 200);
        let pred =
            super::super::predict_probe(&a.params, &Matrix::from_rows(&rows).unwrap()).unwrap();
        assert_eq!(pred.labels, a.teacher.pseudo_label);
    }

    #[test]
    fn history_csv_header() {
        let s = history_csv(&[HistoryRow {
            step: 0,
            lr: 0.1,
            loss: 0.5,
        }]);
        assert_eq!(s, "step,lr,loss\n0,0.1,0.5\n");
    }
}
