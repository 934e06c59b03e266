//! Zero-shot classification against text-derived class anchors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::tensorio::{EmbeddingStore, Manifest, UNIT_NORM_TOLERANCE};

/// Softmax temperature of the pretrained teacher.
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

/// Class × prompt × dimension text embeddings, stored class-major as a
/// `(C·P) × D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    classes: usize,
    prompts: usize,
    embeddings: Matrix,
    pub class_names: Vec<String>,
    pub prompt_texts: Option<Vec<String>>,
}

impl PromptBank {
    pub fn new(
        classes: usize,
        prompts: usize,
        embeddings: Matrix,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "prompt bank needs C >= 2, got {classes}"
            )));
        }
        if prompts < 1 {
            return Err(Error::InvalidArgument("prompt bank needs P >= 1".into()));
        }
        if embeddings.rows() != classes * prompts {
            return Err(Error::dims(format!(
                "prompt bank has {} rows, expected C·P = {}",
                embeddings.rows(),
                classes * prompts
            )));
        }
        if class_names.len() != classes {
            return Err(Error::Manifest(format!(
                "{} class names for {classes} classes",
                class_names.len()
            )));
        }
        for (i, r) in embeddings.iter_rows().enumerate() {
            let n = linalg::norm(r);
            if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "prompt embedding row {i} has norm {n}"
                )));
            }
        }
        Ok(PromptBank {
            classes,
            prompts,
            embeddings,
            class_names,
            prompt_texts: None,
        })
    }

    pub fn from_store(store: &EmbeddingStore) -> Result<Self> {
        let p = store
            .manifest
            .prompt_count
            .ok_or_else(|| Error::Manifest("prompt bank manifest lacks `prompt_count`".into()))?;
        if !store.is_unit_norm() {
            return Err(Error::NotNormalized);
        }
        let c = store.manifest.num_classes();
        Self::new(c, p, store.to_matrix(), store.manifest.class_names.clone())
    }

    pub fn to_store(&self, source: &str) -> Result<EmbeddingStore> {
        let mut m = Manifest::new(self.class_names.clone(), source);
        m.prompt_count = Some(self.prompts);
        EmbeddingStore::from_matrix(&self.embeddings, true, m)
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn num_prompts(&self) -> usize {
        self.prompts
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embedding(&self, class: usize, prompt: usize) -> &[f64] {
        self.embeddings.row(class * self.prompts + prompt)
    }
}

/// How per-prompt embeddings are reduced to one anchor per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Single(usize),
    #[default]
    Mean,
}

/// One unit-norm anchor per class, `C × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAnchors {
    matrix: Matrix,
}

impl ClassAnchors {
    pub fn new(mut matrix: Matrix) -> Result<Self> {
        for c in 0..matrix.rows() {
            if linalg::normalize(matrix.row_mut(c)) == 0.0 {
                return Err(Error::DegenerateEnsemble { class: c });
            }
        }
        Ok(ClassAnchors { matrix })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn num_classes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Averages (or selects) prompt embeddings per class and renormalizes.
pub fn ensemble_class_embeddings(bank: &PromptBank, mode: EnsembleMode) -> Result<ClassAnchors> {
    let d = bank.dim();
    let mut out = Matrix::zeros(bank.num_classes(), d);
    match mode {
        EnsembleMode::Single(p) => {
            if p >= bank.num_prompts() {
                return Err(Error::OutOfRange(format!(
                    "prompt {p} of {}",
                    bank.num_prompts()
                )));
            }
            for c in 0..bank.num_classes() {
                out.row_mut(c).copy_from_slice(bank.embedding(c, p));
            }
        }
        EnsembleMode::Mean => {
            let inv = 1.0 / bank.num_prompts() as f64;
            for c in 0..bank.num_classes() {
                let row = out.row_mut(c);
                for p in 0..bank.num_prompts() {
                    for (o, v) in row.iter_mut().zip(bank.embedding(c, p)) {
                        *o += v;
                    }
                }
                row.iter_mut().for_each(|o| *o *= inv);
                // Antipodal prompts cancel; anything this small has no direction.
                if linalg::norm(row) < 1e-12 {
                    return Err(Error::DegenerateEnsemble { class: c });
                }
            }
        }
    }
    ClassAnchors::new(out)
}

/// Cosine logits `out[i][c] = ⟨z_i, a_c⟩`.
pub fn compute_logits(embs: &Matrix, anchors: &ClassAnchors) -> Result<Matrix> {
    if embs.cols() != anchors.dim() {
        return Err(Error::dims(format!(
            "embeddings have D={}, anchors D={}",
            embs.cols(),
            anchors.dim()
        )));
    }
    embs.matmul_transposed(anchors.matrix())
}

/// `compute_logits` for a store, which must carry the unit-norm flag.
pub fn store_logits(store: &EmbeddingStore, anchors: &ClassAnchors) -> Result<Matrix> {
    if !store.is_unit_norm() {
        return Err(Error::NotNormalized);
    }
    compute_logits(&store.to_matrix(), anchors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutput {
    pub logits: Matrix,
    pub probs: Matrix,
    pub pseudo_label: Vec<usize>,
    pub confidence: Vec<f64>,
    pub temperature: f64,
}

impl TeacherOutput {
    pub fn len(&self) -> usize {
        self.pseudo_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pseudo_label.is_empty()
    }
}

/// Temperature softmax, argmax pseudo-labels and max-probability confidence.
pub fn teacher_predict(logits: &Matrix, temperature: f64) -> Result<TeacherOutput> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !logits.is_finite() {
        return Err(Error::InvalidArgument("non-finite logits".into()));
    }
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    let mut pseudo_label = Vec::with_capacity(logits.rows());
    let mut confidence = Vec::with_capacity(logits.rows());
    for i in 0..logits.rows() {
        linalg::softmax_into(logits.row(i), temperature, probs.row_mut(i));
        let y = linalg::argmax(probs.row(i));
        pseudo_label.push(y);
        confidence.push(probs.get(i, y));
    }
    Ok(TeacherOutput {
        logits: logits.clone(),
        probs,
        pseudo_label,
        confidence,
        temperature,
    })
}

/// Per-prompt zero-shot accuracies and the winning prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSelection {
    pub best: usize,
    pub accuracies: Vec<f64>,
}

impl PromptSelection {
    /// `prompt_index,accuracy` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("prompt_index,accuracy\n");
        for (i, a) in self.accuracies.iter().enumerate() {
            let _ = writeln!(s, "{i},{a}");
        }
        s
    }
}

/// Scores every single-prompt anchor set on a labelled evaluation set.
/// This is a labelled-data utility, not part of unsupervised training.
pub fn select_best_prompt(
    bank: &PromptBank,
    embs: &Matrix,
    labels: &[i64],
    temperature: f64,
) -> Result<PromptSelection> {
    if labels.len() != embs.rows() {
        return Err(Error::dims(format!(
            "{} labels for {} embeddings",
            labels.len(),
            embs.rows()
        )));
    }
    if labels.iter().any(|&l| l < 0) {
        return Err(Error::SelectionRequiresLabels);
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("prompt selection set"));
    }
    let mut accuracies = Vec::with_capacity(bank.num_prompts());
    for p in 0..bank.num_prompts() {
        let anchors = ensemble_class_embeddings(bank, EnsembleMode::Single(p))?;
        let out = teacher_predict(&compute_logits(embs, &anchors)?, temperature)?;
        let hits = out
            .pseudo_label
            .iter()
            .zip(labels)
            .filter(|(&y, &l)| y as i64 == l)
            .count();
        accuracies.push(hits as f64 / labels.len() as f64);
    }
    let best = linalg::argmax(&accuracies);
    Ok(PromptSelection { best, accuracies })
}
