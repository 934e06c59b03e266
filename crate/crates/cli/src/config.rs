use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lpclip_core::augment::{CorruptionRegistry, CorruptionSpec};
use lpclip_core::metrics::DEFAULT_BINS;
use lpclip_core::probe::TrainConfig;
use lpclip_core::toyworld::{ToyDatasetSpec, ToyEncoderSpec};
use lpclip_core::zeroshot::EnsembleMode;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEEDS: [u64; 3] = [42, 36, 12];
pub const RESOLVED_CONFIG: &str = "resolved_config.json";

/// One JSON document drives every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    pub encoder: EncoderConfig,
    pub prompts: PromptConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Probe seeds; each gets its own `seed_<s>` subdirectory.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: DatasetConfig::default(),
            encoder: EncoderConfig::default(),
            prompts: PromptConfig::default(),
            train: toy_train_config(),
            eval: EvalConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            out_dir: PathBuf::from("lpclip-out"),
        }
    }
}

/// Schedule for the toy world. The toy features are unit-norm 64-d random
/// features, so a shorter run at a larger rate reaches the same training
/// loss as the reference schedule does on real embeddings.
pub fn toy_train_config() -> TrainConfig {
    TrainConfig {
        lr0: 1.0,
        total_steps: 5_000,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Toy(ToyConfig),
    Stores(StorePaths),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Toy(ToyConfig::default())
    }
}

/// The synthetic world plus the sizes of its held-out splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub classes: usize,
    pub per_class: usize,
    pub img_size: usize,
    pub jitter: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub test_per_class: usize,
    /// Novel pattern classes rendered for the OOD set.
    pub ood_classes: usize,
    pub ood_per_class: usize,
    pub strong_views: usize,
    pub aug_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        let s = ToyDatasetSpec::default();
        ToyConfig {
            classes: s.classes,
            per_class: s.per_class,
            img_size: s.img_size,
            jitter: s.jitter,
            noise_sigma: s.noise_sigma,
            seed: s.seed,
            test_per_class: 100,
            ood_classes: 10,
            ood_per_class: 100,
            strong_views: 4,
            aug_seed: 99,
        }
    }
}

impl ToyConfig {
    pub fn spec(&self) -> ToyDatasetSpec {
        ToyDatasetSpec {
            classes: self.classes,
            per_class: self.per_class,
            img_size: self.img_size,
            jitter: self.jitter,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }
}

/// Precomputed stores, e.g. exported from a real encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorePaths {
    /// View-group directory.
    pub train: PathBuf,
    /// Labelled weak-view test store.
    pub test: PathBuf,
    /// Prompt-bank store (C·P rows).
    pub prompts: PathBuf,
    /// Directory holding `<kind>_<severity>.lpce` corrupted test stores.
    #[serde(default)]
    pub corrupt_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderConfig {
    Toy(ToyEncoderSpec),
    External,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Toy(ToyEncoderSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Prompts per class in the toy bank.
    pub count: usize,
    /// Fresh samples averaged into each toy prompt embedding.
    pub anchor_samples: usize,
    pub mode: EnsembleMode,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            count: 4,
            anchor_samples: 1,
            mode: EnsembleMode::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub bins: usize,
    pub corruptions: Vec<CorruptionSpec>,
    /// OOD store; the toy world supplies its own when absent.
    pub ood_store: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bins: DEFAULT_BINS,
            corruptions: vec![CorruptionSpec::new("gaussian_noise", 3).expect("severity in range")],
            ood_store: None,
        }
    }
}

/// Command-line overrides, applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub corrupt: Option<Vec<CorruptionSpec>>,
    pub no_weighting: bool,
    pub no_strong_aug: bool,
    pub views: Option<usize>,
}

impl PipelineConfig {
    /// Parses a config document. Syntax and schema errors carry the line
    /// and column of the offending token.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| anyhow::anyhow!("config: {e}"))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(c) = &o.corrupt {
            self.eval.corruptions = c.clone();
        }
        if o.no_weighting {
            self.train.weighting = false;
        }
        if o.no_strong_aug {
            self.train.strong_aug = false;
        }
        if let Some(v) = o.views {
            self.train.views = Some(v);
        }
    }

    /// Range and consistency checks; every message starts with the dotted
    /// path of the field at fault.
    pub fn validate(&self) -> Result<()> {
        if let Err(e) = self.train.validate() {
            bail!("{}", e.to_string().trim_start_matches("invalid argument: "));
        }
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("seeds must not repeat");
        }
        if self.eval.bins == 0 {
            bail!("eval.bins must be positive");
        }
        let registry = CorruptionRegistry::default();
        for c in &self.eval.corruptions {
            if registry.get(&c.kind).is_err() {
                bail!(
                    "eval.corruptions: unknown corruption `{}` (known: {})",
                    c.kind,
                    registry.names().join(", ")
                );
            }
        }
        match (&self.dataset, &self.encoder) {
            (DatasetConfig::Toy(t), EncoderConfig::Toy(e)) => {
                if let Err(err) = t.spec().validate() {
                    bail!("dataset.toy.{}", strip(&err));
                }
                if let Err(err) = lpclip_core::toyworld::ToyEncoder::new(e) {
                    bail!("encoder.toy.{}", strip(&err));
                }
                if t.img_size % e.patch != 0 {
                    bail!(
                        "encoder.toy.patch {} must divide dataset.toy.img_size {}",
                        e.patch,
                        t.img_size
                    );
                }
                if t.test_per_class == 0 {
                    bail!("dataset.toy.test_per_class must be positive");
                }
                if t.ood_classes > 0 && t.ood_per_class == 0 {
                    bail!("dataset.toy.ood_per_class must be positive when ood_classes > 0");
                }
                if self.prompts.count == 0 {
                    bail!("prompts.count must be positive");
                }
                if self.prompts.anchor_samples == 0 {
                    bail!("prompts.anchor_samples must be positive");
                }
                if let EnsembleMode::Single(p) = self.prompts.mode {
                    if p >= self.prompts.count {
                        bail!(
                            "prompts.mode selects prompt {p} but prompts.count is {}",
                            self.prompts.count
                        );
                    }
                }
            }
            (DatasetConfig::Toy(_), EncoderConfig::External) => {
                bail!("encoder must be `toy` when dataset is `toy`");
            }
            (DatasetConfig::Stores(s), _) => {
                if !self.eval.corruptions.is_empty() && s.corrupt_dir.is_none() {
                    bail!(
                        "dataset.stores.corrupt_dir is required when eval.corruptions is non-empty"
                    );
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Writes the fully resolved config into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }
}

fn strip(e: &lpclip_core::Error) -> String {
    e.to_string()
        .trim_start_matches("invalid argument: ")
        .to_string()
}
