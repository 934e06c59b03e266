//! Subcommand implementations. Each stage reads what earlier stages wrote
//! under `out_dir`, writes its own artifacts plus `resolved_config.json`
//! into one directory, and returns the numbers it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use lpclip_core::augment::{CorruptionRegistry, CorruptionSpec, Image};
use lpclip_core::metrics::{
    accuracy, calibration_report, ood_report, pca_project, CalibrationReport, OodReport,
};
use lpclip_core::probe::{history_csv, predict_store, train_probe, ProbeParams};
use lpclip_core::rng;
use lpclip_core::tensorio::{
    read_store, read_view_group, write_store, write_view_group, EmbeddingStore, Manifest,
};
use lpclip_core::toyworld::{
    build_class_prompt_bank, build_view_group, encode_weak, gen_dataset, gen_ood_set, gen_test_set,
    ToyDataset, ToyEncoder,
};
use lpclip_core::zeroshot::{
    ensemble_class_embeddings, select_best_prompt, store_logits, teacher_predict, ClassAnchors,
    PromptBank, PromptSelection,
};
use serde::Serialize;

use crate::config::{DatasetConfig, EncoderConfig, PipelineConfig, ToyConfig};
use crate::plot::{emit_plot, PlotReport};

const CORRUPT_SEED_OFFSET: u64 = 0xC022_0003;

pub const TEACHER: &str = "teacher";
pub const STUDENT: &str = "student";
pub const CLEAN: &str = "clean";
pub const CORRUPTED_MEAN: &str = "corrupted_mean";

/// Where the stores for a run live.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub prompts: PathBuf,
    pub corrupt_dir: Option<PathBuf>,
    pub ood: Option<PathBuf>,
}

impl DataPaths {
    pub fn corrupt(&self, c: &CorruptionSpec) -> Result<PathBuf> {
        let dir = self
            .corrupt_dir
            .as_ref()
            .ok_or_else(|| anyhow!("no corrupt_dir configured for corruption {c}"))?;
        Ok(dir.join(corrupt_store_name(c)))
    }
}

pub fn corrupt_store_name(c: &CorruptionSpec) -> String {
    format!("{}_{}.lpce", c.kind, c.severity)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub model: String,
    pub condition: String,
    pub accuracy: f64,
    pub ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub model: String,
    pub condition: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub ece_mean: f64,
    pub ece_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OodRow {
    pub model: String,
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OodSummary {
    pub model: String,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub aupr_mean: f64,
    pub aupr_std: f64,
    pub fpr95_mean: f64,
    pub fpr95_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroShotResult {
    pub accuracy: f64,
    pub ece: f64,
    pub samples: usize,
    pub report: CalibrationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainResult {
    pub seed: u64,
    pub final_loss: f64,
    /// Agreement of teacher pseudo-labels with train labels, when present.
    pub pseudo_label_accuracy: Option<f64>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if let Some(&first) = xs.first() {
        if xs.iter().all(|&x| x == first) {
            return (first, 0.0);
        }
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn load(path: &Path) -> Result<EmbeddingStore> {
    read_store(path).with_context(|| format!("loading store {}", path.display()))
}

fn labels_of(store: &EmbeddingStore, path: &Path) -> Result<Vec<i64>> {
    store
        .labels()
        .map(<[i64]>::to_vec)
        .ok_or_else(|| anyhow!("{} has no labels in its manifest", path.display()))
}

fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("model,condition,accuracy,ece\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.model, r.condition, r.accuracy, r.ece);
    }
    s
}

fn summary_csv(rows: &[MetricSummary]) -> String {
    let mut s = String::from("model,condition,accuracy_mean,accuracy_std,ece_mean,ece_std\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.model, r.condition, r.accuracy_mean, r.accuracy_std, r.ece_mean, r.ece_std
        );
    }
    s
}

fn ood_csv(rows: &[OodRow]) -> String {
    let mut s = String::from("model,auroc,aupr,fpr95\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.model, r.auroc, r.aupr, r.fpr95);
    }
    s
}

fn ood_summary_csv(rows: &[OodSummary]) -> String {
    let mut s =
        String::from("model,auroc_mean,auroc_std,aupr_mean,aupr_std,fpr95_mean,fpr95_std\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.model, r.auroc_mean, r.auroc_std, r.aupr_mean, r.aupr_std, r.fpr95_mean, r.fpr95_std
        );
    }
    s
}

/// Predictions and confidences of one model on one store.
struct Scored {
    labels: Vec<usize>,
    confidence: Vec<f64>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline { cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out().join("data")
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out().join(stage)
    }

    pub fn seed_dir(&self, stage: &str, seed: u64) -> PathBuf {
        self.stage_dir(stage).join(format!("seed_{seed}"))
    }

    pub fn data_paths(&self) -> DataPaths {
        match &self.cfg.dataset {
            DatasetConfig::Toy(t) => {
                let d = self.data_dir();
                DataPaths {
                    train: d.join("train"),
                    test: d.join("test.lpce"),
                    prompts: d.join("prompts.lpce"),
                    corrupt_dir: Some(d.join("corrupt")),
                    ood: self
                        .cfg
                        .eval
                        .ood_store
                        .clone()
                        .or_else(|| (t.ood_classes > 0).then(|| d.join("ood.lpce"))),
                }
            }
            DatasetConfig::Stores(s) => DataPaths {
                train: s.train.clone(),
                test: s.test.clone(),
                prompts: s.prompts.clone(),
                corrupt_dir: s.corrupt_dir.clone(),
                ood: self.cfg.eval.ood_store.clone(),
            },
        }
    }

    fn stage(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.stage_dir(stage);
        self.cfg.write_resolved(&dir)?;
        Ok(dir)
    }

    fn toy(&self) -> Result<(&ToyConfig, ToyEncoder)> {
        match (&self.cfg.dataset, &self.cfg.encoder) {
            (DatasetConfig::Toy(t), EncoderConfig::Toy(e)) => Ok((t, ToyEncoder::new(e)?)),
            _ => bail!(
                "synth needs `dataset.toy` and `encoder.toy`; stores are imported as they are"
            ),
        }
    }

    fn anchors(&self) -> Result<ClassAnchors> {
        let bank = self.bank()?;
        Ok(ensemble_class_embeddings(&bank, self.cfg.prompts.mode)?)
    }

    fn bank(&self) -> Result<PromptBank> {
        let path = self.data_paths().prompts;
        PromptBank::from_store(&load(&path)?)
            .with_context(|| format!("prompt bank {}", path.display()))
    }

    fn teacher_scores(&self, anchors: &ClassAnchors, store: &EmbeddingStore) -> Result<Scored> {
        let t = teacher_predict(&store_logits(store, anchors)?, self.cfg.train.temperature)?;
        Ok(Scored {
            labels: t.pseudo_label,
            confidence: t.confidence,
        })
    }

    fn student_scores(params: &ProbeParams, store: &EmbeddingStore) -> Result<Scored> {
        let p = predict_store(params, store)?;
        Ok(Scored {
            labels: p.labels,
            confidence: p.confidence,
        })
    }

    fn report(
        &self,
        s: &Scored,
        labels: &[i64],
        ood: Option<&[f64]>,
    ) -> Result<(MetricRowValues, CalibrationReport)> {
        let acc = accuracy(&s.labels, labels)?;
        let correct: Vec<bool> = s
            .labels
            .iter()
            .zip(labels)
            .map(|(&p, &l)| p as i64 == l)
            .collect();
        let report = calibration_report(&s.confidence, &correct, ood, self.cfg.eval.bins)?;
        Ok((
            MetricRowValues {
                accuracy: acc,
                ece: report.ece,
            },
            report,
        ))
    }

    pub fn load_probe(&self, seed: u64) -> Result<ProbeParams> {
        let path = self.seed_dir("train", seed).join("probe.lpce");
        ProbeParams::from_store(&load(&path)?).with_context(|| format!("probe {}", path.display()))
    }

    /// Renders the toy world into stores: the train view group, the test
    /// set, OOD and corrupted test sets, and the prompt bank.
    pub fn synth(&self) -> Result<DataPaths> {
        let (toy, enc) = self.toy()?;
        let spec = toy.spec();
        let paths = self.data_paths();
        let dir = self.data_dir();
        mkdir(&dir)?;
        self.cfg.write_resolved(&dir)?;
        let names = spec.class_names();

        let train = gen_dataset(&spec)?;
        let mut man = Manifest::new(names.clone(), "toyworld:train");
        man.labels = Some(train.labels.iter().map(|&l| l as i64).collect());
        let group = build_view_group(&train, &spec, &enc, toy.strong_views, toy.aug_seed, man)?;
        write_view_group(&group, &paths.train)?;

        let test = gen_test_set(&spec, toy.test_per_class)?;
        let test_labels: Vec<i64> = test.labels.iter().map(|&l| l as i64).collect();
        let write_test = |images: &[Image], source: String, path: &Path| -> Result<()> {
            let mut man = Manifest::new(names.clone(), source);
            man.labels = Some(test_labels.clone());
            let m = encode_weak(images, &enc, spec.img_size)?;
            write_store(&EmbeddingStore::from_matrix(&m, true, man)?, path)?;
            Ok(())
        };
        write_test(&test.images, "toyworld:test".into(), &paths.test)?;

        if let Some(cdir) = &paths.corrupt_dir {
            mkdir(cdir)?;
            let registry = CorruptionRegistry::default();
            for c in &self.cfg.eval.corruptions {
                let seed =
                    spec.seed.wrapping_add(CORRUPT_SEED_OFFSET) ^ fnv1a(c.to_string().as_bytes());
                let images = test
                    .images
                    .iter()
                    .enumerate()
                    .map(|(i, img)| registry.apply(img, c, &mut rng::stream(seed, i as u64)))
                    .collect::<lpclip_core::Result<Vec<_>>>()?;
                write_test(
                    &images,
                    format!("toyworld:test:{c}"),
                    &cdir.join(corrupt_store_name(c)),
                )?;
            }
        }

        if toy.ood_classes > 0 && self.cfg.eval.ood_store.is_none() {
            let ToyDataset { images, .. } = gen_ood_set(&spec, toy.ood_classes, toy.ood_per_class)?;
            let m = encode_weak(&images, &enc, spec.img_size)?;
            let novel_names = (spec.classes..spec.classes + toy.ood_classes)
                .map(|c| format!("pattern_{c}"))
                .collect();
            let store =
                EmbeddingStore::from_matrix(&m, true, Manifest::new(novel_names, "toyworld:ood"))?;
            write_store(&store, &dir.join("ood.lpce"))?;
        }

        let bank = build_class_prompt_bank(
            &spec,
            &enc,
            self.cfg.prompts.count,
            self.cfg.prompts.anchor_samples,
        )?;
        write_store(&bank.to_store("toyworld:prompts")?, &paths.prompts)?;
        Ok(paths)
    }

    /// Teacher accuracy and calibration on the clean test store.
    pub fn zeroshot(&self) -> Result<ZeroShotResult> {
        let dir = self.stage("zeroshot")?;
        let paths = self.data_paths();
        let anchors = self.anchors()?;
        let test = load(&paths.test)?;
        let labels = labels_of(&test, &paths.test)?;
        let ood = match &paths.ood {
            Some(p) => Some(self.teacher_scores(&anchors, &load(p)?)?.confidence),
            None => None,
        };
        let (v, report) = self.report(
            &self.teacher_scores(&anchors, &test)?,
            &labels,
            ood.as_deref(),
        )?;
        let result = ZeroShotResult {
            accuracy: v.accuracy,
            ece: v.ece,
            samples: labels.len(),
            report,
        };
        write(
            &dir.join("metrics.csv"),
            metrics_csv(&[v.row(TEACHER, CLEAN)]),
        )?;
        write(
            &dir.join("reliability.csv"),
            result.report.reliability_csv(),
        )?;
        write(&dir.join("histogram.csv"), result.report.histogram_csv())?;
        write_json(&dir.join("report.json"), &result)?;
        Ok(result)
    }

    /// Single-prompt accuracy table on the labelled test store.
    pub fn prompt_select(&self) -> Result<PromptSelection> {
        let dir = self.stage("prompt_select")?;
        let paths = self.data_paths();
        let test = load(&paths.test)?;
        let labels = labels_of(&test, &paths.test)?;
        let sel = select_best_prompt(
            &self.bank()?,
            &test.to_matrix(),
            &labels,
            self.cfg.train.temperature,
        )?;
        write(&dir.join("prompt_selection.csv"), sel.to_csv())?;
        write_json(&dir.join("prompt_selection.json"), &sel)?;
        Ok(sel)
    }

    /// Trains one probe per seed, concurrently; each seed writes only to
    /// its own directory.
    pub fn train(&self) -> Result<Vec<TrainResult>> {
        self.stage("train")?;
        let paths = self.data_paths();
        let group = read_view_group(&paths.train)
            .with_context(|| format!("view group {}", paths.train.display()))?;
        let anchors = self.anchors()?;
        let class_names = group.manifest.class_names.clone();
        let results: Vec<Result<TrainResult>> = thread::scope(|s| {
            let handles: Vec<_> = self
                .cfg
                .seeds
                .iter()
                .map(|&seed| {
                    let (group, anchors, class_names) = (&group, &anchors, &class_names);
                    s.spawn(move || self.train_seed(group, anchors, class_names, seed))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(anyhow!("training thread panicked")))
                })
                .collect()
        });
        results.into_iter().collect()
    }

    fn train_seed(
        &self,
        group: &lpclip_core::tensorio::ViewGroup,
        anchors: &ClassAnchors,
        class_names: &[String],
        seed: u64,
    ) -> Result<TrainResult> {
        let dir = self.seed_dir("train", seed);
        let mut cfg = self.cfg.clone();
        cfg.seeds = vec![seed];
        cfg.train.seed = seed;
        cfg.write_resolved(&dir)?;
        let out = train_probe(group, anchors, &cfg.train)
            .with_context(|| format!("training seed {seed}"))?;
        write_store(
            &out.params.to_store(class_names.to_vec())?,
            &dir.join("probe.lpce"),
        )?;
        write(&dir.join("history.csv"), history_csv(&out.history))?;
        let pseudo_label_accuracy = match group.weak.labels() {
            Some(l) => Some(accuracy(&out.teacher.pseudo_label, l)?),
            None => None,
        };
        let result = TrainResult {
            seed,
            final_loss: out.history.last().map_or(f64::NAN, |h| h.loss),
            pseudo_label_accuracy,
        };
        write_json(&dir.join("train.json"), &result)?;
        Ok(result)
    }

    /// Teacher and student accuracy and ECE on the clean test store and
    /// every configured corruption, per seed, plus a mean/std summary.
    pub fn eval(&self) -> Result<(Vec<Vec<MetricRow>>, Vec<MetricSummary>)> {
        let dir = self.stage("eval")?;
        let paths = self.data_paths();
        let anchors = self.anchors()?;
        let mut conditions = vec![(CLEAN.to_string(), paths.test.clone())];
        for c in &self.cfg.eval.corruptions {
            conditions.push((c.to_string(), paths.corrupt(c)?));
        }
        let stores = conditions
            .iter()
            .map(|(name, p)| {
                let store = load(p)?;
                let labels = labels_of(&store, p)?;
                Ok((name.clone(), store, labels))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut teacher_rows = Vec::new();
        for (name, store, labels) in &stores {
            let (v, _) = self.report(&self.teacher_scores(&anchors, store)?, labels, None)?;
            teacher_rows.push(v.row(TEACHER, name));
        }

        let mut per_seed = Vec::new();
        for &seed in &self.cfg.seeds {
            let params = self.load_probe(seed)?;
            let mut rows = teacher_rows.clone();
            for (name, store, labels) in &stores {
                let (v, report) =
                    self.report(&Self::student_scores(&params, store)?, labels, None)?;
                rows.push(v.row(STUDENT, name));
                if name == CLEAN {
                    let sdir = self.seed_dir("eval", seed);
                    mkdir(&sdir)?;
                    write(&sdir.join("reliability.csv"), report.reliability_csv())?;
                }
            }
            add_corrupted_mean(&mut rows);
            let sdir = self.seed_dir("eval", seed);
            mkdir(&sdir)?;
            write(&sdir.join("metrics.csv"), metrics_csv(&rows))?;
            write_json(&sdir.join("metrics.json"), &rows)?;
            per_seed.push(rows);
        }

        let summary: Vec<MetricSummary> = per_seed[0]
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (accuracy_mean, accuracy_std) =
                    mean_std(&per_seed.iter().map(|s| s[i].accuracy).collect::<Vec<_>>());
                let (ece_mean, ece_std) =
                    mean_std(&per_seed.iter().map(|s| s[i].ece).collect::<Vec<_>>());
                MetricSummary {
                    model: r.model.clone(),
                    condition: r.condition.clone(),
                    accuracy_mean,
                    accuracy_std,
                    ece_mean,
                    ece_std,
                }
            })
            .collect();
        write(&dir.join("summary.csv"), summary_csv(&summary))?;
        write_json(&dir.join("summary.json"), &summary)?;
        Ok((per_seed, summary))
    }

    /// Maximum-softmax-probability OOD detection against the OOD store.
    pub fn ood(&self) -> Result<(Vec<Vec<OodRow>>, Vec<OodSummary>)> {
        let dir = self.stage("ood")?;
        let paths = self.data_paths();
        let ood_path = paths.ood.clone().ok_or_else(|| {
            anyhow!("no OOD store: set eval.ood_store or dataset.toy.ood_classes")
        })?;
        let anchors = self.anchors()?;
        let test = load(&paths.test)?;
        let ood = load(&ood_path)?;
        let row = |model: &str, id: &Scored, o: &Scored| -> Result<(OodRow, OodReport)> {
            let r = ood_report(&id.confidence, &o.confidence)?;
            Ok((
                OodRow {
                    model: model.into(),
                    auroc: r.auroc,
                    aupr: r.aupr,
                    fpr95: r.fpr95,
                },
                r,
            ))
        };
        let (teacher_row, teacher_report) = row(
            TEACHER,
            &self.teacher_scores(&anchors, &test)?,
            &self.teacher_scores(&anchors, &ood)?,
        )?;
        let mut per_seed = Vec::new();
        for &seed in &self.cfg.seeds {
            let params = self.load_probe(seed)?;
            let (student_row, student_report) = row(
                STUDENT,
                &Self::student_scores(&params, &test)?,
                &Self::student_scores(&params, &ood)?,
            )?;
            let sdir = self.seed_dir("ood", seed);
            mkdir(&sdir)?;
            let rows = vec![teacher_row.clone(), student_row];
            write(&sdir.join("ood.csv"), ood_csv(&rows))?;
            write_json(
                &sdir.join("ood.json"),
                &serde_json::json!({ TEACHER: teacher_report, STUDENT: student_report }),
            )?;
            per_seed.push(rows);
        }
        let summary: Vec<OodSummary> = per_seed[0]
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let col = |f: fn(&OodRow) -> f64| {
                    mean_std(&per_seed.iter().map(|s| f(&s[i])).collect::<Vec<_>>())
                };
                let (auroc_mean, auroc_std) = col(|r| r.auroc);
                let (aupr_mean, aupr_std) = col(|r| r.aupr);
                let (fpr95_mean, fpr95_std) = col(|r| r.fpr95);
                OodSummary {
                    model: r.model.clone(),
                    auroc_mean,
                    auroc_std,
                    aupr_mean,
                    aupr_std,
                    fpr95_mean,
                    fpr95_std,
                }
            })
            .collect();
        write(&dir.join("summary.csv"), ood_summary_csv(&summary))?;
        write_json(&dir.join("summary.json"), &summary)?;
        Ok((per_seed, summary))
    }

    /// Reliability diagrams and confidence histograms for the teacher and
    /// the first seed's student, and a PCA scatter of the test embeddings.
    pub fn plot(&self) -> Result<Vec<PathBuf>> {
        let dir = self.stage("plots")?;
        let paths = self.data_paths();
        let anchors = self.anchors()?;
        let test = load(&paths.test)?;
        let labels = labels_of(&test, &paths.test)?;
        let ood = paths.ood.as_ref().map(|p| load(p)).transpose()?;
        let seed = self.cfg.seeds[0];
        let params = self.load_probe(seed)?;

        let mut written = Vec::new();
        let models: [(&str, Scored, Option<Scored>); 2] = [
            (
                TEACHER,
                self.teacher_scores(&anchors, &test)?,
                ood.as_ref()
                    .map(|o| self.teacher_scores(&anchors, o))
                    .transpose()?,
            ),
            (
                STUDENT,
                Self::student_scores(&params, &test)?,
                ood.as_ref()
                    .map(|o| Self::student_scores(&params, o))
                    .transpose()?,
            ),
        ];
        for (model, id, o) in &models {
            let (_, report) =
                self.report(id, &labels, o.as_ref().map(|s| s.confidence.as_slice()))?;
            let title = if *model == STUDENT {
                format!("{model} (seed {seed})")
            } else {
                model.to_string()
            };
            let pr = PlotReport {
                title,
                calibration: Some(report),
                ..Default::default()
            };
            for kind in ["reliability", "histogram"] {
                let path = dir.join(format!("{kind}_{model}.svg"));
                emit_plot(&pr, kind, &path)?;
                written.push(path);
            }
        }

        let proj = pca_project(&test.to_matrix(), 2)?;
        let pr = PlotReport {
            title: "test embeddings".into(),
            pca: Some(proj),
            labels: Some(labels.iter().map(|&l| l.max(0) as usize).collect()),
            ..Default::default()
        };
        let path = dir.join("pca.svg");
        emit_plot(&pr, "pca", &path)?;
        written.push(path);
        Ok(written)
    }

    /// Every stage in order; `synth` only for the toy world.
    pub fn all(&self) -> Result<()> {
        if matches!(self.cfg.dataset, DatasetConfig::Toy(_)) {
            self.synth()?;
        }
        self.zeroshot()?;
        self.prompt_select()?;
        self.train()?;
        self.eval()?;
        if self.data_paths().ood.is_some() {
            self.ood()?;
        }
        self.plot()?;
        Ok(())
    }
}

struct MetricRowValues {
    accuracy: f64,
    ece: f64,
}

impl MetricRowValues {
    fn row(&self, model: &str, condition: &str) -> MetricRow {
        MetricRow {
            model: model.into(),
            condition: condition.into(),
            accuracy: self.accuracy,
            ece: self.ece,
        }
    }
}

/// Appends a per-model mean over the non-clean conditions.
fn add_corrupted_mean(rows: &mut Vec<MetricRow>) {
    for model in [TEACHER, STUDENT] {
        let corrupted: Vec<&MetricRow> = rows
            .iter()
            .filter(|r| r.model == model && r.condition != CLEAN)
            .collect();
        if corrupted.is_empty() {
            continue;
        }
        let n = corrupted.len() as f64;
        let row = MetricRow {
            model: model.into(),
            condition: CORRUPTED_MEAN.into(),
            accuracy: corrupted.iter().map(|r| r.accuracy).sum::<f64>() / n,
            ece: corrupted.iter().map(|r| r.ece).sum::<f64>() / n,
        };
        rows.push(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_uses_sample_deviation() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn corrupted_mean_averages_non_clean_rows() {
        let r = |model: &str, condition: &str, accuracy: f64| MetricRow {
            model: model.into(),
            condition: condition.into(),
            accuracy,
            ece: 0.0,
        };
        let mut rows = vec![
            r(TEACHER, CLEAN, 0.9),
            r(TEACHER, "a:1", 0.5),
            r(TEACHER, "b:2", 0.7),
        ];
        add_corrupted_mean(&mut rows);
        assert_eq!(rows.len(), 4);
        assert!((rows[3].accuracy - 0.6).abs() < 1e-15);
        assert_eq!(rows[3].condition, CORRUPTED_MEAN);
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn stores_dataset_paths_come_from_config() {
        let cfg = PipelineConfig::from_json(
            r#"{"encoder": "external",
                "dataset": {"stores": {"train": "g", "test": "t.lpce", "prompts": "p.lpce", "corrupt_dir": "c"}},
                "eval": {"ood_store": "o.lpce"}}"#,
        )
        .unwrap();
        let p = Pipeline::new(cfg).unwrap();
        let d = p.data_paths();
        assert_eq!(d.train, PathBuf::from("g"));
        assert_eq!(d.ood, Some(PathBuf::from("o.lpce")));
        assert_eq!(
            d.corrupt(&"gaussian_noise:3".parse().unwrap()).unwrap(),
            PathBuf::from("c/gaussian_noise_3.lpce")
        );
        assert!(p.synth().is_err());
    }
}
