//! Synthetic images and a fixed random-feature encoder, so the whole
//! pipeline runs at desk scale without a pretrained model.
//!
//! Each class is a sinusoidal grating over a colour gradient whose
//! orientation, frequency and palette are functions of the class index.
//! Samples perturb the class parameters (geometric jitter) and add pixel
//! noise. Class indices at or above `classes` render novel patterns from the
//! same family, which is how OOD sets are produced.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augment::{weak_augment, Image, StrongAugment};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng;
use crate::tensorio::{EmbeddingStore, Manifest, ViewGroup};
use crate::zeroshot::PromptBank;

/// Seed offsets separating the independent sample families.
const ANCHOR_SEED_OFFSET: u64 = 0x5EED_A0C4;
const STRONG_SEED_OFFSET: u64 = 0x5EED_57A6;
const TEST_SEED_OFFSET: u64 = 0x5EED_7E57;
const OOD_SEED_OFFSET: u64 = 0x5EED_00D0;

/// Converts the spec's unitless jitter into the per-parameter spread used
/// by [`Pattern::jittered`].
const JITTER_SCALE: f64 = 5.0 / 3.0;
const PROJECTION_GAIN: f64 = 6.0;
const BIAS_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyDatasetSpec {
    pub classes: usize,
    pub per_class: usize,
    pub img_size: usize,
    pub jitter: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        ToyDatasetSpec {
            classes: 10,
            per_class: 200,
            img_size: 32,
            jitter: 0.3,
            noise_sigma: 0.05,
            seed: 7,
        }
    }
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.per_class < 1 {
            return bad("per_class must be >= 1".into());
        }
        if self.img_size < crate::augment::MIN_SIZE {
            return bad(format!("img_size must be >= 8, got {}", self.img_size));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return bad(format!("jitter must be in [0, 1], got {}", self.jitter));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            ));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("pattern_{c}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyEncoderSpec {
    pub dim: usize,
    pub patch: usize,
    pub seed: u64,
}

impl Default for ToyEncoderSpec {
    fn default() -> Self {
        ToyEncoderSpec {
            dim: 64,
            patch: 4,
            seed: 1234,
        }
    }
}

/// Images with balanced labels; sample `i` has label `i % classes`.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Per-class rendering parameters.
#[derive(Debug, Clone, Copy)]
struct Pattern {
    angle: f64,
    freq: f64,
    phase: f64,
    grad_angle: f64,
    shift: (f64, f64),
    color_a: [f64; 3],
    color_b: [f64; 3],
}

impl Pattern {
    fn base(class: usize) -> Self {
        let c = class as f64;
        let g1 = frac(c * 0.618_033_988_749_895);
        let g2 = frac(c * 0.754_877_666_246_693 + 0.1);
        let g3 = frac(c * 0.569_840_290_998_053 + 0.3);
        let color = |h: f64, amp: f64| {
            [0, 1, 2].map(|k| 0.5 + amp * (2.0 * PI * (h + k as f64 / 3.0)).sin())
        };
        Pattern {
            angle: PI * g1,
            freq: 1.5 + 3.0 * g2,
            phase: 0.0,
            grad_angle: 2.0 * PI * g3,
            shift: (0.0, 0.0),
            color_a: color(g2, 0.35),
            color_b: color(g3, 0.35),
        }
    }

    fn jittered(class: usize, jitter: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::base(class);
        if jitter == 0.0 {
            return p;
        }
        let jitter = jitter * JITTER_SCALE;
        let mut n = || -> f64 { StandardNormal.sample(rng) };
        p.angle += jitter * 0.6 * n();
        p.freq *= (jitter * 0.4 * n()).exp();
        p.grad_angle += jitter * 1.0 * n();
        p.shift = (jitter * 0.3 * n(), jitter * 0.3 * n());
        for k in 0..3 {
            p.color_a[k] += jitter * 0.15 * n();
            p.color_b[k] += jitter * 0.15 * n();
        }
        p.phase = jitter * 2.0 * PI * rng.random::<f64>();
        p
    }

    fn render(&self, size: usize, noise_sigma: f64, rng: &mut impl Rng) -> Image {
        let (s, c) = self.angle.sin_cos();
        let (gs, gc) = self.grad_angle.sin_cos();
        Image::from_fn(size, size, |y, x, k| {
            let u = (x as f64 + 0.5) / size as f64 - 0.5 + self.shift.0;
            let v = (y as f64 + 0.5) / size as f64 - 0.5 + self.shift.1;
            let wave = 0.5 + 0.5 * (2.0 * PI * self.freq * (u * c + v * s) + self.phase).sin();
            let ramp = (0.5 + u * gc + v * gs).clamp(0.0, 1.0);
            let base = 0.6 * self.color_a[k] * wave
                + 0.4 * self.color_b[k] * ramp
                + 0.2 * (1.0 - wave) * ramp;
            let noise = if noise_sigma > 0.0 {
                noise_sigma * {
                    let z: f64 = StandardNormal.sample(rng);
                    z
                }
            } else {
                0.0
            };
            base + noise
        })
    }
}

/// Renders one sample of `class` from its own random stream.
pub fn render_sample(spec: &ToyDatasetSpec, class: usize, rng: &mut impl Rng) -> Image {
    let p = Pattern::jittered(class, spec.jitter, rng);
    p.render(spec.img_size, spec.noise_sigma, rng)
}

/// `per_class` samples for each class in `classes`, interleaved so sample
/// `i` belongs to `classes[i % classes.len()]`. Sample `i` draws from
/// stream `i` of `seed`.
pub fn gen_samples(
    spec: &ToyDatasetSpec,
    classes: &[usize],
    per_class: usize,
    seed: u64,
) -> ToyDataset {
    let n = classes.len() * per_class;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = classes[i % classes.len()];
        let mut r = rng::stream(seed, i as u64);
        images.push(render_sample(spec, class, &mut r));
        labels.push(class);
    }
    ToyDataset { images, labels }
}

/// `classes × per_class` labelled images under `spec.seed`.
pub fn gen_dataset(spec: &ToyDatasetSpec) -> Result<ToyDataset> {
    spec.validate()?;
    let classes: Vec<usize> = (0..spec.classes).collect();
    Ok(gen_samples(spec, &classes, spec.per_class, spec.seed))
}

/// Held-out labelled test set: `per_class` fresh samples of every class.
pub fn gen_test_set(spec: &ToyDatasetSpec, per_class: usize) -> Result<ToyDataset> {
    spec.validate()?;
    let classes: Vec<usize> = (0..spec.classes).collect();
    Ok(gen_samples(
        spec,
        &classes,
        per_class,
        spec.seed.wrapping_add(TEST_SEED_OFFSET),
    ))
}

/// Samples of `novel` unseen pattern classes, labelled with their pattern
/// index (`spec.classes..spec.classes + novel`).
pub fn gen_ood_set(spec: &ToyDatasetSpec, novel: usize, per_class: usize) -> Result<ToyDataset> {
    spec.validate()?;
    let classes: Vec<usize> = (spec.classes..spec.classes + novel).collect();
    Ok(gen_samples(
        spec,
        &classes,
        per_class,
        spec.seed.wrapping_add(OOD_SEED_OFFSET),
    ))
}

/// Maps images to unit-norm feature vectors.
pub trait Encoder {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn encode(&self, img: &Image) -> Result<Vec<f64>>;

    fn encode_all(&self, images: &[Image]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(images.len() * self.dim());
        for img in images {
            data.extend(self.encode(img)?);
        }
        Matrix::from_vec(images.len(), self.dim(), data)
    }
}

/// Random-feature patch encoder: every non-overlapping `patch × patch`
/// block is centred, projected by a fixed Gaussian matrix, squashed by
/// `tanh`, averaged over blocks and L2-normalized.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    spec: ToyEncoderSpec,
    projection: Matrix,
    bias: Vec<f64>,
}

impl ToyEncoder {
    pub fn new(spec: &ToyEncoderSpec) -> Result<Self> {
        if spec.dim < 8 {
            return Err(Error::InvalidArgument(format!(
                "dim must be >= 8, got {}",
                spec.dim
            )));
        }
        if spec.patch == 0 {
            return Err(Error::InvalidArgument("patch must be positive".into()));
        }
        let input = spec.patch * spec.patch * 3;
        let mut r = rng::seeded(spec.seed);
        let gain = PROJECTION_GAIN / (input as f64).sqrt();
        let data = (0..spec.dim * input)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                gain * z
            })
            .collect();
        let bias = (0..spec.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                BIAS_SCALE * z
            })
            .collect();
        Ok(ToyEncoder {
            spec: spec.clone(),
            projection: Matrix::from_vec(spec.dim, input, data)?,
            bias,
        })
    }

    pub fn spec(&self) -> &ToyEncoderSpec {
        &self.spec
    }
}

impl Encoder for ToyEncoder {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn encode(&self, img: &Image) -> Result<Vec<f64>> {
        let p = self.spec.patch;
        if img.height() != img.width() || !img.height().is_multiple_of(p) {
            return Err(Error::dims(format!(
                "toy encoder needs a square image divisible by patch {p}, got {}x{}",
                img.height(),
                img.width()
            )));
        }
        let blocks = img.height() / p;
        let mut feat = vec![0.0; self.spec.dim];
        let mut patch = Vec::with_capacity(p * p * 3);
        for by in 0..blocks {
            for bx in 0..blocks {
                patch.clear();
                for y in by * p..(by + 1) * p {
                    for x in bx * p..(bx + 1) * p {
                        for c in 0..3 {
                            patch.push(img.get(y, x, c) - 0.5);
                        }
                    }
                }
                for (j, f) in feat.iter_mut().enumerate() {
                    *f += (linalg::dot(self.projection.row(j), &patch) + self.bias[j]).tanh();
                }
            }
        }
        let inv = 1.0 / (blocks * blocks) as f64;
        feat.iter_mut().for_each(|f| *f *= inv);
        if linalg::normalize(&mut feat) == 0.0 {
            return Err(Error::InvalidArgument(
                "image encodes to the zero vector".into(),
            ));
        }
        Ok(feat)
    }
}

/// Encodes one image with the toy encoder.
pub fn toy_encode(img: &Image, spec: &ToyEncoderSpec) -> Result<Vec<f64>> {
    ToyEncoder::new(spec)?.encode(img)
}

/// Weak-view embeddings of `images`.
pub fn encode_weak(images: &[Image], encoder: &dyn Encoder, size: usize) -> Result<Matrix> {
    let weak: Vec<Image> = images
        .iter()
        .map(|i| weak_augment(i, size))
        .collect::<Result<_>>()?;
    encoder.encode_all(&weak)
}

/// Embeddings of strong view `view`; image `i` uses stream `i` of a seed
/// derived from `(seed, view)`.
pub fn encode_strong(
    images: &[Image],
    encoder: &dyn Encoder,
    size: usize,
    seed: u64,
    view: usize,
) -> Result<Matrix> {
    let aug = StrongAugment::new(size)?;
    let view_seed = seed
        .wrapping_add(STRONG_SEED_OFFSET)
        .wrapping_add(view as u64 * 0x9E37_79B9);
    let strong: Vec<Image> = images
        .iter()
        .enumerate()
        .map(|(i, img)| aug.apply(img, &mut rng::stream(view_seed, i as u64)))
        .collect();
    encoder.encode_all(&strong)
}

/// Weak store plus `views` strong stores for a labelled toy set.
pub fn build_view_group(
    data: &ToyDataset,
    spec: &ToyDatasetSpec,
    encoder: &dyn Encoder,
    views: usize,
    aug_seed: u64,
    manifest: Manifest,
) -> Result<ViewGroup> {
    let weak = encode_weak(&data.images, encoder, spec.img_size)?;
    let weak = EmbeddingStore::from_matrix(&weak, true, manifest.clone())?;
    let mut strong = Vec::with_capacity(views);
    for k in 0..views {
        let m = encode_strong(&data.images, encoder, spec.img_size, aug_seed, k)?;
        strong.push(EmbeddingStore::from_matrix(&m, true, manifest.clone())?);
    }
    let mut group_manifest = manifest;
    group_manifest.strong_views = Some(views);
    ViewGroup::new(weak, strong, group_manifest)
}

/// `prompts` imperfect anchors per class: prompt `p` of class `c` is the
/// renormalized mean embedding of `anchor_samples` fresh class-`c` samples
/// drawn under a seed offset by `p`. These samples never overlap the
/// train, test or OOD sets.
pub fn build_class_prompt_bank(
    spec: &ToyDatasetSpec,
    encoder: &dyn Encoder,
    prompts: usize,
    anchor_samples: usize,
) -> Result<PromptBank> {
    spec.validate()?;
    if prompts == 0 || anchor_samples == 0 {
        return Err(Error::InvalidArgument(
            "prompt count and anchor samples must be positive".into(),
        ));
    }
    let d = encoder.dim();
    let mut rows = Matrix::zeros(spec.classes * prompts, d);
    for p in 0..prompts {
        let seed = spec
            .seed
            .wrapping_add(ANCHOR_SEED_OFFSET)
            .wrapping_add(p as u64);
        let classes: Vec<usize> = (0..spec.classes).collect();
        let data = gen_samples(spec, &classes, anchor_samples, seed);
        let embs = encode_weak(&data.images, encoder, spec.img_size)?;
        for (i, &c) in data.labels.iter().enumerate() {
            for (o, v) in rows.row_mut(c * prompts + p).iter_mut().zip(embs.row(i)) {
                *o += v;
            }
        }
    }
    for r in 0..rows.rows() {
        linalg::normalize(rows.row_mut(r));
    }
    let mut bank = PromptBank::new(spec.classes, prompts, rows, spec.class_names())?;
    bank.prompt_texts = Some(
        (0..prompts)
            .map(|p| format!("toy anchor set {p}"))
            .collect(),
    );
    Ok(bank)
}
