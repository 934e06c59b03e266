//! Severity-graded synthetic corruptions, registered by name.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::rng::AugmentRng;

/// A corruption family with a five-level severity table.
pub trait Corruption: Send + Sync {
    fn name(&self) -> &'static str;
    /// Parameters for severities 1..=5.
    fn levels(&self) -> [f64; 5];
    fn apply_param(&self, img: &Image, param: f64, rng: &mut AugmentRng) -> Image;

    /// Whether the corruption adds random per-pixel noise.
    fn is_noise(&self) -> bool {
        false
    }
}

pub struct GaussianNoise;

impl Corruption for GaussianNoise {
    fn name(&self) -> &'static str {
        "gaussian_noise"
    }
    fn levels(&self) -> [f64; 5] {
        [0.04, 0.06, 0.08, 0.09, 0.10]
    }
    fn is_noise(&self) -> bool {
        true
    }
    fn apply_param(&self, img: &Image, sigma: f64, rng: &mut AugmentRng) -> Image {
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        let mut out = img.clone();
        for y in 0..img.height() {
            for x in 0..img.width() {
                for c in 0..3 {
                    out.set(y, x, c, img.get(y, x, c) + normal.sample(rng));
                }
            }
        }
        out
    }
}

/// Poisson photon noise with the given photon count at full intensity.
pub struct ShotNoise;

impl Corruption for ShotNoise {
    fn name(&self) -> &'static str {
        "shot_noise"
    }
    fn levels(&self) -> [f64; 5] {
        [500.0, 250.0, 100.0, 75.0, 50.0]
    }
    fn is_noise(&self) -> bool {
        true
    }
    fn apply_param(&self, img: &Image, photons: f64, rng: &mut AugmentRng) -> Image {
        let mut out = img.clone();
        for y in 0..img.height() {
            for x in 0..img.width() {
                for c in 0..3 {
                    let lambda = img.get(y, x, c) * photons;
                    let v = if lambda > 0.0 {
                        Poisson::new(lambda)
                            .expect("lambda is positive")
                            .sample(rng)
                            / photons
                    } else {
                        0.0
                    };
                    out.set(y, x, c, v);
                }
            }
        }
        out
    }
}

/// Salt-and-pepper noise on the given fraction of channel values.
pub struct ImpulseNoise;

impl Corruption for ImpulseNoise {
    fn name(&self) -> &'static str {
        "impulse_noise"
    }
    fn levels(&self) -> [f64; 5] {
        [0.01, 0.02, 0.03, 0.05, 0.07]
    }
    fn is_noise(&self) -> bool {
        true
    }
    fn apply_param(&self, img: &Image, amount: f64, rng: &mut AugmentRng) -> Image {
        let mut out = img.clone();
        for y in 0..img.height() {
            for x in 0..img.width() {
                for c in 0..3 {
                    if rng.random_bool(amount) {
                        out.set(y, x, c, if rng.random_bool(0.5) { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        out
    }
}

/// Separable Gaussian blur; the parameter is the standard deviation in pixels.
pub struct GaussianBlur;

impl Corruption for GaussianBlur {
    fn name(&self) -> &'static str {
        "gaussian_blur"
    }
    fn levels(&self) -> [f64; 5] {
        [0.5, 0.75, 1.0, 1.25, 1.5]
    }
    fn apply_param(&self, img: &Image, sigma: f64, _rng: &mut AugmentRng) -> Image {
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        let (h, w) = (img.height() as isize, img.width() as isize);
        let tap = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
        let horizontal = Image::from_fn(img.height(), img.width(), |y, x, c| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, wgt)| wgt * img.get(y, tap(x as isize + k as isize - radius, w), c))
                .sum()
        });
        Image::from_fn(img.height(), img.width(), |y, x, c| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, wgt)| {
                    wgt * horizontal.get(tap(y as isize + k as isize - radius, h), x, c)
                })
                .sum()
        })
    }
}

/// Additive brightness shift.
pub struct Brightness;

impl Corruption for Brightness {
    fn name(&self) -> &'static str {
        "brightness"
    }
    fn levels(&self) -> [f64; 5] {
        [0.05, 0.10, 0.15, 0.20, 0.30]
    }
    fn apply_param(&self, img: &Image, shift: f64, _rng: &mut AugmentRng) -> Image {
        img.map(|v| v + shift)
    }
}

/// Contrast reduction towards the per-channel mean.
pub struct Contrast;

impl Corruption for Contrast {
    fn name(&self) -> &'static str {
        "contrast"
    }
    fn levels(&self) -> [f64; 5] {
        [0.75, 0.6, 0.45, 0.3, 0.2]
    }
    fn apply_param(&self, img: &Image, factor: f64, _rng: &mut AugmentRng) -> Image {
        let n = (img.height() * img.width()) as f64;
        let mut mean = [0.0; 3];
        for p in img.pixels().chunks_exact(3) {
            for c in 0..3 {
                mean[c] += p[c] / n;
            }
        }
        Image::from_fn(img.height(), img.width(), |y, x, c| {
            mean[c] + factor * (img.get(y, x, c) - mean[c])
        })
    }
}

/// Block averaging over `b × b` tiles anchored at the origin.
pub struct Pixelate;

impl Corruption for Pixelate {
    fn name(&self) -> &'static str {
        "pixelate"
    }
    fn levels(&self) -> [f64; 5] {
        [2.0, 3.0, 4.0, 5.0, 6.0]
    }
    fn apply_param(&self, img: &Image, block: f64, _rng: &mut AugmentRng) -> Image {
        let b = (block as usize).max(1);
        let (h, w) = (img.height(), img.width());
        let mut out = img.clone();
        for by in (0..h).step_by(b) {
            for bx in (0..w).step_by(b) {
                let (ey, ex) = ((by + b).min(h), (bx + b).min(w));
                let n = ((ey - by) * (ex - bx)) as f64;
                for c in 0..3 {
                    let mut s = 0.0;
                    for y in by..ey {
                        for x in bx..ex {
                            s += img.get(y, x, c);
                        }
                    }
                    for y in by..ey {
                        for x in bx..ex {
                            out.set(y, x, c, s / n);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Name → corruption lookup.
pub struct CorruptionRegistry {
    entries: Vec<Box<dyn Corruption>>,
}

impl Default for CorruptionRegistry {
    fn default() -> Self {
        let mut r = CorruptionRegistry {
            entries: Vec::new(),
        };
        r.register(Box::new(GaussianNoise));
        r.register(Box::new(ShotNoise));
        r.register(Box::new(ImpulseNoise));
        r.register(Box::new(GaussianBlur));
        r.register(Box::new(Brightness));
        r.register(Box::new(Contrast));
        r.register(Box::new(Pixelate));
        r
    }
}

impl CorruptionRegistry {
    /// Adds `c`, replacing any entry with the same name.
    pub fn register(&mut self, c: Box<dyn Corruption>) {
        self.entries.retain(|e| e.name() != c.name());
        self.entries.push(c);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Corruption> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "corruption",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn noise_kinds(&self) -> Vec<&'static str> {
        self.entries
            .iter()
            .filter(|e| e.is_noise())
            .map(|e| e.name())
            .collect()
    }

    pub fn apply(&self, img: &Image, spec: &CorruptionSpec, rng: &mut AugmentRng) -> Result<Image> {
        let c = self.get(&spec.kind)?;
        let param = c.levels()[spec.severity as usize - 1];
        Ok(c.apply_param(img, param, rng))
    }
}

/// `kind:severity`, severity in 1..=5.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CorruptionSpec {
    pub kind: String,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: impl Into<String>, severity: u8) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(Error::OutOfRange(format!(
                "corruption severity {severity} not in 1..=5"
            )));
        }
        Ok(CorruptionSpec {
            kind: kind.into(),
            severity,
        })
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.severity)
    }
}

impl FromStr for CorruptionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, sev) = s.split_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("corruption `{s}` is not kind:severity"))
        })?;
        let severity = sev.trim().parse::<u8>().map_err(|_| {
            Error::InvalidArgument(format!("corruption severity `{sev}` is not an integer"))
        })?;
        Self::new(kind.trim(), severity)
    }
}

impl TryFrom<String> for CorruptionSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CorruptionSpec> for String {
    fn from(c: CorruptionSpec) -> String {
        c.to_string()
    }
}

/// Applies `kind` at `severity` using the default registry.
pub fn corrupt(img: &Image, kind: &str, severity: u8, rng: &mut AugmentRng) -> Result<Image> {
    CorruptionRegistry::default().apply(img, &CorruptionSpec::new(kind, severity)?, rng)
}
