//! RandAugment over a fixed table of float-safe operations.
//!
//! Ops are registered by name; `RandAugment` draws `num_ops` of them
//! uniformly (with replacement) per image.

use rand::Rng;

use super::Image;
use crate::rng::AugmentRng;

/// One RandAugment operation. `magnitude` is the normalized strength
/// `M / 30`; each op maps it to its own range and picks a random sign.
pub trait AugmentOp: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image;
}

fn signed(rng: &mut AugmentRng, v: f64) -> f64 {
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

/// Inverse-maps every output pixel through `src(y, x) -> (y', x')` with
/// bilinear sampling and zero fill.
fn warp(img: &Image, src: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    Image::from_fn(img.height(), img.width(), |y, x, c| {
        let (sy, sx) = src(y as f64, x as f64);
        img.sample_zero(sy, sx, c)
    })
}

fn centre(img: &Image) -> (f64, f64) {
    (
        (img.height() as f64 - 1.0) / 2.0,
        (img.width() as f64 - 1.0) / 2.0,
    )
}

pub struct Identity;

impl AugmentOp for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn apply(&self, img: &Image, _magnitude: f64, _rng: &mut AugmentRng) -> Image {
        img.clone()
    }
}

/// Scales intensities by `1 ± 0.9·m`.
pub struct Brightness;

impl AugmentOp for Brightness {
    fn name(&self) -> &'static str {
        "brightness"
    }
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image {
        let f = 1.0 + signed(rng, 0.9 * magnitude);
        img.map(|v| v * f)
    }
}

/// Blends with the mean grey level by factor `1 ± 0.9·m`.
pub struct Contrast;

impl AugmentOp for Contrast {
    fn name(&self) -> &'static str {
        "contrast"
    }
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image {
        let f = 1.0 + signed(rng, 0.9 * magnitude);
        let px = img.pixels();
        let grey = px
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .sum::<f64>()
            / (px.len() / 3) as f64;
        img.map(|v| grey + f * (v - grey))
    }
}

/// Rotation about the centre by up to `30·m` degrees.
pub struct Rotate;

impl AugmentOp for Rotate {
    fn name(&self) -> &'static str {
        "rotate"
    }
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image {
        let theta = signed(rng, 30.0 * magnitude).to_radians();
        let (cy, cx) = centre(img);
        let (s, c) = theta.sin_cos();
        warp(img, |y, x| {
            let (dy, dx) = (y - cy, x - cx);
            (cy + c * dy - s * dx, cx + s * dy + c * dx)
        })
    }
}

pub struct ShearX;

impl AugmentOp for ShearX {
    fn name(&self) -> &'static str {
        "shear_x"
    }
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image {
        let k = signed(rng, 0.3 * magnitude);
        let (cy, _) = centre(img);
        warp(img, |y, x| (y, x + k * (y - cy)))
    }
}

pub struct ShearY;

impl AugmentOp for ShearY {
    fn name(&self) -> &'static str {
        "shear_y"
    }
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image {
        let k = signed(rng, 0.3 * magnitude);
        let (_, cx) = centre(img);
        warp(img, |y, x| (y + k * (x - cx), x))
    }
}

/// Shift by up to `0.33·m` of the image width.
pub struct TranslateX;

impl AugmentOp for TranslateX {
    fn name(&self) -> &'static str {
        "translate_x"
    }
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image {
        let t = signed(rng, 0.33 * magnitude * img.width() as f64);
        warp(img, |y, x| (y, x - t))
    }
}

pub struct TranslateY;

impl AugmentOp for TranslateY {
    fn name(&self) -> &'static str {
        "translate_y"
    }
    fn apply(&self, img: &Image, magnitude: f64, rng: &mut AugmentRng) -> Image {
        let t = signed(rng, 0.33 * magnitude * img.height() as f64);
        warp(img, |y, x| (y - t, x))
    }
}

/// The default eight-op table.
pub fn default_ops() -> Vec<Box<dyn AugmentOp>> {
    vec![
        Box::new(Identity),
        Box::new(Brightness),
        Box::new(Contrast),
        Box::new(Rotate),
        Box::new(ShearX),
        Box::new(ShearY),
        Box::new(TranslateX),
        Box::new(TranslateY),
    ]
}

pub struct RandAugment {
    ops: Vec<Box<dyn AugmentOp>>,
    pub num_ops: usize,
    /// Integer magnitude on the 0..=30 scale.
    pub magnitude: u32,
}

impl Default for RandAugment {
    fn default() -> Self {
        RandAugment {
            ops: default_ops(),
            num_ops: 2,
            magnitude: 9,
        }
    }
}

impl RandAugment {
    pub fn with_ops(ops: Vec<Box<dyn AugmentOp>>, num_ops: usize, magnitude: u32) -> Self {
        RandAugment {
            ops,
            num_ops,
            magnitude,
        }
    }

    pub fn op_names(&self) -> Vec<&'static str> {
        self.ops.iter().map(|o| o.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn AugmentOp> {
        self.ops
            .iter()
            .find(|o| o.name() == name)
            .map(|o| o.as_ref())
    }

    pub fn apply(&self, img: &Image, rng: &mut AugmentRng) -> Image {
        let m = self.magnitude as f64 / 30.0;
        let mut out = img.clone();
        for _ in 0..self.num_ops {
            let op = &self.ops[rng.random_range(0..self.ops.len())];
            out = op.apply(&out, m, rng);
        }
        out
    }
}
