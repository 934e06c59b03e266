//! Image-space transforms: the deterministic weak view seen by the teacher,
//! the stochastic strong view seen by the student, and graded corruptions.

mod corrupt;
mod image;
mod randaugment;

pub use corrupt::{
    corrupt, Brightness as BrightnessShift, Contrast as ContrastReduction, Corruption,
    CorruptionRegistry, CorruptionSpec, GaussianBlur, GaussianNoise, ImpulseNoise, Pixelate,
    ShotNoise,
};
pub use image::Image;
pub use randaugment::{default_ops, AugmentOp, RandAugment};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::AugmentRng;

pub const MIN_SIZE: usize = 8;
pub const CROP_PADDING: usize = 4;

fn check_size(out_size: usize) -> Result<()> {
    if out_size < MIN_SIZE {
        return Err(Error::InvalidArgument(format!(
            "output size {out_size} is below the minimum of {MIN_SIZE}"
        )));
    }
    Ok(())
}

/// Short-side bilinear resize to `out_size` followed by a centre crop.
pub fn weak_augment(img: &Image, out_size: usize) -> Result<Image> {
    check_size(out_size)?;
    let r = img.resize_short_side(out_size);
    let top = (r.height() - out_size) / 2;
    let left = (r.width() - out_size) / 2;
    Ok(r.crop(top, left, out_size, out_size))
}

/// Random `out × out` crop from `img` zero-padded by `padding` on each side.
pub fn random_padded_crop(img: &Image, out: usize, padding: usize, rng: &mut AugmentRng) -> Image {
    let max_y = img.height() + 2 * padding - out;
    let max_x = img.width() + 2 * padding - out;
    let oy = rng.random_range(0..=max_y) as isize - padding as isize;
    let ox = rng.random_range(0..=max_x) as isize - padding as isize;
    Image::from_fn(out, out, |y, x, c| {
        img.get_or_zero(oy + y as isize, ox + x as isize, c)
    })
}

/// Zeroes one `size × size` square whose centre is uniform over the image;
/// the square is clipped at the borders.
pub fn cutout(img: &Image, size: usize, rng: &mut AugmentRng) -> Image {
    let mut out = img.clone();
    if size == 0 {
        return out;
    }
    let cy = rng.random_range(0..img.height()) as isize;
    let cx = rng.random_range(0..img.width()) as isize;
    let half = (size / 2) as isize;
    let (h, w) = (img.height() as isize, img.width() as isize);
    let y0 = (cy - half).clamp(0, h);
    let y1 = (cy - half + size as isize).clamp(0, h);
    let x0 = (cx - half).clamp(0, w);
    let x1 = (cx - half + size as isize).clamp(0, w);
    for y in y0..y1 {
        for x in x0..x1 {
            for c in 0..3 {
                out.set(y as usize, x as usize, c, 0.0);
            }
        }
    }
    out
}

/// The student's view: resize, padded random crop, horizontal flip with
/// probability ½, RandAugment (2 ops at magnitude 9) and Cutout with side
/// `out_size / 8`.
pub struct StrongAugment {
    pub out_size: usize,
    pub padding: usize,
    pub randaugment: RandAugment,
}

impl StrongAugment {
    pub fn new(out_size: usize) -> Result<Self> {
        check_size(out_size)?;
        Ok(StrongAugment {
            out_size,
            padding: CROP_PADDING,
            randaugment: RandAugment::default(),
        })
    }

    pub fn apply(&self, img: &Image, rng: &mut AugmentRng) -> Image {
        let resized = img.resize_short_side(self.out_size);
        let mut out = random_padded_crop(&resized, self.out_size, self.padding, rng);
        if rng.random_bool(0.5) {
            out = out.flip_horizontal();
        }
        out = self.randaugment.apply(&out, rng);
        cutout(&out, self.out_size / 8, rng)
    }
}

pub fn strong_augment(img: &Image, out_size: usize, rng: &mut AugmentRng) -> Result<Image> {
    Ok(StrongAugment::new(out_size)?.apply(img, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn natural(seed: u64, size: usize) -> Image {
        let mut r = rng::seeded(seed);
        let fx: f64 = r.random_range(0.1..0.6);
        let fy: f64 = r.random_range(0.1..0.6);
        Image::from_fn(size, size, |y, x, c| {
            0.5 + 0.3 * ((fx * x as f64 + fy * y as f64 + c as f64).sin()) + 0.1 * r.random::<f64>()
        })
    }

    #[test]
    fn weak_is_identity_at_target_size() {
        let img = natural(1, 24);
        assert_eq!(weak_augment(&img, 24).unwrap(), img);
    }

    #[test]
    fn weak_is_deterministic() {
        let img = natural(2, 40);
        assert_eq!(
            weak_augment(&img, 24).unwrap(),
            weak_augment(&img, 24).unwrap()
        );
    }

    #[test]
    fn weak_upscale_of_constant_stays_constant() {
        let img = Image::filled(16, 16, 0.37);
        let out = weak_augment(&img, 32).unwrap();
        assert_eq!((out.height(), out.width()), (32, 32));
        assert!(out.pixels().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn weak_crops_non_square_to_square() {
        let img = Image::filled(20, 30, 0.5);
        let out = weak_augment(&img, 10).unwrap();
        assert_eq!((out.height(), out.width()), (10, 10));
    }

    #[test]
    fn weak_is_idempotent_on_cropped_images() {
        let once = weak_augment(&natural(3, 50), 16).unwrap();
        assert_eq!(weak_augment(&once, 16).unwrap(), once);
    }

    #[test]
    fn rejects_tiny_output() {
        assert!(weak_augment(&Image::filled(16, 16, 0.5), 4).is_err());
        assert!(StrongAugment::new(7).is_err());
    }

    #[test]
    fn strong_output_shape() {
        for (h, w) in [(32, 32), (40, 24), (16, 16)] {
            let img = Image::filled(h, w, 0.5);
            let out = strong_augment(&img, 16, &mut rng::seeded(5)).unwrap();
            assert_eq!((out.height(), out.width()), (16, 16));
            assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn cutout_zeroes_one_full_square_when_inside() {
        let img = Image::filled(32, 32, 0.5);
        let side = 32 / 8;
        let mut inside = 0;
        for seed in 0..50 {
            let out = cutout(&img, side, &mut rng::seeded(seed));
            let zeros: Vec<usize> = (0..32 * 32)
                .filter(|&p| out.pixels()[p * 3] == 0.0)
                .collect();
            assert!(zeros.len() <= side * side);
            if zeros.len() == side * side {
                inside += 1;
                let ys: Vec<usize> = zeros.iter().map(|p| p / 32).collect();
                let xs: Vec<usize> = zeros.iter().map(|p| p % 32).collect();
                assert_eq!(
                    ys.iter().max().unwrap() - ys.iter().min().unwrap(),
                    side - 1
                );
                assert_eq!(
                    xs.iter().max().unwrap() - xs.iter().min().unwrap(),
                    side - 1
                );
            }
        }
        assert!(inside > 30);
    }

    #[test]
    fn strong_is_seed_reproducible_and_seed_sensitive() {
        let mut differ = 0;
        for pair in 0..100u64 {
            let img = natural(1000 + pair, 32);
            let a = strong_augment(&img, 32, &mut rng::stream(pair, 0)).unwrap();
            let b = strong_augment(&img, 32, &mut rng::stream(pair, 0)).unwrap();
            assert_eq!(a, b);
            let c = strong_augment(&img, 32, &mut rng::stream(pair, 1)).unwrap();
            if a != c {
                differ += 1;
            }
        }
        // > 0.99 of pairs must differ; with 100 pairs that is all of them.
        assert_eq!(differ, 100);
    }
}
