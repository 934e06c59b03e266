use crate::error::{Error, Result};

/// `H × W × 3` image with channel values in `[0, 1]`, stored row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Values outside `[0, 1]` are clamped; non-finite values are rejected.
    pub fn new(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "empty image {height}x{width}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(Error::dims(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pixel".into()));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image {
            height,
            width,
            data: vec![value.clamp(0.0, 1.0); height * width * 3],
        }
    }

    /// Builds an image from `f(y, x, channel)`, clamping the result.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v.clamp(0.0, 1.0);
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Pixel at integer coordinates, zero outside the image.
    #[inline]
    pub(crate) fn get_or_zero(&self, y: isize, x: isize, c: usize) -> f64 {
        if y < 0 || x < 0 || y >= self.height as isize || x >= self.width as isize {
            0.0
        } else {
            self.get(y as usize, x as usize, c)
        }
    }

    /// Bilinear sample at continuous pixel-centre coordinates; zero outside.
    pub(crate) fn sample_zero(&self, y: f64, x: f64, c: usize) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let (dy, dx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let a = self.get_or_zero(y0, x0, c);
        let b = self.get_or_zero(y0, x0 + 1, c);
        let d = self.get_or_zero(y0 + 1, x0, c);
        let e = self.get_or_zero(y0 + 1, x0 + 1, c);
        (a * (1.0 - dx) + b * dx) * (1.0 - dy) + (d * (1.0 - dx) + e * dx) * dy
    }

    /// Bilinear sample with edge clamping.
    pub(crate) fn sample_clamped(&self, y: f64, x: f64, c: usize) -> f64 {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let (dy, dx) = (y - y0 as f64, x - x0 as f64);
        let top = self.get(y0, x0, c) * (1.0 - dx) + self.get(y0, x1, c) * dx;
        let bot = self.get(y1, x0, c) * (1.0 - dx) + self.get(y1, x1, c) * dx;
        top * (1.0 - dy) + bot * dy
    }

    /// Bilinear resize (half-pixel centres, edge clamping).
    pub fn resize(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        Image::from_fn(height, width, |y, x, c| {
            self.sample_clamped((y as f64 + 0.5) * sy - 0.5, (x as f64 + 0.5) * sx - 0.5, c)
        })
    }

    /// Resize so the shorter side equals `size`, keeping the aspect ratio.
    pub fn resize_short_side(&self, size: usize) -> Image {
        let short = self.height.min(self.width) as f64;
        let h = ((self.height as f64 * size as f64 / short).round() as usize).max(size);
        let w = ((self.width as f64 * size as f64 / short).round() as usize).max(size);
        self.resize(h, w)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Image {
        Image::from_fn(height, width, |y, x, c| self.get(top + y, left + x, c))
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.height, self.width, |y, x, c| {
            self.get(y, self.width - 1 - x, c)
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}
