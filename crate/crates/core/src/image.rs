//! Dense multi-channel float images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates this close outside the pixel grid are snapped onto the border
/// instead of being rejected. Matches the geometry tolerance so that an
/// identity warp never loses the last row or column to rounding.
const BORDER_SNAP: f64 = 1e-9;

/// Row-major, channel-interleaved image with `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "empty image {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Bilinear lookup at a real-valued pixel position.
    ///
    /// Returns `None` outside `[0, W-1] x [0, H-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.channels];
        self.sample_bilinear_into(x, y, &mut out).then_some(out)
    }

    /// Allocation-free form of [`Image::sample_bilinear`]; `out` must hold
    /// `channels` values. Returns false (leaving `out` untouched) when the
    /// position is out of bounds.
    #[inline]
    pub fn sample_bilinear_into(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        // NaN fails both comparisons.
        if !(x >= -BORDER_SNAP && x <= max_x + BORDER_SNAP) {
            return false;
        }
        if !(y >= -BORDER_SNAP && y <= max_y + BORDER_SNAP) {
            return false;
        }
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let c = self.channels;
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let p00 = (row0 + x0) * c;
        let p01 = (row0 + x1) * c;
        let p10 = (row1 + x0) * c;
        let p11 = (row1 + x1) * c;
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w01 = fx * (1.0 - fy);
        let w10 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        for (k, o) in out.iter_mut().enumerate().take(c) {
            *o = w00 * self.data[p00 + k]
                + w01 * self.data[p01 + k]
                + w10 * self.data[p10 + k]
                + w11 * self.data[p11 + k];
        }
        true
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Per-channel affine normalization `(v - mean) / std`.
///
/// Cost computation and the network input share one instance so the reference
/// image and the volume live on the same intensity scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Channel statistics pooled over every pixel of every image.
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<Self> {
        let mut channels = None;
        let mut sum = Vec::new();
        let mut sum_sq = Vec::new();
        let mut count = 0usize;
        for img in images {
            let c = img.channels();
            match channels {
                None => {
                    channels = Some(c);
                    sum = vec![0.0; c];
                    sum_sq = vec![0.0; c];
                }
                Some(existing) if existing != c => {
                    return Err(Error::ShapeMismatch(format!(
                        "normalization over images with {existing} and {c} channels"
                    )))
                }
                Some(_) => {}
            }
            for px in img.data().chunks_exact(c) {
                for (k, &v) in px.iter().enumerate() {
                    sum[k] += v;
                    sum_sq[k] += v * v;
                }
            }
            count += img.width() * img.height();
        }
        let Some(c) = channels else {
            return Err(Error::ShapeMismatch("no images to normalize over".into()));
        };
        let n = count as f64;
        let mut mean = vec![0.0; c];
        let mut std = vec![1.0; c];
        for k in 0..c {
            mean[k] = sum[k] / n;
            let var = (sum_sq[k] / n - mean[k] * mean[k]).max(0.0);
            // A flat channel keeps unit scale rather than dividing by zero.
            std[k] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, image: &Image) -> Image {
        let c = image.channels();
        let mut out = image.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            for (k, v) in px.iter_mut().enumerate() {
                let m = self.mean.get(k).copied().unwrap_or(0.0);
                let s = self.std.get(k).copied().unwrap_or(1.0);
                *v = (*v - m) / s;
            }
        }
        out
    }
}
