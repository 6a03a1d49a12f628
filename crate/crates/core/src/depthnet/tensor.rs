//! Dense NCHW activations in double precision.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_data(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{c}x{h}x{w} tensor",
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// All channels of sample `i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.c * self.plane();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.c * self.plane();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// Channel `c` of sample `i`.
    pub fn channel(&self, i: usize, c: usize) -> &[f64] {
        let p = self.plane();
        let start = (i * self.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn channel_mut(&mut self, i: usize, c: usize) -> &mut [f64] {
        let p = self.plane();
        let start = (i * self.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
