use crate::error::{Error, Result};

/// Per-pixel metric depth with an explicit validity mask.
///
/// Invalid pixels hold `NaN` in `depths`; the mask is authoritative.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depths: Vec<f64>,
    valid: Vec<bool>,
}

/// Maps are equal when they share a size, a mask, and the depths under it.
impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.valid == other.valid
            && self
                .depths
                .iter()
                .zip(&other.depths)
                .zip(&self.valid)
                .all(|((a, b), &ok)| !ok || a == b)
    }
}

impl DepthMap {
    /// Builds a map from raw values; non-finite or non-positive entries are
    /// marked invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} depth values for a {width}x{height} map",
                values.len()
            )));
        }
        let valid: Vec<bool> = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        let depths = values
            .into_iter()
            .zip(&valid)
            .map(|(d, &ok)| if ok { d } else { f64::NAN })
            .collect();
        Ok(Self {
            width,
            height,
            depths,
            valid,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y).unwrap_or(f64::NAN));
            }
        }
        Self::from_values(width, height, values).expect("sized by construction")
    }

    pub fn uniform(width: usize, height: usize, depth: f64) -> Self {
        Self::from_fn(width, height, |_, _| Some(depth))
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |_, _| None)
    }

    /// Builds a depth map from inverse depths; zero or negative inverse depth
    /// is invalid.
    pub fn from_inverse(width: usize, height: usize, inverse: &[f64]) -> Result<Self> {
        let values = inverse
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v } else { f64::NAN })
            .collect();
        Self::from_values(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.depths[i])
    }

    pub fn at_index(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.depths[i])
    }

    /// Inverse depth per pixel, `NaN` where invalid.
    pub fn inverse(&self) -> Vec<f64> {
        self.depths
            .iter()
            .zip(&self.valid)
            .map(|(&d, &ok)| if ok { 1.0 / d } else { f64::NAN })
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn max_depth(&self) -> Option<f64> {
        self.depths
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|(&d, _)| d)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.max(d))))
    }

    /// Every valid depth multiplied by `s`.
    pub fn scaled(&self, s: f64) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            depths: self
                .depths
                .iter()
                .zip(&self.valid)
                .map(|(&d, &ok)| if ok { d * s } else { f64::NAN })
                .collect(),
            valid: self.valid.clone(),
        }
    }
}
