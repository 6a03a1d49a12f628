//! Training-time augmentation.
//!
//! World scaling acts on poses and ground truth before the cost volume is
//! built. Flips and spatial scaling act afterwards, jointly on the volume, the
//! reference image and the ground truth, so each pixel's multiview evidence
//! stays aligned with its label. Photometric jitter is per image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cost_volume::{CostVolume, Frame};
use crate::dataset_io::KeyValues;
use crate::depth_map::DepthMap;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub depth_scale_range: (f64, f64),
    pub spatial_scale_range: (f64, f64),
    pub flip_probability: f64,
    /// Which flips may be drawn.
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub noise_sigma: f64,
    /// Additive brightness offset drawn from `[-r, r]`.
    pub brightness: f64,
    /// Contrast factor drawn from `[1 - r, 1 + r]` about mid-gray.
    pub contrast: f64,
    /// Per-channel gain drawn from `[1 - r, 1 + r]`.
    pub color: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            depth_scale_range: (0.5, 1.5),
            spatial_scale_range: (1.0, 1.2),
            flip_probability: 0.5,
            horizontal_flip: true,
            vertical_flip: true,
            noise_sigma: 0.02,
            brightness: 0.1,
            contrast: 0.1,
            color: 0.05,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// No photometric change at all.
    pub fn photometric_off(mut self) -> Self {
        self.noise_sigma = 0.0;
        self.brightness = 0.0;
        self.contrast = 0.0;
        self.color = 0.0;
        self
    }

    /// Overrides fields present in a key-value file (`depth_scale_min`,
    /// `depth_scale_max`, `spatial_scale_min`, `spatial_scale_max`,
    /// `flip_probability`, `noise_sigma`, `brightness`, `contrast`, `color`,
    /// `seed`).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        if let Some(v) = kv.get("depth_scale_min")? {
            c.depth_scale_range.0 = v;
        }
        if let Some(v) = kv.get("depth_scale_max")? {
            c.depth_scale_range.1 = v;
        }
        if let Some(v) = kv.get("spatial_scale_min")? {
            c.spatial_scale_range.0 = v;
        }
        if let Some(v) = kv.get("spatial_scale_max")? {
            c.spatial_scale_range.1 = v;
        }
        if let Some(v) = kv.get("flip_probability")? {
            c.flip_probability = v;
        }
        if let Some(v) = kv.get("horizontal_flip")? {
            c.horizontal_flip = v;
        }
        if let Some(v) = kv.get("vertical_flip")? {
            c.vertical_flip = v;
        }
        if let Some(v) = kv.get("noise_sigma")? {
            c.noise_sigma = v;
        }
        if let Some(v) = kv.get("brightness")? {
            c.brightness = v;
        }
        if let Some(v) = kv.get("contrast")? {
            c.contrast = v;
        }
        if let Some(v) = kv.get("color")? {
            c.color = v;
        }
        if let Some(v) = kv.get("seed")? {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.depth_scale_range;
        if !(a > 0.0 && a <= b) {
            return Err(Error::InvalidConfig(format!("depth_scale_range ({a}, {b})")));
        }
        let (a, b) = self.spatial_scale_range;
        if !(1.0 <= a && a <= b && b <= 2.0) {
            return Err(Error::InvalidConfig(format!("spatial_scale_range ({a}, {b})")));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::InvalidConfig(format!(
                "flip_probability {}",
                self.flip_probability
            )));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("color", self.color),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipAxis {
    /// Mirror left-right.
    Horizontal,
    /// Mirror top-bottom.
    Vertical,
}

/// Scales every camera translation and ground-truth depth by `s`.
pub fn scale_world(frames: &[Frame], gt: &DepthMap, s: f64) -> Result<(Vec<Frame>, DepthMap)> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidConfig(format!("world scale {s}")));
    }
    let frames = frames
        .iter()
        .map(|f| Frame {
            pose: f.pose.scale_translation(s),
            ..f.clone()
        })
        .collect();
    Ok((frames, gt.scaled(s)))
}

fn flip_index(axis: FlipAxis, w: usize, h: usize, x: usize, y: usize) -> usize {
    match axis {
        FlipAxis::Horizontal => y * w + (w - 1 - x),
        FlipAxis::Vertical => (h - 1 - y) * w + x,
    }
}

/// Mirrors volume, reference image and ground truth about the same axis.
pub fn flip_sample(
    volume: &CostVolume,
    reference: &Image,
    gt: &DepthMap,
    axis: FlipAxis,
) -> Result<(CostVolume, Image, DepthMap)> {
    check_aligned(volume, reference, gt)?;
    let (w, h) = (volume.width(), volume.height());
    let plane = w * h;
    let mut costs = Vec::with_capacity(volume.costs().len());
    let mut counts = Vec::with_capacity(volume.costs().len());
    for d in 0..volume.depth_count() {
        let base = d * plane;
        for y in 0..h {
            for x in 0..w {
                let src = base + flip_index(axis, w, h, x, y);
                costs.push(volume.costs()[src]);
                counts.push(volume.valid_counts()[src]);
            }
        }
    }
    let vol = CostVolume::from_parts(w, h, costs, counts, volume.hypotheses().clone())?;
    let c = reference.channels();
    let img = Image::from_fn(w, h, c, |x, y, k| {
        let src = flip_index(axis, w, h, x, y);
        reference.data()[src * c + k]
    });
    let gt = DepthMap::from_fn(w, h, |x, y| gt.at_index(flip_index(axis, w, h, x, y)));
    Ok((vol, img, gt))
}

fn check_aligned(volume: &CostVolume, reference: &Image, gt: &DepthMap) -> Result<()> {
    let dims = (volume.width(), volume.height());
    if (reference.width(), reference.height()) != dims || (gt.width(), gt.height()) != dims {
        return Err(Error::ShapeMismatch(format!(
            "volume {:?}, reference {:?}, ground truth {:?}",
            dims,
            (reference.width(), reference.height()),
            (gt.width(), gt.height())
        )));
    }
    Ok(())
}

/// Source coordinate of output pixel `x` after upscaling by `factor` and
/// center-cropping back to `n` pixels.
#[inline]
fn zoom_source(x: usize, n: usize, factor: f64) -> f64 {
    let center = (n as f64 - 1.0) / 2.0;
    ((x as f64 - center) / factor + center).clamp(0.0, n as f64 - 1.0)
}

/// Bilinear taps `(index, weight)` for a source position inside the grid.
fn taps(sx: f64, sy: f64, w: usize, h: usize) -> [(usize, f64); 4] {
    let x0 = (sx.floor() as usize).min(w - 1);
    let y0 = (sy.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    [
        (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * w + x1, fx * (1.0 - fy)),
        (y1 * w + x0, (1.0 - fx) * fy),
        (y1 * w + x1, fx * fy),
    ]
}

/// Zooms volume, reference and ground truth by `factor` about the image
/// center, keeping the original size. Costs and colors are resampled
/// bilinearly; ground truth takes the nearest valid neighbor so no depth is
/// ever interpolated across an edge. Depth values are unchanged.
pub fn spatial_scale_sample(
    volume: &CostVolume,
    reference: &Image,
    gt: &DepthMap,
    factor: f64,
) -> Result<(CostVolume, Image, DepthMap)> {
    if !(1.0..=2.0).contains(&factor) {
        return Err(Error::InvalidFactor(factor));
    }
    check_aligned(volume, reference, gt)?;
    if factor == 1.0 {
        return Ok((volume.clone(), reference.clone(), gt.clone()));
    }
    let (w, h) = (volume.width(), volume.height());
    let plane = w * h;
    let lookups: Vec<(f64, f64, [(usize, f64); 4])> = (0..plane)
        .map(|p| {
            let sx = zoom_source(p % w, w, factor);
            let sy = zoom_source(p / w, h, factor);
            (sx, sy, taps(sx, sy, w, h))
        })
        .collect();

    let mut costs = Vec::with_capacity(volume.costs().len());
    let mut counts = Vec::with_capacity(volume.costs().len());
    for d in 0..volume.depth_count() {
        let c = &volume.costs()[d * plane..(d + 1) * plane];
        let k = &volume.valid_counts()[d * plane..(d + 1) * plane];
        for (_, _, t) in &lookups {
            costs.push(t.iter().map(|&(i, wt)| wt * c[i]).sum::<f64>());
            counts.push(
                t.iter()
                    .filter(|&&(_, wt)| wt > 0.0)
                    .map(|&(i, _)| k[i])
                    .min()
                    .unwrap_or(0),
            );
        }
    }
    let vol = CostVolume::from_parts(w, h, costs, counts, volume.hypotheses().clone())?;

    let ch = reference.channels();
    let mut img = Vec::with_capacity(plane * ch);
    for (_, _, t) in &lookups {
        for k in 0..ch {
            img.push(t.iter().map(|&(i, wt)| wt * reference.data()[i * ch + k]).sum::<f64>());
        }
    }
    let img = Image::new(w, h, ch, img)?;

    let gt_values = lookups
        .iter()
        .map(|(sx, sy, t)| {
            t.iter()
                .filter_map(|&(i, _)| {
                    let d = gt.at_index(i)?;
                    let (ix, iy) = ((i % w) as f64, (i / w) as f64);
                    Some(((ix - sx).powi(2) + (iy - sy).powi(2), i, d))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map_or(f64::NAN, |(_, _, d)| d)
        })
        .collect();
    let gt = DepthMap::from_values(w, h, gt_values)?;
    Ok((vol, img, gt))
}

/// Brightness, contrast, color gain and Gaussian noise on an image with
/// values in `[0, 1]`; the result is clamped back to that range.
pub fn photometric_augment(image: &Image, config: &AugmentationConfig, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    let contrast = 1.0 + draw(&mut rng, config.contrast);
    let brightness = draw(&mut rng, config.brightness);
    let c = image.channels();
    let gains: Vec<f64> = (0..c).map(|_| 1.0 + draw(&mut rng, config.color)).collect();
    let noise = (config.noise_sigma > 0.0).then(|| Normal::new(0.0, config.noise_sigma).expect("sigma > 0"));
    let shift = 0.5 - 0.5 * contrast + brightness;
    let mut out = image.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (k, v) in px.iter_mut().enumerate() {
            let mut x = (*v * contrast + shift) * gains[k];
            if let Some(n) = &noise {
                x += n.sample(&mut rng);
            }
            *v = x.clamp(0.0, 1.0);
        }
    }
    out
}

/// Geometric transform drawn for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricDraw {
    pub world_scale: f64,
    pub flip: Option<FlipAxis>,
    pub spatial_scale: f64,
}

/// Draws flip and scale independently of each other.
pub fn draw_geometric(config: &AugmentationConfig, rng: &mut impl Rng) -> GeometricDraw {
    let range = |rng: &mut dyn rand::RngCore, (a, b): (f64, f64)| {
        if b > a {
            rng.random_range(a..=b)
        } else {
            a
        }
    };
    let world_scale = range(rng, config.depth_scale_range);
    let axes: Vec<FlipAxis> = [
        (config.horizontal_flip, FlipAxis::Horizontal),
        (config.vertical_flip, FlipAxis::Vertical),
    ]
    .into_iter()
    .filter_map(|(on, a)| on.then_some(a))
    .collect();
    let flip = if !axes.is_empty() && rng.random::<f64>() < config.flip_probability {
        Some(axes[rng.random_range(0..axes.len())])
    } else {
        None
    };
    let spatial_scale = range(rng, config.spatial_scale_range);
    GeometricDraw {
        world_scale,
        flip,
        spatial_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_depth::argmin_depth;
    use crate::geometry::sample_inverse_depths;

    fn sample_triple(w: usize, h: usize, nd: usize) -> (CostVolume, Image, DepthMap) {
        let hyp = sample_inverse_depths(0.5, 50.0, nd).unwrap();
        let costs = (0..nd * w * h).map(|i| ((i * 7919 + 13) % 101) as f64 / 17.0).collect();
        let counts = (0..nd * w * h).map(|i| if i % 11 == 0 { 0 } else { 1 }).collect();
        let vol = CostVolume::from_parts(w, h, costs, counts, hyp).unwrap();
        let img = Image::from_fn(w, h, 3, |x, y, c| (x * 3 + y * 5 + c) as f64 / 100.0);
        let gt = DepthMap::from_fn(w, h, |x, y| ((x + y) % 5 != 0).then(|| 1.0 + x as f64 * 0.1));
        (vol, img, gt)
    }

    #[test]
    fn world_scale_identity_and_halving() {
        let (_, img, gt) = sample_triple(6, 4, 3);
        let intr = crate::geometry::Intrinsics::new(5.0, 5.0, 2.5, 1.5, 6, 4).unwrap();
        let pose = crate::geometry::Pose::from_translation(nalgebra::Vector3::new(0.3, -0.1, 0.2));
        let frames = vec![Frame::new("a", img, pose, intr).unwrap()];
        let (f1, g1) = scale_world(&frames, &gt, 1.0).unwrap();
        assert_eq!(f1, frames);
        assert_eq!(g1, gt);
        let (f2, g2) = scale_world(&frames, &gt, 0.5).unwrap();
        assert_eq!(g2.max_depth().unwrap(), gt.max_depth().unwrap() / 2.0);
        assert_eq!(f2[0].pose.translation().x, 0.15);
        assert_eq!(f2[0].pose.rotation(), frames[0].pose.rotation());
        assert_eq!(f2[0].image, frames[0].image);
        assert!(scale_world(&frames, &gt, 0.0).is_err());
    }

    #[test]
    fn flip_is_an_involution() {
        let (vol, img, gt) = sample_triple(7, 5, 4);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let (v1, i1, g1) = flip_sample(&vol, &img, &gt, axis).unwrap();
            assert_ne!(i1, img);
            let (v2, i2, g2) = flip_sample(&v1, &i1, &g1, axis).unwrap();
            assert_eq!(v2, vol);
            assert_eq!(i2, img);
            assert_eq!(g2, gt);
        }
    }

    #[test]
    fn horizontal_flip_mirrors_columns() {
        let (vol, img, gt) = sample_triple(7, 5, 4);
        let (v, i, g) = flip_sample(&vol, &img, &gt, FlipAxis::Horizontal).unwrap();
        for d in 0..4 {
            for y in 0..5 {
                for x in 0..7 {
                    assert_eq!(v.cost(d, x, y), vol.cost(d, 6 - x, y));
                }
            }
        }
        assert_eq!(i.pixel(0, 2), img.pixel(6, 2));
        assert_eq!(g.get(1, 3), gt.get(5, 3));
    }

    #[test]
    fn flip_commutes_with_argmin() {
        let (vol, img, gt) = sample_triple(9, 6, 5);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let before = argmin_depth(&vol);
            let (fv, _, _) = flip_sample(&vol, &img, &gt, axis).unwrap();
            let after = argmin_depth(&fv);
            for y in 0..6 {
                for x in 0..9 {
                    let src = flip_index(axis, 9, 6, x, y);
                    assert_eq!(after.get(x, y), before.indices[src]);
                }
            }
        }
    }

    #[test]
    fn symmetric_ground_truth_survives_flip() {
        let (vol, img, _) = sample_triple(8, 4, 2);
        let gt = DepthMap::from_fn(8, 4, |x, _| Some(1.0 + (x as f64 - 3.5).abs()));
        let (_, _, g) = flip_sample(&vol, &img, &gt, FlipAxis::Horizontal).unwrap();
        assert_eq!(g, gt);
    }

    #[test]
    fn spatial_scale_identity_and_constant_depth() {
        let (vol, img, gt) = sample_triple(8, 6, 3);
        let (v, i, g) = spatial_scale_sample(&vol, &img, &gt, 1.0).unwrap();
        assert_eq!((v, i, g), (vol.clone(), img.clone(), gt));
        let flat = DepthMap::uniform(8, 6, 2.25);
        let (_, _, g) = spatial_scale_sample(&vol, &img, &flat, 1.2).unwrap();
        assert_eq!(g, flat);
        assert!(matches!(
            spatial_scale_sample(&vol, &img, &flat, 0.9),
            Err(Error::InvalidFactor(_))
        ));
        assert!(matches!(
            spatial_scale_sample(&vol, &img, &flat, 2.5),
            Err(Error::InvalidFactor(_))
        ));
    }

    #[test]
    fn spatial_scale_never_invents_depths() {
        let (vol, img, gt) = sample_triple(10, 8, 2);
        let (_, _, g) = spatial_scale_sample(&vol, &img, &gt, 1.17).unwrap();
        let originals: Vec<f64> = (0..gt.len()).filter_map(|i| gt.at_index(i)).collect();
        for i in 0..g.len() {
            if let Some(d) = g.at_index(i) {
                assert!(originals.contains(&d));
            }
        }
    }

    #[test]
    fn photometric_identity_and_determinism() {
        let img = Image::from_fn(16, 8, 3, |x, y, c| ((x * 7 + y * 3 + c) % 17) as f64 / 16.0);
        let off = AugmentationConfig::default().photometric_off();
        assert_eq!(photometric_augment(&img, &off, 3), img);
        let on = AugmentationConfig::default();
        let a = photometric_augment(&img, &on, 9);
        assert_eq!(a, photometric_augment(&img, &on, 9));
        assert_ne!(a, photometric_augment(&img, &on, 10));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn noise_sigma_is_honored() {
        let img = Image::filled(320, 256, 3, 0.5);
        let cfg = AugmentationConfig {
            noise_sigma: 0.05,
            ..AugmentationConfig::default().photometric_off()
        };
        let out = photometric_augment(&img, &cfg, 42);
        let dev: Vec<f64> = out.data().iter().zip(img.data()).map(|(a, b)| a - b).collect();
        let mean = dev.iter().sum::<f64>() / dev.len() as f64;
        let var = dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (dev.len() - 1) as f64;
        assert!((var.sqrt() - 0.05).abs() < 0.005, "sigma {}", var.sqrt());
    }

    #[test]
    fn config_validation_and_parsing() {
        let kv = KeyValues::parse("noise_sigma 0.01\nspatial_scale_max 1.1\nseed 4\n", "aug").unwrap();
        let c = AugmentationConfig::from_key_values(&kv).unwrap();
        assert_eq!(c.noise_sigma, 0.01);
        assert_eq!(c.spatial_scale_range, (1.0, 1.1));
        assert_eq!(c.seed, 4);
        let kv = KeyValues::parse("spatial_scale_max 3.0\n", "aug").unwrap();
        assert!(AugmentationConfig::from_key_values(&kv).is_err());
    }

    #[test]
    fn geometric_draws_stay_in_range() {
        let cfg = AugmentationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut flips = 0;
        for _ in 0..500 {
            let g = draw_geometric(&cfg, &mut rng);
            assert!((0.5..=1.5).contains(&g.world_scale));
            assert!((1.0..=1.2).contains(&g.spatial_scale));
            flips += g.flip.is_some() as usize;
        }
        assert!((150..350).contains(&flips));
    }
}
