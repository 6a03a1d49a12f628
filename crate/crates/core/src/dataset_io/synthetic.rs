//! Ray-cast renderer for scenes made of textured planes.
//!
//! Every rendered pixel carries its exact analytic depth, which makes the
//! renderer the ground-truth oracle for the cost volume and every depth
//! extractor built on top of it.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost_volume::Frame;
use crate::depth_map::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::image::Image;

use super::png::{write_depth_png, write_rgb_png, TUM_DEPTH_SCALE};
use super::tum::format_trajectory_row;

/// Color returned for rays that hit nothing; such pixels have no depth.
pub const BACKGROUND: f64 = 0.5;

/// Periodic RGB texture addressed in texel units.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Texture {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "texture {width}x{height} with {} samples",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Band-limited color noise: white noise blurred with a periodic Gaussian
    /// of `sigma` texels, then rescaled to mean 0.5 and standard deviation
    /// 0.15 per channel.
    pub fn smooth_noise(size: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = size * size;
        let mut data = vec![0.0; n * 3];
        for v in data.iter_mut() {
            *v = rng.random::<f64>();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let wrap = |i: isize| i.rem_euclid(size as isize) as usize;
        for c in 0..3 {
            let mut tmp = vec![0.0; n];
            for y in 0..size {
                for x in 0..size {
                    tmp[y * size + x] = kernel
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * data[(y * size + wrap(x as isize + k as isize - radius)) * 3 + c])
                        .sum();
                }
            }
            for y in 0..size {
                for x in 0..size {
                    data[(y * size + x) * 3 + c] = kernel
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * tmp[wrap(y as isize + k as isize - radius) * size + x])
                        .sum();
                }
            }
            let mean = (0..n).map(|i| data[i * 3 + c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (data[i * 3 + c] - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt().max(1e-12);
            for i in 0..n {
                let v = &mut data[i * 3 + c];
                *v = (0.5 + 0.15 * (*v - mean) / std).clamp(0.0, 1.0);
            }
        }
        Self {
            width: size,
            height: size,
            data,
        }
    }

    /// Repetitive pattern: the sum of two sinusoids with a period of
    /// `period` texels along each axis, identical in all channels.
    pub fn sinusoid_grid(size: usize, period: usize) -> Self {
        let tau = std::f64::consts::TAU;
        let mut data = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            for x in 0..size {
                let v = 0.5
                    + 0.2 * (tau * x as f64 / period as f64).sin()
                    + 0.2 * (tau * y as f64 / period as f64).cos();
                data.extend_from_slice(&[v, v, v]);
            }
        }
        Self {
            width: size,
            height: size,
            data,
        }
    }

    /// Periodic bilinear lookup.
    pub fn sample(&self, a: f64, b: f64) -> [f64; 3] {
        let (w, h) = (self.width as f64, self.height as f64);
        let a = a.rem_euclid(w);
        let b = b.rem_euclid(h);
        let x0 = (a.floor() as usize).min(self.width - 1);
        let y0 = (b.floor() as usize).min(self.height - 1);
        let fx = a - x0 as f64;
        let fy = b - y0 as f64;
        let x1 = (x0 + 1) % self.width;
        let y1 = (y0 + 1) % self.height;
        let at = |x: usize, y: usize, c: usize| self.data[(y * self.width + x) * 3 + c];
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = (1.0 - fx) * (1.0 - fy) * at(x0, y0, c)
                + fx * (1.0 - fy) * at(x1, y0, c)
                + (1.0 - fx) * fy * at(x0, y1, c)
                + fx * fy * at(x1, y1, c);
        }
        out
    }
}

/// Plane `normal · X = offset` (world frame) with a texture laid out along
/// two in-plane axes, optionally cut to a rectangle around `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturedPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub origin: Vector3<f64>,
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    /// Meters per texel.
    pub texel_size: f64,
    pub texture: Arc<Texture>,
    /// Half extents along `axis_u` and `axis_v`; `None` is unbounded.
    pub half_extent: Option<(f64, f64)>,
}

impl TexturedPlane {
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>, texture: Arc<Texture>, texel_size: f64) -> Self {
        let n = normal.normalize();
        let helper = if n.y.abs() < 0.9 { Vector3::y() } else { Vector3::x() };
        let axis_u = helper.cross(&n).normalize();
        let axis_v = n.cross(&axis_u);
        Self {
            normal: n,
            offset: n.dot(&point),
            origin: point,
            axis_u,
            axis_v,
            texel_size,
            texture,
            half_extent: None,
        }
    }

    /// Restricts the plane to a `2·half_u × 2·half_v` rectangle.
    pub fn bounded(mut self, half_u: f64, half_v: f64) -> Self {
        self.half_extent = Some((half_u, half_v));
        self
    }

    /// Ray parameter of the intersection with `origin + s·dir`, if any.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = (self.offset - self.normal.dot(origin)) / denom;
        if let Some((hu, hv)) = self.half_extent {
            let rel = origin + dir * s - self.origin;
            if rel.dot(&self.axis_u).abs() > hu || rel.dot(&self.axis_v).abs() > hv {
                return None;
            }
        }
        Some(s)
    }

    pub fn color_at(&self, point: &Vector3<f64>) -> [f64; 3] {
        let rel = point - self.origin;
        self.texture
            .sample(rel.dot(&self.axis_u) / self.texel_size, rel.dot(&self.axis_v) / self.texel_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub planes: Vec<TexturedPlane>,
    /// `world_from_camera` per frame.
    pub trajectory: Vec<Pose>,
    pub intrinsics: Intrinsics,
}

impl SyntheticScene {
    /// Pinhole camera used by the built-in scenes: focal length 0.78125·W
    /// (250 px at 320 wide), principal point at the image center.
    pub fn standard_intrinsics(width: usize, height: usize) -> Intrinsics {
        let f = 0.781_25 * width as f64;
        Intrinsics::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
        .expect("positive focal length")
    }

    /// Texel size (meters) that makes one texel about one pixel wide at `depth`.
    pub fn texel_for(intrinsics: &Intrinsics, depth: f64) -> f64 {
        depth / intrinsics.fx
    }

    /// World plane `z = depth` covered with smooth noise.
    pub fn fronto_parallel(intrinsics: Intrinsics, depth: f64, trajectory: Vec<Pose>, seed: u64) -> Self {
        let texture = Arc::new(Texture::smooth_noise(256, 1.5, seed));
        let plane = TexturedPlane::new(
            Vector3::new(0.0, 0.0, depth),
            Vector3::z(),
            texture,
            Self::texel_for(&intrinsics, depth),
        );
        Self {
            planes: vec![plane],
            trajectory,
            intrinsics,
        }
    }

    /// Plane through `point` with `normal`, covered with smooth noise.
    pub fn tilted(
        intrinsics: Intrinsics,
        point: Vector3<f64>,
        normal: Vector3<f64>,
        trajectory: Vec<Pose>,
        seed: u64,
    ) -> Self {
        let texture = Arc::new(Texture::smooth_noise(256, 1.5, seed));
        let plane = TexturedPlane::new(point, normal, texture, Self::texel_for(&intrinsics, point.z));
        Self {
            planes: vec![plane],
            trajectory,
            intrinsics,
        }
    }

    /// Fronto-parallel plane with a repetitive sinusoid pattern whose period
    /// is `period_px` pixels in the first view.
    pub fn repetitive(intrinsics: Intrinsics, depth: f64, period_px: usize, trajectory: Vec<Pose>) -> Self {
        let texture = Arc::new(Texture::sinusoid_grid(period_px * 32, period_px));
        let plane = TexturedPlane::new(
            Vector3::new(0.0, 0.0, depth),
            Vector3::z(),
            texture,
            Self::texel_for(&intrinsics, depth),
        );
        Self {
            planes: vec![plane],
            trajectory,
            intrinsics,
        }
    }

    /// Desk-like layout: a back wall, a floor and a box face in front, each with its own texture.
    pub fn desk(intrinsics: Intrinsics, trajectory: Vec<Pose>, seed: u64) -> Self {
        let tex = |s: u64| Arc::new(Texture::smooth_noise(256, 1.5, seed.wrapping_add(s)));
        let wall = TexturedPlane::new(
            Vector3::new(0.0, 0.0, 3.5),
            Vector3::z(),
            tex(0),
            Self::texel_for(&intrinsics, 3.5),
        );
        // Horizontal floor 0.6 m below the camera (image y points down).
        let floor = TexturedPlane::new(
            Vector3::new(0.0, 0.6, 2.0),
            Vector3::y(),
            tex(1),
            Self::texel_for(&intrinsics, 2.0),
        );
        let mut planes = vec![wall, floor];
        let face = TexturedPlane::new(
            Vector3::new(-0.35, 0.1, 1.6),
            Vector3::new(0.25, 0.0, 1.0),
            tex(2),
            Self::texel_for(&intrinsics, 1.6),
        )
        .bounded(0.35, 0.3);
        planes.push(face);
        Self {
            planes,
            trajectory,
            intrinsics,
        }
    }

    /// Straight-line trajectory with `n` poses `start + i·step`, identity
    /// rotation.
    pub fn linear_trajectory(n: usize, start: Vector3<f64>, step: Vector3<f64>) -> Vec<Pose> {
        (0..n)
            .map(|i| Pose::from_translation(start + step * i as f64))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }

    /// Nearest plane hit along the ray through `pixel` for camera `pose`:
    /// `(depth along the optical axis, plane index, world point)`.
    pub fn cast(&self, pose: &Pose, pixel: Vector2<f64>) -> Option<(f64, usize, Vector3<f64>)> {
        let k = &self.intrinsics;
        let ray_cam = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        let dir = pose.rotation() * ray_cam;
        let origin = pose.translation();
        let mut best: Option<(f64, usize)> = None;
        for (i, plane) in self.planes.iter().enumerate() {
            if let Some(s) = plane.intersect(origin, &dir) {
                // The camera-frame ray has unit z, so `s` is the depth.
                if s > 1e-9 && best.is_none_or(|(b, _)| s < b) {
                    best = Some((s, i));
                }
            }
        }
        best.map(|(s, i)| (s, i, origin + dir * s))
    }
}

/// Renders frame `index`: color from bilinear texture lookup at the ray hit,
/// depth analytic. Pixels that hit nothing are background colored and
/// invalid in the depth map.
pub fn render_scene(scene: &SyntheticScene, index: usize) -> Result<(Frame, DepthMap)> {
    let pose = *scene.trajectory.get(index).ok_or_else(|| {
        Error::InvalidFrame(format!(
            "frame {index} requested from a {}-frame trajectory",
            scene.trajectory.len()
        ))
    })?;
    let (w, h) = (scene.intrinsics.width, scene.intrinsics.height);
    let mut color = vec![BACKGROUND; w * h * 3];
    let mut depth = vec![f64::NAN; w * h];
    for y in 0..h {
        for x in 0..w {
            if let Some((d, i, p)) = scene.cast(&pose, Vector2::new(x as f64, y as f64)) {
                let c = scene.planes[i].color_at(&p);
                color[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
                depth[y * w + x] = d;
            }
        }
    }
    let image = Image::new(w, h, 3, color)?;
    let frame = Frame::new(format!("{index:06}"), image, pose, scene.intrinsics)?;
    Ok((frame, DepthMap::from_values(w, h, depth)?))
}

/// Writes the scene as a TUM-layout directory at `rate_hz`: 8-bit color,
/// 16-bit depth (scale 5000), lists, trajectory and `intrinsics.txt`.
pub fn write_tum_sequence(scene: &SyntheticScene, dir: &Path, rate_hz: f64) -> Result<()> {
    std::fs::create_dir_all(dir.join("rgb"))?;
    std::fs::create_dir_all(dir.join("depth"))?;
    let mut rgb_list = String::from("# color images\n# timestamp filename\n");
    let mut depth_list = String::from("# depth maps\n# timestamp filename\n");
    let mut gt = String::from("# ground truth trajectory\n# timestamp tx ty tz qx qy qz qw\n");
    for i in 0..scene.len() {
        let (frame, depth) = render_scene(scene, i)?;
        let ts = i as f64 / rate_hz;
        let name = format!("{i:06}.png");
        write_rgb_png(&frame.image, &dir.join("rgb").join(&name))?;
        write_depth_png(&depth, &dir.join("depth").join(&name), TUM_DEPTH_SCALE)?;
        rgb_list.push_str(&format!("{ts:.6} rgb/{name}\n"));
        depth_list.push_str(&format!("{ts:.6} depth/{name}\n"));
        gt.push_str(&format_trajectory_row(ts, &frame.pose));
        gt.push('\n');
    }
    std::fs::File::create(dir.join("rgb.txt"))?.write_all(rgb_list.as_bytes())?;
    std::fs::File::create(dir.join("depth.txt"))?.write_all(depth_list.as_bytes())?;
    std::fs::File::create(dir.join("groundtruth.txt"))?.write_all(gt.as_bytes())?;
    std::fs::write(dir.join("intrinsics.txt"), scene.intrinsics.to_key_values())?;
    Ok(())
}
