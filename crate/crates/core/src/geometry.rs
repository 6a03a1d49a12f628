//! Rigid poses, the pinhole camera, inverse-depth hypotheses and the per-depth
//! plane-induced warp between two views.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points at or below this depth (meters) cannot be projected.
pub const MIN_PROJECTABLE_DEPTH: f64 = 1e-9;

const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid transform `x -> R x + t`.
///
/// Poses read from files are `world_from_camera`: they take camera-frame
/// points into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    /// Checked constructor: `rotation` must be orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {:e})",
                gram.amax()
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!("rotation determinant {det}")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Pose from a TUM-style quaternion `(qx, qy, qz, qw)`; the quaternion is
    /// normalized first.
    pub fn from_quaternion(translation: Vector3<f64>, q: [f64; 4]) -> Result<Self> {
        let quat = nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]);
        if !(quat.norm() > 1e-12) {
            return Err(Error::InvalidPose(format!("degenerate quaternion {q:?}")));
        }
        let unit = UnitQuaternion::from_quaternion(quat);
        Self::new(unit.to_rotation_matrix().into_inner(), translation)
    }

    /// Quaternion `(qx, qy, qz, qw)` of the rotation, with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let (w, i, j, k) = (q.w, q.i, q.j, q.k);
        if w < 0.0 {
            [-i, -j, -k, -w]
        } else {
            [i, j, k, w]
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Same rotation, translation multiplied by `s`.
    pub fn scale_translation(&self, s: f64) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: self.translation * s,
        }
    }
}

/// `measurement_from_reference = world_from_m⁻¹ · world_from_r`.
pub fn relative_pose(world_from_m: &Pose, world_from_r: &Pose) -> Pose {
    world_from_m.inverse().compose(world_from_r)
}

/// Pinhole camera without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite principal point".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics(format!(
                "image size {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn k_inv(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn project(&self, point: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(point.z > MIN_PROJECTABLE_DEPTH) {
            return Err(Error::NonPositiveDepth(point.z));
        }
        Ok(Vector2::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    pub fn backproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(Vector3::new(
            (pixel.x - self.cx) * depth / self.fx,
            (pixel.y - self.cy) * depth / self.fy,
            depth,
        ))
    }

    /// Intrinsics of the same camera after resizing the image to
    /// `width x height` (pixel-center convention).
    pub fn resized(&self, width: usize, height: usize) -> Intrinsics {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }
}

/// Depth hypotheses sampled uniformly in inverse depth, ascending in inverse
/// depth (index 0 is the farthest plane).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthHypotheses {
    d_min: f64,
    d_max: f64,
    inverse_depths: Vec<f64>,
}

impl DepthHypotheses {
    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn len(&self) -> usize {
        self.inverse_depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inverse_depths.is_empty()
    }

    pub fn inverse_depths(&self) -> &[f64] {
        &self.inverse_depths
    }

    pub fn inverse_depth(&self, i: usize) -> f64 {
        self.inverse_depths[i]
    }

    pub fn depth(&self, i: usize) -> f64 {
        1.0 / self.inverse_depths[i]
    }

    /// Spacing between consecutive inverse depths (one bin).
    pub fn step(&self) -> f64 {
        (1.0 / self.d_min - 1.0 / self.d_max) / (self.len() - 1) as f64
    }

    /// Same count over `[s·d_min, s·d_max]`.
    pub fn scaled(&self, s: f64) -> Result<DepthHypotheses> {
        sample_inverse_depths(self.d_min * s, self.d_max * s, self.len())
    }
}

/// `1/d_i = (1/d_min - 1/d_max) · i/(n-1) + 1/d_max` for `i in 0..n`.
pub fn sample_inverse_depths(d_min: f64, d_max: f64, n: usize) -> Result<DepthHypotheses> {
    if !(d_min > 0.0 && d_min < d_max && d_max.is_finite()) {
        return Err(Error::InvalidRange(format!(
            "need 0 < d_min < d_max, got d_min={d_min} d_max={d_max}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidRange(format!("need at least 2 samples, got {n}")));
    }
    let near = 1.0 / d_min;
    let far = 1.0 / d_max;
    let span = near - far;
    let last = (n - 1) as f64;
    let mut inverse_depths: Vec<f64> = (0..n).map(|i| span * (i as f64 / last) + far).collect();
    // Pin the endpoints so they are exact reciprocals of the range.
    inverse_depths[0] = far;
    inverse_depths[n - 1] = near;
    Ok(DepthHypotheses {
        d_min,
        d_max,
        inverse_depths,
    })
}

/// Homography induced by the fronto-parallel reference plane at one depth,
/// taking homogeneous reference pixels to unnormalized measurement pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpMatrix(pub Matrix3<f64>);

impl WarpMatrix {
    /// Normalized image of `(u, v)`. `None` when the plane point lies at or
    /// behind the measurement camera.
    #[inline]
    pub fn apply(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let m = &self.0;
        let z = m[(2, 0)] * u + m[(2, 1)] * v + m[(2, 2)];
        if !(z > MIN_PROJECTABLE_DEPTH) {
            return None;
        }
        let x = m[(0, 0)] * u + m[(0, 1)] * v + m[(0, 2)];
        let y = m[(1, 0)] * u + m[(1, 1)] * v + m[(1, 2)];
        Some((x / z, y / z))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// `P = d·K·R·K⁻¹ + [0 | 0 | K·t]` for `rel = measurement_from_reference`.
pub fn warp_matrix(intr: &Intrinsics, rel: &Pose, depth: f64) -> WarpMatrix {
    warp_matrix_between(intr, intr, rel, depth)
}

/// Warp matrix when the two views have different intrinsics.
pub fn warp_matrix_between(
    reference: &Intrinsics,
    measurement: &Intrinsics,
    rel: &Pose,
    depth: f64,
) -> WarpMatrix {
    let k_m = measurement.k();
    let mut p = (k_m * rel.rotation() * reference.k_inv()) * depth;
    let kt = k_m * rel.translation();
    p[(0, 2)] += kt.x;
    p[(1, 2)] += kt.y;
    p[(2, 2)] += kt.z;
    WarpMatrix(p)
}
