//! Online depth mapping over an image-pose stream.
//!
//! Measurement frames are picked by a view-angle / baseline rule; every
//! incoming frame is estimated against the two most recent picks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::classical_depth;
use crate::cost_volume::{build_cost_volume, Frame};
use crate::depth_map::DepthMap;
use crate::depthnet::{assemble_input, NetworkGraph};
use crate::error::Result;
use crate::geometry::{DepthHypotheses, Pose};
use crate::image::Normalization;

pub const DEFAULT_ANGLE_DEG: f64 = 15.0;
pub const DEFAULT_BASELINE_M: f64 = 0.3;
/// Measurement frames consumed per estimate.
pub const MEASUREMENTS_PER_ESTIMATE: usize = 2;

/// Slack on threshold comparisons so that e.g. three 0.1 m steps count as
/// 0.3 m despite rounding.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Angle (degrees) between the optical axes of two cameras.
pub fn view_angle(pose_i: &Pose, pose_j: &Pose) -> f64 {
    // (R_jᵀ R_i e_z) · e_z is the (2,2) entry of R_jᵀ R_i.
    let rel = pose_j.rotation().transpose() * pose_i.rotation();
    rel[(2, 2)].clamp(-1.0, 1.0).acos().to_degrees()
}

/// Distance between two camera centers.
pub fn baseline(pose_i: &Pose, pose_j: &Pose) -> f64 {
    (pose_i.translation() - pose_j.translation()).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub selected: bool,
    /// Compared against the last selected frame; `None` for the first frame.
    pub angle_deg: Option<f64>,
    pub baseline_m: Option<f64>,
}

/// The most recent selected measurement frames, oldest first.
#[derive(Debug, Clone)]
pub struct KeyframeRing {
    frames: VecDeque<Frame>,
    capacity: usize,
    pub angle_deg: f64,
    pub baseline_m: f64,
}

impl Default for KeyframeRing {
    fn default() -> Self {
        Self::new(DEFAULT_ANGLE_DEG, DEFAULT_BASELINE_M)
    }
}

impl KeyframeRing {
    pub fn new(angle_deg: f64, baseline_m: f64) -> Self {
        Self {
            frames: VecDeque::with_capacity(MEASUREMENTS_PER_ESTIMATE + 1),
            capacity: MEASUREMENTS_PER_ESTIMATE,
            angle_deg,
            baseline_m,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    pub fn last(&self) -> Option<&Frame> {
        self.frames.back()
    }

    /// Decides whether `frame` becomes a measurement frame, inserting it if
    /// so. The first frame is always taken.
    pub fn maybe_select(&mut self, frame: &Frame) -> SelectionDecision {
        let Some(last) = self.frames.back() else {
            self.push(frame.clone());
            return SelectionDecision {
                selected: true,
                angle_deg: None,
                baseline_m: None,
            };
        };
        let angle = view_angle(&frame.pose, &last.pose);
        let base = baseline(&frame.pose, &last.pose);
        let selected = angle >= self.angle_deg - THRESHOLD_SLACK
            || base >= self.baseline_m - THRESHOLD_SLACK;
        if selected {
            self.push(frame.clone());
        }
        SelectionDecision {
            selected,
            angle_deg: Some(angle),
            baseline_m: Some(base),
        }
    }

    fn push(&mut self, frame: Frame) {
        self.frames.push_back(frame);
        while self.frames.len() > self.capacity {
            self.frames.pop_front();
        }
    }
}

/// Anything that turns a reference frame plus measurements into depth.
pub trait DepthEstimator {
    fn name(&self) -> &'static str;

    fn estimate(
        &self,
        reference: &Frame,
        measurements: &[Frame],
        hypotheses: &DepthHypotheses,
    ) -> Result<DepthMap>;
}

impl<E: DepthEstimator + ?Sized> DepthEstimator for Box<E> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn estimate(
        &self,
        reference: &Frame,
        measurements: &[Frame],
        hypotheses: &DepthHypotheses,
    ) -> Result<DepthMap> {
        (**self).estimate(reference, measurements, hypotheses)
    }
}

/// Cost volume followed by winner-take-all with parabolic refinement.
#[derive(Debug, Clone, Default)]
pub struct ClassicalEstimator {
    pub normalization: Option<Normalization>,
}

impl DepthEstimator for ClassicalEstimator {
    fn name(&self) -> &'static str {
        "classical"
    }

    fn estimate(
        &self,
        reference: &Frame,
        measurements: &[Frame],
        hypotheses: &DepthHypotheses,
    ) -> Result<DepthMap> {
        let volume = match &self.normalization {
            Some(norm) => {
                let r = reference.with_image(norm.apply(&reference.image))?;
                let ms = measurements
                    .iter()
                    .map(|m| m.with_image(norm.apply(&m.image)))
                    .collect::<Result<Vec<_>>>()?;
                build_cost_volume(&r, &ms, hypotheses)?
            }
            None => build_cost_volume(reference, measurements, hypotheses)?,
        };
        Ok(classical_depth::extract(&volume))
    }
}

/// The trained network, reading out the finest-scale prediction.
#[derive(Debug, Clone)]
pub struct NetworkEstimator {
    pub net: NetworkGraph,
    pub normalization: Normalization,
}

impl DepthEstimator for NetworkEstimator {
    fn name(&self) -> &'static str {
        "network"
    }

    fn estimate(
        &self,
        reference: &Frame,
        measurements: &[Frame],
        hypotheses: &DepthHypotheses,
    ) -> Result<DepthMap> {
        let r = reference.with_image(self.normalization.apply(&reference.image))?;
        let ms = measurements
            .iter()
            .map(|m| m.with_image(self.normalization.apply(&m.image)))
            .collect::<Result<Vec<_>>>()?;
        let volume = build_cost_volume(&r, &ms, hypotheses)?;
        let input = assemble_input(&[(&r.image, &volume)])?;
        Ok(self.net.predict(&input)?.depth_map(0, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame_id: String,
    /// Measurement frames the estimate used.
    pub measurement_ids: Vec<String>,
    pub selection: SelectionDecision,
    #[serde(skip)]
    pub depth: Option<DepthMap>,
}

/// Single-owner state machine: feed frames in acquisition order.
pub struct SequenceMapper<E> {
    ring: KeyframeRing,
    hypotheses: DepthHypotheses,
    estimator: E,
}

impl<E: DepthEstimator> SequenceMapper<E> {
    pub fn new(ring: KeyframeRing, hypotheses: DepthHypotheses, estimator: E) -> Self {
        Self {
            ring,
            hypotheses,
            estimator,
        }
    }

    pub fn ring(&self) -> &KeyframeRing {
        &self.ring
    }

    pub fn estimator(&self) -> &E {
        &self.estimator
    }

    /// Estimates depth for `frame` once two measurement frames exist, then
    /// runs selection on it. A frame is never its own measurement.
    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameOutcome> {
        let (depth, measurement_ids) = if self.ring.len() >= MEASUREMENTS_PER_ESTIMATE {
            let ms: Vec<Frame> = self
                .ring
                .frames()
                .skip(self.ring.len() - MEASUREMENTS_PER_ESTIMATE)
                .cloned()
                .collect();
            let ids = ms.iter().map(|m| m.id.clone()).collect();
            let depth = self.estimator.estimate(frame, &ms, &self.hypotheses)?;
            (Some(depth), ids)
        } else {
            (None, Vec::new())
        };
        let selection = self.ring.maybe_select(frame);
        Ok(FrameOutcome {
            frame_id: frame.id.clone(),
            measurement_ids,
            selection,
            depth,
        })
    }
}
