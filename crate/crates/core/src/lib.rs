//! Multiview depth estimation from posed images.
//!
//! A reference frame and any number of posed measurement frames are turned
//! into a plane-sweep cost volume sampled uniformly in inverse depth. Depth is
//! then read out either by winner-take-all with parabolic refinement
//! ([`classical_depth`]) or by the encoder-decoder network in [`depthnet`].
//! [`sequence_mapper`] runs the same machinery over an image-pose stream and
//! [`metrics`] scores the results.

pub mod augmentation;
pub mod classical_depth;
pub mod cost_volume;
pub mod dataset_io;
pub mod depth_map;
pub mod depthnet;
pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod sequence_mapper;

pub use classical_depth::{argmin_depth, extract, subsample_refine, IndexMap};
pub use cost_volume::{build_cost_volume, CostVolume, Frame};
pub use depth_map::DepthMap;
pub use error::{Error, Result};
pub use geometry::{DepthHypotheses, Intrinsics, Pose, WarpMatrix};
pub use image::{Image, Normalization};
pub use metrics::{evaluate, MetricsReport};
