//! Reading and writing sequences, depth maps and configuration, plus the
//! synthetic scene renderer used as ground truth throughout the tests.

pub mod config;
pub mod pfm;
pub mod png;
pub mod synthetic;
pub mod tum;

pub use config::{read_intrinsics, KeyValues};
pub use pfm::{read_pfm, read_pfm_depth, write_pfm, write_pfm_depth};
pub use png::{load_depth_png, load_rgb_png, write_depth_png, write_rgb_png, TUM_DEPTH_SCALE};
pub use synthetic::{render_scene, SyntheticScene, Texture, TexturedPlane};
pub use tum::{associate, load_sequence, SequenceEntry, SequenceIndex, DEFAULT_ASSOCIATION_TOLERANCE};
