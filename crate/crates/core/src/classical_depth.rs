//! Winner-take-all depth readout with parabolic sub-bin refinement.
//!
//! This is a pure per-pixel function of the cost volume and serves as the
//! checkable baseline for everything upstream of it.

use crate::cost_volume::CostVolume;
use crate::depth_map::DepthMap;

/// Per-pixel hypothesis index, `None` where no depth was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    pub width: usize,
    pub height: usize,
    pub indices: Vec<Option<usize>>,
}

impl IndexMap {
    pub fn get(&self, x: usize, y: usize) -> Option<usize> {
        self.indices[y * self.width + x]
    }
}

/// Lowest-cost observed hypothesis per pixel; ties go to the smaller index
/// (the farther plane).
pub fn argmin_depth(volume: &CostVolume) -> IndexMap {
    let (w, h) = (volume.width(), volume.height());
    let plane = w * h;
    let costs = volume.costs();
    let counts = volume.valid_counts();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; plane];
    for d in 0..volume.depth_count() {
        let base = d * plane;
        for (i, slot) in best.iter_mut().enumerate() {
            if counts[base + i] == 0 {
                continue;
            }
            let c = costs[base + i];
            match slot {
                Some((_, bc)) if c >= *bc => {}
                _ => *slot = Some((d, c)),
            }
        }
    }
    IndexMap {
        width: w,
        height: h,
        indices: best.into_iter().map(|b| b.map(|(d, _)| d)).collect(),
    }
}

/// Vertex offset of the parabola through three equally spaced samples,
/// in units of the spacing, clamped to half a bin.
pub fn parabola_offset(prev: f64, center: f64, next: f64) -> f64 {
    let curvature = prev + next - 2.0 * center;
    if !(curvature > 0.0) {
        return 0.0;
    }
    ((prev - next) / (2.0 * curvature)).clamp(-0.5, 0.5)
}

/// Refines each argmin along the inverse-depth axis and converts to depth.
///
/// Pixels whose argmin sits on the first or last hypothesis, or whose
/// neighbors along depth are unobserved, keep the sampled value.
pub fn subsample_refine(volume: &CostVolume, indices: &IndexMap) -> DepthMap {
    refine_impl(volume, indices, true)
}

/// Depth of the sampled hypothesis at each argmin, no refinement.
pub fn sampled_depths(volume: &CostVolume, indices: &IndexMap) -> DepthMap {
    refine_impl(volume, indices, false)
}

fn refine_impl(volume: &CostVolume, indices: &IndexMap, refine: bool) -> DepthMap {
    let hyp = volume.hypotheses();
    let n = hyp.len();
    let step = hyp.step();
    let (d_min, d_max) = (hyp.d_min(), hyp.d_max());
    let plane = volume.plane_len();
    let costs = volume.costs();
    let counts = volume.valid_counts();
    let values = indices
        .indices
        .iter()
        .enumerate()
        .map(|(p, idx)| {
            let Some(i) = *idx else { return f64::NAN };
            let mut inv = hyp.inverse_depth(i);
            if refine && i > 0 && i + 1 < n {
                let (a, b, c) = (
                    (i - 1) * plane + p,
                    i * plane + p,
                    (i + 1) * plane + p,
                );
                if counts[a] > 0 && counts[c] > 0 {
                    inv += parabola_offset(costs[a], costs[b], costs[c]) * step;
                }
            }
            (1.0 / inv).clamp(d_min, d_max)
        })
        .collect();
    DepthMap::from_values(volume.width(), volume.height(), values).expect("sized by construction")
}

/// Argmin followed by parabolic refinement.
pub fn extract(volume: &CostVolume) -> DepthMap {
    subsample_refine(volume, &argmin_depth(volume))
}
