//! Browser bindings: render a synthetic scene, sweep a cost volume over it and
//! inspect the result pixel by pixel.

use mvdepth::classical_depth::extract;
use mvdepth::cost_volume::{build_cost_volume, CostVolume, Frame};
use mvdepth::dataset_io::{render_scene, SyntheticScene};
use mvdepth::geometry::{sample_inverse_depths, Pose};
use mvdepth::metrics::evaluate;
use mvdepth::DepthMap;
use nalgebra::Vector3;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Reference at the origin, measurements to the right, left, below and above.
fn trajectory(baseline: f64) -> Vec<Pose> {
    [
        (0.0, 0.0),
        (baseline, 0.0),
        (-baseline, 0.0),
        (0.0, baseline),
        (0.0, -baseline),
    ]
    .iter()
    .map(|&(x, y)| Pose::from_translation(Vector3::new(x, y, 0.0)))
    .collect()
}

fn scene(kind: &str, width: usize, height: usize, baseline: f64, seed: u64) -> Result<SyntheticScene, JsError> {
    let intr = SyntheticScene::standard_intrinsics(width, height);
    let traj = trajectory(baseline);
    Ok(match kind {
        "desk" => SyntheticScene::desk(intr, traj, seed),
        "plane" => SyntheticScene::fronto_parallel(intr, 2.0, traj, seed),
        "tilted" => SyntheticScene::tilted(intr, Vector3::new(0.0, 0.0, 2.0), Vector3::new(0.2, 0.3, 1.0), traj, seed),
        "repetitive" => SyntheticScene::repetitive(intr, 2.5, 6, traj),
        other => return Err(JsError::new(&format!("unknown scene `{other}`"))),
    })
}

/// Inverse depths of the hypothesis planes, nearest last.
#[wasm_bindgen]
pub fn inverse_depth_samples(d_min: f64, d_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    Ok(sample_inverse_depths(d_min, d_max, n).map_err(js_err)?.inverse_depths().to_vec())
}

/// One rendered scene with cost volumes over one and over all measurements.
#[wasm_bindgen]
pub struct Session {
    reference: Frame,
    truth: DepthMap,
    single: CostVolume,
    multi: CostVolume,
    estimate: DepthMap,
}

#[wasm_bindgen]
impl Session {
    /// `measurements` in 1..=4 frames are used for the multi-frame volume.
    #[wasm_bindgen(constructor)]
    pub fn new(
        kind: &str,
        width: usize,
        height: usize,
        baseline: f64,
        measurements: usize,
        n_depth: usize,
        seed: u64,
    ) -> Result<Session, JsError> {
        if !(1..=4).contains(&measurements) {
            return Err(JsError::new("measurements must be between 1 and 4"));
        }
        let scene = scene(kind, width, height, baseline, seed)?;
        let (reference, truth) = render_scene(&scene, 0).map_err(js_err)?;
        let others = (1..=measurements)
            .map(|i| render_scene(&scene, i).map(|(f, _)| f))
            .collect::<Result<Vec<_>, _>>()
            .map_err(js_err)?;
        let hyp = sample_inverse_depths(0.5, 50.0, n_depth).map_err(js_err)?;
        let single = build_cost_volume(&reference, &others[..1], &hyp).map_err(js_err)?;
        let multi = build_cost_volume(&reference, &others, &hyp).map_err(js_err)?;
        let estimate = extract(&multi);
        Ok(Session { reference, truth, single, multi, estimate })
    }

    pub fn width(&self) -> usize {
        self.reference.width()
    }

    pub fn height(&self) -> usize {
        self.reference.height()
    }

    /// Reference image as RGBA bytes.
    pub fn reference_rgba(&self) -> Vec<u8> {
        let img = &self.reference.image;
        let mut out = Vec::with_capacity(img.width() * img.height() * 4);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let p = img.pixel(x, y);
                let (r, g, b) = if p.len() == 3 { (p[0], p[1], p[2]) } else { (p[0], p[0], p[0]) };
                out.extend([r, g, b].map(to_byte));
                out.push(255);
            }
        }
        out
    }

    /// Estimated depth as RGBA bytes, inverse depth mapped to brightness.
    pub fn estimate_rgba(&self) -> Vec<u8> {
        depth_rgba(&self.estimate)
    }

    /// Ground-truth depth as RGBA bytes on the same scale as the estimate.
    pub fn truth_rgba(&self) -> Vec<u8> {
        depth_rgba(&self.truth)
    }

    /// Mean absolute inverse-depth error of the estimate.
    pub fn l1_inv(&self) -> Result<f64, JsError> {
        Ok(evaluate(&self.estimate, &self.truth).map_err(js_err)?.l1_inv)
    }

    /// Cost curve at a pixel from the first measurement only; NaN where unobserved.
    pub fn single_curve(&self, x: usize, y: usize) -> Vec<f64> {
        curve(&self.single, x, y)
    }

    /// Cost curve at a pixel from every measurement; NaN where unobserved.
    pub fn multi_curve(&self, x: usize, y: usize) -> Vec<f64> {
        curve(&self.multi, x, y)
    }

    /// Ground-truth inverse depth at a pixel, NaN where the ray hits nothing.
    pub fn truth_inverse(&self, x: usize, y: usize) -> f64 {
        self.truth.get(x, y).map_or(f64::NAN, |d| 1.0 / d)
    }

    /// Estimated inverse depth at a pixel, NaN where invalid.
    pub fn estimate_inverse(&self, x: usize, y: usize) -> f64 {
        self.estimate.get(x, y).map_or(f64::NAN, |d| 1.0 / d)
    }

    pub fn inverse_depths(&self) -> Vec<f64> {
        self.multi.hypotheses().inverse_depths().to_vec()
    }
}

fn curve(volume: &CostVolume, x: usize, y: usize) -> Vec<f64> {
    if x >= volume.width() || y >= volume.height() {
        return Vec::new();
    }
    volume.curve(x, y).into_iter().map(|c| c.unwrap_or(f64::NAN)).collect()
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Inverse depth over [1/50, 1/0.5] m⁻¹ mapped to brightness; invalid is magenta.
fn depth_rgba(depth: &DepthMap) -> Vec<u8> {
    let (lo, hi) = (1.0 / 50.0, 1.0 / 0.5);
    let mut out = Vec::with_capacity(depth.len() * 4);
    for i in 0..depth.len() {
        match depth.at_index(i) {
            Some(d) => {
                let v = to_byte(((1.0 / d - lo) / (hi - lo)).sqrt());
                out.extend([v, v, v, 255]);
            }
            None => out.extend([255, 0, 255, 255]),
        }
    }
    out
}
