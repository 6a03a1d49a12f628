//! Finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::NetworkGraph;
use super::model::{multiscale_loss, GtPyramid, Mode};
use super::tensor::Tensor;
use crate::depth_map::DepthMap;
use crate::error::{Error, Result};

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    /// Draws discarded because `±step` crossed a ReLU or L1 kink, where a
    /// central difference does not estimate the derivative.
    pub kink_skips: usize,
}

/// Upper bound on draws per requested entry before giving up on finding
/// kink-free parameters.
const MAX_DRAWS_PER_ENTRY: usize = 20;

/// Random inputs in `[0, 1)` and ground truth in `[0.5, 5)` m with roughly
/// one pixel in ten missing.
pub fn random_problem(
    net: &NetworkGraph,
    batch: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<(Tensor, Vec<GtPyramid>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = net.input_channels();
    let data = (0..batch * c * height * width).map(|_| rng.random::<f64>()).collect();
    let input = Tensor::from_data(batch, c, height, width, data)?;
    let gt = (0..batch)
        .map(|_| {
            let map = DepthMap::from_fn(width, height, |_, _| {
                (rng.random::<f64>() >= 0.1).then(|| rng.random_range(0.5..5.0))
            });
            GtPyramid::new(&map)
        })
        .collect();
    Ok((input, gt))
}

/// Loss plus the on/off pattern of every non-differentiable point it
/// passes through (ReLU activity and the sign of each L1 residual).
fn loss_and_pattern(
    net: &NetworkGraph,
    input: &Tensor,
    gt: &[GtPyramid],
) -> Result<(f64, Vec<bool>)> {
    let pass = net.forward(input, Mode::Train)?;
    let pred = pass.prediction(net);
    let loss = multiscale_loss(&pred, gt)?;
    let mut pattern = pass.relu_pattern(net);
    for (s, map) in pred.maps.iter().enumerate() {
        for (i, g) in gt.iter().enumerate() {
            let level = &g.levels[s];
            for (p, &xi) in map.channel(i, 0).iter().enumerate() {
                if let Some(d) = level.at_index(p) {
                    pattern.push(xi > 1.0 / d);
                }
            }
        }
    }
    Ok((loss.value, pattern))
}

/// Compares analytic gradients of the training-mode loss with central
/// differences on `count` parameters drawn uniformly at random. Draws whose
/// perturbation flips any ReLU or L1 kink are replaced by fresh draws and
/// counted in [`GradCheckReport::kink_skips`].
pub fn gradient_check(
    net: &NetworkGraph,
    input: &Tensor,
    gt: &[GtPyramid],
    count: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    let pass = net.forward(input, Mode::Train)?;
    let loss = multiscale_loss(&pass.prediction(net), gt)?;
    let grads = net.backward(&pass, &loss.grads);
    let (_, base_pattern) = loss_and_pattern(net, input, gt)?;

    let offsets: Vec<usize> = net
        .params()
        .iter()
        .scan(0, |acc, p| {
            let start = *acc;
            *acc += p.data.len();
            Some(start)
        })
        .collect();
    let total = net.parameter_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (count * MAX_DRAWS_PER_ENTRY).min(total);
    let picks = sample(&mut rng, total, draws).into_vec();

    let mut probe = net.clone();
    let mut entries = Vec::with_capacity(count);
    let mut kink_skips = 0;
    for flat in picks {
        if entries.len() == count {
            break;
        }
        let k = offsets.partition_point(|&o| o <= flat) - 1;
        let j = flat - offsets[k];
        let original = probe.params()[k].data[j];
        probe.params_mut()[k].data[j] = original + step;
        let (plus, plus_pattern) = loss_and_pattern(&probe, input, gt)?;
        probe.params_mut()[k].data[j] = original - step;
        let (minus, minus_pattern) = loss_and_pattern(&probe, input, gt)?;
        probe.params_mut()[k].data[j] = original;
        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            kink_skips += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads.values[k][j];
        entries.push(GradCheckEntry {
            param: probe.params()[k].name.clone(),
            index: j,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    if entries.len() < count.min(total) {
        return Err(Error::InvalidConfig(format!(
            "only {} of {count} parameters could be checked away from kinks",
            entries.len()
        )));
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    entries.sort_by(|a, b| a.param.cmp(&b.param).then(a.index.cmp(&b.index)));
    Ok(GradCheckReport {
        step,
        entries,
        max_rel_error,
        kink_skips,
    })
}
