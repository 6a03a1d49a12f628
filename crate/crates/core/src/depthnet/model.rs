//! Forward pass, multi-scale loss and reverse-mode gradients.

use super::graph::{LayerKind, NetworkGraph};
use super::layers::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, concat, conv2d_backward,
    conv2d_forward, relu_backward, relu_in_place, resize_bilinear, resize_bilinear_backward,
    scaled_sigmoid, scaled_sigmoid_backward, split_channels, update_running_stats, BnCache,
};
use super::tensor::Tensor;
use crate::cost_volume::CostVolume;
use crate::depth_map::DepthMap;
use crate::error::{Error, Result};
use crate::image::Image;

/// Number of prediction scales.
pub const SCALES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batchnorm uses batch statistics.
    Train,
    /// Batchnorm uses running statistics.
    Eval,
}

/// Stacks reference images and cost volumes into a network input batch:
/// three image channels (grayscale is replicated) followed by one channel
/// per depth hypothesis.
pub fn assemble_input(samples: &[(&Image, &CostVolume)]) -> Result<Tensor> {
    let Some((_, vol0)) = samples.first() else {
        return Err(Error::ShapeMismatch("empty input batch".into()));
    };
    let (w, h, nd) = (vol0.width(), vol0.height(), vol0.depth_count());
    let plane = w * h;
    let mut t = Tensor::zeros(samples.len(), nd + 3, h, w);
    for (i, (img, vol)) in samples.iter().enumerate() {
        if img.width() != w
            || img.height() != h
            || vol.width() != w
            || vol.height() != h
            || vol.depth_count() != nd
        {
            return Err(Error::ShapeMismatch(format!(
                "sample {i}: image {}x{}, volume {}x{}x{}, expected {w}x{h}x{nd}",
                img.width(),
                img.height(),
                vol.width(),
                vol.height(),
                vol.depth_count()
            )));
        }
        let c = img.channels();
        let dst = t.sample_mut(i);
        for ch in 0..3 {
            let src_ch = if c == 3 { ch } else { 0 };
            for (p, v) in dst[ch * plane..(ch + 1) * plane].iter_mut().enumerate() {
                *v = img.data()[p * c + src_ch];
            }
        }
        dst[3 * plane..].copy_from_slice(vol.costs());
    }
    Ok(t)
}

/// Inverse-depth maps at full, 1/2, 1/4 and 1/8 resolution, each
/// `[N, 1, H_s, W_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScalePrediction {
    pub maps: [Tensor; SCALES],
}

impl MultiScalePrediction {
    pub fn batch_size(&self) -> usize {
        self.maps[0].n
    }

    pub fn inverse_depth(&self, scale: usize, sample: usize) -> &[f64] {
        self.maps[scale].channel(sample, 0)
    }

    pub fn depth_map(&self, scale: usize, sample: usize) -> DepthMap {
        let t = &self.maps[scale];
        DepthMap::from_inverse(t.w, t.h, t.channel(sample, 0)).expect("sized by construction")
    }
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    values: Vec<Tensor>,
    bn: Vec<Option<BnCache>>,
    mode: Mode,
}

impl ForwardPass {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn prediction(&self, net: &NetworkGraph) -> MultiScalePrediction {
        MultiScalePrediction {
            maps: net.outputs.map(|id| self.values[id].clone()),
        }
    }

    /// Which ReLU outputs are active, over every rectified layer in order.
    pub fn relu_pattern(&self, net: &NetworkGraph) -> Vec<bool> {
        net.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_relu)
            .flat_map(|(i, _)| self.values[i + 1].data.iter().map(|&v| v > 0.0))
            .collect()
    }

    /// Output of the named layer.
    pub fn activation<'a>(&'a self, net: &NetworkGraph, name: &str) -> Option<&'a Tensor> {
        let i = net.layers.iter().position(|l| l.name == name)?;
        Some(&self.values[i + 1])
    }
}

/// Parameter gradients aligned with [`NetworkGraph::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &NetworkGraph) -> Self {
        Self {
            values: net.params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn get<'a>(&'a self, net: &NetworkGraph, name: &str) -> Option<&'a [f64]> {
        let i = net.params.iter().position(|p| p.name == name)?;
        Some(&self.values[i])
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], node: usize, g: Tensor) {
    if node == 0 {
        return;
    }
    match &mut grads[node] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

impl NetworkGraph {
    /// Runs the network on an `[N, N_d + 3, H, W]` batch.
    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<ForwardPass> {
        if input.c != self.input_channels() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, network expects {}",
                input.c,
                self.input_channels()
            )));
        }
        self.check_input_size(input.h, input.w)?;
        let mut values: Vec<Tensor> = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.clone());
        let mut bn = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let wiring = &self.wiring[i];
            let mut cache = None;
            let out = match layer.kind {
                LayerKind::Conv => {
                    let slot = self.slots[i].expect("conv has parameters");
                    let mut y = conv2d_forward(
                        &values[wiring[0]],
                        &self.params[slot.weight].data,
                        &self.params[slot.bias].data,
                        layer.out_channels,
                        layer.kernel,
                        layer.stride,
                    );
                    if let Some(b) = slot.bn {
                        let gamma = &self.params[b.gamma].data;
                        let beta = &self.params[b.beta].data;
                        cache = Some(match mode {
                            Mode::Train => batchnorm_train(&mut y, gamma, beta),
                            Mode::Eval => batchnorm_eval(
                                &mut y,
                                gamma,
                                beta,
                                &self.buffers[b.running_mean].data,
                                &self.buffers[b.running_var].data,
                            ),
                        });
                    }
                    if layer.has_relu {
                        relu_in_place(&mut y);
                    }
                    y
                }
                LayerKind::UpsampleBilinear => {
                    let target = &values[self.size_like[i].expect("upsample target")];
                    resize_bilinear(&values[wiring[0]], target.h, target.w)
                }
                LayerKind::Concat => {
                    let parts: Vec<&Tensor> = wiring.iter().map(|&id| &values[id]).collect();
                    concat(&parts)
                }
                LayerKind::SigmoidScaled => scaled_sigmoid(&values[wiring[0]], self.sigmoid_scale()),
            };
            values.push(out);
            bn.push(cache);
        }
        Ok(ForwardPass { values, bn, mode })
    }

    /// Forward in inference mode, returning only the prediction.
    pub fn predict(&self, input: &Tensor) -> Result<MultiScalePrediction> {
        Ok(self.forward(input, Mode::Eval)?.prediction(self))
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// estimates.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        for (i, cache) in pass.bn.iter().enumerate() {
            let (Some(cache), Some(slot)) = (cache, self.slots[i]) else {
                continue;
            };
            let (Some((mean, var)), Some(b)) = (&cache.batch_stats, slot.bn) else {
                continue;
            };
            let out = &pass.values[i + 1];
            let count = out.n * out.plane();
            let (lo, hi) = self.buffers.split_at_mut(b.running_var);
            update_running_stats(&mut lo[b.running_mean].data, &mut hi[0].data, mean, var, count);
        }
    }

    /// Reverse-mode gradients of a scalar whose derivatives with respect to
    /// the four heads are `output_grads`.
    pub fn backward(&self, pass: &ForwardPass, output_grads: &[Tensor; SCALES]) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.layers.len() + 1];
        for (s, g) in output_grads.iter().enumerate() {
            accumulate(&mut grads, self.outputs[s], g.clone());
        }
        let mut pgrads = Gradients::zeros_like(self);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let node = i + 1;
            let Some(mut g) = grads[node].take() else {
                continue;
            };
            let wiring = &self.wiring[i];
            match layer.kind {
                LayerKind::Conv => {
                    let slot = self.slots[i].expect("conv has parameters");
                    if layer.has_relu {
                        relu_backward(&mut g, &pass.values[node]);
                    }
                    if let (Some(b), Some(cache)) = (slot.bn, &pass.bn[i]) {
                        let mut dgamma = std::mem::take(&mut pgrads.values[b.gamma]);
                        let mut dbeta = std::mem::take(&mut pgrads.values[b.beta]);
                        batchnorm_backward(
                            &mut g,
                            cache,
                            &self.params[b.gamma].data,
                            &mut dgamma,
                            &mut dbeta,
                        );
                        pgrads.values[b.gamma] = dgamma;
                        pgrads.values[b.beta] = dbeta;
                    }
                    let mut dw = std::mem::take(&mut pgrads.values[slot.weight]);
                    let mut db = std::mem::take(&mut pgrads.values[slot.bias]);
                    let dx = conv2d_backward(
                        &pass.values[wiring[0]],
                        &self.params[slot.weight].data,
                        layer.out_channels,
                        layer.kernel,
                        layer.stride,
                        &g,
                        &mut dw,
                        &mut db,
                        wiring[0] != 0,
                    );
                    pgrads.values[slot.weight] = dw;
                    pgrads.values[slot.bias] = db;
                    if let Some(dx) = dx {
                        accumulate(&mut grads, wiring[0], dx);
                    }
                }
                LayerKind::UpsampleBilinear => {
                    let src = &pass.values[wiring[0]];
                    accumulate(&mut grads, wiring[0], resize_bilinear_backward(&g, src.h, src.w));
                }
                LayerKind::Concat => {
                    let channels: Vec<usize> = wiring.iter().map(|&id| pass.values[id].c).collect();
                    for (&id, part) in wiring.iter().zip(split_channels(&g, &channels)) {
                        accumulate(&mut grads, id, part);
                    }
                }
                LayerKind::SigmoidScaled => {
                    let dx = scaled_sigmoid_backward(&g, &pass.values[node], self.sigmoid_scale());
                    accumulate(&mut grads, wiring[0], dx);
                }
            }
        }
        pgrads
    }
}

/// Ground truth for one sample as inverse depth at each prediction scale;
/// `NaN` marks pixels without a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct GtPyramid {
    pub levels: [DepthMap; SCALES],
}

impl GtPyramid {
    pub fn new(gt: &DepthMap) -> Self {
        Self {
            levels: [0, 1, 2, 3].map(|s| downsample_gt(gt, s)),
        }
    }
}

/// `2^s × 2^s` block mean of the valid inverse depths; blocks without any
/// valid pixel are invalid. Partial blocks at the border are averaged over
/// the pixels they cover.
pub fn downsample_gt(gt: &DepthMap, scale: usize) -> DepthMap {
    let f = 1usize << scale;
    let (w, h) = (gt.width().div_ceil(f), gt.height().div_ceil(f));
    DepthMap::from_fn(w, h, |bx, by| {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in by * f..((by + 1) * f).min(gt.height()) {
            for x in bx * f..((bx + 1) * f).min(gt.width()) {
                if let Some(d) = gt.get(x, y) {
                    sum += 1.0 / d;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| n as f64 / sum)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// Mean absolute inverse-depth error per scale (0 where nothing is valid).
    pub per_scale: [f64; SCALES],
    /// Derivatives of `value` with respect to each head.
    pub grads: [Tensor; SCALES],
}

/// Sum over scales of the mean absolute inverse-depth error on valid
/// ground-truth pixels, pooled over the batch.
pub fn multiscale_loss(pred: &MultiScalePrediction, gt: &[GtPyramid]) -> Result<LossOutput> {
    if gt.len() != pred.batch_size() {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth maps for a batch of {}",
            gt.len(),
            pred.batch_size()
        )));
    }
    let mut per_scale = [0.0; SCALES];
    let mut grads = pred.maps.clone().map(|mut t| {
        t.data.fill(0.0);
        t
    });
    for s in 0..SCALES {
        let t = &pred.maps[s];
        let mut sum = 0.0;
        let mut count = 0usize;
        for (i, g) in gt.iter().enumerate() {
            let level = &g.levels[s];
            if level.width() != t.w || level.height() != t.h {
                return Err(Error::ShapeMismatch(format!(
                    "scale {s}: prediction {}x{}, ground truth {}x{}",
                    t.w,
                    t.h,
                    level.width(),
                    level.height()
                )));
            }
            for (p, &xi) in t.channel(i, 0).iter().enumerate() {
                if let Some(d) = level.at_index(p) {
                    sum += (xi - 1.0 / d).abs();
                    count += 1;
                }
            }
        }
        if count == 0 {
            continue;
        }
        per_scale[s] = sum / count as f64;
        let inv = 1.0 / count as f64;
        for (i, g) in gt.iter().enumerate() {
            let level = &g.levels[s];
            let pred_ch = t.channel(i, 0);
            for (p, gv) in grads[s].channel_mut(i, 0).iter_mut().enumerate() {
                if let Some(d) = level.at_index(p) {
                    let r = pred_ch[p] - 1.0 / d;
                    *gv = if r > 0.0 {
                        inv
                    } else if r < 0.0 {
                        -inv
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    Ok(LossOutput {
        value: per_scale.iter().sum(),
        per_scale,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthnet::graph::{build_network, WidthScale};

    fn pred_from(levels: [Vec<f64>; 4], dims: [(usize, usize); 4]) -> MultiScalePrediction {
        let mut it = levels.into_iter().zip(dims);
        MultiScalePrediction {
            maps: std::array::from_fn(|_| {
                let (v, (w, h)) = it.next().unwrap();
                Tensor::from_data(1, 1, h, w, v).unwrap()
            }),
        }
    }

    #[test]
    fn downsample_block_mean_in_inverse_depth() {
        // Inverse depths (1, 1, 3, 3) → mean 2 → depth 0.5.
        let gt = DepthMap::from_values(2, 2, vec![1.0, 1.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let d = downsample_gt(&gt, 1);
        assert_eq!((d.width(), d.height()), (1, 1));
        assert!((d.get(0, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn downsample_single_valid_and_empty_blocks() {
        let gt = DepthMap::from_values(4, 2, vec![f64::NAN, 2.5, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN])
            .unwrap();
        let d = downsample_gt(&gt, 1);
        assert_eq!(d.get(0, 0), Some(2.5));
        assert_eq!(d.get(1, 0), None);
    }

    #[test]
    fn downsample_uniform_is_constant() {
        let gt = DepthMap::uniform(16, 8, 1.7);
        for s in 0..4 {
            let d = downsample_gt(&gt, s);
            assert!(d.depths().iter().all(|&v| (v - 1.7).abs() < 1e-12));
        }
    }

    #[test]
    fn loss_cases() {
        let dims = [(4, 4), (2, 2), (1, 1), (1, 1)];
        let gt = DepthMap::uniform(4, 4, 2.0);
        let pyr = GtPyramid {
            levels: [
                gt.clone(),
                DepthMap::uniform(2, 2, 2.0),
                DepthMap::uniform(1, 1, 2.0),
                DepthMap::uniform(1, 1, 2.0),
            ],
        };
        let exact = pred_from([vec![0.5; 16], vec![0.5; 4], vec![0.5], vec![0.5]], dims);
        assert_eq!(multiscale_loss(&exact, &[pyr.clone()]).unwrap().value, 0.0);

        // A single valid pixel at one scale: |0.5 - 1/1| = 0.5.
        let mut one = GtPyramid {
            levels: [
                DepthMap::invalid(4, 4),
                DepthMap::invalid(2, 2),
                DepthMap::uniform(1, 1, 1.0),
                DepthMap::invalid(1, 1),
            ],
        };
        let out = multiscale_loss(&exact, &[one.clone()]).unwrap();
        assert_eq!(out.value, 0.5);
        assert_eq!(out.per_scale, [0.0, 0.0, 0.5, 0.0]);

        one.levels[2] = DepthMap::invalid(1, 1);
        let none = multiscale_loss(&exact, &[one]).unwrap();
        assert_eq!(none.value, 0.0);
        assert!(none.grads.iter().all(|t| t.data.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn zero_head_gives_half_scale() {
        let mut net = build_network(4, WidthScale::new(1, 8).unwrap(), 2.0).unwrap();
        for name in ["disp0.weight", "disp0.bias"] {
            net.param_mut(name).unwrap().data.fill(0.0);
        }
        let input = Tensor::from_data(1, 7, 16, 16, (0..7 * 256).map(|i| (i % 13) as f64 / 13.0).collect()).unwrap();
        let pred = net.predict(&input).unwrap();
        assert!(pred.maps[0].data.iter().all(|&v| v == 1.0));
        assert!(pred.maps[1].data.iter().all(|&v| v > 0.0 && v < 2.0));
    }

    #[test]
    fn forward_shapes_and_errors() {
        let net = build_network(4, WidthScale::new(1, 8).unwrap(), 2.0).unwrap();
        let input = Tensor::zeros(2, 7, 48, 64);
        let pred = net.forward(&input, Mode::Train).unwrap().prediction(&net);
        let dims: Vec<_> = pred.maps.iter().map(|t| (t.n, t.h, t.w)).collect();
        assert_eq!(dims, vec![(2, 48, 64), (2, 24, 32), (2, 12, 16), (2, 6, 8)]);
        assert!(net.forward(&Tensor::zeros(1, 7, 100, 100), Mode::Eval).is_err());
        assert!(net.forward(&Tensor::zeros(1, 6, 16, 16), Mode::Eval).is_err());
    }
}
