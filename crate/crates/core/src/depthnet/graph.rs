//! The encoder-decoder layer graph and its parameters.

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::conv_out_len;
use crate::error::{Error, Result};

/// Input side lengths must be multiples of this.
pub const SIZE_MULTIPLE: usize = 16;

/// Name of the implicit network input node.
pub const INPUT: &str = "input";

/// Names of the four prediction heads, finest first.
pub const OUTPUT_NAMES: [&str; 4] = ["disp0_out", "disp1_out", "disp2_out", "disp3_out"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    UpsampleBilinear,
    Concat,
    SigmoidScaled,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::UpsampleBilinear => "upsample-bilinear",
            LayerKind::Concat => "concat",
            LayerKind::SigmoidScaled => "sigmoid-scaled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Square kernel size; 0 for non-convolutions.
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub inputs: Vec<String>,
    /// Upsampling target: the layer whose spatial size is matched.
    pub size_like: Option<String>,
    pub has_batchnorm: bool,
    pub has_relu: bool,
}

/// Rational channel multiplier: `1/1` is full width, `1/8` a toy net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthScale {
    pub num: u32,
    pub den: u32,
}

impl WidthScale {
    pub const FULL: WidthScale = WidthScale { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidConfig(format!(
                "channel width scale {num}/{den} must be positive"
            )));
        }
        Ok(Self { num, den })
    }

    /// Scaled channel count, rounded half up, at least 1.
    pub fn apply(&self, channels: usize) -> usize {
        let (n, d) = (self.num as usize, self.den as usize);
        ((2 * channels * n + d) / (2 * d)).max(1)
    }
}

impl fmt::Display for WidthScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// A named parameter or buffer array.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name,
            shape,
            data: vec![0.0; len],
        }
    }

    fn filled(name: String, shape: Vec<usize>, value: f64) -> Self {
        let mut t = Self::zeros(name, shape);
        t.data.fill(value);
        t
    }
}

/// Indices of one conv layer's arrays within the parameter and buffer lists.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvSlots {
    pub weight: usize,
    pub bias: usize,
    pub bn: Option<BnSlots>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BnSlots {
    pub gamma: usize,
    pub beta: usize,
    pub running_mean: usize,
    pub running_var: usize,
}

#[derive(Debug, Clone)]
pub struct NetworkGraph {
    pub(crate) layers: Vec<LayerSpec>,
    /// Per layer, the producing node of each input (0 = network input,
    /// `i + 1` = layer `i`).
    pub(crate) wiring: Vec<Vec<usize>>,
    pub(crate) size_like: Vec<Option<usize>>,
    pub(crate) slots: Vec<Option<ConvSlots>>,
    pub(crate) params: Vec<NamedTensor>,
    pub(crate) buffers: Vec<NamedTensor>,
    /// Node ids of the four heads, finest first.
    pub(crate) outputs: [usize; 4],
    n_depth_samples: usize,
    width_scale: WidthScale,
    sigmoid_scale: f64,
}

struct Builder {
    layers: Vec<LayerSpec>,
    scale: WidthScale,
}

impl Builder {
    fn channels_of(&self, name: &str) -> usize {
        self.layers
            .iter()
            .find(|l| l.name == name)
            .map(|l| l.out_channels)
            .expect("inputs are declared before use")
    }

    fn conv(&mut self, name: &str, k: usize, stride: usize, input: &str, out: usize, head: bool) {
        let in_channels = self.channels_of(input);
        self.push_conv(name, k, stride, in_channels, input, out, head);
    }

    #[allow(clippy::too_many_arguments)]
    fn push_conv(
        &mut self,
        name: &str,
        k: usize,
        stride: usize,
        in_channels: usize,
        input: &str,
        out: usize,
        head: bool,
    ) {
        let out_channels = if head { 1 } else { self.scale.apply(out) };
        self.layers.push(LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv,
            kernel: k,
            stride,
            in_channels,
            out_channels,
            inputs: vec![input.into()],
            size_like: None,
            has_batchnorm: !head,
            has_relu: !head,
        });
    }

    fn upsample(&mut self, name: &str, input: &str, like: &str) {
        let c = self.channels_of(input);
        self.layers.push(LayerSpec {
            name: name.into(),
            kind: LayerKind::UpsampleBilinear,
            kernel: 0,
            stride: 1,
            in_channels: c,
            out_channels: c,
            inputs: vec![input.into()],
            size_like: Some(like.into()),
            has_batchnorm: false,
            has_relu: false,
        });
    }

    fn concat(&mut self, name: &str, inputs: &[&str]) {
        let c = inputs.iter().map(|i| self.channels_of(i)).sum();
        self.layers.push(LayerSpec {
            name: name.into(),
            kind: LayerKind::Concat,
            kernel: 0,
            stride: 1,
            in_channels: c,
            out_channels: c,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            size_like: None,
            has_batchnorm: false,
            has_relu: false,
        });
    }

    fn sigmoid(&mut self, name: &str, input: &str) {
        self.layers.push(LayerSpec {
            name: name.into(),
            kind: LayerKind::SigmoidScaled,
            kernel: 0,
            stride: 1,
            in_channels: 1,
            out_channels: 1,
            inputs: vec![input.into()],
            size_like: None,
            has_batchnorm: false,
            has_relu: false,
        });
    }

    /// A disparity head: conv, scaled sigmoid, and its upsampled copy.
    fn head(&mut self, level: usize, input: &str, up_like: Option<&str>) {
        let conv = format!("disp{level}");
        let out = format!("disp{level}_out");
        self.conv(&conv, 3, 1, input, 1, true);
        self.sigmoid(&out, &conv);
        if let Some(like) = up_like {
            self.upsample(&format!("disp{level}_up"), &out, like);
        }
    }
}

fn table_layers(n_depth_samples: usize, scale: WidthScale) -> Vec<LayerSpec> {
    let mut b = Builder {
        layers: Vec::new(),
        scale,
    };
    // Encoder.
    b.push_conv("conv1", 7, 1, n_depth_samples + 3, INPUT, 128, false);
    b.conv("conv1_1", 7, 2, "conv1", 128, false);
    b.conv("conv2", 5, 1, "conv1_1", 256, false);
    b.conv("conv2_1", 5, 2, "conv2", 256, false);
    b.conv("conv3", 3, 1, "conv2_1", 512, false);
    b.conv("conv3_1", 3, 2, "conv3", 512, false);
    b.conv("conv4", 3, 1, "conv3_1", 512, false);
    b.conv("conv4_1", 3, 2, "conv4", 512, false);
    b.conv("conv5", 3, 1, "conv4_1", 512, false);
    b.conv("conv5_1", 3, 2, "conv5", 512, false);
    // Decoder, 1/16 resolution.
    b.upsample("conv5_up", "conv5_1", "conv4_1");
    b.conv("upconv4", 3, 1, "conv5_up", 512, false);
    b.concat("iconv4_in", &["upconv4", "conv4_1"]);
    b.conv("iconv4", 3, 1, "iconv4_in", 512, false);
    // 1/8.
    b.upsample("iconv4_up", "iconv4", "conv3_1");
    b.conv("upconv3", 3, 1, "iconv4_up", 512, false);
    b.concat("iconv3_in", &["upconv3", "conv3_1"]);
    b.conv("iconv3", 3, 1, "iconv3_in", 512, false);
    b.head(3, "iconv3", Some("conv2_1"));
    // 1/4.
    b.upsample("iconv3_up", "iconv3", "conv2_1");
    b.conv("upconv2", 3, 1, "iconv3_up", 256, false);
    b.concat("iconv2_in", &["upconv2", "conv2_1", "disp3_up"]);
    b.conv("iconv2", 3, 1, "iconv2_in", 256, false);
    b.head(2, "iconv2", Some("conv1_1"));
    // 1/2.
    b.upsample("iconv2_up", "iconv2", "conv1_1");
    b.conv("upconv1", 3, 1, "iconv2_up", 128, false);
    b.concat("iconv1_in", &["upconv1", "conv1_1", "disp2_up"]);
    b.conv("iconv1", 3, 1, "iconv1_in", 128, false);
    b.head(1, "iconv1", Some("conv1"));
    // Full resolution.
    b.upsample("iconv1_up", "iconv1", "conv1");
    b.conv("upconv0", 3, 1, "iconv1_up", 64, false);
    b.concat("iconv0_in", &["upconv0", "disp1_up"]);
    b.conv("iconv0", 3, 1, "iconv0_in", 64, false);
    b.head(0, "iconv0", None);
    b.layers
}

/// Default seed for parameter initialization.
pub const DEFAULT_INIT_SEED: u64 = 0;

/// Builds the Table 1 graph for `n_depth_samples` cost channels, with
/// channel widths multiplied by `width_scale` and heads bounded by
/// `sigmoid_scale`.
pub fn build_network(
    n_depth_samples: usize,
    width_scale: WidthScale,
    sigmoid_scale: f64,
) -> Result<NetworkGraph> {
    if n_depth_samples == 0 {
        return Err(Error::InvalidConfig("n_depth_samples must be at least 1".into()));
    }
    let width_scale = WidthScale::new(width_scale.num, width_scale.den)?;
    if !(sigmoid_scale.is_finite() && sigmoid_scale > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigmoid_scale must be positive, got {sigmoid_scale}"
        )));
    }
    let layers = table_layers(n_depth_samples, width_scale);

    let mut ids: HashMap<&str, usize> = HashMap::new();
    ids.insert(INPUT, 0);
    let mut wiring = Vec::with_capacity(layers.len());
    let mut size_like = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let resolve = |n: &str| {
            ids.get(n).copied().ok_or_else(|| {
                Error::InvalidConfig(format!("layer `{}` reads undeclared `{n}`", l.name))
            })
        };
        wiring.push(l.inputs.iter().map(|n| resolve(n)).collect::<Result<Vec<_>>>()?);
        size_like.push(l.size_like.as_deref().map(resolve).transpose()?);
        if ids.insert(&l.name, i + 1).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate layer `{}`", l.name)));
        }
    }
    let outputs = OUTPUT_NAMES.map(|n| ids[n]);

    let mut params = Vec::new();
    let mut buffers = Vec::new();
    let slots = layers
        .iter()
        .map(|l| {
            (l.kind == LayerKind::Conv).then(|| {
                let weight = params.len();
                params.push(NamedTensor::zeros(
                    format!("{}.weight", l.name),
                    vec![l.out_channels, l.in_channels, l.kernel, l.kernel],
                ));
                params.push(NamedTensor::zeros(format!("{}.bias", l.name), vec![l.out_channels]));
                let bn = l.has_batchnorm.then(|| {
                    let gamma = params.len();
                    let c = vec![l.out_channels];
                    params.push(NamedTensor::filled(format!("{}.bn.gamma", l.name), c.clone(), 1.0));
                    params.push(NamedTensor::zeros(format!("{}.bn.beta", l.name), c.clone()));
                    let running_mean = buffers.len();
                    buffers.push(NamedTensor::zeros(format!("{}.bn.running_mean", l.name), c.clone()));
                    buffers.push(NamedTensor::filled(format!("{}.bn.running_var", l.name), c, 1.0));
                    BnSlots {
                        gamma,
                        beta: gamma + 1,
                        running_mean,
                        running_var: running_mean + 1,
                    }
                });
                ConvSlots {
                    weight,
                    bias: weight + 1,
                    bn,
                }
            })
        })
        .collect();

    let mut net = NetworkGraph {
        layers,
        wiring,
        size_like,
        slots,
        params,
        buffers,
        outputs,
        n_depth_samples,
        width_scale,
        sigmoid_scale,
    };
    net.initialize(DEFAULT_INIT_SEED);
    Ok(net)
}

impl NetworkGraph {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn n_depth_samples(&self) -> usize {
        self.n_depth_samples
    }

    pub fn width_scale(&self) -> WidthScale {
        self.width_scale
    }

    pub fn sigmoid_scale(&self) -> f64 {
        self.sigmoid_scale
    }

    /// Channels the network expects: three image channels then the costs.
    pub fn input_channels(&self) -> usize {
        self.n_depth_samples + 3
    }

    pub fn params(&self) -> &[NamedTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[NamedTensor] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.buffers
    }

    pub fn param(&self, name: &str) -> Option<&NamedTensor> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut NamedTensor> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Trainable scalars: conv weights and biases plus batchnorm scale/shift.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Fan-in scaled normal weights, zero biases, unit batchnorm scale and
    /// fresh running statistics.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, slot) in self.layers.iter().zip(&self.slots) {
            let Some(slot) = slot else { continue };
            let fan_in = (l.in_channels * l.kernel * l.kernel) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
            for w in &mut self.params[slot.weight].data {
                *w = normal.sample(&mut rng);
            }
            self.params[slot.bias].data.fill(0.0);
            if let Some(bn) = slot.bn {
                self.params[bn.gamma].data.fill(1.0);
                self.params[bn.beta].data.fill(0.0);
                self.buffers[bn.running_mean].data.fill(0.0);
                self.buffers[bn.running_var].data.fill(1.0);
            }
        }
    }

    /// Rejects input sizes the graph cannot map back to `H/2^s` exactly.
    pub fn check_input_size(&self, height: usize, width: usize) -> Result<()> {
        if height == 0
            || width == 0
            || height % SIZE_MULTIPLE != 0
            || width % SIZE_MULTIPLE != 0
        {
            return Err(Error::ShapeMismatch(format!(
                "input {width}x{height} must have sides divisible by {SIZE_MULTIPLE}"
            )));
        }
        Ok(())
    }

    /// `(channels, height, width)` of every node (input first) for an input
    /// of the given size.
    pub fn node_shapes(&self, height: usize, width: usize) -> Result<Vec<(usize, usize, usize)>> {
        self.check_input_size(height, width)?;
        let mut shapes = vec![(self.input_channels(), height, width)];
        for (i, l) in self.layers.iter().enumerate() {
            let (_, h, w) = shapes[self.wiring[i][0]];
            let shape = match l.kind {
                LayerKind::Conv => (
                    l.out_channels,
                    conv_out_len(h, l.kernel, l.stride),
                    conv_out_len(w, l.kernel, l.stride),
                ),
                LayerKind::UpsampleBilinear => {
                    let (_, th, tw) = shapes[self.size_like[i].expect("upsample target")];
                    (l.out_channels, th, tw)
                }
                LayerKind::Concat | LayerKind::SigmoidScaled => (l.out_channels, h, w),
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// `(height, width)` of the four heads, finest first.
    pub fn output_shapes(&self, height: usize, width: usize) -> Result<[(usize, usize); 4]> {
        let shapes = self.node_shapes(height, width)?;
        Ok(self.outputs.map(|id| (shapes[id].1, shapes[id].2)))
    }
}
