//! Adam optimization on small in-memory datasets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::NetworkGraph;
use super::model::{multiscale_loss, Gradients, GtPyramid, Mode};
use super::tensor::Tensor;
use crate::depth_map::DepthMap;
use crate::error::{Error, Result};

/// One network input (`[1, N_d + 3, H, W]`) and its ground truth.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: Tensor,
    pub gt: GtPyramid,
}

impl TrainSample {
    pub fn new(input: Tensor, gt: &DepthMap) -> Result<Self> {
        if input.n != 1 || input.w != gt.width() || input.h != gt.height() {
            return Err(Error::ShapeMismatch(format!(
                "input {}x{}x{} does not match ground truth {}x{}",
                input.n,
                input.w,
                input.h,
                gt.width(),
                gt.height()
            )));
        }
        Ok(Self {
            input,
            gt: GtPyramid::new(gt),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiply the learning rate by `lr_decay_factor` every this many
    /// iterations; `None` keeps it fixed.
    pub lr_decay_every: Option<usize>,
    pub lr_decay_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 1,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay_every: None,
            lr_decay_factor: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.lr_decay_every == Some(0) {
            return bad("lr_decay_every must be at least 1");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        match self.lr_decay_every {
            Some(k) => self.learning_rate * self.lr_decay_factor.powi((iteration / k) as i32),
            None => self.learning_rate,
        }
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(net: &NetworkGraph, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step(&mut self, net: &mut NetworkGraph, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, p) in net.params_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads.values[k]);
            for j in 0..p.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub learning_rate: f64,
    pub loss: f64,
    /// Full-resolution mean absolute inverse-depth error of the batch.
    pub l1_inv: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<IterationRecord>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

fn stack(samples: &[&TrainSample]) -> Tensor {
    let first = &samples[0].input;
    let mut t = Tensor::zeros(samples.len(), first.c, first.h, first.w);
    for (i, s) in samples.iter().enumerate() {
        t.sample_mut(i).copy_from_slice(s.input.sample(0));
    }
    t
}

/// Runs `cfg.iterations` Adam steps over mini-batches drawn from a seeded
/// per-epoch shuffle of `data`.
pub fn train_toy(
    net: &mut NetworkGraph,
    data: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut order: Vec<usize> = Vec::new();
    let mut log = TrainingLog::default();
    for iteration in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            batch.push(&data[order.pop().expect("refilled")]);
        }
        let input = stack(&batch);
        let gt: Vec<GtPyramid> = batch.iter().map(|s| s.gt.clone()).collect();
        let pass = net.forward(&input, Mode::Train)?;
        let loss = multiscale_loss(&pass.prediction(net), &gt)?;
        let grads = net.backward(&pass, &loss.grads);
        net.update_running_stats(&pass);
        let lr = cfg.learning_rate_at(iteration);
        adam.step(net, &grads, lr);
        log.records.push(IterationRecord {
            iteration,
            learning_rate: lr,
            loss: loss.value,
            l1_inv: loss.per_scale[0],
        });
    }
    Ok(log)
}

/// Mean full-resolution absolute inverse-depth error over valid pixels of
/// every sample.
pub fn mean_l1_inv(net: &NetworkGraph, data: &[TrainSample], mode: Mode) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in data {
        let pred = net.forward(&s.input, mode)?.prediction(net);
        for (p, &xi) in pred.inverse_depth(0, 0).iter().enumerate() {
            if let Some(d) = s.gt.levels[0].at_index(p) {
                sum += (xi - 1.0 / d).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(sum / count as f64)
}
