//! Depth-map error measures: L1-rel, L1-inv, scale-invariant log error,
//! percentage of correct estimates and density.

use serde::{Deserialize, Serialize};

use crate::depth_map::DepthMap;
use crate::error::{Error, Result};

/// Relative error at or below this counts as a correct estimate.
pub const CORRECT_REL_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub l1_rel: f64,
    pub l1_inv: f64,
    pub sc_inv: f64,
    #[serde(rename = "cp_pct")]
    pub correct_pct: f64,
    pub density_pct: f64,
    #[serde(rename = "n")]
    pub n_evaluated: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct")
    }
}

/// Running sums for [`MetricsReport`]; lets several maps be pooled into one
/// report in a fixed order.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    n: usize,
    gt_valid: usize,
    sum_rel: f64,
    sum_inv: f64,
    correct: usize,
    // Welford state for the log ratio: exact for constant ratios.
    z_mean: f64,
    z_m2: f64,
}

impl MetricsAccumulator {
    pub fn add(&mut self, pred: &DepthMap, gt: &DepthMap) -> Result<()> {
        if pred.width() != gt.width() || pred.height() != gt.height() {
            return Err(Error::ResolutionMismatch {
                pred: (pred.width(), pred.height()),
                gt: (gt.width(), gt.height()),
            });
        }
        for i in 0..gt.len() {
            let Some(t) = gt.at_index(i) else { continue };
            self.gt_valid += 1;
            let Some(d) = pred.at_index(i) else { continue };
            self.n += 1;
            let rel = (d - t).abs() / t;
            self.sum_rel += rel;
            self.sum_inv += (1.0 / d - 1.0 / t).abs();
            if rel <= CORRECT_REL_THRESHOLD {
                self.correct += 1;
            }
            let z = d.ln() - t.ln();
            let delta = z - self.z_mean;
            self.z_mean += delta / self.n as f64;
            self.z_m2 += delta * (z - self.z_mean);
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.n == 0 {
            return Err(Error::EmptyOverlap);
        }
        let n = self.n as f64;
        Ok(MetricsReport {
            l1_rel: self.sum_rel / n,
            l1_inv: self.sum_inv / n,
            sc_inv: (self.z_m2 / n).max(0.0).sqrt(),
            correct_pct: 100.0 * self.correct as f64 / n,
            density_pct: 100.0 * self.n as f64 / self.gt_valid as f64,
            n_evaluated: self.n,
        })
    }
}

/// Scores `pred` on the pixels where both maps are valid; GT-valid pixels
/// without a prediction only lower the density.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::default();
    acc.add(pred, gt)?;
    acc.finish()
}
