//! Binned calibration metrics.
//!
//! Top-1 confidences are grouped into `B` equal-width bins
//! `[b/B, (b+1)/B)`, the last bin closed at 1.0. Per bin we compare the mean
//! confidence with the fraction of correct top-1 predictions:
//!
//! * ECE is the count-weighted mean of `|accuracy - confidence|` over bins.
//! * MCE is the largest such gap over occupied bins.
//!
//! Empty bins carry no statistics, add nothing to ECE and are skipped by MCE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_pair, top1, LabelVector, ProbBatch};

pub const DEFAULT_NUM_BINS: usize = 10;

/// Floor applied to the true-class probability before taking its log.
pub const NLL_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningConfig {
    num_bins: usize,
}

impl BinningConfig {
    pub fn new(num_bins: usize) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::Parameter("number of bins must be at least 1".into()));
        }
        Ok(Self { num_bins })
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let b = self.num_bins as f64;
        (bin as f64 / b, (bin + 1) as f64 / b)
    }
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            num_bins: DEFAULT_NUM_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` when the bin is empty.
    pub avg_confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub mce: f64,
    pub accuracy: f64,
    pub nll: f64,
    pub n: usize,
    pub k: usize,
    pub num_bins: usize,
    pub bins: Vec<ReliabilityBin>,
}

impl CalibrationReport {
    /// ECE and MCE recomputed from the stored bin rows.
    pub fn recompute_from_bins(&self) -> (f64, f64) {
        (ece_from_bins(&self.bins, self.n), mce_from_bins(&self.bins))
    }

    pub fn mean_confidence(&self) -> f64 {
        self.bins
            .iter()
            .filter_map(|b| b.avg_confidence.map(|c| c * b.count as f64))
            .sum::<f64>()
            / self.n as f64
    }
}

/// Bin index `min(floor(conf·B), B-1)` for every confidence.
pub fn assign_bins(confidences: &[f64], config: &BinningConfig) -> Result<Vec<usize>> {
    let b = config.num_bins;
    confidences
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Input(format!(
                    "confidence {c} at position {i} is outside [0, 1]"
                )));
            }
            Ok(((c * b as f64).floor() as usize).min(b - 1))
        })
        .collect()
}

pub fn reliability_bins(
    probs: &ProbBatch,
    labels: &LabelVector,
    config: &BinningConfig,
) -> Result<Vec<ReliabilityBin>> {
    check_pair(probs.n(), probs.k(), labels)?;
    let (preds, confs) = top1(probs);
    let idx = assign_bins(&confs, config)?;

    let nb = config.num_bins;
    let mut counts = vec![0usize; nb];
    let mut conf_sums = vec![0.0; nb];
    let mut correct = vec![0usize; nb];
    for (i, &b) in idx.iter().enumerate() {
        counts[b] += 1;
        conf_sums[b] += confs[i];
        if preds.get(i) == labels.get(i) {
            correct[b] += 1;
        }
    }

    Ok((0..nb)
        .map(|b| {
            let (lo, hi) = config.edges(b);
            let count = counts[b];
            if count == 0 {
                return ReliabilityBin {
                    lo,
                    hi,
                    count,
                    avg_confidence: None,
                    accuracy: None,
                    gap: None,
                };
            }
            let conf = conf_sums[b] / count as f64;
            let acc = correct[b] as f64 / count as f64;
            ReliabilityBin {
                lo,
                hi,
                count,
                avg_confidence: Some(conf),
                accuracy: Some(acc),
                gap: Some((acc - conf).abs()),
            }
        })
        .collect())
}

pub fn ece_from_bins(bins: &[ReliabilityBin], n: usize) -> f64 {
    bins.iter()
        .filter_map(|b| b.gap.map(|g| (b.count as f64 / n as f64) * g))
        .sum()
}

pub fn mce_from_bins(bins: &[ReliabilityBin]) -> f64 {
    bins.iter().filter_map(|b| b.gap).fold(0.0, f64::max)
}

pub fn ece(probs: &ProbBatch, labels: &LabelVector, config: &BinningConfig) -> Result<f64> {
    Ok(ece_from_bins(&reliability_bins(probs, labels, config)?, probs.n()))
}

pub fn mce(probs: &ProbBatch, labels: &LabelVector, config: &BinningConfig) -> Result<f64> {
    Ok(mce_from_bins(&reliability_bins(probs, labels, config)?))
}

/// Fraction of rows whose top-1 prediction equals the label.
pub fn accuracy(probs: &ProbBatch, labels: &LabelVector) -> Result<f64> {
    check_pair(probs.n(), probs.k(), labels)?;
    let (preds, _) = top1(probs);
    let hits = preds.iter().zip(labels.iter()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / probs.n() as f64)
}

/// Mean negative log of the true-class probability, floored at [`NLL_PROB_FLOOR`].
pub fn nll(probs: &ProbBatch, labels: &LabelVector) -> Result<f64> {
    check_pair(probs.n(), probs.k(), labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, y)| -probs.row(i)[y].max(NLL_PROB_FLOOR).ln())
        .sum();
    Ok(total / probs.n() as f64)
}

pub fn full_report(probs: &ProbBatch, labels: &LabelVector, config: &BinningConfig) -> Result<CalibrationReport> {
    let bins = reliability_bins(probs, labels, config)?;
    let n = probs.n();
    Ok(CalibrationReport {
        ece: ece_from_bins(&bins, n),
        mce: mce_from_bins(&bins),
        accuracy: accuracy(probs, labels)?,
        nll: nll(probs, labels)?,
        n,
        k: probs.k(),
        num_bins: config.num_bins,
        bins,
    })
}
