//! Structured JSON documents emitted by every command.
//!
//! Field order follows struct declaration order, so two runs with the same
//! flags serialize byte-identically. No wall-clock data is recorded.

use ordcal_core::metrics::{CalibrationReport, ReliabilityBin};
use ordcal_core::temperature::TempFitResult;
use ordcal_core::trainer::{GradCheckReport, TrainResult};
use serde::{Deserialize, Serialize};

pub const TOOL: &str = "ordcal";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Common envelope: tool identity, the command, its seed, the echoed
/// configuration and the command-specific result.
#[derive(Debug, Serialize)]
pub struct Document<C, R> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: C,
    pub result: R,
}

impl<C: Serialize, R: Serialize> Document<C, R> {
    pub fn new(command: &'static str, seed: Option<u64>, config: C, result: R) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            seed,
            config,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents contain only finite numbers and strings");
        s.push('\n');
        s
    }
}

/// Calibration metrics of one set of predictions. ECE and MCE are stored as
/// fractions and, for reading against published tables, as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub ece: f64,
    pub mce: f64,
    pub ece_pct: f64,
    pub mce_pct: f64,
    pub accuracy: f64,
    pub nll: f64,
    pub num_bins: usize,
    pub n: usize,
    pub k: usize,
    pub bins: Vec<ReliabilityBin>,
}

impl From<&CalibrationReport> for MetricsDoc {
    fn from(r: &CalibrationReport) -> Self {
        Self {
            ece: r.ece,
            mce: r.mce,
            ece_pct: 100.0 * r.ece,
            mce_pct: 100.0 * r.mce,
            accuracy: r.accuracy,
            nll: r.nll,
            num_bins: r.num_bins,
            n: r.n,
            k: r.k,
            bins: r.bins.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureDoc {
    pub temperature: f64,
    pub nll_before: f64,
    pub nll_after: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The fit sharpens rather than softens: the model was under-confident.
    pub below_one: bool,
}

impl From<&TempFitResult> for TemperatureDoc {
    fn from(f: &TempFitResult) -> Self {
        Self {
            temperature: f.temperature.value(),
            nll_before: f.nll_before,
            nll_after: f.nll_after,
            iterations: f.iterations,
            converged: f.converged,
            below_one: f.temperature.value() < 1.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FitDoc {
    pub fit: TemperatureDoc,
    pub ece_before: f64,
    pub ece_after: f64,
    pub ece_before_pct: f64,
    pub ece_after_pct: f64,
    pub before: MetricsDoc,
    pub after: MetricsDoc,
}

#[derive(Debug, Serialize)]
pub struct TrainDoc {
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub num_params: usize,
    pub train_accuracy: f64,
    pub loss_curve: Vec<f64>,
    pub confidence_curve: Vec<f64>,
    pub temperature: Option<TemperatureDoc>,
    pub before_temperature: MetricsDoc,
    pub after_temperature: Option<MetricsDoc>,
}

impl TrainDoc {
    pub fn new(result: &TrainResult, sizes: (usize, usize, usize)) -> Self {
        Self {
            train_size: sizes.0,
            val_size: sizes.1,
            test_size: sizes.2,
            num_params: result.params.num_params(),
            train_accuracy: result.train_accuracy,
            loss_curve: result.loss_curve.clone(),
            confidence_curve: result.confidence_curve.clone(),
            temperature: result.temperature_fit.as_ref().map(TemperatureDoc::from),
            before_temperature: MetricsDoc::from(&result.report_before),
            after_temperature: result.report_after.as_ref().map(MetricsDoc::from),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AblationRowDoc {
    pub name: String,
    pub temperature: Option<f64>,
    pub report: MetricsDoc,
}

#[derive(Debug, Serialize)]
pub struct GradDoc {
    pub rel_tolerance: f64,
    pub fd_step: f64,
    pub losses: Vec<GradCheckReport>,
    pub parameters: Vec<GradCheckReport>,
    pub passed: bool,
}

/// One-line human summary with two-decimal percentages.
pub fn summary(label: &str, m: &MetricsDoc) -> String {
    format!(
        "{label}: ECE {:.2}%  MCE {:.2}%  accuracy {:.2}%  NLL {:.4}  (n={}, k={}, bins={})",
        m.ece_pct,
        m.mce_pct,
        100.0 * m.accuracy,
        m.nll,
        m.n,
        m.k,
        m.num_bins
    )
}

/// Reliability table: one row per bin, empty statistics left blank.
pub fn reliability_csv(bins: &[ReliabilityBin]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("bin_lo,bin_hi,count,avg_confidence,accuracy,gap\n");
    for b in bins {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.lo,
            b.hi,
            b.count,
            opt(b.avg_confidence),
            opt(b.accuracy),
            opt(b.gap)
        ));
    }
    out
}
