//! Central finite-difference verification of the analytic gradients.
//!
//! The error of one instance is the norm-wise relative error
//! `‖g_analytic − g_fd‖₂ / max(‖g_analytic‖₂, ‖g_fd‖₂)`. MDCA instances whose
//! class gaps sit within [`MDCA_KINK_MARGIN`] of zero, or change sign under the
//! ±step perturbation, are skipped; so are MLP instances with a hidden
//! pre-activation near the ReLU kink.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{Architecture, ModelParams};
use crate::error::Result;
use crate::losses::{mdca_class_gaps, LossSpec};
use crate::numerics::{LabelVector, LogitBatch, Matrix};
use crate::rng::RngSeed;

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_REL_TOLERANCE: f64 = 1e-5;
pub const MDCA_KINK_MARGIN: f64 = 1e-7;
const RELU_KINK_MARGIN: f64 = 1e-4;
const LOGIT_RANGE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub seed: RngSeed,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            k_min: 2,
            k_max: 6,
            n_min: 1,
            n_max: 32,
            seed: RngSeed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstTrial {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: String,
    pub differentiable: bool,
    pub trials: usize,
    pub checked: usize,
    /// Instances excluded at non-differentiable points.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: Option<WorstTrial>,
    pub passed: bool,
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        return 0.0;
    }
    norm(&diff) / scale
}

fn random_instance(seed: RngSeed, n: usize, k: usize) -> (LogitBatch, LabelVector) {
    let mut rng = seed.rng();
    let values: Vec<f64> = (0..n * k)
        .map(|_| rng.random_range(-LOGIT_RANGE..LOGIT_RANGE))
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    (
        LogitBatch::new(Matrix::from_vec(n, k, values).expect("sized to fit")).expect("finite by construction"),
        LabelVector::new(labels, k).expect("drawn in range"),
    )
}

fn uses_mdca(spec: &LossSpec) -> bool {
    match spec {
        LossSpec::Mdca => true,
        LossSpec::Composite { weights, .. } => weights.beta() != 0.0,
        _ => false,
    }
}

fn gap_signs(logits: &LogitBatch, labels: &LabelVector) -> Result<Option<Vec<bool>>> {
    let gaps = mdca_class_gaps(logits, labels)?;
    if gaps.iter().any(|g| g.abs() < MDCA_KINK_MARGIN) {
        return Ok(None);
    }
    Ok(Some(gaps.iter().map(|&g| g > 0.0).collect()))
}

fn perturbed(logits: &LogitBatch, idx: usize, delta: f64) -> LogitBatch {
    let mut m = logits.values().clone();
    m.as_mut_slice()[idx] += delta;
    LogitBatch::new(m).expect("small perturbation keeps logits finite")
}

/// Relative error for one logit instance, or `None` if it straddles an MDCA kink.
fn check_logit_instance(spec: &LossSpec, logits: &LogitBatch, labels: &LabelVector) -> Result<Option<f64>> {
    let analytic = spec.evaluate(logits, labels)?.grad;
    let base_signs = if uses_mdca(spec) {
        match gap_signs(logits, labels)? {
            Some(s) => Some(s),
            None => return Ok(None),
        }
    } else {
        None
    };
    let mut numeric = vec![0.0; analytic.as_slice().len()];
    for (idx, slot) in numeric.iter_mut().enumerate() {
        let plus = perturbed(logits, idx, FD_STEP);
        let minus = perturbed(logits, idx, -FD_STEP);
        if let Some(signs) = &base_signs {
            if gap_signs(&plus, labels)?.as_ref() != Some(signs) || gap_signs(&minus, labels)?.as_ref() != Some(signs) {
                return Ok(None);
            }
        }
        let f_plus = spec.evaluate(&plus, labels)?.value;
        let f_minus = spec.evaluate(&minus, labels)?.value;
        *slot = (f_plus - f_minus) / (2.0 * FD_STEP);
    }
    Ok(Some(rel_error(analytic.as_slice(), &numeric)))
}

fn summarize(
    name: String,
    differentiable: bool,
    trials: usize,
    results: Vec<(WorstTrial, Option<f64>)>,
) -> GradCheckReport {
    let mut checked = 0;
    let mut max_rel_error = 0.0;
    let mut worst = None;
    for (trial, err) in results {
        if let Some(e) = err {
            checked += 1;
            if worst.is_none() || e > max_rel_error {
                max_rel_error = e;
                worst = Some(trial);
            }
        }
    }
    GradCheckReport {
        loss: name,
        differentiable,
        trials,
        checked,
        skipped: trials - checked,
        max_rel_error,
        worst,
        passed: max_rel_error < GRAD_REL_TOLERANCE && (checked > 0 || !differentiable),
    }
}

/// Compare analytic logit gradients of `spec` against central differences.
///
/// Losses that are not differentiable (hard ordinal mode) are reported as
/// such; for them the check asserts that the returned gradient is exactly
/// zero, and `passed` reflects that.
pub fn grad_check(spec: &LossSpec, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut results = Vec::with_capacity(config.trials);
    let mut all_zero = true;
    for trial in 0..config.trials {
        let seed = config.seed.derive(trial as u64);
        let mut rng = seed.derive(u64::MAX).rng();
        let n = rng.random_range(config.n_min..=config.n_max);
        let k = rng.random_range(config.k_min..=config.k_max);
        let (logits, labels) = random_instance(seed, n, k);
        let id = WorstTrial {
            trial,
            seed: seed.value(),
            n,
            k,
        };
        if spec.is_differentiable() {
            results.push((id, check_logit_instance(spec, &logits, &labels)?));
        } else {
            let grad = spec.evaluate(&logits, &labels)?.grad;
            all_zero &= grad.as_slice().iter().all(|&g| g == 0.0);
        }
    }
    let mut report = summarize(spec.name(), spec.is_differentiable(), config.trials, results);
    if !spec.is_differentiable() {
        report.passed = all_zero;
    }
    Ok(report)
}

/// Compare the parameter gradient obtained by backpropagating `spec` through
/// the model against central differences on the parameters.
pub fn param_grad_check(
    spec: &LossSpec,
    architecture: Architecture,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut results = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let seed = config.seed.derive(trial as u64);
        let mut rng = seed.derive(u64::MAX).rng();
        let n = rng.random_range(config.n_min..=config.n_max);
        let k = rng.random_range(config.k_min..=config.k_max);
        let d = rng.random_range(1..=5usize);
        let hidden = rng.random_range(2..=6usize);
        let features =
            Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).expect("sized to fit");
        let labels = LabelVector::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).expect("drawn in range");
        let mut params = ModelParams::init(architecture, d, hidden, k, seed.derive(1))?;
        for b in params.theta_mut().iter_mut() {
            // jitter every parameter, biases included, so hidden units sit away from the ReLU kink
            *b += rng.random_range(-0.5..0.5);
        }
        let id = WorstTrial {
            trial,
            seed: seed.value(),
            n,
            k,
        };

        let near_kink = params
            .pre_activations(&features)
            .is_some_and(|pre| pre.as_slice().iter().any(|z| z.abs() < RELU_KINK_MARGIN));
        let mdca_signs = if uses_mdca(spec) {
            let logits = super::model::forward(&params, &features)?;
            gap_signs(&logits, &labels)?
        } else {
            Some(Vec::new())
        };
        if near_kink || mdca_signs.is_none() {
            results.push((id, None));
            continue;
        }

        let (logits, cache) = params.forward_cached(&features)?;
        let out = spec.evaluate(&logits, &labels)?;
        let analytic = params.backward(&features, &cache, &out.grad);

        let loss_at = |p: &ModelParams| -> Result<(f64, Option<Vec<bool>>)> {
            let logits = super::model::forward(p, &features)?;
            let signs = if uses_mdca(spec) {
                gap_signs(&logits, &labels)?
            } else {
                Some(Vec::new())
            };
            Ok((spec.evaluate(&logits, &labels)?.value, signs))
        };
        let mut numeric = vec![0.0; analytic.len()];
        let mut straddles = false;
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.theta_mut()[idx] += FD_STEP;
            let mut minus = params.clone();
            minus.theta_mut()[idx] -= FD_STEP;
            let (f_plus, s_plus) = loss_at(&plus)?;
            let (f_minus, s_minus) = loss_at(&minus)?;
            if s_plus != mdca_signs || s_minus != mdca_signs {
                straddles = true;
                break;
            }
            *slot = (f_plus - f_minus) / (2.0 * FD_STEP);
        }
        results.push((id, (!straddles).then(|| rel_error(&analytic, &numeric))));
    }
    let name = format!(
        "{} via {}",
        spec.name(),
        match architecture {
            Architecture::Linear => "linear",
            Architecture::Mlp1 => "mlp1",
        }
    );
    Ok(summarize(name, true, config.trials, results))
}
