//! Classification losses with analytic gradients with respect to the logits.
//!
//! Every loss is a batch mean (MDCA is a batch statistic by construction) and
//! returns a [`LossValueGrad`] whose `grad` has the shape of the logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, check_pair, log_softmax_row, softmax_row, LabelVector, LogitBatch, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad: Matrix,
}

/// Mixing weights of the composite objective.
///
/// `alpha` scales cross entropy, `beta` MDCA and `gamma` the ordinal
/// class-index loss. The three must be non-negative and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, w) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Parameter(format!("{name} must be a finite value >= 0, got {w}")));
            }
        }
        let sum = alpha + beta + gamma;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Parameter(format!(
                "loss weights must sum to 1, got {alpha} + {beta} + {gamma} = {sum}"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            beta: 0.10,
            gamma: 0.05,
        }
    }
}

/// How the predicted class index enters the ordinal loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsMode {
    /// Expected class index under the softmax; differentiable.
    Soft,
    /// Arg-max class index; piecewise constant, zero gradient.
    Hard,
}

pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

/// Mean negative log-likelihood of the labelled class.
pub fn cross_entropy(logits: &LogitBatch, labels: &LabelVector) -> Result<LossValueGrad> {
    check_pair(logits.n(), logits.k(), labels)?;
    let (n, k) = (logits.n(), logits.k());
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, k);
    let mut logp = vec![0.0; k];
    let mut total = 0.0;
    for (i, y) in labels.iter().enumerate() {
        log_softmax_row(logits.row(i), &mut logp);
        total -= logp[y];
        let g = grad.row_mut(i);
        softmax_row(logits.row(i), g);
        g[y] -= 1.0;
        for v in g.iter_mut() {
            *v *= inv_n;
        }
    }
    Ok(LossValueGrad {
        value: total * inv_n,
        grad,
    })
}

/// Focal loss `-(1 - p_y)^γ log p_y`, averaged over the batch.
///
/// With `q = p_y`, the per-sample derivative w.r.t. logit `j` is
/// `[γ (1-q)^(γ-1) q log q - (1-q)^γ] (δ_jy - p_j)`.
pub fn focal_loss(logits: &LogitBatch, labels: &LabelVector, focal_gamma: f64) -> Result<LossValueGrad> {
    if !focal_gamma.is_finite() || focal_gamma < 0.0 {
        return Err(Error::Parameter(format!("focal gamma must be >= 0, got {focal_gamma}")));
    }
    check_pair(logits.n(), logits.k(), labels)?;
    let (n, k) = (logits.n(), logits.k());
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, k);
    let mut logp = vec![0.0; k];
    let mut total = 0.0;
    for (i, y) in labels.iter().enumerate() {
        log_softmax_row(logits.row(i), &mut logp);
        let log_q = logp[y];
        let q = log_q.exp();
        let one_minus_q = -log_q.exp_m1();
        let modulator = one_minus_q.powf(focal_gamma);
        total -= modulator * log_q;

        // q log q vanishes as q -> 1, which also absorbs the (1-q)^(γ-1) pole for γ < 1.
        let slope = if focal_gamma == 0.0 || one_minus_q == 0.0 {
            0.0
        } else {
            focal_gamma * one_minus_q.powf(focal_gamma - 1.0) * q * log_q
        };
        let coef = slope - modulator;

        let g = grad.row_mut(i);
        softmax_row(logits.row(i), g);
        for (j, v) in g.iter_mut().enumerate() {
            let delta = if j == y { 1.0 } else { 0.0 };
            *v = coef * (delta - *v) * inv_n;
        }
    }
    Ok(LossValueGrad {
        value: total * inv_n,
        grad,
    })
}

/// Per-class gap `mean_i p[i,k] - mean_i 1[y_i = k]` over the batch.
pub fn mdca_class_gaps(logits: &LogitBatch, labels: &LabelVector) -> Result<Vec<f64>> {
    check_pair(logits.n(), logits.k(), labels)?;
    let (n, k) = (logits.n(), logits.k());
    let mut gaps = vec![0.0; k];
    let mut p = vec![0.0; k];
    for (i, y) in labels.iter().enumerate() {
        softmax_row(logits.row(i), &mut p);
        for (g, &pk) in gaps.iter_mut().zip(&p) {
            *g += pk;
        }
        gaps[y] -= 1.0;
    }
    for g in gaps.iter_mut() {
        *g /= n as f64;
    }
    Ok(gaps)
}

/// Multi-class difference in confidence and accuracy:
/// `(1/K) Σ_k | mean_i p[i,k] - mean_i 1[y_i = k] |` over the whole batch.
///
/// The subgradient of `|x|` at zero is taken as 0.
pub fn mdca_loss(logits: &LogitBatch, labels: &LabelVector) -> Result<LossValueGrad> {
    let gaps = mdca_class_gaps(logits, labels)?;
    let (n, k) = (logits.n(), logits.k());
    let value = gaps.iter().map(|g| g.abs()).sum::<f64>() / k as f64;
    let signs: Vec<f64> = gaps
        .iter()
        .map(|&g| {
            if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();

    // d/dz_im = p_im (s_m - Σ_k s_k p_ik) / (K N)
    let scale = 1.0 / (k as f64 * n as f64);
    let mut grad = Matrix::zeros(n, k);
    for i in 0..n {
        let g = grad.row_mut(i);
        softmax_row(logits.row(i), g);
        let mean_sign: f64 = g.iter().zip(&signs).map(|(p, s)| p * s).sum();
        for (v, s) in g.iter_mut().zip(&signs) {
            *v *= (s - mean_sign) * scale;
        }
    }
    Ok(LossValueGrad { value, grad })
}

/// Ordinal class-index loss: mean squared difference between the label and
/// the predicted class index, both normalised by `K - 1`.
///
/// In [`TsMode::Hard`] the prediction is the arg-max class and the gradient
/// is identically zero. In [`TsMode::Soft`] it is the expected class index
/// `Σ_k p_k k / (K-1)`, differentiated through the softmax.
pub fn ts_loss(logits: &LogitBatch, labels: &LabelVector, mode: TsMode) -> Result<LossValueGrad> {
    check_pair(logits.n(), logits.k(), labels)?;
    let (n, k) = (logits.n(), logits.k());
    if k < 2 {
        return Err(Error::Parameter("ordinal loss needs at least 2 classes".into()));
    }
    let denom = (k - 1) as f64;
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, k);
    let mut total = 0.0;
    for (i, y) in labels.iter().enumerate() {
        match mode {
            TsMode::Hard => {
                // integer class distance squared over (K-1)^2: one correctly rounded division
                let diff = y as f64 - argmax(logits.row(i)) as f64;
                total += diff * diff / (denom * denom);
            }
            TsMode::Soft => {
                let target = y as f64 / denom;
                let g = grad.row_mut(i);
                softmax_row(logits.row(i), g);
                let pred: f64 = g.iter().enumerate().map(|(c, p)| p * c as f64).sum::<f64>() / denom;
                let resid = pred - target;
                total += resid * resid;
                for (c, v) in g.iter_mut().enumerate() {
                    *v *= 2.0 * resid * (c as f64 / denom - pred) * inv_n;
                }
            }
        }
    }
    Ok(LossValueGrad {
        value: total * inv_n,
        grad,
    })
}

/// `alpha·CE + beta·MDCA + gamma·TS` and the matching gradient.
///
/// Terms with zero weight are not evaluated, so `(1, 0, 0)` is exactly
/// [`cross_entropy`].
pub fn total_loss(
    logits: &LogitBatch,
    labels: &LabelVector,
    weights: &LossWeights,
    mode: TsMode,
) -> Result<LossValueGrad> {
    check_pair(logits.n(), logits.k(), labels)?;
    type Term<'a> = Box<dyn Fn() -> Result<LossValueGrad> + 'a>;
    let parts: [(f64, Term); 3] = [
        (weights.alpha, Box::new(|| cross_entropy(logits, labels))),
        (weights.beta, Box::new(|| mdca_loss(logits, labels))),
        (weights.gamma, Box::new(|| ts_loss(logits, labels, mode))),
    ];
    let mut acc: Option<LossValueGrad> = None;
    for (w, eval) in parts {
        if w == 0.0 {
            continue;
        }
        let part = eval()?;
        acc = Some(match acc {
            None if w == 1.0 => part,
            None => LossValueGrad {
                value: w * part.value,
                grad: part.grad.map(|g| w * g),
            },
            Some(mut a) => {
                a.value += w * part.value;
                a.grad.add_scaled(&part.grad, w);
                a
            }
        });
    }
    Ok(acc.expect("weights sum to one, so at least one is non-zero"))
}

/// A loss selectable at run time, used by the trainer and the gradient checker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    CrossEntropy,
    Focal { focal_gamma: f64 },
    Mdca,
    Ts { mode: TsMode },
    Composite { weights: LossWeights, mode: TsMode },
}

impl LossSpec {
    pub fn evaluate(&self, logits: &LogitBatch, labels: &LabelVector) -> Result<LossValueGrad> {
        match *self {
            LossSpec::CrossEntropy => cross_entropy(logits, labels),
            LossSpec::Focal { focal_gamma } => focal_loss(logits, labels, focal_gamma),
            LossSpec::Mdca => mdca_loss(logits, labels),
            LossSpec::Ts { mode } => ts_loss(logits, labels, mode),
            LossSpec::Composite { weights, mode } => total_loss(logits, labels, &weights, mode),
        }
    }

    /// Whether the analytic gradient is meaningful for descent.
    pub fn is_differentiable(&self) -> bool {
        !matches!(self, LossSpec::Ts { mode: TsMode::Hard })
    }

    pub fn name(&self) -> String {
        match self {
            LossSpec::CrossEntropy => "ce".into(),
            LossSpec::Focal { focal_gamma } => format!("focal(gamma={focal_gamma})"),
            LossSpec::Mdca => "mdca".into(),
            LossSpec::Ts { mode: TsMode::Soft } => "ts-soft".into(),
            LossSpec::Ts { mode: TsMode::Hard } => "ts-hard".into(),
            LossSpec::Composite { weights, mode } => format!(
                "composite(alpha={}, beta={}, gamma={}, ts={})",
                weights.alpha,
                weights.beta,
                weights.gamma,
                if *mode == TsMode::Soft { "soft" } else { "hard" }
            ),
        }
    }
}
