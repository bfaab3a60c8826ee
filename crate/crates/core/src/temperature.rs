//! Post-hoc temperature scaling.
//!
//! A single temperature `t` divides every logit before the softmax. It is
//! fitted on held-out data by minimising the negative log-likelihood with a
//! golden-section search over `ln t`. Dividing by a positive scalar never
//! changes a row's arg-max, so accuracy is untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_pair, log_softmax_row, LabelVector, LogitBatch};

pub const MIN_TEMPERATURE: f64 = 0.05;
pub const MAX_TEMPERATURE: f64 = 20.0;
/// Search stops once the bracket on `ln t` is narrower than this.
pub const LN_T_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const IDENTITY: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Parameter(format!("temperature must be finite and > 0, got {t}")));
        }
        Ok(Self(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(t: f64) -> Result<Self> {
        Temperature::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempFitResult {
    pub temperature: Temperature,
    pub nll_before: f64,
    pub nll_after: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Divide every logit by `temp`. Fails only if a tiny temperature overflows a logit.
pub fn apply_temperature(logits: &LogitBatch, temp: Temperature) -> Result<LogitBatch> {
    let t = temp.value();
    LogitBatch::new(logits.values().map(|z| z / t))
}

/// Mean NLL of `softmax(logits / t)`, via the stable log-softmax.
pub fn nll_at_temperature(logits: &LogitBatch, labels: &LabelVector, t: f64) -> f64 {
    let mut scaled = vec![0.0; logits.k()];
    let mut logp = vec![0.0; logits.k()];
    let mut total = 0.0;
    for (i, y) in labels.iter().enumerate() {
        for (s, &z) in scaled.iter_mut().zip(logits.row(i)) {
            *s = z / t;
        }
        log_softmax_row(&scaled, &mut logp);
        total -= logp[y];
    }
    total / logits.n() as f64
}

fn is_degenerate(logits: &LogitBatch) -> bool {
    (0..logits.n()).all(|i| {
        let row = logits.row(i);
        row.iter().all(|&z| z == row[0])
    })
}

/// Fit the NLL-optimal temperature on `val_logits`.
///
/// Row-constant logits leave the NLL flat in `t`; that case returns `t = 1`
/// with `converged = false`.
pub fn fit_temperature(val_logits: &LogitBatch, val_labels: &LabelVector) -> Result<TempFitResult> {
    check_pair(val_logits.n(), val_logits.k(), val_labels)?;
    if val_logits.n() < 2 {
        return Err(Error::Input("temperature fitting needs at least 2 samples".into()));
    }
    let nll_before = nll_at_temperature(val_logits, val_labels, 1.0);
    if is_degenerate(val_logits) {
        return Ok(TempFitResult {
            temperature: Temperature::IDENTITY,
            nll_before,
            nll_after: nll_before,
            iterations: 0,
            converged: false,
        });
    }

    let objective = |ln_t: f64| nll_at_temperature(val_logits, val_labels, ln_t.exp());
    let (ln_t, iterations) = golden_section_min(objective, MIN_TEMPERATURE.ln(), MAX_TEMPERATURE.ln(), LN_T_TOLERANCE);
    let mut t = ln_t.exp();
    let mut nll_after = objective(ln_t);
    if nll_after > nll_before {
        t = 1.0;
        nll_after = nll_before;
    }
    Ok(TempFitResult {
        temperature: Temperature::new(t)?,
        nll_before,
        nll_after,
        iterations,
        converged: true,
    })
}

/// Minimiser of a unimodal `f` on `[lo, hi]`, returned with the iteration count.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, usize) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > tol {
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // Endpoints are candidates too: the minimum may sit on the boundary.
    let mid = 0.5 * (a + b);
    let best = [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .fold(
            (mid, f64::INFINITY),
            |acc, (x, fx)| if fx < acc.1 { (x, fx) } else { acc },
        );
    (best.0, iterations)
}
