//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerics; every formula is
//! re-derived directly so a shared bug cannot hide.

#![allow(dead_code)]

use ordcal_core::{LabelVector, LogitBatch, Matrix, ProbBatch, RngSeed};
use rand::Rng;

pub const FD_STEP: f64 = 1e-6;

/// Plain softmax of one row, via max subtraction.
pub fn ref_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn rows_of(logits: &LogitBatch) -> Vec<Vec<f64>> {
    (0..logits.n()).map(|i| logits.row(i).to_vec()).collect()
}

pub fn ref_ce(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(r, &y)| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + r.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            lse - r[y]
        })
        .sum::<f64>()
        / rows.len() as f64
}

pub fn ref_focal(rows: &[Vec<f64>], labels: &[usize], gamma: f64) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(r, &y)| {
            let p = ref_softmax(r)[y];
            -(1.0 - p).powf(gamma) * p.ln()
        })
        .sum::<f64>()
        / rows.len() as f64
}

pub fn ref_mdca_gaps(rows: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    let k = rows[0].len();
    let n = rows.len() as f64;
    (0..k)
        .map(|c| {
            let conf: f64 = rows.iter().map(|r| ref_softmax(r)[c]).sum::<f64>() / n;
            let freq = labels.iter().filter(|&&y| y == c).count() as f64 / n;
            conf - freq
        })
        .collect()
}

pub fn ref_mdca(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let gaps = ref_mdca_gaps(rows, labels);
    gaps.iter().map(|g| g.abs()).sum::<f64>() / gaps.len() as f64
}

pub fn ref_ts_soft(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = rows[0].len();
    let denom = (k - 1) as f64;
    rows.iter()
        .zip(labels)
        .map(|(r, &y)| {
            let p = ref_softmax(r);
            let pred: f64 = (0..k).map(|c| p[c] * c as f64 / denom).sum();
            (y as f64 / denom - pred).powi(2)
        })
        .sum::<f64>()
        / rows.len() as f64
}

pub fn ref_ts_hard(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = rows[0].len();
    let denom = (k - 1) as f64;
    rows.iter()
        .zip(labels)
        .map(|(r, &y)| {
            let mut best = 0;
            for c in 1..k {
                if r[c] > r[best] {
                    best = c;
                }
            }
            ((y as f64 - best as f64) / denom).powi(2)
        })
        .sum::<f64>()
        / rows.len() as f64
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + FD_STEP;
            let up = f(&work);
            work[i] = x[i] - FD_STEP;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn to_rows(flat: &[f64], k: usize) -> Vec<Vec<f64>> {
    flat.chunks(k).map(|c| c.to_vec()).collect()
}

pub fn random_logits(rng: &mut impl Rng, n: usize, k: usize, scale: f64) -> LogitBatch {
    let values = (0..n * k).map(|_| rng.random_range(-scale..scale)).collect();
    LogitBatch::new(Matrix::from_vec(n, k, values).unwrap()).unwrap()
}

pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> LabelVector {
    LabelVector::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).unwrap()
}

/// Random probability rows with a spread of sharpness, and random labels.
pub fn random_prob_batch(rng: &mut impl Rng, n: usize, k: usize) -> (ProbBatch, LabelVector) {
    let sharp = rng.random_range(0.1..8.0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| sharp * rng.random_range(-1.0..1.0)).collect();
            ref_softmax(&z)
        })
        .collect();
    (ProbBatch::from_rows(&rows).unwrap(), random_labels(rng, n, k))
}

/// Labels drawn from each row's own softmax: logits calibrated by construction.
pub fn calibrated_instance(seed: RngSeed, n: usize, k: usize, scale: f64) -> (LogitBatch, LabelVector) {
    let mut rng = seed.rng();
    let logits = random_logits(&mut rng, n, k, scale);
    let labels = (0..n)
        .map(|i| {
            let p = ref_softmax(logits.row(i));
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (c, pc) in p.iter().enumerate() {
                acc += pc;
                if u < acc {
                    return c;
                }
            }
            k - 1
        })
        .collect();
    (logits, LabelVector::new(labels, k).unwrap())
}

pub struct RefBin {
    pub count: usize,
    pub avg_confidence: f64,
    pub accuracy: f64,
}

/// Per-bin statistics by scanning every sample against explicit bin edges.
pub fn ref_bins(probs: &ProbBatch, labels: &LabelVector, num_bins: usize) -> Vec<RefBin> {
    let n = probs.n();
    let mut top: Vec<(f64, bool)> = Vec::with_capacity(n);
    for i in 0..n {
        let row = probs.row(i);
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        top.push((row[best], best == labels.get(i)));
    }
    (0..num_bins)
        .map(|b| {
            let lo = b as f64 / num_bins as f64;
            let hi = (b + 1) as f64 / num_bins as f64;
            let last = b + 1 == num_bins;
            let members: Vec<&(f64, bool)> = top
                .iter()
                .filter(|(c, _)| *c >= lo && (*c < hi || (last && *c <= 1.0)))
                .collect();
            let count = members.len();
            let (sum_c, hits) = members
                .iter()
                .fold((0.0, 0usize), |(s, h), (c, ok)| (s + c, h + usize::from(*ok)));
            RefBin {
                count,
                avg_confidence: if count > 0 { sum_c / count as f64 } else { f64::NAN },
                accuracy: if count > 0 {
                    hits as f64 / count as f64
                } else {
                    f64::NAN
                },
            }
        })
        .collect()
}

pub fn ref_ece_mce(probs: &ProbBatch, labels: &LabelVector, num_bins: usize) -> (f64, f64) {
    let n = probs.n() as f64;
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    for b in ref_bins(probs, labels, num_bins) {
        if b.count == 0 {
            continue;
        }
        let gap = (b.accuracy - b.avg_confidence).abs();
        ece += b.count as f64 / n * gap;
        mce = mce.max(gap);
    }
    (ece, mce)
}

/// NLL of `softmax(logits / t)` from explicit probabilities.
pub fn ref_nll(logits: &LogitBatch, labels: &LabelVector, t: f64) -> f64 {
    (0..logits.n())
        .map(|i| {
            let scaled: Vec<f64> = logits.row(i).iter().map(|z| z / t).collect();
            let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + scaled.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            lse - scaled[labels.get(i)]
        })
        .sum::<f64>()
        / logits.n() as f64
}

/// Exhaustive search over `t = 0.05, 0.055, ..., 20`.
pub fn grid_search_temperature(logits: &LogitBatch, labels: &LabelVector) -> (f64, f64) {
    let steps = ((20.0 - 0.05) / 0.005f64).round() as usize;
    (0..=steps)
        .map(|i| 0.05 + 0.005 * i as f64)
        .map(|t| (t, ref_nll(logits, labels, t)))
        .fold(
            (f64::NAN, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}
