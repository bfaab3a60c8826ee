//! Batch value types and the softmax family.
//!
//! All arithmetic is `f64`. Batches are validated on construction and are
//! immutable afterwards.

use crate::error::{Error, Result};

/// Dense row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|i| (i / self.cols, i % self.cols))
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// N×K raw classifier scores. `N ≥ 1`, `K ≥ 2`, every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch(Matrix);

impl LogitBatch {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::Dimension("logit batch needs at least one row".into()));
        }
        if values.cols() < 2 {
            return Err(Error::Dimension(format!(
                "logit batch needs at least 2 classes, got {}",
                values.cols()
            )));
        }
        if let Some((row, col)) = values.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn k(&self) -> usize {
        self.0.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// N×K row-stochastic probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbBatch(Matrix);

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl ProbBatch {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Dimension("probability batch must be non-empty".into()));
        }
        for (i, row) in values.row_iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Input(format!(
                        "probability {p} at row {i}, column {j} is outside [0, 1]"
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Input(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn k(&self) -> usize {
        self.0.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }
}

/// Integer class labels, each in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
            return Err(Error::Input(format!(
                "label {y} at position {i} is out of range for {k} classes"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().copied()
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }
}

/// Shape check shared by every (batch, labels) operation.
pub(crate) fn check_pair(n: usize, k: usize, labels: &LabelVector) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Dimension(format!("{n} rows but {} labels", labels.len())));
    }
    if labels.k() != k {
        return Err(Error::Dimension(format!(
            "batch has {k} classes but labels were built for {}",
            labels.k()
        )));
    }
    Ok(())
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let m = row_max(logits);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub(crate) fn log_softmax_row(logits: &[f64], out: &mut [f64]) {
    let m = row_max(logits);
    let lse = logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = z - m - lse;
    }
}

pub fn softmax(logits: &LogitBatch) -> ProbBatch {
    let mut out = Matrix::zeros(logits.n(), logits.k());
    for i in 0..logits.n() {
        softmax_row(logits.row(i), out.row_mut(i));
    }
    ProbBatch(out)
}

pub fn log_softmax(logits: &LogitBatch) -> Matrix {
    let mut out = Matrix::zeros(logits.n(), logits.k());
    for i in 0..logits.n() {
        log_softmax_row(logits.row(i), out.row_mut(i));
    }
    out
}

/// Index of the row maximum; the lowest index wins ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Top-1 predicted class and its probability for every row.
pub fn top1(probs: &ProbBatch) -> (LabelVector, Vec<f64>) {
    let mut preds = Vec::with_capacity(probs.n());
    let mut confs = Vec::with_capacity(probs.n());
    for row in probs.values().row_iter() {
        let j = argmax(row);
        preds.push(j);
        confs.push(row[j]);
    }
    (
        LabelVector {
            labels: preds,
            k: probs.k(),
        },
        confs,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(rows: &[Vec<f64>]) -> LogitBatch {
        LogitBatch::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_uniform_row() {
        let p = softmax(&batch(&[vec![0.0; 4]]));
        for &v in p.row(0) {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn softmax_large_gap_does_not_overflow() {
        let p = softmax(&batch(&[vec![1000.0, 0.0]]));
        assert!((p.row(0)[0] - 1.0).abs() < 1e-15);
        assert!(p.row(0)[1] >= 0.0 && p.row(0)[1] < 1e-300);
        let lp = log_softmax(&batch(&[vec![1000.0, 0.0]]));
        assert!(lp.get(0, 0).abs() < 1e-15);
        assert!((lp.get(0, 1) + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_two_zero_zero() {
        let e2 = 2f64.exp();
        let expected = [e2 / (e2 + 2.0), 1.0 / (e2 + 2.0), 1.0 / (e2 + 2.0)];
        let p = softmax(&batch(&[vec![2.0, 0.0, 0.0]]));
        for (a, b) in p.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.row(0)[0] - 0.786_986_04).abs() < 1e-8);
        assert!((p.row(0)[1] - 0.106_506_98).abs() < 1e-8);

        let lp = log_softmax(&batch(&[vec![2.0, 0.0, 0.0]]));
        for (a, b) in lp.row(0).iter().zip(expected) {
            assert!((a - b.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn log_softmax_symmetric_pair() {
        let lp = log_softmax(&batch(&[vec![0.0, 0.0]]));
        assert_eq!(lp.row(0), &[-(2f64.ln()), -(2f64.ln())]);
    }

    #[test]
    fn top1_examples() {
        let (p, c) = top1(&ProbBatch::from_rows(&[vec![0.1, 0.7, 0.2]]).unwrap());
        assert_eq!(p.as_slice(), &[1]);
        assert_eq!(c, vec![0.7]);

        let (p, c) = top1(&ProbBatch::from_rows(&[vec![0.5, 0.5]]).unwrap());
        assert_eq!(p.as_slice(), &[0]);
        assert_eq!(c, vec![0.5]);

        let (_, c) = top1(&softmax(&batch(&[vec![3.0; 4], vec![-1.0; 4]])));
        assert_eq!(c, vec![0.25, 0.25]);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(matches!(
            LogitBatch::from_rows(&[vec![0.0, f64::NAN]]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            LogitBatch::from_rows(&[vec![0.0, f64::INFINITY], vec![0.0, 1.0]]),
            Err(Error::NonFinite { .. })
        ));
        assert!(LogitBatch::from_rows(&[vec![1.0]]).is_err());
        assert!(LogitBatch::from_rows(&[]).is_err());
        assert!(ProbBatch::from_rows(&[vec![0.6, 0.6]]).is_err());
        assert!(ProbBatch::from_rows(&[vec![1.2, -0.2]]).is_err());
        assert!(LabelVector::new(vec![0, 3], 3).is_err());
    }

    fn logit_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..7, 1usize..10)
            .prop_flat_map(|(k, n)| proptest::collection::vec(proptest::collection::vec(-30.0f64..30.0, k), n))
    }

    proptest! {
        #[test]
        fn shift_invariance(rows in logit_rows(), shift in -100.0f64..100.0) {
            let a = softmax(&batch(&rows));
            let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect();
            let b = softmax(&batch(&shifted));
            for (x, y) in a.values().as_slice().iter().zip(b.values().as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn exp_log_softmax_is_softmax(rows in logit_rows()) {
            let b = batch(&rows);
            let p = softmax(&b);
            let lp = log_softmax(&b);
            for i in 0..b.n() {
                let mut s = 0.0;
                for j in 0..b.k() {
                    let e = lp.get(i, j).exp();
                    prop_assert!((e - p.row(i)[j]).abs() < 1e-12);
                    s += e;
                }
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn top1_matches_logit_argmax(rows in logit_rows()) {
            let b = batch(&rows);
            let p = softmax(&b);
            let (pred, conf) = top1(&p);
            for (i, &c) in conf.iter().enumerate() {
                prop_assert_eq!(pred.get(i), argmax(b.row(i)));
                prop_assert!(c >= 1.0 / b.k() as f64 - 1e-15 && c <= 1.0);
            }
            prop_assert!(ProbBatch::new(p.values().clone()).is_ok());
        }
    }
}
