use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Max-shifted log-sum-exp of a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Row-wise softmax.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let lse = log_sum_exp(row.as_slice().expect("standard layout"));
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Per-frame log-scores indexed `[frame, pdf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores(Array2<f64>);

impl FrameScores {
    pub fn new(scores: Array2<f64>) -> Result<Self> {
        if scores.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite frame score {bad}")));
        }
        Ok(Self(scores.as_standard_layout().into_owned()))
    }

    pub fn frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn pdfs(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.0.row(t)
    }

    #[inline]
    pub fn get(&self, t: usize, pdf: u32) -> f64 {
        self.0[[t, pdf as usize]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }
}

/// Frame × pdf posterior (or occupancy) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable(pub Array2<f64>);

impl PosteriorTable {
    pub fn frames(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, t: usize, pdf: u32) -> f64 {
        self.0[[t, pdf as usize]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        self.0
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
