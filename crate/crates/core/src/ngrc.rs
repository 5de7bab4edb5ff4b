//! Next-generation reservoir features: a constant, the stacked current and delayed
//! observations, and every unique quadratic monomial of that stacked vector.
//!
//! Layout of a feature vector for `k` observations of dimension `d`
//! (`L = d k`, `x` the stacked linear block):
//!
//! ```text
//! [ 1 | x_0 .. x_{L-1} | x_0 x_0, x_0 x_1, .., x_0 x_{L-1}, x_1 x_1, .., x_{L-1} x_{L-1} ]
//! ```
//!
//! The linear block lists the current observation first and the oldest last.

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Delay structure of the feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgrcConfig {
    /// Number of stacked observations (current plus `k - 1` delayed ones).
    pub k: usize,
    /// Spacing in samples between stacked observations.
    pub s: usize,
    /// Observation dimension.
    pub d: usize,
}

impl NgrcConfig {
    pub fn new(k: usize, s: usize, d: usize) -> Result<Self> {
        let cfg = NgrcConfig { k, s, d };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.s == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("NGRC k, s and d must all be at least 1".into()));
        }
        Ok(())
    }

    pub fn linear_dim(&self) -> usize {
        self.d * self.k
    }

    pub fn feature_dim(&self) -> usize {
        let l = self.linear_dim();
        1 + l + l * (l + 1) / 2
    }

    /// Samples that must precede the first complete window.
    pub fn warmup_steps(&self) -> usize {
        self.s * (self.k - 1)
    }

    /// Series indices making up the window at `t`, current first.
    pub fn window_indices(&self, t: usize) -> Result<Vec<usize>> {
        if t < self.warmup_steps() {
            return Err(Error::IndexUnderflow { index: t, warmup: self.warmup_steps() });
        }
        Ok((0..self.k).map(|j| t - j * self.s).collect())
    }
}

/// The `k` observations feeding one feature vector, current first.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationWindow<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> ObservationWindow<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParameter("window rows differ in length".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "observation window", step: 0 });
        }
        Ok(ObservationWindow { rows })
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }
}

/// Writes the full feature vector for the stacked linear block `linear` into `out`.
pub fn features_from_linear<T: Real>(linear: &[T], out: &mut [T]) {
    let l = linear.len();
    debug_assert_eq!(out.len(), 1 + l + l * (l + 1) / 2);
    out[0] = T::one();
    out[1..=l].copy_from_slice(linear);
    let mut idx = 1 + l;
    for i in 0..l {
        let xi = linear[i];
        for &xj in &linear[i..] {
            out[idx] = xi * xj;
            idx += 1;
        }
    }
}

pub fn build_features<T: Real>(window: &ObservationWindow<T>, config: &NgrcConfig) -> Result<Vec<T>> {
    if window.rows.len() != config.k {
        return Err(Error::DimensionMismatch { expected: config.k, got: window.rows.len() });
    }
    if let Some(r) = window.rows.iter().find(|r| r.len() != config.d) {
        return Err(Error::DimensionMismatch { expected: config.d, got: r.len() });
    }
    let linear: Vec<T> = window.rows.iter().flatten().copied().collect();
    let mut out = vec![T::zero(); config.feature_dim()];
    features_from_linear(&linear, &mut out);
    Ok(out)
}

/// A series that reads the truth up to `boundary` (exclusive) and predictions after it.
#[derive(Clone, Copy, Debug)]
pub struct SplicedSeries<'a, T> {
    truth: &'a [T],
    predicted: &'a [T],
    dim: usize,
    boundary: usize,
}

impl<'a, T: Real> SplicedSeries<'a, T> {
    /// `truth` and `predicted` are row-major; logical index `i < boundary` maps to truth row `i`,
    /// index `boundary + j` to predicted row `j`.
    pub fn new(truth: &'a [T], predicted: &'a [T], dim: usize) -> Self {
        SplicedSeries { truth, predicted, dim, boundary: truth.len() / dim }
    }

    pub fn len(&self) -> usize {
        self.boundary + self.predicted.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn boundary(&self) -> usize {
        self.boundary
    }

    pub fn get(&self, i: usize) -> &'a [T] {
        if i < self.boundary {
            &self.truth[i * self.dim..(i + 1) * self.dim]
        } else {
            let j = i - self.boundary;
            &self.predicted[j * self.dim..(j + 1) * self.dim]
        }
    }
}

/// Window ending at logical index `t` of a spliced series.
pub fn window_from_series<T: Real>(
    series: &SplicedSeries<'_, T>,
    t: usize,
    config: &NgrcConfig,
) -> Result<ObservationWindow<T>> {
    if series.dim != config.d {
        return Err(Error::DimensionMismatch { expected: config.d, got: series.dim });
    }
    if t >= series.len() {
        return Err(Error::InsufficientData { needed: t + 1, available: series.len() });
    }
    let rows = config.window_indices(t)?.into_iter().map(|i| series.get(i).to_vec()).collect();
    ObservationWindow::new(rows)
}
