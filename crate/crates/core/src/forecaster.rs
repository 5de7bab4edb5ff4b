//! Readout training and autonomous prediction for the three model variants.
//!
//! Every variant maps an internal state to the next observation with a linear
//! readout `W`:
//! - RC: the reservoir state `r(t)`;
//! - NGRC: the feature vector `O(t)`;
//! - Hybrid: the concatenation `r(t) ⊕ O(t)`.
//!
//! During training the internal state is driven by a noisy copy of the inputs
//! while the regression targets stay noiseless. In prediction the output is fed
//! back as the next input.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ngrc::{features_from_linear, NgrcConfig};
use crate::reservoir::{Reservoir, ReservoirState};
use crate::systems::Trajectory;
use crate::{Error, Real, Result};

/// Magnitude (normalized units) beyond which a prediction counts as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rc,
    Ngrc,
    Hybrid,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Rc, ModelKind::Ngrc, ModelKind::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rc => "rc",
            ModelKind::Ngrc => "ngrc",
            ModelKind::Hybrid => "hybrid",
        }
    }

    pub fn uses_reservoir(self) -> bool {
        matches!(self, ModelKind::Rc | ModelKind::Hybrid)
    }

    pub fn uses_ngrc(self) -> bool {
        matches!(self, ModelKind::Ngrc | ModelKind::Hybrid)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rc" => Ok(ModelKind::Rc),
            "ngrc" => Ok(ModelKind::Ngrc),
            "hybrid" => Ok(ModelKind::Hybrid),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig<T> {
    /// Ridge parameter.
    pub beta: T,
    /// Standard deviation of the Gaussian input noise.
    pub noise_std: T,
    pub n_train: usize,
    /// Reservoir warm-up steps (ignored by the NGRC).
    pub n_warmup: usize,
}

impl<T: Real> TrainingConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= T::zero()) || !(self.noise_std >= T::zero()) {
            return Err(Error::InvalidParameter("beta and noise level must be nonnegative".into()));
        }
        if self.n_warmup >= self.n_train {
            return Err(Error::InvalidParameter(format!(
                "warm-up ({}) must be shorter than the training data ({})",
                self.n_warmup, self.n_train
            )));
        }
        Ok(())
    }
}

/// An untrained model: which components make up its internal state.
#[derive(Clone, Debug)]
pub struct Forecaster<T: Real> {
    kind: ModelKind,
    reservoir: Option<Arc<Reservoir<T>>>,
    ngrc: Option<NgrcConfig>,
}

impl<T: Real> Forecaster<T> {
    pub fn rc(reservoir: Arc<Reservoir<T>>) -> Self {
        Forecaster { kind: ModelKind::Rc, reservoir: Some(reservoir), ngrc: None }
    }

    pub fn ngrc(config: NgrcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Forecaster { kind: ModelKind::Ngrc, reservoir: None, ngrc: Some(config) })
    }

    pub fn hybrid(reservoir: Arc<Reservoir<T>>, config: NgrcConfig) -> Result<Self> {
        config.validate()?;
        if reservoir.input_dim() != config.d {
            return Err(Error::DimensionMismatch { expected: reservoir.input_dim(), got: config.d });
        }
        Ok(Forecaster { kind: ModelKind::Hybrid, reservoir: Some(reservoir), ngrc: Some(config) })
    }

    /// Builds the variant `kind` from whichever components it needs.
    pub fn of_kind(kind: ModelKind, reservoir: Option<Arc<Reservoir<T>>>, config: NgrcConfig) -> Result<Self> {
        let need_res = || reservoir.clone().ok_or_else(|| Error::InvalidParameter("model needs a reservoir".into()));
        match kind {
            ModelKind::Rc => Ok(Self::rc(need_res()?)),
            ModelKind::Ngrc => Self::ngrc(config),
            ModelKind::Hybrid => Self::hybrid(need_res()?, config),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn reservoir(&self) -> Option<&Arc<Reservoir<T>>> {
        self.reservoir.as_ref()
    }

    pub fn ngrc_config(&self) -> Option<&NgrcConfig> {
        self.ngrc.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        match (&self.reservoir, &self.ngrc) {
            (Some(r), _) => r.input_dim(),
            (None, Some(c)) => c.d,
            (None, None) => unreachable!("a forecaster has at least one component"),
        }
    }

    fn reservoir_dim(&self) -> usize {
        self.reservoir.as_ref().map_or(0, |r| r.n_nodes())
    }

    /// Length of the internal state the readout acts on.
    pub fn state_dim(&self) -> usize {
        self.reservoir_dim() + self.ngrc.map_or(0, |c| c.feature_dim())
    }

    /// Index of the first training sample whose state enters the fit.
    pub fn first_fit_index(&self, n_warmup: usize) -> usize {
        let res = if self.reservoir.is_some() { n_warmup } else { 0 };
        let delay = self.ngrc.map_or(0, |c| c.warmup_steps());
        res.max(delay)
    }

    /// Writes the state at series index `t` into `out`, given the reservoir state `r`
    /// and row-major `series` (at least `t + 1` rows).
    fn assemble(&self, r: Option<&[T]>, series: &[T], t: usize, linear: &mut [T], out: &mut [T]) {
        let nr = self.reservoir_dim();
        if let Some(r) = r {
            out[..nr].copy_from_slice(r);
        }
        if let Some(cfg) = &self.ngrc {
            let d = cfg.d;
            for j in 0..cfg.k {
                let idx = t - j * cfg.s;
                linear[j * d..(j + 1) * d].copy_from_slice(&series[idx * d..(idx + 1) * d]);
            }
            features_from_linear(linear, &mut out[nr..]);
        }
    }
}

/// States and one-step-ahead targets for the ridge fit, one column per fitted time step.
#[derive(Clone, Debug)]
pub struct DesignMatrices<T: Real> {
    /// `m x n_fit` states.
    pub states: DMatrix<T>,
    /// `d x n_fit` noiseless targets; column `j` is the observation after the state in column `j`.
    pub targets: DMatrix<T>,
    /// Training index of the first column.
    pub first_index: usize,
    /// Reservoir state after the last training input.
    pub final_reservoir: Option<ReservoirState<T>>,
}

/// Adds i.i.d. Gaussian noise of standard deviation `gamma` to every element.
pub fn add_input_noise<T: Real, R: Rng + ?Sized>(traj: &Trajectory<T>, gamma: T, rng: &mut R) -> Result<Trajectory<T>> {
    if !(gamma >= T::zero()) {
        return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
    }
    if gamma == T::zero() {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, gamma.as_f64()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let data = traj.as_slice().iter().map(|x| *x + T::lit(normal.sample(rng))).collect();
    Trajectory::new(data, traj.dim(), traj.dt(), traj.t0())
}

pub fn collect_states<T: Real>(
    model: &Forecaster<T>,
    noisy: &Trajectory<T>,
    clean: &Trajectory<T>,
    cfg: &TrainingConfig<T>,
) -> Result<DesignMatrices<T>> {
    let d = model.input_dim();
    for t in [noisy, clean] {
        if t.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: t.dim() });
        }
    }
    let n = cfg.n_train;
    let available = noisy.len().min(clean.len());
    if n > available {
        return Err(Error::InsufficientData { needed: n, available });
    }
    let start = model.first_fit_index(cfg.n_warmup);
    if start + 1 >= n {
        return Err(Error::InsufficientData { needed: start + 2, available: n });
    }
    let n_fit = n - 1 - start;
    let m = model.state_dim();

    let mut states = DMatrix::zeros(m, n_fit);
    let mut targets = DMatrix::zeros(d, n_fit);
    let mut r = model.reservoir.as_ref().map(|res| vec![T::zero(); res.n_nodes()]);
    let mut scratch = Vec::new();
    let mut linear = vec![T::zero(); model.ngrc.map_or(0, |c| c.linear_dim())];
    let inputs = noisy.as_slice();

    for i in 0..n {
        if let (Some(res), Some(r)) = (&model.reservoir, r.as_mut()) {
            res.advance(r, noisy.row(i), &mut scratch);
        }
        if i >= start && i + 1 < n {
            let col = i - start;
            let out = &mut states.as_mut_slice()[col * m..(col + 1) * m];
            model.assemble(r.as_deref(), inputs, i, &mut linear, out);
            targets.as_mut_slice()[col * d..(col + 1) * d].copy_from_slice(clean.row(i + 1));
        }
    }
    Ok(DesignMatrices {
        states,
        targets,
        first_index: start,
        final_reservoir: r.map(ReservoirState::from_vec),
    })
}

/// Ridge regression `W = Y Sᵀ (S Sᵀ + beta I)⁻¹` for `states` `S` (`m x n`) and
/// `targets` `Y` (`d x n`), solved through the `m x m` normal equations.
pub fn ridge_fit<T: Real>(states: &DMatrix<T>, targets: &DMatrix<T>, beta: T) -> Result<DMatrix<T>> {
    if states.ncols() != targets.ncols() || states.ncols() == 0 {
        return Err(Error::DimensionMismatch { expected: states.ncols(), got: targets.ncols() });
    }
    if !(beta >= T::zero()) {
        return Err(Error::InvalidParameter("ridge parameter must be nonnegative".into()));
    }
    let m = states.nrows();
    let mut gram = states * states.transpose();
    for i in 0..m {
        gram[(i, i)] += beta;
    }
    let rhs = states * targets.transpose();
    let singular = || Error::SingularNormalMatrix { beta: beta.as_f64() };

    let solution = match gram.clone().cholesky() {
        Some(chol) => {
            if beta == T::zero() {
                // an exactly rank-deficient S can still yield tiny positive pivots
                let l = chol.l_dirty();
                let max_diag = (0..m).map(|i| gram[(i, i)]).fold(T::zero(), |a, b| a.max(b));
                let min_pivot = (0..m).map(|i| l[(i, i)] * l[(i, i)]).fold(T::max_value().unwrap(), |a, b| a.min(b));
                if min_pivot <= T::from_usize_lossy(m) * T::default_epsilon() * max_diag {
                    return Err(singular());
                }
            }
            chol.solve(&rhs)
        }
        None if beta == T::zero() => return Err(singular()),
        None => gram.lu().solve(&rhs).ok_or_else(singular)?,
    };
    if solution.iter().any(|x| !x.is_finite()) {
        return Err(singular());
    }
    Ok(solution.transpose())
}

/// Noises the training inputs, collects states and fits the readout.
pub fn train<T: Real, R: Rng + ?Sized>(
    model: &Forecaster<T>,
    traj: &Trajectory<T>,
    cfg: &TrainingConfig<T>,
    rng: &mut R,
) -> Result<ForecastModel<T>> {
    let noisy = add_input_noise(traj, cfg.noise_std, rng)?;
    train_with_inputs(model, &noisy, traj, cfg)
}

/// Training with a caller-supplied noisy input copy, so several models can share one.
pub fn train_with_inputs<T: Real>(
    model: &Forecaster<T>,
    noisy: &Trajectory<T>,
    clean: &Trajectory<T>,
    cfg: &TrainingConfig<T>,
) -> Result<ForecastModel<T>> {
    if model.reservoir.is_some() {
        cfg.validate()?;
    } else if !(cfg.beta >= T::zero()) {
        return Err(Error::InvalidParameter("ridge parameter must be nonnegative".into()));
    }
    let design = collect_states(model, noisy, clean, cfg)?;
    let readout = ridge_fit(&design.states, &design.targets, cfg.beta)?;
    Ok(ForecastModel {
        forecaster: model.clone(),
        readout,
        final_reservoir: design.final_reservoir,
        config: cfg.clone(),
    })
}

/// Output of an autonomous run.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    values: Vec<T>,
    dim: usize,
    dt: T,
    t0: T,
    requested: usize,
    diverged_at: Option<usize>,
}

impl<T: Real> Prediction<T> {
    /// Number of finite predicted samples.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    /// Step at which the prediction left the finite range, if it did.
    pub fn diverged_at(&self) -> Option<usize> {
        self.diverged_at
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// The first `n` requested steps of this prediction.
    pub fn truncated(&self, n: usize) -> Prediction<T> {
        let keep = self.len().min(n);
        Prediction {
            values: self.values[..keep * self.dim].to_vec(),
            dim: self.dim,
            dt: self.dt,
            t0: self.t0,
            requested: n,
            diverged_at: self.diverged_at.filter(|&s| s < n),
        }
    }

    /// The finite prefix as a trajectory (`None` if nothing finite was produced).
    pub fn trajectory(&self) -> Option<Trajectory<T>> {
        Trajectory::new(self.values.clone(), self.dim, self.dt, self.t0).ok()
    }
}

/// Trained readout bundled with the components it reads from.
#[derive(Clone, Debug)]
pub struct ForecastModel<T: Real> {
    forecaster: Forecaster<T>,
    readout: DMatrix<T>,
    final_reservoir: Option<ReservoirState<T>>,
    config: TrainingConfig<T>,
}

impl<T: Real> ForecastModel<T> {
    /// Assembles a model from an explicit `d x m` readout.
    pub fn from_parts(
        forecaster: Forecaster<T>,
        readout: DMatrix<T>,
        final_reservoir: Option<ReservoirState<T>>,
        config: TrainingConfig<T>,
    ) -> Result<Self> {
        let shape = (forecaster.input_dim(), forecaster.state_dim());
        if readout.shape() != shape {
            return Err(Error::DimensionMismatch { expected: shape.1, got: readout.ncols() });
        }
        if forecaster.reservoir.is_some() != final_reservoir.is_some() {
            return Err(Error::InvalidParameter("reservoir state must be given exactly for reservoir models".into()));
        }
        Ok(ForecastModel { forecaster, readout, final_reservoir, config })
    }

    pub fn kind(&self) -> ModelKind {
        self.forecaster.kind
    }

    pub fn forecaster(&self) -> &Forecaster<T> {
        &self.forecaster
    }

    /// `d x m` readout matrix.
    pub fn readout(&self) -> &DMatrix<T> {
        &self.readout
    }

    pub fn training_config(&self) -> &TrainingConfig<T> {
        &self.config
    }

    /// Reservoir state at the end of training.
    pub fn final_reservoir(&self) -> Option<&ReservoirState<T>> {
        self.final_reservoir.as_ref()
    }

    /// Internal state at the last row of `warmstart` given the reservoir state there.
    pub fn boundary_state(&self, reservoir: Option<&ReservoirState<T>>, warmstart: &Trajectory<T>) -> Result<Vec<T>> {
        self.check_warmstart(warmstart)?;
        let mut out = vec![T::zero(); self.forecaster.state_dim()];
        let mut linear = vec![T::zero(); self.forecaster.ngrc.map_or(0, |c| c.linear_dim())];
        self.forecaster.assemble(
            reservoir.map(|r| r.as_slice()),
            warmstart.as_slice(),
            warmstart.len() - 1,
            &mut linear,
            &mut out,
        );
        Ok(out)
    }

    fn check_warmstart(&self, warmstart: &Trajectory<T>) -> Result<()> {
        let d = self.forecaster.input_dim();
        if warmstart.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: warmstart.dim() });
        }
        let needed = self.forecaster.ngrc.map_or(1, |c| c.warmup_steps() + 1);
        if warmstart.len() < needed {
            return Err(Error::InsufficientData { needed, available: warmstart.len() });
        }
        Ok(())
    }

    /// Closed-loop prediction continuing from the end of training: the reservoir
    /// state is carried over and the delay window is read from the tail of
    /// `warmstart` (the noiseless training data).
    pub fn predict_autonomous(&self, warmstart: &Trajectory<T>, n_steps: usize) -> Result<Prediction<T>> {
        self.predict_from(self.final_reservoir.as_ref(), warmstart, n_steps)
    }

    /// Closed-loop prediction from an explicit reservoir state.
    pub fn predict_from(
        &self,
        reservoir: Option<&ReservoirState<T>>,
        warmstart: &Trajectory<T>,
        n_steps: usize,
    ) -> Result<Prediction<T>> {
        self.check_warmstart(warmstart)?;
        let f = &self.forecaster;
        if f.reservoir.is_some() != reservoir.is_some() {
            return Err(Error::InvalidParameter("reservoir state must be given exactly for reservoir models".into()));
        }
        let d = f.input_dim();
        let m = f.state_dim();
        let keep = f.ngrc.map_or(1, |c| c.warmup_steps() + 1);
        let tail_start = warmstart.len() - keep;
        let mut history: Vec<T> = warmstart.as_slice()[tail_start * d..].to_vec();
        history.reserve(n_steps * d);

        let mut r = reservoir.map(|s| s.r.as_slice().to_vec());
        let mut scratch = Vec::new();
        let mut state = vec![T::zero(); m];
        let mut linear = vec![T::zero(); f.ngrc.map_or(0, |c| c.linear_dim())];
        let mut v = vec![T::zero(); d];
        let mut values = Vec::with_capacity(n_steps * d);
        let limit = T::lit(DIVERGENCE_THRESHOLD);
        let mut diverged_at = None;

        for step in 0..n_steps {
            let t = history.len() / d - 1;
            f.assemble(r.as_deref(), &history, t, &mut linear, &mut state);
            v.fill(T::zero());
            for (j, col) in self.readout.as_slice().chunks_exact(d).enumerate() {
                let hj = state[j];
                for (vi, w) in v.iter_mut().zip(col) {
                    *vi += *w * hj;
                }
            }
            if v.iter().any(|x| !x.is_finite() || x.abs() > limit) {
                diverged_at = Some(step);
                break;
            }
            values.extend_from_slice(&v);
            history.extend_from_slice(&v);
            if let (Some(res), Some(r)) = (&f.reservoir, r.as_mut()) {
                res.advance(r, &v, &mut scratch);
            }
        }
        Ok(Prediction {
            values,
            dim: d,
            dt: warmstart.dt(),
            t0: warmstart.time(warmstart.len() - 1) + warmstart.dt(),
            requested: n_steps,
            diverged_at,
        })
    }

    /// Structured text dump of the model for reproducibility checks: variant,
    /// hyperparameters, seed and the readout in row-major order at full precision.
    pub fn write_dump<W: Write>(&self, w: W, seed: u64, hyperparameters: serde_json::Value) -> Result<()> {
        let (rows, cols) = self.readout.shape();
        let values: Vec<f64> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| self.readout[(i, j)].as_f64())
            .collect();
        let doc = serde_json::json!({
            "variant": self.kind().name(),
            "seed": seed,
            "hyperparameters": hyperparameters,
            "training": {
                "beta": self.config.beta.as_f64(),
                "noise_std": self.config.noise_std.as_f64(),
                "n_train": self.config.n_train,
                "n_warmup": self.config.n_warmup,
            },
            "readout": { "rows": rows, "cols": cols, "values": values },
        });
        serde_json::to_writer_pretty(w, &doc)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{build_reservoir, ReservoirParams};
    use crate::systems::{compute_stats, integrate_and_sample, normalize, InitialCondition, SystemSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn lorenz_normalized(n: usize, tau: f64, seed: u64) -> Trajectory<f64> {
        let spec = SystemSpec::lorenz();
        let t = integrate_and_sample(&spec, InitialCondition::Random, 0.001, tau, n, 20.0, &mut rng(seed)).unwrap();
        let stats = compute_stats(&t, n).unwrap();
        normalize(&t, &stats).unwrap()
    }

    /// Loss `sum |W s - y|^2 + beta |W|^2`.
    fn ridge_loss(w: &DMatrix<f64>, s: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> f64 {
        (w * s - y).norm_squared() + beta * w.norm_squared()
    }

    #[test]
    fn ridge_interpolates_square_system() {
        let mut g = rng(1);
        let s = random_matrix(5, 5, &mut g);
        let y = random_matrix(2, 5, &mut g);
        let w = ridge_fit(&s, &y, 0.0).unwrap();
        assert!((&w * &s - &y).norm() < 1e-9 * y.norm());
    }

    #[test]
    fn ridge_shrinks_under_huge_penalty() {
        let mut g = rng(2);
        let s = random_matrix(4, 30, &mut g) / 5.0;
        let y = random_matrix(2, 30, &mut g) / 5.0;
        let w = ridge_fit(&s, &y, 1e12).unwrap();
        assert!(w.norm() < 1e-9);
    }

    #[test]
    fn ridge_matches_gradient_descent() {
        let mut g = rng(3);
        let s = random_matrix(5, 20, &mut g);
        let y = random_matrix(2, 20, &mut g);
        let beta = 1e-3;
        let w = ridge_fit(&s, &y, beta).unwrap();

        // plain gradient descent on the loss, independent of the normal equations
        let gram_norm = (&s * s.transpose()).norm();
        let step = 1.0 / (2.0 * (gram_norm + beta));
        let mut v = DMatrix::<f64>::zeros(2, 5);
        for _ in 0..200_000 {
            let grad = (&v * &s - &y) * s.transpose() * 2.0 + &v * (2.0 * beta);
            if grad.norm() < 1e-13 {
                break;
            }
            v -= grad * step;
        }
        for (a, b) in w.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let mut g = rng(4);
        let mut s = random_matrix(4, 10, &mut g);
        let row = s.row(0).clone_owned();
        s.set_row(3, &row);
        let y = random_matrix(1, 10, &mut g);
        assert!(matches!(ridge_fit(&s, &y, 0.0), Err(Error::SingularNormalMatrix { .. })));
        assert!(ridge_fit(&s, &y, 1e-6).is_ok());
    }

    #[test]
    fn ridge_minimizes_loss() {
        let mut g = rng(5);
        let s = random_matrix(6, 40, &mut g);
        let y = random_matrix(3, 40, &mut g);
        let beta = 0.1;
        let w = ridge_fit(&s, &y, beta).unwrap();
        let base = ridge_loss(&w, &s, &y, beta);
        for _ in 0..20 {
            let mut delta = random_matrix(3, 6, &mut g);
            delta *= 1e-4 / delta.norm();
            assert!(ridge_loss(&(&w + delta), &s, &y, beta) > base);
        }
        let residual = &y * s.transpose() - &w * (&s * s.transpose() + DMatrix::identity(6, 6) * beta);
        assert!(residual.norm() < 1e-8 * (&y * s.transpose()).norm());
    }

    #[test]
    fn noise_statistics() {
        let t = Trajectory::new(vec![0.0; 10_000], 1, 1.0, 0.0).unwrap();
        assert_eq!(add_input_noise(&t, 0.0, &mut rng(0)).unwrap(), t);
        let noisy = add_input_noise(&t, 1e-3, &mut rng(1)).unwrap();
        let n = noisy.len() as f64;
        let mean = noisy.as_slice().iter().sum::<f64>() / n;
        let sd = (noisy.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 1e-3).abs() < 0.05e-3, "sd {sd}");
        assert_eq!(noisy, add_input_noise(&t, 1e-3, &mut rng(1)).unwrap());
    }

    /// Fit columns by direct enumeration of the admissible training indices.
    fn enumerate_columns(n_train: usize, reservoir_warmup: Option<usize>, delay: Option<usize>) -> Vec<usize> {
        (0..n_train)
            .filter(|&t| t + 1 < n_train)
            .filter(|&t| reservoir_warmup.map_or(true, |w| t >= w))
            .filter(|&t| delay.map_or(true, |s| t >= s))
            .collect()
    }

    #[test]
    fn column_bookkeeping() {
        // toy series of 5 steps
        assert_eq!(enumerate_columns(5, None, Some(1)), vec![1, 2, 3]);
        assert_eq!(enumerate_columns(5, Some(2), None), vec![2, 3]);
        assert_eq!(enumerate_columns(10_000, None, Some(1)).len(), 9998);
        assert_eq!(enumerate_columns(10_000, Some(1000), None).len(), 8999);

        let traj = lorenz_normalized(10_000, 0.06, 1);
        let cfg = TrainingConfig { beta: 1e-8, noise_std: 0.0, n_train: 10_000, n_warmup: 1000 };
        let ngrc = Forecaster::ngrc(NgrcConfig::new(2, 1, 3).unwrap()).unwrap();
        let design = collect_states(&ngrc, &traj, &traj, &cfg).unwrap();
        assert_eq!(design.states.shape(), (28, 9998));
        assert_eq!(design.first_index, 1);
        // column j holds features at t = j + 1, target is the sample after
        assert_eq!(design.targets.column(0).as_slice(), traj.row(2));
        assert_eq!(design.states[(1, 0)], traj.row(1)[0]);
        assert_eq!(design.states[(4, 0)], traj.row(0)[0]);

        let res = Arc::new(build_reservoir(&ReservoirParams::default(), 3, &mut rng(2)).unwrap());
        let rc = Forecaster::rc(res.clone());
        assert_eq!(collect_states(&rc, &traj, &traj, &cfg).unwrap().states.shape(), (50, 8999));
        let hybrid = Forecaster::hybrid(res, NgrcConfig::new(2, 1, 3).unwrap()).unwrap();
        assert_eq!(hybrid.state_dim(), 78);
        assert_eq!(collect_states(&hybrid, &traj, &traj, &cfg).unwrap().states.shape(), (78, 8999));

        let short = TrainingConfig { n_train: 1001, ..cfg };
        assert!(matches!(collect_states(&rc, &traj, &traj, &short), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn ngrc_one_step_fit_at_small_step() {
        let traj = lorenz_normalized(10_000, 0.01, 3);
        let cfg = TrainingConfig { beta: 1e-8, noise_std: 0.0, n_train: 10_000, n_warmup: 0 };
        let ngrc = Forecaster::ngrc(NgrcConfig::new(2, 1, 3).unwrap()).unwrap();
        let design = collect_states(&ngrc, &traj, &traj, &cfg).unwrap();
        let w = ridge_fit(&design.states, &design.targets, cfg.beta).unwrap();
        let resid = &w * &design.states - &design.targets;
        let rmse = (resid.norm_squared() / resid.len() as f64).sqrt();
        assert!(rmse < 1e-3, "rmse {rmse}");
    }

    #[test]
    fn hybrid_degenerates_to_rc() {
        let traj = lorenz_normalized(3000, 0.06, 4);
        let cfg = TrainingConfig { beta: 1e-6, noise_std: 0.0, n_train: 3000, n_warmup: 200 };
        let res = Arc::new(build_reservoir(&ReservoirParams::default(), 3, &mut rng(5)).unwrap());
        let ngrc_cfg = NgrcConfig::new(2, 1, 3).unwrap();
        let rc = collect_states(&Forecaster::rc(res.clone()), &traj, &traj, &cfg).unwrap();
        let ng = collect_states(&Forecaster::ngrc(ngrc_cfg).unwrap(), &traj, &traj, &cfg).unwrap();
        let hy = collect_states(&Forecaster::hybrid(res, ngrc_cfg).unwrap(), &traj, &traj, &cfg).unwrap();

        let w_rc = ridge_fit(&rc.states, &rc.targets, cfg.beta).unwrap();
        let mut masked = hy.states.clone();
        masked.rows_mut(50, 28).fill(0.0);
        let w = ridge_fit(&masked, &hy.targets, cfg.beta).unwrap();
        assert!((w.columns(0, 50) - &w_rc).amax() < 1e-8);
        assert!(w.columns(50, 28).amax() < 1e-8);

        // NGRC columns restricted to the hybrid's fit range
        let offset = hy.first_index - ng.first_index;
        let ng_states = ng.states.columns(offset, hy.states.ncols()).clone_owned();
        let w_ng = ridge_fit(&ng_states, &hy.targets, cfg.beta).unwrap();
        let mut masked = hy.states.clone();
        masked.rows_mut(0, 50).fill(0.0);
        let w = ridge_fit(&masked, &hy.targets, cfg.beta).unwrap();
        assert!((w.columns(50, 28) - &w_ng).amax() < 1e-8);
        assert!(w.columns(0, 50).amax() < 1e-8);
    }

    #[test]
    fn training_is_deterministic_and_shaped() {
        let traj = lorenz_normalized(3000, 0.06, 6);
        let cfg = TrainingConfig { beta: 1e-8, noise_std: 1e-3, n_train: 3000, n_warmup: 300 };
        let res = Arc::new(build_reservoir(&ReservoirParams::default(), 3, &mut rng(7)).unwrap());
        let hybrid = Forecaster::hybrid(res, NgrcConfig::new(2, 1, 3).unwrap()).unwrap();
        let a = train(&hybrid, &traj, &cfg, &mut rng(8)).unwrap();
        let b = train(&hybrid, &traj, &cfg, &mut rng(8)).unwrap();
        assert_eq!(a.readout(), b.readout());
        assert_eq!(a.readout().shape(), (3, 78));
    }

    #[test]
    fn closed_loop_first_step_matches_readout() {
        let traj = lorenz_normalized(3000, 0.06, 9);
        let cfg = TrainingConfig { beta: 1e-8, noise_std: 1e-3, n_train: 3000, n_warmup: 300 };
        let res = Arc::new(build_reservoir(&ReservoirParams::default(), 3, &mut rng(10)).unwrap());
        let hybrid = Forecaster::hybrid(res, NgrcConfig::new(2, 1, 3).unwrap()).unwrap();
        let model = train(&hybrid, &traj, &cfg, &mut rng(11)).unwrap();
        let boundary = model.boundary_state(model.final_reservoir(), &traj).unwrap();
        let expected = model.readout() * nalgebra::DVector::from_vec(boundary);
        let pred = model.predict_autonomous(&traj, 5).unwrap();
        assert_eq!(pred.row(0), expected.as_slice());
        assert_eq!(pred, model.predict_autonomous(&traj, 5).unwrap());
    }

    #[test]
    fn identity_readout_holds_fixed_point() {
        // NGRC with k = 1 whose readout copies the linear block
        let cfg = NgrcConfig::new(1, 1, 2).unwrap();
        let mut readout = DMatrix::zeros(2, cfg.feature_dim());
        readout[(0, 1)] = 1.0;
        readout[(1, 2)] = 1.0;
        let model = ForecastModel {
            forecaster: Forecaster::ngrc(cfg).unwrap(),
            readout,
            final_reservoir: None,
            config: TrainingConfig { beta: 0.0, noise_std: 0.0, n_train: 2, n_warmup: 0 },
        };
        let warm = Trajectory::new(vec![0.3, -0.7], 2, 0.1, 0.0).unwrap();
        let pred = model.predict_autonomous(&warm, 50).unwrap();
        assert!(!pred.is_diverged());
        assert!(pred.as_slice().chunks(2).all(|r| r == [0.3, -0.7]));
    }

    #[test]
    fn divergence_is_flagged() {
        let cfg = NgrcConfig::new(1, 1, 1).unwrap();
        let mut readout = DMatrix::zeros(1, 3);
        readout[(0, 1)] = 10.0;
        let model = ForecastModel {
            forecaster: Forecaster::ngrc(cfg).unwrap(),
            readout,
            final_reservoir: None,
            config: TrainingConfig { beta: 0.0, noise_std: 0.0, n_train: 2, n_warmup: 0 },
        };
        let warm = Trajectory::new(vec![1.0], 1, 0.1, 0.0).unwrap();
        let pred = model.predict_autonomous(&warm, 20).unwrap();
        assert_eq!(pred.diverged_at(), Some(6));
        assert_eq!(pred.len(), 6);
        assert_eq!(pred.row(5), &[1e6]);
    }

    #[test]
    fn dump_contains_readout() {
        let traj = lorenz_normalized(500, 0.06, 12);
        let cfg = TrainingConfig { beta: 1e-8, noise_std: 0.0, n_train: 500, n_warmup: 0 };
        let model = train(&Forecaster::ngrc(NgrcConfig::new(2, 1, 3).unwrap()).unwrap(), &traj, &cfg, &mut rng(0)).unwrap();
        let mut buf = Vec::new();
        model.write_dump(&mut buf, 42, serde_json::json!({"k": 2})).unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(doc["variant"], "ngrc");
        assert_eq!(doc["readout"]["cols"], 28);
        let first = doc["readout"]["values"][1].as_f64().unwrap();
        assert_eq!(first, model.readout()[(0, 1)]);
    }
}
