//! Forecast quality measures: valid prediction time, normalized one-step map
//! error, and Welch power spectral density for climate comparisons.

use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::forecaster::Prediction;
use crate::systems::{steps_per_sample, InitialCondition, Integrator, NormalizationStats, SystemSpec, Trajectory};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VptConfig<T> {
    /// Error threshold relative to the RMS size of the true signal.
    pub kappa: T,
    /// Lyapunov time `1 / Λ` in the time units of the series.
    pub lyapunov_time: T,
}

impl<T: Real> VptConfig<T> {
    pub fn new(lyapunov_time: T) -> Self {
        VptConfig { kappa: T::lit(0.9), lyapunov_time }
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > T::zero()) || !(self.lyapunov_time > T::zero()) {
            return Err(Error::InvalidParameter("kappa and Lyapunov time must be positive".into()));
        }
        Ok(())
    }
}

fn same_grid<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: b.dim(), got: a.dim() });
    }
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    let tol = T::lit(1e-9) * b.dt().abs();
    if (a.dt() - b.dt()).abs() > tol {
        return Err(Error::GridMismatch(format!("steps {} and {}", a.dt().as_f64(), b.dt().as_f64())));
    }
    Ok(())
}

fn squared_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
}

fn squared_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + *x * *x)
}

/// Index of the first sample whose normalized error exceeds `kappa`;
/// `predicted` may be a shorter (diverged) prefix, in which case the first
/// missing sample counts as a breach.
fn breach_index<T: Real>(predicted: &[T], truth: &Trajectory<T>, kappa: T) -> usize {
    let d = truth.dim();
    let n = truth.len();
    let mean_sq = truth.rows().fold(T::zero(), |acc, r| acc + squared_norm(r)) / T::from_usize_lossy(n);
    let threshold = kappa * kappa * mean_sq;
    let available = predicted.len() / d;
    for i in 0..n.min(available) {
        let e = squared_dist(&predicted[i * d..(i + 1) * d], truth.row(i));
        if !(e <= threshold) {
            return i;
        }
    }
    n.min(available)
}

/// Valid prediction time in Lyapunov times. The value is the number of samples
/// before the first threshold breach times the sample spacing, or the full
/// window length if the threshold is never crossed.
pub fn valid_prediction_time<T: Real>(predicted: &Trajectory<T>, truth: &Trajectory<T>, cfg: &VptConfig<T>) -> Result<T> {
    cfg.validate()?;
    same_grid(predicted, truth)?;
    let idx = breach_index(predicted.as_slice(), truth, cfg.kappa);
    Ok(T::from_usize_lossy(idx) * truth.dt() / cfg.lyapunov_time)
}

/// Valid prediction time of a possibly diverged prediction: samples after
/// divergence count as breaches.
pub fn prediction_vpt<T: Real>(prediction: &Prediction<T>, truth: &Trajectory<T>, cfg: &VptConfig<T>) -> Result<T> {
    cfg.validate()?;
    if prediction.dim() != truth.dim() {
        return Err(Error::DimensionMismatch { expected: truth.dim(), got: prediction.dim() });
    }
    if prediction.requested() != truth.len() {
        return Err(Error::GridMismatch(format!("lengths {} and {}", prediction.requested(), truth.len())));
    }
    let idx = breach_index(prediction.as_slice(), truth, cfg.kappa);
    Ok(T::from_usize_lossy(idx) * truth.dt() / cfg.lyapunov_time)
}

/// Mean one-sample displacement `⟨‖u(t + τ) - u(t)‖⟩`, the error of a
/// forecaster that repeats its last input.
pub fn persistence_normalizer<T: Real>(train: &Trajectory<T>) -> Result<T> {
    if train.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, available: train.len() });
    }
    let sum = (1..train.len()).fold(T::zero(), |acc, i| acc + squared_dist(train.row(i), train.row(i - 1)).sqrt());
    Ok(sum / T::from_usize_lossy(train.len() - 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapErrorConfig<T> {
    /// Integration step of the true flow.
    pub tau_int: T,
    /// Evaluation horizon: at most this many predicted steps are scored.
    pub n_predict: usize,
    /// Persistence normalizer from the training data.
    pub persistence: T,
}

/// Normalized one-step map error along a (normalized) predicted series: for each
/// `j ≥ 1`, the distance between `v_j` and the true flow applied for one sample
/// step to `v_{j-1}`, divided by the persistence normalizer.
///
/// The true flow runs in physical units, so each point is denormalized with
/// `stats` before integration and renormalized afterwards. If the flow cannot
/// be integrated from some predicted point (it left every bounded region), the
/// series is evaluated up to that point.
pub fn normalized_map_errors<T: Real>(
    predicted: &Trajectory<T>,
    spec: &SystemSpec<T>,
    stats: &NormalizationStats<T>,
    cfg: &MapErrorConfig<T>,
) -> Result<Vec<T>> {
    if spec.has_delay() {
        return Err(Error::DelaySystem);
    }
    if !(cfg.persistence > T::zero()) {
        return Err(Error::ZeroNormalizer);
    }
    let d = spec.dim();
    if predicted.dim() != d || stats.mean.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: predicted.dim() });
    }
    let steps = steps_per_sample(predicted.dt(), cfg.tau_int)?;
    let mut physical = vec![T::zero(); d];
    let mut mapped = vec![T::zero(); d];
    let last = predicted.len().saturating_sub(1).min(cfg.n_predict);
    let mut errors = Vec::with_capacity(last);
    for j in 1..=last {
        stats.denormalize_row(predicted.row(j - 1), &mut physical);
        let mut integ = Integrator::new(spec, InitialCondition::State(physical.clone()), cfg.tau_int)?;
        if integ.advance(steps).is_err() {
            break;
        }
        stats.normalize_row(integ.current(), &mut mapped);
        let e = squared_dist(predicted.row(j), &mapped).sqrt() / cfg.persistence;
        if !e.is_finite() {
            break;
        }
        errors.push(e);
    }
    Ok(errors)
}

/// Mean of [`normalized_map_errors`]; `None` if no step could be evaluated.
pub fn mean_map_error<T: Real>(
    predicted: &Trajectory<T>,
    spec: &SystemSpec<T>,
    stats: &NormalizationStats<T>,
    cfg: &MapErrorConfig<T>,
) -> Result<Option<T>> {
    let errors = normalized_map_errors(predicted, spec, stats, cfg)?;
    if errors.is_empty() {
        return Ok(None);
    }
    let n = T::from_usize_lossy(errors.len());
    Ok(Some(errors.into_iter().fold(T::zero(), |a, b| a + b) / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_len: usize,
    /// Fraction of a segment shared with the next one.
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig { segment_len: 4096, overlap: 0.5 }
    }
}

/// One-sided power spectral density without the zero-frequency bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate<T> {
    pub frequencies: Vec<T>,
    pub power: Vec<T>,
}

impl<T: Real> PsdEstimate<T> {
    /// Rectangle-rule integral of the density over frequency.
    pub fn integrated_power(&self) -> T {
        if self.frequencies.is_empty() {
            return T::zero();
        }
        let df = self.frequencies[0];
        self.power.iter().fold(T::zero(), |a, p| a + *p) * df
    }

    /// Relative L2 distance `‖self - reference‖ / ‖reference‖` on a shared grid.
    pub fn relative_l2_distance(&self, reference: &PsdEstimate<T>) -> Result<T> {
        if self.frequencies != reference.frequencies {
            return Err(Error::GridMismatch("PSD frequency grids differ".into()));
        }
        let denom = squared_norm(&reference.power).sqrt();
        if !(denom > T::zero()) {
            return Err(Error::ZeroNormalizer);
        }
        Ok(squared_dist(&self.power, &reference.power).sqrt() / denom)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frequency,power")?;
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            writeln!(w, "{:.16e},{:.16e}", f, p)?;
        }
        Ok(())
    }
}

/// Welch estimate: Hann-windowed segments, constant detrend per segment,
/// density scaling, averaged over segments.
pub fn welch_psd<T: Real + FftNum>(series: &[T], dt: T, cfg: &WelchConfig) -> Result<PsdEstimate<T>> {
    let len = cfg.segment_len;
    if len < 2 || !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidParameter("segment length must be at least 2 and overlap in [0, 1)".into()));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter("sample spacing must be positive".into()));
    }
    if series.len() < len {
        return Err(Error::SeriesTooShort { len: series.len(), segment: len });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "PSD input", step: 0 });
    }
    let hop = (len - (len as f64 * cfg.overlap).round() as usize).max(1);
    let n_segments = (series.len() - len) / hop + 1;

    let two_pi = T::two_pi();
    let n_t = T::from_usize_lossy(len);
    let window: Vec<T> = (0..len)
        .map(|i| T::lit(0.5) - T::lit(0.5) * (two_pi * T::from_usize_lossy(i) / n_t).cos())
        .collect();
    let window_power = squared_norm(&window);

    let fft = FftPlanner::<T>::new().plan_fft_forward(len);
    let half = len / 2;
    let mut acc = vec![T::zero(); half + 1];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); len];
    for s in 0..n_segments {
        let seg = &series[s * hop..s * hop + len];
        let mean = seg.iter().fold(T::zero(), |a, x| a + *x) / n_t;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((*x - mean) * *w, T::zero());
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
    }

    let fs = T::one() / dt;
    let scale = T::one() / (fs * window_power * T::from_usize_lossy(n_segments));
    let two = T::lit(2.0);
    let mut frequencies = Vec::with_capacity(half);
    let mut power = Vec::with_capacity(half);
    for (k, a) in acc.iter().enumerate().skip(1) {
        let one_sided = if len % 2 == 0 && k == half { T::one() } else { two };
        frequencies.push(T::from_usize_lossy(k) * fs / n_t);
        power.push(*a * scale * one_sided);
    }
    Ok(PsdEstimate { frequencies, power })
}

/// PSD of one component of a trajectory.
pub fn component_psd<T: Real + FftNum>(traj: &Trajectory<T>, component: usize, cfg: &WelchConfig) -> Result<PsdEstimate<T>> {
    if component >= traj.dim() {
        return Err(Error::DimensionMismatch { expected: traj.dim(), got: component });
    }
    welch_psd(&traj.component(component), traj.dt(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{compute_stats, integrate_and_sample, normalize};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(rows: &[Vec<f64>], dt: f64) -> Trajectory<f64> {
        Trajectory::from_rows(rows, dt, 0.0).unwrap()
    }

    #[test]
    fn vpt_examples() {
        let truth = traj(&vec![vec![1.0, 0.0]; 10], 0.5);
        let cfg = VptConfig { kappa: 0.9, lyapunov_time: 2.0 };
        assert_eq!(valid_prediction_time(&truth, &truth, &cfg).unwrap(), 10.0 * 0.5 / 2.0);

        let mut rows = vec![vec![1.0, 0.0]; 10];
        rows[4] = vec![2.0, 0.0];
        assert_eq!(valid_prediction_time(&traj(&rows, 0.5), &truth, &cfg).unwrap(), 4.0 * 0.5 / 2.0);
        rows[0] = vec![5.0, 0.0];
        assert_eq!(valid_prediction_time(&traj(&rows, 0.5), &truth, &cfg).unwrap(), 0.0);

        // error of exactly kappa is still valid
        let mut rows = vec![vec![1.0, 0.0]; 10];
        rows[3] = vec![1.0, 0.5];
        let cfg = VptConfig { kappa: 0.5, lyapunov_time: 1.0 };
        assert_eq!(valid_prediction_time(&traj(&rows, 0.5), &truth, &cfg).unwrap(), 5.0);

        let short = traj(&vec![vec![1.0, 0.0]; 9], 0.5);
        assert!(matches!(valid_prediction_time(&short, &truth, &cfg), Err(Error::GridMismatch(_))));
        let other_dt = traj(&vec![vec![1.0, 0.0]; 10], 0.25);
        assert!(matches!(valid_prediction_time(&other_dt, &truth, &cfg), Err(Error::GridMismatch(_))));
    }

    proptest! {
        #[test]
        fn vpt_is_nonnegative_and_bounded(
            values in prop::collection::vec(-5.0f64..5.0, 40),
            offsets in prop::collection::vec(-5.0f64..5.0, 40),
        ) {
            let truth = Trajectory::new(values.clone(), 2, 0.1, 0.0).unwrap();
            let pred = Trajectory::new(values.iter().zip(&offsets).map(|(a, b)| a + b).collect(), 2, 0.1, 0.0).unwrap();
            let cfg = VptConfig { kappa: 0.9, lyapunov_time: 1.0 };
            let v = valid_prediction_time(&pred, &truth, &cfg).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= 20.0 * 0.1 + 1e-12);
            prop_assert_eq!(valid_prediction_time(&truth, &truth, &cfg).unwrap(), 20.0 * 0.1);
        }
    }

    #[test]
    fn persistence_examples() {
        let t = traj(&[vec![0.0], vec![1.0], vec![3.0]], 1.0);
        assert_eq!(persistence_normalizer(&t).unwrap(), 1.5);
        assert!(persistence_normalizer(&traj(&[vec![0.0]], 1.0)).is_err());
    }

    fn lorenz_setup(n: usize) -> (SystemSpec<f64>, Trajectory<f64>, NormalizationStats<f64>) {
        let spec = SystemSpec::lorenz();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = integrate_and_sample(&spec, InitialCondition::Random, 0.001, 0.06, n, 20.0, &mut rng).unwrap();
        let stats = compute_stats(&raw, n).unwrap();
        (spec, normalize(&raw, &stats).unwrap(), stats)
    }

    #[test]
    fn map_error_of_true_trajectory_is_zero() {
        let (spec, t, stats) = lorenz_setup(200);
        let cfg = MapErrorConfig { tau_int: 0.001, n_predict: usize::MAX, persistence: persistence_normalizer(&t).unwrap() };
        let errs = normalized_map_errors(&t, &spec, &stats, &cfg).unwrap();
        assert_eq!(errs.len(), 199);
        assert!(errs.iter().all(|e| *e < 1e-12), "max {:?}", errs.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn map_error_of_persistence_is_one() {
        // repeating each true point: error at step j is ‖F(u_j) - u_j‖ = ‖u_{j+1} - u_j‖
        let (spec, t, stats) = lorenz_setup(500);
        let cfg = MapErrorConfig { tau_int: 0.001, n_predict: usize::MAX, persistence: persistence_normalizer(&t).unwrap() };
        let mut rows = Vec::new();
        for i in 0..t.len() {
            rows.push(t.row(i).to_vec());
            rows.push(t.row(i).to_vec());
        }
        let doubled = traj(&rows, 0.06);
        let errs = normalized_map_errors(&doubled, &spec, &stats, &cfg).unwrap();
        // the last repeated point steps past the end of the series
        let persistent: Vec<f64> = errs.iter().step_by(2).take(t.len() - 1).copied().collect();
        let mean = persistent.iter().sum::<f64>() / persistent.len() as f64;
        assert!((mean - 1.0).abs() < 1e-9, "mean {mean}");
        assert!(errs.iter().skip(1).step_by(2).all(|e| *e < 1e-12));
    }

    #[test]
    fn map_error_rejects_delay_and_zero_normalizer() {
        let (spec, t, stats) = lorenz_setup(10);
        let cfg = MapErrorConfig { tau_int: 0.001, n_predict: usize::MAX, persistence: 0.0 };
        assert!(matches!(normalized_map_errors(&t, &spec, &stats, &cfg), Err(Error::ZeroNormalizer)));
        let mg = SystemSpec::mackey_glass();
        let cfg = MapErrorConfig { tau_int: 0.001, n_predict: usize::MAX, persistence: 1.0 };
        let t1 = t.select_components(&[0]).unwrap();
        assert!(matches!(normalized_map_errors(&t1, &mg, &stats.select(&[0]), &cfg), Err(Error::DelaySystem)));
    }

    #[test]
    fn psd_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1 << 15;
        // white noise plus a tone
        let x: Vec<f64> = (0..n)
            .map(|i| (rng.random::<f64>() - 0.5) * 2.0 + (0.3 * i as f64).sin())
            .collect();
        let dt = 0.05;
        let psd = welch_psd(&x, dt, &WelchConfig::default()).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let rel = (psd.integrated_power() - var).abs() / var;
        assert!(rel < 0.05, "relative Parseval error {rel}");
        assert_eq!(psd.frequencies.len(), 2048);
        assert!((psd.frequencies[0] - 1.0 / (4096.0 * dt)).abs() < 1e-12);
    }

    #[test]
    fn psd_tones() {
        let n = 1 << 15;
        let dt = 1.0;
        let (k1, k2) = (200.0, 700.0);
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64;
                2.0 * (std::f64::consts::TAU * k1 / 4096.0 * t).sin() + (std::f64::consts::TAU * k2 / 4096.0 * t).sin()
            })
            .collect();
        let psd = welch_psd(&x, dt, &WelchConfig::default()).unwrap();
        let argmax = |lo: usize, hi: usize| (lo..hi).max_by(|a, b| psd.power[*a].total_cmp(&psd.power[*b])).unwrap();
        let p1 = argmax(0, 450);
        let p2 = argmax(450, 2048);
        assert_eq!(psd.frequencies[p1], k1 / 4096.0);
        assert_eq!(psd.frequencies[p2], k2 / 4096.0);
        let ratio = psd.power[p1] / psd.power[p2];
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn psd_errors_and_distance() {
        assert!(matches!(
            welch_psd(&[0.0f64; 100], 1.0, &WelchConfig::default()),
            Err(Error::SeriesTooShort { .. })
        ));
        let x: Vec<f64> = (0..8192).map(|i| (i as f64 * 0.1).sin()).collect();
        let a = welch_psd(&x, 1.0, &WelchConfig::default()).unwrap();
        assert_eq!(a.relative_l2_distance(&a).unwrap(), 0.0);
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let b = welch_psd(&doubled, 1.0, &WelchConfig::default()).unwrap();
        assert!((b.relative_l2_distance(&a).unwrap() - 3.0).abs() < 1e-9);
        let f32s: Vec<f32> = x.iter().map(|v| *v as f32).collect();
        assert_eq!(welch_psd(&f32s, 1.0, &WelchConfig::default()).unwrap().power.len(), 2048);
    }
}
