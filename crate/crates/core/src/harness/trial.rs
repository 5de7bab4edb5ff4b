//! One Monte Carlo trial: a fresh trajectory and reservoir realization, every
//! requested model trained on the same data, and their forecast metrics.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, WarmupMode};
use crate::forecaster::{add_input_noise, train_with_inputs, ForecastModel, Forecaster, ModelKind, Prediction, TrainingConfig};
use crate::metrics::{
    component_psd, mean_map_error, persistence_normalizer, prediction_vpt, MapErrorConfig, PsdEstimate, VptConfig,
    WelchConfig,
};
use crate::ngrc::NgrcConfig;
use crate::reservoir::{build_reservoir, estimate_sync_time, recommended_warmup_steps, Reservoir, ReservoirState};
use crate::systems::{
    compute_stats, estimate_max_lyapunov, integrate_and_sample, normalize, InitialCondition, NormalizationStats,
    SystemSpec, Trajectory,
};
use crate::{Error, Result};

/// Substream indices of a trial seed.
pub mod streams {
    pub const INITIAL_CONDITION: u64 = 0;
    pub const RESERVOIR: u64 = 1;
    pub const INPUT_NOISE: u64 = 2;
    pub const SYNC_PROBE: u64 = 3;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under `base_seed`; a pure function of both.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    splitmix64(splitmix64(base_seed) ^ (trial as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Independent generator for one purpose within a trial.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of the Lyapunov estimate; fixed so it does not depend on the trial seeds.
const LYAPUNOV_SEED: u64 = 0x4C59_4150;
const LYAPUNOV_DURATION: f64 = 2000.0;
const LYAPUNOV_RENORM: f64 = 0.5;

fn lyapunov_cache() -> &'static Mutex<HashMap<String, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Lyapunov time `1 / Λ` of `spec`, estimated once per parameter set and cached.
pub fn lyapunov_time(spec: &SystemSpec<f64>, tau_int: f64) -> Result<f64> {
    let key = format!("{:?}/{tau_int}", spec);
    if let Some(t) = lyapunov_cache().lock().expect("cache lock").get(&key) {
        return Ok(*t);
    }
    // delay systems carry a long history vector; a coarser renormalization keeps them cheap
    let renorm = if spec.has_delay() { 2.0 * LYAPUNOV_RENORM } else { LYAPUNOV_RENORM };
    let mut rng = ChaCha8Rng::seed_from_u64(LYAPUNOV_SEED);
    let lambda = estimate_max_lyapunov(spec, LYAPUNOV_DURATION, renorm, tau_int, &mut rng)?;
    let t = 1.0 / lambda;
    lyapunov_cache().lock().expect("cache lock").insert(key, t);
    Ok(t)
}

/// Everything a trial needs that does not depend on the trial index.
#[derive(Clone, Debug)]
pub struct TrialContext {
    pub config: ExperimentConfig,
    pub spec: SystemSpec<f64>,
    pub tau: f64,
    pub lyapunov_time: f64,
    pub ngrc: NgrcConfig,
}

impl TrialContext {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.system_spec()?;
        let lyap = match config.lyapunov_time {
            Some(t) => t,
            None => lyapunov_time(&spec, config.trajectory.tau_int)?,
        };
        Ok(TrialContext {
            config: config.clone(),
            spec,
            tau: config.tau(),
            lyapunov_time: lyap,
            ngrc: config.ngrc_config()?,
        })
    }
}

/// Outcome of one model in one trial.
#[derive(Clone, Debug, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub model: ModelKind,
    /// Valid prediction time in Lyapunov times (0 for failed trials).
    pub vpt_lyap: f64,
    pub mean_map_error: Option<f64>,
    /// Relative L2 distance of the prediction's spectrum to the truth's.
    pub psd_distance: Option<f64>,
    pub diverged: bool,
    /// Reservoir warm-up used (0 for the NGRC).
    pub warmup_steps: usize,
    /// Set when the trial could not be completed.
    pub failure: Option<String>,
    /// Wall-clock seconds; excluded from equality.
    pub runtime: f64,
}

impl PartialEq for TrialResult {
    fn eq(&self, other: &Self) -> bool {
        self.trial == other.trial
            && self.seed == other.seed
            && self.model == other.model
            && self.vpt_lyap.to_bits() == other.vpt_lyap.to_bits()
            && self.mean_map_error.map(f64::to_bits) == other.mean_map_error.map(f64::to_bits)
            && self.psd_distance.map(f64::to_bits) == other.psd_distance.map(f64::to_bits)
            && self.diverged == other.diverged
            && self.warmup_steps == other.warmup_steps
            && self.failure == other.failure
    }
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    fn failure(trial: usize, seed: u64, model: ModelKind, err: &Error, runtime: f64) -> Self {
        TrialResult {
            trial,
            seed,
            model,
            vpt_lyap: 0.0,
            mean_map_error: None,
            psd_distance: None,
            diverged: false,
            warmup_steps: 0,
            failure: Some(err.to_string()),
            runtime,
        }
    }
}

/// Data shared by all models of one trial, in normalized units.
pub struct TrialData {
    pub seed: u64,
    pub stats: NormalizationStats<f64>,
    /// Observed training series.
    pub train: Trajectory<f64>,
    /// Noisy copy of `train` that drives the models.
    pub noisy: Trajectory<f64>,
    /// Observed continuation after the training data.
    pub future: Trajectory<f64>,
    pub reservoir: Option<Arc<Reservoir<f64>>>,
    pub warmup_steps: usize,
}

/// Number of steps predicted after training.
pub fn future_steps(config: &ExperimentConfig) -> usize {
    let o = &config.outputs;
    if o.psd {
        config.trajectory.n_predict.max(o.psd_steps)
    } else {
        config.trajectory.n_predict
    }
}

/// Generates the trajectory, reservoir and noisy inputs of trial `trial`.
pub fn prepare_trial(ctx: &TrialContext, trial: usize) -> Result<TrialData> {
    let cfg = &ctx.config;
    let seed = trial_seed(cfg.base_seed, trial);
    let t = &cfg.trajectory;
    let n_train = t.n_train;
    let total = n_train + future_steps(cfg);

    let raw = integrate_and_sample(
        &ctx.spec,
        InitialCondition::Random,
        t.tau_int,
        ctx.tau,
        total,
        t.settle_time,
        &mut substream(seed, streams::INITIAL_CONDITION),
    )?;
    let stats = compute_stats(&raw, n_train)?;
    let mut series = normalize(&raw, &stats)?;
    if let Some(obs) = &cfg.partial_state {
        series = series.select_components(obs)?;
    }
    let train = series.segment(0, n_train)?;
    let future = series.segment(n_train, total)?;

    let reservoir = if cfg.models.iter().any(|m| m.uses_reservoir()) {
        let res = build_reservoir(&cfg.reservoir, series.dim(), &mut substream(seed, streams::RESERVOIR))?;
        Some(Arc::new(res))
    } else {
        None
    };
    let warmup_steps = match (&reservoir, cfg.training.warmup) {
        (None, _) => 0,
        (Some(_), WarmupMode::Fixed) => cfg.reservoir.n_warmup,
        (Some(res), WarmupMode::Sync) => {
            let mut probe = substream(seed, streams::SYNC_PROBE);
            let r2: Vec<f64> = (0..res.n_nodes()).map(|_| probe.random::<f64>() * 2.0 - 1.0).collect();
            let t_sync = estimate_sync_time(
                res,
                train.rows(),
                &ReservoirState::zeros(res.n_nodes()),
                &ReservoirState::from_vec(r2),
                ctx.tau,
            )?;
            recommended_warmup_steps(t_sync, ctx.tau, n_train)
        }
    };
    let noisy = add_input_noise(&train, cfg.training.noise_std, &mut substream(seed, streams::INPUT_NOISE))?;
    Ok(TrialData { seed, stats, train, noisy, future, reservoir, warmup_steps })
}

/// Trains `kind` on the trial data and runs the autonomous prediction over the whole future.
pub fn train_and_predict(
    ctx: &TrialContext,
    data: &TrialData,
    kind: ModelKind,
) -> Result<(ForecastModel<f64>, Prediction<f64>)> {
    let cfg = &ctx.config;
    let forecaster = Forecaster::of_kind(kind, data.reservoir.clone(), ctx.ngrc)?;
    let tcfg = TrainingConfig {
        beta: cfg.effective_beta(),
        noise_std: cfg.training.noise_std,
        n_train: cfg.trajectory.n_train,
        n_warmup: if kind.uses_reservoir() { data.warmup_steps } else { 0 },
    };
    let model = train_with_inputs(&forecaster, &data.noisy, &data.train, &tcfg)?;
    let prediction = model.predict_autonomous(&data.train, data.future.len())?;
    Ok((model, prediction))
}

fn evaluate(
    ctx: &TrialContext,
    data: &TrialData,
    kind: ModelKind,
    truth_psd: Option<&PsdEstimate<f64>>,
    persistence: Option<f64>,
) -> Result<TrialResult> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let (_, prediction) = train_and_predict(ctx, data, kind)?;
    let n_predict = cfg.trajectory.n_predict;
    let head = prediction.truncated(n_predict);
    let truth = data.future.segment(0, n_predict)?;

    let vpt_lyap = prediction_vpt(&head, &truth, &VptConfig::new(ctx.lyapunov_time))?;

    let mean_map_error = match persistence {
        Some(p) if !head.is_empty() => {
            let mut rows = data.train.row(data.train.len() - 1).to_vec();
            rows.extend_from_slice(head.as_slice());
            let series = Trajectory::new(rows, head.dim(), ctx.tau, 0.0)?;
            let map_cfg = MapErrorConfig { tau_int: cfg.trajectory.tau_int, n_predict, persistence: p };
            mean_map_error(&series, &ctx.spec, &data.stats, &map_cfg)?
        }
        _ => None,
    };

    let psd_distance = match truth_psd {
        Some(reference) if prediction.len() >= cfg.outputs.psd_steps => {
            let long = prediction.truncated(cfg.outputs.psd_steps).trajectory().expect("nonempty prefix");
            let psd = component_psd(&long, cfg.outputs.psd_component, &welch_config(cfg))?;
            Some(psd.relative_l2_distance(reference)?)
        }
        _ => None,
    };

    Ok(TrialResult {
        trial: 0,
        seed: data.seed,
        model: kind,
        vpt_lyap,
        mean_map_error,
        psd_distance,
        diverged: prediction.is_diverged(),
        warmup_steps: if kind.uses_reservoir() { data.warmup_steps } else { 0 },
        failure: None,
        runtime: started.elapsed().as_secs_f64(),
    })
}

pub fn welch_config(cfg: &ExperimentConfig) -> WelchConfig {
    WelchConfig { segment_len: cfg.outputs.psd_segment, ..WelchConfig::default() }
}

/// Spectrum of the true continuation used as the climate reference.
pub fn truth_psd(ctx: &TrialContext, data: &TrialData) -> Result<PsdEstimate<f64>> {
    let o = &ctx.config.outputs;
    let truth = data.future.segment(0, o.psd_steps)?;
    component_psd(&truth, o.psd_component, &welch_config(&ctx.config))
}

/// Runs trial `trial` for every configured model, in configuration order. Failures
/// are recorded in the results rather than returned.
pub fn run_trial(ctx: &TrialContext, trial: usize) -> Vec<TrialResult> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let seed = trial_seed(cfg.base_seed, trial);
    let fail_all = |e: &Error| {
        let dt = started.elapsed().as_secs_f64();
        cfg.models.iter().map(|&m| TrialResult::failure(trial, seed, m, e, dt)).collect::<Vec<_>>()
    };
    let data = match prepare_trial(ctx, trial) {
        Ok(d) => d,
        Err(e) => return fail_all(&e),
    };
    let reference = if cfg.outputs.psd {
        match truth_psd(ctx, &data) {
            Ok(p) => Some(p),
            Err(e) => return fail_all(&e),
        }
    } else {
        None
    };
    let persistence = if cfg.outputs.map_error {
        match persistence_normalizer(&data.train) {
            Ok(p) => Some(p),
            Err(e) => return fail_all(&e),
        }
    } else {
        None
    };
    cfg.models
        .iter()
        .map(|&kind| {
            let t0 = Instant::now();
            match evaluate(ctx, &data, kind, reference.as_ref(), persistence) {
                Ok(r) => TrialResult { trial, ..r },
                Err(e) => TrialResult::failure(trial, seed, kind, &e, t0.elapsed().as_secs_f64()),
            }
        })
        .collect()
}
