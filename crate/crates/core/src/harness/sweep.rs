//! Runs every trial of every sweep point on a worker pool and aggregates the results.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::aggregate::{aggregate, ModelSummary};
use super::config::{ExperimentConfig, SweepPoint};
use super::trial::{run_trial, TrialContext, TrialResult};
use crate::{Error, Result};

/// Results of one sweep point.
#[derive(Clone, Debug, Serialize)]
pub struct PointReport {
    pub sweep_param: String,
    pub sweep_value: String,
    pub lyapunov_time: f64,
    pub summaries: Vec<ModelSummary>,
    /// Per-trial results in trial-index order, models in configuration order.
    pub trials: Vec<TrialResult>,
    #[serde(skip)]
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub points: Vec<PointReport>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    /// Fraction of (trial, model) runs that failed.
    pub fn failure_fraction(&self) -> f64 {
        let total: usize = self.points.iter().map(|p| p.trials.len()).sum();
        let failed: usize = self.points.iter().flat_map(|p| &p.trials).filter(|r| r.failed()).count();
        if total == 0 {
            0.0
        } else {
            failed as f64 / total as f64
        }
    }

    /// The point whose sweep labels equal `value` (joined with `;` for grids).
    pub fn point(&self, value: &str) -> Option<&PointReport> {
        self.points.iter().find(|p| p.sweep_value == value)
    }
}

impl PointReport {
    pub fn summary(&self, model: crate::forecaster::ModelKind) -> Option<&ModelSummary> {
        self.summaries.iter().find(|s| s.model == model)
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

/// Runs all trials of all sweep points. Trial seeds depend only on the base seed and
/// the trial index, so the same trial index sees the same trajectory and reservoir at
/// every sweep point, and results do not depend on `workers`.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let points: Vec<SweepPoint> = config.sweep_points()?;
    let pool = pool(workers)?;

    let contexts: Vec<TrialContext> =
        pool.install(|| points.par_iter().map(|p| TrialContext::new(&p.config)).collect::<Result<Vec<_>>>())?;
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..points[p].config.trials).map(move |t| (p, t))).collect();
    let results: Vec<Vec<TrialResult>> =
        pool.install(|| jobs.par_iter().map(|&(p, t)| run_trial(&contexts[p], t)).collect());

    let mut per_point: Vec<Vec<TrialResult>> = vec![Vec::new(); points.len()];
    for (&(p, _), r) in jobs.iter().zip(results) {
        per_point[p].extend(r);
    }
    let reports = points
        .into_iter()
        .zip(contexts)
        .zip(per_point)
        .map(|((point, ctx), trials)| PointReport {
            sweep_param: point.param_label(),
            sweep_value: point.value_label(),
            lyapunov_time: ctx.lyapunov_time,
            summaries: aggregate(&point.config.models, &trials),
            trials,
            config: point.config,
        })
        .collect();
    Ok(ExperimentReport { config: config.clone(), points: reports, wall_clock_seconds: started.elapsed().as_secs_f64() })
}
