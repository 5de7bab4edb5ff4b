//! Summary statistics over trials.

use serde::Serialize;

use super::trial::TrialResult;
use crate::forecaster::ModelKind;

/// Mean, standard error of the mean, median and quartiles of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; 0 when `n = 1`.
    pub stderr: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Quantile with linear interpolation between order statistics of a sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Stats {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Stats> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Stats { n, mean, stderr, median: quantile(&sorted, 0.5), q1: quantile(&sorted, 0.25), q3: quantile(&sorted, 0.75) })
    }
}

/// Aggregate of one model at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    /// Completed trials (diverged ones included, failed ones not).
    pub n_trials: usize,
    pub n_failed: usize,
    pub vpt: Option<Stats>,
    pub map_error: Option<Stats>,
    pub psd_distance: Option<Stats>,
    /// Fraction of completed trials whose prediction diverged.
    pub diverged_frac: f64,
}

pub fn summarize(model: ModelKind, results: &[TrialResult]) -> ModelSummary {
    let done: Vec<&TrialResult> = results.iter().filter(|r| r.model == model && !r.failed()).collect();
    let n_failed = results.iter().filter(|r| r.model == model && r.failed()).count();
    let vpts: Vec<f64> = done.iter().map(|r| r.vpt_lyap).collect();
    let maps: Vec<f64> = done.iter().filter_map(|r| r.mean_map_error).collect();
    let psds: Vec<f64> = done.iter().filter_map(|r| r.psd_distance).collect();
    let diverged = done.iter().filter(|r| r.diverged).count();
    ModelSummary {
        model,
        n_trials: done.len(),
        n_failed,
        vpt: Stats::of(&vpts),
        map_error: Stats::of(&maps),
        psd_distance: Stats::of(&psds),
        diverged_frac: if done.is_empty() { 0.0 } else { diverged as f64 / done.len() as f64 },
    }
}

/// One summary per model, in the order given.
pub fn aggregate(models: &[ModelKind], results: &[TrialResult]) -> Vec<ModelSummary> {
    models.iter().map(|&m| summarize(m, results)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(model: ModelKind, vpt: f64, diverged: bool, failed: bool) -> TrialResult {
        TrialResult {
            trial: 0,
            seed: 0,
            model,
            vpt_lyap: vpt,
            mean_map_error: Some(vpt / 10.0),
            psd_distance: None,
            diverged,
            warmup_steps: 0,
            failure: failed.then(|| "boom".to_string()),
            runtime: 0.0,
        }
    }

    #[test]
    fn stats_example() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.stderr - 0.6454972243679028).abs() < 1e-15);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        let one = Stats::of(&[7.0]).unwrap();
        assert_eq!((one.stderr, one.median, one.q1), (0.0, 7.0, 7.0));
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn divergence_and_failure_bookkeeping() {
        let rs = vec![
            result(ModelKind::Rc, 1.0, false, false),
            result(ModelKind::Rc, 0.5, true, false),
            result(ModelKind::Rc, 0.0, false, true),
            result(ModelKind::Ngrc, 2.0, false, false),
        ];
        let s = summarize(ModelKind::Rc, &rs);
        assert_eq!(s.n_trials, 2);
        assert_eq!(s.n_failed, 1);
        assert_eq!(s.diverged_frac, 0.5);
        assert_eq!(s.vpt.unwrap().mean, 0.75);
        let all = aggregate(&ModelKind::ALL, &rs);
        assert_eq!(all.len(), 3);
        assert_eq!(all[2].n_trials, 0);
        assert!(all[2].vpt.is_none());
    }
}
