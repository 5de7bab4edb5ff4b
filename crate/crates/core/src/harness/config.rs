//! Declarative experiment configuration. A configuration is a JSON document
//! mirroring [`ExperimentConfig`]; missing fields take their defaults, unknown
//! fields are rejected. Sweeps and CLI flags override fields by dotted path
//! (`reservoir.n_nodes`, `trajectory.tau`, ...).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::forecaster::ModelKind;
use crate::ngrc::NgrcConfig;
use crate::reservoir::ReservoirParams;
use crate::systems::{steps_per_sample, SystemKind, SystemSpec};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Overrides of the standard parameters by name.
    pub params: BTreeMap<String, f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig { kind: SystemKind::Lorenz, params: BTreeMap::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Sampling step; `None` selects the per-system default.
    pub tau: Option<f64>,
    pub tau_int: f64,
    pub n_train: usize,
    pub n_predict: usize,
    /// Transient discarded before the first sample.
    pub settle_time: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig { tau: None, tau_int: 0.001, n_train: 10_000, n_predict: 2000, settle_time: 20.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupMode {
    /// `reservoir.n_warmup` steps.
    Fixed,
    /// Ten synchronization times, capped at a quarter of the training data.
    Sync,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub beta: f64,
    /// When set, the ridge parameter is `n_train * beta_per_sample` and `beta` is ignored.
    pub beta_per_sample: Option<f64>,
    pub noise_std: f64,
    pub warmup: WarmupMode,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings { beta: 1e-8, beta_per_sample: None, noise_std: 1e-3, warmup: WarmupMode::Fixed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgrcSettings {
    pub k: usize,
    pub s: usize,
}

impl Default for NgrcSettings {
    fn default() -> Self {
        NgrcSettings { k: 2, s: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path of the overridden field.
    pub parameter: String,
    pub values: Vec<Value>,
}

/// How the axes of a multi-axis sweep combine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCombine {
    /// Outer product of the axes.
    #[default]
    Grid,
    /// Each axis swept on its own with the other fields at their base values.
    Union,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<SweepAxis>,
    pub combine: SweepCombine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub vpt: bool,
    pub map_error: bool,
    pub psd: bool,
    /// Length of the long prediction used for spectra.
    pub psd_steps: usize,
    /// Component whose spectrum is compared.
    pub psd_component: usize,
    pub psd_segment: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { vpt: true, map_error: false, psd: false, psd_steps: 1 << 15, psd_component: 2, psd_segment: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemConfig,
    pub trajectory: TrajectoryConfig,
    pub reservoir: ReservoirParams<f64>,
    pub ngrc: NgrcSettings,
    pub training: TrainingSettings,
    pub models: Vec<ModelKind>,
    pub trials: usize,
    pub base_seed: u64,
    pub sweep: Option<SweepConfig>,
    pub outputs: OutputConfig,
    /// Observed components; `None` observes the full state.
    pub partial_state: Option<Vec<usize>>,
    /// Lyapunov time override; `None` estimates it from the system.
    pub lyapunov_time: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            system: SystemConfig::default(),
            trajectory: TrajectoryConfig::default(),
            reservoir: ReservoirParams::default(),
            ngrc: NgrcSettings::default(),
            training: TrainingSettings::default(),
            models: ModelKind::ALL.to_vec(),
            trials: 64,
            base_seed: 0,
            sweep: None,
            outputs: OutputConfig::default(),
            partial_state: None,
            lyapunov_time: None,
        }
    }
}

/// Sampling step used when a configuration leaves it open. Away from Lorenz these
/// put a standalone NGRC in the same weakened but stable regime; the Mackey-Glass
/// step makes six delays span the equation's delay.
pub fn default_tau(kind: SystemKind) -> f64 {
    match kind {
        SystemKind::Lorenz => 0.06,
        SystemKind::Rossler => 0.09,
        SystemKind::DoubleScroll => 0.25,
        SystemKind::MackeyGlass => 0.333,
    }
}

/// NGRC delay spacing used when a scenario targets a delay system.
pub const MACKEY_GLASS_NGRC_SPACING: usize = 6;

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn tau(&self) -> f64 {
        self.trajectory.tau.unwrap_or_else(|| default_tau(self.system.kind))
    }

    pub fn system_spec(&self) -> Result<SystemSpec<f64>> {
        SystemSpec::with_params(self.system.kind, &self.system.params)
    }

    /// Dimension of the series the models see.
    pub fn observed_dim(&self) -> usize {
        self.partial_state.as_ref().map_or(self.system.kind.dim(), Vec::len)
    }

    pub fn ngrc_config(&self) -> Result<NgrcConfig> {
        NgrcConfig::new(self.ngrc.k, self.ngrc.s, self.observed_dim())
    }

    pub fn effective_beta(&self) -> f64 {
        match self.training.beta_per_sample {
            Some(b) => b * self.trajectory.n_train as f64,
            None => self.training.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return bad("models are listed more than once".into());
        }
        let t = &self.trajectory;
        if t.n_train < 3 || t.n_predict == 0 {
            return bad("n_train must be at least 3 and n_predict at least 1".into());
        }
        if !(t.settle_time >= 0.0) {
            return bad("settle_time must be nonnegative".into());
        }
        steps_per_sample(self.tau(), t.tau_int).map_err(|e| Error::Config(e.to_string()))?;
        self.system_spec().map_err(|e| Error::Config(e.to_string()))?;
        self.reservoir.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.models.iter().any(|m| m.uses_reservoir())
            && self.training.warmup == WarmupMode::Fixed
            && self.reservoir.n_warmup + 1 >= t.n_train
        {
            return bad("reservoir warm-up leaves no training columns".into());
        }
        if let Some(obs) = &self.partial_state {
            let d = self.system.kind.dim();
            if obs.is_empty() || obs.iter().any(|&i| i >= d) {
                return bad(format!("observed components must be nonempty indices below {d}"));
            }
        }
        self.ngrc_config().map_err(|e| Error::Config(e.to_string()))?;
        if self.ngrc_config()?.warmup_steps() + 1 >= t.n_train {
            return bad("NGRC delay window leaves no training columns".into());
        }
        if !(self.training.noise_std >= 0.0) || !(self.effective_beta() >= 0.0) {
            return bad("noise level and ridge parameter must be nonnegative".into());
        }
        if let Some(l) = self.lyapunov_time {
            if !(l > 0.0) {
                return bad("lyapunov_time must be positive".into());
            }
        }
        let o = &self.outputs;
        if o.map_error && self.system.kind == SystemKind::MackeyGlass {
            return bad("map error is undefined for delay systems".into());
        }
        if o.map_error && self.partial_state.is_some() {
            return bad("map error needs the full state".into());
        }
        if o.psd {
            let dim = self.observed_dim();
            if o.psd_component >= dim {
                return bad(format!("psd_component must be below {dim}"));
            }
            if o.psd_segment < 2 || o.psd_steps < o.psd_segment {
                return bad("psd_steps must cover at least one segment".into());
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.axes.is_empty() {
                return bad("a sweep needs at least one axis".into());
            }
            for axis in &sweep.axes {
                if axis.values.is_empty() {
                    return bad(format!("sweep over `{}` has no values", axis.parameter));
                }
            }
            for point in self.sweep_points()? {
                point.config.validate()?;
            }
        }
        Ok(())
    }

    /// Returns a copy with the field at dotted `path` replaced by `value`.
    pub fn with_override(&self, path: &str, value: &Value) -> Result<Self> {
        let mut doc = self.to_json();
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(key),
                _ => None,
            }
            .ok_or_else(|| Error::UnknownParameter(path.to_string()))?;
        }
        *slot = value.clone();
        let mut cfg: ExperimentConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(format!("override `{path}`: {e}")))?;
        if path == "trajectory.n_train" {
            // ridge strength scales with the data and the warm-up follows synchronization
            cfg.training.beta_per_sample.get_or_insert(1e-12);
            cfg.training.warmup = WarmupMode::Sync;
        }
        Ok(cfg)
    }

    /// Expanded sweep: one configuration per point, in row-major order over the
    /// axes for grids and axis by axis for unions.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let base = SweepPoint { labels: Vec::new(), config: ExperimentConfig { sweep: None, ..self.clone() } };
        let Some(sweep) = &self.sweep else {
            return Ok(vec![base]);
        };
        if sweep.combine == SweepCombine::Union {
            let mut points = Vec::new();
            for axis in &sweep.axes {
                for v in &axis.values {
                    let config = base.config.with_override(&axis.parameter, v)?;
                    points.push(SweepPoint { labels: vec![(axis.parameter.clone(), value_label(v))], config });
                }
            }
            return Ok(points);
        }
        let mut points = vec![base];
        for axis in &sweep.axes {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for p in &points {
                for v in &axis.values {
                    let config = p.config.with_override(&axis.parameter, v)?;
                    let mut labels = p.labels.clone();
                    labels.push((axis.parameter.clone(), value_label(v)));
                    next.push(SweepPoint { labels, config });
                }
            }
            points = next;
        }
        Ok(points)
    }
}

/// One sweep point: the overrides that produced it and the resulting configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub labels: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

impl SweepPoint {
    /// `a;b` joined parameter names, or `none`.
    pub fn param_label(&self) -> String {
        if self.labels.is_empty() {
            "none".into()
        } else {
            self.labels.iter().map(|(p, _)| p.as_str()).collect::<Vec<_>>().join(";")
        }
    }

    pub fn value_label(&self) -> String {
        if self.labels.is_empty() {
            String::new()
        } else {
            self.labels.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(";")
        }
    }
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
