//! Named presets, one per reproduced figure or table. Sweep grids for figures are
//! read off plot axes and are approximate.

use serde_json::{json, Value};

use super::config::{ExperimentConfig, SweepAxis, SweepCombine, SweepConfig, MACKEY_GLASS_NGRC_SPACING};
use crate::systems::SystemKind;
use crate::{Error, Result};

pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo { name: "fig2", description: "Lorenz VPT distributions, small reservoir and large time step (100 trials)" },
    ScenarioInfo { name: "fig3", description: "Lorenz climate: Welch spectra of long predictions, z component (10 trials)" },
    ScenarioInfo { name: "fig4a", description: "Lorenz mean VPT versus reservoir size (64 trials per point)" },
    ScenarioInfo { name: "fig4b", description: "Lorenz mean VPT versus sampling time step (64 trials per point)" },
    ScenarioInfo { name: "fig5-sigma", description: "Lorenz mean VPT versus input scaling (64 trials per point)" },
    ScenarioInfo { name: "fig6a", description: "Lorenz mean VPT versus training length, N = 100, tau = 0.06" },
    ScenarioInfo { name: "fig6b", description: "Lorenz mean VPT versus training length, N = 500, tau = 0.01" },
    ScenarioInfo { name: "fig7-rossler", description: "Rossler mean VPT versus reservoir size and time step" },
    ScenarioInfo { name: "fig7-doublescroll", description: "Double scroll mean VPT versus reservoir size and time step" },
    ScenarioInfo { name: "fig7-mackeyglass", description: "Mackey-Glass mean VPT versus reservoir size and time step (s = 6)" },
    ScenarioInfo { name: "table2", description: "Mean normalized map errors for Lorenz, Rossler and double scroll (64 trials)" },
    ScenarioInfo { name: "supp-noise", description: "Lorenz mean VPT versus time step with and without input noise, N = 100" },
    ScenarioInfo { name: "supp-heatmap", description: "Lorenz mean VPT over input noise and ridge parameter (256 trials)" },
    ScenarioInfo { name: "supp-rho", description: "Lorenz mean VPT versus spectral radius" },
    ScenarioInfo { name: "supp-partial", description: "Lorenz x-only forecasting, NGRC k = 10 (100 trials)" },
    ScenarioInfo { name: "supp-c", description: "Lorenz mean VPT versus reservoir bias" },
    ScenarioInfo { name: "supp-k", description: "Lorenz mean VPT versus average degree" },
    ScenarioInfo { name: "supp-beta", description: "Lorenz mean VPT versus ridge parameter" },
];

fn axis(parameter: &str, values: Vec<Value>) -> SweepAxis {
    SweepAxis { parameter: parameter.into(), values }
}

fn sweep(axes: Vec<SweepAxis>, combine: SweepCombine) -> Option<SweepConfig> {
    Some(SweepConfig { axes, combine })
}

fn line(parameter: &str, values: Vec<Value>) -> Option<SweepConfig> {
    sweep(vec![axis(parameter, values)], SweepCombine::Grid)
}

fn sizes() -> Vec<Value> {
    vec![json!(25), json!(50), json!(100), json!(200), json!(500), json!(1000)]
}

fn time_steps() -> Vec<Value> {
    vec![json!(0.01), json!(0.02), json!(0.03), json!(0.06), json!(0.09), json!(0.12)]
}

/// Log-spaced training lengths from 10^2 to 10^4, four per decade.
fn training_lengths() -> Vec<Value> {
    (0..=8).map(|i| json!((10f64.powf(2.0 + i as f64 / 4.0)).round() as usize)).collect()
}

fn other_system(kind: SystemKind, time_steps: Vec<Value>) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.system.kind = kind;
    c.sweep = sweep(
        vec![axis("reservoir.n_nodes", sizes()), axis("trajectory.tau", time_steps)],
        SweepCombine::Union,
    );
    c
}

/// Configuration of the named scenario at the published trial counts.
pub fn scenario(name: &str) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    match name {
        "fig2" => c.trials = 100,
        "fig3" => {
            c.trials = 10;
            c.outputs.psd = true;
        }
        "fig4a" => c.sweep = line("reservoir.n_nodes", sizes()),
        "fig4b" => c.sweep = line("trajectory.tau", time_steps()),
        "fig5-sigma" => {
            let values = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0].map(|v| json!(v)).to_vec();
            c.sweep = line("reservoir.input_scale", values);
        }
        "fig6a" | "fig6b" => {
            let (n, tau) = if name == "fig6a" { (100, 0.06) } else { (500, 0.01) };
            c.reservoir.n_nodes = n;
            c.trajectory.tau = Some(tau);
            c.sweep = line("trajectory.n_train", training_lengths());
        }
        "fig7-rossler" => {
            let taus = [0.03, 0.05, 0.07, 0.09, 0.11, 0.13].map(|v| json!(v)).to_vec();
            c = other_system(SystemKind::Rossler, taus);
        }
        "fig7-doublescroll" => {
            let taus = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3].map(|v| json!(v)).to_vec();
            c = other_system(SystemKind::DoubleScroll, taus);
        }
        "fig7-mackeyglass" => {
            let taus = [0.1, 0.2, 0.333, 0.5, 0.75, 1.0].map(|v| json!(v)).to_vec();
            c = other_system(SystemKind::MackeyGlass, taus);
            c.ngrc.s = MACKEY_GLASS_NGRC_SPACING;
        }
        "table2" => {
            c.outputs.map_error = true;
            let kinds = [SystemKind::Lorenz, SystemKind::Rossler, SystemKind::DoubleScroll];
            c.sweep = line("system.kind", kinds.iter().map(|k| json!(k.name())).collect());
        }
        "supp-noise" => {
            c.reservoir.n_nodes = 100;
            c.sweep = sweep(
                vec![axis("training.noise_std", vec![json!(0.0), json!(1e-3)]), axis("trajectory.tau", time_steps())],
                SweepCombine::Grid,
            );
        }
        "supp-heatmap" => {
            c.trials = 256;
            let noise = [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1].map(|v| json!(v)).to_vec();
            let beta = [1e-10, 1e-8, 1e-6, 1e-4, 1e-2].map(|v| json!(v)).to_vec();
            c.sweep = sweep(vec![axis("training.noise_std", noise), axis("training.beta", beta)], SweepCombine::Grid);
        }
        "supp-rho" => {
            let values = [0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0, 1.2].map(|v| json!(v)).to_vec();
            c.sweep = line("reservoir.spectral_radius", values);
        }
        "supp-partial" => {
            c.trials = 100;
            c.partial_state = Some(vec![0]);
            c.ngrc.k = 10;
        }
        "supp-c" => {
            let values = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0].map(|v| json!(v)).to_vec();
            c.sweep = line("reservoir.bias", values);
        }
        "supp-k" => {
            let values = [1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 40.0].map(|v| json!(v)).to_vec();
            c.sweep = line("reservoir.avg_degree", values);
        }
        "supp-beta" => {
            let values = [1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2].map(|v| json!(v)).to_vec();
            c.sweep = line("training.beta", values);
        }
        other => return Err(Error::UnknownScenario(other.to_string())),
    }
    c.name = name.to_string();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scenario_builds_and_validates() {
        for info in SCENARIOS {
            let c = scenario(info.name).unwrap();
            assert_eq!(c.name, info.name);
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", info.name));
        }
        assert!(matches!(scenario("fig9"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn scenario_examples() {
        let t = scenario("table2").unwrap();
        assert_eq!(t.trials, 64);
        assert!(t.outputs.map_error);
        assert_eq!(t.sweep_points().unwrap().len(), 3);
        let f = scenario("fig2").unwrap();
        assert_eq!(f.trials, 100);
        assert!(f.outputs.vpt);
        let p = scenario("supp-partial").unwrap();
        assert_eq!(p.observed_dim(), 1);
        assert_eq!(p.ngrc.k, 10);
        assert_eq!(p.ngrc_config().unwrap().feature_dim(), 66);
        let lengths = training_lengths();
        assert_eq!(lengths.first().unwrap(), &json!(100));
        assert_eq!(lengths.last().unwrap(), &json!(10000));
    }
}
