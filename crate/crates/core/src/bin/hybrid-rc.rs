use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use hybrid_rc::harness::trial::{prepare_trial, train_and_predict, truth_psd, welch_config, TrialContext};
use hybrid_rc::harness::{run_experiment, scenario, write_outputs, ExperimentConfig, ExperimentReport, SCENARIOS};
use hybrid_rc::metrics::component_psd;
use hybrid_rc::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_TRIALS_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "hybrid-rc", version, about = "RC, NGRC and hybrid RC-NGRC forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write summary and per-trial CSVs plus a JSON report.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the named scenarios.
    ListScenarios,
    /// Write Welch spectra of the truth and each model's long prediction for one trial.
    Psd {
        #[command(flatten)]
        source: ConfigSource,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct ConfigSource {
    /// JSON configuration; merged over the scenario when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named scenario (see `list-scenarios`).
    #[arg(long)]
    scenario: Option<String>,
    /// Field override `path=value`, e.g. `reservoir.n_nodes=100` (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ConfigSource {
    fn load(&self) -> hybrid_rc::Result<ExperimentConfig> {
        let mut config = match (&self.scenario, &self.config) {
            (None, None) => return Err(Error::Config("give --config, --scenario or both".into())),
            (Some(name), None) => scenario(name)?,
            (None, Some(path)) => ExperimentConfig::from_path(path)?,
            (Some(name), Some(path)) => {
                let mut doc = scenario(name)?.to_json();
                let patch: Value = serde_json::from_str(&fs::read_to_string(path)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                merge(&mut doc, patch);
                serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?
            }
        };
        for o in &self.overrides {
            let (path, raw) =
                o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not PATH=VALUE")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            config = config.with_override(path, &value)?;
        }
        Ok(config)
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::UnknownScenario(_) | Error::UnknownParameter(_) | Error::Json(_) | Error::InvalidParameter(_)
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_report(report: &ExperimentReport) {
    println!(
        "{:<28} {:<14} {:<7} {:>4} {:>9} {:>9} {:>9} {:>11} {:>6}",
        "sweep", "value", "model", "n", "vpt_mean", "vpt_se", "vpt_med", "map_err", "div"
    );
    for p in &report.points {
        for s in &p.summaries {
            println!(
                "{:<28} {:<14} {:<7} {:>4} {:>9} {:>9} {:>9} {:>11} {:>6.2}",
                p.sweep_param,
                p.sweep_value,
                s.model.name(),
                s.n_trials,
                fmt_opt(s.vpt.map(|v| v.mean)),
                fmt_opt(s.vpt.map(|v| v.stderr)),
                fmt_opt(s.vpt.map(|v| v.median)),
                s.map_error.map_or_else(|| "-".into(), |m| format!("{:.3e}", m.mean)),
                s.diverged_frac,
            );
        }
    }
    println!("wall clock {:.1} s", report.wall_clock_seconds);
}

fn run(
    source: &ConfigSource,
    trials: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<&PathBuf>,
) -> hybrid_rc::Result<ExperimentReport> {
    let mut config = source.load()?;
    if let Some(t) = trials {
        config.trials = t;
    }
    if let Some(s) = seed {
        config.base_seed = s;
    }
    config.validate()?;
    let report = run_experiment(&config, workers)?;
    print_report(&report);
    if let Some(dir) = out {
        for path in write_outputs(&report, dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(report)
}

fn psd(source: &ConfigSource, out: &PathBuf, trial: usize, seed: Option<u64>) -> hybrid_rc::Result<()> {
    let mut config = source.load()?;
    config.outputs.psd = true;
    config.sweep = None;
    if let Some(s) = seed {
        config.base_seed = s;
    }
    let ctx = TrialContext::new(&config)?;
    let data = prepare_trial(&ctx, trial)?;
    let truth = truth_psd(&ctx, &data)?;
    let steps = config.outputs.psd_steps;
    let mut columns = Vec::new();
    for &kind in &config.models {
        let (_, prediction) = train_and_predict(&ctx, &data, kind)?;
        let power = if prediction.len() >= steps {
            let long = prediction.truncated(steps).trajectory().expect("nonempty prefix");
            let psd = component_psd(&long, config.outputs.psd_component, &welch_config(&config))?;
            eprintln!("{kind}: relative L2 distance {:.4}", psd.relative_l2_distance(&truth)?);
            Some(psd.power)
        } else {
            eprintln!("{kind}: prediction diverged at step {}", prediction.len());
            None
        };
        columns.push((kind, power));
    }
    let mut text = String::from("frequency,truth");
    for (kind, _) in &columns {
        text.push(',');
        text.push_str(kind.name());
    }
    text.push('\n');
    for (i, (f, p)) in truth.frequencies.iter().zip(&truth.power).enumerate() {
        text.push_str(&format!("{f:.16e},{p:.16e}"));
        for (_, power) in &columns {
            text.push(',');
            if let Some(pw) = power {
                text.push_str(&format!("{:.16e}", pw[i]));
            }
        }
        text.push('\n');
    }
    fs::write(out, text)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::ListScenarios => {
            for s in SCENARIOS {
                println!("{:<20} {}", s.name, s.description);
            }
            return ExitCode::SUCCESS;
        }
        Command::Run { source, trials, seed, workers, out } => {
            run(source, *trials, *seed, *workers, out.as_ref()).map(|r| r.failure_fraction())
        }
        Command::Psd { source, out, trial, seed } => psd(source, out, *trial, *seed).map(|_| 0.0),
    };
    match outcome {
        Ok(failed) if failed > 0.5 => {
            eprintln!("error: {:.0}% of trials failed", failed * 100.0);
            ExitCode::from(EXIT_TRIALS_FAILED)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
