//! `steinseq` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use steinseq::harness::{emit_power_plot, read_csv, run_experiment, ExperimentConfig, HarnessError};
use steinseq::hypothesis::TestConfig;
use steinseq::neighborhoods::{validate_graph, EditNeighborhood, NeighborhoodSpec};
use steinseq::scenarios::{build_scenario, catalog, scenario_info};
use steinseq::seqspace::{enumerate_space, Alphabet};

/// Largest space `validate-graph` will enumerate.
const GRAPH_STATE_CAP: usize = 2_000_000;

#[derive(Parser)]
#[command(name = "steinseq", version, about = "Kernel Stein goodness-of-fit tests for sequence models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
    /// Check symmetry and strong connectivity of a neighbourhood graph.
    ValidateGraph {
        /// Neighbourhood spec, inline JSON or a file path.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        lmax: usize,
    },
    /// Run an experiment described by a JSON config.
    Run {
        /// Config file path (or inline JSON).
        #[arg(long)]
        config: String,
    },
    /// Power estimation for one scenario, written to `<out>/<scenario>.csv`.
    Power {
        #[arg(long)]
        scenario: String,
        /// JSON array of parameter values.
        #[arg(long)]
        sweep: Option<String>,
        /// JSON array of test configs; defaults to the scenario's tests.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "STEINSEQ_WORKERS")]
        workers: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Record wall times in the CSV.
        #[arg(long)]
        timing: bool,
    },
    /// Render a results CSV as an SVG power curve.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "sweep_param")]
        x: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    List,
    Show { name: String },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

/// Inline JSON if it looks like JSON, otherwise the contents of a file.
fn json_arg(arg: &str, what: &str) -> Result<String, Failure> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        return Ok(arg.to_owned());
    }
    fs::read_to_string(arg).map_err(|e| Failure::Config(format!("{what}: cannot read {arg}: {e}")))
}

fn parse<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T, Failure> {
    let text = json_arg(arg, what)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Failure::Config(format!("{what} at {}: {}", e.path(), e.inner())))
}

fn env_workers() -> Result<Option<usize>, Failure> {
    match std::env::var("STEINSEQ_WORKERS") {
        Ok(v) => v.parse().map(Some).map_err(|_| Failure::Config(format!("STEINSEQ_WORKERS={v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Scenario { action: ScenarioCmd::List } => {
            for info in catalog() {
                match info.param {
                    Some(p) => println!("{}\t{}\t[{} in {}..{}, default {}]", info.name, info.description, p.name, p.min, p.max, p.default),
                    None => println!("{}\t{}", info.name, info.description),
                }
            }
            Ok(())
        }
        Command::Scenario { action: ScenarioCmd::Show { name } } => {
            let info = scenario_info(&name).ok_or_else(|| Failure::Config(format!("unknown scenario {name:?}")))?;
            let spec = build_scenario(&name).map_err(|e| Failure::Runtime(e.to_string()))?;
            let doc = serde_json::json!({ "info": info, "spec": spec });
            println!("{}", serde_json::to_string_pretty(&doc).expect("scenario serialises"));
            Ok(())
        }
        Command::ValidateGraph { spec, m, lmax } => {
            let spec: NeighborhoodSpec = parse(&spec, "spec")?;
            let alphabet = Alphabet::new(m).map_err(|e| Failure::Config(format!("m: {e}")))?;
            if lmax == 0 {
                return Err(Failure::Config("lmax: must be at least 1".into()));
            }
            let bound = spec.lmax.map_or(lmax, |l| l.min(lmax));
            let nb = EditNeighborhood::new(spec.with_lmax(Some(bound)), alphabet).map_err(|e| Failure::Config(e.to_string()))?;
            let space = enumerate_space(&alphabet, lmax);
            let report = validate_graph(&nb, &space, GRAPH_STATE_CAP).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("{report}");
            Ok(())
        }
        Command::Run { config } => {
            let text = json_arg(&config, "config")?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if cfg.workers.is_none() {
                cfg.workers = env_workers()?;
            }
            let rows = run_experiment(&cfg)?;
            log::info!("wrote {} rows to {}", rows.len(), cfg.out.display());
            Ok(())
        }
        Command::Power { scenario, sweep, methods, trials, seed, workers, out, timing } => {
            let mut cfg = ExperimentConfig::new(scenario.clone(), trials, seed, out.join(format!("{scenario}.csv")));
            if let Some(s) = sweep {
                cfg.sweep = parse(&s, "sweep")?;
            }
            if let Some(m) = methods {
                cfg.methods = Some(parse::<Vec<TestConfig>>(&m, "methods")?);
            }
            cfg.workers = workers;
            cfg.timing = timing;
            if scenario_info(&scenario).is_some_and(|i| i.param.is_some()) {
                cfg.plot = Some(out.join(format!("{scenario}.svg")));
            }
            let rows = run_experiment(&cfg)?;
            let csv = fs::read_to_string(&cfg.out).map_err(|e| Failure::Runtime(e.to_string()))?;
            print!("{csv}");
            log::info!("wrote {} rows to {}", rows.len(), cfg.out.display());
            Ok(())
        }
        Command::Plot { csv, x, out } => {
            let rows = read_csv(&csv).map_err(|e| match e {
                HarnessError::Io { .. } => Failure::Config(e.to_string()),
                other => Failure::Runtime(other.to_string()),
            })?;
            emit_power_plot(&rows, &x, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
