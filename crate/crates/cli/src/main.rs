//! `overfit`: simulations, score-file analysis, toy training and θ* lookup.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical
//! divergence during training.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use overfit_core::config::KvConfig;
use overfit_core::distmodel::{simulation_to_csv, DistributionModel, ThetaStar, ThetaStarMatch};
use overfit_core::metrics::{score_report, ScoreSet};
use overfit_core::pipeline::{run_experiment, TrainConfig};
use overfit_core::scorefile::{read_labeled, read_scores};
use overfit_core::seed::derive_seed;
use overfit_core::Error;

#[derive(Parser)]
#[command(name = "overfit", version, about = "Controlled-overfitting anomaly detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate closed-form and Monte Carlo RADI over a θ range.
    Simulate(SimulateArgs),
    /// Fit and compare normal/anomaly score distributions.
    Analyze(AnalyzeArgs),
    /// Train the toy teacher/student pair under dual control.
    TrainToy(TrainArgs),
    /// Locate the RADI optimum θ* in closed form and numerically.
    ThetaStar(ThetaStarArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<KvConfig, Failure> {
        let mut kv = match &self.config {
            Some(path) => KvConfig::load(path).map_err(|e| with_path(e, path))?,
            None => KvConfig::default(),
        };
        for a in &self.set {
            kv.set_assignment(a)?;
        }
        Ok(kv)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `simulate.csv` and `simulate_summary.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    theta_min: f64,
    #[arg(long, default_value_t = 2.0)]
    theta_max: f64,
    #[arg(long, default_value_t = 21)]
    steps: usize,
    /// Monte Carlo draws per class and row.
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// One score per line.
    #[arg(long, requires = "anomaly", conflicts_with = "labeled")]
    normal: Option<PathBuf>,
    #[arg(long, requires = "normal")]
    anomaly: Option<PathBuf>,
    /// `score,label` CSV with label 1 for anomalies.
    #[arg(long)]
    labeled: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Also write `analyze_report.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for logs, summary and the student checkpoint.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    standard_epochs: Option<usize>,
    #[arg(long)]
    overfit_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    c_thr: Option<usize>,
    #[arg(long)]
    arq_theta: Option<f64>,
    #[arg(long)]
    arq_delta: Option<f64>,
    /// Also write the generated dataset as `dataset.csv`.
    #[arg(long)]
    export_dataset: bool,
}

#[derive(Args)]
struct ThetaStarArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write `theta_star.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn with_path(e: Error, path: &Path) -> Failure {
    match e {
        Error::Io(io) => Failure {
            code: 2,
            message: format!("{}: {io}", path.display()),
        },
        other => other.with_source(path).into(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: 2,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: 2,
        message: format!("cannot create {}: {e}", dir.display()),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

#[derive(Serialize, Deserialize)]
struct SimulateSummary {
    model: DistributionModel<f64>,
    seed: u64,
    theta_min: f64,
    theta_max: f64,
    steps: usize,
    mc_samples: usize,
    max_abs_error: f64,
    theta_star: Option<ThetaStar<f64>>,
    theta_star_error: Option<String>,
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let model = DistributionModel::demo().with_overrides(&args.config.resolve()?)?;
    let rows = model.simulate(
        args.theta_min,
        args.theta_max,
        args.steps,
        args.mc_samples,
        derive_seed(args.seed, "simulate"),
    )?;
    let (theta_star, theta_star_error) = match model.theta_star() {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = SimulateSummary {
        model,
        seed: args.seed,
        theta_min: args.theta_min,
        theta_max: args.theta_max,
        steps: args.steps,
        mc_samples: args.mc_samples,
        max_abs_error: rows
            .iter()
            .map(|r| (r.radi_mc - r.radi_closed).abs())
            .fold(0.0, f64::max),
        theta_star,
        theta_star_error,
    };
    ensure_dir(&args.out)?;
    write_file(&args.out.join("simulate.csv"), &simulation_to_csv(&rows))?;
    write_file(&args.out.join("simulate_summary.json"), &to_json(&summary))
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let scores: ScoreSet<f64> = match (&args.normal, &args.anomaly, &args.labeled) {
        (Some(n), Some(a), None) => ScoreSet::new(
            read_scores(n).map_err(|e| with_path(e, n))?,
            read_scores(a).map_err(|e| with_path(e, a))?,
        )?,
        (None, None, Some(l)) => read_labeled(l).map_err(|e| with_path(e, l))?,
        _ => {
            return Err(Failure {
                code: 2,
                message: "pass --normal and --anomaly, or --labeled".into(),
            })
        }
    };
    let json = to_json(&score_report(&scores, args.bins)?);
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_file(&dir.join("analyze_report.json"), &json)?;
    }
    print!("{json}");
    Ok(())
}

fn train_toy(args: &TrainArgs) -> Result<(), Failure> {
    let mut kv = args.config.resolve()?;
    let flags = [
        ("seed", args.seed.map(|v| v.to_string())),
        ("standard_epochs", args.standard_epochs.map(|v| v.to_string())),
        ("overfit_epochs", args.overfit_epochs.map(|v| v.to_string())),
        ("learning_rate", args.learning_rate.map(|v| v.to_string())),
        ("c_thr", args.c_thr.map(|v| v.to_string())),
        ("arq_theta", args.arq_theta.map(|v| v.to_string())),
        ("arq_delta", args.arq_delta.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            kv.set(key, &v);
        }
    }
    let config = TrainConfig::from_config(&kv)?;
    let exp = run_experiment(&config)?;
    ensure_dir(&args.out)?;
    let out = &args.out;
    write_file(&out.join("config.cfg"), &config.to_config_string())?;
    write_file(&out.join("run_log.jsonl"), &exp.log.to_jsonl())?;
    write_file(&out.join("decisions.jsonl"), &exp.log.decisions_jsonl())?;
    write_file(&out.join("summary.json"), &exp.log.summary_json())?;
    write_file(&out.join("student.json"), &exp.student.to_json()?)?;
    if args.export_dataset {
        write_file(&out.join("dataset.csv"), &exp.dataset.to_csv())?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ThetaStarReport {
    paper_form: f64,
    derived_form: f64,
    numeric: f64,
    matches: ThetaStarMatch,
}

fn theta_star(args: &ThetaStarArgs) -> Result<(), Failure> {
    let model = DistributionModel::demo().with_overrides(&args.config.resolve()?)?;
    let t = model.theta_star()?;
    let report = ThetaStarReport {
        paper_form: t.paper_form,
        derived_form: t.derived_form,
        numeric: t.numeric,
        matches: t.matches,
    };
    let json = to_json(&report);
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_file(&dir.join("theta_star.json"), &json)?;
    }
    print!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::TrainToy(a) => train_toy(a),
        Command::ThetaStar(a) => theta_star(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
