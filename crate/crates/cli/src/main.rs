use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mmbn_core::experiment::{
    evaluate, results_to_csv, run_experiment, summarize, summary_to_csv, train, EvalMode, ExperimentData,
    ExperimentPlan, Trainer, TrainerSettings,
};
use mmbn_core::model::io::{format_network, format_params, read_params, ParamFormat};
use mmbn_core::synth::{DatasetMeta, GENERATOR_ID};
use mmbn_core::{Dataset, Error};

#[derive(Parser)]
#[command(name = "mmbn", version, about = "Maximum-margin training of Bayesian-network classifiers")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample training and test data from a generative model.
    GenData(GenData),
    /// Train one model and write its parameters.
    Train(TrainArgs),
    /// Error rate of a parameter file on a dataset.
    Eval(EvalArgs),
    /// Repeated train/test comparison written as a results CSV.
    Experiment(ExperimentArgs),
    /// Aggregate a results CSV per trainer and train size.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenData {
    /// Built-in structure name or network file.
    #[arg(long)]
    structure: String,
    /// Generative parameters (otherwise drawn from --beta and --seed).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    train_size: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    structure: String,
    /// Training CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "m2bn")]
    trainer: String,
    /// B for m2bn, C for m3n, ridge strength for mcl.
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    /// Parameter file to write (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    structure: String,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML plan; flags override its fields.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    structure: Option<String>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Dataset used as the sampling pool instead of generated data.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trainers, comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    trainer: Vec<String>,
    /// `VALUE` for every trainer or `trainer=VALUE`, comma-separated or
    /// repeated.
    #[arg(long, value_delimiter = ',')]
    reg: Vec<String>,
    /// Training set sizes, comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    train_size: Vec<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    /// Regularization candidates tuned on repetition 0.
    #[arg(long, value_delimiter = ',')]
    tune_grid: Vec<f64>,
    /// Results CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock milliseconds per run.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_mode(mode: Option<&str>) -> Result<Option<EvalMode>, Failure> {
    mode.map(|m| m.parse::<EvalMode>()).transpose().map_err(Failure::from)
}

fn network_for(structure: &str) -> Result<mmbn_core::Network, Failure> {
    let plan = ExperimentPlan { structure: structure.to_string(), ..ExperimentPlan::default() };
    Ok(plan.network()?)
}

fn gen_data(a: GenData) -> Result<(), Failure> {
    let plan = ExperimentPlan {
        structure: a.structure,
        params: a.params,
        beta: a.beta,
        seed: a.seed,
        train_sizes: vec![a.train_size.max(1)],
        test_size: a.test_size.max(1),
        ..ExperimentPlan::default()
    };
    plan.validate()?;
    let data = ExperimentData::prepare(&plan)?;
    let net = &data.net;
    let w = plan.generative_params(net)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    let put = |name: &str, text: &str| write_or_print(Some(&a.out.join(name)), text);
    put("network.txt", &format_network(net))?;
    put("generative.params", &format_params(net, &w, ParamFormat::Theta))?;
    if a.train_size > 0 {
        put("train.csv", &data.training_set(a.train_size, 0)?.to_csv_string())?;
    }
    if a.test_size > 0 {
        put("test.csv", &data.test.to_csv_string())?;
    }
    let meta = DatasetMeta {
        structure: plan.structure_label(),
        beta: plan.beta,
        seed: plan.seed,
        rows: a.train_size,
        generator: GENERATOR_ID.to_string(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Failure::Runtime(e.to_string()))?;
    put("meta.json", &(json + "\n"))?;
    info!("wrote dataset to {}", a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let net = network_for(&a.structure)?;
    let data = Dataset::read_csv(&net, &a.data)?;
    let trainer: Trainer = a.trainer.parse()?;
    let mode = parse_mode(a.mode.as_deref())?.unwrap_or_else(|| EvalMode::default_for(&net));
    let reg = a.reg.unwrap_or_else(|| mmbn_core::experiment::RegSettings::default().get(trainer));
    let model = train(&net, &data, trainer, reg, mode, &TrainerSettings::default())?;
    let format = if model.normalized { ParamFormat::Theta } else { ParamFormat::LogWeights };
    write_or_print(a.out.as_deref(), &format_params(&net, &model.w, format))?;
    let train_error = evaluate(&net, &model.w, &data, mode)?;
    eprintln!(
        "trainer={trainer} {}={reg} converged={} normalized={} train_error={train_error}{}",
        trainer.reg_name(),
        model.converged,
        model.normalized,
        model
            .max_decision_deviation
            .map(|d| format!(" max_decision_deviation={d:e}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<(), Failure> {
    let net = network_for(&a.structure)?;
    let w = read_params(&net, &a.params)?;
    let data = Dataset::read_csv(&net, &a.data)?;
    let mode = parse_mode(a.mode.as_deref())?.unwrap_or_else(|| EvalMode::default_for(&net));
    println!("{}", evaluate(&net, &w, &data, mode)?);
    Ok(())
}

fn experiment_cmd(a: ExperimentArgs) -> Result<(), Failure> {
    let mut plan = match &a.plan {
        Some(p) => ExperimentPlan::from_file(p)?,
        None => ExperimentPlan::default(),
    };
    if let Some(s) = a.structure {
        plan.structure = s;
    }
    if a.params.is_some() {
        plan.params = a.params;
    }
    if a.data.is_some() {
        plan.data = a.data;
    }
    if let Some(b) = a.beta {
        plan.beta = b;
    }
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    if !a.trainer.is_empty() {
        plan.trainers = a.trainer.iter().map(|t| t.parse()).collect::<Result<_, _>>()?;
    }
    for spec in &a.reg {
        match spec.split_once('=') {
            Some((t, v)) => {
                let t: Trainer = t.parse()?;
                let v: f64 = v.trim().parse().map_err(|_| invalid(format!("bad --reg value `{spec}`")))?;
                plan.reg.set(t, v);
            }
            None => {
                let v: f64 = spec.trim().parse().map_err(|_| invalid(format!("bad --reg value `{spec}`")))?;
                for t in plan.trainers.clone() {
                    plan.reg.set(t, v);
                }
            }
        }
    }
    if !a.train_size.is_empty() {
        plan.train_sizes = a.train_size;
    }
    if let Some(t) = a.test_size {
        plan.test_size = t;
    }
    if let Some(r) = a.reps {
        plan.reps = r;
    }
    if let Some(m) = parse_mode(a.mode.as_deref())? {
        plan.mode = Some(m);
    }
    if !a.tune_grid.is_empty() {
        plan.tune_grid = Some(a.tune_grid);
    }
    if a.out.is_some() {
        plan.out = a.out;
    }
    plan.timing |= a.timing;
    plan.validate()?;
    let rows = run_experiment(&plan)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} runs failed; see the converged column", rows.len());
    }
    write_or_print(plan.out.as_deref(), &results_to_csv(&rows)?)
}

fn report_cmd(a: ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.data).map_err(|e| Failure::Runtime(format!("{}: {e}", a.data.display())))?;
    let summary = summarize(&text)?;
    write_or_print(a.out.as_deref(), &summary_to_csv(&summary)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
