use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::plan::{EvalMode, ExperimentPlan, Trainer};
use crate::barrier::{self, BarrierConfig, ConstraintSet};
use crate::baselines::{solve_m3n, solve_m3n_multivariate, solve_mcl, M3nConfig, MclConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::margin::{build_delta, mclr, MarginKind, DEFAULT_ROW_CAP};
use crate::model::{Network, ParamVector};
use crate::multivariate::{cutting_plane_solve, map_labels, ChainLabelModel, CuttingPlaneConfig};
use crate::renorm::{renormalize_report, ParamSource};
use crate::synth::{ancestral_sample_with, rng_for, Stream};

/// Solver settings shared by every training run.
#[derive(Debug, Clone, Default)]
pub struct TrainerSettings {
    pub barrier: BarrierConfig,
    pub m3n: M3nConfig,
    pub mcl: MclConfig,
    pub cutting_plane: CuttingPlaneConfig,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub trainer: Trainer,
    pub reg: f64,
    pub w: ParamVector,
    /// Whether `w` satisfies the CPT normalization constraints.
    pub normalized: bool,
    pub converged: bool,
    pub max_decision_deviation: Option<f64>,
}

pub fn train(
    net: &Network,
    data: &Dataset,
    trainer: Trainer,
    reg: f64,
    mode: EvalMode,
    settings: &TrainerSettings,
) -> Result<TrainedModel> {
    data.check_schema(net)?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let multi = mode == EvalMode::Multivariate;
    let (w, converged, deviation) = match trainer {
        Trainer::M2bn if multi => {
            let out = cutting_plane_solve(net, data, reg, &settings.barrier, &settings.cutting_plane)?;
            let converged = out.completed && out.solution.converged;
            (out.solution.w, converged, None)
        }
        Trainer::M2bn => {
            let problem = build_delta(net, data, MarginKind::Multiclass, reg)?;
            let sol = barrier::solve(&problem, net, &settings.barrier, ConstraintSet::Subnormalization)?;
            match net.class_vars() {
                [target] => {
                    let report = renormalize_report(net, &sol.w, *target, ParamSource::MaxMargin)?;
                    match report.normalized_params {
                        Some(p) => (p, sol.converged, report.max_decision_deviation),
                        None => (sol.w, sol.converged, None),
                    }
                }
                _ => (sol.w, sol.converged, None),
            }
        }
        Trainer::M3n if multi => {
            let sol = solve_m3n_multivariate(net, data, reg, &settings.m3n, &settings.cutting_plane)?;
            (sol.w, sol.converged, None)
        }
        Trainer::M3n => {
            let problem = build_delta(net, data, MarginKind::Multiclass, 1.0)?;
            let sol = solve_m3n(&problem, net, reg, &settings.m3n)?;
            (sol.w, sol.converged, None)
        }
        Trainer::Mcl => {
            let cfg = MclConfig {
                l2_strength: reg,
                ..settings.mcl.clone()
            };
            let out = solve_mcl(net, data, &cfg)?;
            (out.w, out.converged, None)
        }
    };
    Ok(TrainedModel {
        trainer,
        reg,
        normalized: w.is_normalized(net),
        w,
        converged,
        max_decision_deviation: deviation,
    })
}

/// Error rate on `test`: the fraction of misclassified rows (univariate) or
/// of misclassified `(row, class position)` pairs under joint MAP decoding
/// (multivariate).
pub fn evaluate(net: &Network, w: &ParamVector, test: &Dataset, mode: EvalMode) -> Result<f64> {
    test.check_schema(net)?;
    if w.len() != net.dim() {
        return Err(Error::DimensionMismatch {
            expected: net.dim(),
            got: w.len(),
        });
    }
    if test.is_empty() {
        return Err(Error::InvalidConfig("test set is empty".into()));
    }
    match mode {
        EvalMode::Univariate => {
            let mut wrong = 0usize;
            for row in test.rows() {
                if net.predict_row(w, row)? != net.labels_of(row) {
                    wrong += 1;
                }
            }
            Ok(wrong as f64 / test.len() as f64)
        }
        EvalMode::Multivariate => {
            let chain = ChainLabelModel::from_network(net).ok();
            let positions = net.class_vars().len();
            let mut wrong = 0usize;
            for row in test.rows() {
                let pred = match &chain {
                    Some(c) => map_labels(net, c, w.as_slice(), row),
                    None => net.predict_row(w, row)?,
                };
                wrong += pred.iter().zip(net.labels_of(row)).filter(|(a, b)| **a != *b).count();
            }
            Ok(wrong as f64 / (test.len() * positions) as f64)
        }
    }
}

/// Train and test sets of an experiment.
pub struct ExperimentData {
    pub net: Network,
    pub test: Dataset,
    source: Source,
    seed: u64,
}

enum Source {
    Generative(ParamVector),
    /// Shuffled rows left after removing the test block.
    Pool(Vec<Vec<usize>>),
}

impl ExperimentData {
    /// Synthetic runs sample the test set from the test stream of the plan
    /// seed. Dataset runs shuffle the file once, take the first `test_size`
    /// rows as the test set and train on the rest.
    pub fn prepare(plan: &ExperimentPlan) -> Result<Self> {
        plan.validate()?;
        let net = plan.network()?;
        match &plan.data {
            None => {
                let w = plan.generative_params(&net)?;
                let test = ancestral_sample_with(&net, &w, plan.test_size, &mut rng_for(plan.seed, Stream::Test))?;
                Ok(Self {
                    net,
                    test,
                    source: Source::Generative(w),
                    seed: plan.seed,
                })
            }
            Some(path) => {
                let all = Dataset::read_csv(&net, path)?;
                let mut rows = all.rows().to_vec();
                rows.shuffle(&mut rng_for(plan.seed, Stream::Shuffle));
                if plan.test_size >= rows.len() {
                    return Err(Error::InvalidConfig(format!(
                        "test_size {} leaves no training rows out of {}",
                        plan.test_size,
                        rows.len()
                    )));
                }
                let pool = rows.split_off(plan.test_size);
                let test = Dataset::new(&net, rows)?;
                Ok(Self {
                    net,
                    test,
                    source: Source::Pool(pool),
                    seed: plan.seed,
                })
            }
        }
    }

    /// Training set of repetition `rep`. Synthetic sets are drawn from the
    /// training stream of seed `plan_seed + rep`; dataset runs use the
    /// `rep`-th consecutive block of the pool, wrapping around when the pool
    /// is exhausted.
    pub fn training_set(&self, size: usize, rep: usize) -> Result<Dataset> {
        match &self.source {
            Source::Generative(w) => {
                let mut rng = rng_for(self.seed.wrapping_add(rep as u64), Stream::Train);
                ancestral_sample_with(&self.net, w, size, &mut rng)
            }
            Source::Pool(pool) => {
                let start = rep * size;
                let rows = (0..size).map(|k| pool[(start + k) % pool.len()].clone()).collect();
                Dataset::new(&self.net, rows)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub trainer: Trainer,
    pub structure: String,
    pub beta: Option<f64>,
    pub train_size: usize,
    pub rep: usize,
    pub reg: f64,
    pub test_error: Option<f64>,
    pub train_error: Option<f64>,
    pub mclr: Option<f64>,
    pub converged: bool,
    pub max_decision_deviation: Option<f64>,
    pub wall_ms: Option<f64>,
    /// Error code of a failed repetition.
    pub error: Option<String>,
}

pub const RESULT_COLUMNS: [&str; 12] = [
    "trainer",
    "structure",
    "beta",
    "train_size",
    "rep",
    "reg",
    "test_error",
    "train_error",
    "mclr",
    "converged",
    "max_decision_deviation",
    "wall_ms",
];

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

impl ResultRow {
    fn fields(&self) -> [String; 12] {
        [
            self.trainer.to_string(),
            self.structure.clone(),
            opt(self.beta),
            self.train_size.to_string(),
            self.rep.to_string(),
            format_number(self.reg),
            opt(self.test_error),
            opt(self.train_error),
            opt(self.mclr),
            match &self.error {
                Some(code) => format!("error:{code}"),
                None => self.converged.to_string(),
            },
            opt(self.max_decision_deviation),
            self.wall_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
        ]
    }
}

pub fn results_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

struct Job {
    trainer: Trainer,
    size: usize,
    rep: usize,
    reg: f64,
}

fn run_job(
    data: &ExperimentData,
    plan: &ExperimentPlan,
    mode: EvalMode,
    settings: &TrainerSettings,
    job: &Job,
) -> ResultRow {
    let start = Instant::now();
    let mut row = ResultRow {
        trainer: job.trainer,
        structure: plan.structure_label(),
        beta: plan.uses_beta().then_some(plan.beta),
        train_size: job.size,
        rep: job.rep,
        reg: job.reg,
        test_error: None,
        train_error: None,
        mclr: None,
        converged: false,
        max_decision_deviation: None,
        wall_ms: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let train_set = data.training_set(job.size, job.rep)?;
        let model = train(&data.net, &train_set, job.trainer, job.reg, mode, settings)?;
        row.converged = model.converged;
        row.max_decision_deviation = model.max_decision_deviation;
        row.test_error = Some(evaluate(&data.net, &model.w, &data.test, mode)?);
        row.train_error = Some(evaluate(&data.net, &model.w, &train_set, mode)?);
        if data.net.label_space_size() <= DEFAULT_ROW_CAP as u128 {
            row.mclr = Some(mclr(&data.net, &model.w, &train_set)?);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.code().to_string());
        row.test_error = None;
        row.train_error = None;
        row.mclr = None;
        row.converged = false;
    }
    if plan.timing {
        row.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    row
}

/// Regularization value with the lowest test error on repetition 0 (first
/// grid entry on ties); falls back to `default` when every candidate fails.
fn tune(
    data: &ExperimentData,
    plan: &ExperimentPlan,
    mode: EvalMode,
    settings: &TrainerSettings,
    trainer: Trainer,
    size: usize,
    grid: &[f64],
    default: f64,
) -> f64 {
    let scores: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&reg| {
            if reg == 0.0 && trainer != Trainer::Mcl {
                return None;
            }
            run_job(data, plan, mode, settings, &Job { trainer, size, rep: 0, reg }).test_error
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (&reg, score) in grid.iter().zip(scores) {
        if let Some(s) = score {
            if best.map_or(true, |(b, _)| s < b) {
                best = Some((s, reg));
            }
        }
    }
    best.map_or(default, |(_, reg)| reg)
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    run_experiment_with(plan, &TrainerSettings::default())
}

/// Rows come out ordered by trainer (plan order), train size (plan order)
/// and repetition, independent of scheduling.
pub fn run_experiment_with(plan: &ExperimentPlan, settings: &TrainerSettings) -> Result<Vec<ResultRow>> {
    let data = ExperimentData::prepare(plan)?;
    let mode = plan.mode.unwrap_or_else(|| EvalMode::default_for(&data.net));
    let pairs: Vec<(Trainer, usize)> = plan
        .trainers
        .iter()
        .flat_map(|&t| plan.train_sizes.iter().map(move |&s| (t, s)))
        .collect();
    let regs: Vec<f64> = pairs
        .iter()
        .map(|&(t, size)| match &plan.tune_grid {
            Some(grid) => {
                let reg = tune(&data, plan, mode, settings, t, size, grid, plan.reg.get(t));
                info!("tuned {t} at train size {size}: {}={reg}", t.reg_name());
                reg
            }
            None => plan.reg.get(t),
        })
        .collect();
    let jobs: Vec<Job> = pairs
        .iter()
        .zip(&regs)
        .flat_map(|(&(trainer, size), &reg)| (0..plan.reps).map(move |rep| Job { trainer, size, rep, reg }))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|job| run_job(&data, plan, mode, settings, job))
        .collect())
}
