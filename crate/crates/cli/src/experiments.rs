//! The two experiment drivers and their CSV artifacts.
//!
//! Convergence CSV: `solver,iter,elapsed_s,objective,marginal_residual,step_size,run`.
//! Adaptation CSV: `run,step,angle_deg,method,cost_mode,accuracy`, plus a
//! `<stem>_summary.csv` with `strategy,step,mean,min,max` and, in grid mode,
//! a `<stem>_grid.csv` with `method,eta_c,eta_t,mean_accuracy`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bregman_ot::adaptation::{
    barycentric_map, initial_coupling, run_sequence, AccuracyRecord, AdaptationStrategy,
    CostMode, SequenceInput, Spread,
};
use bregman_ot::datagen::{target_sequence, two_moons_stream, MoonsParams};
use bregman_ot::regularizers::{ClassGroups, RegularizerSpec, TemporalAnchor};
use bregman_ot::solvers::{solve_cgs, solve_fb, CgsOptions, FbOptions, SolverTrace};
use bregman_ot::{
    pairwise_cost, DiscreteMeasure, LabeledPointCloud, ObjectiveSpec, OtError, SinkhornOptions,
    TransportPlan,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, EtaOverride, Experiment, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] OtError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl CliError {
    /// 0 success, 2 configuration, 3 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(OtError::NumericalOverflow { .. } | OtError::NonConvergence { .. }) => 3,
            CliError::Solver(OtError::InvalidParameter(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

const TARGET_SALT: u64 = 0x7461_7267_6574;
const EVAL_SALT: u64 = 0x6576_616c;
const VALIDATION_SALT: u64 = 0x7661_6c69_6461_7465;

/// SplitMix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run`; run 0 uses the master seed itself.
pub fn run_seed(master: u64, run: usize) -> u64 {
    if run == 0 {
        master
    } else {
        mix(master ^ mix(run as u64))
    }
}

fn sinkhorn_options(config: &ExperimentConfig) -> SinkhornOptions {
    SinkhornOptions {
        max_iters: config.sinkhorn_max_iters,
        tolerance: config.sinkhorn_tol,
        ..SinkhornOptions::default()
    }
}

fn budget(config: &ExperimentConfig) -> Option<Duration> {
    (config.wall_clock_budget_s > 0.0).then(|| Duration::from_secs_f64(config.wall_clock_budget_s))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// `dir/stem.csv` becomes `dir/stem_<suffix>.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

/// One regularized transport problem as it arises at the second step of a
/// rotating sequence.
#[derive(Clone, Debug)]
pub struct ConvergenceInstance {
    pub spec: ObjectiveSpec,
    pub mu1: DiscreteMeasure,
    pub mu2: DiscreteMeasure,
    pub init: TransportPlan,
}

/// Source at 0°, a first batch at `step_deg` that the source is mapped onto,
/// and the problem instance against a second batch at `2·step_deg`.
pub fn build_convergence_instance(
    config: &ExperimentConfig,
    seed: u64,
) -> CliResult<ConvergenceInstance> {
    let params = MoonsParams::new(config.source_n, config.noise_sigma, seed)?;
    let source = two_moons_stream(&params, 0)?;
    let targets = target_sequence(&params, 2, config.step_deg, config.target_n)?;
    let first = initial_coupling(
        &source,
        &targets[0],
        config.lambda,
        config.metric,
        &sinkhorn_options(config),
    )?;
    let mapped = barycentric_map(first.view(), targets[0].points())?;
    let cost = pairwise_cost(mapped.view(), targets[1].points(), config.metric)?;
    let n = config.source_n;
    let mut regs = Vec::new();
    if config.eta_c > 0.0 {
        let labels = source.labels().expect("two moons draws are labeled");
        regs.push(RegularizerSpec::group_lasso(
            ClassGroups::from_labels(labels),
            config.eta_c,
        )?);
    }
    if config.eta_t > 0.0 {
        let anchor = TemporalAnchor::new(targets[1].points().to_owned(), mapped, n as f64)?;
        regs.push(RegularizerSpec::temporal(anchor, config.eta_t)?);
    }
    let spec = ObjectiveSpec::new(cost, config.lambda, regs)?;
    let mu1 = DiscreteMeasure::uniform(n)?;
    let mu2 = DiscreteMeasure::uniform(config.target_n)?;
    let init = TransportPlan::product(&mu1, &mu2);
    Ok(ConvergenceInstance {
        spec,
        mu1,
        mu2,
        init,
    })
}

pub fn fb_options(config: &ExperimentConfig) -> FbOptions {
    FbOptions {
        alpha: config.alpha,
        max_outer_iters: config.max_outer_iters,
        rel_change_tol: config.outer_tol,
        sinkhorn: sinkhorn_options(config),
        warm_start: config.warm_start,
        accept_inexact_inner: true,
        time_budget: budget(config),
        ..FbOptions::default()
    }
}

pub fn cgs_options(config: &ExperimentConfig) -> CgsOptions {
    CgsOptions {
        max_outer_iters: config.max_outer_iters,
        rel_change_tol: config.outer_tol,
        sinkhorn: sinkhorn_options(config),
        warm_start: config.warm_start,
        accept_inexact_inner: true,
        time_budget: budget(config),
        ..CgsOptions::default()
    }
}

/// Both solver traces on one instance, forward-backward first.
pub fn run_convergence_trial(
    config: &ExperimentConfig,
    seed: u64,
) -> CliResult<(SolverTrace, SolverTrace)> {
    let inst = build_convergence_instance(config, seed)?;
    let (_, fb) = solve_fb(&inst.spec, &inst.mu1, &inst.mu2, &inst.init, &fb_options(config))?;
    let (_, cgs) = solve_cgs(&inst.spec, &inst.mu1, &inst.mu2, &inst.init, &cgs_options(config))?;
    Ok((fb, cgs))
}

pub const CONVERGENCE_HEADER: [&str; 7] = [
    "solver",
    "iter",
    "elapsed_s",
    "objective",
    "marginal_residual",
    "step_size",
    "run",
];

/// Runs both solvers on `runs` seeded instances and writes their traces.
/// Runs execute one after another so the timings do not compete for cores.
pub fn run_convergence_benchmark(config: &ExperimentConfig) -> CliResult<PathBuf> {
    if config.experiment != Experiment::Convergence {
        return Err(ConfigError::Invalid("expected experiment = convergence".into()).into());
    }
    let path = config.output.clone();
    let mut writer = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    writer.write_record(CONVERGENCE_HEADER).map_err(csv_err(&path))?;
    for run in 0..config.runs {
        let (fb, cgs) = run_convergence_trial(config, run_seed(config.seed, run))?;
        for (name, trace) in [("fb", &fb), ("cgs", &cgs)] {
            for r in &trace.records {
                writer
                    .write_record([
                        name.to_string(),
                        r.iter.to_string(),
                        r.elapsed_s.to_string(),
                        r.objective.to_string(),
                        r.marginal_residual.to_string(),
                        r.step_size.to_string(),
                        run.to_string(),
                    ])
                    .map_err(csv_err(&path))?;
            }
        }
    }
    writer.flush().map_err(io_err(&path))?;
    Ok(path)
}

/// The three regularizer sets in reporting order.
pub const METHODS: [&str; 3] = ["class", "time", "class+time"];

fn cost_modes(config: &ExperimentConfig) -> Vec<CostMode> {
    match config.cost_mode {
        Some(mode) => vec![mode],
        None => vec![CostMode::Sequential, CostMode::Static],
    }
}

/// Regularizer weights of each method after applying per-method overrides.
pub fn method_etas(config: &ExperimentConfig) -> [EtaOverride; 3] {
    [
        EtaOverride {
            eta_c: Some(config.class_eta.eta_c.unwrap_or(config.eta_c)),
            eta_t: None,
        },
        EtaOverride {
            eta_c: None,
            eta_t: Some(config.time_eta.eta_t.unwrap_or(config.eta_t)),
        },
        EtaOverride {
            eta_c: Some(config.both_eta.eta_c.unwrap_or(config.eta_c)),
            eta_t: Some(config.both_eta.eta_t.unwrap_or(config.eta_t)),
        },
    ]
}

pub fn make_strategy(
    config: &ExperimentConfig,
    mode: CostMode,
    etas: EtaOverride,
) -> CliResult<AdaptationStrategy> {
    let mut strategy = AdaptationStrategy::new(mode, etas.eta_c, etas.eta_t, config.lambda)?;
    strategy.metric = config.metric;
    strategy.solver = config.solver;
    strategy.sinkhorn = sinkhorn_options(config);
    strategy.fb = FbOptions {
        time_budget: None,
        ..fb_options(config)
    };
    strategy.cgs = CgsOptions {
        time_budget: None,
        ..cgs_options(config)
    };
    Ok(strategy)
}

/// Source, target batches and evaluation draws of one run.
#[derive(Clone, Debug)]
pub struct RunData {
    pub source: LabeledPointCloud,
    pub targets: Vec<LabeledPointCloud>,
    pub eval_sets: Vec<LabeledPointCloud>,
    pub angles_deg: Vec<f64>,
}

/// Batch 0 is an unrotated fresh draw; batch `t` is rotated by `t·step_deg`.
pub fn generate_run(config: &ExperimentConfig, seed: u64) -> CliResult<RunData> {
    let noise = config.noise_sigma;
    let source = two_moons_stream(&MoonsParams::new(config.source_n, noise, seed)?, 0)?;
    let batches = |n: usize, salt: u64| -> CliResult<Vec<LabeledPointCloud>> {
        let params = MoonsParams::new(n, noise, mix(seed ^ salt))?;
        let mut out = vec![two_moons_stream(&params, 0)?];
        out.extend(target_sequence(&params, config.n_steps, config.step_deg, n)?);
        Ok(out)
    };
    let targets = batches(config.target_n, TARGET_SALT)?;
    let eval_sets = if config.eval_on_batch {
        targets.clone()
    } else {
        batches(config.eval_n, EVAL_SALT)?
    };
    let angles_deg = (0..=config.n_steps)
        .map(|t| t as f64 * config.step_deg)
        .collect();
    Ok(RunData {
        source,
        targets,
        eval_sets,
        angles_deg,
    })
}

/// One accuracy row, tagged with its run and strategy rank for sorting.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRow {
    pub run: usize,
    pub strategy_rank: usize,
    pub record: AccuracyRecord,
}

impl AccuracyRow {
    pub fn strategy(&self) -> String {
        format!("{}/{}", self.record.cost_mode.tag(), self.record.method)
    }
}

fn run_strategies(
    config: &ExperimentConfig,
    strategies: &[AdaptationStrategy],
    run: usize,
    seed: u64,
) -> CliResult<Vec<AccuracyRow>> {
    let data = generate_run(config, seed)?;
    let input = SequenceInput {
        source: &data.source,
        targets: &data.targets,
        eval_sets: &data.eval_sets,
        angles_deg: &data.angles_deg,
        k: config.k,
    };
    let mut rows = Vec::new();
    for (rank, strategy) in strategies.iter().enumerate() {
        let report = run_sequence(input, strategy)?;
        rows.extend(report.records.into_iter().map(|record| AccuracyRow {
            run,
            strategy_rank: rank,
            record,
        }));
    }
    Ok(rows)
}

/// Runs every strategy on every seed, sorted by (run, step, strategy).
pub fn collect_accuracy(
    config: &ExperimentConfig,
    strategies: &[AdaptationStrategy],
    seeds: &[u64],
) -> CliResult<Vec<AccuracyRow>> {
    let work = |(run, &seed): (usize, &u64)| run_strategies(config, strategies, run, seed);
    let per_run: Vec<CliResult<Vec<AccuracyRow>>> = if config.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))?;
        pool.install(|| seeds.par_iter().enumerate().map(work).collect())
    } else {
        seeds.iter().enumerate().map(work).collect()
    };
    let mut rows = Vec::new();
    for run_rows in per_run {
        rows.extend(run_rows?);
    }
    rows.sort_by_key(|r| (r.run, r.record.step, r.strategy_rank));
    Ok(rows)
}

fn strategies_for(
    config: &ExperimentConfig,
    etas: &[EtaOverride; 3],
) -> CliResult<Vec<AdaptationStrategy>> {
    let mut out = Vec::new();
    for mode in cost_modes(config) {
        for &e in etas {
            out.push(make_strategy(config, mode, e)?);
        }
    }
    Ok(out)
}

/// Per-strategy, per-step spread over runs, in strategy then step order.
pub fn summarize(rows: &[AccuracyRow]) -> Vec<(String, usize, Spread)> {
    let mut keys: Vec<(usize, usize)> = rows
        .iter()
        .map(|r| (r.strategy_rank, r.record.step))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .filter_map(|(rank, step)| {
            let matching: Vec<&AccuracyRow> = rows
                .iter()
                .filter(|r| r.strategy_rank == rank && r.record.step == step)
                .collect();
            let values: Vec<f64> = matching.iter().map(|r| r.record.accuracy).collect();
            Spread::of(&values).map(|s| (matching[0].strategy(), step, s))
        })
        .collect()
}

/// Validation grid: one record per method and candidate weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRecord {
    pub method: &'static str,
    pub etas: EtaOverride,
    pub mean_accuracy: f64,
}

/// Scores each candidate on validation runs, whose seeds are disjoint from
/// the test runs, and keeps the best weights per method. The combined
/// method searches the full product grid. Ties go to the earlier candidate.
pub fn grid_search(config: &ExperimentConfig) -> CliResult<(Vec<GridRecord>, [EtaOverride; 3])> {
    let seeds: Vec<u64> = (0..config.grid_runs)
        .map(|r| mix(config.seed ^ VALIDATION_SALT ^ mix(r as u64)))
        .collect();
    let g = &config.grid;
    let candidates: [Vec<EtaOverride>; 3] = [
        g.iter()
            .map(|&c| EtaOverride {
                eta_c: Some(c),
                eta_t: None,
            })
            .collect(),
        g.iter()
            .map(|&t| EtaOverride {
                eta_c: None,
                eta_t: Some(t),
            })
            .collect(),
        g.iter()
            .flat_map(|&c| {
                g.iter().map(move |&t| EtaOverride {
                    eta_c: Some(c),
                    eta_t: Some(t),
                })
            })
            .collect(),
    ];
    let mut records = Vec::new();
    let mut best = method_etas(config);
    for (m, cands) in candidates.iter().enumerate() {
        let mut best_score = f64::NEG_INFINITY;
        for &etas in cands {
            let strategies: Vec<AdaptationStrategy> = cost_modes(config)
                .into_iter()
                .map(|mode| make_strategy(config, mode, etas))
                .collect::<CliResult<_>>()?;
            let rows = collect_accuracy(config, &strategies, &seeds)?;
            let mean =
                rows.iter().map(|r| r.record.accuracy).sum::<f64>() / rows.len().max(1) as f64;
            records.push(GridRecord {
                method: METHODS[m],
                etas,
                mean_accuracy: mean,
            });
            if mean > best_score {
                best_score = mean;
                best[m] = etas;
            }
        }
    }
    Ok((records, best))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_grid(path: &Path, records: &[GridRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["method", "eta_c", "eta_t", "mean_accuracy"])
        .map_err(csv_err(path))?;
    for r in records {
        w.write_record([
            r.method.to_string(),
            opt(r.etas.eta_c),
            opt(r.etas.eta_t),
            r.mean_accuracy.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub const ADAPTATION_HEADER: [&str; 6] =
    ["run", "step", "angle_deg", "method", "cost_mode", "accuracy"];
pub const SUMMARY_HEADER: [&str; 5] = ["strategy", "step", "mean", "min", "max"];

/// Runs all strategies over `runs` seeds and writes accuracy rows plus the
/// summary. With a grid, weights are first tuned on validation seeds.
pub fn run_da_experiment(config: &ExperimentConfig) -> CliResult<Vec<AccuracyRow>> {
    if config.experiment != Experiment::Adaptation {
        return Err(ConfigError::Invalid("expected experiment = adaptation".into()).into());
    }
    let etas = if config.grid.is_empty() {
        method_etas(config)
    } else {
        let (records, best) = grid_search(config)?;
        write_grid(&sibling_path(&config.output, "grid"), &records)?;
        best
    };
    let strategies = strategies_for(config, &etas)?;
    let seeds: Vec<u64> = (0..config.runs).map(|r| run_seed(config.seed, r)).collect();
    let rows = collect_accuracy(config, &strategies, &seeds)?;

    let path = &config.output;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(ADAPTATION_HEADER).map_err(csv_err(path))?;
    for r in &rows {
        w.write_record([
            r.run.to_string(),
            r.record.step.to_string(),
            r.record.angle_deg.to_string(),
            r.record.method.to_string(),
            r.record.cost_mode.tag().to_string(),
            r.record.accuracy.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;

    let summary_path = sibling_path(path, "summary");
    let mut w = csv::Writer::from_path(&summary_path).map_err(csv_err(&summary_path))?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(&summary_path))?;
    for (strategy, step, s) in summarize(&rows) {
        w.write_record([
            strategy,
            step.to_string(),
            s.mean.to_string(),
            s.min.to_string(),
            s.max.to_string(),
        ])
        .map_err(csv_err(&summary_path))?;
    }
    w.flush().map_err(io_err(&summary_path))?;
    Ok(rows)
}

/// Dispatches on the configured experiment and returns the main output path.
pub fn run(config: &ExperimentConfig) -> CliResult<PathBuf> {
    match config.experiment {
        Experiment::Convergence => run_convergence_benchmark(config),
        Experiment::Adaptation => run_da_experiment(config).map(|_| config.output.clone()),
    }
}

/// Writes a short human-readable line for the finished run.
pub fn report<W: Write>(mut out: W, config: &ExperimentConfig, path: &Path) -> std::io::Result<()> {
    let kind = match config.experiment {
        Experiment::Convergence => "convergence",
        Experiment::Adaptation => "adaptation",
    };
    writeln!(out, "{kind}: wrote {}", path.display())
}
