//! Grid execution and CSV output.
//!
//! One experiment = one problem instance, a similarity profile measured
//! on it, and an (algorithm × seed) grid of runs. Each run gets a fresh
//! ledger and an RNG stream derived from (run seed, algorithm id), so
//! results depend on neither grid order nor `--jobs`. Every run starts
//! from the all-ones vector: a fixed nontrivial point (synthetic
//! quadratics put their optimum at the origin) that makes traces
//! comparable across algorithms and paired across seeds. Each run
//! writes `<label>_<seed>.csv`; the grid ends with a single-writer
//! `summary.csv` holding per-run rounds-to-eps plus per-algorithm
//! medians across seeds.
//!
//! All numbers are written with Rust's shortest-round-trip float
//! formatting, which is deterministic, so identical configs produce
//! byte-identical files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::algorithms::{run_variant, tune, AlgoParams, RunOptions, RunStatus, Trace, Variant};
use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::problems::{
    make_logistic_split, make_profile, make_quadratic_family, read_dataset_csv,
    reference_minimizer, synthetic_two_gaussian, CompositeProblem, ProfileMode,
    SimilarityProfile,
};
use crate::rng::RngStream;
use crate::simnet::SimNet;

use super::config::{AlgorithmSpec, DataSource, ProblemSpec, ResolvedConfig};

/// Gradient tolerance for the reference minimizer pinning h*. Newton is
/// exact on quadratics and far below trace scales on logistic problems.
const H_STAR_TOL: f64 = 1e-10;

/// Ledger state at the first trace row with grad_norm <= eps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToEps {
    pub rounds_total: u64,
    pub rounds_f: u64,
    pub outer: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub variant: Variant,
    pub label: String,
    pub seed: u64,
    pub status: RunStatus,
    pub outer_iters: u64,
    pub final_grad_norm: f64,
    pub rounds_f: u64,
    pub rounds_g: u64,
    pub to_eps: Option<ToEps>,
    pub csv_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub runs: Vec<RunOutcome>,
    pub summary_path: PathBuf,
    pub profile: SimilarityProfile,
    pub h_star: f64,
}

impl ExperimentSummary {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.status == RunStatus::Diverged)
    }
}

pub fn build_problem(spec: &ProblemSpec) -> Result<CompositeProblem> {
    match spec {
        ProblemSpec::Quadratic(q) => make_quadratic_family(q),
        ProblemSpec::Logistic(l) => {
            let data = match &l.source {
                DataSource::Csv(path) => read_dataset_csv(path)?,
                DataSource::Synthetic(cfg) => synthetic_two_gaussian(cfg)?,
            };
            make_logistic_split(&data, l.kappa, l.m_f, l.m_g, l.l2, l.seed)
        }
    }
}

pub fn profile_for(spec: &ProblemSpec, problem: &CompositeProblem) -> Result<SimilarityProfile> {
    match spec {
        ProblemSpec::Quadratic(_) => make_profile(problem, ProfileMode::Exact, None),
        ProblemSpec::Logistic(l) => make_profile(
            problem,
            ProfileMode::Grid {
                points: l.grid_points,
                radius: l.grid_radius,
            },
            None,
        ),
    }
}

/// Runs the whole grid and writes the per-run CSVs plus summary.csv.
///
/// `jobs` caps concurrent runs (None = rayon's default, one per core).
/// Run-level failure statuses (divergence, budget exhaustion) are data
/// and end up in the outputs; an `Err` here means the experiment itself
/// could not be carried out.
pub fn run_experiment(cfg: &ResolvedConfig, jobs: Option<usize>) -> Result<ExperimentSummary> {
    if cfg.algorithms.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config(
            "experiment needs at least one algorithm and one seed".into(),
        ));
    }
    let problem = build_problem(&cfg.problem)?;
    let profile = profile_for(&cfg.problem, &problem)?;
    let x_star = reference_minimizer(&problem, H_STAR_TOL)?;
    let h_star = problem.value_h(&x_star)?;

    // Tuning (and override validation) once per algorithm entry.
    let mut tuned: Vec<(AlgorithmSpec, AlgoParams)> = Vec::with_capacity(cfg.algorithms.len());
    for spec in &cfg.algorithms {
        let mut params = tune(&profile, spec.variant)?;
        spec.overrides.apply(&mut params)?;
        params.validate()?;
        tuned.push((spec.clone(), params));
    }

    fs::create_dir_all(&cfg.out_dir)?;

    let mut tasks = Vec::new();
    for (spec, params) in &tuned {
        for &seed in &cfg.seeds {
            tasks.push((spec, params, seed));
        }
    }

    let execute = |&(spec, params, seed): &(&AlgorithmSpec, &AlgoParams, u64)| {
        run_one(cfg, &problem, &profile, h_star, spec, params, seed)
    };
    let results: Vec<Result<RunOutcome>> = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("--jobs thread pool: {e}")))?
            .install(|| tasks.par_iter().map(execute).collect()),
        None => tasks.par_iter().map(execute).collect(),
    };
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }

    let summary_path = cfg.out_dir.join("summary.csv");
    write_summary(&summary_path, &tuned, &cfg.seeds, &runs)?;

    Ok(ExperimentSummary {
        runs,
        summary_path,
        profile,
        h_star,
    })
}

fn run_one(
    cfg: &ResolvedConfig,
    problem: &CompositeProblem,
    profile: &SimilarityProfile,
    h_star: f64,
    spec: &AlgorithmSpec,
    params: &AlgoParams,
    seed: u64,
) -> Result<RunOutcome> {
    let mut net = SimNet::new(problem);
    let mut rng = RngStream::derive(seed, spec.variant.stream_id());
    let mut opts = RunOptions::new(cfg.eps, cfg.max_rounds, Vector::ones(problem.d()));
    opts.h_star = Some(h_star);
    opts.subsolve_budget = cfg.subsolve_budget;
    opts.divergence_factor = cfg.divergence_factor;

    let trace = run_variant(&mut net, profile, spec.variant, params, &mut rng, &mut opts)?;

    let csv_path = cfg.out_dir.join(format!("{}_{}.csv", spec.label, seed));
    write_trace_csv(&csv_path, &trace)?;

    let snap = net.snapshot();
    let to_eps = trace.rounds_to_eps(cfg.eps).map(|r| ToEps {
        rounds_total: r.snapshot.rounds_total(),
        rounds_f: r.snapshot.rounds_f,
        outer: r.outer,
    });
    Ok(RunOutcome {
        variant: spec.variant,
        label: spec.label.clone(),
        seed,
        status: trace.status,
        outer_iters: trace.records.last().map_or(0, |r| r.outer),
        final_grad_norm: trace.records.last().map_or(f64::NAN, |r| r.grad_norm),
        rounds_f: snap.rounds_f,
        rounds_g: snap.rounds_g,
        to_eps,
        csv_path,
    })
}

pub const TRACE_HEADER: &str =
    "outer_index,rounds_f,rounds_g,comms_f,comms_g,grad_norm,subopt,certified";

fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.outer,
            r.snapshot.rounds_f,
            r.snapshot.rounds_g,
            r.snapshot.comms_f,
            r.snapshot.comms_g,
            r.grad_norm,
            r.subopt.map(|s| s.to_string()).unwrap_or_default(),
            r.certified
        )?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: &str =
    "kind,algorithm,seed,status,rounds_to_eps_total,rounds_to_eps_f,outer_iters,final_grad_norm";

/// Median with unreached runs ranked as +inf; None when the midpoint
/// itself is unreached (more than half the seeds missed eps).
fn median_or_unreached(values: &mut Vec<f64>) -> Option<f64> {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in medians"));
    let n = values.len();
    let m = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    m.is_finite().then_some(m)
}

fn write_summary(
    path: &Path,
    tuned: &[(AlgorithmSpec, AlgoParams)],
    seeds: &[u64],
    runs: &[RunOutcome],
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in runs {
        writeln!(
            w,
            "run,{},{},{},{},{},{},{}",
            r.label,
            r.seed,
            r.status.label(),
            r.to_eps.map(|t| t.rounds_total.to_string()).unwrap_or_default(),
            r.to_eps.map(|t| t.rounds_f.to_string()).unwrap_or_default(),
            r.outer_iters,
            r.final_grad_norm
        )?;
    }
    for (spec, _) in tuned {
        let of_alg: Vec<&RunOutcome> = runs.iter().filter(|r| r.label == spec.label).collect();
        debug_assert_eq!(of_alg.len(), seeds.len());
        let mut totals: Vec<f64> = of_alg
            .iter()
            .map(|r| r.to_eps.map_or(f64::INFINITY, |t| t.rounds_total as f64))
            .collect();
        let mut fs_: Vec<f64> = of_alg
            .iter()
            .map(|r| r.to_eps.map_or(f64::INFINITY, |t| t.rounds_f as f64))
            .collect();
        let med_total = median_or_unreached(&mut totals);
        let med_f = median_or_unreached(&mut fs_);
        writeln!(
            w,
            "median,{},,,{},{},,",
            spec.label,
            med_total.map(|v| v.to_string()).unwrap_or_default(),
            med_f.map(|v| v.to_string()).unwrap_or_default(),
        )?;
    }
    w.flush()?;
    Ok(())
}
