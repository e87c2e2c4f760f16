//! Declarative experiment configs.
//!
//! The on-disk format is TOML with three sections:
//!
//! ```toml
//! [problem]                 # what to solve
//! kind = "quadratic"        # or "logistic"
//! m_f = 4                   # nodes in the f group (server included)
//! m_g = 4                   # nodes in the g group
//! seed = 7                  # construction seed
//! # quadratic keys:
//! d = 20
//! ratio = 4.0               # target delta_g / delta_f, >= 1
//! mu = 0.1                  # strong-convexity modulus of h
//! # delta_f = 0.5           # optional server-vs-mean gap for group f
//! # logistic keys:
//! # kappa = 0.7             # f-share of the server's local rows
//! # l2 = 1e-3               # ridge weight (also the mu lower bound)
//! # data = "rows.csv"       # label,group,feature_1,... ; or instead:
//! # [problem.synthetic]     # built-in two-Gaussian generator
//! # n = 2000
//! # d = 20
//! # separation = 1.5
//! # seed = 3                # defaults to the problem seed
//! # grid_points = 48        # similarity-estimation grid (logistic only)
//! # grid_radius = 2.0
//!
//! [run]
//! eps = 1e-6                # target gradient norm
//! max_rounds = 100000       # total communication-round cap per run
//! seeds = [1, 2, 3]         # one run per (algorithm, seed)
//! out_dir = "results"
//! # subsolve_budget = 20000 # iteration cap per inner prox solve
//! # divergence_factor = 1e3 # abort when h exceeds this multiple of h(x0)
//!
//! [[algorithms]]
//! name = "c_aeg"            # sc_aeg | vrcs | acc_vrcs | c_aeg | aeg_baseline
//! # label = "c_aeg_hand"    # output name; defaults to `name`
//! # theta_f = 1.0           # optional per-parameter tuning overrides
//! ```
//!
//! Parsing rejects unknown keys, and the TOML reader reports syntax and
//! type errors with line/column positions. `resolve()` performs the
//! cross-field validation (per-kind required keys, override keys matching
//! the algorithm's parameter set, unique output labels) and returns the
//! typed plan the driver consumes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::algorithms::{AlgoParams, Variant};
use crate::error::{Error, Result};
use crate::problems::{QuadraticFamilyConfig, TwoGaussianConfig};

/// Raw deserialization of a config file; field semantics are documented
/// in the module header. Validation beyond TOML types lives in
/// [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemTable,
    pub run: RunTable,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmTable>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemTable {
    pub kind: String,
    pub m_f: usize,
    pub m_g: usize,
    #[serde(default)]
    pub seed: u64,
    // Quadratic-family keys.
    pub d: Option<usize>,
    pub ratio: Option<f64>,
    pub mu: Option<f64>,
    pub delta_f: Option<f64>,
    // Logistic keys.
    pub data: Option<PathBuf>,
    pub synthetic: Option<SyntheticTable>,
    pub kappa: Option<f64>,
    pub l2: Option<f64>,
    pub grid_points: Option<usize>,
    pub grid_radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTable {
    pub n: usize,
    pub d: usize,
    pub separation: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunTable {
    pub eps: f64,
    pub max_rounds: u64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub subsolve_budget: Option<usize>,
    pub divergence_factor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmTable {
    pub name: String,
    /// Output-file stem for this entry; defaults to `name`. Lets one grid
    /// carry the same algorithm twice with different overrides.
    pub label: Option<String>,
    // Tuning overrides; which keys apply depends on the algorithm.
    pub theta: Option<f64>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub theta_f: Option<f64>,
    pub tau_f: Option<f64>,
    pub eta_f: Option<f64>,
    pub alpha_f: Option<f64>,
    pub theta_g: Option<f64>,
    pub tau_g: Option<f64>,
    pub eta_g: Option<f64>,
    pub alpha_g: Option<f64>,
}

/// Manual parameter overrides applied on top of `tune()`'s values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamOverrides {
    pub theta: Option<f64>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub theta_f: Option<f64>,
    pub tau_f: Option<f64>,
    pub eta_f: Option<f64>,
    pub alpha_f: Option<f64>,
    pub theta_g: Option<f64>,
    pub tau_g: Option<f64>,
    pub eta_g: Option<f64>,
    pub alpha_g: Option<f64>,
}

fn set(slot: &mut f64, v: Option<f64>) {
    if let Some(x) = v {
        *slot = x;
    }
}

impl ParamOverrides {
    fn entries(&self) -> [(&'static str, Option<f64>); 14] {
        [
            ("theta", self.theta),
            ("tau", self.tau),
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("p", self.p),
            ("q", self.q),
            ("theta_f", self.theta_f),
            ("tau_f", self.tau_f),
            ("eta_f", self.eta_f),
            ("alpha_f", self.alpha_f),
            ("theta_g", self.theta_g),
            ("tau_g", self.tau_g),
            ("eta_g", self.eta_g),
            ("alpha_g", self.alpha_g),
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_none())
    }

    fn valid_keys(variant: Variant) -> &'static [&'static str] {
        match variant {
            Variant::ScAeg => &["theta", "tau", "eta", "alpha", "p"],
            Variant::Vrcs => &["theta", "p", "q"],
            Variant::AccVrcs => &["theta", "p", "q", "tau", "alpha"],
            Variant::CAeg | Variant::AegBaseline => &[
                "theta_f", "tau_f", "eta_f", "alpha_f", "theta_g", "tau_g", "eta_g", "alpha_g",
            ],
        }
    }

    /// Rejects overrides that name parameters the algorithm does not have.
    pub fn check_keys(&self, variant: Variant) -> Result<()> {
        let valid = Self::valid_keys(variant);
        for (name, v) in self.entries() {
            if v.is_some() && !valid.contains(&name) {
                return Err(Error::Config(format!(
                    "override '{name}' does not apply to algorithm '{}' (valid keys: {})",
                    variant.name(),
                    valid.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Writes the set values into tuned parameters of the matching shape.
    /// The result is not re-validated here; callers run
    /// `AlgoParams::validate` so an out-of-range override fails loudly.
    pub fn apply(&self, params: &mut AlgoParams) -> Result<()> {
        let variant = match params {
            AlgoParams::ScAeg {
                theta,
                tau,
                eta,
                alpha,
                p,
            } => {
                set(theta, self.theta);
                set(tau, self.tau);
                set(eta, self.eta);
                set(alpha, self.alpha);
                set(p, self.p);
                Variant::ScAeg
            }
            AlgoParams::Vrcs { theta, p, q } => {
                set(theta, self.theta);
                set(p, self.p);
                set(q, self.q);
                Variant::Vrcs
            }
            AlgoParams::AccVrcs {
                theta,
                p,
                q,
                tau,
                alpha,
            } => {
                set(theta, self.theta);
                set(p, self.p);
                set(q, self.q);
                set(tau, self.tau);
                set(alpha, self.alpha);
                Variant::AccVrcs
            }
            AlgoParams::CAeg {
                theta_f,
                tau_f,
                eta_f,
                alpha_f,
                inner,
            } => {
                set(theta_f, self.theta_f);
                set(tau_f, self.tau_f);
                set(eta_f, self.eta_f);
                set(alpha_f, self.alpha_f);
                set(&mut inner.theta_g, self.theta_g);
                set(&mut inner.tau_g, self.tau_g);
                set(&mut inner.eta_g, self.eta_g);
                set(&mut inner.alpha_g, self.alpha_g);
                Variant::CAeg
            }
        };
        self.check_keys(variant)
    }
}

impl AlgorithmTable {
    fn overrides(&self) -> ParamOverrides {
        ParamOverrides {
            theta: self.theta,
            tau: self.tau,
            eta: self.eta,
            alpha: self.alpha,
            p: self.p,
            q: self.q,
            theta_f: self.theta_f,
            tau_f: self.tau_f,
            eta_f: self.eta_f,
            alpha_f: self.alpha_f,
            theta_g: self.theta_g,
            tau_g: self.tau_g,
            eta_g: self.eta_g,
            alpha_g: self.alpha_g,
        }
    }
}

/// Where a logistic problem's rows come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(TwoGaussianConfig),
}

#[derive(Debug, Clone)]
pub struct LogisticSpec {
    pub source: DataSource,
    pub kappa: f64,
    pub m_f: usize,
    pub m_g: usize,
    pub l2: f64,
    pub seed: u64,
    pub grid_points: usize,
    pub grid_radius: f64,
}

#[derive(Debug, Clone)]
pub enum ProblemSpec {
    Quadratic(QuadraticFamilyConfig),
    Logistic(LogisticSpec),
}

/// One grid entry: the algorithm, the file stem its outputs use, and any
/// hand overrides on top of the tuned parameters.
#[derive(Debug, Clone)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    pub label: String,
    pub overrides: ParamOverrides,
}

/// Fully validated experiment plan.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub problem: ProblemSpec,
    pub eps: f64,
    pub max_rounds: u64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub subsolve_budget: usize,
    pub divergence_factor: f64,
    pub algorithms: Vec<AlgorithmSpec>,
}

const DEFAULT_GRID_POINTS: usize = 48;
const DEFAULT_GRID_RADIUS: f64 = 2.0;
const DEFAULT_SUBSOLVE_BUDGET: usize = 20_000;
const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e3;

impl ExperimentConfig {
    /// Parses config text; syntax and unknown-key errors carry the TOML
    /// reader's line/column report.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let problem = self.resolve_problem()?;
        let run = &self.run;
        if !(run.eps > 0.0 && run.eps.is_finite()) {
            return Err(Error::Config(format!(
                "run.eps must be positive and finite, got {}",
                run.eps
            )));
        }
        if run.max_rounds == 0 {
            return Err(Error::Config("run.max_rounds must be >= 1".into()));
        }
        if run.seeds.is_empty() {
            return Err(Error::Config("run.seeds needs at least one seed".into()));
        }
        if run.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("run.out_dir must not be empty".into()));
        }
        let subsolve_budget = run.subsolve_budget.unwrap_or(DEFAULT_SUBSOLVE_BUDGET);
        if subsolve_budget == 0 {
            return Err(Error::Config("run.subsolve_budget must be >= 1".into()));
        }
        let divergence_factor = run.divergence_factor.unwrap_or(DEFAULT_DIVERGENCE_FACTOR);
        if !(divergence_factor > 1.0) {
            return Err(Error::Config(
                "run.divergence_factor must exceed 1".into(),
            ));
        }

        if self.algorithms.is_empty() {
            return Err(Error::Config(
                "config needs at least one [[algorithms]] entry".into(),
            ));
        }
        let mut algorithms = Vec::with_capacity(self.algorithms.len());
        for entry in &self.algorithms {
            let variant = Variant::parse(&entry.name).map_err(|e| Error::Config(e.to_string()))?;
            let label = entry.label.clone().unwrap_or_else(|| entry.name.clone());
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Config(format!(
                    "algorithm label '{label}' must be non-empty and use only [A-Za-z0-9_-]"
                )));
            }
            if algorithms.iter().any(|a: &AlgorithmSpec| a.label == label) {
                return Err(Error::Config(format!(
                    "duplicate algorithm label '{label}'; give repeated entries distinct `label` keys"
                )));
            }
            let overrides = entry.overrides();
            overrides.check_keys(variant)?;
            algorithms.push(AlgorithmSpec {
                variant,
                label,
                overrides,
            });
        }

        Ok(ResolvedConfig {
            problem,
            eps: run.eps,
            max_rounds: run.max_rounds,
            seeds: run.seeds.clone(),
            out_dir: run.out_dir.clone(),
            subsolve_budget,
            divergence_factor,
            algorithms,
        })
    }

    fn resolve_problem(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let require = |name: &str, v: Option<f64>| -> Result<f64> {
            v.ok_or_else(|| {
                Error::Config(format!(
                    "problem.{name} is required for kind = \"{}\"",
                    p.kind
                ))
            })
        };
        let forbid = |names: &[(&str, bool)]| -> Result<()> {
            for (name, present) in names {
                if *present {
                    return Err(Error::Config(format!(
                        "problem.{name} does not apply to kind = \"{}\"",
                        p.kind
                    )));
                }
            }
            Ok(())
        };
        match p.kind.as_str() {
            "quadratic" => {
                forbid(&[
                    ("data", p.data.is_some()),
                    ("synthetic", p.synthetic.is_some()),
                    ("kappa", p.kappa.is_some()),
                    ("l2", p.l2.is_some()),
                    ("grid_points", p.grid_points.is_some()),
                    ("grid_radius", p.grid_radius.is_some()),
                ])?;
                let d = p.d.ok_or_else(|| {
                    Error::Config("problem.d is required for kind = \"quadratic\"".into())
                })?;
                Ok(ProblemSpec::Quadratic(QuadraticFamilyConfig {
                    d,
                    m_f: p.m_f,
                    m_g: p.m_g,
                    ratio: require("ratio", p.ratio)?,
                    mu: require("mu", p.mu)?,
                    delta_f: p.delta_f,
                    seed: p.seed,
                }))
            }
            "logistic" => {
                forbid(&[
                    ("d", p.d.is_some()),
                    ("ratio", p.ratio.is_some()),
                    ("mu", p.mu.is_some()),
                    ("delta_f", p.delta_f.is_some()),
                ])?;
                let source = match (&p.data, &p.synthetic) {
                    (Some(path), None) => DataSource::Csv(path.clone()),
                    (None, Some(s)) => DataSource::Synthetic(TwoGaussianConfig {
                        d: s.d,
                        n: s.n,
                        separation: s.separation,
                        seed: s.seed.unwrap_or(p.seed),
                    }),
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "problem.data and problem.synthetic are mutually exclusive".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(Error::Config(
                            "logistic problems need problem.data or [problem.synthetic]".into(),
                        ))
                    }
                };
                let kappa = require("kappa", p.kappa)?;
                if !(0.0..=1.0).contains(&kappa) {
                    return Err(Error::Config(format!(
                        "problem.kappa must lie in [0, 1], got {kappa}"
                    )));
                }
                let l2 = require("l2", p.l2)?;
                if !(l2 > 0.0) {
                    return Err(Error::Config(format!(
                        "problem.l2 must be positive, got {l2}"
                    )));
                }
                if p.m_f < 2 || p.m_g < 2 {
                    return Err(Error::Config(
                        "logistic splits need m_f >= 2 and m_g >= 2".into(),
                    ));
                }
                let grid_points = p.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
                let grid_radius = p.grid_radius.unwrap_or(DEFAULT_GRID_RADIUS);
                if grid_points == 0 || !(grid_radius > 0.0) {
                    return Err(Error::Config(
                        "grid_points must be >= 1 and grid_radius positive".into(),
                    ));
                }
                Ok(ProblemSpec::Logistic(LogisticSpec {
                    source,
                    kappa,
                    m_f: p.m_f,
                    m_g: p.m_g,
                    l2,
                    seed: p.seed,
                    grid_points,
                    grid_radius,
                }))
            }
            other => Err(Error::Config(format!(
                "problem.kind must be \"quadratic\" or \"logistic\", got \"{other}\""
            ))),
        }
    }
}
