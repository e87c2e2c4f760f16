//! Solver family for the two-group composite problem.
//!
//! Every algorithm talks to the network only through `SimNet::round_grad`
//! (the ledger is therefore complete by construction) plus the free
//! server-local oracles. Convergence is declared on the gradient norm of
//! h at server-known iterates: where a charged round already supplies the
//! ingredients of ∇h the check reuses them; the remaining instrumentation
//! (suboptimality traces, divergence guard, SC-AccExtragradient's stop
//! metric, whose two group rounds never assemble a full ∇h) goes through
//! the uncounted `observe`.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::problems::SimilarityProfile;
use crate::rng::RngStream;
use crate::simnet::{LedgerSnapshot, SimNet};
use crate::subsolver::{ProxSubproblem, SolveReport};

mod acc_vrcs;
mod c_aeg;
mod sc_aeg;
mod vrcs;

pub use acc_vrcs::run_acc_vrcs;
pub use c_aeg::run_c_aeg;
pub use sc_aeg::run_sc_aeg;
pub use vrcs::{run_vrcs, run_vrcs_epoch, EpochOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    ScAeg,
    Vrcs,
    AccVrcs,
    CAeg,
    AegBaseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ScAeg => "sc_aeg",
            Variant::Vrcs => "vrcs",
            Variant::AccVrcs => "acc_vrcs",
            Variant::CAeg => "c_aeg",
            Variant::AegBaseline => "aeg_baseline",
        }
    }

    /// Stable id mixed into per-run RNG streams; grid order must not
    /// change the draws a run sees.
    pub fn stream_id(self) -> u64 {
        match self {
            Variant::ScAeg => 0,
            Variant::Vrcs => 1,
            Variant::AccVrcs => 2,
            Variant::CAeg => 3,
            Variant::AegBaseline => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sc_aeg" => Ok(Variant::ScAeg),
            "vrcs" => Ok(Variant::Vrcs),
            "acc_vrcs" => Ok(Variant::AccVrcs),
            "c_aeg" => Ok(Variant::CAeg),
            "aeg_baseline" => Ok(Variant::AegBaseline),
            other => Err(Error::InvalidParam(format!(
                "unknown algorithm '{other}' (expected one of sc_aeg, vrcs, acc_vrcs, c_aeg, aeg_baseline)"
            ))),
        }
    }

    pub const ALL: [Variant; 5] = [
        Variant::ScAeg,
        Variant::Vrcs,
        Variant::AccVrcs,
        Variant::CAeg,
        Variant::AegBaseline,
    ];
}

/// Inner-loop constants for the nested extragradient pass of the
/// composite method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerAeg {
    pub theta_g: f64,
    pub tau_g: f64,
    pub eta_g: f64,
    pub alpha_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgoParams {
    ScAeg {
        theta: f64,
        tau: f64,
        eta: f64,
        alpha: f64,
        p: f64,
    },
    Vrcs {
        theta: f64,
        p: f64,
        q: f64,
    },
    AccVrcs {
        theta: f64,
        p: f64,
        q: f64,
        tau: f64,
        alpha: f64,
    },
    CAeg {
        theta_f: f64,
        tau_f: f64,
        eta_f: f64,
        alpha_f: f64,
        inner: InnerAeg,
    },
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidParam(format!(
            "{name} must lie in (0,1), got {v}"
        )));
    }
    Ok(())
}

/// Coin probabilities: 1 is admissible (forces the f-branch
/// deterministically, the complementary branch is never drawn).
fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "{name} must lie in (0,1], got {v}"
        )));
    }
    Ok(())
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlgoParams::ScAeg {
                theta,
                tau,
                eta,
                alpha,
                p,
            } => {
                check_pos("theta", theta)?;
                check_pos("eta", eta)?;
                check_pos("alpha", alpha)?;
                check_unit("tau", tau)?;
                check_prob("p", p)
            }
            AlgoParams::Vrcs { theta, p, q } => {
                check_pos("theta", theta)?;
                check_prob("p", p)?;
                check_prob("q", q)
            }
            AlgoParams::AccVrcs {
                theta,
                p,
                q,
                tau,
                alpha,
            } => {
                check_pos("theta", theta)?;
                check_pos("alpha", alpha)?;
                check_prob("p", p)?;
                check_unit("tau", tau)?;
                check_prob("q", q)
            }
            AlgoParams::CAeg {
                theta_f,
                tau_f,
                eta_f,
                alpha_f,
                inner,
            } => {
                check_pos("theta_f", theta_f)?;
                check_pos("eta_f", eta_f)?;
                check_pos("alpha_f", alpha_f)?;
                check_unit("tau_f", tau_f)?;
                check_pos("theta_g", inner.theta_g)?;
                check_pos("eta_g", inner.eta_g)?;
                check_pos("alpha_g", inner.alpha_g)?;
                check_unit("tau_g", inner.tau_g)
            }
        }
    }
}

/// Direct-substitution tuning from the similarity constants. Uses the
/// safety-adjusted profile values, so grid-estimated constants come in
/// with their margin already applied.
pub fn tune(profile: &SimilarityProfile, variant: Variant) -> Result<AlgoParams> {
    let eff = profile.effective();
    let (mu, df, dg) = (eff.mu, eff.delta_f, eff.delta_g);
    if !(mu > 0.0 && mu < df && df <= dg) {
        return Err(Error::InvalidParam(format!(
            "profile ordering violated: need 0 < mu < delta_f <= delta_g, got mu={mu}, delta_f={df}, delta_g={dg}"
        )));
    }
    let params = match variant {
        Variant::ScAeg => {
            let theta = 1.0 / (3.0 * (df + dg));
            AlgoParams::ScAeg {
                theta,
                tau: (mu * theta).sqrt(),
                eta: (1.0 / (2.0 * mu)).min(0.5 * (theta / mu).sqrt()),
                alpha: mu,
                p: df / (df + dg),
            }
        }
        Variant::Vrcs => {
            let (theta, p, q) = vrcs_tuning(df, dg);
            AlgoParams::Vrcs { theta, p, q }
        }
        Variant::AccVrcs => {
            let (theta, p, q) = vrcs_tuning(df, dg);
            AlgoParams::AccVrcs {
                theta,
                p,
                q,
                tau: (theta * mu / (3.0 * q)).sqrt(),
                alpha: (theta / (3.0 * mu * q)).sqrt(),
            }
        }
        Variant::CAeg => c_aeg_tuning(mu, df, dg),
        // The no-split reduction: every node joins one group with the
        // combined similarity constant; the inner block is never
        // exercised but kept well-formed.
        Variant::AegBaseline => c_aeg_tuning(mu, df + dg, dg),
    };
    params.validate()?;
    Ok(params)
}

/// Runs `variant` with the given parameters; the entries that never draw
/// randomness (the composite method and its baseline) accept the stream
/// anyway so a grid driver can treat all five uniformly.
pub fn run_variant(
    net: &mut SimNet,
    prof: &SimilarityProfile,
    variant: Variant,
    params: &AlgoParams,
    rng: &mut RngStream,
    opts: &mut RunOptions,
) -> Result<Trace> {
    match variant {
        Variant::ScAeg => run_sc_aeg(net, prof, params, rng, opts),
        Variant::Vrcs => run_vrcs(net, prof, params, rng, opts),
        Variant::AccVrcs => run_acc_vrcs(net, prof, params, rng, opts),
        Variant::CAeg => run_c_aeg(net, prof, params, opts, false),
        Variant::AegBaseline => run_c_aeg(net, prof, params, opts, true),
    }
}

fn vrcs_tuning(df: f64, dg: f64) -> (f64, f64, f64) {
    let p = df * df / (df * df + dg * dg);
    let q = p;
    let theta = 0.25 * (p * (1.0 - p) * q / (p * dg * dg + (1.0 - p) * df * df)).sqrt();
    // The epoch analysis additionally needs theta <= 1/(2(delta_f +
    // delta_g)); the canonical p = q choice satisfies it, the guard makes
    // the bound explicit.
    (theta.min(1.0 / (2.0 * (df + dg))), p, q)
}

fn c_aeg_tuning(mu: f64, df: f64, dg: f64) -> AlgoParams {
    let theta_f = 1.0 / df;
    let theta_g = 1.0 / (2.0 * dg);
    let tau_g = 0.5 * (theta_g / theta_f).sqrt();
    AlgoParams::CAeg {
        theta_f,
        tau_f: (mu * theta_f).sqrt(),
        eta_f: (1.0 / (2.0 * mu)).min(0.5 * (theta_f / mu).sqrt()),
        alpha_f: mu,
        inner: InnerAeg {
            theta_g,
            tau_g,
            eta_g: (theta_f / 2.0).min(0.25 * theta_g / tau_g),
            alpha_g: 1.0 / theta_f,
        },
    }
}

/// Estimator selection hook for SC-AccExtragradient: `Exact` swaps the
/// sampled single-group estimators for their expectations (full joint
/// rounds), realizing the zero-variance regime used to sanity-check the
/// deterministic rate constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorMode {
    #[default]
    Sampled,
    Exact,
}

/// Event stream for test probes: every inexact prox solve, plus the outer
/// criterion decisions that are not themselves prox solves.
pub enum SolveEvent<'a> {
    Prox {
        sub: &'a ProxSubproblem<'a>,
        report: &'a SolveReport,
    },
    /// Inner loop accepted `accepted` for the composite outer subproblem
    /// anchored at `anchor` with linear term `linear` and prox weight
    /// 1/theta_f; grad_norm is ‖∇A(accepted)‖ and threshold the surrogate
    /// bound it satisfied.
    OuterCriterion {
        theta_f: f64,
        anchor: &'a Vector,
        linear: &'a Vector,
        accepted: &'a Vector,
        grad_norm: f64,
        threshold: f64,
    },
}

pub struct RunOptions<'cb> {
    pub eps: f64,
    pub max_rounds: u64,
    pub x0: Vector,
    /// h(x*) when known; enables the subopt column of the trace.
    pub h_star: Option<f64>,
    /// Abort when h(x_k) exceeds this multiple of h(x_0).
    pub divergence_factor: f64,
    /// Iteration cap for each inner prox solve.
    pub subsolve_budget: usize,
    pub estimator_mode: EstimatorMode,
    /// Record (x_k, x̄_k) pairs per outer iteration (tests only).
    pub keep_iterates: bool,
    /// Test probe observing every subproblem decision.
    pub probe: Option<&'cb mut dyn FnMut(SolveEvent)>,
}

impl<'cb> RunOptions<'cb> {
    pub fn new(eps: f64, max_rounds: u64, x0: Vector) -> Self {
        RunOptions {
            eps,
            max_rounds,
            x0,
            h_star: None,
            divergence_factor: 1e3,
            subsolve_budget: 20_000,
            estimator_mode: EstimatorMode::Sampled,
            keep_iterates: false,
            probe: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParam(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidParam("max_rounds must be >= 1".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::InvalidParam(
                "divergence_factor must exceed 1".into(),
            ));
        }
        if self.subsolve_budget == 0 {
            return Err(Error::InvalidParam("subsolve_budget must be >= 1".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::NonFinite("x0"));
        }
        Ok(())
    }

    pub(crate) fn emit(&mut self, ev: SolveEvent) {
        if let Some(cb) = self.probe.as_mut() {
            cb(ev);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    RoundBudgetExhausted,
    Diverged,
    /// Composite method's inner loop hit its iteration cap before the
    /// outer accuracy rule certified; trace holds the iterations so far.
    InnerBudgetExhausted,
}

impl RunStatus {
    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::RoundBudgetExhausted => "budget",
            RunStatus::Diverged => "diverged",
            RunStatus::InnerBudgetExhausted => "inner_budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub outer: u64,
    pub snapshot: LedgerSnapshot,
    pub grad_norm: f64,
    pub subopt: Option<f64>,
    pub certified: bool,
    /// Geometric epoch length for epoch-structured runs.
    pub epoch_len: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub final_x: Vector,
    /// (x_k, x̄_k) pairs when `keep_iterates` was set.
    pub iterates: Vec<(Vector, Vector)>,
}

impl Trace {
    /// Order-sensitive digest of the numeric content; equal digests on
    /// repeated runs are the determinism check.
    pub fn digest(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |w: u64| {
            for b in w.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for r in &self.records {
            mix(r.outer);
            mix(r.snapshot.rounds_f);
            mix(r.snapshot.rounds_g);
            mix(r.snapshot.comms_f);
            mix(r.snapshot.comms_g);
            mix(r.grad_norm.to_bits());
            mix(r.subopt.map_or(u64::MAX, f64::to_bits));
            mix(r.certified as u64);
            mix(r.epoch_len.map_or(u64::MAX, |t| t));
        }
        for v in self.final_x.iter() {
            mix(v.to_bits());
        }
        h
    }

    /// First record index whose gradient norm is at or below eps.
    pub fn rounds_to_eps(&self, eps: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.grad_norm <= eps)
    }
}

/// Failure row appended when the divergence guard trips; infinite
/// grad_norm is the tag CSV consumers key on.
pub(crate) fn divergence_row(outer: u64, snapshot: LedgerSnapshot) -> TraceRecord {
    TraceRecord {
        outer,
        snapshot,
        grad_norm: f64::INFINITY,
        subopt: None,
        certified: false,
        epoch_len: None,
    }
}

/// Instrumented objective lookup shared by the runs: h at x, its
/// suboptimality against h_star, and the divergence verdict relative to
/// the run's starting value.
pub(crate) struct Gauge {
    h0_scale: f64,
    factor: f64,
    h_star: Option<f64>,
}

impl Gauge {
    pub(crate) fn new(net: &SimNet, x0: &Vector, opts: &RunOptions) -> Result<(Self, f64)> {
        let obs = net.observe(x0)?;
        Ok((
            Gauge {
                // Scale guard for starts already at (or below) machine
                // scale; the factor semantics stay "1e3 x h(x0)" for any
                // realistically-sized start.
                h0_scale: obs.value.abs().max(1e-9),
                factor: opts.divergence_factor,
                h_star: opts.h_star,
            },
            obs.value,
        ))
    }

    pub(crate) fn subopt(&self, h: f64) -> Option<f64> {
        self.h_star.map(|s| h - s)
    }

    pub(crate) fn diverged(&self, h: f64) -> bool {
        !h.is_finite() || h > self.factor * self.h0_scale
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use crate::numerics::{SymMatrix, Vector};
    use crate::problems::{
        make_quadratic_family, ComponentOracle, CompositeProblem, QuadraticFamilyConfig,
    };

    pub fn family(seed: u64, mu: f64, ratio: f64) -> CompositeProblem {
        make_quadratic_family(&QuadraticFamilyConfig {
            d: 8,
            m_f: 3,
            m_g: 4,
            ratio,
            mu,
            delta_f: None,
            seed,
        })
        .unwrap()
    }

    /// f-only problem (all g oracles zero) with SPD f-components and
    /// nonzero linear terms, so the minimizer is away from the origin.
    pub fn f_only_problem(d: usize) -> CompositeProblem {
        let diag = |shift: f64| {
            SymMatrix::from_fn(d, |i, j| {
                if i == j {
                    1.0 + shift * (i as f64 + 1.0) / d as f64
                } else {
                    0.02 * shift / (1.0 + (i as f64 - j as f64).abs())
                }
            })
        };
        let b = |scale: f64| Vector::from_fn(d, |i| scale * ((i as f64 * 0.7).sin() + 0.3));
        let zero =
            || ComponentOracle::quadratic(SymMatrix::zeros(d), Vector::zeros(d)).unwrap();
        CompositeProblem::new(
            ComponentOracle::quadratic(diag(1.0), b(0.5)).unwrap(),
            zero(),
            vec![
                ComponentOracle::quadratic(diag(0.5), b(-0.2)).unwrap(),
                ComponentOracle::quadratic(diag(1.5), b(0.8)).unwrap(),
            ],
            vec![zero(), zero()],
        )
        .unwrap()
    }

    /// Every oracle in a group identical: all deviation gradients vanish.
    pub fn homogeneous_problem(d: usize) -> CompositeProblem {
        let a_f = SymMatrix::from_fn(d, |i, j| if i == j { 2.0 + i as f64 * 0.1 } else { 0.05 });
        let a_g = SymMatrix::from_fn(d, |i, j| if i == j { 1.0 + i as f64 * 0.2 } else { -0.03 });
        let b_f = Vector::from_fn(d, |i| (i as f64 * 0.4).cos());
        let b_g = Vector::from_fn(d, |i| 0.5 - i as f64 * 0.05);
        let of = || ComponentOracle::quadratic(a_f.clone(), b_f.clone()).unwrap();
        let og = || ComponentOracle::quadratic(a_g.clone(), b_g.clone()).unwrap();
        CompositeProblem::new(of(), og(), vec![of(), of()], vec![og()]).unwrap()
    }
}
