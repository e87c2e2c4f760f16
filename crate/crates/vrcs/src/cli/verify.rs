//! Self-check battery behind the `verify` subcommand.
//!
//! Each check validates one layer against an independent route: analytic
//! gradients against central finite differences, the sampled gradient
//! estimators against their full-group targets, the RNG's geometric and
//! Bernoulli draws against closed-form moments, inexact prox solutions
//! against the exact-argmin certificate, and oracle values against their
//! own gradients through the three-point Bregman identity.
//!
//! The seed moves every Monte-Carlo draw; thresholds sit far enough out
//! (the tightest stochastic check uses 4-sigma componentwise) that the
//! verdict does not depend on the seed. `FaultHooks` lets tests corrupt
//! one route on purpose and watch the matching check fail.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::algorithms::{tune, AlgoParams, Variant};
use crate::error::Result;
use crate::numerics::{fd_gradient, SymMatrix, Vector};
use crate::problems::{
    make_logistic_split, make_profile, make_quadratic_family, synthetic_two_gaussian,
    CompositeProblem, GroupGrad, ProfileMode, QuadraticFamilyConfig, TwoGaussianConfig,
};
use crate::rng::RngStream;
use crate::simnet::{GradSelector, Group, SimNet};
use crate::subsolver::{certify_exact, solve_prox, LocalTerm, ProxSubproblem, StopRule};

/// Deliberate corruption switches for exercising the failure paths.
#[derive(Debug, Clone, Copy, Default)]
pub struct FaultHooks {
    /// Flip the sign of analytic gradients before the FD comparison.
    pub flip_gradient_sign: bool,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self, w: &mut impl Write) -> io::Result<()> {
        for c in &self.checks {
            let tag = if c.passed { "[ok]  " } else { "[fail]" };
            writeln!(w, "{tag} {} — {}", c.name, c.detail)?;
        }
        let (passed, total) = (
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
        );
        writeln!(w, "{passed}/{total} checks passed")
    }
}

pub fn verify_suite(seed: u64, hooks: &FaultHooks) -> Result<VerifyReport> {
    let checks = vec![
        check_gradient_vs_fd(seed, hooks)?,
        check_estimator_unbiasedness(seed)?,
        check_geometric_mean(seed)?,
        check_shift_identity(seed)?,
        check_criterion_certification(seed)?,
        check_three_point_identity(seed)?,
    ];
    Ok(VerifyReport { checks })
}

fn quad_problem(seed: u64) -> Result<CompositeProblem> {
    make_quadratic_family(&QuadraticFamilyConfig {
        d: 8,
        m_f: 3,
        m_g: 3,
        ratio: 2.0,
        mu: 0.5,
        delta_f: None,
        seed,
    })
}

fn logistic_problem(seed: u64) -> Result<CompositeProblem> {
    let data = synthetic_two_gaussian(&TwoGaussianConfig {
        d: 5,
        n: 80,
        separation: 1.2,
        seed,
    })?;
    make_logistic_split(&data, 0.7, 2, 2, 0.1, seed)
}

/// Analytic ∇h vs central finite differences on both oracle kinds.
fn check_gradient_vs_fd(seed: u64, hooks: &FaultHooks) -> Result<CheckResult> {
    let mut rng = RngStream::derive(seed, 101);
    let mut worst: f64 = 0.0;
    for problem in [quad_problem(seed)?, logistic_problem(seed)?] {
        for _ in 0..10 {
            let x = rng.in_ball(problem.d(), 2.0);
            let mut g = problem.grad_group(GroupGrad::H, &x)?;
            if hooks.flip_gradient_sign {
                g = g.scale(-1.0);
            }
            let h = 1e-5 * (1.0 + x.norm());
            let fd = fd_gradient(|y| problem.value_h(y).expect("value"), &x, h)?;
            let mut diff = g.clone();
            diff.axpy(-1.0, &fd);
            let rel = diff.norm() / fd.norm().max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(CheckResult {
        name: "gradient_vs_fd",
        passed: worst <= 1e-5,
        detail: format!("max relative deviation {worst:.3e} (bound 1e-5, 10 points per oracle kind)"),
    })
}

/// The three sampled estimators in the solver family are single-coin
/// mixtures; their Monte-Carlo means at frozen iterates must match the
/// full-group gradients they stand in for.
fn check_estimator_unbiasedness(seed: u64) -> Result<CheckResult> {
    let problem = quad_problem(seed)?;
    let profile = make_profile(&problem, ProfileMode::Exact, None)?;
    let p_mix = match tune(&profile, Variant::ScAeg)? {
        AlgoParams::ScAeg { p, .. } => p,
        _ => unreachable!(),
    };
    let p_inner = match tune(&profile, Variant::Vrcs)? {
        AlgoParams::Vrcs { p, .. } => p,
        _ => unreachable!(),
    };
    let mut rng = RngStream::derive(seed, 102);
    let d = problem.d();
    let x_dev = rng.in_ball(d, 1.5); // deviation-estimate point
    let x_full = rng.in_ball(d, 1.5); // full-gradient-estimate point
    let x_t = rng.in_ball(d, 1.5); // inner-step point
    let x_anchor = rng.in_ball(d, 1.5); // epoch anchor

    let mut net = SimNet::new(&problem);
    const N: usize = 100_000;
    let sigma_bound = 4.0;

    // Mixture of a two-point distribution: draw the coin, poll the chosen
    // group exactly as the solvers do, and average.
    let mut worst = 0.0f64;
    let mut report = String::new();

    // Deviation estimate: E = ∇(h − h1)(x_dev).
    {
        let f_arm = net
            .round_grad(Group::F, GradSelector::FMinusF1, &x_dev)?
            .single()
            .scale(1.0 / p_mix);
        let g_arm = net
            .round_grad(Group::G, GradSelector::GMinusG1, &x_dev)?
            .single()
            .scale(1.0 / (1.0 - p_mix));
        let target = problem.grad_group(GroupGrad::HMinusH1, &x_dev)?;
        let z = mixture_max_sigma_dev(&mut rng, p_mix, &f_arm, &g_arm, &target, N)?;
        worst = worst.max(z);
        write!(report, "deviation {z:.2}σ").ok();
    }

    // Full-gradient estimate: E = ∇h(x_full).
    {
        let f_arm = net
            .round_grad(Group::F, GradSelector::F, &x_full)?
            .single()
            .scale(1.0 / p_mix);
        let g_arm = net
            .round_grad(Group::G, GradSelector::G, &x_full)?
            .single()
            .scale(1.0 / (1.0 - p_mix));
        let target = problem.grad_group(GroupGrad::H, &x_full)?;
        let z = mixture_max_sigma_dev(&mut rng, p_mix, &f_arm, &g_arm, &target, N)?;
        worst = worst.max(z);
        write!(report, ", full {z:.2}σ").ok();
    }

    // Control-variate inner estimate: the sampled deviation at x_t minus
    // the same-coin cached deviation at the anchor plus the anchor's full
    // deviation sum; E = ∇(h − h1)(x_t).
    {
        let (f0, g0) = net
            .round_grad(Group::All, GradSelector::Gaps, &x_anchor)?
            .pair();
        let gaps0 = &f0 + &g0;
        let mut f_arm = net
            .round_grad(Group::F, GradSelector::FMinusF1, &x_t)?
            .single();
        f_arm.axpy(-1.0, &f0);
        let mut f_arm = f_arm.scale(1.0 / p_inner);
        f_arm.axpy(1.0, &gaps0);
        let mut g_arm = net
            .round_grad(Group::G, GradSelector::GMinusG1, &x_t)?
            .single();
        g_arm.axpy(-1.0, &g0);
        let mut g_arm = g_arm.scale(1.0 / (1.0 - p_inner));
        g_arm.axpy(1.0, &gaps0);
        let target = problem.grad_group(GroupGrad::HMinusH1, &x_t)?;
        let z = mixture_max_sigma_dev(&mut rng, p_inner, &f_arm, &g_arm, &target, N)?;
        worst = worst.max(z);
        write!(report, ", control-variate {z:.2}σ").ok();
    }

    Ok(CheckResult {
        name: "estimator_unbiasedness",
        passed: worst <= sigma_bound,
        detail: format!(
            "componentwise max deviation: {report} over {N} draws (bound {sigma_bound}σ)"
        ),
    })
}

/// Draws the coin N times for the two-point mixture {f_arm w.p. p;
/// g_arm w.p. 1−p} and returns the worst componentwise deviation of the
/// empirical mean from `target` in units of the exact per-mean sigma.
/// Components whose mixture is deterministic must match to roundoff.
fn mixture_max_sigma_dev(
    rng: &mut RngStream,
    p: f64,
    f_arm: &Vector,
    g_arm: &Vector,
    target: &Vector,
    n: usize,
) -> Result<f64> {
    let mut n_f = 0u64;
    for _ in 0..n {
        if rng.bernoulli(p)? {
            n_f += 1;
        }
    }
    let w_f = n_f as f64 / n as f64;
    let w_g = 1.0 - w_f;
    let mut worst = 0.0f64;
    for i in 0..target.len() {
        let mean = w_f * f_arm[i] + w_g * g_arm[i];
        // Exact variance of the two-point draw, divided by n for the mean.
        let ex = p * f_arm[i] + (1.0 - p) * g_arm[i];
        let var = p * (f_arm[i] - ex).powi(2) + (1.0 - p) * (g_arm[i] - ex).powi(2);
        let sigma_mean = (var / n as f64).sqrt();
        let dev = (mean - target[i]).abs();
        let scale = 1.0 + target[i].abs();
        if sigma_mean <= 1e-12 * scale {
            // Deterministic component: the two arms agree, so the mean
            // must hit the target up to roundoff regardless of the coin.
            if dev > 1e-9 * scale {
                return Ok(f64::INFINITY);
            }
        } else {
            worst = worst.max(dev / sigma_mean);
        }
    }
    Ok(worst)
}

/// Geometric draws on {1, 2, ...}: sample mean of Geom(0.25) against 1/q.
fn check_geometric_mean(seed: u64) -> Result<CheckResult> {
    let mut rng = RngStream::derive(seed, 103);
    const N: usize = 100_000;
    let q = 0.25;
    let mut sum = 0u64;
    for _ in 0..N {
        sum += rng.geometric(q)?;
    }
    let mean = sum as f64 / N as f64;
    let rel = (mean - 4.0).abs() / 4.0;
    Ok(CheckResult {
        name: "geometric_mean",
        passed: rel <= 0.02,
        detail: format!("Geom(0.25) sample mean {mean:.4} vs 4.0, relative error {rel:.4} (bound 0.02)"),
    })
}

/// For a geometric epoch length N and any bounded sequence D_k, stopping
/// one step early is a (q, 1−q) mixture of the start and the full length:
/// E[D_{N−1}] = q·D_0 + (1−q)·E[D_N]. Checked empirically on D_k = 0.9^k,
/// comparing the two sides estimated from the same draws.
fn check_shift_identity(seed: u64) -> Result<CheckResult> {
    let mut rng = RngStream::derive(seed, 104);
    const N: usize = 100_000;
    let q = 0.3;
    let dk = |k: u64| 0.9f64.powi(k as i32);
    let (mut lhs, mut dn) = (0.0, 0.0);
    for _ in 0..N {
        let t = rng.geometric(q)?;
        lhs += dk(t - 1);
        dn += dk(t);
    }
    lhs /= N as f64;
    dn /= N as f64;
    let rhs = q * dk(0) + (1.0 - q) * dn;
    let rel = (lhs - rhs).abs() / rhs.abs().max(1e-12);
    Ok(CheckResult {
        name: "geometric_shift_identity",
        passed: rel <= 0.01,
        detail: format!(
            "E[D_(N-1)] {lhs:.5} vs q·D_0 + (1-q)·E[D_N] {rhs:.5}, relative gap {rel:.5} (bound 0.01)"
        ),
    })
}

/// Inexact prox solves under each accuracy rule used by the solvers must
/// pass the exact-argmin certificate.
fn check_criterion_certification(seed: u64) -> Result<CheckResult> {
    let mut rng = RngStream::derive(seed, 105);
    let d = 6;
    let mut checked = 0usize;
    let mut worst_margin = f64::INFINITY;
    for inst in 0..10 {
        // Random well-conditioned quadratic local term: diagonally
        // dominant with small symmetric off-diagonal noise.
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1.0 + 0.5 * rng.uniform01() + inst as f64 * 0.05;
            for j in (i + 1)..d {
                let v = 0.1 * (rng.uniform01() - 0.5);
                entries[i * d + j] = v;
                entries[j * d + i] = v;
            }
        }
        let a = SymMatrix::from_fn(d, |i, j| entries[i * d + j]);
        let b = Vector::new((0..d).map(|_| rng.normal()).collect());
        let oracle = crate::problems::ComponentOracle::quadratic(a, b)?;
        let anchor = rng.in_ball(d, 2.0);
        let linear = Vector::new((0..d).map(|_| rng.normal()).collect());
        let theta = 0.05 + 0.45 * rng.uniform01();
        let theta_g = 0.05 + 0.45 * rng.uniform01();
        let mu = 0.01 + 0.09 * rng.uniform01();
        for c in [
            1.0 / (11.0 * theta * theta),
            mu / (17.0 * theta),
            2.0 / (10.0 * theta_g * theta_g),
        ] {
            let sub = ProxSubproblem::new(
                linear.clone(),
                anchor.clone(),
                theta,
                vec![LocalTerm::Oracle {
                    weight: 1.0,
                    oracle: &oracle,
                }],
            )?;
            let rule = StopRule::GradSqVsAnchorDist { c };
            let report = solve_prox(&sub, rule, 20_000)?;
            if !report.certified {
                return Ok(CheckResult {
                    name: "criterion_certification",
                    passed: false,
                    detail: format!("solve did not self-certify (instance {inst}, c = {c:.3e})"),
                });
            }
            let cert = certify_exact(&sub, &report.x, rule)?;
            if !cert.holds {
                return Ok(CheckResult {
                    name: "criterion_certification",
                    passed: false,
                    detail: format!(
                        "certificate rejected (instance {inst}, c = {c:.3e}: lhs {:.3e} > rhs {:.3e})",
                        cert.lhs, cert.rhs
                    ),
                });
            }
            let margin = if cert.lhs > 0.0 { cert.rhs / cert.lhs } else { f64::INFINITY };
            worst_margin = worst_margin.min(margin);
            checked += 1;
        }
    }
    Ok(CheckResult {
        name: "criterion_certification",
        passed: true,
        detail: format!(
            "{checked} solves certified against the exact argmin (tightest rhs/lhs margin {worst_margin:.2})"
        ),
    })
}

/// ⟨x − y, ∇h(y) − ∇h(z)⟩ = D_h(x,z) − D_h(x,y) − D_h(y,z): ties oracle
/// values to their gradients, on both oracle kinds.
fn check_three_point_identity(seed: u64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut rng = RngStream::derive(seed, 106);
    for problem in [quad_problem(seed)?, logistic_problem(seed)?] {
        let d = problem.d();
        let value = |x: &Vector| problem.value_h(x);
        let grad = |x: &Vector| problem.grad_group(GroupGrad::H, x);
        let breg = |a: &Vector, b: &Vector| -> Result<f64> {
            let mut diff = a.clone();
            diff.axpy(-1.0, b);
            Ok(value(a)? - value(b)? - grad(b)?.dot(&diff))
        };
        for _ in 0..20 {
            let x = rng.in_ball(d, 2.0);
            let y = rng.in_ball(d, 2.0);
            let z = rng.in_ball(d, 2.0);
            let mut xy = x.clone();
            xy.axpy(-1.0, &y);
            let mut gyz = grad(&y)?;
            gyz.axpy(-1.0, &grad(&z)?);
            let lhs = xy.dot(&gyz);
            let rhs = breg(&x, &z)? - breg(&x, &y)? - breg(&y, &z)?;
            let scale = 1.0 + value(&x)?.abs() + value(&y)?.abs() + value(&z)?.abs() + lhs.abs();
            let err = (lhs - rhs).abs() / scale;
            worst = worst.max(err);
        }
    }
    Ok(CheckResult {
        name: "three_point_identity",
        passed: worst <= 1e-9,
        detail: format!("max scaled residual {worst:.3e} over 20 triples per oracle kind (bound 1e-9)"),
    })
}
