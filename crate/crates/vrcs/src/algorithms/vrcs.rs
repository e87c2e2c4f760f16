//! Variance-reduced composite sliding: geometric-length epochs built on a
//! cached full deviation gradient.
//!
//! An epoch anchored at x0 charges one joint round (both deviation
//! gradients at x0 go into the cache), draws T from Geom(q), then runs T
//! inner steps. Each step draws one Bernoulli(p) coin, polls the selected
//! group once at the current point, and assembles the control-variate
//! estimate e_t = ξ_t − ζ_t + [∇h(x0) − ∇h1(x0)]: ξ_t is the sampled
//! deviation gradient at x_t, ζ_t the same-coin entry of the epoch cache.
//! The prox model with linear term e_t is then solved server-side. Ledger
//! cost of an epoch is exactly 2 + T counter increments.
//!
//! The outer loop re-anchors each epoch at the previous output. Its
//! convergence check reuses the epoch-start joint round: the server
//! assembles ∇h(x0) = cached gaps + ∇h1(x0) at no extra charge. A
//! converged outer iterate therefore yields a terminal record with
//! epoch length 0 (the epoch ends after its first joint round), keeping
//! the per-epoch cost identity exact including the final check.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::problems::SimilarityProfile;
use crate::rng::RngStream;
use crate::simnet::{GradSelector, Group, SimNet};
use crate::subsolver::{solve_prox, LocalTerm, ProxSubproblem, StopRule};

use super::{
    divergence_row, AlgoParams, Gauge, RunOptions, RunStatus, SolveEvent, Trace, TraceRecord,
};

/// Result of one epoch. `epoch_len` counts the inner rounds actually
/// charged (equals the drawn T unless the run's round cap interrupted),
/// and the cached epoch-start quantities are exposed for reuse by the
/// accelerated wrapper.
#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub x_out: Vector,
    pub epoch_len: u64,
    pub certified: bool,
    /// Inner loop cut short by the run-level round cap.
    pub truncated: bool,
    /// ∇(f − f1)(x0) from the epoch-start joint round.
    pub f_gap0: Vector,
    /// ∇(g − g1)(x0) from the epoch-start joint round.
    pub g_gap0: Vector,
    /// Full gradient at the anchor, assembled server-side from the
    /// charged round: f_gap0 + g_gap0 + ∇h1(x0).
    pub grad_h_x0: Vector,
}

pub(super) struct EpochCfg {
    pub theta: f64,
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub subsolve_budget: usize,
    /// When set, return with epoch_len 0 if ‖∇h(x0)‖ ≤ eps.
    pub stop_eps: Option<f64>,
    /// Absolute ledger cap; inner steps stop once total rounds reach it.
    pub round_cap: Option<u64>,
}

pub(super) fn epoch_core(
    net: &mut SimNet,
    cfg: &EpochCfg,
    rng: &mut RngStream,
    x0: &Vector,
    mut probe: Option<&mut (dyn FnMut(SolveEvent) + '_)>,
) -> Result<EpochOutcome> {
    let server = net.server();
    let (f_gap0, g_gap0) = net
        .round_grad(Group::All, GradSelector::Gaps, x0)?
        .pair();
    let mut grad_h_x0 = &f_gap0 + &g_gap0;
    grad_h_x0.axpy(1.0, &server.grad_h1(x0));

    if let Some(eps) = cfg.stop_eps {
        if grad_h_x0.norm() <= eps {
            return Ok(EpochOutcome {
                x_out: x0.clone(),
                epoch_len: 0,
                certified: true,
                truncated: false,
                f_gap0,
                g_gap0,
                grad_h_x0,
            });
        }
    }

    let t_total = rng.geometric(cfg.q)?;
    let gaps_sum = &f_gap0 + &g_gap0;
    let rule = StopRule::GradSqVsAnchorDist {
        c: cfg.mu / (17.0 * cfg.theta),
    };

    let mut x_t = x0.clone();
    let mut done: u64 = 0;
    let mut truncated = false;
    for _ in 0..t_total {
        if let Some(cap) = cfg.round_cap {
            if net.snapshot().rounds_total() >= cap {
                truncated = true;
                break;
            }
        }
        let (xi, zeta) = if rng.bernoulli(cfg.p)? {
            let f_gap_t = net
                .round_grad(Group::F, GradSelector::FMinusF1, &x_t)?
                .single();
            (f_gap_t.scale(1.0 / cfg.p), f_gap0.scale(1.0 / cfg.p))
        } else {
            let g_gap_t = net
                .round_grad(Group::G, GradSelector::GMinusG1, &x_t)?
                .single();
            (
                g_gap_t.scale(1.0 / (1.0 - cfg.p)),
                g_gap0.scale(1.0 / (1.0 - cfg.p)),
            )
        };
        let mut e_t = xi;
        e_t.axpy(-1.0, &zeta);
        e_t.axpy(1.0, &gaps_sum);

        let sub = ProxSubproblem::new(
            e_t,
            x_t.clone(),
            cfg.theta,
            vec![
                LocalTerm::Oracle {
                    weight: 1.0,
                    oracle: server.f1,
                },
                LocalTerm::Oracle {
                    weight: 1.0,
                    oracle: server.g1,
                },
            ],
        )?;
        let report = solve_prox(&sub, rule, cfg.subsolve_budget)?;
        if let Some(cb) = probe.as_deref_mut() {
            cb(SolveEvent::Prox {
                sub: &sub,
                report: &report,
            });
        }
        if !report.certified {
            return Err(Error::Uncertified {
                budget: cfg.subsolve_budget,
                grad_norm: report.grad_norm,
                target: report.threshold,
            });
        }
        x_t = report.x;
        done += 1;
    }

    Ok(EpochOutcome {
        x_out: x_t,
        epoch_len: done,
        certified: true,
        truncated,
        f_gap0,
        g_gap0,
        grad_h_x0,
    })
}

/// One full epoch as a standalone operation: always draws T and runs it
/// to completion (no stopping shortcut, no round cap).
pub fn run_vrcs_epoch(
    net: &mut SimNet,
    prof: &SimilarityProfile,
    params: &AlgoParams,
    rng: &mut RngStream,
    x0: &Vector,
    subsolve_budget: usize,
) -> Result<EpochOutcome> {
    let (theta, p, q) = match *params {
        AlgoParams::Vrcs { theta, p, q } => (theta, p, q),
        _ => {
            return Err(Error::InvalidParam(
                "run_vrcs_epoch needs Vrcs parameters".into(),
            ))
        }
    };
    params.validate()?;
    let cfg = EpochCfg {
        theta,
        p,
        q,
        mu: prof.effective().mu,
        subsolve_budget,
        stop_eps: None,
        round_cap: None,
    };
    epoch_core(net, &cfg, rng, x0, None)
}

pub fn run_vrcs(
    net: &mut SimNet,
    prof: &SimilarityProfile,
    params: &AlgoParams,
    rng: &mut RngStream,
    opts: &mut RunOptions,
) -> Result<Trace> {
    let (theta, p, q) = match *params {
        AlgoParams::Vrcs { theta, p, q } => (theta, p, q),
        _ => {
            return Err(Error::InvalidParam(
                "run_vrcs needs Vrcs parameters".into(),
            ))
        }
    };
    params.validate()?;
    opts.validate()?;
    let mu = prof.effective().mu;
    let (gauge, _h0) = Gauge::new(net, &opts.x0, opts)?;

    let mut x = opts.x0.clone();
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push((x.clone(), x.clone()));
    }
    let mut status = RunStatus::RoundBudgetExhausted;
    let mut k: u64 = 0;

    while net.snapshot().rounds_total() < opts.max_rounds {
        let cfg = EpochCfg {
            theta,
            p,
            q,
            mu,
            subsolve_budget: opts.subsolve_budget,
            stop_eps: Some(opts.eps),
            round_cap: Some(opts.max_rounds),
        };
        let out = epoch_core(net, &cfg, rng, &x, opts.probe.as_deref_mut())?;
        // Record describes the epoch's input point: its gradient comes
        // straight from the charged epoch-start round, its snapshot from
        // after the epoch's rounds.
        let h_in = net.observe(&x)?.value;
        records.push(TraceRecord {
            outer: k,
            snapshot: net.snapshot(),
            grad_norm: out.grad_h_x0.norm(),
            subopt: gauge.subopt(h_in),
            certified: out.certified,
            epoch_len: Some(out.epoch_len),
        });
        if out.epoch_len == 0 && !out.truncated {
            status = RunStatus::Converged;
            break;
        }
        k += 1;
        if opts.keep_iterates {
            iterates.push((out.x_out.clone(), out.x_out.clone()));
        }
        let h_new = net.observe(&out.x_out)?.value;
        x = out.x_out;
        if gauge.diverged(h_new) {
            records.push(divergence_row(k, net.snapshot()));
            status = RunStatus::Diverged;
            break;
        }
        if out.truncated {
            break;
        }
    }

    Ok(Trace {
        records,
        status,
        final_x: x,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::test_util::{family, homogeneous_problem};
    use crate::algorithms::{tune, Variant};
    use crate::problems::{make_profile, quadratic_minimizer, ProfileMode};

    fn vrcs_params(prof: &SimilarityProfile) -> AlgoParams {
        tune(prof, Variant::Vrcs).unwrap()
    }

    #[test]
    fn epoch_with_q_one_charges_one_joint_and_one_group_round() {
        let p = family(4, 0.1, 2.0);
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let (theta, pp) = match vrcs_params(&prof) {
            AlgoParams::Vrcs { theta, p, .. } => (theta, p),
            _ => unreachable!(),
        };
        let params = AlgoParams::Vrcs {
            theta,
            p: pp,
            q: 1.0,
        };
        let mut net = SimNet::new(&p);
        let mut rng = RngStream::new(17);
        let out = run_vrcs_epoch(
            &mut net,
            &prof,
            &params,
            &mut rng,
            &Vector::ones(p.d()),
            20_000,
        )
        .unwrap();
        assert_eq!(out.epoch_len, 1);
        let snap = net.snapshot();
        // Joint round charges both counters, the single inner round one.
        assert_eq!(snap.rounds_total(), 3);
        assert!(!out.truncated);
        assert!(out.certified);
    }

    #[test]
    fn epoch_cost_identity_holds_over_many_draws() {
        let p = family(9, 0.1, 4.0);
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let params = vrcs_params(&prof);
        let mut net = SimNet::new(&p);
        let mut rng = RngStream::new(23);
        let mut x = Vector::ones(p.d());
        let mut expected_total = 0u64;
        for _ in 0..25 {
            let out = run_vrcs_epoch(&mut net, &prof, &params, &mut rng, &x, 20_000).unwrap();
            expected_total += 2 + out.epoch_len;
            x = out.x_out;
        }
        assert_eq!(net.snapshot().rounds_total(), expected_total);
    }

    #[test]
    fn stationary_anchor_is_a_fixed_point_on_homogeneous_problem() {
        let p = homogeneous_problem(6);
        let xstar = quadratic_minimizer(&p).unwrap();
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let params = vrcs_params(&prof);
        let mut net = SimNet::new(&p);
        let mut rng = RngStream::new(2);
        let out = run_vrcs_epoch(&mut net, &prof, &params, &mut rng, &xstar, 20_000).unwrap();
        // All deviation gradients vanish and ∇h1(x*) = ∇h(x*) = 0, so
        // every inner prox model is anchored at its own minimizer.
        assert!(out.x_out.dist(&xstar) <= 1e-9);
        assert!(out.grad_h_x0.norm() <= 1e-9);
    }

    #[test]
    fn estimator_mean_matches_deviation_gradient() {
        // Frozen (x_t, x0): the average of e_t over many coin draws must
        // approach ∇(h − h1)(x_t).
        let p = family(31, 0.1, 2.0);
        let d = p.d();
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let (_, pp) = match vrcs_params(&prof) {
            AlgoParams::Vrcs { theta, p, .. } => (theta, p),
            _ => unreachable!(),
        };
        let x0 = Vector::ones(d);
        let x_t = Vector::from_fn(d, |i| 1.0 - 0.15 * i as f64);

        let mut net = SimNet::new(&p);
        let (f_gap0, g_gap0) = net
            .round_grad(Group::All, GradSelector::Gaps, &x0)
            .unwrap()
            .pair();
        let gaps_sum = &f_gap0 + &g_gap0;
        let f_gap_t = net
            .round_grad(Group::F, GradSelector::FMinusF1, &x_t)
            .unwrap()
            .single();
        let g_gap_t = net
            .round_grad(Group::G, GradSelector::GMinusG1, &x_t)
            .unwrap()
            .single();
        let target = &f_gap_t + &g_gap_t; // ∇(h − h1)(x_t)

        let mut rng = RngStream::new(77);
        let n = 20_000;
        let mut mean = Vector::zeros(d);
        for _ in 0..n {
            let (xi, zeta) = if rng.bernoulli(pp).unwrap() {
                (f_gap_t.scale(1.0 / pp), f_gap0.scale(1.0 / pp))
            } else {
                (
                    g_gap_t.scale(1.0 / (1.0 - pp)),
                    g_gap0.scale(1.0 / (1.0 - pp)),
                )
            };
            let mut e = xi;
            e.axpy(-1.0, &zeta);
            e.axpy(1.0, &gaps_sum);
            mean.axpy(1.0 / n as f64, &e);
        }
        // Loose 5-sigma-ish bound: per-coordinate spread is of the order
        // of the gap magnitudes over sqrt(n).
        let scale = (target.norm() + gaps_sum.norm() + 1.0) / (n as f64).sqrt();
        assert!(
            mean.dist(&target) <= 12.0 * scale,
            "estimator mean off target: {} vs allowance {}",
            mean.dist(&target),
            12.0 * scale
        );
    }

    #[test]
    fn run_converges_and_cost_identity_is_exact() {
        let p = family(12, 0.1, 4.0);
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let params = vrcs_params(&prof);
        let mut net = SimNet::new(&p);
        let mut rng = RngStream::new(6);
        let mut opts = RunOptions::new(1e-7, 100_000, Vector::ones(p.d()));
        let trace = run_vrcs(&mut net, &prof, &params, &mut rng, &mut opts).unwrap();
        assert_eq!(trace.status, RunStatus::Converged);

        let last = trace.records.last().unwrap();
        assert!(last.grad_norm <= 1e-7);
        assert_eq!(last.epoch_len, Some(0));

        let sum: u64 = trace
            .records
            .iter()
            .map(|r| 2 + r.epoch_len.unwrap())
            .sum();
        assert_eq!(net.snapshot().rounds_total(), sum);
    }

    #[test]
    fn same_seed_gives_identical_trace() {
        let p = family(3, 0.1, 2.0);
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let params = vrcs_params(&prof);
        let run = || {
            let mut net = SimNet::new(&p);
            let mut rng = RngStream::new(55);
            let mut opts = RunOptions::new(1e-6, 30_000, Vector::ones(p.d()));
            run_vrcs(&mut net, &prof, &params, &mut rng, &mut opts).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn round_cap_truncates_epoch_but_keeps_identity() {
        let p = family(14, 0.1, 2.0);
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let (theta, pp) = match vrcs_params(&prof) {
            AlgoParams::Vrcs { theta, p, .. } => (theta, p),
            _ => unreachable!(),
        };
        // Tiny q makes long epochs overwhelmingly likely, so the cap hits
        // mid-epoch.
        let params = AlgoParams::Vrcs {
            theta,
            p: pp,
            q: 0.001,
        };
        let mut net = SimNet::new(&p);
        let mut rng = RngStream::new(40);
        let mut opts = RunOptions::new(1e-12, 50, Vector::ones(p.d()));
        let trace = run_vrcs(&mut net, &prof, &params, &mut rng, &mut opts).unwrap();
        assert_eq!(trace.status, RunStatus::RoundBudgetExhausted);
        let sum: u64 = trace
            .records
            .iter()
            .map(|r| 2 + r.epoch_len.unwrap())
            .sum();
        assert_eq!(net.snapshot().rounds_total(), sum);
        assert!(net.snapshot().rounds_total() >= 50);
    }
}
