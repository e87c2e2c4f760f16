//! Single-loop accelerated extragradient with randomized group sampling.
//!
//! Per outer iteration: combine the two iterate sequences, draw one group
//! round for the deviation estimate ξ, solve the server-local prox model
//! around the combine point, draw an independent group round at the new
//! regularized iterate for the full-gradient estimate ζ, then take the
//! extragradient step. Two rounds per iteration, so a K-iteration run
//! charges exactly 2K rounds across the two counters.
//!
//! The convergence check (‖∇h‖ at the regularized iterate) cannot be
//! assembled from the sampled rounds — each touches a single group — so
//! it uses the uncounted instrumentation channel, like the trace itself.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::problems::SimilarityProfile;
use crate::rng::RngStream;
use crate::simnet::{GradSelector, Group, SimNet};
use crate::subsolver::{solve_prox, LocalTerm, ProxSubproblem, StopRule};

use super::{
    divergence_row, AlgoParams, EstimatorMode, Gauge, RunOptions, RunStatus, SolveEvent, Trace,
    TraceRecord,
};

pub fn run_sc_aeg(
    net: &mut SimNet,
    prof: &SimilarityProfile,
    params: &AlgoParams,
    rng: &mut RngStream,
    opts: &mut RunOptions,
) -> Result<Trace> {
    let (theta, tau, eta, alpha, p) = match *params {
        AlgoParams::ScAeg {
            theta,
            tau,
            eta,
            alpha,
            p,
        } => (theta, tau, eta, alpha, p),
        _ => {
            return Err(Error::InvalidParam(
                "run_sc_aeg needs ScAeg parameters".into(),
            ))
        }
    };
    params.validate()?;
    opts.validate()?;
    // The prox accuracy rule depends only on theta; the profile enters
    // through the tuned parameters.
    let _ = prof;
    let rule = StopRule::GradSqVsAnchorDist {
        c: 1.0 / (11.0 * theta * theta),
    };

    let server = net.server();
    let (gauge, _h0) = Gauge::new(net, &opts.x0, opts)?;

    let mut x = opts.x0.clone();
    let mut xbar = opts.x0.clone();
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push((x.clone(), xbar.clone()));
    }
    let mut status = RunStatus::RoundBudgetExhausted;
    let mut k: u64 = 0;

    while net.snapshot().rounds_total() < opts.max_rounds {
        let xund = Vector::lincomb(tau, &x, 1.0 - tau, &xbar);

        let xi = match opts.estimator_mode {
            EstimatorMode::Sampled => {
                if rng.bernoulli(p)? {
                    net.round_grad(Group::F, GradSelector::FMinusF1, &xund)?
                        .single()
                        .scale(1.0 / p)
                } else {
                    net.round_grad(Group::G, GradSelector::GMinusG1, &xund)?
                        .single()
                        .scale(1.0 / (1.0 - p))
                }
            }
            EstimatorMode::Exact => {
                let (f_gap, g_gap) = net
                    .round_grad(Group::All, GradSelector::Gaps, &xund)?
                    .pair();
                &f_gap + &g_gap
            }
        };

        let sub = ProxSubproblem::new(
            xi,
            xund.clone(),
            theta,
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
        let report = solve_prox(&sub, rule, opts.subsolve_budget)?;
        opts.emit(SolveEvent::Prox {
            sub: &sub,
            report: &report,
        });
        if !report.certified {
            return Err(Error::Uncertified {
                budget: opts.subsolve_budget,
                grad_norm: report.grad_norm,
                target: report.threshold,
            });
        }
        let xbar_next = report.x;

        let zeta = match opts.estimator_mode {
            EstimatorMode::Sampled => {
                if rng.bernoulli(p)? {
                    net.round_grad(Group::F, GradSelector::F, &xbar_next)?
                        .single()
                        .scale(1.0 / p)
                } else {
                    net.round_grad(Group::G, GradSelector::G, &xbar_next)?
                        .single()
                        .scale(1.0 / (1.0 - p))
                }
            }
            EstimatorMode::Exact => net
                .round_grad(Group::All, GradSelector::H, &xbar_next)?
                .single(),
        };

        let mut x_next = x.clone();
        x_next.axpy(eta * alpha, &(&xbar_next - &x));
        x_next.axpy(-eta, &zeta);

        k += 1;
        let obs = net.observe(&xbar_next)?;
        records.push(TraceRecord {
            outer: k,
            snapshot: net.snapshot(),
            grad_norm: obs.grad_norm,
            subopt: gauge.subopt(obs.value),
            certified: report.certified,
            epoch_len: None,
        });
        if opts.keep_iterates {
            iterates.push((x_next.clone(), xbar_next.clone()));
        }
        x = x_next;
        xbar = xbar_next;

        if obs.grad_norm <= opts.eps {
            status = RunStatus::Converged;
            break;
        }
        let h_at_x = net.observe(&x)?.value;
        if gauge.diverged(h_at_x) {
            records.push(divergence_row(k, net.snapshot()));
            status = RunStatus::Diverged;
            break;
        }
    }

    Ok(Trace {
        records,
        status,
        final_x: xbar,
        iterates,
    })
}
