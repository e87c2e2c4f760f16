//! Accelerated wrapper around the variance-reduced epoch.
//!
//! Maintains three sequences: the combine point x_{k+1} = τz_k + (1−τ)y_k,
//! the epoch output y_{k+1}, and the dual-style iterate z. The momentum
//! gradient G_{k+1} = q(t_k + (x_{k+1} − y_{k+1})/θ) needs the deviation
//! gradient at both ends; the x-side comes free from the epoch-start cache
//! and only the y-side costs a joint round. The z-update has the closed
//! form of a prox step on ⟨G, z⟩ + ‖z − z_k‖²/(2α) + (μ/4)‖z − y‖²·2.
//!
//! Convergence is declared on ‖∇h(y_{k+1})‖, assembled from the same
//! charged y-side round.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::problems::SimilarityProfile;
use crate::rng::RngStream;
use crate::simnet::{GradSelector, Group, SimNet};

use super::vrcs::{epoch_core, EpochCfg};
use super::{divergence_row, AlgoParams, Gauge, RunOptions, RunStatus, Trace, TraceRecord};

/// z_{k+1} = argmin_z ⟨G, z⟩ + ‖z − z_k‖²/(2α) + (μ/2)‖z − y‖², i.e.
/// (z_k/α − G + (μ/2)y) / (1/α + μ/2).
pub(crate) fn z_update(z: &Vector, alpha: f64, mu: f64, y: &Vector, g: &Vector) -> Vector {
    let denom = 1.0 / alpha + mu / 2.0;
    let mut out = z.scale(1.0 / alpha);
    out.axpy(-1.0, g);
    out.axpy(mu / 2.0, y);
    out.scale_mut(1.0 / denom);
    out
}

pub fn run_acc_vrcs(
    net: &mut SimNet,
    prof: &SimilarityProfile,
    params: &AlgoParams,
    rng: &mut RngStream,
    opts: &mut RunOptions,
) -> Result<Trace> {
    let (theta, p, q, tau, alpha) = match *params {
        AlgoParams::AccVrcs {
            theta,
            p,
            q,
            tau,
            alpha,
        } => (theta, p, q, tau, alpha),
        _ => {
            return Err(Error::InvalidParam(
                "run_acc_vrcs needs AccVrcs parameters".into(),
            ))
        }
    };
    params.validate()?;
    opts.validate()?;
    let mu = prof.effective().mu;
    let server = net.server();
    let (gauge, _h0) = Gauge::new(net, &opts.x0, opts)?;

    let mut y = opts.x0.clone();
    let mut z = opts.x0.clone();
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push((y.clone(), y.clone()));
    }
    let mut status = RunStatus::RoundBudgetExhausted;
    let mut k: u64 = 0;

    while net.snapshot().rounds_total() < opts.max_rounds {
        let x_next = Vector::lincomb(tau, &z, 1.0 - tau, &y);

        let cfg = EpochCfg {
            theta,
            p,
            q,
            mu,
            subsolve_budget: opts.subsolve_budget,
            stop_eps: None,
            round_cap: Some(opts.max_rounds),
        };
        let out = epoch_core(net, &cfg, rng, &x_next, opts.probe.as_deref_mut())?;
        if out.truncated {
            break;
        }
        let y_next = out.x_out;

        // y-side joint round; also feeds the convergence check.
        let (f_gap_y, g_gap_y) = net
            .round_grad(Group::All, GradSelector::Gaps, &y_next)?
            .pair();
        let gaps_y = &f_gap_y + &g_gap_y;
        let gaps_x = &out.f_gap0 + &out.g_gap0;

        let mut momentum = &gaps_x - &gaps_y; // t_k
        momentum.axpy(1.0 / theta, &(&x_next - &y_next));
        momentum.scale_mut(q); // G_{k+1}
        let z_next = z_update(&z, alpha, mu, &y_next, &momentum);

        let mut grad_h_y = gaps_y;
        grad_h_y.axpy(1.0, &server.grad_h1(&y_next));
        let grad_norm = grad_h_y.norm();

        k += 1;
        let h_y = net.observe(&y_next)?.value;
        records.push(TraceRecord {
            outer: k,
            snapshot: net.snapshot(),
            grad_norm,
            subopt: gauge.subopt(h_y),
            certified: out.certified,
            epoch_len: Some(out.epoch_len),
        });
        if opts.keep_iterates {
            iterates.push((x_next.clone(), y_next.clone()));
        }
        y = y_next;
        z = z_next;

        if grad_norm <= opts.eps {
            status = RunStatus::Converged;
            break;
        }
        if gauge.diverged(h_y) {
            records.push(divergence_row(k, net.snapshot()));
            status = RunStatus::Diverged;
            break;
        }
    }

    Ok(Trace {
        records,
        status,
        final_x: y,
        iterates,
    })
}
