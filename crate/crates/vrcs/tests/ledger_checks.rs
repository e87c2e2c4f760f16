//! Communication-ledger algebra: every variant's per-group round counters
//! must satisfy exact accounting identities against its trace records, and
//! the stochastic round splits must match their coin probabilities.

mod common;

use common::{exact_profile, quad_family, run_tuned, RunResult};
use vrcs::algorithms::{AlgoParams, RunStatus, Variant};

/// Two rounds per outer iteration, exactly: one for each estimator draw.
/// Both draws are fair Bernoulli(p) coins, so the f-side round count over
/// a run is binomial.
#[test]
fn sc_aeg_charges_exactly_two_rounds_per_outer() {
    let problem = quad_family(12, 8, 0.2, 3.0);
    let prof = exact_profile(&problem);
    for seed in [1, 2, 3] {
        let RunResult {
            trace,
            ledger,
            params,
        } = run_tuned(&problem, &prof, Variant::ScAeg, seed, 1e-7, 100_000);
        assert_eq!(trace.status, RunStatus::Converged);
        let k = trace.records.len() as u64;
        assert_eq!(ledger.rounds_total(), 2 * k);

        let p = match params {
            AlgoParams::ScAeg { p, .. } => p,
            _ => unreachable!(),
        };
        let n = (2 * k) as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let dev = (ledger.rounds_f as f64 - n * p).abs();
        assert!(
            dev <= 3.0 * sigma,
            "seed {seed}: f-rounds {} vs expected {:.1} (3 sigma = {:.1})",
            ledger.rounds_f,
            n * p,
            3.0 * sigma
        );
    }
}

/// rounds_f + rounds_g equals the sum of (2 + T_k) over recorded epochs:
/// each epoch opens with one joint round (charging both groups) and then
/// runs T_k single-group inner rounds.
#[test]
fn vrcs_round_totals_match_recorded_epoch_lengths() {
    let problem = quad_family(12, 8, 0.2, 3.0);
    let prof = exact_profile(&problem);
    for seed in [4, 5, 6] {
        let RunResult { trace, ledger, .. } =
            run_tuned(&problem, &prof, Variant::Vrcs, seed, 1e-7, 100_000);
        assert_eq!(trace.status, RunStatus::Converged);
        let expected: u64 = trace
            .records
            .iter()
            .filter_map(|r| r.epoch_len)
            .map(|t| 2 + t)
            .sum();
        assert_eq!(ledger.rounds_total(), expected, "seed {seed}");
    }
}

/// Inner rounds go to group f with the shared coin's probability p: over a
/// long run the f-share of inner rounds stays within three binomial
/// standard deviations, and the overall rounds_f/rounds_g ratio lands near
/// (q + p)/(q + 1 - p).
#[test]
fn vrcs_round_split_follows_coin_probabilities() {
    let problem = quad_family(12, 8, 0.2, 4.0);
    let prof = exact_profile(&problem);
    // Unreachable eps: the run spends its entire round budget, giving a
    // long stationary record of coin draws.
    let RunResult {
        trace,
        ledger,
        params,
    } = run_tuned(&problem, &prof, Variant::Vrcs, 7, 1e-300, 20_000);
    assert_eq!(trace.status, RunStatus::RoundBudgetExhausted);

    let (p, q) = match params {
        AlgoParams::Vrcs { p, q, .. } => (p, q),
        _ => unreachable!(),
    };
    let epochs = trace
        .records
        .iter()
        .filter(|r| r.epoch_len.is_some())
        .count() as u64;
    let inner_total: u64 = trace.records.iter().filter_map(|r| r.epoch_len).sum();
    assert!(inner_total >= 2_000, "run too short: {inner_total} inner rounds");

    // Every epoch contributes one f-round and one g-round from the joint
    // opening; the rest are the coin-driven inner rounds.
    let inner_f = ledger.rounds_f - epochs;
    let n = inner_total as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    let dev = (inner_f as f64 - n * p).abs();
    assert!(
        dev <= 3.0 * sigma,
        "inner f-rounds {inner_f} vs expected {:.1} (3 sigma = {:.1})",
        n * p,
        3.0 * sigma
    );

    let ratio = ledger.rounds_f as f64 / ledger.rounds_g as f64;
    let predicted = (q + p) / (q + 1.0 - p);
    assert!(
        (ratio - predicted).abs() <= 0.10 * predicted,
        "rounds ratio {ratio:.4} vs predicted {predicted:.4}"
    );
}

/// Each accelerated outer iteration costs its epoch (2 + T_k) plus one
/// more joint round for the momentum correction.
#[test]
fn acc_vrcs_rounds_match_epoch_plus_joint_accounting() {
    let problem = quad_family(12, 8, 0.2, 3.0);
    let prof = exact_profile(&problem);
    for seed in [8, 9] {
        let RunResult { trace, ledger, .. } =
            run_tuned(&problem, &prof, Variant::AccVrcs, seed, 1e-7, 200_000);
        assert_eq!(trace.status, RunStatus::Converged);
        let expected: u64 = trace
            .records
            .iter()
            .filter_map(|r| r.epoch_len)
            .map(|t| 2 + t + 2)
            .sum();
        assert_eq!(ledger.rounds_total(), expected, "seed {seed}");
    }
}

/// The composite method touches group f exactly twice per outer iteration
/// (the anchor probe and the final joint round) regardless of how many
/// g-side inner rounds the subsidiary loop takes; the no-split baseline
/// polls both groups jointly, so its counters stay equal.
#[test]
fn c_aeg_f_round_cost_is_two_per_outer() {
    let problem = quad_family(12, 8, 0.2, 3.0);
    let prof = exact_profile(&problem);

    let RunResult { trace, ledger, .. } =
        run_tuned(&problem, &prof, Variant::CAeg, 10, 1e-7, 200_000);
    assert_eq!(trace.status, RunStatus::Converged);
    let k = trace.records.len() as u64;
    assert_eq!(ledger.rounds_f, 2 * k);
    assert!(ledger.rounds_g > ledger.rounds_f, "inner loop should dominate");

    let RunResult { trace, ledger, .. } =
        run_tuned(&problem, &prof, Variant::AegBaseline, 10, 1e-7, 200_000);
    assert_eq!(trace.status, RunStatus::Converged);
    let k = trace.records.len() as u64;
    assert_eq!(ledger.rounds_f, ledger.rounds_g);
    assert_eq!(ledger.rounds_f, 2 * k);
}

/// Records are ordered and their ledger snapshots never move backwards in
/// any counter, for every variant.
#[test]
fn trace_snapshots_are_monotone_for_all_variants() {
    let problem = quad_family(12, 8, 0.2, 3.0);
    let prof = exact_profile(&problem);
    for variant in Variant::ALL {
        let RunResult { trace, .. } = run_tuned(&problem, &prof, variant, 11, 1e-6, 50_000);
        let mut prev_outer: Option<u64> = None;
        let mut prev = None;
        for r in &trace.records {
            if let Some(po) = prev_outer {
                assert!(r.outer > po, "{}: outer indices not increasing", variant.name());
            }
            if let Some(ps) = prev {
                let s = r.snapshot;
                let back = |a: u64, b: u64| a < b;
                let ps: vrcs::simnet::LedgerSnapshot = ps;
                assert!(
                    !back(s.rounds_f, ps.rounds_f)
                        && !back(s.rounds_g, ps.rounds_g)
                        && !back(s.comms_f, ps.comms_f)
                        && !back(s.comms_g, ps.comms_g),
                    "{}: snapshot moved backwards",
                    variant.name()
                );
            }
            prev_outer = Some(r.outer);
            prev = Some(r.snapshot);
        }
    }
}
