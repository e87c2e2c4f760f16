//! Shared helpers for the integration suites.
//!
//! The eigensolver and the least-squares fit are deliberately independent
//! of the library's own numerics (power iteration, Newton solves) so the
//! two routes can check each other: a bug shared by both implementations
//! would have to be introduced twice.
#![allow(dead_code)]

use vrcs::algorithms::{run_variant, tune, AlgoParams, RunOptions, Trace, Variant};
use vrcs::numerics::{SymMatrix, Vector};
use vrcs::problems::{
    make_profile, make_quadratic_family, CompositeProblem, ProfileMode, QuadraticFamilyConfig,
    SimilarityProfile,
};
use vrcs::rng::RngStream;
use vrcs::simnet::{LedgerSnapshot, SimNet};

fn frob(a: &[Vec<f64>]) -> f64 {
    a.iter()
        .flat_map(|row| row.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// All eigenvalues of a symmetric matrix by the cyclic Jacobi method,
/// ascending. Dense and O(d^3) per sweep: an oracle, not a production
/// routine.
pub fn jacobi_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let d = m.dim();
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| m.at(i, j)).collect())
        .collect();
    let scale = 1.0 + frob(&a);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p][q];
                if apq.abs() < 1e-300 * scale {
                    continue;
                }
                // Stable small-angle root of t^2 + 2*tau*t - 1 = 0.
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A <- J^T A J with J the (p,q)-plane rotation.
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..d).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Largest absolute eigenvalue via the Jacobi oracle.
pub fn spectral_norm_oracle(m: &SymMatrix) -> f64 {
    jacobi_eigenvalues(m)
        .iter()
        .fold(0.0, |acc, &v| acc.max(v.abs()))
}

/// Ordinary least squares y = a + b x; returns (intercept, slope, r_squared).
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    assert!(sxx > 0.0, "degenerate abscissae");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (intercept, slope, r2)
}

/// Median; even-length inputs take the midpoint of the two central values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard synthetic quadratic instance used across the suites.
pub fn quad_family(seed: u64, d: usize, mu: f64, ratio: f64) -> CompositeProblem {
    make_quadratic_family(&QuadraticFamilyConfig {
        d,
        m_f: 4,
        m_g: 4,
        ratio,
        mu,
        delta_f: None,
        seed,
    })
    .unwrap()
}

/// Exact similarity profile for a quadratic instance.
pub fn exact_profile(problem: &CompositeProblem) -> SimilarityProfile {
    make_profile(problem, ProfileMode::Exact, None).unwrap()
}

pub struct RunResult {
    pub trace: Trace,
    pub ledger: LedgerSnapshot,
    pub params: AlgoParams,
}

/// Tunes, runs, and returns the trace plus the final ledger snapshot.
/// Starts at the all-ones vector (the synthetic quadratics put their
/// optimum at the origin, so a zeros start would begin there).
pub fn run_tuned(
    problem: &CompositeProblem,
    profile: &SimilarityProfile,
    variant: Variant,
    seed: u64,
    eps: f64,
    max_rounds: u64,
) -> RunResult {
    let params = tune(profile, variant).unwrap();
    let mut net = SimNet::new(problem);
    let mut rng = RngStream::derive(seed, variant.stream_id());
    let mut opts = RunOptions::new(eps, max_rounds, Vector::ones(problem.d()));
    let trace = run_variant(&mut net, profile, variant, &params, &mut rng, &mut opts).unwrap();
    RunResult {
        trace,
        ledger: net.snapshot(),
        params,
    }
}
