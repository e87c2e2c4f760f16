//! Ground-truth cross-checks of the numerical kernels: analytic gradients
//! against central finite differences, power-iteration spectral norms
//! against a dense Jacobi eigensolver, and the linear solver against
//! residual evaluation. Each check compares two independent routes to the
//! same quantity.

mod common;

use common::{jacobi_eigenvalues, quad_family, spectral_norm_oracle};
use vrcs::numerics::{eigen_bounds, fd_gradient, solve_spd, spectral_norm, SymMatrix, Vector};
use vrcs::problems::{
    make_logistic_split, quadratic_minimizer, reference_minimizer, synthetic_two_gaussian,
    CompositeProblem, GroupGrad, TwoGaussianConfig,
};
use vrcs::rng::RngStream;

const FD_REL_TOL: f64 = 1e-5;
const SPECTRAL_REL_TOL: f64 = 1e-8;

fn logistic_problem(seed: u64) -> CompositeProblem {
    let data = synthetic_two_gaussian(&TwoGaussianConfig {
        d: 6,
        n: 120,
        separation: 1.0,
        seed,
    })
    .unwrap();
    make_logistic_split(&data, 0.7, 3, 3, 0.1, seed).unwrap()
}

/// Relative disagreement between the analytic gradient of h and a central
/// finite difference of its value, maximized over `points` random points.
fn max_fd_deviation(problem: &CompositeProblem, rng: &mut RngStream, points: usize) -> f64 {
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let x = rng.in_ball(problem.d(), 2.0);
        let analytic = problem.grad_group(GroupGrad::H, &x).unwrap();
        let h = 1e-5 * (1.0 + x.norm());
        let fd = fd_gradient(|y| problem.value_h(y).unwrap(), &x, h).unwrap();
        let mut diff = analytic.clone();
        diff.axpy(-1.0, &fd);
        worst = worst.max(diff.norm() / analytic.norm().max(1e-9));
    }
    worst
}

#[test]
fn quadratic_gradients_match_finite_differences() {
    let problem = quad_family(7, 8, 0.5, 2.0);
    let mut rng = RngStream::new(2024);
    let dev = max_fd_deviation(&problem, &mut rng, 10);
    assert!(dev <= FD_REL_TOL, "worst relative deviation {dev:.3e}");
}

#[test]
fn logistic_gradients_match_finite_differences() {
    let problem = logistic_problem(11);
    let mut rng = RngStream::new(2025);
    let dev = max_fd_deviation(&problem, &mut rng, 10);
    assert!(dev <= FD_REL_TOL, "worst relative deviation {dev:.3e}");
}

/// Every per-component analytic gradient (not just the aggregate) agrees
/// with finite differences; a sign error in a single client cancels in
/// group means with zero-sum perturbations, so the aggregate check alone
/// would not see it.
#[test]
fn component_gradients_match_finite_differences() {
    let mut rng = RngStream::new(77);
    for problem in [quad_family(3, 6, 0.3, 4.0), logistic_problem(5)] {
        let oracles = std::iter::once(problem.server_f())
            .chain(std::iter::once(problem.server_g()))
            .chain(problem.clients_f().iter())
            .chain(problem.clients_g().iter());
        for oracle in oracles {
            let x = rng.in_ball(problem.d(), 1.5);
            let analytic = oracle.grad(&x).unwrap();
            let h = 1e-5 * (1.0 + x.norm());
            let fd = fd_gradient(|y| oracle.value(y).unwrap(), &x, h).unwrap();
            let mut diff = analytic.clone();
            diff.axpy(-1.0, &fd);
            let dev = diff.norm() / analytic.norm().max(1e-9);
            assert!(dev <= FD_REL_TOL, "component deviation {dev:.3e}");
        }
    }
}

fn seeded_symmetric(rng: &mut RngStream, d: usize) -> SymMatrix {
    let mut entries = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let v = rng.normal();
            entries[i * d + j] = v;
            entries[j * d + i] = v;
        }
    }
    SymMatrix::from_fn(d, |i, j| entries[i * d + j])
}

#[test]
fn spectral_norm_matches_dense_eigensolver() {
    let mut rng = RngStream::new(31);
    for _ in 0..20 {
        let m = seeded_symmetric(&mut rng, 8);
        let fast = spectral_norm(&m, 1e-10).unwrap();
        let dense = spectral_norm_oracle(&m);
        let rel = (fast - dense).abs() / dense.max(1e-300);
        assert!(rel <= SPECTRAL_REL_TOL, "relative gap {rel:.3e}");
    }
}

#[test]
fn spectral_norm_is_negation_symmetric() {
    let mut rng = RngStream::new(97);
    for _ in 0..20 {
        let m = seeded_symmetric(&mut rng, 7);
        let mut neg = m.clone();
        neg.scale_mut(-1.0);
        let a = spectral_norm(&m, 1e-10).unwrap();
        let b = spectral_norm(&neg, 1e-10).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.max(1e-300), "{a} vs {b}");
    }
}

#[test]
fn eigen_bounds_bracket_dense_spectrum() {
    let mut rng = RngStream::new(53);
    for _ in 0..10 {
        let m = seeded_symmetric(&mut rng, 8);
        let (lo, hi) = eigen_bounds(&m, 1e-10).unwrap();
        let ev = jacobi_eigenvalues(&m);
        let (dense_lo, dense_hi) = (ev[0], ev[ev.len() - 1]);
        // The shifted power iterations lose a factor ~2||m|| of absolute
        // accuracy relative to the requested tolerance.
        let tol = 1e-7 * spectral_norm_oracle(&m).max(1.0);
        assert!((lo - dense_lo).abs() <= tol, "lo {lo} vs {dense_lo}");
        assert!((hi - dense_hi).abs() <= tol, "hi {hi} vs {dense_hi}");
    }
}

#[test]
fn solve_spd_solution_matches_eigensolver_inverse() {
    let mut rng = RngStream::new(71);
    for _ in 0..10 {
        let d = 8;
        let mut m = seeded_symmetric(&mut rng, d);
        // Shift to safely positive definite using the dense spectrum.
        let shift = jacobi_eigenvalues(&m)[0].min(0.0).abs() + 1.0;
        m.add_scaled_identity(shift);
        let b = Vector::from_fn(d, |_| rng.normal());
        let x = solve_spd(&m, &b, 1e-12).unwrap();
        let mut r = b.clone();
        r.axpy(-1.0, &m.matvec(&x));
        assert!(r.norm() <= 1e-9 * b.norm().max(1e-300), "residual {}", r.norm());
    }
}

/// The group-gradient selectors satisfy their defining algebra: H splits
/// into the group means and the deviation selectors subtract exactly the
/// server component.
#[test]
fn group_gradient_selectors_are_consistent() {
    let mut rng = RngStream::new(13);
    for problem in [quad_family(9, 6, 0.2, 3.0), logistic_problem(21)] {
        for _ in 0..5 {
            let x = rng.in_ball(problem.d(), 2.0);
            let f = problem.grad_group(GroupGrad::F, &x).unwrap();
            let g = problem.grad_group(GroupGrad::G, &x).unwrap();
            let h = problem.grad_group(GroupGrad::H, &x).unwrap();
            let fgap = problem.grad_group(GroupGrad::FMinusF1, &x).unwrap();
            let ggap = problem.grad_group(GroupGrad::GMinusG1, &x).unwrap();
            let hgap = problem.grad_group(GroupGrad::HMinusH1, &x).unwrap();
            let scale = h.norm().max(1.0);

            let mut sum = f.clone();
            sum.axpy(1.0, &g);
            sum.axpy(-1.0, &h);
            assert!(sum.norm() <= 1e-12 * scale);

            let mut dev = fgap.clone();
            dev.axpy(1.0, &problem.server_f().grad(&x).unwrap());
            dev.axpy(-1.0, &f);
            assert!(dev.norm() <= 1e-12 * scale);

            let mut joint = fgap.clone();
            joint.axpy(1.0, &ggap);
            joint.axpy(-1.0, &hgap);
            assert!(joint.norm() <= 1e-12 * scale);
        }
    }
}

/// The generic damped-Newton reference minimizer agrees with the direct
/// linear-solve minimizer on quadratics.
#[test]
fn reference_minimizer_matches_direct_solve_on_quadratics() {
    for seed in [1, 2, 3] {
        let problem = quad_family(seed, 10, 0.4, 5.0);
        let newton = reference_minimizer(&problem, 1e-11).unwrap();
        let direct = quadratic_minimizer(&problem).unwrap();
        assert!(
            newton.dist(&direct) <= 1e-8 * (1.0 + direct.norm()),
            "distance {}",
            newton.dist(&direct)
        );
    }
}
