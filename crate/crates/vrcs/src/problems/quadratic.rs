//! Synthetic quadratic families with controlled group similarity.
//!
//! Both group-mean Hessians share an eigenbasis with their smallest
//! eigenvalues pinned at mu/2 on a common direction, so the mean Hessian of
//! h has smallest eigenvalue exactly mu. Client Hessians are the group mean
//! plus zero-sum rank-controlled perturbations: the server's deviation has
//! spectral norm exactly delta_f (resp. delta_g = ratio * delta_f) and the
//! group mean is unchanged. All linear terms are zero, so the optimum of h
//! sits at the origin and every gradient deviation vanishes there.

use crate::error::{Error, Result};
use crate::numerics::{solve_spd, SymMatrix, Vector};
use crate::problems::{ComponentOracle, CompositeProblem};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub struct QuadraticFamilyConfig {
    pub d: usize,
    pub m_f: usize,
    pub m_g: usize,
    /// delta_g / delta_f target, >= 1.
    pub ratio: f64,
    /// Strong convexity modulus of h (exact by construction).
    pub mu: f64,
    /// Server-vs-mean Hessian gap for group f; defaults to 5 * mu.
    pub delta_f: Option<f64>,
    pub seed: u64,
}

fn orthonormal_set(rng: &mut RngStream, d: usize, count: usize) -> Vec<Vector> {
    let mut basis: Vec<Vector> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = Vector::from_fn(d, |_| rng.normal());
        for b in &basis {
            let c = v.dot(b);
            v.axpy(-c, b);
        }
        let n = v.norm();
        if n > 1e-8 {
            v.scale_mut(1.0 / n);
            basis.push(v);
        }
    }
    basis
}

/// Unit-spectral-norm symmetric perturbation of small rank: coefficients
/// 1, -1/2, 1/4, ... on mutually orthonormal directions, so the largest
/// absolute eigenvalue is exactly 1.
fn unit_perturbation(rng: &mut RngStream, d: usize) -> SymMatrix {
    let rank = (d / 4).clamp(1, 6);
    let dirs = orthonormal_set(rng, d, rank);
    let mut s = SymMatrix::zeros(d);
    let mut coef = 1.0;
    for u in &dirs {
        s.add_outer(coef, u);
        coef *= -0.5;
    }
    s
}

pub fn make_quadratic_family(cfg: &QuadraticFamilyConfig) -> Result<CompositeProblem> {
    if cfg.d < 2 {
        return Err(Error::InvalidParam(format!(
            "quadratic family needs d >= 2, got {}",
            cfg.d
        )));
    }
    if cfg.m_f < 1 || cfg.m_g < 1 {
        return Err(Error::InvalidParam("group sizes must be >= 1".into()));
    }
    if !(cfg.ratio >= 1.0) || !cfg.ratio.is_finite() {
        return Err(Error::InvalidParam(format!(
            "ratio must be >= 1, got {}",
            cfg.ratio
        )));
    }
    if !(cfg.mu > 0.0) || !cfg.mu.is_finite() {
        return Err(Error::InvalidParam(format!(
            "mu must be positive, got {}",
            cfg.mu
        )));
    }
    let delta_f = cfg.delta_f.unwrap_or(5.0 * cfg.mu);
    if !(delta_f > cfg.mu) {
        return Err(Error::Construction(format!(
            "delta_f ({delta_f}) must exceed mu ({}) for a usable profile",
            cfg.mu
        )));
    }
    let delta_g = cfg.ratio * delta_f;
    if !delta_g.is_finite() {
        return Err(Error::Construction("delta_g overflow".into()));
    }

    let d = cfg.d;
    let mut rng = RngStream::new(cfg.seed);
    let basis = orthonormal_set(&mut rng, d, d);

    // Shared eigenbasis; index 0 carries mu/2 in both groups so the mean
    // Hessian of h = f + g has smallest eigenvalue exactly mu. The other
    // eigenvalues are jittered within disjoint slots of [0.1, 1.0] of the
    // span, which keeps every spectral gap bounded below and the power
    // iterations that measure these matrices fast.
    let lam_hi = (1.0_f64).max(2.0 * cfg.mu);
    let span = lam_hi - 0.5 * cfg.mu;
    let slots = (d - 1) as f64;
    let spaced = |rng: &mut RngStream| -> Vec<f64> {
        (0..d - 1)
            .map(|i| {
                let t = (i as f64 + 0.2 + 0.6 * rng.uniform01()) / slots;
                0.5 * cfg.mu + span * (0.1 + 0.9 * t)
            })
            .collect()
    };
    let lams_f = spaced(&mut rng);
    let mut lams_g = spaced(&mut rng);
    // Decorrelate the two spectra across the shared basis.
    for i in (1..lams_g.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        lams_g.swap(i, j);
    }
    let mut mean_f = SymMatrix::zeros(d);
    let mut mean_g = SymMatrix::zeros(d);
    for (i, q) in basis.iter().enumerate() {
        let (lf, lg) = if i == 0 {
            (0.5 * cfg.mu, 0.5 * cfg.mu)
        } else {
            (lams_f[i - 1], lams_g[i - 1])
        };
        mean_f.add_outer(lf, q);
        mean_g.add_outer(lg, q);
    }

    let build_group = |rng: &mut RngStream,
                       mean: &SymMatrix,
                       m: usize,
                       delta: f64|
     -> Result<(ComponentOracle, Vec<ComponentOracle>)> {
        let b = Vector::zeros(d);
        if m == 1 {
            // A single node IS the group mean; no deviation possible.
            let server = ComponentOracle::quadratic(mean.clone(), b)?;
            return Ok((server, Vec::new()));
        }
        let s = unit_perturbation(rng, d);
        let mut a1 = mean.clone();
        a1.add_scaled(delta, &s);
        let server = ComponentOracle::quadratic(a1, b.clone())?;
        let mut clients = Vec::with_capacity(m - 1);
        let back = -delta / (m - 1) as f64;
        for _ in 1..m {
            let mut am = mean.clone();
            am.add_scaled(back, &s);
            clients.push(ComponentOracle::quadratic(am, b.clone())?);
        }
        Ok((server, clients))
    };

    let (server_f, clients_f) = build_group(&mut rng, &mean_f, cfg.m_f, delta_f)?;
    let (server_g, clients_g) = build_group(&mut rng, &mean_g, cfg.m_g, delta_g)?;

    // Defensive: the mean Hessian of h must be positive definite. The
    // zero-sum perturbations cannot break this, so a failure here means the
    // requested scales are numerically unusable.
    let mut mean_h = mean_f.clone();
    mean_h.add_scaled(1.0, &mean_g);
    let probe = Vector::ones(d);
    if solve_spd(&mean_h, &probe, 1e-8).is_err() {
        return Err(Error::Construction(
            "mean Hessian of h lost positive definiteness".into(),
        ));
    }

    CompositeProblem::new(server_f, server_g, clients_f, clients_g)
}

/// Exact minimizer of the quadratic h: solves (mean_A_f + mean_A_g) x =
/// mean_b_f + mean_b_g.
pub fn quadratic_minimizer(p: &CompositeProblem) -> Result<Vector> {
    if !p.all_quadratic() {
        return Err(Error::Mode("quadratic_minimizer needs quadratic oracles".into()));
    }
    let x0 = Vector::zeros(p.d());
    let mut h = p.mean_hessian_f(&x0)?;
    h.add_scaled(1.0, &p.mean_hessian_g(&x0)?);
    // Mean linear terms: grad at 0 is -mean_b.
    let mut rhs = p.grad_group(crate::problems::GroupGrad::H, &x0)?;
    rhs.scale_mut(-1.0);
    solve_spd(&h, &rhs, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::spectral_norm;
    use crate::problems::{make_profile, GroupGrad, ProfileMode};
    use approx::assert_relative_eq;

    fn cfg(d: usize, ratio: f64, mu: f64, seed: u64) -> QuadraticFamilyConfig {
        QuadraticFamilyConfig {
            d,
            m_f: 4,
            m_g: 4,
            ratio,
            mu,
            delta_f: None,
            seed,
        }
    }

    #[test]
    fn family_hits_requested_similarity_targets() {
        let p = make_quadratic_family(&cfg(12, 4.0, 0.1, 7)).unwrap();
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        assert_relative_eq!(prof.mu, 0.1, max_relative = 1e-6);
        assert_relative_eq!(prof.delta_f, 0.5, max_relative = 1e-7);
        assert_relative_eq!(prof.delta_g, 2.0, max_relative = 1e-7);
    }

    #[test]
    fn single_node_groups_have_zero_deviation() {
        let mut c = cfg(4, 2.0, 0.2, 3);
        c.m_f = 1;
        c.m_g = 1;
        let p = make_quadratic_family(&c).unwrap();
        let x = Vector::ones(4);
        let gap = p.grad_group(GroupGrad::FMinusF1, &x).unwrap();
        assert!(gap.norm() < 1e-14);
        // Profile clamps the measured zeros up to the ordering floor.
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        assert!(prof.mu < prof.delta_f && prof.delta_f < prof.delta_g);
    }

    #[test]
    fn group_mean_unchanged_by_perturbations() {
        let p = make_quadratic_family(&cfg(8, 4.0, 0.1, 11)).unwrap();
        // The deviation direction is zero-sum: mean client Hessian equals
        // the target mean, so grad of (f - f1) is linear with norm bound
        // delta_f and the minimizer of h is the origin.
        let xstar = quadratic_minimizer(&p).unwrap();
        assert!(xstar.norm() < 1e-10);
    }

    #[test]
    fn deviation_is_delta_lipschitz() {
        let p = make_quadratic_family(&cfg(8, 4.0, 0.1, 13)).unwrap();
        let prof = make_profile(&p, ProfileMode::Exact, None).unwrap();
        let mut rng = RngStream::new(99);
        for _ in 0..100 {
            let x = rng.in_ball(8, 5.0);
            let y = rng.in_ball(8, 5.0);
            let gx = p.grad_group(GroupGrad::FMinusF1, &x).unwrap();
            let gy = p.grad_group(GroupGrad::FMinusF1, &y).unwrap();
            let lhs = (&gx - &gy).norm();
            // grad_group(FMinusF1) = grad f - grad f1 = -(deviation) * x.
            assert!(lhs <= prof.delta_f * x.dist(&y) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn perturbation_norm_is_exact() {
        let mut rng = RngStream::new(5);
        let s = unit_perturbation(&mut rng, 10);
        let n = spectral_norm(&s, 1e-11).unwrap();
        assert_relative_eq!(n, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_small_dimension_and_bad_ratio() {
        assert!(make_quadratic_family(&cfg(1, 2.0, 0.1, 1)).is_err());
        assert!(make_quadratic_family(&cfg(4, 0.5, 0.1, 1)).is_err());
        let mut c = cfg(4, 2.0, 0.1, 1);
        c.delta_f = Some(0.05); // below mu
        assert!(make_quadratic_family(&c).is_err());
    }
}
