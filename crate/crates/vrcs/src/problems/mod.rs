//! Problem instances: component oracles held by nodes, the two-group
//! composite objective h = f + g, and measured similarity profiles
//! (mu, delta_f, delta_g) that drive parameter tuning.
//!
//! Group means always include the server: the server's components f_1 and
//! g_1 are members of their groups, and h_1 = f_1 + g_1 is the part the
//! server can evaluate without communication.

pub mod logistic;
pub mod quadratic;

pub use logistic::{
    make_logistic_split, read_dataset_csv, synthetic_two_gaussian, GroupTag, LogisticData,
    TwoGaussianConfig,
};
pub use quadratic::{make_quadratic_family, quadratic_minimizer, QuadraticFamilyConfig};

use crate::error::{Error, Result};
use crate::numerics::{eigen_bounds, solve_spd, spectral_norm, SymMatrix, Vector};
use crate::rng::RngStream;

/// Row-major dense feature matrix.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    vals: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != n * d {
            return Err(Error::DimMismatch {
                expected: n * d,
                got: vals.len(),
            });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(DataMatrix { n, d, vals })
    }

    pub fn empty(d: usize) -> Self {
        DataMatrix {
            n: 0,
            d,
            vals: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vals[i * self.d..(i + 1) * self.d]
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + exp(-z)) without overflow for large |z|.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Quadratic { a: SymMatrix, b: Vector },
    Logistic { data: DataMatrix, labels: Vec<f64>, l2: f64 },
}

/// One node's local objective: either 0.5 x'Ax - b'x or an l2-regularized
/// mean logistic loss over the node's rows. Smoothness and curvature
/// bounds are computed once at construction.
#[derive(Debug, Clone)]
pub struct ComponentOracle {
    kind: Kind,
    d: usize,
    smoothness: f64,
    curvature_lo: f64,
}

impl ComponentOracle {
    pub fn quadratic(a: SymMatrix, b: Vector) -> Result<Self> {
        let d = a.dim();
        if b.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                got: b.len(),
            });
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("quadratic oracle"));
        }
        let (lo, hi) = eigen_bounds(&a, 1e-8)?;
        Ok(ComponentOracle {
            kind: Kind::Quadratic { a, b },
            d,
            smoothness: lo.abs().max(hi.abs()),
            curvature_lo: lo,
        })
    }

    /// Mean logistic loss over the rows plus (l2/2)||x||^2. Zero rows is
    /// allowed and leaves only the regularizer.
    pub fn logistic(data: DataMatrix, labels: Vec<f64>, l2: f64) -> Result<Self> {
        if labels.len() != data.n() {
            return Err(Error::DimMismatch {
                expected: data.n(),
                got: labels.len(),
            });
        }
        if !(l2 >= 0.0) || !l2.is_finite() {
            return Err(Error::InvalidParam(format!("l2 must be >= 0, got {l2}")));
        }
        if labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
            return Err(Error::InvalidParam(
                "logistic labels must be +1 or -1".into(),
            ));
        }
        let d = data.d();
        let n = data.n();
        // Hessian of the data part is bounded by (1/(4n)) sum ||a_j||^2.
        let mut smooth = l2;
        if n > 0 {
            let tr: f64 = (0..n)
                .map(|i| data.row(i).iter().map(|v| v * v).sum::<f64>())
                .sum();
            smooth += tr / (4.0 * n as f64);
        }
        Ok(ComponentOracle {
            kind: Kind::Logistic { data, labels, l2 },
            d,
            smoothness: smooth,
            curvature_lo: l2,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, Kind::Quadratic { .. })
    }

    /// Upper bound on the operator norm of the Hessian, valid at every x.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Lower bound on Hessian eigenvalues, valid at every x. Negative for
    /// non-convex components.
    pub fn curvature_lo(&self) -> f64 {
        self.curvature_lo
    }

    pub fn quadratic_parts(&self) -> Option<(&SymMatrix, &Vector)> {
        match &self.kind {
            Kind::Quadratic { a, b } => Some((a, b)),
            Kind::Logistic { .. } => None,
        }
    }

    pub fn l2(&self) -> Option<f64> {
        match &self.kind {
            Kind::Logistic { l2, .. } => Some(*l2),
            Kind::Quadratic { .. } => None,
        }
    }

    /// Number of data rows (logistic oracles only).
    pub fn num_rows(&self) -> Option<usize> {
        match &self.kind {
            Kind::Logistic { data, .. } => Some(data.n()),
            Kind::Quadratic { .. } => None,
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value_raw(x))
    }

    pub(crate) fn value_raw(&self, x: &Vector) -> f64 {
        match &self.kind {
            Kind::Quadratic { a, b } => 0.5 * a.quadratic_form(x) - b.dot(x),
            Kind::Logistic { data, labels, l2 } => {
                let n = data.n();
                let mut loss = 0.0;
                for j in 0..n {
                    let t: f64 = data.row(j).iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    loss += softplus_neg(labels[j] * t);
                }
                if n > 0 {
                    loss /= n as f64;
                }
                loss + 0.5 * l2 * x.norm_sq()
            }
        }
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        let g = self.grad_raw(x);
        if !g.is_finite() {
            return Err(Error::NonFinite("component gradient"));
        }
        Ok(g)
    }

    pub(crate) fn grad_raw(&self, x: &Vector) -> Vector {
        match &self.kind {
            Kind::Quadratic { a, b } => {
                let mut g = a.matvec(x);
                g.axpy(-1.0, b);
                g
            }
            Kind::Logistic { data, labels, l2 } => {
                let n = data.n();
                let mut g = x.scale(*l2);
                if n > 0 {
                    let inv = 1.0 / n as f64;
                    for j in 0..n {
                        let row = data.row(j);
                        let y = labels[j];
                        let t: f64 = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                        let coef = -y * sigmoid(-y * t) * inv;
                        for (gi, ai) in g.as_mut_slice().iter_mut().zip(row) {
                            *gi += coef * ai;
                        }
                    }
                }
                g
            }
        }
    }

    /// Analytic Hessian at x (constant for quadratics).
    pub fn hessian_at(&self, x: &Vector) -> Result<SymMatrix> {
        self.check_dim(x)?;
        match &self.kind {
            Kind::Quadratic { a, .. } => Ok(a.clone()),
            Kind::Logistic { data, labels, l2 } => {
                let mut h = SymMatrix::zeros(self.d);
                h.add_scaled_identity(*l2);
                let n = data.n();
                if n > 0 {
                    let inv = 1.0 / n as f64;
                    for j in 0..n {
                        let row = data.row(j);
                        let y = labels[j];
                        let t: f64 = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                        let s = sigmoid(-y * t);
                        let w = s * (1.0 - s) * inv;
                        let rv = Vector::new(row.to_vec());
                        h.add_outer(w, &rv);
                    }
                }
                Ok(h)
            }
        }
    }
}

/// Group-level gradient selector. `F` and `G` are the group means
/// (server included); the `..MinusF1/G1` variants subtract the server's
/// own component; `H` sums both groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupGrad {
    F,
    G,
    FMinusF1,
    GMinusG1,
    H,
    HMinusH1,
}

/// The distributed problem: a server holding (f_1, g_1) plus the remaining
/// clients of each group. |M_f| = 1 + clients_f.len(), same for g.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    server_f: ComponentOracle,
    server_g: ComponentOracle,
    clients_f: Vec<ComponentOracle>,
    clients_g: Vec<ComponentOracle>,
    d: usize,
}

impl CompositeProblem {
    pub fn new(
        server_f: ComponentOracle,
        server_g: ComponentOracle,
        clients_f: Vec<ComponentOracle>,
        clients_g: Vec<ComponentOracle>,
    ) -> Result<Self> {
        let d = server_f.dim();
        for o in std::iter::once(&server_g)
            .chain(clients_f.iter())
            .chain(clients_g.iter())
        {
            if o.dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: o.dim(),
                });
            }
        }
        Ok(CompositeProblem {
            server_f,
            server_g,
            clients_f,
            clients_g,
            d,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m_f(&self) -> usize {
        1 + self.clients_f.len()
    }

    pub fn m_g(&self) -> usize {
        1 + self.clients_g.len()
    }

    pub fn server_f(&self) -> &ComponentOracle {
        &self.server_f
    }

    pub fn server_g(&self) -> &ComponentOracle {
        &self.server_g
    }

    pub fn clients_f(&self) -> &[ComponentOracle] {
        &self.clients_f
    }

    pub fn clients_g(&self) -> &[ComponentOracle] {
        &self.clients_g
    }

    pub fn all_quadratic(&self) -> bool {
        self.server_f.is_quadratic()
            && self.server_g.is_quadratic()
            && self.clients_f.iter().all(|o| o.is_quadratic())
            && self.clients_g.iter().all(|o| o.is_quadratic())
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn mean_grad(&self, server: &ComponentOracle, clients: &[ComponentOracle], x: &Vector) -> Vector {
        let mut g = server.grad_raw(x);
        for c in clients {
            g.axpy(1.0, &c.grad_raw(x));
        }
        g.scale_mut(1.0 / (1 + clients.len()) as f64);
        g
    }

    /// Group gradient at x. The H selectors are assembled as exact sums of
    /// the two group means, so grad_group(H) == grad_group(F) + grad_group(G)
    /// holds to the last bit.
    pub fn grad_group(&self, which: GroupGrad, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        let g = match which {
            GroupGrad::F => self.mean_grad(&self.server_f, &self.clients_f, x),
            GroupGrad::G => self.mean_grad(&self.server_g, &self.clients_g, x),
            GroupGrad::FMinusF1 => {
                let mut g = self.mean_grad(&self.server_f, &self.clients_f, x);
                g.axpy(-1.0, &self.server_f.grad_raw(x));
                g
            }
            GroupGrad::GMinusG1 => {
                let mut g = self.mean_grad(&self.server_g, &self.clients_g, x);
                g.axpy(-1.0, &self.server_g.grad_raw(x));
                g
            }
            GroupGrad::H => {
                let mut g = self.mean_grad(&self.server_f, &self.clients_f, x);
                g.axpy(1.0, &self.mean_grad(&self.server_g, &self.clients_g, x));
                g
            }
            GroupGrad::HMinusH1 => {
                let mut g = self.grad_group(GroupGrad::FMinusF1, x)?;
                g.axpy(1.0, &self.grad_group(GroupGrad::GMinusG1, x)?);
                g
            }
        };
        if !g.is_finite() {
            return Err(Error::NonFinite("group gradient"));
        }
        Ok(g)
    }

    fn mean_value(&self, server: &ComponentOracle, clients: &[ComponentOracle], x: &Vector) -> f64 {
        let mut v = server.value_raw(x);
        for c in clients {
            v += c.value_raw(x);
        }
        v / (1 + clients.len()) as f64
    }

    pub fn value_f(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.mean_value(&self.server_f, &self.clients_f, x))
    }

    pub fn value_g(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.mean_value(&self.server_g, &self.clients_g, x))
    }

    pub fn value_h(&self, x: &Vector) -> Result<f64> {
        Ok(self.value_f(x)? + self.value_g(x)?)
    }

    pub fn value_h1(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.server_f.value_raw(x) + self.server_g.value_raw(x))
    }

    /// Mean Hessian of group f at x (instrumentation; not a communication
    /// primitive).
    pub fn mean_hessian_f(&self, x: &Vector) -> Result<SymMatrix> {
        let mut h = self.server_f.hessian_at(x)?;
        for c in &self.clients_f {
            h.add_scaled(1.0, &c.hessian_at(x)?);
        }
        h.scale_mut(1.0 / self.m_f() as f64);
        Ok(h)
    }

    pub fn mean_hessian_g(&self, x: &Vector) -> Result<SymMatrix> {
        let mut h = self.server_g.hessian_at(x)?;
        for c in &self.clients_g {
            h.add_scaled(1.0, &c.hessian_at(x)?);
        }
        h.scale_mut(1.0 / self.m_g() as f64);
        Ok(h)
    }

    /// Upper bound on the smoothness of the group-f mean (mean of the
    /// per-node bounds).
    pub fn group_smoothness_f(&self) -> f64 {
        let s: f64 = self.server_f.smoothness()
            + self.clients_f.iter().map(|o| o.smoothness()).sum::<f64>();
        s / self.m_f() as f64
    }

    pub fn group_smoothness_g(&self) -> f64 {
        let s: f64 = self.server_g.smoothness()
            + self.clients_g.iter().map(|o| o.smoothness()).sum::<f64>();
        s / self.m_g() as f64
    }
}

/// High-accuracy minimizer of h by damped Newton, used to pin h* for
/// suboptimality traces. Exact in one step on quadratics.
pub fn reference_minimizer(p: &CompositeProblem, tol: f64) -> Result<Vector> {
    let mut x = Vector::zeros(p.d());
    for _ in 0..200 {
        let g = p.grad_group(GroupGrad::H, &x)?;
        if g.norm() <= tol {
            return Ok(x);
        }
        let mut h = p.mean_hessian_f(&x)?;
        h.add_scaled(1.0, &p.mean_hessian_g(&x)?);
        let step = solve_spd(&h, &g, 1e-12)?;
        // Backtracking keeps the early logistic steps inside the basin.
        let f0 = p.value_h(&x)?;
        let gdot = g.dot(&step);
        let mut t = 1.0;
        loop {
            let mut xt = x.clone();
            xt.axpy(-t, &step);
            let ft = p.value_h(&xt)?;
            if ft <= f0 - 0.25 * t * gdot || t < 1e-8 {
                x = xt;
                break;
            }
            t *= 0.5;
        }
    }
    let g = p.grad_group(GroupGrad::H, &x)?;
    if g.norm() <= tol * 10.0 {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            context: "reference minimizer",
            estimate: g.norm(),
        })
    }
}

/// How a similarity profile was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileProvenance {
    /// Spectral norms of constant Hessian differences (quadratics only).
    Exact,
    /// Max over Hessian differences sampled on points in a ball; tuning
    /// applies a 1.5x safety factor to these estimates.
    GridEstimate { points: usize, radius: f64 },
}

#[derive(Debug, Clone, Copy)]
pub enum ProfileMode {
    Exact,
    Grid { points: usize, radius: f64 },
}

/// Measured (mu, delta_f, delta_g), clamped so mu < delta_f <= delta_g
/// strictly holds with relative floors of 1e-6.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityProfile {
    pub mu: f64,
    pub delta_f: f64,
    pub delta_g: f64,
    pub provenance: ProfileProvenance,
}

const ORDER_FLOOR: f64 = 1e-6;
const GRID_SAFETY: f64 = 1.5;
const PROFILE_GRID_SEED: u64 = 0x9D2C_5681_0B5E_ED01;

fn clamp_deltas(mu: f64, df: f64, dg: f64) -> (f64, f64) {
    let df = df.max(mu * (1.0 + ORDER_FLOOR));
    let dg = dg.max(df * (1.0 + ORDER_FLOOR));
    (df, dg)
}

impl SimilarityProfile {
    /// Values fed to tune(): grid estimates get the safety factor; exact
    /// measurements pass through untouched. Ordering clamps happen once,
    /// inside make_profile — a hand-built profile that violates the
    /// ordering is rejected by tune rather than silently repaired.
    pub fn effective(&self) -> SimilarityProfile {
        let (df, dg) = match self.provenance {
            ProfileProvenance::Exact => (self.delta_f, self.delta_g),
            ProfileProvenance::GridEstimate { .. } => {
                (self.delta_f * GRID_SAFETY, self.delta_g * GRID_SAFETY)
            }
        };
        SimilarityProfile {
            mu: self.mu,
            delta_f: df,
            delta_g: dg,
            provenance: self.provenance,
        }
    }
}

/// Measures (mu, delta_f, delta_g) for a problem.
///
/// Exact mode needs constant Hessians (quadratics): delta_f is the exact
/// spectral norm of A_f1 - mean(A_f), and mu the smallest eigenvalue of the
/// mean Hessian of h. Grid mode samples Hessian differences at points in a
/// ball around the origin (fixed internal seed, so repeated calls agree)
/// and takes the max; mu comes from mu_hint, the common l2 of logistic
/// oracles, or the exact mean-Hessian bound for quadratics.
pub fn make_profile(
    p: &CompositeProblem,
    mode: ProfileMode,
    mu_hint: Option<f64>,
) -> Result<SimilarityProfile> {
    match mode {
        ProfileMode::Exact => {
            if !p.all_quadratic() {
                return Err(Error::Mode(
                    "exact similarity profile requires quadratic oracles".into(),
                ));
            }
            let x0 = Vector::zeros(p.d());
            let mut diff_f = p.server_f().hessian_at(&x0)?;
            diff_f.add_scaled(-1.0, &p.mean_hessian_f(&x0)?);
            let df = spectral_norm(&diff_f, 1e-8)?;

            let mut diff_g = p.server_g().hessian_at(&x0)?;
            diff_g.add_scaled(-1.0, &p.mean_hessian_g(&x0)?);
            let dg = spectral_norm(&diff_g, 1e-8)?;

            let mut mean_h = p.mean_hessian_f(&x0)?;
            mean_h.add_scaled(1.0, &p.mean_hessian_g(&x0)?);
            let (mu, _) = eigen_bounds(&mean_h, 1e-7)?;
            let mu = mu_hint.unwrap_or(mu);
            if !(mu > 0.0) {
                return Err(Error::Construction(format!(
                    "mean Hessian is not positive definite (lambda_min ~ {mu:.3e})"
                )));
            }
            let (df, dg) = clamp_deltas(mu, df, dg);
            Ok(SimilarityProfile {
                mu,
                delta_f: df,
                delta_g: dg,
                provenance: ProfileProvenance::Exact,
            })
        }
        ProfileMode::Grid { points, radius } => {
            if points == 0 || !(radius > 0.0) {
                return Err(Error::InvalidParam(
                    "grid profile needs points >= 1 and radius > 0".into(),
                ));
            }
            let mut rng = RngStream::new(PROFILE_GRID_SEED);
            let mut sample = vec![Vector::zeros(p.d())];
            for _ in 0..points {
                sample.push(rng.in_ball(p.d(), radius));
            }
            let mut df = 0.0_f64;
            let mut dg = 0.0_f64;
            for x in &sample {
                let mut diff_f = p.server_f().hessian_at(x)?;
                diff_f.add_scaled(-1.0, &p.mean_hessian_f(x)?);
                df = df.max(spectral_norm(&diff_f, 1e-8)?);

                let mut diff_g = p.server_g().hessian_at(x)?;
                diff_g.add_scaled(-1.0, &p.mean_hessian_g(x)?);
                dg = dg.max(spectral_norm(&diff_g, 1e-8)?);
            }
            let mu = match mu_hint {
                Some(m) => m,
                None => {
                    if let Some(l2) = p.server_f().l2() {
                        l2
                    } else if p.all_quadratic() {
                        let x0 = Vector::zeros(p.d());
                        let mut mean_h = p.mean_hessian_f(&x0)?;
                        mean_h.add_scaled(1.0, &p.mean_hessian_g(&x0)?);
                        eigen_bounds(&mean_h, 1e-7)?.0
                    } else {
                        return Err(Error::Mode(
                            "grid profile needs mu_hint for this oracle mix".into(),
                        ));
                    }
                }
            };
            if !(mu > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "profile mu must be positive, got {mu:.3e}"
                )));
            }
            let (df, dg) = clamp_deltas(mu, df, dg);
            Ok(SimilarityProfile {
                mu,
                delta_f: df,
                delta_g: dg,
                provenance: ProfileProvenance::GridEstimate { points, radius },
            })
        }
    }
}
