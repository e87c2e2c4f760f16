//! Star-topology communication simulator.
//!
//! Algorithms never touch a `CompositeProblem` directly: they hold a
//! `SimNet`, whose problem reference is private, and obtain group
//! gradients only through `round_grad`, which charges the ledger. One
//! F-round costs m_f - 1 uplink messages (the server's own component is
//! local), an ALL round touches both groups and charges both counters.
//!
//! `observe` is explicitly instrumentation: it evaluates h and its
//! gradient for traces, stopping checks and divergence guards without
//! charging, mirroring how convergence plots are produced offline.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::problems::{ComponentOracle, CompositeProblem, GroupGrad};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    F,
    G,
    All,
}

/// What a round asks every polled node to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradSelector {
    F,
    FMinusF1,
    G,
    GMinusG1,
    /// Both deviation gradients (ALL rounds): (f - f1, g - g1).
    Gaps,
    H,
    HMinusH1,
}

#[derive(Debug, Clone)]
pub enum RoundGrads {
    Single(Vector),
    Pair { f_gap: Vector, g_gap: Vector },
}

impl RoundGrads {
    pub fn single(self) -> Vector {
        match self {
            RoundGrads::Single(v) => v,
            RoundGrads::Pair { .. } => panic!("round returned a pair"),
        }
    }

    pub fn pair(self) -> (Vector, Vector) {
        match self {
            RoundGrads::Pair { f_gap, g_gap } => (f_gap, g_gap),
            RoundGrads::Single(_) => panic!("round returned a single gradient"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundEvent {
    pub seq: u64,
    pub group: Group,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LedgerSnapshot {
    pub rounds_f: u64,
    pub rounds_g: u64,
    pub comms_f: u64,
    pub comms_g: u64,
}

impl LedgerSnapshot {
    pub fn rounds_total(&self) -> u64 {
        self.rounds_f + self.rounds_g
    }
}

/// Append-only communication ledger.
#[derive(Debug, Clone, Default)]
pub struct CommLedger {
    snapshot: LedgerSnapshot,
    history: Vec<RoundEvent>,
}

impl CommLedger {
    fn charge(&mut self, group: Group, comms_f_per: u64, comms_g_per: u64) {
        match group {
            Group::F => {
                self.snapshot.rounds_f += 1;
                self.snapshot.comms_f += comms_f_per;
            }
            Group::G => {
                self.snapshot.rounds_g += 1;
                self.snapshot.comms_g += comms_g_per;
            }
            Group::All => {
                self.snapshot.rounds_f += 1;
                self.snapshot.rounds_g += 1;
                self.snapshot.comms_f += comms_f_per;
                self.snapshot.comms_g += comms_g_per;
            }
        }
        self.history.push(RoundEvent {
            seq: self.history.len() as u64,
            group,
        });
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.snapshot
    }

    pub fn history(&self) -> &[RoundEvent] {
        &self.history
    }
}

/// Instrumented view of the objective at a point; produced without
/// touching the ledger.
#[derive(Debug, Clone)]
pub struct Observation {
    pub value: f64,
    pub grad: Vector,
    pub grad_norm: f64,
}

/// Server-local components, free to evaluate.
#[derive(Debug, Clone, Copy)]
pub struct ServerView<'p> {
    pub f1: &'p ComponentOracle,
    pub g1: &'p ComponentOracle,
}

impl ServerView<'_> {
    pub fn grad_h1(&self, x: &Vector) -> Vector {
        let mut g = self.f1.grad_raw(x);
        g.axpy(1.0, &self.g1.grad_raw(x));
        g
    }

    pub fn value_h1(&self, x: &Vector) -> f64 {
        self.f1.value_raw(x) + self.g1.value_raw(x)
    }
}

pub struct SimNet<'p> {
    problem: &'p CompositeProblem,
    ledger: CommLedger,
}

impl<'p> SimNet<'p> {
    pub fn new(problem: &'p CompositeProblem) -> Self {
        SimNet {
            problem,
            ledger: CommLedger::default(),
        }
    }

    pub fn d(&self) -> usize {
        self.problem.d()
    }

    pub fn m_f(&self) -> usize {
        self.problem.m_f()
    }

    pub fn m_g(&self) -> usize {
        self.problem.m_g()
    }

    pub fn server(&self) -> ServerView<'p> {
        ServerView {
            f1: self.problem.server_f(),
            g1: self.problem.server_g(),
        }
    }

    /// Mean smoothness bounds per group; static metadata exchanged at
    /// setup, not charged.
    pub fn group_smoothness_f(&self) -> f64 {
        self.problem.group_smoothness_f()
    }

    pub fn group_smoothness_g(&self) -> f64 {
        self.problem.group_smoothness_g()
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }

    /// One synchronous communication round: the polled group evaluates the
    /// selected gradient at x and the ledger is charged. Selector and group
    /// must agree; F rounds serve f-side quantities only, G rounds g-side,
    /// ALL rounds serve joint quantities.
    pub fn round_grad(
        &mut self,
        group: Group,
        which: GradSelector,
        x: &Vector,
    ) -> Result<RoundGrads> {
        let comms_f = (self.problem.m_f() - 1) as u64;
        let comms_g = (self.problem.m_g() - 1) as u64;
        let out = match (group, which) {
            (Group::F, GradSelector::F) => {
                RoundGrads::Single(self.problem.grad_group(GroupGrad::F, x)?)
            }
            (Group::F, GradSelector::FMinusF1) => {
                RoundGrads::Single(self.problem.grad_group(GroupGrad::FMinusF1, x)?)
            }
            (Group::G, GradSelector::G) => {
                RoundGrads::Single(self.problem.grad_group(GroupGrad::G, x)?)
            }
            (Group::G, GradSelector::GMinusG1) => {
                RoundGrads::Single(self.problem.grad_group(GroupGrad::GMinusG1, x)?)
            }
            (Group::All, GradSelector::Gaps) => RoundGrads::Pair {
                f_gap: self.problem.grad_group(GroupGrad::FMinusF1, x)?,
                g_gap: self.problem.grad_group(GroupGrad::GMinusG1, x)?,
            },
            (Group::All, GradSelector::H) => {
                RoundGrads::Single(self.problem.grad_group(GroupGrad::H, x)?)
            }
            (Group::All, GradSelector::HMinusH1) => {
                RoundGrads::Single(self.problem.grad_group(GroupGrad::HMinusH1, x)?)
            }
            (g, w) => {
                return Err(Error::Protocol(format!(
                    "selector {w:?} is not served by a {g:?} round"
                )))
            }
        };
        self.ledger.charge(group, comms_f, comms_g);
        Ok(out)
    }

    /// Uncounted instrumentation: h(x) and its gradient, for traces,
    /// stopping checks and divergence guards.
    pub fn observe(&self, x: &Vector) -> Result<Observation> {
        let grad = self.problem.grad_group(GroupGrad::H, x)?;
        let value = self.problem.value_h(x)?;
        let grad_norm = grad.norm();
        Ok(Observation {
            value,
            grad,
            grad_norm,
        })
    }
}
