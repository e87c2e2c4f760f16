//! Distributed composite optimization with two node groups under
//! Hessian-similarity assumptions: problem construction, a communication
//! simulator with per-group round/message ledgers, inexact proximal
//! subsolvers, and the solver family built on them.

pub mod algorithms;
pub mod cli;
pub mod error;
pub mod numerics;
pub mod problems;
pub mod rng;
pub mod simnet;
pub mod subsolver;

pub use error::{Error, Result};
