//! Seeded random streams with a pinned draw path.
//!
//! The generator is ChaCha8 keyed through SplitMix64 expansion, and every
//! distribution below maps raw u64 output to its value inside this module,
//! so a (seed, draw index) pair produces the same result on every platform.

use crate::error::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A counted random stream. `counter` records how many raw 64-bit words
/// have been consumed, which makes draw positions auditable in tests.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    counter: u64,
}

impl RngStream {
    /// Stream keyed by a single 64-bit seed.
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        RngStream {
            rng: ChaCha8Rng::from_seed(key),
            seed,
            counter: 0,
        }
    }

    /// Independent substream for run `run_index` under `master` seed.
    /// Derivation mixes the index through SplitMix64 so substreams do not
    /// depend on enumeration order of the run grid.
    pub fn derive(master: u64, run_index: u64) -> Self {
        let mut s = master;
        let base = splitmix64(&mut s);
        let mut t = base ^ run_index.wrapping_mul(0xA24BAED4963EE407);
        RngStream::new(splitmix64(&mut t))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.rng.next_u64()
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw; consumes exactly one word.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParam(format!(
                "bernoulli probability must be in [0,1], got {p}"
            )));
        }
        Ok(self.uniform01() < p)
    }

    /// Geometric draw on support {1, 2, ...} with success probability q:
    /// P(T = k) = q (1-q)^(k-1), mean 1/q. Inverse CDF on one uniform word.
    pub fn geometric(&mut self, q: f64) -> Result<u64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "geometric success probability must be in (0,1], got {q}"
            )));
        }
        let u = self.uniform01();
        if q == 1.0 {
            return Ok(1);
        }
        // floor(ln(1-u)/ln(1-q)) + 1; u in [0,1) keeps the logs finite.
        let k = ((1.0 - u).ln() / (1.0 - q).ln()).floor();
        let k = if k.is_finite() { k as u64 } else { u64::MAX >> 16 };
        Ok(k + 1)
    }

    /// Standard normal via Box-Muller; consumes two words.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform01(); // (0, 1]
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform point in the centered ball of the given radius.
    pub fn in_ball(&mut self, d: usize, radius: f64) -> crate::numerics::Vector {
        // Direction from normals, radius by inverse CDF of r^d.
        let mut v = crate::numerics::Vector::from_fn(d, |_| 0.0);
        loop {
            for i in 0..d {
                v[i] = self.normal();
            }
            if v.norm() > 0.0 {
                break;
            }
        }
        let r = radius * self.uniform01().powf(1.0 / d as f64);
        let n = v.norm();
        v.scale(r / n)
    }
}
