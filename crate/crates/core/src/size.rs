//! Analytic circuit-size accounting for constructed predictors.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::distinguisher::AccessLevel;

/// Declared costs and the running size bound. The bound is an analytic
/// report derived from self-declared costs, not a measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeAccount {
    /// Number of update terms.
    pub t: u64,
    /// Largest per-distinguisher cost seen so far.
    pub s: u64,
    /// Largest query budget seen so far.
    pub q: u64,
    /// Cost of one arithmetic update.
    pub w: u64,
    pub bound: f64,
    /// Description length charged to code-access updates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_bits: Option<u64>,
}

impl SizeAccount {
    pub fn new(initial_bound: f64, w: u64) -> Self {
        SizeAccount {
            t: 0,
            s: 0,
            q: 0,
            w,
            bound: initial_bound,
            description_bits: None,
        }
    }

    /// Advances by one update driven by a distinguisher of the given level and cost.
    pub fn advance(&mut self, level: AccessLevel, cost: u64) {
        let s = cost as f64;
        let w = self.w as f64;
        self.t += 1;
        self.s = self.s.max(cost);
        self.bound = match level {
            AccessLevel::NoAccess | AccessLevel::SampleAccess => self.bound + 2.0 * s + 3.0 * w,
            AccessLevel::OracleAccess { max_queries } => {
                self.q = self.q.max(max_queries as u64);
                3.0 * s + (2.0 * max_queries as f64 + 1.0) * self.bound
            }
            AccessLevel::CodeAccess => {
                let n = description_bits(self.bound.ceil() as u64);
                self.description_bits = Some(n);
                self.bound + 2.0 * (s + n as f64) + 3.0 * w
            }
        };
    }
}

/// `⌈s·log₂ s⌉`, the description length charged for a size-`s` circuit.
pub fn description_bits(s: u64) -> u64 {
    if s <= 1 {
        return 1;
    }
    let s = s as f64;
    (s * s.log2()).ceil() as u64
}

/// Iterates `s^{(t+1)} = 3s + (2q+1)·s^{(t)}` exactly, returning `s^{(0)}..=s^{(steps)}`.
pub fn oracle_recurrence(s: u64, q: u64, initial: u64, steps: usize) -> Vec<BigUint> {
    let three_s = BigUint::from(3u64) * s;
    let factor = BigUint::from(2 * q + 1);
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = BigUint::from(initial);
    out.push(cur.clone());
    for _ in 0..steps {
        cur = &three_s + &factor * &cur;
        out.push(cur.clone());
    }
    out
}

/// `3s·((2q+1)^{T+1} − 1)/(2q)`, the value of the recurrence after `T` steps
/// started from `3s`. For `q = 0` this is the limit `3s·(T+1)`.
pub fn oracle_closed_form(s: u64, q: u64, steps: u32) -> BigUint {
    if q == 0 {
        return BigUint::from(3u64) * s * (steps as u64 + 1);
    }
    let base = BigUint::from(2 * q + 1);
    let num = BigUint::from(3u64) * s * (base.pow(steps + 1) - 1u32);
    num / (2 * q)
}
