//! Collections of functions with downward and random self-reductions.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::Serialize;

use super::graph::{clique_count, clique_downward, Graph};
use crate::error::{OiError, Result};
use crate::rng;

/// Answers queries to a function on one level.
pub type Oracle<'a> = dyn FnMut(u64) -> Result<u64> + 'a;

/// Enumerating a hard distribution is refused above this many input bits.
pub const MAX_SUPPORT_BITS: u32 = 22;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Costs {
    /// Oracle calls made by one downward reduction.
    pub downward_queries: u32,
    /// Oracle calls made by one random self-reduction.
    pub self_reduction_queries: u32,
}

/// Levels run `1..=levels()`; level 0 is the all-zero function.
pub trait ScalableEnsemble: Send + Sync {
    fn name(&self) -> String;

    fn levels(&self) -> usize;

    fn input_bits(&self) -> u32;

    fn output_bits(&self) -> u32;

    fn eval(&self, level: usize, x: u64) -> Result<u64>;

    /// Computes level `level` at `x` from an oracle for level `level − 1`.
    fn downward(&self, level: usize, x: u64, oracle: &mut Oracle<'_>) -> Result<u64>;

    /// Computes level `level` at `x` from an oracle that is right on most inputs.
    fn random_self_reduction(
        &self,
        level: usize,
        x: u64,
        oracle: &mut Oracle<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<u64>;

    fn sample_hard(&self, level: usize, rng: &mut dyn RngCore) -> u64;

    /// The hard distribution of a level as `(input, mass)` pairs.
    fn hard_support(&self, level: usize) -> Result<Vec<(u64, f64)>>;

    /// Oracle error rate on the hard distribution that the random self-reduction tolerates.
    fn error_rate(&self) -> f64;

    fn costs(&self) -> Costs;
}

pub(crate) fn check_level(e: &dyn ScalableEnsemble, level: usize) -> Result<()> {
    if level == 0 || level > e.levels() {
        return Err(OiError::domain(format!(
            "level {level} outside 1..={} of {}",
            e.levels(),
            e.name()
        )));
    }
    Ok(())
}

fn uniform_support(bits: u32) -> Result<Vec<(u64, f64)>> {
    if bits > MAX_SUPPORT_BITS {
        return Err(OiError::config(format!(
            "{bits}-bit inputs are too many to enumerate"
        )));
    }
    let mass = 1.0 / (1u64 << bits) as f64;
    Ok((0..1u64 << bits).map(|x| (x, mass)).collect())
}

fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// `⟨a, b⟩` over GF(2).
pub fn inner_product(a: u64, b: u64) -> u64 {
    ((a & b).count_ones() & 1) as u64
}

/// Majority of `t` answers, stopping once the outcome is settled.
pub fn majority(t: usize, mut run: impl FnMut() -> Result<u64>) -> Result<u64> {
    let mut counts: Vec<(u64, usize)> = Vec::new();
    for _ in 0..t {
        let v = run()?;
        let c = match counts.iter_mut().find(|(w, _)| *w == v) {
            Some(entry) => {
                entry.1 += 1;
                entry.1
            }
            None => {
                counts.push((v, 1));
                1
            }
        };
        if 2 * c > t {
            return Ok(v);
        }
    }
    Ok(counts
        .iter()
        .max_by_key(|&&(w, k)| (k, std::cmp::Reverse(w)))
        .map(|&(w, _)| w)
        .unwrap_or(0))
}

/// `f_i(x) = ⟨a_i, x⟩` with a hidden `a_1` and published invertible maps `a_i = M_i·a_{i−1}`.
#[derive(Clone, Debug)]
pub struct LinearEnsemble {
    n: u32,
    keys: Vec<u64>,
    /// Rows of `M_i` for `i ≥ 2`; index 0 is unused.
    maps: Vec<Vec<u64>>,
}

/// Pairs per linear random self-reduction.
pub const LINEAR_PAIRS: u32 = 9;

/// Error rate the nine-pair majority tolerates with success at least 2/3.
pub const LINEAR_ERROR_RATE: f64 = 0.2;

impl LinearEnsemble {
    pub fn new(n: u32, m: usize, seed: u64) -> Result<Self> {
        if n == 0 || n > 32 {
            return Err(OiError::config(format!("input length must be in 1..=32, got {n}")));
        }
        if m == 0 {
            return Err(OiError::config("at least one level is required"));
        }
        let mut rng = rng::seeded(seed);
        let mask = low_mask(n);
        let mut key = 0;
        while key == 0 {
            key = rng.gen::<u64>() & mask;
        }
        let mut keys = vec![key];
        let mut maps = vec![Vec::new()];
        for _ in 1..m {
            let rows = loop {
                let rows: Vec<u64> = (0..n).map(|_| rng.gen::<u64>() & mask).collect();
                if full_rank(&rows, n) {
                    break rows;
                }
            };
            let prev = *keys.last().expect("non-empty");
            keys.push(apply(&rows, prev));
            maps.push(rows);
        }
        Ok(LinearEnsemble { n, keys, maps })
    }

    pub fn key(&self, level: usize) -> u64 {
        self.keys[level - 1]
    }

    /// `M_i^T·x`, so that `⟨M_i·a, x⟩ = ⟨a, M_i^T·x⟩`.
    fn pull_back(&self, level: usize, x: u64) -> u64 {
        let rows = &self.maps[level - 1];
        let mut out = 0;
        for (j, row) in rows.iter().enumerate() {
            if x >> j & 1 == 1 {
                out ^= row;
            }
        }
        out
    }
}

fn apply(rows: &[u64], a: u64) -> u64 {
    rows.iter()
        .enumerate()
        .fold(0, |acc, (j, &row)| acc | inner_product(row, a) << j)
}

fn full_rank(rows: &[u64], n: u32) -> bool {
    let mut basis: Vec<u64> = Vec::with_capacity(n as usize);
    for &row in rows {
        let mut v = row;
        for &b in &basis {
            v = v.min(v ^ b);
        }
        if v == 0 {
            return false;
        }
        basis.push(v);
        basis.sort_unstable_by(|a, b| b.cmp(a));
    }
    true
}

impl ScalableEnsemble for LinearEnsemble {
    fn name(&self) -> String {
        "linear".into()
    }

    fn levels(&self) -> usize {
        self.keys.len()
    }

    fn input_bits(&self) -> u32 {
        self.n
    }

    fn output_bits(&self) -> u32 {
        1
    }

    fn eval(&self, level: usize, x: u64) -> Result<u64> {
        if level == 0 {
            return Ok(0);
        }
        check_level(self, level)?;
        Ok(inner_product(self.key(level), x))
    }

    fn downward(&self, level: usize, x: u64, oracle: &mut Oracle<'_>) -> Result<u64> {
        check_level(self, level)?;
        if level == 1 {
            return Ok(inner_product(self.key(1), x));
        }
        Ok(oracle(self.pull_back(level, x))? & 1)
    }

    fn random_self_reduction(
        &self,
        level: usize,
        x: u64,
        oracle: &mut Oracle<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<u64> {
        check_level(self, level)?;
        let mask = low_mask(self.n);
        majority(LINEAR_PAIRS as usize, || {
            let r = rng.next_u64() & mask;
            Ok((oracle(x ^ r)? ^ oracle(r)?) & 1)
        })
    }

    fn sample_hard(&self, _level: usize, rng: &mut dyn RngCore) -> u64 {
        rng.next_u64() & low_mask(self.n)
    }

    fn hard_support(&self, level: usize) -> Result<Vec<(u64, f64)>> {
        check_level(self, level)?;
        uniform_support(self.n)
    }

    fn error_rate(&self) -> f64 {
        LINEAR_ERROR_RATE
    }

    fn costs(&self) -> Costs {
        Costs {
            downward_queries: 1,
            self_reduction_queries: 2 * LINEAR_PAIRS,
        }
    }
}

/// Level `i` counts cliques of size `i + 2` in graphs on `n` vertices, encoded as edge bitmasks.
#[derive(Clone, Debug)]
pub struct CliqueEnsemble {
    n: usize,
    m: usize,
}

impl CliqueEnsemble {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if Graph::slots(n) > 64 {
            return Err(OiError::config(format!("{n} vertices do not fit a 64-bit code")));
        }
        if m == 0 || m + 2 > n.max(3) {
            return Err(OiError::config(format!("{m} levels need cliques larger than {n}")));
        }
        Ok(CliqueEnsemble { n, m })
    }

    pub fn clique_size(level: usize) -> usize {
        level + 2
    }
}

impl ScalableEnsemble for CliqueEnsemble {
    fn name(&self) -> String {
        "clique".into()
    }

    fn levels(&self) -> usize {
        self.m
    }

    fn input_bits(&self) -> u32 {
        Graph::slots(self.n) as u32
    }

    fn output_bits(&self) -> u32 {
        let most = (1..=self.m)
            .map(|l| binomial(self.n as u64, Self::clique_size(l) as u64))
            .max()
            .unwrap_or(0);
        64 - most.leading_zeros()
    }

    fn eval(&self, level: usize, x: u64) -> Result<u64> {
        if level == 0 {
            return Ok(0);
        }
        check_level(self, level)?;
        clique_count(&Graph::decode(self.n, x)?, Self::clique_size(level))
    }

    fn downward(&self, level: usize, x: u64, oracle: &mut Oracle<'_>) -> Result<u64> {
        check_level(self, level)?;
        let g = Graph::decode(self.n, x)?;
        if level == 1 {
            return clique_count(&g, 3);
        }
        clique_downward(&g, Self::clique_size(level), &mut |h| oracle(h.encode()?))
    }

    fn random_self_reduction(
        &self,
        _level: usize,
        _x: u64,
        _oracle: &mut Oracle<'_>,
        _rng: &mut dyn RngCore,
    ) -> Result<u64> {
        Err(OiError::Unsupported(
            "random self-reduction for clique counting".into(),
        ))
    }

    fn sample_hard(&self, _level: usize, rng: &mut dyn RngCore) -> u64 {
        rng.next_u64() & low_mask(self.input_bits())
    }

    fn hard_support(&self, level: usize) -> Result<Vec<(u64, f64)>> {
        check_level(self, level)?;
        uniform_support(self.input_bits())
    }

    fn error_rate(&self) -> f64 {
        0.0
    }

    fn costs(&self) -> Costs {
        Costs {
            downward_queries: self.n as u32,
            self_reduction_queries: 0,
        }
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, j| acc * (n - j) / (j + 1))
}

/// `g_i(x, r) = ⟨f_i(x), r⟩` over GF(2), with `r` in the bits above `x`.
pub struct Booleanized {
    inner: Arc<dyn ScalableEnsemble>,
    repetitions: usize,
}

/// Agreement slack below 3/4 in the booleanized error rate.
pub const GL_SLACK: f64 = 0.01;

/// Majority repetitions per reconstructed bit: `⌈8·ln(100·q_R·y)⌉`, made odd.
pub fn gl_repetitions(self_reduction_queries: u32, output_bits: u32) -> usize {
    let reps = (8.0 * (100.0 * self_reduction_queries.max(1) as f64 * output_bits as f64).ln())
        .ceil() as usize;
    reps | 1
}

impl Booleanized {
    pub fn new(inner: Arc<dyn ScalableEnsemble>) -> Result<Self> {
        if inner.input_bits() + inner.output_bits() > 64 {
            return Err(OiError::config("booleanized inputs exceed 64 bits"));
        }
        let repetitions = gl_repetitions(inner.costs().self_reduction_queries, inner.output_bits());
        Ok(Booleanized { inner, repetitions })
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn split(&self, z: u64) -> (u64, u64) {
        let nx = self.inner.input_bits();
        (z & low_mask(nx), z >> nx)
    }

    pub fn join(&self, x: u64, r: u64) -> u64 {
        x | r << self.inner.input_bits()
    }

    /// Reads `f(x)` bit by bit through `g(x, e_j)`.
    fn read_exact(&self, oracle: &mut Oracle<'_>, x: u64) -> Result<u64> {
        let mut out = 0;
        for j in 0..self.inner.output_bits() {
            out |= (oracle(self.join(x, 1 << j))? & 1) << j;
        }
        Ok(out)
    }
}

/// Bit `j` of `f(x)` as the majority of `g(x, r) ⊕ g(x, r ⊕ e_j)` over `reps` random `r`.
pub fn reconstruct_bit(
    oracle: &mut Oracle<'_>,
    x: u64,
    j: u32,
    input_bits: u32,
    output_bits: u32,
    reps: usize,
    rng: &mut dyn RngCore,
) -> Result<u64> {
    let mask = low_mask(output_bits);
    majority(reps, || {
        let r = rng.next_u64() & mask;
        let a = oracle(x | r << input_bits)?;
        let b = oracle(x | (r ^ 1 << j) << input_bits)?;
        Ok((a ^ b) & 1)
    })
}

impl ScalableEnsemble for Booleanized {
    fn name(&self) -> String {
        format!("gl({})", self.inner.name())
    }

    fn levels(&self) -> usize {
        self.inner.levels()
    }

    fn input_bits(&self) -> u32 {
        self.inner.input_bits() + self.inner.output_bits()
    }

    fn output_bits(&self) -> u32 {
        1
    }

    fn eval(&self, level: usize, z: u64) -> Result<u64> {
        let (x, r) = self.split(z);
        Ok(inner_product(self.inner.eval(level, x)?, r))
    }

    fn downward(&self, level: usize, z: u64, oracle: &mut Oracle<'_>) -> Result<u64> {
        let (x, r) = self.split(z);
        let f = self
            .inner
            .downward(level, x, &mut |xp| self.read_exact(oracle, xp))?;
        Ok(inner_product(f, r))
    }

    fn random_self_reduction(
        &self,
        level: usize,
        z: u64,
        oracle: &mut Oracle<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<u64> {
        let (x, r) = self.split(z);
        let (nx, y) = (self.inner.input_bits(), self.inner.output_bits());
        let mut local = rng::seeded(rng.next_u64());
        let f = self.inner.random_self_reduction(
            level,
            x,
            &mut |xp| {
                let mut out = 0;
                for j in 0..y {
                    out |= reconstruct_bit(oracle, xp, j, nx, y, self.repetitions, &mut local)? << j;
                }
                Ok(out)
            },
            rng,
        )?;
        Ok(inner_product(f, r))
    }

    fn sample_hard(&self, level: usize, rng: &mut dyn RngCore) -> u64 {
        let x = self.inner.sample_hard(level, rng);
        self.join(x, rng.next_u64() & low_mask(self.inner.output_bits()))
    }

    fn hard_support(&self, level: usize) -> Result<Vec<(u64, f64)>> {
        if self.input_bits() > MAX_SUPPORT_BITS {
            return Err(OiError::config(format!(
                "{}-bit inputs are too many to enumerate",
                self.input_bits()
            )));
        }
        let y = self.inner.output_bits();
        let share = 1.0 / (1u64 << y) as f64;
        let mut out = Vec::new();
        for (x, mass) in self.inner.hard_support(level)? {
            for r in 0..1u64 << y {
                out.push((self.join(x, r), mass * share));
            }
        }
        out.sort_by_key(|e| e.0);
        Ok(out)
    }

    fn error_rate(&self) -> f64 {
        (0.25 - GL_SLACK) * self.inner.error_rate()
    }

    fn costs(&self) -> Costs {
        let c = self.inner.costs();
        let y = self.inner.output_bits();
        Costs {
            downward_queries: c.downward_queries * y,
            self_reduction_queries: c.self_reduction_queries * y * 2 * self.repetitions as u32,
        }
    }
}
