//! Finite probability spaces over bitstring individuals, natures and sampling.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{OiError, Result};
use crate::predictor::{Evaluate, Predictor};

/// Widest individual representable (bits are packed into a `u64`).
pub const MAX_DIMENSION: u32 = 64;
/// Exhaustive (explicit) populations are refused above this dimension.
pub const MAX_EXHAUSTIVE_DIMENSION: u32 = 24;
/// Tolerance on the total mass of an explicit population.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A `d`-bit individual. Bit `k` is `(bits >> k) & 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Individual {
    bits: u64,
    dim: u32,
}

impl Individual {
    pub fn new(bits: u64, dim: u32) -> Result<Self> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(OiError::domain(format!(
                "dimension {dim} outside 1..={MAX_DIMENSION}"
            )));
        }
        if dim < 64 && bits >> dim != 0 {
            return Err(OiError::domain(format!(
                "bits {bits:#x} do not fit in {dim} dimensions"
            )));
        }
        Ok(Individual { bits, dim })
    }

    /// Callers guarantee `bits < 2^dim`.
    pub(crate) fn from_parts(bits: u64, dim: u32) -> Self {
        debug_assert!(dim == 64 || bits >> dim == 0);
        Individual { bits, dim }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn bit(&self, k: u32) -> bool {
        k < self.dim && (self.bits >> k) & 1 == 1
    }

    pub fn expect_dim(&self, dim: u32) -> Result<()> {
        if self.dim != dim {
            return Err(OiError::DimensionMismatch {
                expected: dim,
                found: self.dim,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Individual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.bits, width = self.dim as usize)
    }
}

pub(crate) fn dimension_mask(dim: u32) -> u64 {
    if dim >= 64 {
        u64::MAX
    } else {
        (1u64 << dim) - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub individual: Individual,
    pub mass: f64,
}

/// Samples an individual's bits. Must be a pure function of the generator state.
pub type SampleFn = Arc<dyn Fn(&mut dyn RngCore) -> u64 + Send + Sync>;

#[derive(Clone)]
pub enum SamplerKind {
    /// Every bit an independent fair coin.
    Uniform,
    /// Bit `k` is one with probability `probs[k]`.
    Product(Vec<f64>),
    Custom(SampleFn),
}

impl fmt::Debug for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerKind::Uniform => f.write_str("Uniform"),
            SamplerKind::Product(p) => f.debug_tuple("Product").field(p).finish(),
            SamplerKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Nature's marginal distribution over individuals.
#[derive(Clone, Debug)]
pub enum Population {
    Explicit {
        dim: u32,
        atoms: Vec<Atom>,
        cumulative: Vec<f64>,
    },
    Sampler {
        dim: u32,
        kind: SamplerKind,
    },
}

impl Population {
    /// Builds an explicit mass table. Zero-mass entries are dropped; the
    /// remaining atoms are kept sorted by their bits.
    pub fn explicit(dim: u32, masses: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        if dim == 0 || dim > MAX_EXHAUSTIVE_DIMENSION {
            return Err(OiError::config(format!(
                "explicit populations need 1 <= d <= {MAX_EXHAUSTIVE_DIMENSION}, got {dim}"
            )));
        }
        let mut atoms = Vec::new();
        for (bits, mass) in masses {
            if !(mass.is_finite() && mass >= 0.0) {
                return Err(OiError::domain(format!("invalid mass {mass} for {bits}")));
            }
            if mass > 0.0 {
                atoms.push(Atom {
                    individual: Individual::new(bits, dim)?,
                    mass,
                });
            }
        }
        atoms.sort_by_key(|a| a.individual);
        if atoms
            .windows(2)
            .any(|w| w[0].individual == w[1].individual)
        {
            return Err(OiError::domain("duplicate individual in mass table"));
        }
        let total = crate::stats::exact_sum(atoms.iter().map(|a| a.mass));
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(OiError::domain(format!(
                "masses sum to {total}, expected 1 within {MASS_TOLERANCE}"
            )));
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.mass;
                acc
            })
            .collect();
        Ok(Population::Explicit {
            dim,
            atoms,
            cumulative,
        })
    }

    /// Uniform explicit distribution over all of `{0,1}^dim`.
    pub fn uniform(dim: u32) -> Result<Self> {
        if dim == 0 || dim > MAX_EXHAUSTIVE_DIMENSION {
            return Err(OiError::config(format!(
                "explicit populations need 1 <= d <= {MAX_EXHAUSTIVE_DIMENSION}, got {dim}"
            )));
        }
        let n = 1u64 << dim;
        let mass = 1.0 / n as f64;
        Population::explicit(dim, (0..n).map(|b| (b, mass)))
    }

    pub fn sampler(dim: u32, kind: SamplerKind) -> Result<Self> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(OiError::config(format!(
                "dimension {dim} outside 1..={MAX_DIMENSION}"
            )));
        }
        if let SamplerKind::Product(p) = &kind {
            if p.len() != dim as usize || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(OiError::config(
                    "product sampler needs one probability in [0,1] per bit",
                ));
            }
        }
        Ok(Population::Sampler { dim, kind })
    }

    pub fn dim(&self) -> u32 {
        match self {
            Population::Explicit { dim, .. } | Population::Sampler { dim, .. } => *dim,
        }
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self, Population::Explicit { .. })
    }

    /// The support with masses; exact operations go through here.
    pub fn atoms(&self) -> Result<&[Atom]> {
        match self {
            Population::Explicit { atoms, .. } => Ok(atoms),
            Population::Sampler { .. } => Err(OiError::config(
                "exact computation requested on a sampler-mode population",
            )),
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Individual {
        match self {
            Population::Explicit {
                atoms, cumulative, ..
            } => {
                let total = *cumulative.last().expect("explicit population is non-empty");
                let u: f64 = rng.gen::<f64>() * total;
                let idx = cumulative.partition_point(|&c| c <= u).min(atoms.len() - 1);
                atoms[idx].individual
            }
            Population::Sampler { dim, kind } => {
                let bits = match kind {
                    SamplerKind::Uniform => rng.next_u64() & dimension_mask(*dim),
                    SamplerKind::Product(p) => p.iter().enumerate().fold(0u64, |acc, (k, &q)| {
                        if rng.gen::<f64>() < q {
                            acc | (1 << k)
                        } else {
                            acc
                        }
                    }),
                    SamplerKind::Custom(f) => f(rng) & dimension_mask(*dim),
                };
                Individual::from_parts(bits, *dim)
            }
        }
    }

    /// Exact `E[f(i)]` by full enumeration of an explicit population.
    pub fn expectation(&self, mut f: impl FnMut(Individual) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        for atom in self.atoms()? {
            total += atom.mass * f(atom.individual)?;
        }
        Ok(total)
    }

    /// `Pr[i ∈ S]` for a membership predicate.
    pub fn mass_where(&self, mut member: impl FnMut(Individual) -> Result<bool>) -> Result<f64> {
        self.expectation(|i| Ok(if member(i)? { 1.0 } else { 0.0 }))
    }

    pub fn mass_of(&self, i: Individual) -> Result<f64> {
        let atoms = self.atoms()?;
        Ok(atoms
            .binary_search_by_key(&i, |a| a.individual)
            .map(|k| atoms[k].mass)
            .unwrap_or(0.0))
    }
}

/// Nature: a population together with the ground-truth predictor `p*`.
#[derive(Clone, Debug)]
pub struct Nature {
    population: Population,
    truth: Predictor,
}

impl Nature {
    pub fn new(population: Population, truth: Predictor) -> Result<Self> {
        if truth.dimension() != population.dim() {
            return Err(OiError::DimensionMismatch {
                expected: population.dim(),
                found: truth.dimension(),
            });
        }
        if let Population::Explicit { atoms, .. } = &population {
            for atom in atoms {
                let v = truth.evaluate(atom.individual)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(OiError::domain(format!(
                        "truth {v} outside [0,1] at {:?}",
                        atom.individual
                    )));
                }
            }
        }
        Ok(Nature { population, truth })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn truth(&self) -> &Predictor {
        &self.truth
    }

    pub fn dim(&self) -> u32 {
        self.population.dim()
    }
}

/// Where an outcome is drawn from.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    Nature,
    Model(&'a dyn Evaluate),
}

/// Draws `(i, o)` with `i ~ D_X` and `o ~ Ber(p_i)` for the chosen source's `p`.
pub fn sample_pair(
    nature: &Nature,
    source: Source<'_>,
    rng: &mut dyn RngCore,
) -> Result<(Individual, bool)> {
    let i = nature.population.sample(rng);
    let p = match source {
        Source::Nature => nature.truth.evaluate(i)?,
        Source::Model(model) => model.evaluate(i)?,
    };
    Ok((i, rng.gen::<f64>() < p))
}

/// Budget for sampled estimates.
#[derive(Clone, Copy, Debug)]
pub struct SampleBudget {
    pub samples: usize,
    pub seed: u64,
}

/// An estimate with a confidence radius (zero for exact computations).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub radius: f64,
}

/// `‖p − p'‖₁ = E_{i∼D_X} |p_i − p'_i|`.
pub fn l1_distance(
    p: &dyn Evaluate,
    q: &dyn Evaluate,
    population: &Population,
    budget: Option<SampleBudget>,
) -> Result<Estimate> {
    match population {
        Population::Explicit { .. } => {
            let value =
                population.expectation(|i| Ok((p.evaluate(i)? - q.evaluate(i)?).abs()))?;
            Ok(Estimate { value, radius: 0.0 })
        }
        Population::Sampler { .. } => {
            let budget = budget.ok_or_else(|| {
                OiError::config("sampler-mode l1 distance needs a sample budget")
            })?;
            if budget.samples == 0 {
                return Err(OiError::config("sample budget must be positive"));
            }
            let mut rng = crate::rng::seeded(budget.seed);
            let mut total = 0.0;
            for _ in 0..budget.samples {
                let i = population.sample(&mut rng);
                total += (p.evaluate(i)? - q.evaluate(i)?).abs();
            }
            Ok(Estimate {
                value: total / budget.samples as f64,
                radius: crate::stats::hoeffding_radius(budget.samples, 1.0),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(dim: u32, v: f64) -> Predictor {
        Predictor::constant(dim, v, 0.0).unwrap()
    }

    #[test]
    fn explicit_masses_must_normalize() {
        assert!(Population::explicit(2, [(0, 0.5), (1, 0.4)]).is_err());
        assert!(Population::explicit(2, [(0, 0.5), (1, 0.5)]).is_ok());
        assert!(Population::explicit(2, [(0, 0.5), (0, 0.5)]).is_err());
        assert!(Population::explicit(2, [(7, 1.0)]).is_err());
    }

    #[test]
    fn exhaustive_mode_is_capped() {
        assert!(Population::uniform(25).is_err());
        let pop = Population::sampler(40, SamplerKind::Uniform).unwrap();
        assert!(pop.atoms().is_err());
    }

    #[test]
    fn deterministic_truth_gives_deterministic_outcomes() {
        let pop = Population::uniform(3).unwrap();
        let ones = Nature::new(pop.clone(), constant(3, 1.0)).unwrap();
        let zeros = Nature::new(pop, constant(3, 0.0)).unwrap();
        let mut rng = crate::rng::seeded(1);
        for _ in 0..200 {
            assert!(sample_pair(&ones, Source::Nature, &mut rng).unwrap().1);
            assert!(!sample_pair(&zeros, Source::Nature, &mut rng).unwrap().1);
        }
    }

    #[test]
    fn fair_truth_outcome_mean_concentrates() {
        let nature = Nature::new(Population::uniform(4).unwrap(), constant(4, 0.5)).unwrap();
        let mut rng = crate::rng::seeded(20_240_601);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_pair(&nature, Source::Nature, &mut rng).unwrap().1)
            .count();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn model_source_uses_the_model() {
        let nature = Nature::new(Population::uniform(2).unwrap(), constant(2, 1.0)).unwrap();
        let model = constant(2, 0.0);
        let mut rng = crate::rng::seeded(3);
        for _ in 0..100 {
            assert!(!sample_pair(&nature, Source::Model(&model), &mut rng).unwrap().1);
        }
    }

    #[test]
    fn l1_distance_examples() {
        let pop = Population::uniform(2).unwrap();
        let zero = constant(2, 0.0);
        let one = constant(2, 1.0);
        assert_eq!(l1_distance(&zero, &zero, &pop, None).unwrap().value, 0.0);
        assert_eq!(l1_distance(&zero, &one, &pop, None).unwrap().value, 1.0);

        let p = Predictor::from_table(2, [(0, 0.5), (1, 0.5), (2, 0.5), (3, 0.5)], 0.5).unwrap();
        let q = Predictor::from_table(2, [(0, 0.5), (1, 0.7), (2, 0.1), (3, 0.3)], 0.5).unwrap();
        let d = l1_distance(&p, &q, &pop, None).unwrap();
        // brute force: (0 + .2 + .4 + .2) / 4
        let brute: f64 = [0.0f64, 0.2, 0.4, 0.2].iter().sum::<f64>() / 4.0;
        assert!((d.value - brute).abs() < 1e-12);
        assert!((d.value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sampled_l1_needs_budget() {
        let pop = Population::sampler(30, SamplerKind::Uniform).unwrap();
        let zero = constant(30, 0.0);
        let one = constant(30, 1.0);
        assert!(matches!(
            l1_distance(&zero, &one, &pop, None),
            Err(OiError::Config(_))
        ));
        let est = l1_distance(
            &zero,
            &one,
            &pop,
            Some(SampleBudget {
                samples: 100,
                seed: 1,
            }),
        )
        .unwrap();
        assert_eq!(est.value, 1.0);
        assert!(est.radius > 0.0);
    }

    #[test]
    fn explicit_expectation_matches_weighted_sum() {
        let pop = Population::explicit(2, [(0, 0.1), (1, 0.2), (2, 0.3), (3, 0.4)]).unwrap();
        let e = pop.expectation(|i| Ok(i.bits() as f64)).unwrap();
        assert!((e - (0.2 + 0.6 + 1.2)).abs() < 1e-12);
        assert!((pop.mass_of(Individual::new(2, 2).unwrap()).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn explicit_sampling_follows_masses() {
        let pop = Population::explicit(1, [(0, 0.25), (1, 0.75)]).unwrap();
        let mut rng = crate::rng::seeded(9);
        let n = 40_000;
        let ones = (0..n).filter(|_| pop.sample(&mut rng).bits() == 1).count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.015);
    }
}
