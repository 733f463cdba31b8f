//! Multi-sample distinguishers, the hybrid reduction to a single sample, and
//! lunchtime (preprocessing) distinguishers.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::distinguisher::{
    AccessLevel, Advantage, Coins, Distinguisher, OracleHandle, Randomness, Rule, Subject, View,
};
use crate::domain::{Individual, Nature};
use crate::error::{OiError, Result};
use crate::predictor::Evaluate;
use crate::{rng, stats};

/// Largest `|support|^m · 2^m` enumerated by exact multi-sample computations.
pub const MAX_EXACT_TUPLES: u64 = 1 << 24;

/// Contexts pre-drawn by the hybrid reduction unless told otherwise.
pub const DEFAULT_HYBRID_POOL: u32 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub individual: Individual,
    pub outcome: bool,
    pub prediction: Option<f64>,
}

pub trait MultiRule: Send + Sync {
    fn decide(&self, samples: &[Sample], oracle: Option<&OracleHandle<'_>>) -> Result<bool>;

    fn reads_predictions(&self) -> bool {
        false
    }
}

#[derive(Clone)]
pub struct MultiSampleDistinguisher {
    id: String,
    arity: usize,
    level: AccessLevel,
    cost: u64,
    rule: Arc<dyn MultiRule>,
}

impl fmt::Debug for MultiSampleDistinguisher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiSampleDistinguisher")
            .field("id", &self.id)
            .field("arity", &self.arity)
            .field("level", &self.level)
            .finish()
    }
}

impl MultiSampleDistinguisher {
    pub fn new(
        id: impl Into<String>,
        arity: usize,
        level: AccessLevel,
        cost: u64,
        rule: Arc<dyn MultiRule>,
    ) -> Result<Self> {
        let id = id.into();
        if arity == 0 {
            return Err(OiError::config(format!("`{id}` has arity 0")));
        }
        if level == AccessLevel::CodeAccess {
            return Err(OiError::Unsupported(
                "multi-sample distinguishers with code access".into(),
            ));
        }
        if rule.reads_predictions() && level == AccessLevel::NoAccess {
            return Err(OiError::config(format!("`{id}` reads predictions without access")));
        }
        if cost == 0 {
            return Err(OiError::config(format!("`{id}` needs a positive cost")));
        }
        Ok(MultiSampleDistinguisher {
            id,
            arity,
            level,
            cost,
            rule,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn level(&self) -> AccessLevel {
        self.level
    }

    fn run(&self, samples: &[Sample], subject: &Subject<'_>) -> Result<bool> {
        match self.level {
            AccessLevel::OracleAccess { max_queries } => {
                let handle = OracleHandle::new(subject.model, max_queries, subject.version);
                self.rule.decide(samples, Some(&handle))
            }
            _ => self.rule.decide(samples, None),
        }
    }

    fn shows_predictions(&self) -> bool {
        self.level != AccessLevel::NoAccess
    }
}

/// Accept iff more than half of the outcomes are 1.
pub struct MajorityOnes;

impl MultiRule for MajorityOnes {
    fn decide(&self, samples: &[Sample], _: Option<&OracleHandle<'_>>) -> Result<bool> {
        let ones = samples.iter().filter(|s| s.outcome).count();
        Ok(2 * ones > samples.len())
    }
}

pub struct ConstantMulti(pub bool);

impl MultiRule for ConstantMulti {
    fn decide(&self, _: &[Sample], _: Option<&OracleHandle<'_>>) -> Result<bool> {
        Ok(self.0)
    }
}

/// Accept iff `|Σ_j (o_j − v_j)| ≤ tolerance`: outcomes look like Bernoulli draws of the predictions.
pub struct ConsistencyCounter {
    pub tolerance: f64,
}

impl MultiRule for ConsistencyCounter {
    fn decide(&self, samples: &[Sample], _: Option<&OracleHandle<'_>>) -> Result<bool> {
        let mut gap = 0.0;
        for s in samples {
            let v = s
                .prediction
                .ok_or_else(|| OiError::config("consistency counter needs predictions"))?;
            gap += crate::distinguisher::bit(s.outcome) - v;
        }
        Ok(gap.abs() <= self.tolerance)
    }

    fn reads_predictions(&self) -> bool {
        true
    }
}

/// Accept iff the first sample's prediction exceeds `threshold`.
pub struct PredictionAbove {
    pub threshold: f64,
}

impl MultiRule for PredictionAbove {
    fn decide(&self, samples: &[Sample], _: Option<&OracleHandle<'_>>) -> Result<bool> {
        let v = samples[0]
            .prediction
            .ok_or_else(|| OiError::config("prediction rule needs predictions"))?;
        Ok(v > self.threshold)
    }

    fn reads_predictions(&self) -> bool {
        true
    }
}

/// A fixed pseudo-random function of the individuals and outcomes, keyed by `key`.
pub struct KeyedRule {
    pub key: u64,
}

impl MultiRule for KeyedRule {
    fn decide(&self, samples: &[Sample], _: Option<&OracleHandle<'_>>) -> Result<bool> {
        let mut h = self.key;
        for s in samples {
            h = rng::derive(h, (s.individual.bits() << 1) | s.outcome as u64);
        }
        Ok(h & 1 == 1)
    }
}

pub struct FnMulti<F>(pub F);

impl<F> MultiRule for FnMulti<F>
where
    F: Fn(&[Sample]) -> bool + Send + Sync,
{
    fn decide(&self, samples: &[Sample], _: Option<&OracleHandle<'_>>) -> Result<bool> {
        Ok((self.0)(samples))
    }
}

/// Where a sample's outcome and prediction slot come from.
#[derive(Clone, Copy)]
pub struct Stream<'a> {
    pub outcomes: &'a dyn Evaluate,
    pub predictions: &'a dyn Evaluate,
}

fn pow_checked(base: u64, exp: usize) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Exact acceptance of `A` on each stream, by enumerating all tuples and outcome patterns.
pub fn exact_acceptances(
    a: &MultiSampleDistinguisher,
    nature: &Nature,
    subject: &Subject<'_>,
    streams: &[Stream<'_>],
) -> Result<Vec<f64>> {
    let atoms = nature.population().atoms()?;
    let m = a.arity;
    let n = atoms.len();
    let index_count = pow_checked(n as u64, m)
        .filter(|&t| t.checked_mul(1 << m).is_some_and(|all| all <= MAX_EXACT_TUPLES))
        .ok_or_else(|| {
            OiError::config(format!(
                "exact multi-sample enumeration over {n} atoms at arity {m} is too large"
            ))
        })?;
    let parts: Vec<Result<Vec<f64>>> = (0..index_count)
        .into_par_iter()
        .map(|code| {
            let mut idx = Vec::with_capacity(m);
            let mut c = code;
            for _ in 0..m {
                idx.push((c % n as u64) as usize);
                c /= n as u64;
            }
            let mass: f64 = idx.iter().map(|&k| atoms[k].mass).product();
            let mut out = vec![0.0; streams.len()];
            for pattern in 0u32..(1 << m) {
                let mut samples = Vec::with_capacity(m);
                for (pos, &k) in idx.iter().enumerate() {
                    samples.push(Sample {
                        individual: atoms[k].individual,
                        outcome: pattern >> pos & 1 == 1,
                        prediction: None,
                    });
                }
                for (s, stream) in streams.iter().enumerate() {
                    let mut weight = mass;
                    for smp in samples.iter_mut() {
                        let p = stream.outcomes.evaluate(smp.individual)?;
                        weight *= if smp.outcome { p } else { 1.0 - p };
                        smp.prediction = if a.shows_predictions() {
                            Some(stream.predictions.evaluate(smp.individual)?)
                        } else {
                            None
                        };
                    }
                    if weight > 0.0 && a.run(&samples, subject)? {
                        out[s] += weight;
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut total = vec![0.0; streams.len()];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part?) {
            *t += v;
        }
    }
    Ok(total)
}

/// Coupled sampled acceptances: every stream reuses the same individuals and uniforms.
pub fn sampled_acceptances(
    a: &MultiSampleDistinguisher,
    nature: &Nature,
    subject: &Subject<'_>,
    streams: &[Stream<'_>],
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(OiError::config("sampled acceptance needs at least one sample"));
    }
    let m = a.arity;
    let parts: Vec<Result<Vec<bool>>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let draws: Vec<(Individual, f64)> = (0..m)
                .map(|_| (nature.population().sample(&mut rng), rng.gen::<f64>()))
                .collect();
            streams
                .iter()
                .map(|stream| {
                    let tuple = draws
                        .iter()
                        .map(|&(i, u)| {
                            Ok(Sample {
                                individual: i,
                                outcome: u < stream.outcomes.evaluate(i)?,
                                prediction: if a.shows_predictions() {
                                    Some(stream.predictions.evaluate(i)?)
                                } else {
                                    None
                                },
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    a.run(&tuple, subject)
                })
                .collect()
        })
        .collect();
    let mut counts = vec![0usize; streams.len()];
    for part in parts {
        for (c, hit) in counts.iter_mut().zip(part?) {
            *c += hit as usize;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / samples as f64).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MultiMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// `Pr[A(nature^m) = 1] − Pr[A(model^m) = 1]`.
pub fn multi_advantage(
    a: &MultiSampleDistinguisher,
    nature: &Nature,
    subject: &Subject<'_>,
    mode: MultiMode,
) -> Result<Advantage> {
    let streams = [
        Stream {
            outcomes: nature.truth(),
            predictions: subject.model,
        },
        Stream {
            outcomes: subject.model,
            predictions: subject.model,
        },
    ];
    let (acc, radius) = match mode {
        MultiMode::Exact => (exact_acceptances(a, nature, subject, &streams)?, 0.0),
        MultiMode::MonteCarlo { samples, seed } => (
            sampled_acceptances(a, nature, subject, &streams, samples, seed)?,
            stats::advantage_radius(samples),
        ),
    };
    Ok(Advantage {
        signed: acc[0] - acc[1],
        radius,
        nature_acceptance: acc[0],
        model_acceptance: acc[1],
    })
}

struct HybridContext {
    position: usize,
    others: Vec<Sample>,
}

struct HybridRule {
    inner: MultiSampleDistinguisher,
    contexts: Vec<HybridContext>,
}

impl Rule for HybridRule {
    fn decide(&self, view: &View<'_>, coins: &mut Coins<'_>) -> Result<bool> {
        let ctx = match coins {
            Coins::Atom(k) => &self.contexts[*k as usize],
            Coins::Fixed if self.contexts.len() == 1 => &self.contexts[0],
            Coins::Stream(rng) => &self.contexts[rng.gen_range(0..self.contexts.len())],
            Coins::Fixed => return Err(OiError::config("hybrid rule needs coins")),
        };
        let input = Sample {
            individual: view.individual,
            outcome: view.outcome,
            prediction: match self.inner.level {
                AccessLevel::SampleAccess => Some(view.prediction()?),
                _ => None,
            },
        };
        let mut samples = ctx.others.clone();
        samples.insert(ctx.position, input);
        self.inner.rule.decide(&samples, view.oracle())
    }

    fn randomness(&self) -> Randomness {
        if self.contexts.len() == 1 {
            Randomness::Deterministic
        } else {
            Randomness::Finite(self.contexts.len() as u32)
        }
    }

    fn min_level_rank(&self) -> u8 {
        self.inner.level.rank()
    }
}

/// Single-sample distinguisher from the hybrid argument: a uniformly random
/// position `j` gets the input; earlier positions hold model samples and later
/// positions nature samples, all drawn during preprocessing.
pub fn hybrid_reduce(
    a: &MultiSampleDistinguisher,
    nature: &Nature,
    p: &dyn Evaluate,
    seed: u64,
) -> Result<Distinguisher> {
    hybrid_reduce_with_pool(a, nature, p, seed, DEFAULT_HYBRID_POOL)
}

pub fn hybrid_reduce_with_pool(
    a: &MultiSampleDistinguisher,
    nature: &Nature,
    p: &dyn Evaluate,
    seed: u64,
    pool: u32,
) -> Result<Distinguisher> {
    let m = a.arity;
    if m == 0 {
        return Err(OiError::config("hybrid reduction of an arity-0 distinguisher"));
    }
    if pool == 0 || pool > crate::distinguisher::MAX_COIN_ATOMS {
        return Err(OiError::config("hybrid pool size must be in 1..=65536"));
    }
    let pool = if m == 1 { 1 } else { pool };
    let mut rng = rng::seeded(seed);
    let mut contexts = Vec::with_capacity(pool as usize);
    for _ in 0..pool {
        let position = rng.gen_range(0..m);
        let mut others = Vec::with_capacity(m - 1);
        for slot in 0..m {
            if slot == position {
                continue;
            }
            let i = nature.population().sample(&mut rng);
            let pred = p.evaluate(i)?;
            let prob = if slot < position {
                pred
            } else {
                nature.truth().evaluate(i)?
            };
            others.push(Sample {
                individual: i,
                outcome: rng.gen::<f64>() < prob,
                prediction: a.shows_predictions().then_some(pred),
            });
        }
        contexts.push(HybridContext { position, others });
    }
    Distinguisher::custom(
        format!("hybrid({})", a.id),
        a.level,
        a.cost,
        Arc::new(HybridRule {
            inner: a.clone(),
            contexts,
        }),
    )
}

pub type AdviceGenerator = Arc<dyn Fn(&OracleHandle<'_>) -> Result<Vec<bool>> + Send + Sync>;

pub trait AdviceRule: Send + Sync {
    fn decide(&self, view: &View<'_>, advice: &[bool]) -> Result<bool>;

    fn reads_prediction(&self) -> bool {
        false
    }
}

/// A distinguisher that first queries the predictor to compute `advice_len`
/// advice bits, then decides on sample-access views.
#[derive(Clone)]
pub struct LunchtimeDistinguisher {
    pub id: String,
    pub advice_len: usize,
    pub preprocessing_budget: u32,
    pub cost: u64,
    pub generator: AdviceGenerator,
    pub rule: Arc<dyn AdviceRule>,
}

impl LunchtimeDistinguisher {
    pub fn advice(&self, p: &dyn Evaluate) -> Result<Vec<bool>> {
        let handle = OracleHandle::new(p, self.preprocessing_budget, 0);
        let advice = (self.generator)(&handle)?;
        if advice.len() != self.advice_len {
            return Err(OiError::config(format!(
                "`{}` produced {} advice bits, declared {}",
                self.id,
                advice.len(),
                self.advice_len
            )));
        }
        Ok(advice)
    }

    /// Full lunchtime decision: preprocessing against `p`, then the online rule.
    pub fn decide(&self, view: &View<'_>, p: &dyn Evaluate) -> Result<bool> {
        let advice = self.advice(p)?;
        self.rule.decide(view, &advice)
    }
}

struct HardCoded {
    rule: Arc<dyn AdviceRule>,
    advice: Vec<bool>,
}

impl Rule for HardCoded {
    fn decide(&self, view: &View<'_>, _: &mut Coins<'_>) -> Result<bool> {
        self.rule.decide(view, &self.advice)
    }

    fn min_level_rank(&self) -> u8 {
        self.rule.reads_prediction() as u8
    }
}

fn hard_coded(l: &LunchtimeDistinguisher, advice: Vec<bool>, id: String) -> Result<Distinguisher> {
    Distinguisher::custom(
        id,
        AccessLevel::SampleAccess,
        l.cost + advice.len() as u64,
        Arc::new(HardCoded {
            rule: l.rule.clone(),
            advice,
        }),
    )
}

/// Runs the preprocessing once against `p` and hard-codes the advice.
pub fn lunchtime_collapse(l: &LunchtimeDistinguisher, p: &dyn Evaluate) -> Result<Distinguisher> {
    let advice = l.advice(p)?;
    hard_coded(l, advice, format!("collapsed({})", l.id))
}

/// Largest advice length expanded into a family.
pub const MAX_ADVICE_BITS: usize = 16;

/// Every hard-coding of the advice: `2^t` sample-access distinguishers.
pub fn advice_family(l: &LunchtimeDistinguisher) -> Result<Vec<Distinguisher>> {
    let t = l.advice_len;
    if t > MAX_ADVICE_BITS {
        return Err(OiError::config(format!(
            "advice length {t} exceeds {MAX_ADVICE_BITS}"
        )));
    }
    (0u32..1 << t)
        .map(|code| {
            let advice = (0..t).map(|k| code >> k & 1 == 1).collect();
            hard_coded(l, advice, format!("{}[{code:0width$b}]", l.id, width = t.max(1)))
        })
        .collect()
}

/// Draws `m` i.i.d. samples from the given stream with fresh coins; used by fixtures.
pub fn draw_tuple(
    nature: &Nature,
    stream: Stream<'_>,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Sample>> {
    (0..m)
        .map(|_| {
            let i = nature.population().sample(rng);
            Ok(Sample {
                individual: i,
                outcome: rng.gen::<f64>() < stream.outcomes.evaluate(i)?,
                prediction: Some(stream.predictions.evaluate(i)?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distinguisher::{acceptance, advantage, AdvantageMode};
    use crate::domain::Population;
    use crate::predictor::Predictor;

    fn nature(dim: u32, value: f64) -> Nature {
        Nature::new(
            Population::uniform(dim).unwrap(),
            Predictor::constant(dim, value, 0.0).unwrap(),
        )
        .unwrap()
    }

    fn majority(m: usize) -> MultiSampleDistinguisher {
        MultiSampleDistinguisher::new("maj", m, AccessLevel::NoAccess, 1, Arc::new(MajorityOnes))
            .unwrap()
    }

    #[test]
    fn arity_zero_is_rejected() {
        assert!(matches!(
            MultiSampleDistinguisher::new("z", 0, AccessLevel::NoAccess, 1, Arc::new(MajorityOnes)),
            Err(OiError::Config(_))
        ));
    }

    #[test]
    fn majority_of_three_hybrid() {
        let n = nature(2, 1.0);
        let p = Predictor::constant(2, 0.0, 0.0).unwrap();
        let a = majority(3);
        let multi = multi_advantage(&a, &n, &Subject::new(&p), MultiMode::Exact).unwrap();
        assert!((multi.signed - 1.0).abs() < 1e-12);
        // brute force over which position is swapped: only j = 2 changes the majority
        let by_position: Vec<f64> = (1..=3)
            .map(|j: usize| {
                let ones_nat = 1 + (3 - j);
                let ones_mdl = 3 - j;
                (2 * ones_nat > 3) as u8 as f64 - (2 * ones_mdl > 3) as u8 as f64
            })
            .collect();
        let expected = by_position.iter().sum::<f64>() / 3.0;
        assert!((expected - 1.0 / 3.0).abs() < 1e-15);
        let single = hybrid_reduce_with_pool(&a, &n, &p, 11, 3000).unwrap();
        let adv = advantage(&single, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        // the pool draws positions at random; its empirical share of j = 2 is near 1/3
        assert!((adv.signed - expected).abs() < 0.03, "{}", adv.signed);
    }

    #[test]
    fn arity_one_reduction_is_identity() {
        let n = Nature::new(
            Population::uniform(2).unwrap(),
            Predictor::from_table(2, [(0, 0.2), (1, 0.9), (2, 0.4), (3, 0.6)], 0.5).unwrap(),
        )
        .unwrap();
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        let a = MultiSampleDistinguisher::new(
            "k",
            1,
            AccessLevel::NoAccess,
            1,
            Arc::new(KeyedRule { key: 5 }),
        )
        .unwrap();
        let single = hybrid_reduce(&a, &n, &p, 3).unwrap();
        assert!(single.is_deterministic());
        for b in 0..4 {
            let i = Individual::new(b, 2).unwrap();
            for o in [false, true] {
                let s = acceptance(&single, i, o, &Subject::new(&p), None).unwrap();
                let direct = a
                    .rule
                    .decide(
                        &[Sample {
                            individual: i,
                            outcome: o,
                            prediction: None,
                        }],
                        None,
                    )
                    .unwrap();
                assert_eq!(s, direct as u8 as f64);
            }
        }
    }

    #[test]
    fn constant_multi_has_no_advantage() {
        let n = nature(2, 1.0);
        let p = Predictor::constant(2, 0.0, 0.0).unwrap();
        let a = MultiSampleDistinguisher::new(
            "c",
            3,
            AccessLevel::NoAccess,
            1,
            Arc::new(ConstantMulti(true)),
        )
        .unwrap();
        assert_eq!(
            multi_advantage(&a, &n, &Subject::new(&p), MultiMode::Exact)
                .unwrap()
                .signed,
            0.0
        );
        let single = hybrid_reduce_with_pool(&a, &n, &p, 1, 64).unwrap();
        let adv = advantage(&single, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        assert_eq!(adv.signed, 0.0);
    }

    #[test]
    fn exact_and_sampled_multi_agree() {
        let n = Nature::new(
            Population::uniform(2).unwrap(),
            Predictor::from_table(2, [(0, 0.9), (1, 0.1), (2, 0.7), (3, 0.3)], 0.5).unwrap(),
        )
        .unwrap();
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        let a = MultiSampleDistinguisher::new(
            "k",
            2,
            AccessLevel::NoAccess,
            1,
            Arc::new(KeyedRule { key: 99 }),
        )
        .unwrap();
        let exact = multi_advantage(&a, &n, &Subject::new(&p), MultiMode::Exact).unwrap();
        let mc = multi_advantage(
            &a,
            &n,
            &Subject::new(&p),
            MultiMode::MonteCarlo {
                samples: 50_000,
                seed: 4,
            },
        )
        .unwrap();
        assert!((exact.signed - mc.signed).abs() <= mc.radius);
    }

    struct CompareToAdvice;

    impl AdviceRule for CompareToAdvice {
        fn decide(&self, view: &View<'_>, advice: &[bool]) -> Result<bool> {
            Ok(advice.first().copied().unwrap_or(false) == view.outcome)
        }
    }

    struct IgnoreAdvice;

    impl AdviceRule for IgnoreAdvice {
        fn decide(&self, view: &View<'_>, _: &[bool]) -> Result<bool> {
            Ok(view.outcome && view.prediction()? > 0.3)
        }
        fn reads_prediction(&self) -> bool {
            true
        }
    }

    fn majority_bit(dim: u32) -> AdviceGenerator {
        Arc::new(move |h: &OracleHandle<'_>| {
            let mut ones = 0;
            for b in 0..16u64 {
                if h.query(Individual::new(b % (1 << dim), dim)?)? >= 0.5 {
                    ones += 1;
                }
            }
            Ok(vec![2 * ones > 16])
        })
    }

    #[test]
    fn collapse_reproduces_lunchtime_decisions() {
        let dim = 4;
        let p = Predictor::from_table(dim, (0..16u64).map(|b| (b, (b as f64) / 15.0)), 0.5)
            .unwrap();
        let l = LunchtimeDistinguisher {
            id: "lt".into(),
            advice_len: 1,
            preprocessing_budget: 16,
            cost: 4,
            generator: majority_bit(dim),
            rule: Arc::new(CompareToAdvice),
        };
        let collapsed = lunchtime_collapse(&l, &p).unwrap();
        assert_eq!(collapsed.level(), AccessLevel::SampleAccess);
        for b in 0..16u64 {
            let i = Individual::new(b, dim).unwrap();
            for o in [false, true] {
                let v = p.evaluate(i).unwrap();
                let view = View::with_value(i, o, v);
                let lunch = l.decide(&view, &p).unwrap();
                let col = acceptance(&collapsed, i, o, &Subject::new(&p), Some(v)).unwrap();
                assert_eq!(lunch as u8 as f64, col);
            }
        }
        let n = Nature::new(Population::uniform(dim).unwrap(), p.clone()).unwrap();
        let q = Predictor::constant(dim, 0.2, 0.0).unwrap();
        let family = advice_family(&l).unwrap();
        assert_eq!(family.len(), 2);
        let collapsed_q = lunchtime_collapse(&l, &q).unwrap();
        let a = advantage(&collapsed_q, &n, &Subject::new(&q), AdvantageMode::Exact).unwrap();
        assert!(family.iter().any(|d| {
            let b = advantage(d, &n, &Subject::new(&q), AdvantageMode::Exact).unwrap();
            b.signed == a.signed
        }));
    }

    #[test]
    fn advice_free_collapse_is_identity() {
        let dim = 2;
        let p = Predictor::constant(dim, 0.4, 0.0).unwrap();
        for rule in [Arc::new(IgnoreAdvice) as Arc<dyn AdviceRule>] {
            let l = LunchtimeDistinguisher {
                id: "none".into(),
                advice_len: 0,
                preprocessing_budget: 0,
                cost: 1,
                generator: Arc::new(|_: &OracleHandle<'_>| Ok(Vec::new())),
                rule,
            };
            let c = lunchtime_collapse(&l, &p).unwrap();
            for b in 0..4 {
                let i = Individual::new(b, dim).unwrap();
                for o in [false, true] {
                    let view = View::with_value(i, o, 0.4);
                    assert_eq!(
                        l.decide(&view, &p).unwrap() as u8 as f64,
                        acceptance(&c, i, o, &Subject::new(&p), None).unwrap()
                    );
                }
            }
            assert_eq!(advice_family(&l).unwrap().len(), 1);
        }
    }

    #[test]
    fn lunchtime_budget_is_enforced() {
        let dim = 4;
        let p = Predictor::constant(dim, 0.7, 0.0).unwrap();
        let l = LunchtimeDistinguisher {
            id: "greedy".into(),
            advice_len: 1,
            preprocessing_budget: 15,
            cost: 4,
            generator: majority_bit(dim),
            rule: Arc::new(CompareToAdvice),
        };
        assert!(matches!(
            lunchtime_collapse(&l, &p),
            Err(OiError::QueryBudgetExceeded { budget: 15 })
        ));
    }
}
