//! The hard nature over `(level, x)` pairs, its level distinguishers, and the
//! separation demo.

use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::{majority, LinearEnsemble, ScalableEnsemble};
use crate::distinguisher::{
    advantage, AccessLevel, Advantage, AdvantageMode, Coins, Distinguisher, OracleHandle,
    Randomness, Rule, Subject, View,
};
use crate::distinguisher::Access;
use crate::domain::{Individual, Nature, Population};
use crate::error::{OiError, Result};
use crate::predictor::{Evaluate, Predictor};
use crate::rng;

/// Nature acceptance the level distinguishers reach with a correct oracle.
pub const NATURE_ACCEPTANCE: f64 = 0.99;
/// Rounded accuracy at level 1 implied by passing `A_1`.
pub const BASIS_ACCURACY: f64 = 0.98;
/// Rounded accuracy carried from level `i − 1` to level `i`.
pub const STEP_ACCURACY: f64 = 0.94;

/// `⌈v⌋`, with 0.5 rounding up.
pub fn round_bit(v: f64) -> u64 {
    (v >= 0.5) as u64
}

/// Where the level and the input sit inside an individual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub input_bits: u32,
    pub level_bits: u32,
}

impl Layout {
    pub fn new(input_bits: u32, levels: usize) -> Self {
        let level_bits = usize::BITS - (levels.max(1) - 1).leading_zeros();
        Layout {
            input_bits,
            level_bits,
        }
    }

    pub fn dim(&self) -> u32 {
        self.input_bits + self.level_bits
    }

    pub fn encode(&self, level: usize, x: u64) -> Result<Individual> {
        Individual::new(x | ((level as u64 - 1) << self.input_bits), self.dim())
    }

    pub fn decode(&self, i: Individual) -> (usize, u64) {
        let bits = i.bits();
        (
            (bits >> self.input_bits) as usize + 1,
            bits & ((1u64 << self.input_bits) - 1),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OracleSource {
    Predictor,
    Zero,
}

/// `A_i`: rejects other levels; otherwise recomputes `f_i(x)` through the
/// downward reduction, answering its queries by a boosted random
/// self-reduction over the rounded predictor on level `i − 1`.
struct LevelRule {
    ensemble: Arc<dyn ScalableEnsemble>,
    layout: Layout,
    level: usize,
    repetitions: usize,
    source: OracleSource,
}

impl LevelRule {
    fn recompute(&self, x: u64, view: &View<'_>, rng: &mut dyn RngCore) -> Result<u64> {
        let e = &self.ensemble;
        if self.level == 1 {
            return e.downward(1, x, &mut |_| Ok(0));
        }
        let below = self.level - 1;
        let layout = self.layout;
        let source = self.source;
        let mut rounded = |xp: u64| -> Result<u64> {
            match source {
                OracleSource::Zero => Ok(0),
                OracleSource::Predictor => Ok(round_bit(view.query(layout.encode(below, xp)?)?)),
            }
        };
        e.downward(self.level, x, &mut |xp| {
            majority(self.repetitions, || {
                e.random_self_reduction(below, xp, &mut rounded, rng)
            })
        })
    }
}

impl Rule for LevelRule {
    fn decide(&self, view: &View<'_>, coins: &mut Coins<'_>) -> Result<bool> {
        let (j, x) = self.layout.decode(view.individual);
        if j != self.level {
            return Ok(false);
        }
        let value = match self.randomness() {
            Randomness::Sampled => self.recompute(x, view, coins.stream()?)?,
            _ => {
                let seed = rng::derive(self.level as u64, x);
                self.recompute(x, view, &mut rng::seeded(seed))?
            }
        };
        Ok(view.outcome == (value & 1 == 1))
    }

    fn randomness(&self) -> Randomness {
        if self.level == 1 || self.source == OracleSource::Zero {
            Randomness::Deterministic
        } else {
            Randomness::Sampled
        }
    }

    fn min_level_rank(&self) -> u8 {
        match self.source {
            OracleSource::Predictor if self.level > 1 => {
                AccessLevel::OracleAccess { max_queries: 0 }.rank()
            }
            _ => 0,
        }
    }
}

/// The nature built from a Boolean ensemble, with its level distinguishers.
pub struct HardNature {
    pub ensemble: Arc<dyn ScalableEnsemble>,
    pub layout: Layout,
    pub nature: Nature,
    /// `A_1..A_m` with oracle access.
    pub distinguishers: Vec<Distinguisher>,
    /// The same rules with every oracle answer replaced by 0, at sample access.
    pub stripped: Vec<Distinguisher>,
    /// `1/(100m)`.
    pub epsilon: f64,
    /// Majority runs `t = ⌈log₂(100·q_Q)⌉`.
    pub repetitions: usize,
    /// `q_Q·t·q_R` queries per invocation.
    pub query_budget: u32,
}

pub fn majority_runs(downward_queries: u32) -> usize {
    (100.0 * downward_queries.max(1) as f64).log2().ceil() as usize
}

pub fn build_hard_nature(ensemble: Arc<dyn ScalableEnsemble>) -> Result<HardNature> {
    if ensemble.output_bits() != 1 {
        return Err(OiError::config(format!(
            "{} has {}-bit outputs; booleanize it first",
            ensemble.name(),
            ensemble.output_bits()
        )));
    }
    let m = ensemble.levels();
    let layout = Layout::new(ensemble.input_bits(), m);
    let mut masses = Vec::new();
    let mut truth = Vec::new();
    for level in 1..=m {
        for (x, mass) in ensemble.hard_support(level)? {
            let i = layout.encode(level, x)?;
            masses.push((i.bits(), mass / m as f64));
            truth.push((i.bits(), ensemble.eval(level, x)? as f64));
        }
    }
    let nature = Nature::new(
        Population::explicit(layout.dim(), masses)?,
        Predictor::from_table(layout.dim(), truth, 0.0)?,
    )?;
    let costs = ensemble.costs();
    let repetitions = majority_runs(costs.downward_queries);
    let query_budget = costs.downward_queries * repetitions as u32 * costs.self_reduction_queries;
    let cost = 1 + query_budget as u64;
    let mut distinguishers = Vec::with_capacity(m);
    let mut stripped = Vec::with_capacity(m);
    for level in 1..=m {
        let rule = |source| LevelRule {
            ensemble: ensemble.clone(),
            layout,
            level,
            repetitions,
            source,
        };
        distinguishers.push(Distinguisher::custom(
            format!("A{level}"),
            AccessLevel::OracleAccess {
                max_queries: query_budget,
            },
            cost,
            Arc::new(rule(OracleSource::Predictor)),
        )?);
        stripped.push(Distinguisher::custom(
            format!("A{level}/stripped"),
            AccessLevel::SampleAccess,
            cost,
            Arc::new(rule(OracleSource::Zero)),
        )?);
    }
    Ok(HardNature {
        ensemble,
        layout,
        nature,
        distinguishers,
        stripped,
        epsilon: 1.0 / (100.0 * m as f64),
        repetitions,
        query_budget,
    })
}

impl HardNature {
    /// `Pr_{x∼D_i}[⌈p̃(i, x)⌋ = f_i(x)]` for every level.
    pub fn accuracies(&self, p: &dyn Evaluate) -> Result<Vec<f64>> {
        (1..=self.ensemble.levels())
            .map(|level| {
                let mut hit = 0.0;
                for (x, mass) in self.ensemble.hard_support(level)? {
                    let v = p.evaluate(self.layout.encode(level, x)?)?;
                    if round_bit(v) == self.ensemble.eval(level, x)? {
                        hit += mass;
                    }
                }
                Ok(hit)
            })
            .collect()
    }

    /// A predictor that agrees with nature except on the listed levels, where it is inverted.
    pub fn inverted_on(&self, levels: &[usize]) -> Result<Predictor> {
        let atoms = self.nature.population().atoms()?;
        let values = atoms
            .iter()
            .map(|a| {
                let (level, _) = self.layout.decode(a.individual);
                let t = self.nature.truth().evaluate(a.individual)?;
                Ok((a.individual.bits(), if levels.contains(&level) { 1.0 - t } else { t }))
            })
            .collect::<Result<Vec<_>>>()?;
        Predictor::from_table(self.layout.dim(), values, 0.5)
    }

    /// Largest number of oracle queries `A_level` makes on `probes` sampled level inputs.
    pub fn probe_queries(
        &self,
        level: usize,
        p: &dyn Evaluate,
        probes: usize,
        seed: u64,
    ) -> Result<u32> {
        let d = &self.distinguishers[level - 1];
        let mut rng = rng::seeded(seed);
        let mut most = 0;
        for _ in 0..probes {
            let x = self.ensemble.sample_hard(level, &mut rng);
            let handle = OracleHandle::new(p, self.query_budget, 0);
            let view = View {
                individual: self.layout.encode(level, x)?,
                outcome: true,
                access: Access::Oracle(&handle),
            };
            d.rule().decide(&view, &mut Coins::Stream(&mut rng))?;
            most = most.max(handle.used());
        }
        Ok(most)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdvantageReport {
    pub id: String,
    pub level: usize,
    pub signed: f64,
    pub radius: f64,
    /// `Pr[A = 1 | level]` on nature samples.
    pub nature_acceptance: f64,
    pub model_acceptance: f64,
    pub passes: bool,
}

fn measure(
    hard: &HardNature,
    family: &[Distinguisher],
    p: &dyn Evaluate,
    draws: usize,
    seed: u64,
) -> Result<Vec<AdvantageReport>> {
    let m = hard.ensemble.levels() as f64;
    family
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mode = AdvantageMode::MarginalCoins {
                draws,
                seed: rng::derive(seed, k as u64),
            };
            let a: Advantage = advantage(d, &hard.nature, &Subject::new(p), mode)?;
            Ok(AdvantageReport {
                id: d.id().to_string(),
                level: k + 1,
                signed: a.signed,
                radius: a.radius,
                nature_acceptance: a.nature_acceptance * m,
                model_acceptance: a.model_acceptance * m,
                passes: a.magnitude() <= hard.epsilon,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimOutcome {
    /// The hypothesis failed; nothing is asserted.
    Vacuous,
    Holds,
    Violated,
}

impl ClaimOutcome {
    fn of(hypothesis: bool, conclusion: bool) -> Self {
        match (hypothesis, conclusion) {
            (false, _) => ClaimOutcome::Vacuous,
            (true, true) => ClaimOutcome::Holds,
            (true, false) => ClaimOutcome::Violated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimReport {
    pub candidate: String,
    pub accuracies: Vec<f64>,
    pub advantages: Vec<AdvantageReport>,
    /// Passing `A_1` gives level-1 accuracy at least 0.98.
    pub basis: ClaimOutcome,
    /// Entry `i − 2`: passing `A_i` with level `i − 1` accuracy at least 0.94 gives level `i` accuracy at least 0.94.
    pub steps: Vec<ClaimOutcome>,
}

impl ClaimReport {
    pub fn violated(&self) -> bool {
        self.basis == ClaimOutcome::Violated || self.steps.contains(&ClaimOutcome::Violated)
    }
}

/// Measures every candidate and checks both induction claims. A level counts as
/// passed only when its upper confidence bound is within `ε`.
pub fn induction_claims_check(
    hard: &HardNature,
    candidates: &[(String, &dyn Evaluate)],
    draws: usize,
    seed: u64,
) -> Result<Vec<ClaimReport>> {
    candidates
        .par_iter()
        .map(|(name, p)| {
            let accuracies = hard.accuracies(*p)?;
            let advantages = measure(hard, &hard.distinguishers, *p, draws, seed)?;
            let passed = |k: usize| advantages[k].signed.abs() + advantages[k].radius <= hard.epsilon;
            let basis = ClaimOutcome::of(passed(0), accuracies[0] >= BASIS_ACCURACY);
            let steps = (1..accuracies.len())
                .map(|k| {
                    ClaimOutcome::of(
                        passed(k) && accuracies[k - 1] >= STEP_ACCURACY,
                        accuracies[k] >= STEP_ACCURACY,
                    )
                })
                .collect();
            Ok(ClaimReport {
                candidate: name.clone(),
                accuracies,
                advantages,
                basis,
                steps,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoConfig {
    pub ensemble: String,
    pub n: u32,
    pub levels: usize,
    /// `None` selects `1/(100m)`.
    pub epsilon: Option<f64>,
    pub seed: u64,
    /// Coin draws per individual when measuring sampled-coin distinguishers.
    pub draws: usize,
    /// Level whose values the cheater inverts.
    pub inverted_level: usize,
    pub probes: usize,
}

impl DemoConfig {
    pub fn new(n: u32, levels: usize, seed: u64) -> Self {
        DemoConfig {
            ensemble: "linear".into(),
            n,
            levels,
            epsilon: None,
            seed,
            draws: 4,
            inverted_level: 2,
            probes: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateReport {
    pub name: String,
    pub accuracies: Vec<f64>,
    pub oracle_family: Vec<AdvantageReport>,
    pub stripped_family: Vec<AdvantageReport>,
    pub passes_oracle_family: bool,
    pub passes_stripped_family: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryAccount {
    pub id: String,
    pub budget: u32,
    pub most_used: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoReport {
    pub ensemble: String,
    pub n: u32,
    pub levels: usize,
    pub epsilon: f64,
    pub repetitions: usize,
    pub error_rate: f64,
    pub queries: Vec<QueryAccount>,
    pub candidates: Vec<CandidateReport>,
    /// Some candidate passes the stripped family yet fails an oracle distinguisher.
    pub separation: bool,
}

pub fn hardness_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    if cfg.ensemble != "linear" {
        return Err(OiError::Unsupported(format!(
            "the demo needs a random self-reduction; `{}` has none",
            cfg.ensemble
        )));
    }
    if cfg.inverted_level == 0 || cfg.inverted_level > cfg.levels {
        return Err(OiError::config(format!(
            "inverted level {} outside 1..={}",
            cfg.inverted_level, cfg.levels
        )));
    }
    let ensemble: Arc<dyn ScalableEnsemble> =
        Arc::new(LinearEnsemble::new(cfg.n, cfg.levels, cfg.seed)?);
    let mut hard = build_hard_nature(ensemble)?;
    if let Some(eps) = cfg.epsilon {
        if !(eps > 0.0) {
            return Err(OiError::config(format!("epsilon must be positive, got {eps}")));
        }
        hard.epsilon = eps;
    }
    let cheater = hard.inverted_on(&[cfg.inverted_level])?;
    let half = Predictor::constant(hard.layout.dim(), 0.5, 0.0)?;
    let truth = hard.nature.truth().clone();
    let candidates: [(&str, &dyn Evaluate); 3] =
        [("truth", &truth), ("cheater", &cheater), ("constant_half", &half)];
    let mut reports = Vec::with_capacity(candidates.len());
    for (k, (name, p)) in candidates.iter().enumerate() {
        let seed = rng::derive(cfg.seed, 100 + k as u64);
        let oracle_family = measure(&hard, &hard.distinguishers, *p, cfg.draws, seed)?;
        let stripped_family = measure(&hard, &hard.stripped, *p, cfg.draws, seed)?;
        reports.push(CandidateReport {
            name: name.to_string(),
            accuracies: hard.accuracies(*p)?,
            passes_oracle_family: oracle_family.iter().all(|a| a.passes),
            passes_stripped_family: stripped_family.iter().all(|a| a.passes),
            oracle_family,
            stripped_family,
        });
    }
    let queries = (1..=cfg.levels)
        .map(|level| {
            Ok(QueryAccount {
                id: hard.distinguishers[level - 1].id().to_string(),
                budget: hard.query_budget,
                most_used: hard.probe_queries(
                    level,
                    &truth,
                    cfg.probes,
                    rng::derive(cfg.seed, level as u64),
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DemoReport {
        ensemble: hard.ensemble.name(),
        n: cfg.n,
        levels: cfg.levels,
        epsilon: hard.epsilon,
        repetitions: hard.repetitions,
        error_rate: hard.ensemble.error_rate(),
        queries,
        separation: reports
            .iter()
            .any(|r| r.passes_stripped_family && !r.passes_oracle_family),
        candidates: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{construct_oi, ConstructConfig};

    fn small(n: u32, m: usize) -> HardNature {
        build_hard_nature(Arc::new(LinearEnsemble::new(n, m, 11).unwrap())).unwrap()
    }

    #[test]
    fn layout_round_trip() {
        let l = Layout::new(16, 3);
        assert_eq!((l.level_bits, l.dim()), (2, 18));
        let i = l.encode(3, 0xbeef).unwrap();
        assert_eq!(l.decode(i), (3, 0xbeef));
        assert_eq!(Layout::new(4, 1).level_bits, 0);
        assert_eq!(Layout::new(4, 4).level_bits, 2);
        assert_eq!(Layout::new(4, 5).level_bits, 3);
    }

    #[test]
    fn parameters() {
        let h = small(6, 3);
        assert_eq!(h.repetitions, 7);
        assert_eq!(h.query_budget, 7 * 18);
        assert!((h.epsilon - 1.0 / 300.0).abs() < 1e-15);
        assert_eq!(round_bit(0.5), 1);
        assert_eq!(round_bit(0.4999), 0);
    }

    #[test]
    fn truth_is_accepted_on_every_level() {
        let h = small(8, 3);
        let truth = h.nature.truth().clone();
        let reports = measure(&h, &h.distinguishers, &truth, 2, 1).unwrap();
        for r in &reports {
            assert_eq!((r.signed, r.radius), (0.0, 0.0));
            assert!(r.nature_acceptance >= NATURE_ACCEPTANCE - 1e-12);
        }
        assert_eq!(h.accuracies(&truth).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn constant_half_fails_the_first_level() {
        let h = small(8, 3);
        let half = Predictor::constant(h.layout.dim(), 0.5, 0.0).unwrap();
        let a = advantage(
            &h.distinguishers[0],
            &h.nature,
            &Subject::new(&half),
            AdvantageMode::Exact,
        )
        .unwrap();
        assert!((a.signed - 0.5 / 3.0).abs() < 1e-12);
        assert!(a.signed > h.epsilon);
    }

    #[test]
    fn cheater_is_caught_only_with_oracle_access() {
        let h = small(8, 3);
        let cheater = h.inverted_on(&[2]).unwrap();
        let oracle = measure(&h, &h.distinguishers, &cheater, 2, 3).unwrap();
        assert!(oracle[1].signed - oracle[1].radius > 10.0 * h.epsilon);
        assert_eq!(oracle[0].signed, 0.0);
        let stripped = measure(&h, &h.stripped, &cheater, 2, 3).unwrap();
        assert!(stripped.iter().all(|r| r.passes));
    }

    #[test]
    fn queries_stay_within_budget() {
        let h = small(8, 3);
        let truth = h.nature.truth().clone();
        for level in 1..=3 {
            let used = h.probe_queries(level, &truth, 20, 5).unwrap();
            assert!(used <= h.query_budget);
            if level == 1 {
                assert_eq!(used, 0);
            }
        }
        let tight = OracleHandle::new(&truth, 3, 0);
        let view = View {
            individual: h.layout.encode(2, 5).unwrap(),
            outcome: true,
            access: Access::Oracle(&tight),
        };
        let err = h.distinguishers[1]
            .rule()
            .decide(&view, &mut Coins::Stream(&mut rng::seeded(0)))
            .unwrap_err();
        assert!(matches!(err, OiError::QueryBudgetExceeded { .. }));
    }

    #[test]
    fn constructed_witness_passes_stripped_but_not_oracle() {
        let h = small(6, 3);
        let (p, _) = construct_oi(&h.nature, &h.stripped, &ConstructConfig::new(h.epsilon)).unwrap();
        for d in &h.stripped {
            let a = advantage(d, &h.nature, &Subject::new(&p), AdvantageMode::Exact).unwrap();
            assert!(a.magnitude() <= h.epsilon);
        }
        let caught = measure(&h, &h.distinguishers, &p, 4, 9).unwrap();
        assert!(caught.iter().any(|r| r.signed.abs() - r.radius > h.epsilon));
    }

    #[test]
    fn claims_on_simple_candidates() {
        let h = small(8, 3);
        let truth = h.nature.truth().clone();
        let first = h.inverted_on(&[1]).unwrap();
        let candidates: Vec<(String, &dyn Evaluate)> =
            vec![("truth".into(), &truth), ("first".into(), &first)];
        let reports = induction_claims_check(&h, &candidates, 2, 4).unwrap();
        assert_eq!(reports[0].basis, ClaimOutcome::Holds);
        assert!(reports[0].steps.iter().all(|s| *s == ClaimOutcome::Holds));
        assert_eq!(reports[1].basis, ClaimOutcome::Vacuous);
        assert!(!reports.iter().any(|r| r.violated()));
    }

    #[test]
    fn non_boolean_ensembles_are_rejected() {
        let c = Arc::new(super::super::ensemble::CliqueEnsemble::new(5, 2).unwrap());
        assert!(matches!(build_hard_nature(c), Err(OiError::Config(_))));
    }
}
