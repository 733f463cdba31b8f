//! Distinguishers at the four access levels and their advantages.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::RuleSpec;
use crate::domain::{Individual, Nature};
use crate::error::{OiError, Result};
use crate::predictor::{Description, Evaluate};
use crate::rng;
use crate::stats;

/// What a distinguisher may see of the predictor under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessLevel {
    NoAccess,
    SampleAccess,
    OracleAccess { max_queries: u32 },
    CodeAccess,
}

impl AccessLevel {
    pub fn rank(&self) -> u8 {
        match self {
            AccessLevel::NoAccess => 0,
            AccessLevel::SampleAccess => 1,
            AccessLevel::OracleAccess { .. } => 2,
            AccessLevel::CodeAccess => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AccessLevel::NoAccess => "no_access",
            AccessLevel::SampleAccess => "sample_access",
            AccessLevel::OracleAccess { .. } => "oracle_access",
            AccessLevel::CodeAccess => "code_access",
        }
    }

    pub fn budget(&self) -> Option<u32> {
        match self {
            AccessLevel::OracleAccess { max_queries } => Some(*max_queries),
            _ => None,
        }
    }

    pub fn from_parts(name: &str, budget: Option<u32>) -> Result<Self> {
        let level = match name {
            "no_access" => AccessLevel::NoAccess,
            "sample_access" => AccessLevel::SampleAccess,
            "oracle_access" => AccessLevel::OracleAccess {
                max_queries: budget.ok_or_else(|| {
                    OiError::config("oracle_access distinguishers need a query budget")
                })?,
            },
            "code_access" => AccessLevel::CodeAccess,
            other => return Err(OiError::config(format!("unknown access level `{other}`"))),
        };
        if budget.is_some() && !matches!(level, AccessLevel::OracleAccess { .. }) {
            return Err(OiError::config(format!(
                "a query budget only applies to oracle_access, not {name}"
            )));
        }
        Ok(level)
    }
}

impl fmt::Display for AccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessLevel::OracleAccess { max_queries } => write!(f, "oracle_access(q={max_queries})"),
            other => f.write_str(other.name()),
        }
    }
}

/// How a rule uses internal randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Randomness {
    Deterministic,
    /// Uniform over this many coin atoms; marginalized exactly.
    Finite(u32),
    /// Acceptance probability available in closed form.
    ClosedForm,
    /// Arbitrary randomness; only sampling is possible.
    Sampled,
}

/// Largest coin space that is marginalized by enumeration.
pub const MAX_COIN_ATOMS: u32 = 1 << 16;

pub enum Coins<'a> {
    Fixed,
    Atom(u32),
    Stream(&'a mut dyn RngCore),
}

impl Coins<'_> {
    pub fn atom(&self) -> Result<u32> {
        match self {
            Coins::Atom(k) => Ok(*k),
            _ => Err(OiError::config("rule expected a coin atom")),
        }
    }

    pub fn stream(&mut self) -> Result<&mut dyn RngCore> {
        match self {
            Coins::Stream(rng) => Ok(&mut **rng),
            _ => Err(OiError::config("rule expected a coin stream")),
        }
    }
}

/// Query access to a predictor with a hard budget. One handle per invocation.
pub struct OracleHandle<'a> {
    target: &'a dyn Evaluate,
    budget: u32,
    used: Cell<u32>,
    version: u64,
}

impl<'a> OracleHandle<'a> {
    pub fn new(target: &'a dyn Evaluate, budget: u32, version: u64) -> Self {
        OracleHandle {
            target,
            budget,
            used: Cell::new(0),
            version,
        }
    }

    pub fn query(&self, i: Individual) -> Result<f64> {
        let used = self.used.get();
        if used >= self.budget {
            return Err(OiError::QueryBudgetExceeded {
                budget: self.budget,
            });
        }
        self.used.set(used + 1);
        self.target.evaluate(i)
    }

    pub fn used(&self) -> u32 {
        self.used.get()
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    /// Identifies which predictor state backs the handle.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dimension(&self) -> u32 {
        self.target.dimension()
    }
}

pub enum Access<'a> {
    None,
    Value(f64),
    Oracle(&'a OracleHandle<'a>),
    Code(&'a Description),
}

/// Everything a single invocation of a rule sees.
pub struct View<'a> {
    pub individual: Individual,
    pub outcome: bool,
    pub access: Access<'a>,
}

impl<'a> View<'a> {
    pub fn blind(individual: Individual, outcome: bool) -> Self {
        View {
            individual,
            outcome,
            access: Access::None,
        }
    }

    pub fn with_value(individual: Individual, outcome: bool, value: f64) -> Self {
        View {
            individual,
            outcome,
            access: Access::Value(value),
        }
    }

    /// `p̃_i`. Costs one query under oracle access.
    pub fn prediction(&self) -> Result<f64> {
        match &self.access {
            Access::None => Err(OiError::config("rule reads the prediction without access to it")),
            Access::Value(v) => Ok(*v),
            Access::Oracle(h) => h.query(self.individual),
            Access::Code(d) => d.predictor().evaluate(self.individual),
        }
    }

    pub fn query(&self, j: Individual) -> Result<f64> {
        match &self.access {
            Access::Oracle(h) => h.query(j),
            Access::Code(d) => d.predictor().evaluate(j),
            _ => Err(OiError::config("rule queries the predictor without oracle access")),
        }
    }

    pub fn oracle(&self) -> Option<&OracleHandle<'a>> {
        match &self.access {
            Access::Oracle(h) => Some(h),
            _ => None,
        }
    }

    pub fn description(&self) -> Option<&Description> {
        match &self.access {
            Access::Code(d) => Some(d),
            _ => None,
        }
    }
}

/// A decision rule `(i, o, access) -> {0,1}`.
pub trait Rule: Send + Sync {
    fn decide(&self, view: &View<'_>, coins: &mut Coins<'_>) -> Result<bool>;

    fn randomness(&self) -> Randomness {
        Randomness::Deterministic
    }

    /// Lowest access level under which the rule is well defined.
    fn min_level_rank(&self) -> u8 {
        0
    }

    /// Exact acceptance probability, for `Randomness::ClosedForm` rules.
    fn closed_form(&self, _view: &View<'_>) -> Result<Option<f64>> {
        Ok(None)
    }
}

struct Complemented(Arc<dyn Rule>);

impl Rule for Complemented {
    fn decide(&self, view: &View<'_>, coins: &mut Coins<'_>) -> Result<bool> {
        Ok(!self.0.decide(view, coins)?)
    }

    fn randomness(&self) -> Randomness {
        self.0.randomness()
    }

    fn min_level_rank(&self) -> u8 {
        self.0.min_level_rank()
    }

    fn closed_form(&self, view: &View<'_>) -> Result<Option<f64>> {
        Ok(self.0.closed_form(view)?.map(|p| 1.0 - p))
    }
}

#[derive(Clone)]
pub struct Distinguisher {
    id: String,
    level: AccessLevel,
    cost: u64,
    rule: Arc<dyn Rule>,
    spec: Option<RuleSpec>,
}

impl fmt::Debug for Distinguisher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Distinguisher")
            .field("id", &self.id)
            .field("level", &self.level)
            .field("cost", &self.cost)
            .field("spec", &self.spec)
            .finish()
    }
}

impl Distinguisher {
    /// A distinguisher from the serializable rule catalog.
    pub fn catalog(
        id: impl Into<String>,
        level: AccessLevel,
        cost: u64,
        spec: RuleSpec,
        dim: u32,
    ) -> Result<Self> {
        let spec = spec.normalized();
        spec.validate(dim)?;
        let rule: Arc<dyn Rule> = Arc::new(spec.clone());
        let mut d = Distinguisher::custom(id, level, cost, rule)?;
        d.spec = Some(spec);
        Ok(d)
    }

    /// A distinguisher with an arbitrary in-process rule (not serializable).
    pub fn custom(
        id: impl Into<String>,
        level: AccessLevel,
        cost: u64,
        rule: Arc<dyn Rule>,
    ) -> Result<Self> {
        let id = id.into();
        if cost == 0 {
            return Err(OiError::config(format!("distinguisher `{id}` needs a positive cost")));
        }
        if rule.min_level_rank() > level.rank() {
            return Err(OiError::config(format!(
                "distinguisher `{id}` needs more access than {level}"
            )));
        }
        if let Randomness::Finite(n) = rule.randomness() {
            if n == 0 || n > MAX_COIN_ATOMS {
                return Err(OiError::config(format!(
                    "distinguisher `{id}` declares {n} coin atoms; allowed 1..={MAX_COIN_ATOMS}"
                )));
            }
        }
        Ok(Distinguisher {
            id,
            level,
            cost,
            rule,
            spec: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn level(&self) -> AccessLevel {
        self.level
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }

    pub fn rule(&self) -> &Arc<dyn Rule> {
        &self.rule
    }

    pub fn spec(&self) -> Option<&RuleSpec> {
        self.spec.as_ref()
    }

    pub fn randomness(&self) -> Randomness {
        self.rule.randomness()
    }

    pub fn is_deterministic(&self) -> bool {
        self.rule.randomness() == Randomness::Deterministic
    }

    /// Acceptance can be computed exactly (no sampled coins).
    pub fn is_exact(&self) -> bool {
        self.rule.randomness() != Randomness::Sampled
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// `1 - A`.
    pub fn complement(&self) -> Distinguisher {
        Distinguisher {
            id: format!("not({})", self.id),
            level: self.level,
            cost: self.cost,
            rule: Arc::new(Complemented(self.rule.clone())),
            spec: self.spec.clone().map(|s| RuleSpec::Complement { inner: Box::new(s) }),
        }
    }

    pub fn require_deterministic(&self) -> Result<()> {
        if self.is_deterministic() {
            Ok(())
        } else {
            Err(OiError::NotDeterministic(self.id.clone()))
        }
    }
}

/// The predictor a distinguisher is run against.
#[derive(Clone, Copy)]
pub struct Subject<'a> {
    pub model: &'a dyn Evaluate,
    /// Version stamped on every oracle handle served for this subject.
    pub version: u64,
}

impl<'a> Subject<'a> {
    pub fn new(model: &'a dyn Evaluate) -> Self {
        Subject { model, version: 0 }
    }

    pub fn versioned(model: &'a dyn Evaluate, version: u64) -> Self {
        Subject { model, version }
    }
}

/// Runs `f` on a view built for `d`'s access level. `known` short-circuits
/// the evaluation of `p̃_i` for sample access.
pub fn with_view<T>(
    d: &Distinguisher,
    i: Individual,
    outcome: bool,
    subject: &Subject<'_>,
    known: Option<f64>,
    f: impl FnOnce(&View<'_>) -> Result<T>,
) -> Result<T> {
    match d.level {
        AccessLevel::NoAccess => f(&View::blind(i, outcome)),
        AccessLevel::SampleAccess => {
            let v = match known {
                Some(v) => v,
                None => subject.model.evaluate(i)?,
            };
            f(&View::with_value(i, outcome, v))
        }
        AccessLevel::OracleAccess { max_queries } => {
            let handle = OracleHandle::new(subject.model, max_queries, subject.version);
            f(&View {
                individual: i,
                outcome,
                access: Access::Oracle(&handle),
            })
        }
        AccessLevel::CodeAccess => {
            let description = subject.model.description().ok_or_else(|| {
                OiError::Unsupported(format!(
                    "`{}` needs code access but the predictor has no description",
                    d.id
                ))
            })??;
            f(&View {
                individual: i,
                outcome,
                access: Access::Code(&description),
            })
        }
    }
}

/// Exact `Pr[A(i, o) = 1]` over the rule's internal randomness.
pub fn acceptance(
    d: &Distinguisher,
    i: Individual,
    outcome: bool,
    subject: &Subject<'_>,
    known: Option<f64>,
) -> Result<f64> {
    match d.rule.randomness() {
        Randomness::Deterministic => with_view(d, i, outcome, subject, known, |v| {
            Ok(bit(d.rule.decide(v, &mut Coins::Fixed)?))
        }),
        Randomness::Finite(n) => {
            let mut accepted = 0u32;
            for k in 0..n {
                if with_view(d, i, outcome, subject, known, |v| {
                    d.rule.decide(v, &mut Coins::Atom(k))
                })? {
                    accepted += 1;
                }
            }
            Ok(accepted as f64 / n as f64)
        }
        Randomness::ClosedForm => with_view(d, i, outcome, subject, known, |v| {
            d.rule.closed_form(v)?.ok_or_else(|| {
                OiError::Unsupported(format!("`{}` has no closed-form acceptance", d.id))
            })
        }),
        Randomness::Sampled => Err(OiError::config(format!(
            "`{}` has unbounded randomness; exact acceptance is unavailable",
            d.id
        ))),
    }
}

/// One randomized invocation with coins drawn from `rng`.
pub fn decide_once(
    d: &Distinguisher,
    i: Individual,
    outcome: bool,
    subject: &Subject<'_>,
    known: Option<f64>,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    match d.rule.randomness() {
        Randomness::Deterministic => {
            with_view(d, i, outcome, subject, known, |v| d.rule.decide(v, &mut Coins::Fixed))
        }
        Randomness::Finite(n) => {
            let k = rng.gen_range(0..n);
            with_view(d, i, outcome, subject, known, |v| d.rule.decide(v, &mut Coins::Atom(k)))
        }
        Randomness::ClosedForm => {
            let p = acceptance(d, i, outcome, subject, known)?;
            Ok(rng.gen::<f64>() < p)
        }
        Randomness::Sampled => with_view(d, i, outcome, subject, known, |v| {
            d.rule.decide(v, &mut Coins::Stream(rng))
        }),
    }
}

/// `δ_A(i) = A(i,1) − A(i,0)` under exact marginalization.
pub fn delta(
    d: &Distinguisher,
    i: Individual,
    subject: &Subject<'_>,
    known: Option<f64>,
) -> Result<f64> {
    Ok(acceptance(d, i, true, subject, known)? - acceptance(d, i, false, subject, known)?)
}

pub(crate) fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AdvantageMode {
    Exact,
    /// Coupled sampling: nature and model outcomes share the uniform draw.
    MonteCarlo { samples: usize, seed: u64 },
    /// Enumerates individuals and outcomes; averages sampled coins `draws` times per individual.
    MarginalCoins { draws: usize, seed: u64 },
}

/// Signed advantage `Pr_nature[A=1] − Pr_model[A=1]` with a confidence radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Advantage {
    pub signed: f64,
    pub radius: f64,
    pub nature_acceptance: f64,
    pub model_acceptance: f64,
}

impl Advantage {
    pub fn magnitude(&self) -> f64 {
        self.signed.abs()
    }

    /// Upper confidence bound on `|Δ|`.
    pub fn upper(&self) -> f64 {
        self.signed.abs() + self.radius
    }
}

pub fn advantage(
    d: &Distinguisher,
    nature: &Nature,
    subject: &Subject<'_>,
    mode: AdvantageMode,
) -> Result<Advantage> {
    if subject.model.dimension() != nature.dim() {
        return Err(OiError::DimensionMismatch {
            expected: nature.dim(),
            found: subject.model.dimension(),
        });
    }
    match mode {
        AdvantageMode::Exact => exact_advantage(d, nature, subject),
        AdvantageMode::MonteCarlo { samples, seed } => {
            monte_carlo_advantage(d, nature, subject, samples, seed)
        }
        AdvantageMode::MarginalCoins { draws, seed } => {
            marginal_advantage(d, nature, subject, draws, seed)
        }
    }
}

fn exact_advantage(d: &Distinguisher, nature: &Nature, subject: &Subject<'_>) -> Result<Advantage> {
    let atoms = nature.population().atoms()?;
    let parts: Vec<Result<(f64, f64)>> = atoms
        .par_iter()
        .map(|atom| {
            let i = atom.individual;
            let truth = nature.truth().evaluate(i)?;
            let model = subject.model.evaluate(i)?;
            let a1 = acceptance(d, i, true, subject, Some(model))?;
            let a0 = acceptance(d, i, false, subject, Some(model))?;
            Ok((
                atom.mass * (truth * a1 + (1.0 - truth) * a0),
                atom.mass * (model * a1 + (1.0 - model) * a0),
            ))
        })
        .collect();
    let (mut nat, mut mdl) = (0.0, 0.0);
    for part in parts {
        let (n, m) = part?;
        nat += n;
        mdl += m;
    }
    Ok(Advantage {
        signed: nat - mdl,
        radius: 0.0,
        nature_acceptance: nat,
        model_acceptance: mdl,
    })
}

fn monte_carlo_advantage(
    d: &Distinguisher,
    nature: &Nature,
    subject: &Subject<'_>,
    samples: usize,
    seed: u64,
) -> Result<Advantage> {
    if samples == 0 {
        return Err(OiError::config("Monte-Carlo advantage needs at least one sample"));
    }
    let parts: Vec<Result<(bool, bool)>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let i = nature.population().sample(&mut rng);
            let truth = nature.truth().evaluate(i)?;
            let model = subject.model.evaluate(i)?;
            let u: f64 = rng.gen();
            let (o_nat, o_mdl) = (u < truth, u < model);
            let coin_seed: u64 = rng.gen();
            let a_nat = decide_once(d, i, o_nat, subject, Some(model), &mut rng::seeded(coin_seed))?;
            let a_mdl = if o_nat == o_mdl {
                a_nat
            } else {
                decide_once(d, i, o_mdl, subject, Some(model), &mut rng::seeded(coin_seed))?
            };
            Ok((a_nat, a_mdl))
        })
        .collect();
    let (mut nat, mut mdl) = (0usize, 0usize);
    for part in parts {
        let (a, b) = part?;
        nat += a as usize;
        mdl += b as usize;
    }
    let n = samples as f64;
    Ok(Advantage {
        signed: (nat as f64 - mdl as f64) / n,
        radius: stats::advantage_radius(samples),
        nature_acceptance: nat as f64 / n,
        model_acceptance: mdl as f64 / n,
    })
}

fn marginal_advantage(
    d: &Distinguisher,
    nature: &Nature,
    subject: &Subject<'_>,
    draws: usize,
    seed: u64,
) -> Result<Advantage> {
    if d.is_exact() {
        return exact_advantage(d, nature, subject);
    }
    if draws == 0 {
        return Err(OiError::config("marginal advantage needs at least one coin draw"));
    }
    let atoms = nature.population().atoms()?;
    let parts: Vec<Result<(f64, f64, f64)>> = atoms
        .par_iter()
        .enumerate()
        .map(|(k, atom)| {
            let i = atom.individual;
            let truth = nature.truth().evaluate(i)?;
            let model = subject.model.evaluate(i)?;
            let mut rng = rng::stream(seed, k as u64);
            let (mut a1, mut a0) = (0usize, 0usize);
            for _ in 0..draws {
                let coin_seed: u64 = rng.gen();
                a1 += decide_once(d, i, true, subject, Some(model), &mut rng::seeded(coin_seed))?
                    as usize;
                a0 += decide_once(d, i, false, subject, Some(model), &mut rng::seeded(coin_seed))?
                    as usize;
            }
            let (a1, a0) = (a1 as f64 / draws as f64, a0 as f64 / draws as f64);
            let gap = atom.mass * (truth - model);
            Ok((
                atom.mass * (truth * a1 + (1.0 - truth) * a0),
                atom.mass * (model * a1 + (1.0 - model) * a0),
                gap * gap,
            ))
        })
        .collect();
    let (mut nat, mut mdl, mut spread) = (0.0, 0.0, 0.0);
    for part in parts {
        let (n, m, s) = part?;
        nat += n;
        mdl += m;
        spread += s;
    }
    let radius = (2.0 * (2.0 / stats::CONFIDENCE_DELTA).ln() * spread / draws as f64).sqrt();
    Ok(Advantage {
        signed: nat - mdl,
        radius,
        nature_acceptance: nat,
        model_acceptance: mdl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Membership, RuleSpec};
    use crate::domain::Population;
    use crate::predictor::Predictor;

    fn nature_on(dim: u32, truth: Vec<f64>) -> Nature {
        let table = truth.into_iter().enumerate().map(|(b, v)| (b as u64, v));
        Nature::new(
            Population::uniform(dim).unwrap(),
            Predictor::from_table(dim, table, 0.5).unwrap(),
        )
        .unwrap()
    }

    struct Greedy;

    impl Rule for Greedy {
        fn decide(&self, view: &View<'_>, _: &mut Coins<'_>) -> Result<bool> {
            let mut acc = 0.0;
            for b in 0..4 {
                acc += view.query(Individual::new(b, 2)?)?;
            }
            Ok(acc > 0.0 && view.outcome)
        }
        fn min_level_rank(&self) -> u8 {
            2
        }
    }

    #[test]
    fn truth_has_zero_advantage() {
        let nature = nature_on(3, vec![0.1, 0.9, 0.3, 0.4, 1.0, 0.0, 0.5, 0.2]);
        let d = Distinguisher::catalog(
            "par",
            AccessLevel::NoAccess,
            1,
            RuleSpec::Parity { mask: 0b101 },
            3,
        )
        .unwrap();
        let adv = advantage(&d, &nature, &Subject::new(nature.truth()), AdvantageMode::Exact)
            .unwrap();
        assert!(adv.signed.abs() < 1e-15);
        assert_eq!(adv.radius, 0.0);
    }

    #[test]
    fn constant_reject_has_zero_advantage() {
        let nature = nature_on(2, vec![1.0, 0.0, 1.0, 0.0]);
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        let d = Distinguisher::catalog(
            "reject",
            AccessLevel::NoAccess,
            1,
            RuleSpec::Constant { accept: false },
            2,
        )
        .unwrap();
        let adv = advantage(&d, &nature, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        assert_eq!(adv.signed, 0.0);
    }

    #[test]
    fn subset_indicator_example() {
        // S = {first bit = 1} has mass 1/2; truth exceeds p by 0.1 on S.
        let truth: Vec<f64> = (0..8).map(|b| if b & 1 == 1 { 0.6 } else { 0.3 }).collect();
        let nature = nature_on(3, truth);
        let p = Predictor::from_table(
            3,
            (0..8u64).map(|b| (b, if b & 1 == 1 { 0.5 } else { 0.3 })),
            0.5,
        )
        .unwrap();
        let members: Vec<u64> = (0..8).filter(|b| b & 1 == 1).collect();
        let d = Distinguisher::catalog(
            "S",
            AccessLevel::NoAccess,
            1,
            RuleSpec::Subset { members },
            3,
        )
        .unwrap();
        let adv = advantage(&d, &nature, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        // brute force: Σ_{i∈S} (1/8)(p*_i − p_i)
        let brute: f64 = (0..8)
            .filter(|b| b & 1 == 1)
            .map(|_| (0.6 - 0.5) / 8.0)
            .sum();
        assert!((adv.signed - brute).abs() < 1e-12);
        assert!((adv.signed - 0.05).abs() < 1e-12);
    }

    #[test]
    fn complement_flips_sign_only() {
        let nature = nature_on(2, vec![0.9, 0.1, 0.4, 0.7]);
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        let d = Distinguisher::catalog(
            "c",
            AccessLevel::SampleAccess,
            1,
            RuleSpec::Threshold {
                threshold: 0.5,
                set: None,
            },
            2,
        )
        .unwrap();
        let a = advantage(&d, &nature, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        let b = advantage(&d.complement(), &nature, &Subject::new(&p), AdvantageMode::Exact)
            .unwrap();
        assert!((a.signed + b.signed).abs() < 1e-15);
        assert!((a.magnitude() - b.magnitude()).abs() < 1e-15);
    }

    #[test]
    fn exact_mode_refuses_sampler_populations() {
        let pop = Population::sampler(30, crate::domain::SamplerKind::Uniform).unwrap();
        let nature = Nature::new(pop, Predictor::constant(30, 0.5, 0.0).unwrap()).unwrap();
        let d = Distinguisher::catalog(
            "a",
            AccessLevel::NoAccess,
            1,
            RuleSpec::Constant { accept: true },
            30,
        )
        .unwrap();
        let p = Predictor::constant(30, 0.2, 0.0).unwrap();
        assert!(matches!(
            advantage(&d, &nature, &Subject::new(&p), AdvantageMode::Exact),
            Err(OiError::Config(_))
        ));
        let mc = advantage(
            &d,
            &nature,
            &Subject::new(&p),
            AdvantageMode::MonteCarlo {
                samples: 1000,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(mc.signed, 0.0);
    }

    #[test]
    fn oracle_budget_overflow_is_an_error() {
        let nature = nature_on(2, vec![1.0, 0.0, 1.0, 0.0]);
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        let greedy: Arc<dyn Rule> = Arc::new(Greedy);
        let ok = Distinguisher::custom(
            "g4",
            AccessLevel::OracleAccess { max_queries: 4 },
            1,
            greedy.clone(),
        )
        .unwrap();
        assert!(advantage(&ok, &nature, &Subject::new(&p), AdvantageMode::Exact).is_ok());
        let tight = Distinguisher::custom(
            "g3",
            AccessLevel::OracleAccess { max_queries: 3 },
            1,
            greedy.clone(),
        )
        .unwrap();
        assert!(matches!(
            advantage(&tight, &nature, &Subject::new(&p), AdvantageMode::Exact),
            Err(OiError::QueryBudgetExceeded { budget: 3 })
        ));
        assert!(Distinguisher::custom("g", AccessLevel::SampleAccess, 1, greedy).is_err());
    }

    #[test]
    fn level_names_round_trip() {
        for level in [
            AccessLevel::NoAccess,
            AccessLevel::SampleAccess,
            AccessLevel::OracleAccess { max_queries: 5 },
            AccessLevel::CodeAccess,
        ] {
            assert_eq!(AccessLevel::from_parts(level.name(), level.budget()).unwrap(), level);
        }
        assert!(AccessLevel::from_parts("oracle_access", None).is_err());
        assert!(AccessLevel::from_parts("no_access", Some(3)).is_err());
        assert!(AccessLevel::from_parts("psychic", None).is_err());
    }

    #[test]
    fn finite_coins_are_marginalized() {
        let nature = nature_on(2, vec![1.0, 1.0, 1.0, 1.0]);
        let p = Predictor::constant(2, 0.0, 0.0).unwrap();
        let d = Distinguisher::catalog(
            "noisy",
            AccessLevel::NoAccess,
            1,
            RuleSpec::Noisy {
                inner: Box::new(RuleSpec::Indicator {
                    set: Membership::All,
                }),
                flip_one_in: 4,
            },
            2,
        )
        .unwrap();
        let adv = advantage(&d, &nature, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        // accept(o=1) = 3/4, accept(o=0) = 1/4
        assert!((adv.signed - 0.5).abs() < 1e-15);
    }
}
