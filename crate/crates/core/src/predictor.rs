//! Predictors: a start value plus a stack of clamped additive update terms.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::catalog::DistinguisherSpec;
use crate::distinguisher::{self, AccessLevel, Distinguisher, Randomness, Subject};
use crate::domain::Individual;
use crate::error::{OiError, Result};
use crate::size::SizeAccount;

/// Anything that maps individuals to probabilities.
pub trait Evaluate: Send + Sync {
    fn dimension(&self) -> u32;

    fn evaluate(&self, i: Individual) -> Result<f64>;

    /// The serialized description handed to code-access distinguishers.
    fn description(&self) -> Option<Result<Arc<Description>>> {
        None
    }
}

/// A serialized predictor and its parsed form.
pub struct Description {
    text: String,
    predictor: Predictor,
}

impl Description {
    pub fn of(p: &Predictor) -> Result<Self> {
        let text = p.to_json()?;
        let predictor = Predictor::from_json(&text)?;
        Ok(Description { text, predictor })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn bits(&self) -> u64 {
        8 * self.text.len() as u64
    }
}

impl fmt::Debug for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Description")
            .field("bytes", &self.text.len())
            .finish()
    }
}

#[derive(Clone)]
pub struct UpdateTerm {
    pub coefficient: f64,
    pub distinguisher: Distinguisher,
}

struct Level {
    term: UpdateTerm,
    /// Value after this level, for individuals evaluated so far.
    memo: RwLock<HashMap<u64, f64>>,
    /// Description of the predictor *before* this level.
    context: OnceLock<Arc<Description>>,
    size_after: SizeAccount,
}

#[derive(Clone)]
pub struct Predictor {
    dim: u32,
    base: f64,
    /// Sorted overrides of the base value (warm starts, truth tables).
    table: Option<Arc<Vec<(u64, f64)>>>,
    precision: f64,
    levels: Vec<Arc<Level>>,
    initial_size: SizeAccount,
    memoize: bool,
    own_description: Arc<OnceLock<Arc<Description>>>,
}

impl fmt::Debug for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Predictor")
            .field("dim", &self.dim)
            .field("base", &self.base)
            .field("table_len", &self.table.as_ref().map(|t| t.len()))
            .field("precision", &self.precision)
            .field("terms", &self.levels.len())
            .finish()
    }
}

fn check_probability(v: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(OiError::domain(format!("{what} {v} outside [0,1]")));
    }
    Ok(())
}

fn check_dim(dim: u32) -> Result<()> {
    if dim == 0 || dim > crate::domain::MAX_DIMENSION {
        return Err(OiError::domain(format!("dimension {dim} outside 1..=64")));
    }
    Ok(())
}

/// Rounds to the grid `0.5 + k·2·precision` and clamps to `[0,1]`.
pub fn snap(v: f64, precision: f64) -> f64 {
    let v = if precision > 0.0 {
        let spacing = 2.0 * precision;
        0.5 + ((v - 0.5) / spacing).round() * spacing
    } else {
        v
    };
    v.clamp(0.0, 1.0)
}

impl Predictor {
    pub fn constant(dim: u32, value: f64, precision: f64) -> Result<Self> {
        check_dim(dim)?;
        check_probability(value, "base value")?;
        if !(precision.is_finite() && precision >= 0.0) {
            return Err(OiError::config(format!("invalid precision {precision}")));
        }
        Ok(Predictor {
            dim,
            base: value,
            table: None,
            precision,
            levels: Vec::new(),
            initial_size: SizeAccount::new(1.0, 1),
            memoize: false,
            own_description: Arc::default(),
        })
    }

    /// A table of values; individuals not listed get `default`.
    pub fn from_table(
        dim: u32,
        values: impl IntoIterator<Item = (u64, f64)>,
        default: f64,
    ) -> Result<Self> {
        let mut p = Predictor::constant(dim, default, 0.0)?;
        let mut table: Vec<(u64, f64)> = Vec::new();
        for (bits, v) in values {
            Individual::new(bits, dim)?;
            check_probability(v, "table value")?;
            table.push((bits, v));
        }
        table.sort_by_key(|e| e.0);
        if table.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(OiError::domain("duplicate individual in predictor table"));
        }
        p.table = Some(Arc::new(table));
        Ok(p)
    }

    /// Same start values on a new precision grid; drops terms.
    pub fn with_precision(mut self, precision: f64) -> Result<Self> {
        if !(precision.is_finite() && precision >= 0.0) {
            return Err(OiError::config(format!("invalid precision {precision}")));
        }
        if !self.levels.is_empty() {
            return Err(OiError::config("precision must be set before terms are added"));
        }
        self.precision = precision;
        self.own_description = Arc::default();
        Ok(self)
    }

    pub fn with_size_account(mut self, account: SizeAccount) -> Self {
        if self.levels.is_empty() {
            self.initial_size = account;
        }
        self
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    pub fn term_count(&self) -> usize {
        self.levels.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &UpdateTerm> {
        self.levels.iter().map(|l| &l.term)
    }

    pub fn size_account(&self) -> &SizeAccount {
        self.levels
            .last()
            .map(|l| &l.size_after)
            .unwrap_or(&self.initial_size)
    }

    fn start_value(&self, bits: u64) -> f64 {
        let raw = match &self.table {
            Some(t) => match t.binary_search_by_key(&bits, |e| e.0) {
                Ok(k) => t[k].1,
                Err(_) => self.base,
            },
            None => self.base,
        };
        snap(raw, self.precision)
    }

    /// The predictor made of the first `upto` terms.
    pub fn prefix(&self, upto: usize) -> Predictor {
        let upto = upto.min(self.levels.len());
        Predictor {
            levels: self.levels[..upto].to_vec(),
            own_description: if upto == self.levels.len() {
                self.own_description.clone()
            } else {
                match self.levels.get(upto).and_then(|l| l.context.get()) {
                    Some(d) => {
                        let cell = OnceLock::new();
                        let _ = cell.set(d.clone());
                        Arc::new(cell)
                    }
                    None => Arc::default(),
                }
            },
            ..self.clone()
        }
    }

    fn context_description(&self, level: usize) -> Result<Arc<Description>> {
        let slot = &self.levels[level].context;
        if let Some(d) = slot.get() {
            return Ok(d.clone());
        }
        let d = Arc::new(Description::of(&self.prefix(level))?);
        Ok(slot.get_or_init(|| d).clone())
    }

    /// Value of the first `upto` terms at `i`.
    fn value_at(&self, upto: usize, i: Individual) -> Result<f64> {
        let bits = i.bits();
        let mut start = 0;
        let mut value = self.start_value(bits);
        if self.memoize {
            for k in (0..upto).rev() {
                let hit = self.levels[k].memo.read().expect("memo lock").get(&bits).copied();
                if let Some(v) = hit {
                    start = k + 1;
                    value = v;
                    break;
                }
            }
        }
        for k in start..upto {
            let d = self.term_delta(k, i, value)?;
            let level = &self.levels[k];
            value = snap(value + level.term.coefficient * d, self.precision);
            if self.memoize {
                level.memo.write().expect("memo lock").insert(bits, value);
            }
        }
        Ok(value)
    }

    /// `δ_A(i)` for term `k`, evaluated against the predictor before it.
    fn term_delta(&self, k: usize, i: Individual, current: f64) -> Result<f64> {
        let d = &self.levels[k].term.distinguisher;
        let view = PrefixView {
            predictor: self,
            upto: k,
        };
        distinguisher::delta(d, i, &Subject::versioned(&view, k as u64), Some(current))
    }

    /// Appends `coefficient·δ_A` evaluated against the current predictor.
    /// The account is advanced by the recurrence for `A`'s access level.
    pub fn push_term(&self, coefficient: f64, distinguisher: Distinguisher) -> Result<Predictor> {
        self.push_term_with(coefficient, distinguisher, None)
    }

    /// As [`Predictor::push_term`], reusing an already computed description of `self`.
    pub fn push_term_with(
        &self,
        coefficient: f64,
        distinguisher: Distinguisher,
        description: Option<Arc<Description>>,
    ) -> Result<Predictor> {
        if !coefficient.is_finite() {
            return Err(OiError::domain(format!("non-finite coefficient {coefficient}")));
        }
        if distinguisher.randomness() == Randomness::Sampled {
            return Err(OiError::config(format!(
                "`{}` cannot define an update term: its randomness is not marginalizable",
                distinguisher.id()
            )));
        }
        let mut size_after = self.size_account().clone();
        size_after.advance(distinguisher.level(), distinguisher.cost());
        let context = OnceLock::new();
        if let Some(d) = description.or_else(|| self.own_description.get().cloned()) {
            let _ = context.set(d);
        }
        let needs_memo = matches!(
            distinguisher.level(),
            AccessLevel::OracleAccess { .. } | AccessLevel::CodeAccess
        );
        let mut levels = self.levels.clone();
        levels.push(Arc::new(Level {
            term: UpdateTerm {
                coefficient,
                distinguisher,
            },
            memo: RwLock::new(HashMap::new()),
            context,
            size_after,
        }));
        Ok(Predictor {
            levels,
            memoize: self.memoize || needs_memo,
            own_description: Arc::default(),
            ..self.clone()
        })
    }

    pub fn to_document(&self) -> Result<PredictorDocument> {
        let terms = self
            .levels
            .iter()
            .map(|l| {
                Ok(TermDocument {
                    coefficient: l.term.coefficient,
                    distinguisher: DistinguisherSpec::of(&l.term.distinguisher)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictorDocument {
            dimension: self.dim,
            base: self.base,
            precision: self.precision,
            table: self.table.as_ref().map(|t| t.as_ref().clone()),
            terms,
            size: Some(self.initial_size.clone()),
        })
    }

    pub fn from_document(doc: &PredictorDocument) -> Result<Predictor> {
        let mut p = match &doc.table {
            Some(t) => Predictor::from_table(doc.dimension, t.iter().copied(), doc.base)?,
            None => Predictor::constant(doc.dimension, doc.base, 0.0)?,
        }
        .with_precision(doc.precision)?;
        if let Some(size) = &doc.size {
            p = p.with_size_account(size.clone());
        }
        for term in &doc.terms {
            p = p.push_term(term.coefficient, term.distinguisher.build(doc.dimension)?)?;
        }
        Ok(p)
    }

    /// Full-precision JSON; parsing it back reproduces every value bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document()?)?)
    }

    pub fn from_json(text: &str) -> Result<Predictor> {
        Predictor::from_document(&serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Predictor> {
        Predictor::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = self.to_document()?;
        std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}

impl Evaluate for Predictor {
    fn dimension(&self) -> u32 {
        self.dim
    }

    fn evaluate(&self, i: Individual) -> Result<f64> {
        i.expect_dim(self.dim)?;
        self.value_at(self.levels.len(), i)
    }

    fn description(&self) -> Option<Result<Arc<Description>>> {
        if let Some(d) = self.own_description.get() {
            return Some(Ok(d.clone()));
        }
        Some(Description::of(self).map(|d| self.own_description.get_or_init(|| Arc::new(d)).clone()))
    }
}

/// The predictor restricted to its first `upto` terms.
struct PrefixView<'a> {
    predictor: &'a Predictor,
    upto: usize,
}

impl Evaluate for PrefixView<'_> {
    fn dimension(&self) -> u32 {
        self.predictor.dim
    }

    fn evaluate(&self, i: Individual) -> Result<f64> {
        i.expect_dim(self.predictor.dim)?;
        self.predictor.value_at(self.upto, i)
    }

    fn description(&self) -> Option<Result<Arc<Description>>> {
        if self.upto == self.predictor.levels.len() {
            return self.predictor.description();
        }
        Some(self.predictor.context_description(self.upto))
    }
}

/// Closure-backed predictor for in-process experiments. Not serializable.
pub struct FnPredictor<F> {
    dim: u32,
    f: F,
}

impl<F: Fn(Individual) -> f64 + Send + Sync> FnPredictor<F> {
    pub fn new(dim: u32, f: F) -> Self {
        FnPredictor { dim, f }
    }
}

impl<F: Fn(Individual) -> f64 + Send + Sync> Evaluate for FnPredictor<F> {
    fn dimension(&self) -> u32 {
        self.dim
    }

    fn evaluate(&self, i: Individual) -> Result<f64> {
        i.expect_dim(self.dim)?;
        Ok((self.f)(i).clamp(0.0, 1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDocument {
    pub coefficient: f64,
    pub distinguisher: DistinguisherSpec,
}

/// Serialized predictor; exactly what code-access distinguishers receive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorDocument {
    pub dimension: u32,
    pub base: f64,
    pub precision: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<(u64, f64)>>,
    pub terms: Vec<TermDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<SizeAccount>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Membership, RuleSpec};
    use crate::distinguisher::Rule;

    fn ind(bits: u64, dim: u32) -> Individual {
        Individual::new(bits, dim).unwrap()
    }

    fn subset(members: Vec<u64>, dim: u32) -> Distinguisher {
        Distinguisher::catalog("S", AccessLevel::NoAccess, 1, RuleSpec::Subset { members }, dim)
            .unwrap()
    }

    #[test]
    fn constant_predictor() {
        let p = Predictor::constant(3, 0.5, 0.0).unwrap();
        for b in 0..8 {
            assert_eq!(p.evaluate(ind(b, 3)).unwrap(), 0.5);
        }
    }

    #[test]
    fn one_additive_term() {
        let p = Predictor::constant(2, 0.5, 0.0)
            .unwrap()
            .push_term(0.3, subset(vec![1], 2))
            .unwrap();
        assert_eq!(p.evaluate(ind(1, 2)).unwrap(), 0.8);
        assert_eq!(p.evaluate(ind(0, 2)).unwrap(), 0.5);
    }

    #[test]
    fn projection_clamps() {
        let p = Predictor::constant(2, 0.9, 0.0)
            .unwrap()
            .push_term(0.3, subset(vec![1], 2))
            .unwrap();
        assert_eq!(p.evaluate(ind(1, 2)).unwrap(), 1.0);
        let q = Predictor::constant(2, 0.1, 0.0)
            .unwrap()
            .push_term(-0.3, subset(vec![1], 2))
            .unwrap();
        assert_eq!(q.evaluate(ind(1, 2)).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        assert!(matches!(
            p.evaluate(ind(1, 3)),
            Err(OiError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_delta_still_records_a_term() {
        let reject = Distinguisher::catalog(
            "r",
            AccessLevel::NoAccess,
            1,
            RuleSpec::Constant { accept: false },
            2,
        )
        .unwrap();
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        let q = p.push_term(0.2, reject).unwrap();
        assert_eq!(q.term_count(), 1);
        for b in 0..4 {
            assert_eq!(q.evaluate(ind(b, 2)).unwrap(), 0.5);
        }
        assert_eq!(q.size_account().t, 1);
    }

    #[test]
    fn grid_snapping() {
        assert_eq!(snap(0.5, 0.0125), 0.5);
        assert!((snap(0.61, 0.025) - 0.6).abs() < 1e-15);
        assert_eq!(snap(1.2, 0.025), 1.0);
        let p = Predictor::constant(2, 0.5, 0.025)
            .unwrap()
            .push_term(0.113, subset(vec![0], 2))
            .unwrap();
        let v = p.evaluate(ind(0, 2)).unwrap();
        assert!((v - 0.6).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let p = Predictor::from_table(3, [(2, 0.123456789), (5, 0.9)], 0.5)
            .unwrap()
            .push_term(0.1 / 3.0, subset(vec![1, 2, 5], 3))
            .unwrap()
            .push_term(
                -0.07,
                Distinguisher::catalog(
                    "t",
                    AccessLevel::SampleAccess,
                    2,
                    RuleSpec::Threshold {
                        threshold: 0.55,
                        set: Some(Membership::All),
                    },
                    3,
                )
                .unwrap(),
            )
            .unwrap();
        let q = Predictor::from_json(&p.to_json().unwrap()).unwrap();
        for b in 0..8 {
            let (x, y) = (p.evaluate(ind(b, 3)).unwrap(), q.evaluate(ind(b, 3)).unwrap());
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(p.size_account(), q.size_account());
    }

    struct Opaque;
    impl Rule for Opaque {
        fn decide(
            &self,
            view: &crate::distinguisher::View<'_>,
            _: &mut crate::distinguisher::Coins<'_>,
        ) -> Result<bool> {
            Ok(view.outcome)
        }
    }

    #[test]
    fn custom_rules_do_not_serialize() {
        let d = Distinguisher::custom("opaque", AccessLevel::NoAccess, 1, Arc::new(Opaque)).unwrap();
        let p = Predictor::constant(2, 0.5, 0.0).unwrap().push_term(0.1, d).unwrap();
        assert!(matches!(p.to_json(), Err(OiError::Unsupported(_))));
    }

    #[test]
    fn oracle_terms_see_the_prefix() {
        // neighbor rule reads the previous predictor at i ⊕ 1
        let first = Predictor::from_table(2, [(0, 1.0), (1, 0.0), (2, 1.0), (3, 0.0)], 0.5)
            .unwrap();
        let nb = Distinguisher::catalog(
            "nb",
            AccessLevel::OracleAccess { max_queries: 1 },
            3,
            RuleSpec::Neighbor { mask: 1 },
            2,
        )
        .unwrap();
        let p = first.push_term(0.25, nb.clone()).unwrap();
        // at i=1 the neighbor 0 predicts 1: δ = 1, value 0 + .25
        assert_eq!(p.evaluate(ind(1, 2)).unwrap(), 0.25);
        // at i=0 the neighbor 1 predicts 0: δ = −1, value 1 − .25
        assert_eq!(p.evaluate(ind(0, 2)).unwrap(), 0.75);
        let q = p.push_term(0.25, nb).unwrap();
        // second layer reads the first layer at the neighbor: 0.75 rounds to 1 at i=1
        assert_eq!(q.evaluate(ind(1, 2)).unwrap(), 0.5);
        let r = Predictor::from_json(&q.to_json().unwrap()).unwrap();
        for b in 0..4 {
            assert_eq!(q.evaluate(ind(b, 2)).unwrap(), r.evaluate(ind(b, 2)).unwrap());
        }
        assert_eq!(q.size_account().bound, 3.0 * 3.0 + 3.0 * (9.0 + 3.0 * 1.0));
    }

    #[test]
    fn code_terms_evaluate_against_their_description() {
        let first = Predictor::from_table(2, [(0, 1.0), (1, 0.0), (2, 1.0), (3, 0.0)], 0.5)
            .unwrap();
        let nb_code = Distinguisher::catalog(
            "nb",
            AccessLevel::CodeAccess,
            3,
            RuleSpec::Neighbor { mask: 1 },
            2,
        )
        .unwrap();
        let nb_oracle = Distinguisher::catalog(
            "nb",
            AccessLevel::OracleAccess { max_queries: 1 },
            3,
            RuleSpec::Neighbor { mask: 1 },
            2,
        )
        .unwrap();
        let a = first.push_term(0.25, nb_code.clone()).unwrap().push_term(0.25, nb_code).unwrap();
        let b = first
            .push_term(0.25, nb_oracle.clone())
            .unwrap()
            .push_term(0.25, nb_oracle)
            .unwrap();
        for bits in 0..4 {
            assert_eq!(a.evaluate(ind(bits, 2)).unwrap(), b.evaluate(ind(bits, 2)).unwrap());
        }
        let desc = a.description().unwrap().unwrap();
        assert_eq!(desc.predictor().to_json().unwrap(), desc.text());
    }
}
