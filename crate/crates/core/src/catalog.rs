//! The serializable distinguisher language and subpopulation memberships.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distinguisher::{AccessLevel, Coins, Distinguisher, Randomness, Rule, View};
use crate::domain::{dimension_mask, Individual};
use crate::error::{OiError, Result};

/// Largest dimension for which full truth tables are accepted.
pub const MAX_TABLE_DIMENSION: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub bit: u32,
    pub value: bool,
}

pub type MemberFn = Arc<dyn Fn(Individual) -> Result<bool> + Send + Sync>;

/// A boolean predicate over individuals.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Membership {
    All,
    Empty,
    Set { members: Vec<u64> },
    Conjunction { literals: Vec<Literal> },
    Parity { mask: u64, odd: bool },
    Table { bits: Vec<bool> },
    /// `{ i : A(i, outcome, prediction) = 1 }` for a deterministic catalog rule.
    Accepts {
        rule: Box<RuleSpec>,
        outcome: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prediction: Option<f64>,
    },
    Not { inner: Box<Membership> },
    #[serde(skip)]
    Custom(MemberFn),
}

impl fmt::Debug for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Membership::Custom(_) => f.write_str("Custom(..)"),
            other => write!(
                f,
                "{}",
                serde_json::to_string(other).unwrap_or_else(|_| "?".into())
            ),
        }
    }
}

impl PartialEq for Membership {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Membership::Custom(a), Membership::Custom(b)) => Arc::ptr_eq(a, b),
            (Membership::Custom(_), _) | (_, Membership::Custom(_)) => false,
            (a, b) => serde_json::to_value(a).ok() == serde_json::to_value(b).ok(),
        }
    }
}

fn conjunction_holds(literals: &[Literal], i: Individual) -> bool {
    literals.iter().all(|l| i.bit(l.bit) == l.value)
}

fn parity(bits: u64) -> bool {
    bits.count_ones() % 2 == 1
}

impl Membership {
    pub fn set(members: impl IntoIterator<Item = u64>) -> Self {
        Membership::Set {
            members: members.into_iter().collect(),
        }
        .normalized()
    }

    pub fn custom(f: impl Fn(Individual) -> Result<bool> + Send + Sync + 'static) -> Self {
        Membership::Custom(Arc::new(f))
    }

    /// Sorts and deduplicates explicit member lists, recursively.
    pub fn normalized(self) -> Self {
        match self {
            Membership::Set { mut members } => {
                members.sort_unstable();
                members.dedup();
                Membership::Set { members }
            }
            Membership::Not { inner } => Membership::Not {
                inner: Box::new(inner.normalized()),
            },
            Membership::Accepts {
                rule,
                outcome,
                prediction,
            } => Membership::Accepts {
                rule: Box::new(rule.normalized()),
                outcome,
                prediction,
            },
            other => other,
        }
    }

    pub fn validate(&self, dim: u32) -> Result<()> {
        let mask = dimension_mask(dim);
        match self {
            Membership::Set { members } => {
                if let Some(m) = members.iter().find(|&&m| m & !mask != 0) {
                    return Err(OiError::config(format!("member {m} outside {dim} bits")));
                }
            }
            Membership::Conjunction { literals } => check_literals(literals, dim)?,
            Membership::Parity { mask: m, .. } => check_mask(*m, dim)?,
            Membership::Table { bits } => check_table(bits.len(), dim, 0)?,
            Membership::Accepts {
                rule, prediction, ..
            } => {
                rule.validate(dim)?;
                if rule.randomness() != Randomness::Deterministic {
                    return Err(OiError::NotDeterministic("membership rule".into()));
                }
                let needed = rule.min_level_rank();
                if needed >= 2 || (needed == 1 && prediction.is_none()) {
                    return Err(OiError::config(
                        "membership rule needs more access than a fixed prediction",
                    ));
                }
            }
            Membership::Not { inner } => inner.validate(dim)?,
            Membership::All | Membership::Empty | Membership::Custom(_) => {}
        }
        Ok(())
    }

    pub fn contains(&self, i: Individual) -> Result<bool> {
        Ok(match self {
            Membership::All => true,
            Membership::Empty => false,
            Membership::Set { members } => members.binary_search(&i.bits()).is_ok(),
            Membership::Conjunction { literals } => conjunction_holds(literals, i),
            Membership::Parity { mask, odd } => parity(i.bits() & mask) == *odd,
            Membership::Table { bits } => *bits.get(i.bits() as usize).ok_or_else(|| {
                OiError::domain(format!("individual {i:?} outside membership table"))
            })?,
            Membership::Accepts {
                rule,
                outcome,
                prediction,
            } => {
                let view = match prediction {
                    Some(v) => View::with_value(i, *outcome, *v),
                    None => View::blind(i, *outcome),
                };
                rule.decide(&view, &mut Coins::Fixed)?
            }
            Membership::Not { inner } => !inner.contains(i)?,
            Membership::Custom(f) => f(i)?,
        })
    }
}

fn check_mask(mask: u64, dim: u32) -> Result<()> {
    if mask & !dimension_mask(dim) != 0 {
        return Err(OiError::config(format!("mask {mask:#x} outside {dim} bits")));
    }
    Ok(())
}

fn check_literals(literals: &[Literal], dim: u32) -> Result<()> {
    if let Some(l) = literals.iter().find(|l| l.bit >= dim) {
        return Err(OiError::config(format!("literal on bit {} outside {dim} bits", l.bit)));
    }
    Ok(())
}

fn check_table(len: usize, dim: u32, extra_bits: u32) -> Result<()> {
    if dim > MAX_TABLE_DIMENSION {
        return Err(OiError::config(format!(
            "tables need d <= {MAX_TABLE_DIMENSION}, got {dim}"
        )));
    }
    let expected = 1usize << (dim + extra_bits);
    if len != expected {
        return Err(OiError::config(format!(
            "table has {len} entries, expected {expected}"
        )));
    }
    Ok(())
}

/// Catalog of serializable decision rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleSpec {
    Constant {
        accept: bool,
    },
    /// Accept iff `i ∈ members` and `o = 1`.
    Subset {
        members: Vec<u64>,
    },
    /// Accept iff `i ∈ set` and `o = 1`.
    Indicator {
        set: Membership,
    },
    /// Accept iff every literal holds and `o = 1`.
    Conjunction {
        literals: Vec<Literal>,
    },
    /// Accept iff the parity of the masked bits equals `o`.
    Parity {
        mask: u64,
    },
    /// Accept iff `i ∈ set`, `o = 1` and `|v − center| ≤ half_width`.
    LevelSet {
        set: Membership,
        center: f64,
        half_width: f64,
    },
    /// Accept iff `o = 1[v ≥ threshold]` (restricted to `set` when given).
    Threshold {
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        set: Option<Membership>,
    },
    /// Indexed by `(bits << 1) | o`.
    Table {
        accept: Vec<bool>,
    },
    /// Accept with probability `1 − |o − v|`.
    Ell1,
    /// Accept iff `o` equals the rounded prediction at `i ⊕ mask`. Needs one query.
    Neighbor {
        mask: u64,
    },
    /// `inner` with its decision flipped on one of `flip_one_in` equally likely coin atoms.
    Noisy {
        inner: Box<RuleSpec>,
        flip_one_in: u32,
    },
    Complement {
        inner: Box<RuleSpec>,
    },
}

impl RuleSpec {
    pub fn normalized(self) -> Self {
        match self {
            RuleSpec::Subset { mut members } => {
                members.sort_unstable();
                members.dedup();
                RuleSpec::Subset { members }
            }
            RuleSpec::Indicator { set } => RuleSpec::Indicator {
                set: set.normalized(),
            },
            RuleSpec::LevelSet {
                set,
                center,
                half_width,
            } => RuleSpec::LevelSet {
                set: set.normalized(),
                center,
                half_width,
            },
            RuleSpec::Threshold { threshold, set } => RuleSpec::Threshold {
                threshold,
                set: set.map(Membership::normalized),
            },
            RuleSpec::Noisy { inner, flip_one_in } => RuleSpec::Noisy {
                inner: Box::new(inner.normalized()),
                flip_one_in,
            },
            RuleSpec::Complement { inner } => RuleSpec::Complement {
                inner: Box::new(inner.normalized()),
            },
            other => other,
        }
    }

    pub fn validate(&self, dim: u32) -> Result<()> {
        match self {
            RuleSpec::Constant { .. } | RuleSpec::Ell1 => Ok(()),
            RuleSpec::Subset { members } => Membership::Set {
                members: members.clone(),
            }
            .validate(dim),
            RuleSpec::Indicator { set } => set.validate(dim),
            RuleSpec::Conjunction { literals } => check_literals(literals, dim),
            RuleSpec::Parity { mask } | RuleSpec::Neighbor { mask } => check_mask(*mask, dim),
            RuleSpec::LevelSet {
                set,
                center,
                half_width,
            } => {
                if !(center.is_finite() && *half_width >= 0.0) {
                    return Err(OiError::config("level set needs a finite center and half_width >= 0"));
                }
                set.validate(dim)
            }
            RuleSpec::Threshold { threshold, set } => {
                if !threshold.is_finite() {
                    return Err(OiError::config("threshold must be finite"));
                }
                set.as_ref().map_or(Ok(()), |s| s.validate(dim))
            }
            RuleSpec::Table { accept } => check_table(accept.len(), dim, 1),
            RuleSpec::Noisy { inner, flip_one_in } => {
                if *flip_one_in == 0 || *flip_one_in > crate::distinguisher::MAX_COIN_ATOMS {
                    return Err(OiError::config("flip_one_in must be in 1..=65536"));
                }
                if inner.randomness() != Randomness::Deterministic {
                    return Err(OiError::config("noisy rules wrap deterministic rules only"));
                }
                inner.validate(dim)
            }
            RuleSpec::Complement { inner } => inner.validate(dim),
        }
    }
}

impl Rule for RuleSpec {
    fn decide(&self, view: &View<'_>, coins: &mut Coins<'_>) -> Result<bool> {
        let i = view.individual;
        let o = view.outcome;
        Ok(match self {
            RuleSpec::Constant { accept } => *accept,
            RuleSpec::Subset { members } => o && members.binary_search(&i.bits()).is_ok(),
            RuleSpec::Indicator { set } => o && set.contains(i)?,
            RuleSpec::Conjunction { literals } => o && conjunction_holds(literals, i),
            RuleSpec::Parity { mask } => parity(i.bits() & mask) == o,
            RuleSpec::LevelSet {
                set,
                center,
                half_width,
            } => o && set.contains(i)? && (view.prediction()? - center).abs() <= *half_width,
            RuleSpec::Threshold { threshold, set } => {
                let inside = match set {
                    Some(s) => s.contains(i)?,
                    None => true,
                };
                inside && o == (view.prediction()? >= *threshold)
            }
            RuleSpec::Table { accept } => {
                let idx = ((i.bits() as usize) << 1) | o as usize;
                *accept
                    .get(idx)
                    .ok_or_else(|| OiError::domain(format!("{i:?} outside rule table")))?
            }
            RuleSpec::Ell1 => {
                let v = view.prediction()?;
                let p = 1.0 - (crate::distinguisher::bit(o) - v).abs();
                use rand::Rng;
                coins.stream()?.gen::<f64>() < p
            }
            RuleSpec::Neighbor { mask } => {
                let j = Individual::new(i.bits() ^ mask, i.dim())?;
                o == (view.query(j)? >= 0.5)
            }
            RuleSpec::Noisy { inner, .. } => {
                let flip = coins.atom()? == 0;
                inner.decide(view, &mut Coins::Fixed)? ^ flip
            }
            RuleSpec::Complement { inner } => !inner.decide(view, coins)?,
        })
    }

    fn randomness(&self) -> Randomness {
        match self {
            RuleSpec::Ell1 => Randomness::ClosedForm,
            RuleSpec::Noisy { flip_one_in, .. } => Randomness::Finite(*flip_one_in),
            RuleSpec::Complement { inner } => inner.randomness(),
            _ => Randomness::Deterministic,
        }
    }

    fn min_level_rank(&self) -> u8 {
        match self {
            RuleSpec::LevelSet { .. } | RuleSpec::Threshold { .. } | RuleSpec::Ell1 => 1,
            RuleSpec::Neighbor { .. } => 2,
            RuleSpec::Noisy { inner, .. } | RuleSpec::Complement { inner } => {
                inner.min_level_rank()
            }
            _ => 0,
        }
    }

    fn closed_form(&self, view: &View<'_>) -> Result<Option<f64>> {
        match self {
            RuleSpec::Ell1 => {
                let v = view.prediction()?;
                Ok(Some(1.0 - (crate::distinguisher::bit(view.outcome) - v).abs()))
            }
            RuleSpec::Complement { inner } => Ok(inner.closed_form(view)?.map(|p| 1.0 - p)),
            _ => Ok(None),
        }
    }
}

/// One entry of a family file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguisherSpec {
    pub id: String,
    pub level: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u32>,
    pub cost: u64,
    pub rule: RuleSpec,
}

impl DistinguisherSpec {
    pub fn build(&self, dim: u32) -> Result<Distinguisher> {
        let level = AccessLevel::from_parts(&self.level, self.budget)?;
        Distinguisher::catalog(self.id.clone(), level, self.cost, self.rule.clone(), dim)
    }

    pub fn of(d: &Distinguisher) -> Result<Self> {
        let rule = d.spec().cloned().ok_or_else(|| {
            OiError::Unsupported(format!("`{}` is not a catalog distinguisher", d.id()))
        })?;
        Ok(DistinguisherSpec {
            id: d.id().to_string(),
            level: d.level().name().to_string(),
            budget: d.level().budget(),
            cost: d.cost(),
            rule,
        })
    }
}

pub fn parse_family(json: &str, dim: u32) -> Result<Vec<Distinguisher>> {
    let specs: Vec<DistinguisherSpec> = serde_json::from_str(json)?;
    specs.iter().map(|s| s.build(dim)).collect()
}

pub fn load_family(path: &Path, dim: u32) -> Result<Vec<Distinguisher>> {
    parse_family(&std::fs::read_to_string(path)?, dim)
}

pub fn family_to_json(family: &[Distinguisher]) -> Result<String> {
    let specs = family
        .iter()
        .map(DistinguisherSpec::of)
        .collect::<Result<Vec<_>>>()?;
    Ok(serde_json::to_string_pretty(&specs)?)
}

/// A named subpopulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subpopulation {
    pub id: String,
    pub membership: Membership,
}

impl Subpopulation {
    pub fn new(id: impl Into<String>, membership: Membership) -> Self {
        Subpopulation {
            id: id.into(),
            membership: membership.normalized(),
        }
    }

    pub fn contains(&self, i: Individual) -> Result<bool> {
        self.membership.contains(i)
    }
}

pub fn parse_subpopulations(json: &str, dim: u32) -> Result<Vec<Subpopulation>> {
    let subs: Vec<Subpopulation> = serde_json::from_str(json)?;
    subs.into_iter()
        .map(|s| {
            let s = Subpopulation::new(s.id, s.membership);
            s.membership.validate(dim)?;
            Ok(s)
        })
        .collect()
}
