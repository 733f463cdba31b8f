//! Iterated audit-and-update construction of outcome-indistinguishable predictors.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distinguisher::{self, advantage, AccessLevel, Advantage, AdvantageMode, Distinguisher, Subject};
use crate::domain::Nature;
use crate::error::{OiError, Result};
use crate::predictor::{Description, Evaluate, Predictor};
use crate::size::SizeAccount;
use crate::{rng, stats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    FirstViolation,
    MaxAbsAdvantage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AuditMode {
    Exact,
    /// Fresh `samples_per_iteration` coupled samples every iteration.
    Sampled { samples_per_iteration: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct ConstructConfig {
    pub epsilon: f64,
    pub max_iterations: Option<usize>,
    pub audit: AuditMode,
    pub selection: SelectionRule,
    /// Grid half-width; `None` means `ε/4`, `Some(0.0)` disables snapping.
    pub precision: Option<f64>,
    pub warm_start: Option<Predictor>,
    /// Declared cost of one arithmetic update.
    pub arithmetic_cost: u64,
    /// Size bound of the starting predictor; defaults to the largest family cost.
    pub initial_size: Option<f64>,
}

impl ConstructConfig {
    pub fn new(epsilon: f64) -> Self {
        ConstructConfig {
            epsilon,
            max_iterations: None,
            audit: AuditMode::Exact,
            selection: SelectionRule::MaxAbsAdvantage,
            precision: None,
            warm_start: None,
            arithmetic_cost: 1,
            initial_size: None,
        }
    }

    pub fn exact_updates(mut self) -> Self {
        self.precision = Some(0.0);
        self
    }

    pub fn precision(&self) -> f64 {
        self.precision.unwrap_or(self.epsilon / 4.0)
    }

    fn validate(&self, family_size: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(OiError::config(format!("epsilon {} outside (0,1)", self.epsilon)));
        }
        if let AuditMode::Sampled {
            samples_per_iteration,
            ..
        } = self.audit
        {
            let needed = required_samples(family_size, self.epsilon);
            if samples_per_iteration < needed {
                return Err(OiError::config(format!(
                    "sampled audit needs at least {needed} samples per iteration, got {samples_per_iteration}"
                )));
            }
        }
        Ok(())
    }

    /// Audit rounds allowed before giving up.
    pub fn iteration_limit(&self) -> usize {
        if let Some(m) = self.max_iterations {
            return m;
        }
        let bound = update_bound(self.epsilon);
        let snapped = self.precision() > 0.0;
        let sampled = matches!(self.audit, AuditMode::Sampled { .. });
        if snapped || sampled {
            2 * bound + 1
        } else {
            bound + 1
        }
    }
}

/// `⌈4/(3ε²)⌉`, the most updates an exact run can make.
pub fn update_bound(epsilon: f64) -> usize {
    // guard against 4/(3ε²) landing a hair above an integer through rounding
    let raw = 4.0 / (3.0 * epsilon * epsilon);
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// `⌈ln(2|𝒜|/0.05)·8/ε²⌉` samples per sampled audit.
pub fn required_samples(family_size: usize, epsilon: f64) -> usize {
    ((2.0 * family_size.max(1) as f64 / stats::CONFIDENCE_DELTA).ln() * 8.0 / (epsilon * epsilon))
        .ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub chosen: Option<String>,
    pub signed_advantage: Option<f64>,
    pub max_abs_advantage: f64,
    pub radius: f64,
    pub potential: Option<f64>,
    pub size_bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstructTrace {
    pub records: Vec<TraceRecord>,
}

impl ConstructTrace {
    pub fn updates(&self) -> usize {
        self.records.iter().filter(|r| r.chosen.is_some()).count()
    }

    /// Drops in potential across consecutive records, where both are known.
    pub fn potential_drops(&self) -> Vec<f64> {
        self.records
            .windows(2)
            .filter_map(|w| Some(w[0].potential? - w[1].potential?))
            .collect()
    }

    /// Rebuilds the predictor by replaying the chosen updates from `start`.
    pub fn replay(&self, start: &Predictor, family: &[Distinguisher]) -> Result<Predictor> {
        let mut p = start.clone();
        for r in &self.records {
            if let (Some(id), Some(delta)) = (&r.chosen, r.signed_advantage) {
                let d = family
                    .iter()
                    .find(|d| d.id() == id)
                    .ok_or_else(|| OiError::config(format!("trace names unknown `{id}`")))?;
                p = update_step(&p, d, delta)?;
            }
        }
        Ok(p)
    }
}

/// `p ← π_[0,1](p + (Δ/2)·δ_A)`, snapped to `p`'s grid.
pub fn update_step(p: &Predictor, a: &Distinguisher, signed_advantage: f64) -> Result<Predictor> {
    p.push_term(signed_advantage / 2.0, a.clone())
}

/// `φ(p) = E[(p* − p)²]`.
pub fn potential(p: &dyn Evaluate, nature: &Nature) -> Result<f64> {
    nature.population().expectation(|i| {
        let gap = nature.truth().evaluate(i)? - p.evaluate(i)?;
        Ok(gap * gap)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Acceptance-difference form against the correlation form `E[(p* − p)·δ_A]`.
pub fn advantage_identity_check(
    p: &dyn Evaluate,
    a: &Distinguisher,
    nature: &Nature,
) -> Result<IdentityCheck> {
    a.require_deterministic()?;
    let subject = Subject::new(p);
    let lhs = advantage(a, nature, &subject, AdvantageMode::Exact)?.signed;
    let rhs = nature.population().expectation(|i| {
        let v = p.evaluate(i)?;
        Ok((nature.truth().evaluate(i)? - v) * distinguisher::delta(a, i, &subject, Some(v))?)
    })?;
    Ok(IdentityCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Audits every member of `family` against `p`, in family order.
pub fn audit_family(
    family: &[Distinguisher],
    nature: &Nature,
    subject: &Subject<'_>,
    mode: AdvantageMode,
) -> Result<Vec<Advantage>> {
    family
        .par_iter()
        .map(|d| advantage(d, nature, subject, mode))
        .collect()
}

fn select(advantages: &[Advantage], epsilon: f64, rule: SelectionRule) -> Option<usize> {
    let violating = advantages
        .iter()
        .enumerate()
        .filter(|(_, a)| a.magnitude() > epsilon);
    match rule {
        SelectionRule::FirstViolation => violating.map(|(k, _)| k).next(),
        SelectionRule::MaxAbsAdvantage => violating
            .fold(None, |best: Option<(usize, f64)>, (k, a)| match best {
                Some((_, m)) if m >= a.magnitude() => best,
                _ => Some((k, a.magnitude())),
            })
            .map(|(k, _)| k),
    }
}

pub fn construct_oi(
    nature: &Nature,
    family: &[Distinguisher],
    cfg: &ConstructConfig,
) -> Result<(Predictor, ConstructTrace)> {
    if family.is_empty() {
        return Err(OiError::config("construction needs a nonempty family"));
    }
    cfg.validate(family.len())?;
    let exact = matches!(cfg.audit, AuditMode::Exact);
    if exact {
        nature.population().atoms()?;
        if let Some(d) = family.iter().find(|d| !d.is_exact()) {
            return Err(OiError::config(format!(
                "`{}` cannot be audited exactly: its randomness is not marginalizable",
                d.id()
            )));
        }
    }
    let dim = nature.dim();
    let initial_size = cfg
        .initial_size
        .unwrap_or_else(|| family.iter().map(|d| d.cost()).max().unwrap_or(1) as f64);
    let start = match &cfg.warm_start {
        Some(p) => {
            if p.term_count() > 0 {
                return Err(OiError::config("warm start must not carry update terms"));
            }
            p.clone()
        }
        None => Predictor::constant(dim, 0.5, 0.0)?,
    };
    if start.dim() != dim {
        return Err(OiError::DimensionMismatch {
            expected: dim,
            found: start.dim(),
        });
    }
    let mut p = start
        .with_precision(cfg.precision())?
        .with_size_account(SizeAccount::new(initial_size, cfg.arithmetic_cost));
    let wants_code = family.iter().any(|d| d.level() == AccessLevel::CodeAccess);
    let limit = cfg.iteration_limit();
    let mut trace = ConstructTrace::default();
    let truth_known = nature.population().is_explicit();

    for t in 0.. {
        let description: Option<Arc<Description>> = if wants_code {
            Some(Arc::new(Description::of(&p)?))
        } else {
            None
        };
        let subject = Subject::versioned(&p, t as u64);
        let mode = match cfg.audit {
            AuditMode::Exact => AdvantageMode::Exact,
            AuditMode::Sampled {
                samples_per_iteration,
                seed,
            } => AdvantageMode::MonteCarlo {
                samples: samples_per_iteration,
                seed: rng::derive(seed, t as u64),
            },
        };
        let advantages = audit_family(family, nature, &subject, mode)?;
        let chosen = select(&advantages, cfg.epsilon, cfg.selection);
        let max_abs = advantages.iter().map(|a| a.magnitude()).fold(0.0, f64::max);
        let radius = advantages.iter().map(|a| a.radius).fold(0.0, f64::max);
        trace.records.push(TraceRecord {
            t,
            chosen: chosen.map(|k| family[k].id().to_string()),
            signed_advantage: chosen.map(|k| advantages[k].signed),
            max_abs_advantage: max_abs,
            radius,
            potential: if truth_known {
                Some(potential(&p, nature)?)
            } else {
                None
            },
            size_bound: p.size_account().bound,
        });
        let Some(k) = chosen else {
            return Ok((p, trace));
        };
        if t + 1 >= limit {
            return Err(OiError::NonTermination { iterations: limit });
        }
        p = p.push_term_with(advantages[k].signed / 2.0, family[k].clone(), description)?;
    }
    unreachable!("the loop returns")
}
