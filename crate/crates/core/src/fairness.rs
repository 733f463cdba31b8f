//! Multi-accuracy and multi-calibration violations, and the translations
//! between those notions and outcome indistinguishability.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{Membership, RuleSpec, Subpopulation};
use crate::distinguisher::{AccessLevel, Coins, Distinguisher, View};
use crate::domain::{Individual, Nature, Population};
use crate::error::{OiError, Result};
use crate::predictor::{Evaluate, Predictor};

/// Tolerance when checking that a value lies on the grid.
const GRID_TOLERANCE: f64 = 1e-12;

/// The bin centers `{(2k−1)/2m : k = 1..m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Grid {
    m: usize,
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(OiError::config("grid needs at least one bin"));
        }
        Ok(Grid { m })
    }

    pub fn bins(&self) -> usize {
        self.m
    }

    pub fn value(&self, k: usize) -> f64 {
        (2 * k + 1) as f64 / (2 * self.m) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.m).map(|k| self.value(k)).collect()
    }

    /// Bin holding `v`: `min(⌊v·m⌋, m−1)`.
    pub fn index(&self, v: f64) -> usize {
        ((v * self.m as f64).floor().max(0.0) as usize).min(self.m - 1)
    }

    pub fn round(&self, v: f64) -> f64 {
        self.value(self.index(v))
    }

    /// Index of a value that must already lie on the grid.
    pub fn index_on_grid(&self, v: f64) -> Result<usize> {
        let k = self.index(v);
        if (self.value(k) - v).abs() > GRID_TOLERANCE {
            return Err(OiError::domain(format!("{v} is not a value of the {}-bin grid", self.m)));
        }
        Ok(k)
    }

    pub fn half_width(&self) -> f64 {
        1.0 / (2 * self.m) as f64
    }
}

/// `p̄ = u(p)`, evaluated lazily.
pub struct Rounded<'a> {
    pub inner: &'a dyn Evaluate,
    pub grid: Grid,
}

impl Evaluate for Rounded<'_> {
    fn dimension(&self) -> u32 {
        self.inner.dimension()
    }

    fn evaluate(&self, i: Individual) -> Result<f64> {
        Ok(self.grid.round(self.inner.evaluate(i)?))
    }
}

/// Materializes `p̄` as a table over an explicit population.
pub fn round_predictor(p: &dyn Evaluate, grid: Grid, population: &Population) -> Result<Predictor> {
    let values = population
        .atoms()?
        .iter()
        .map(|a| Ok((a.individual.bits(), grid.round(p.evaluate(a.individual)?))))
        .collect::<Result<Vec<_>>>()?;
    Predictor::from_table(p.dimension(), values, grid.round(0.5))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaViolation {
    pub subpopulation: String,
    pub mass: f64,
    /// `E[p* − p | S]`.
    pub signed: f64,
    pub violation: f64,
}

/// `∇_S(p) = |E[p* | S] − E[p | S]|`.
pub fn ma_violation(p: &dyn Evaluate, s: &Subpopulation, nature: &Nature) -> Result<MaViolation> {
    let (mass, gap) = masked_gap(p, nature, |i| s.contains(i))?;
    if mass <= 0.0 {
        return Err(OiError::EmptySubpopulation(s.id.clone()));
    }
    Ok(MaViolation {
        subpopulation: s.id.clone(),
        mass,
        signed: gap / mass,
        violation: (gap / mass).abs(),
    })
}

/// `(Pr[S], E[(p* − p)·1_S])`.
fn masked_gap(
    p: &dyn Evaluate,
    nature: &Nature,
    member: impl Fn(Individual) -> Result<bool> + Sync,
) -> Result<(f64, f64)> {
    let atoms = nature.population().atoms()?;
    let parts: Vec<Result<(f64, f64)>> = atoms
        .par_iter()
        .map(|a| {
            if !member(a.individual)? {
                return Ok((0.0, 0.0));
            }
            let gap = nature.truth().evaluate(a.individual)? - p.evaluate(a.individual)?;
            Ok((a.mass, a.mass * gap))
        })
        .collect();
    let (mut mass, mut gap) = (0.0, 0.0);
    for part in parts {
        let (m, g) = part?;
        mass += m;
        gap += g;
    }
    Ok((mass, gap))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McCell {
    pub subpopulation: String,
    pub value: f64,
    /// `Pr[p̄ = v ∧ i ∈ S]`.
    pub level_mass: f64,
    /// `Pr[p̄ = v | i ∈ S]`.
    pub conditional_mass: f64,
    /// `E[p* | p̄ = v ∧ i ∈ S] − v`, zero on empty cells.
    pub signed: f64,
    pub violation: f64,
    pub exempt: bool,
}

/// Every `(S, v)` cell of `p̄` for one subpopulation, in grid order.
pub fn mc_cells(
    rounded: &dyn Evaluate,
    s: &Subpopulation,
    grid: Grid,
    alpha: f64,
    nature: &Nature,
) -> Result<Vec<McCell>> {
    let atoms = nature.population().atoms()?;
    let m = grid.bins();
    let mut level_mass = vec![0.0; m];
    let mut truth_mass = vec![0.0; m];
    for a in atoms {
        if !s.contains(a.individual)? {
            continue;
        }
        let k = grid.index_on_grid(rounded.evaluate(a.individual)?)?;
        level_mass[k] += a.mass;
        truth_mass[k] += a.mass * nature.truth().evaluate(a.individual)?;
    }
    let s_mass: f64 = level_mass.iter().sum();
    if s_mass <= 0.0 {
        return Err(OiError::EmptySubpopulation(s.id.clone()));
    }
    let support = level_mass.iter().filter(|&&w| w > 0.0).count();
    let threshold = alpha / support as f64;
    Ok((0..m)
        .map(|k| {
            let v = grid.value(k);
            let conditional = level_mass[k] / s_mass;
            let signed = if level_mass[k] > 0.0 {
                truth_mass[k] / level_mass[k] - v
            } else {
                0.0
            };
            let exempt = conditional < threshold;
            assert!(
                level_mass[k] > 0.0 || exempt,
                "an empty level set is always exempt"
            );
            McCell {
                subpopulation: s.id.clone(),
                value: v,
                level_mass: level_mass[k],
                conditional_mass: conditional,
                signed,
                violation: signed.abs(),
                exempt,
            }
        })
        .collect())
}

/// `(∇_{S,v}, Pr[p̄ = v ∧ S], exempt)` for one cell.
pub fn mc_violation(
    rounded: &dyn Evaluate,
    s: &Subpopulation,
    v: f64,
    grid: Grid,
    alpha: f64,
    nature: &Nature,
) -> Result<McCell> {
    let k = grid.index_on_grid(v)?;
    Ok(mc_cells(rounded, s, grid, alpha, nature)?.swap_remove(k))
}

/// `γ_C`: the smallest subpopulation mass.
pub fn min_mass(collection: &[Subpopulation], population: &Population) -> Result<f64> {
    let mut gamma = f64::INFINITY;
    for s in collection {
        gamma = gamma.min(population.mass_where(|i| s.contains(i))?);
    }
    Ok(gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairnessAudit {
    pub alpha: f64,
    pub grid: usize,
    pub multi_accuracy: Vec<MaViolation>,
    pub cells: Vec<McCell>,
    pub ma_holds: bool,
    pub mc_holds: bool,
    pub gamma: f64,
}

/// MA against `p` and MC against its grid rounding, over every subpopulation.
pub fn audit_fairness(
    p: &dyn Evaluate,
    collection: &[Subpopulation],
    grid: Grid,
    alpha: f64,
    nature: &Nature,
) -> Result<FairnessAudit> {
    let rounded = Rounded { inner: p, grid };
    let mut ma = Vec::with_capacity(collection.len());
    let mut cells = Vec::with_capacity(collection.len() * grid.bins());
    for s in collection {
        ma.push(ma_violation(p, s, nature)?);
        cells.extend(mc_cells(&rounded, s, grid, alpha, nature)?);
    }
    Ok(FairnessAudit {
        alpha,
        grid: grid.bins(),
        ma_holds: ma.iter().all(|v| v.violation <= alpha),
        mc_holds: cells.iter().all(|c| c.exempt || c.violation <= alpha),
        gamma: min_mass(collection, nature.population())?,
        multi_accuracy: ma,
        cells,
    })
}

/// `A_S(i, b) = 1[i ∈ S ∧ b = 1]` for every `S`.
pub fn ma_to_oi_family(collection: &[Subpopulation], dim: u32) -> Result<Vec<Distinguisher>> {
    collection
        .iter()
        .map(|s| {
            Distinguisher::catalog(
                format!("A[{}]", s.id),
                AccessLevel::NoAccess,
                1,
                RuleSpec::Indicator {
                    set: s.membership.clone(),
                },
                dim,
            )
        })
        .collect()
}

fn acceptance_set(a: &Distinguisher, outcome: bool, prediction: Option<f64>) -> Membership {
    match a.spec() {
        Some(spec) => Membership::Accepts {
            rule: Box::new(spec.clone()),
            outcome,
            prediction,
        },
        None => {
            let rule = a.rule().clone();
            Membership::Custom(Arc::new(move |i| {
                let view = match prediction {
                    Some(v) => View::with_value(i, outcome, v),
                    None => View::blind(i, outcome),
                };
                rule.decide(&view, &mut Coins::Fixed)
            }))
        }
    }
}

/// `S_{A,b} = {i : A(i, b) = 1}` for `b ∈ {0, 1}`, two sets per distinguisher.
pub fn oi_to_ma_family(family: &[Distinguisher]) -> Result<Vec<Subpopulation>> {
    let mut out = Vec::with_capacity(2 * family.len());
    for a in family {
        a.require_deterministic()?;
        if a.level() != AccessLevel::NoAccess {
            return Err(OiError::config(format!(
                "`{}` must be a no-access distinguisher, found {}",
                a.id(),
                a.level()
            )));
        }
        for b in [false, true] {
            out.push(Subpopulation::new(
                format!("S[{},{}]", a.id(), b as u8),
                acceptance_set(a, b, None),
            ));
        }
    }
    Ok(out)
}

/// `A_{u,S}(i, b, v) = 1[i ∈ S ∧ b = 1 ∧ |u − v| ≤ 1/2m]`, `|C|·m` distinguishers.
pub fn mc_to_oi_family(
    collection: &[Subpopulation],
    grid: Grid,
    dim: u32,
) -> Result<Vec<Distinguisher>> {
    let mut out = Vec::with_capacity(collection.len() * grid.bins());
    for s in collection {
        for u in grid.values() {
            out.push(Distinguisher::catalog(
                format!("A[{},{u}]", s.id),
                AccessLevel::SampleAccess,
                1,
                RuleSpec::LevelSet {
                    set: s.membership.clone(),
                    center: u,
                    half_width: grid.half_width(),
                },
                dim,
            )?);
        }
    }
    Ok(out)
}

/// `S_{A,b,u} = {i : A(i, b, u) = 1}`, `2m` sets per distinguisher.
pub fn oi_to_mc_family(family: &[Distinguisher], grid: Grid) -> Result<Vec<Subpopulation>> {
    let mut out = Vec::with_capacity(2 * grid.bins() * family.len());
    for a in family {
        a.require_deterministic()?;
        if a.level().rank() > AccessLevel::SampleAccess.rank() {
            return Err(OiError::config(format!(
                "`{}` must have at most sample access, found {}",
                a.id(),
                a.level()
            )));
        }
        for b in [false, true] {
            for u in grid.values() {
                out.push(Subpopulation::new(
                    format!("S[{},{},{u}]", a.id(), b as u8),
                    acceptance_set(a, b, Some(u)),
                ));
            }
        }
    }
    Ok(out)
}

/// `Pr[S]·∇_S(p)` in signed form, zero for empty `S`.
pub fn weighted_ma_gap(p: &dyn Evaluate, s: &Subpopulation, nature: &Nature) -> Result<f64> {
    Ok(masked_gap(p, nature, |i| s.contains(i))?.1)
}

/// `∇_S(p)`, treating an empty `S` as contributing nothing.
pub fn ma_violation_or_zero(p: &dyn Evaluate, s: &Subpopulation, nature: &Nature) -> Result<f64> {
    match ma_violation(p, s, nature) {
        Ok(v) => Ok(v.violation),
        Err(OiError::EmptySubpopulation(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}
