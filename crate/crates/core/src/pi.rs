//! Prediction indistinguishability: distinguishers that see nature's own
//! parameter `p*_i` in the prediction slot.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::RuleSpec;
use crate::distinguisher::{
    acceptance, decide_once, AccessLevel, Advantage, AdvantageMode, Distinguisher, Subject,
};
use crate::domain::{l1_distance, Nature};
use crate::error::{OiError, Result};
use crate::multi::{exact_acceptances, sampled_acceptances, MultiMode, MultiSampleDistinguisher, Stream};
use crate::predictor::{Evaluate, Predictor};
use crate::{rng, stats};

/// Slack on exact floating-point comparisons.
const EXACT_SLACK: f64 = 1e-9;

/// Number of random predictors the valid-model property is tested against.
pub const VALID_MODEL_TRIALS: usize = 20;

/// Accepts `(i, o, v)` with probability `1 − |o − v|`.
pub fn ell1(dim: u32) -> Result<Distinguisher> {
    Distinguisher::catalog("ell1", AccessLevel::SampleAccess, 1, RuleSpec::Ell1, dim)
}

/// `Pr[A(i, o*, p*_i) = 1] − Pr[A(i, o*, p̃_i) = 1]`, outcomes always from nature.
pub fn pi_advantage(
    d: &Distinguisher,
    nature: &Nature,
    p: &dyn Evaluate,
    mode: AdvantageMode,
) -> Result<Advantage> {
    if d.level().rank() > AccessLevel::SampleAccess.rank() {
        return Err(OiError::Unsupported(format!(
            "prediction indistinguishability for {} distinguishers",
            d.level()
        )));
    }
    if p.dimension() != nature.dim() {
        return Err(OiError::DimensionMismatch {
            expected: nature.dim(),
            found: p.dimension(),
        });
    }
    let subject = Subject::new(p);
    let (truth_side, model_side, radius) = match mode {
        AdvantageMode::Exact => {
            let atoms = nature.population().atoms()?;
            let parts: Vec<Result<(f64, f64)>> = atoms
                .par_iter()
                .map(|atom| {
                    let i = atom.individual;
                    let t = nature.truth().evaluate(i)?;
                    let v = p.evaluate(i)?;
                    let side = |known: f64| -> Result<f64> {
                        Ok(t * acceptance(d, i, true, &subject, Some(known))?
                            + (1.0 - t) * acceptance(d, i, false, &subject, Some(known))?)
                    };
                    Ok((atom.mass * side(t)?, atom.mass * side(v)?))
                })
                .collect();
            let (mut a, mut b) = (0.0, 0.0);
            for part in parts {
                let (x, y) = part?;
                a += x;
                b += y;
            }
            (a, b, 0.0)
        }
        AdvantageMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(OiError::config("Monte-Carlo advantage needs at least one sample"));
            }
            let parts: Vec<Result<(bool, bool)>> = (0..samples as u64)
                .into_par_iter()
                .map(|k| {
                    let mut rng = rng::stream(seed, k);
                    let i = nature.population().sample(&mut rng);
                    let t = nature.truth().evaluate(i)?;
                    let v = p.evaluate(i)?;
                    let o = rng.gen::<f64>() < t;
                    let coin_seed: u64 = rng.gen();
                    let a = decide_once(d, i, o, &subject, Some(t), &mut rng::seeded(coin_seed))?;
                    let b = decide_once(d, i, o, &subject, Some(v), &mut rng::seeded(coin_seed))?;
                    Ok((a, b))
                })
                .collect();
            let (mut a, mut b) = (0usize, 0usize);
            for part in parts {
                let (x, y) = part?;
                a += x as usize;
                b += y as usize;
            }
            (
                a as f64 / samples as f64,
                b as f64 / samples as f64,
                stats::advantage_radius(samples),
            )
        }
        AdvantageMode::MarginalCoins { .. } => {
            return Err(OiError::Unsupported(
                "marginal-coin estimation of prediction indistinguishability".into(),
            ))
        }
    };
    Ok(Advantage {
        signed: truth_side - model_side,
        radius,
        nature_acceptance: truth_side,
        model_acceptance: model_side,
    })
}

/// `E[p*·(p* − p̃) + (1 − p*)·(p̃ − p*)]`, the closed form of the `ell1` PI advantage.
pub fn ell1_closed_form(nature: &Nature, p: &dyn Evaluate) -> Result<f64> {
    nature.population().expectation(|i| {
        let t = nature.truth().evaluate(i)?;
        let v = p.evaluate(i)?;
        Ok(t * (t - v) + (1.0 - t) * (v - t))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct L1Closeness {
    pub epsilon: f64,
    pub tau: f64,
    /// `‖p* − f‖₁`.
    pub perturbation: f64,
    pub advantage: f64,
    pub distance: f64,
    /// `4τ + ε`.
    pub bound: f64,
    /// Whether the predictor passes `ell1` at `ε`.
    pub passes: bool,
    /// `passes ⇒ distance ≤ bound`.
    pub holds: bool,
}

/// Checks that passing `ell1` at `ε` forces `‖p* − p̃‖₁ ≤ 4τ + ε` when `p* = f + δ`, `‖δ‖₁ ≤ τ`.
pub fn l1_closeness_bound_check(
    nature: &Nature,
    p: &dyn Evaluate,
    epsilon: f64,
    tau: f64,
    reference: &dyn Evaluate,
) -> Result<L1Closeness> {
    if !(epsilon >= 0.0 && tau >= 0.0) {
        return Err(OiError::config("epsilon and tau must be non-negative"));
    }
    for atom in nature.population().atoms()? {
        let f = reference.evaluate(atom.individual)?;
        if f != 0.0 && f != 1.0 {
            return Err(OiError::config(format!(
                "reference value {f} at {:?} is not Boolean",
                atom.individual
            )));
        }
    }
    let perturbation = l1_distance(nature.truth(), reference, nature.population(), None)?.value;
    if perturbation > tau + EXACT_SLACK {
        return Err(OiError::HypothesisViolated(format!(
            "‖p* − f‖₁ = {perturbation} exceeds tau = {tau}"
        )));
    }
    let advantage = pi_advantage(&ell1(nature.dim())?, nature, p, AdvantageMode::Exact)?.signed;
    let distance = l1_distance(nature.truth(), p, nature.population(), None)?.value;
    let bound = 4.0 * tau + epsilon;
    let passes = advantage.abs() <= epsilon;
    Ok(L1Closeness {
        epsilon,
        tau,
        perturbation,
        advantage,
        distance,
        bound,
        passes,
        holds: !passes || distance <= bound + EXACT_SLACK,
    })
}

/// `q_A`: acceptance when outcomes and predictions both come from nature.
pub fn estimate_acceptance_level(
    a: &MultiSampleDistinguisher,
    nature: &Nature,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let stream = [Stream {
        outcomes: nature.truth(),
        predictions: nature.truth(),
    }];
    let subject = Subject::new(nature.truth());
    Ok(sampled_acceptances(a, nature, &subject, &stream, samples, seed)?[0])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidModelReport {
    pub id: String,
    pub acceptance_level: f64,
    /// Largest `|Pr_{D(r)}[A(·, r) = 1] − q_A|` over the tested predictors `r`.
    pub worst_deviation: f64,
    pub oi_advantage: f64,
    pub pi_advantage: f64,
    pub radius: f64,
    pub oi_implies_pi: bool,
    pub pi_implies_oi: bool,
}

fn random_table(nature: &Nature, seed: u64) -> Result<Predictor> {
    let mut rng = rng::seeded(seed);
    let values = nature
        .population()
        .atoms()?
        .iter()
        .map(|a| (a.individual.bits(), rng.gen::<f64>()))
        .collect::<Vec<_>>();
    Predictor::from_table(nature.dim(), values, 0.5)
}

fn acceptances(
    a: &MultiSampleDistinguisher,
    nature: &Nature,
    subject: &Subject<'_>,
    streams: &[Stream<'_>],
    mode: MultiMode,
) -> Result<(Vec<f64>, f64)> {
    match mode {
        MultiMode::Exact => Ok((exact_acceptances(a, nature, subject, streams)?, 0.0)),
        MultiMode::MonteCarlo { samples, seed } => Ok((
            sampled_acceptances(a, nature, subject, streams, samples, seed)?,
            stats::hoeffding_radius(samples, 1.0),
        )),
    }
}

/// Tests the valid-model property of every member against [`VALID_MODEL_TRIALS`]
/// random predictors plus `p*` and `p̃`, then checks that OI at `ε` gives PI at
/// `3ε` and PI at `ε` gives OI at `3ε` for `p̃`.
pub fn valid_model_equivalence_check(
    family: &[(MultiSampleDistinguisher, f64)],
    epsilon: f64,
    nature: &Nature,
    p: &dyn Evaluate,
    mode: MultiMode,
    seed: u64,
) -> Result<Vec<ValidModelReport>> {
    let trials = (0..VALID_MODEL_TRIALS as u64)
        .map(|k| random_table(nature, rng::derive(seed, k)))
        .collect::<Result<Vec<_>>>()?;
    let subject = Subject::new(p);
    let mut reports = Vec::with_capacity(family.len());
    for (a, q) in family {
        if a.level() != AccessLevel::SampleAccess {
            return Err(OiError::config(format!(
                "`{}` must be a sample-access distinguisher",
                a.id()
            )));
        }
        let mut streams: Vec<Stream<'_>> = trials
            .iter()
            .map(|r| Stream {
                outcomes: r,
                predictions: r,
            })
            .collect();
        streams.push(Stream {
            outcomes: nature.truth(),
            predictions: nature.truth(),
        });
        streams.push(Stream {
            outcomes: p,
            predictions: p,
        });
        streams.push(Stream {
            outcomes: nature.truth(),
            predictions: p,
        });
        let (acc, radius) = acceptances(a, nature, &subject, &streams, mode)?;
        let own = &acc[..acc.len() - 1];
        let worst = own.iter().map(|x| (x - q).abs()).fold(0.0, f64::max);
        if worst > epsilon + radius + EXACT_SLACK {
            return Err(OiError::PropertyNotSatisfied(format!(
                "`{}` deviates from its acceptance level {q} by {worst} > {epsilon}",
                a.id()
            )));
        }
        let (truth, model, mixed) = (own[own.len() - 2], own[own.len() - 1], acc[acc.len() - 1]);
        let oi = mixed - model;
        let pi = truth - mixed;
        let slack = 4.0 * radius + EXACT_SLACK;
        reports.push(ValidModelReport {
            id: a.id().to_string(),
            acceptance_level: *q,
            worst_deviation: worst,
            oi_advantage: oi,
            pi_advantage: pi,
            radius,
            oi_implies_pi: oi.abs() > epsilon + radius || pi.abs() <= 3.0 * epsilon + slack,
            pi_implies_oi: pi.abs() > epsilon + radius || oi.abs() <= 3.0 * epsilon + slack,
        });
    }
    Ok(reports)
}
