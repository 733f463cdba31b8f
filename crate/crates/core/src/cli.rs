//! The `oi-lab` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::catalog::{family_to_json, load_family, parse_subpopulations, Subpopulation};
use crate::construct::{
    audit_family, construct_oi, update_bound, AuditMode, ConstructConfig, SelectionRule,
    TraceRecord,
};
use crate::distinguisher::{AdvantageMode, Subject};
use crate::error::{OiError, Result};
use crate::fairness::{
    audit_fairness, ma_to_oi_family, mc_to_oi_family, oi_to_ma_family, oi_to_mc_family,
    FairnessAudit, Grid,
};
use crate::hardness::{hardness_demo, DemoConfig};
use crate::ingest::{ingest_file, load_nature, nature_to_json};
use crate::pi::l1_closeness_bound_check;
use crate::predictor::{Evaluate, FnPredictor, Predictor};
use crate::report::{emit_report, Report};
use crate::size::SizeAccount;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "OI_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "oi-lab", version, about = "Outcome indistinguishability toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an OI predictor for a distinguisher family by auditing and updating.
    Construct(ConstructArgs),
    /// Multi-accuracy and multi-calibration audit of a predictor.
    Audit(AuditArgs),
    /// Check the l1 closeness implied by passing the l1 PI distinguisher.
    PiCheck(PiArgs),
    /// Oracle-access versus sample-access separation on a scalable ensemble.
    HardnessDemo(DemoArgs),
    /// Translate between subpopulation collections and distinguisher families.
    Reduce(ReduceArgs),
    /// Turn a CSV of bit columns and an outcome into a nature file.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AuditChoice {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SelectionChoice {
    First,
    Max,
}

#[derive(Debug, Args, Serialize)]
pub struct ConstructArgs {
    #[arg(long)]
    pub nature: PathBuf,
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub audit: AuditChoice,
    /// Samples per iteration in sampled mode.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "max")]
    pub selection: SelectionChoice,
    /// Grid half-width for predictor values; defaults to epsilon/4, 0 disables snapping.
    #[arg(long)]
    pub precision: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to save the constructed predictor.
    #[arg(long)]
    pub predictor_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub nature: PathBuf,
    #[arg(long)]
    pub predictor: PathBuf,
    #[arg(long)]
    pub subpops: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PiArgs {
    #[arg(long)]
    pub nature: PathBuf,
    #[arg(long)]
    pub predictor: PathBuf,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub epsilon: f64,
    /// Boolean reference predictor; defaults to nature's truth rounded at 1/2.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    #[arg(long, default_value = "linear")]
    pub ensemble: String,
    #[arg(long, default_value_t = 16)]
    pub n: u32,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// A number, or `auto` for 1/(100·levels).
    #[arg(long, default_value = "auto")]
    pub epsilon: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Coin draws per individual for sampled-coin distinguishers.
    #[arg(long, default_value_t = 4)]
    pub draws: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReduceKind {
    MaToOi,
    OiToMa,
    McToOi,
    OiToMc,
}

#[derive(Debug, Args, Serialize)]
pub struct ReduceArgs {
    #[arg(long, value_enum)]
    pub kind: ReduceKind,
    /// Input collection (for `ma-to-oi` and `mc-to-oi`).
    #[arg(long)]
    pub subpops: Option<PathBuf>,
    /// Input family (for `oi-to-ma` and `oi-to-mc`).
    #[arg(long)]
    pub family: Option<PathBuf>,
    #[arg(long)]
    pub dim: u32,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// The first line names the columns.
    #[arg(long)]
    pub header: bool,
    /// Nature file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional summary report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// How a finished command should exit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

pub fn exit_code(e: &OiError) -> i32 {
    match e {
        OiError::NonTermination { .. } | OiError::PropertyNotSatisfied(_) => EXIT_VERDICT,
        OiError::QueryBudgetExceeded { .. } | OiError::OracleInconsistent(_) => EXIT_INTERNAL,
        _ => EXIT_CONFIG,
    }
}

pub fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| OiError::config(format!("{THREADS_ENV}={raw} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| OiError::config(e.to_string()))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Construct(a) => construct(a),
        Command::Audit(a) => audit(a),
        Command::PiCheck(a) => pi_check(a),
        Command::HardnessDemo(a) => demo(a),
        Command::Reduce(a) => reduce(a),
        Command::Ingest(a) => ingest(a),
    }
}

fn outcome(pass: bool) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

#[derive(Serialize)]
struct AuditLine {
    id: String,
    signed: f64,
    radius: f64,
}

#[derive(Serialize)]
struct ConstructResult {
    terminated: bool,
    updates: usize,
    update_bound: usize,
    iteration_limit: usize,
    max_abs_advantage: f64,
    final_audit: Vec<AuditLine>,
    size: Option<SizeAccount>,
    trace: Vec<TraceRecord>,
}

fn construct(a: &ConstructArgs) -> Result<Outcome> {
    let nature = load_nature(&a.nature)?;
    let family = load_family(&a.family, nature.dim())?;
    let mut cfg = ConstructConfig::new(a.epsilon);
    cfg.audit = match a.audit {
        AuditChoice::Exact => AuditMode::Exact,
        AuditChoice::Sampled => AuditMode::Sampled {
            samples_per_iteration: a.samples.ok_or_else(|| {
                OiError::config("sampled audits need --samples")
            })?,
            seed: a.seed,
        },
    };
    cfg.selection = match a.selection {
        SelectionChoice::First => SelectionRule::FirstViolation,
        SelectionChoice::Max => SelectionRule::MaxAbsAdvantage,
    };
    cfg.precision = a.precision;
    cfg.max_iterations = a.max_iterations;
    let (p, trace, terminated) = match construct_oi(&nature, &family, &cfg) {
        Ok((p, trace)) => (Some(p), trace, true),
        Err(OiError::NonTermination { .. }) => (None, Default::default(), false),
        Err(e) => return Err(e),
    };
    let (final_audit, max_abs, size) = match &p {
        Some(p) => {
            let mode = match cfg.audit {
                AuditMode::Exact => AdvantageMode::Exact,
                AuditMode::Sampled {
                    samples_per_iteration,
                    seed,
                } => AdvantageMode::MonteCarlo {
                    samples: samples_per_iteration,
                    seed: crate::rng::derive(seed, u64::MAX),
                },
            };
            let advs = audit_family(&family, &nature, &Subject::new(p), mode)?;
            let max_abs = advs.iter().map(|x| x.magnitude()).fold(0.0, f64::max);
            let lines = family
                .iter()
                .zip(&advs)
                .map(|(d, x)| AuditLine {
                    id: d.id().to_string(),
                    signed: x.signed,
                    radius: x.radius,
                })
                .collect();
            if let Some(path) = &a.predictor_out {
                p.save(path)?;
            }
            (lines, max_abs, Some(p.size_account().clone()))
        }
        None => (Vec::new(), f64::NAN, None),
    };
    let pass = terminated && final_audit.iter().all(|l| l.signed.abs() <= a.epsilon + 2.0 * l.radius);
    let result = ConstructResult {
        terminated,
        updates: trace.updates(),
        update_bound: update_bound(a.epsilon),
        iteration_limit: cfg.iteration_limit(),
        max_abs_advantage: max_abs,
        final_audit,
        size,
        trace: trace.records,
    };
    emit_report(&Report::new("construct", Some(a.seed), a, pass, result), &a.out)?;
    Ok(outcome(pass))
}

fn audit(a: &AuditArgs) -> Result<Outcome> {
    let nature = load_nature(&a.nature)?;
    let p = Predictor::load(&a.predictor)?;
    if p.dim() != nature.dim() {
        return Err(OiError::DimensionMismatch {
            expected: nature.dim(),
            found: p.dim(),
        });
    }
    let subs: Vec<Subpopulation> = parse_subpopulations(&read(&a.subpops)?, nature.dim())?;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(OiError::config(format!("alpha {} outside (0,1)", a.alpha)));
    }
    let result: FairnessAudit = audit_fairness(&p, &subs, Grid::new(a.grid)?, a.alpha, &nature)?;
    let pass = result.ma_holds && result.mc_holds;
    emit_report(&Report::new("audit", None, a, pass, &result), &a.out)?;
    Ok(outcome(pass))
}

fn pi_check(a: &PiArgs) -> Result<Outcome> {
    let nature = load_nature(&a.nature)?;
    let p = Predictor::load(&a.predictor)?;
    let rounded_truth;
    let loaded;
    let reference: &dyn Evaluate = match &a.reference {
        Some(path) => {
            loaded = Predictor::load(path)?;
            &loaded
        }
        None => {
            let truth = nature.truth().clone();
            rounded_truth = FnPredictor::new(nature.dim(), move |i| {
                crate::hardness::round_bit(truth.evaluate(i).unwrap_or(0.0)) as f64
            });
            &rounded_truth
        }
    };
    let result = l1_closeness_bound_check(&nature, &p, a.epsilon, a.tau, reference)?;
    if !result.holds {
        return Err(OiError::PropertyNotSatisfied(format!(
            "distance {} exceeds {} although the predictor passes",
            result.distance, result.bound
        )));
    }
    emit_report(&Report::new("pi-check", None, a, result.passes, &result), &a.out)?;
    Ok(outcome(result.passes))
}

fn demo(a: &DemoArgs) -> Result<Outcome> {
    let mut cfg = DemoConfig::new(a.n, a.levels, a.seed);
    cfg.ensemble = a.ensemble.clone();
    cfg.draws = a.draws;
    cfg.epsilon = match a.epsilon.as_str() {
        "auto" => None,
        raw => Some(
            raw.parse()
                .map_err(|_| OiError::config(format!("epsilon `{raw}` is neither a number nor `auto`")))?,
        ),
    };
    let result = hardness_demo(&cfg)?;
    let truth_passes = result
        .candidates
        .iter()
        .find(|c| c.name == "truth")
        .is_some_and(|c| c.passes_oracle_family);
    let pass = result.separation && truth_passes;
    emit_report(&Report::new("hardness-demo", Some(a.seed), a, pass, &result), &a.out)?;
    Ok(outcome(pass))
}

#[derive(Serialize)]
struct ReduceResult {
    count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subpopulations: Option<Vec<Subpopulation>>,
}

fn reduce(a: &ReduceArgs) -> Result<Outcome> {
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| OiError::config(format!("this reduction needs --{flag}")))
    };
    let grid = || {
        a.grid
            .ok_or_else(|| OiError::config("this reduction needs --grid"))
            .and_then(Grid::new)
    };
    let result = match a.kind {
        ReduceKind::MaToOi | ReduceKind::McToOi => {
            let subs = parse_subpopulations(&read(&need(&a.subpops, "subpops")?)?, a.dim)?;
            let family = match a.kind {
                ReduceKind::MaToOi => ma_to_oi_family(&subs, a.dim)?,
                _ => mc_to_oi_family(&subs, grid()?, a.dim)?,
            };
            ReduceResult {
                count: family.len(),
                family: Some(serde_json::from_str(&family_to_json(&family)?)?),
                subpopulations: None,
            }
        }
        ReduceKind::OiToMa | ReduceKind::OiToMc => {
            let family = load_family(&need(&a.family, "family")?, a.dim)?;
            let subs = match a.kind {
                ReduceKind::OiToMa => oi_to_ma_family(&family)?,
                _ => oi_to_mc_family(&family, grid()?)?,
            };
            ReduceResult {
                count: subs.len(),
                family: None,
                subpopulations: Some(subs),
            }
        }
    };
    emit_report(&Report::new("reduce", None, a, true, &result), &a.out)?;
    Ok(Outcome::Pass)
}

fn ingest(a: &IngestArgs) -> Result<Outcome> {
    let (nature, summary) = ingest_file(&a.csv, a.header)?;
    std::fs::write(&a.out, nature_to_json(&nature)? + "\n")?;
    if let Some(path) = &a.report {
        emit_report(&Report::new("ingest", None, a, true, &summary), path)?;
    }
    Ok(Outcome::Pass)
}
