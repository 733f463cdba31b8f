//! Nature files and CSV ingestion.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Nature, Population, SamplerKind};
use crate::error::{OiError, Result};
use crate::predictor::{Predictor, PredictorDocument};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationDocument {
    Uniform,
    Explicit { atoms: Vec<(u64, f64)> },
    Product { marginals: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NatureDocument {
    pub dimension: u32,
    pub population: PopulationDocument,
    pub truth: PredictorDocument,
}

impl NatureDocument {
    pub fn of(nature: &Nature) -> Result<Self> {
        let population = match nature.population() {
            Population::Explicit { atoms, .. } => PopulationDocument::Explicit {
                atoms: atoms.iter().map(|a| (a.individual.bits(), a.mass)).collect(),
            },
            Population::Sampler {
                kind: SamplerKind::Uniform,
                ..
            } => PopulationDocument::Uniform,
            Population::Sampler {
                kind: SamplerKind::Product(p),
                ..
            } => PopulationDocument::Product { marginals: p.clone() },
            Population::Sampler {
                kind: SamplerKind::Custom(_),
                ..
            } => return Err(OiError::Unsupported("serializing a custom sampler".into())),
        };
        Ok(NatureDocument {
            dimension: nature.dim(),
            population,
            truth: nature.truth().to_document()?,
        })
    }

    pub fn build(&self) -> Result<Nature> {
        let d = self.dimension;
        let population = match &self.population {
            PopulationDocument::Uniform if d <= crate::domain::MAX_EXHAUSTIVE_DIMENSION => {
                Population::uniform(d)?
            }
            PopulationDocument::Uniform => Population::sampler(d, SamplerKind::Uniform)?,
            PopulationDocument::Explicit { atoms } => Population::explicit(d, atoms.iter().copied())?,
            PopulationDocument::Product { marginals } => {
                Population::sampler(d, SamplerKind::Product(marginals.clone()))?
            }
        };
        let truth = Predictor::from_document(&self.truth)?;
        if truth.dim() != d {
            return Err(OiError::DimensionMismatch {
                expected: d,
                found: truth.dim(),
            });
        }
        Nature::new(population, truth)
    }
}

pub fn load_nature(path: &Path) -> Result<Nature> {
    let doc: NatureDocument = serde_json::from_reader(File::open(path)?)?;
    doc.build()
}

pub fn nature_to_json(nature: &Nature) -> Result<String> {
    Ok(serde_json::to_string_pretty(&NatureDocument::of(nature)?)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub dimension: u32,
    pub distinct: usize,
}

fn binary_cell(cell: &str, line: u64, column: usize) -> Result<bool> {
    match cell.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(OiError::Parse {
            line,
            message: format!("column {} holds `{other}`, expected 0 or 1", column + 1),
        }),
    }
}

/// Empirical nature from rows of `d` bit columns followed by an outcome column.
/// Column `k` becomes bit `k`. With `has_header` the first line is skipped.
pub fn ingest_samples(reader: impl std::io::Read, has_header: bool) -> Result<(Nature, IngestSummary)> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for record in csv.records() {
        let record = record.map_err(|e| OiError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(OiError::Parse {
                line,
                message: format!("{} columns, expected {w}", record.len()),
            });
        }
        if w < 2 || w - 1 > crate::domain::MAX_EXHAUSTIVE_DIMENSION as usize {
            return Err(OiError::Parse {
                line,
                message: format!(
                    "need between 1 and {} feature columns plus an outcome, got {w} columns",
                    crate::domain::MAX_EXHAUSTIVE_DIMENSION
                ),
            });
        }
        let mut bits = 0u64;
        for (k, cell) in record.iter().take(w - 1).enumerate() {
            bits |= (binary_cell(cell, line, k)? as u64) << k;
        }
        let outcome = binary_cell(&record[w - 1], line, w - 1)?;
        let entry = counts.entry(bits).or_default();
        entry.0 += 1;
        entry.1 += outcome as u64;
        rows += 1;
    }
    let width = width.ok_or(OiError::Parse {
        line: 0,
        message: "no data rows".into(),
    })?;
    let dim = (width - 1) as u32;
    let n = rows as f64;
    let population = Population::explicit(
        dim,
        counts.iter().map(|(&b, &(c, _))| (b, c as f64 / n)),
    )?;
    let truth = Predictor::from_table(
        dim,
        counts.iter().map(|(&b, &(c, ones))| (b, ones as f64 / c as f64)),
        0.5,
    )?;
    Ok((
        Nature::new(population, truth)?,
        IngestSummary {
            rows,
            dimension: dim,
            distinct: counts.len(),
        },
    ))
}

pub fn ingest_file(path: &Path, has_header: bool) -> Result<(Nature, IngestSummary)> {
    ingest_samples(File::open(path)?, has_header)
}
