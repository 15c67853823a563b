//! Concept measure tables (`sample_id,concept,value` CSV) and sample manifests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub sample_id: String,
    pub concept: String,
    pub value: f64,
}

/// A validated set of concept measures: `(sample_id, concept)` unique, values finite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasureTable {
    rows: Vec<MeasureRow>,
    index: HashMap<(String, String), usize>,
}

impl MeasureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MeasureRow) -> Result<()> {
        if !row.value.is_finite() {
            return Err(Error::Measures(format!(
                "non-finite value for ({}, {})",
                row.sample_id, row.concept
            )));
        }
        let key = (row.sample_id.clone(), row.concept.clone());
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateMeasure {
                sample_id: row.sample_id,
                concept: row.concept,
            });
        }
        self.index.insert(key, self.rows.len());
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[MeasureRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, sample_id: &str, concept: &str) -> Option<f64> {
        self.index
            .get(&(sample_id.to_string(), concept.to_string()))
            .map(|&i| self.rows[i].value)
    }

    /// Concept names in order of first appearance.
    pub fn concepts(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.concept.as_str()))
            .map(|r| r.concept.clone())
            .collect()
    }

    /// Groups rows by concept, preserving file order within each group.
    pub fn by_concept(&self) -> BTreeMap<String, ConceptMeasures> {
        let mut out: BTreeMap<String, ConceptMeasures> = BTreeMap::new();
        for r in &self.rows {
            let entry = out
                .entry(r.concept.clone())
                .or_insert_with(|| ConceptMeasures {
                    concept_name: r.concept.clone(),
                    sample_ids: Vec::new(),
                    values: Vec::new(),
                });
            entry.sample_ids.push(r.sample_id.clone());
            entry.values.push(r.value);
        }
        out
    }

    /// Extracts one concept's values in the order given by `manifest`.
    pub fn aligned(&self, concept: &str, manifest: &[String]) -> Result<ConceptMeasures> {
        let values = manifest
            .iter()
            .map(|id| {
                self.get(id, concept).ok_or_else(|| {
                    Error::Misaligned(format!("no measure for sample '{id}', concept '{concept}'"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConceptMeasures {
            concept_name: concept.to_string(),
            sample_ids: manifest.to_vec(),
            values,
        })
    }
}

/// Values `c_j` of one concept, paired with their sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMeasures {
    pub concept_name: String,
    pub sample_ids: Vec<String>,
    pub values: Vec<f64>,
}

impl ConceptMeasures {
    pub fn new(concept_name: impl Into<String>, sample_ids: Vec<String>, values: Vec<f64>) -> Self {
        ConceptMeasures {
            concept_name: concept_name.into(),
            sample_ids,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps only the entries at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ConceptMeasures {
        ConceptMeasures {
            concept_name: self.concept_name.clone(),
            sample_ids: indices
                .iter()
                .map(|&i| self.sample_ids[i].clone())
                .collect(),
            values: indices.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

pub fn read_measures(path: impl AsRef<Path>) -> Result<MeasureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_measures(file)
}

pub fn parse_measures<R: Read>(reader: R) -> Result<MeasureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Measures(e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Measures(format!("missing column '{name}'")))
    };
    let (id_col, concept_col, value_col) =
        (column("sample_id")?, column("concept")?, column("value")?);

    let mut table = MeasureTable::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Measures(e.to_string()))?;
        let field = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| Error::Measures(format!("row {}: missing field", line + 2)))
        };
        let raw = field(value_col)?;
        let value: f64 = raw
            .parse()
            .map_err(|_| Error::Measures(format!("row {}: non-numeric value '{raw}'", line + 2)))?;
        table.push(MeasureRow {
            sample_id: field(id_col)?.to_string(),
            concept: field(concept_col)?.to_string(),
            value,
        })?;
    }
    Ok(table)
}

pub fn write_measures(table: &MeasureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_measures_to(table, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_measures_to<W: Write>(table: &MeasureTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Measures(e.to_string());
    w.write_record(["sample_id", "concept", "value"])
        .map_err(to_err)?;
    for r in table.rows() {
        // `{:?}` on f64 is the shortest representation that round-trips
        w.write_record([
            r.sample_id.as_str(),
            r.concept.as_str(),
            &format!("{:?}", r.value),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Reads an ordered sample manifest: one id per line, blank lines ignored.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::Misaligned(format!(
                "duplicate sample id '{id}' in manifest {}",
                path.display()
            )));
        }
        ids.push(id.to_string());
    }
    Ok(ids)
}

pub fn write_manifest(ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = ids.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
