//! Input files, their validation, and the in-memory reference corpus.
//!
//! Five files make up a deployment: `model.json`, `factors.json`,
//! `cases.csv`, `outcomes.csv` and `events.csv`. Loading is all-or-nothing:
//! every problem found is collected into a [`ValidationReport`] and any
//! error-severity finding aborts the load.

mod demo;
mod files;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CaseRecord, Model};

pub use demo::{generate_demo_corpus, write_demo_corpus, DemoCorpus, MIN_DEMO_CASES};
pub use files::{
    load_all, load_corpus, load_metas_file, load_model_file, model_to_json, parse_cases_csv,
    parse_events_csv, parse_metas_json, parse_model_json, parse_outcomes_csv, Corpus, LoadedData,
};

/// Background population of past cases, with values laid out in model
/// factor order for fast scans.
#[derive(Debug, Clone)]
pub struct ReferenceDataset {
    factor_names: Vec<String>,
    cases: Vec<CaseRecord>,
    rows: Vec<Vec<f64>>,
    by_id: HashMap<String, usize>,
}

impl ReferenceDataset {
    pub fn new(model: &Model, cases: Vec<CaseRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(cases.len());
        let mut rows = Vec::with_capacity(cases.len());
        for (i, c) in cases.iter().enumerate() {
            if by_id.insert(c.id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate case id `{}`", c.id)));
            }
            let row = model.align(c)?;
            if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidValue(format!(
                    "case `{}`: `{}` must be finite, got {v}",
                    c.id,
                    model.weights().get_index(j).expect("aligned").0
                )));
            }
            rows.push(row);
        }
        Ok(ReferenceDataset {
            factor_names: model.factor_names().map(str::to_string).collect(),
            cases,
            rows,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> &[CaseRecord] {
        &self.cases
    }

    pub fn case(&self, id: &str) -> Option<&CaseRecord> {
        self.by_id.get(id).map(|&i| &self.cases[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    /// Confirms the dataset was laid out for this model's factors.
    pub fn check_model(&self, model: &Model) -> Result<()> {
        for (i, name) in model.factor_names().enumerate() {
            if self.factor_names.get(i).map(String::as_str) != Some(name) {
                return Err(Error::missing(name));
            }
        }
        if let Some(extra) = self.factor_names.get(model.n_factors()) {
            return Err(Error::unexpected(extra.as_str()));
        }
        Ok(())
    }

    pub fn raw_outputs(&self, model: &Model) -> Result<Vec<f64>> {
        self.check_model(model)?;
        Ok(self.rows.iter().map(|r| model.predict_dense(r)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub removed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal_date: Option<NaiveDate>,
}

/// Observed outcome label per case id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutcomeTable {
    entries: IndexMap<String, Outcome>,
}

impl OutcomeTable {
    pub fn new(entries: impl IntoIterator<Item = (String, Outcome)>) -> Result<Self> {
        let mut map = IndexMap::new();
        for (id, o) in entries {
            if map.contains_key(&id) {
                return Err(Error::InvalidInput(format!("duplicate outcome for `{id}`")));
            }
            map.insert(id, o);
        }
        Ok(OutcomeTable { entries: map })
    }

    pub fn get(&self, case_id: &str) -> Option<&Outcome> {
        self.entries.get(case_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Outcome)> {
        self.entries.iter()
    }

    /// 0/1 labels in reference row order. Every reference case needs an
    /// outcome and every outcome must belong to a reference case.
    pub fn aligned_labels(&self, reference: &ReferenceDataset) -> Result<Vec<f64>> {
        if let Some(id) = self.entries.keys().find(|id| reference.case(id).is_none()) {
            return Err(Error::Alignment(format!(
                "outcome for `{id}` has no matching case"
            )));
        }
        reference
            .cases()
            .iter()
            .map(|c| {
                self.entries
                    .get(&c.id)
                    .map(|o| if o.removed { 1.0 } else { 0.0 })
                    .ok_or_else(|| Error::Alignment(format!("case `{}` has no outcome", c.id)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub errors: Vec<Finding>,
}

impl ValidationReport {
    pub fn new() -> Self {
        ValidationReport {
            ok: true,
            errors: Vec::new(),
        }
    }

    pub fn error(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.ok = false;
        self.errors.push(Finding {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        });
    }

    pub fn warning(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Finding {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        });
    }

    pub fn error_count(&self) -> usize {
        self.errors
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .count()
    }

    pub fn into_result<T>(self, value: T) -> Result<T> {
        if self.ok {
            Ok(value)
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.errors {
            let sev = match e.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{sev}: {}: {}", e.location, e.message)?;
        }
        write!(
            f,
            "{}: {} error(s)",
            if self.ok { "ok" } else { "FAILED" },
            self.error_count()
        )
    }
}

/// Locations of the five input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub model: PathBuf,
    pub factors: PathBuf,
    pub cases: PathBuf,
    pub outcomes: PathBuf,
    pub events: PathBuf,
}

impl DataPaths {
    /// Standard file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        DataPaths {
            model: d.join("model.json"),
            factors: d.join("factors.json"),
            cases: d.join("cases.csv"),
            outcomes: d.join("outcomes.csv"),
            events: d.join("events.csv"),
        }
    }
}
