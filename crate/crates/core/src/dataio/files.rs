use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DataPaths, Outcome, OutcomeTable, ReferenceDataset, ValidationReport};
use crate::error::{Error, Result};
use crate::model::{fit_score_bins, CaseRecord, Model, ScoreBins};
use crate::neighbors::{CaseEvent, EventKind, EventLog};
use crate::present::{build_schema, FactorMeta, PresentationSchema, PresentedKind};

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    intercept: f64,
    weights: OrderedWeights,
    outcome_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score_cutpoints: Option<Vec<f64>>,
}

/// JSON object that keeps file order and rejects repeated keys.
struct OrderedWeights(Vec<(String, f64)>);

impl Serialize for OrderedWeights {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for OrderedWeights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedWeights;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping factor names to weights")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<OrderedWeights, A::Error> {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, f64>()? {
                    if !seen.insert(k.clone()) {
                        return Err(serde::de::Error::custom(format!("duplicate factor `{k}`")));
                    }
                    out.push((k, v));
                }
                Ok(OrderedWeights(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn json_error(source: &str, e: serde_json::Error) -> Error {
    Error::Parse {
        location: format!("{source}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    }
}

fn field_error(source: &str, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("{source}: field `{field}`"),
        message: message.into(),
    }
}

fn parse_model_source(text: &str, source: &str) -> Result<(Model, Option<ScoreBins>)> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| json_error(source, e))?;
    let model = Model::new(file.intercept, file.weights.0, file.outcome_name)
        .map_err(|e| field_error(source, "weights", e.to_string()))?;
    let bins = file
        .score_cutpoints
        .map(ScoreBins::new)
        .transpose()
        .map_err(|e| field_error(source, "score_cutpoints", e.to_string()))?;
    Ok((model, bins))
}

/// Parses a model file: intercept, ordered weights, outcome name and
/// optional precomputed score cutpoints.
pub fn parse_model_json(text: &str) -> Result<(Model, Option<ScoreBins>)> {
    parse_model_source(text, "model.json")
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<(Model, Option<ScoreBins>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model_source(&text, &path.display().to_string())
}

/// Canonical pretty-printed model file.
pub fn model_to_json(model: &Model, bins: Option<&ScoreBins>) -> String {
    let file = ModelFile {
        intercept: model.intercept(),
        weights: OrderedWeights(model.weights().iter().map(|(k, v)| (k.clone(), *v)).collect()),
        outcome_name: model.outcome_name().to_string(),
        score_cutpoints: bins.map(|b| b.cutpoints().to_vec()),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn parse_metas_json(text: &str) -> Result<Vec<FactorMeta>> {
    serde_json::from_str(text).map_err(|e| json_error("factors.json", e))
}

pub fn load_metas_file(path: impl AsRef<Path>) -> Result<Vec<FactorMeta>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_error(&path.display().to_string(), e))
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(bytes)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error_location(source: &str, e: &csv::Error) -> String {
    match e.position() {
        Some(p) => format!("{source}:{}", p.line()),
        None => source.to_string(),
    }
}

fn parse_binary_flag(raw: &str) -> Option<bool> {
    match raw.trim() {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Parses `cases.csv`: a `case_id` column, an optional `narrative` column,
/// and exactly one numeric column per model factor. Rows with any problem
/// are reported and skipped.
pub fn parse_cases_csv(
    bytes: &[u8],
    source: &str,
    model: &Model,
    schema: &PresentationSchema,
    report: &mut ValidationReport,
) -> Vec<CaseRecord> {
    let mut rdr = csv_reader(bytes);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            report.error(csv_error_location(source, &e), format!("unreadable header: {e}"));
            return Vec::new();
        }
    };

    let mut id_col = None;
    let mut narrative_col = None;
    let mut factor_cols: Vec<(usize, &str)> = Vec::new();
    let mut seen = HashSet::new();
    let before = report.error_count();
    for (i, h) in headers.iter().enumerate() {
        if !seen.insert(h) {
            report.error(format!("{source}:1"), format!("duplicate column `{h}`"));
            continue;
        }
        match h {
            "case_id" => id_col = Some(i),
            "narrative" => narrative_col = Some(i),
            _ => match model.factor_index(h) {
                Some(j) => factor_cols.push((i, model.weights().get_index(j).expect("indexed").0.as_str())),
                None => report.error(format!("{source}:1"), format!("unknown factor column `{h}`")),
            },
        }
    }
    if id_col.is_none() {
        report.error(format!("{source}:1"), "missing `case_id` column");
    }
    for name in model.factor_names() {
        if !seen.contains(name) {
            report.error(format!("{source}:1"), format!("missing factor column `{name}`"));
        }
    }
    let Some(id_col) = id_col else { return Vec::new() };
    if report.error_count() > before {
        return Vec::new();
    }

    let groups: Vec<_> = schema
        .factors()
        .iter()
        .filter(|f| f.kind == PresentedKind::Categorical)
        .collect();
    let mut ids = HashSet::new();
    let mut cases = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.error(csv_error_location(source, &e), e.to_string());
                continue;
            }
        };
        let loc = format!("{source}:{}", line_of(&rec));
        if rec.len() != headers.len() {
            report.error(&loc, format!("expected {} fields, found {}", headers.len(), rec.len()));
            continue;
        }
        let id = rec[id_col].trim().to_string();
        if id.is_empty() {
            report.error(&loc, "empty case_id");
            continue;
        }
        if !ids.insert(id.clone()) {
            report.error(&loc, format!("duplicate case id `{id}`"));
            continue;
        }
        let mut values = Vec::with_capacity(factor_cols.len());
        let mut row_ok = true;
        for &(col, name) in &factor_cols {
            let raw = rec[col].trim();
            let v = match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    report.error(&loc, format!("`{name}`: expected a finite number, got `{raw}`"));
                    row_ok = false;
                    continue;
                }
            };
            if schema.meta(name).is_some_and(|m| m.is_boolean()) && v != 0.0 && v != 1.0 {
                report.error(&loc, format!("`{name}` is Boolean and must be 0 or 1, got `{raw}`"));
                row_ok = false;
            }
            values.push((name.to_string(), v));
        }
        if !row_ok {
            continue;
        }
        let mut case = CaseRecord::new(id, model.factor_names().map(|n| {
            let v = values.iter().find(|(k, _)| k == n).map(|(_, v)| *v).expect("all columns present");
            (n.to_string(), v)
        }));
        for g in &groups {
            let active = g.members.iter().filter(|m| case.value(&m.factor) == Some(1.0)).count();
            if active != 1 {
                report.error(
                    &loc,
                    format!("one-hot group `{}` must have exactly one active member, found {active}", g.display_name),
                );
                row_ok = false;
            }
        }
        if !row_ok {
            continue;
        }
        if let Some(nc) = narrative_col {
            let n = rec[nc].trim();
            if !n.is_empty() {
                case.narrative = Some(n.to_string());
            }
        }
        cases.push(case);
    }
    cases
}

fn require_columns(
    headers: &csv::StringRecord,
    required: &[&str],
    optional: &[&str],
    source: &str,
    report: &mut ValidationReport,
) -> Option<Vec<Option<usize>>> {
    let mut ok = true;
    let mut idx = Vec::new();
    for name in required {
        let i = headers.iter().position(|h| h == *name);
        if i.is_none() {
            report.error(format!("{source}:1"), format!("missing `{name}` column"));
            ok = false;
        }
        idx.push(i);
    }
    for name in optional {
        idx.push(headers.iter().position(|h| h == *name));
    }
    for h in headers.iter() {
        if !required.contains(&h) && !optional.contains(&h) {
            report.warning(format!("{source}:1"), format!("ignoring unknown column `{h}`"));
        }
    }
    ok.then_some(idx)
}

/// Parses `outcomes.csv` (`case_id,removed[,removal_date]`).
pub fn parse_outcomes_csv(
    bytes: &[u8],
    source: &str,
    case_ids: &HashSet<String>,
    report: &mut ValidationReport,
) -> Vec<(String, Outcome)> {
    let mut rdr = csv_reader(bytes);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            report.error(csv_error_location(source, &e), format!("unreadable header: {e}"));
            return Vec::new();
        }
    };
    let Some(cols) = require_columns(&headers, &["case_id", "removed"], &["removal_date"], source, report) else {
        return Vec::new();
    };
    let (id_col, removed_col, date_col) = (cols[0].unwrap(), cols[1].unwrap(), cols[2]);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.error(csv_error_location(source, &e), e.to_string());
                continue;
            }
        };
        let loc = format!("{source}:{}", line_of(&rec));
        let (Some(id), Some(removed)) = (rec.get(id_col), rec.get(removed_col)) else {
            report.error(&loc, "row is missing fields");
            continue;
        };
        let id = id.trim().to_string();
        let mut row_ok = true;
        if !case_ids.contains(&id) {
            report.error(&loc, format!("outcome for `{id}` has no matching case"));
            row_ok = false;
        }
        if !seen.insert(id.clone()) {
            report.error(&loc, format!("duplicate outcome for `{id}`"));
            row_ok = false;
        }
        let removed = match parse_binary_flag(removed) {
            Some(b) => b,
            None => {
                report.error(&loc, format!("`removed` must be 0 or 1, got `{removed}`"));
                continue;
            }
        };
        let removal_date = match date_col.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(s) => match NaiveDate::parse_from_str(s, DATE_FORMAT) {
                Ok(d) => Some(d),
                Err(_) => {
                    report.error(&loc, format!("`removal_date` must be YYYY-MM-DD, got `{s}`"));
                    continue;
                }
            },
        };
        if row_ok {
            out.push((id, Outcome { removed, removal_date }));
        }
    }
    for id in case_ids {
        if !seen.contains(id) {
            report.error(source, format!("case `{id}` has no outcome"));
        }
    }
    out
}

/// Parses `events.csv` (`case_id,date,kind[,note]`).
pub fn parse_events_csv(
    bytes: &[u8],
    source: &str,
    case_ids: &HashSet<String>,
    report: &mut ValidationReport,
) -> Vec<CaseEvent> {
    let mut rdr = csv_reader(bytes);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            report.error(csv_error_location(source, &e), format!("unreadable header: {e}"));
            return Vec::new();
        }
    };
    let Some(cols) = require_columns(&headers, &["case_id", "date", "kind"], &["note"], source, report) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.error(csv_error_location(source, &e), e.to_string());
                continue;
            }
        };
        let loc = format!("{source}:{}", line_of(&rec));
        let (Some(id), Some(date), Some(kind)) = (
            rec.get(cols[0].unwrap()),
            rec.get(cols[1].unwrap()),
            rec.get(cols[2].unwrap()),
        ) else {
            report.error(&loc, "row is missing fields");
            continue;
        };
        let id = id.trim();
        if !case_ids.contains(id) {
            report.error(&loc, format!("event for `{id}` has no matching case"));
            continue;
        }
        let Ok(date) = NaiveDate::parse_from_str(date.trim(), DATE_FORMAT) else {
            report.error(&loc, format!("`date` must be YYYY-MM-DD, got `{date}`"));
            continue;
        };
        let kind = match kind.trim().parse::<EventKind>() {
            Ok(k) => k,
            Err(e) => {
                report.error(&loc, e.to_string());
                continue;
            }
        };
        let note = cols[3]
            .and_then(|c| rec.get(c))
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .map(str::to_string);
        out.push(CaseEvent {
            case_id: id.to_string(),
            date,
            kind,
            note,
        });
    }
    out
}

/// Validated reference population with its outcomes and event history.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub reference: ReferenceDataset,
    pub outcomes: OutcomeTable,
    pub events: EventLog,
}

fn read_bytes(path: &Path, report: &mut ValidationReport) -> Option<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Some(b),
        Err(e) => {
            report.error(path.display().to_string(), e.to_string());
            None
        }
    }
}

fn report_error(report: &mut ValidationReport, fallback_location: &Path, e: Error) {
    match e {
        Error::Parse { location, message } => report.error(location, message),
        Error::Io { path, source } => report.error(path, source.to_string()),
        other => report.error(fallback_location.display().to_string(), other.to_string()),
    }
}

fn collect_corpus(
    report: &mut ValidationReport,
    model: &Model,
    schema: &PresentationSchema,
    cases_path: &Path,
    outcomes_path: &Path,
    events_path: &Path,
) -> Option<Corpus> {
    let cases_bytes = read_bytes(cases_path, report);
    let outcomes_bytes = read_bytes(outcomes_path, report);
    let events_bytes = read_bytes(events_path, report);

    let cases = cases_bytes
        .map(|b| parse_cases_csv(&b, &cases_path.display().to_string(), model, schema, report))
        .unwrap_or_default();
    let ids: HashSet<String> = cases.iter().map(|c| c.id.clone()).collect();
    let outcomes = outcomes_bytes
        .map(|b| parse_outcomes_csv(&b, &outcomes_path.display().to_string(), &ids, report))
        .unwrap_or_default();
    let events = events_bytes
        .map(|b| parse_events_csv(&b, &events_path.display().to_string(), &ids, report))
        .unwrap_or_default();
    if !report.ok {
        return None;
    }
    let reference = match ReferenceDataset::new(model, cases) {
        Ok(r) => r,
        Err(e) => {
            report_error(report, cases_path, e);
            return None;
        }
    };
    let outcomes = match OutcomeTable::new(outcomes) {
        Ok(o) => o,
        Err(e) => {
            report_error(report, outcomes_path, e);
            return None;
        }
    };
    Some(Corpus {
        reference,
        outcomes,
        events: EventLog::new(events),
    })
}

fn schema_for(report: &mut ValidationReport, source: &Path, model: &Model, metas: &[FactorMeta]) -> Option<PresentationSchema> {
    let schema = match build_schema(metas) {
        Ok(s) => s,
        Err(e) => {
            report_error(report, source, e);
            return None;
        }
    };
    if let Err(e) = schema.check_model(model) {
        report_error(report, source, e);
        return None;
    }
    Some(schema)
}

/// Loads and validates cases, outcomes and events against an already loaded
/// model and its factor metadata.
pub fn load_corpus(
    cases_path: impl AsRef<Path>,
    outcomes_path: impl AsRef<Path>,
    events_path: impl AsRef<Path>,
    model: &Model,
    metas: &[FactorMeta],
) -> Result<Corpus> {
    let mut report = ValidationReport::new();
    let corpus = schema_for(&mut report, Path::new("factors.json"), model, metas).and_then(|schema| {
        collect_corpus(
            &mut report,
            model,
            &schema,
            cases_path.as_ref(),
            outcomes_path.as_ref(),
            events_path.as_ref(),
        )
    });
    match corpus {
        Some(c) if report.ok => Ok(c),
        _ => Err(Error::Validation(report)),
    }
}

/// Everything needed to serve: model, score bins, schema and corpus.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub model: Model,
    pub bins: ScoreBins,
    /// Cutpoints came from the model file rather than from fitting.
    pub bins_from_file: bool,
    pub metas: Vec<FactorMeta>,
    pub schema: PresentationSchema,
    pub corpus: Corpus,
}

/// Loads all five files, collecting every finding. Returns data only when
/// the report has no errors.
pub fn load_all(paths: &DataPaths) -> (ValidationReport, Option<LoadedData>) {
    let mut report = ValidationReport::new();
    let model = load_model_file(&paths.model).map_err(|e| report_error(&mut report, &paths.model, e)).ok();
    let metas = load_metas_file(&paths.factors).map_err(|e| report_error(&mut report, &paths.factors, e)).ok();
    let (Some((model, file_bins)), Some(metas)) = (model, metas) else {
        return (report, None);
    };
    let Some(schema) = schema_for(&mut report, &paths.factors, &model, &metas) else {
        return (report, None);
    };
    let Some(corpus) = collect_corpus(&mut report, &model, &schema, &paths.cases, &paths.outcomes, &paths.events) else {
        return (report, None);
    };
    let bins_from_file = file_bins.is_some();
    let bins = match file_bins {
        Some(b) => b,
        None => match fit_score_bins(&model, &corpus.reference) {
            Ok(b) => b,
            Err(e) => {
                report_error(&mut report, &paths.cases, e);
                return (report, None);
            }
        },
    };
    let data = LoadedData {
        model,
        bins,
        bins_from_file,
        metas,
        schema,
        corpus,
    };
    (report, Some(data))
}
