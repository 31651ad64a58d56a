//! Deterministic synthetic corpus for demos and tests.
//!
//! This is a deliberately naive generator, not a realistic one: every factor
//! is drawn from an independent marginal (Bernoulli for Booleans, uniform
//! integers for counts and ages), the age-group one-hot columns are derived
//! from the child's age, weights are sparse and random, outcomes are
//! Bernoulli draws from a logistic transform of the standardized raw output,
//! and each case gets 0 to 6 timeline events.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{model_to_json, DataPaths, Outcome};
use crate::error::{Error, Result};
use crate::model::{CaseRecord, Model};
use crate::neighbors::{CaseEvent, EventKind};
use crate::present::{FactorKind, FactorMeta};

/// Score bins need at least this many reference cases.
pub const MIN_DEMO_CASES: usize = 20;

const AGE: &str = "AGE OF CHILD";
const AGE_GROUP: &str = "AGE OF CHILD GROUP";
const AGE_MEMBERS: [(&str, &str, u32, u32); 4] = [
    ("CHILD IS LESS THAN 1 YEAR OLD", "<1", 0, 0),
    ("CHILD IS BETWEEN THE AGES OF 1 AND 3", "1-3", 1, 3),
    ("CHILD IS BETWEEN THE AGES OF 4 AND 9", "4-9", 4, 9),
    ("CHILD IS 10 OR OLDER", "10+", 10, 17),
];

const CATEGORIES: [(&str, &str); 5] = [
    ("DG", "Demographics"),
    ("RH", "Referral history"),
    ("CI", "Court involvement"),
    ("HH", "Household"),
    ("PA", "Parent attributes"),
];

#[derive(Clone, Copy)]
enum Draw {
    Bernoulli(f64),
    Uniform(u32, u32),
}

struct Template {
    name: &'static str,
    category: usize,
    draw: Draw,
}

const POOL: &[Template] = &[
    Template { name: "PAST REFERRAL COUNT", category: 1, draw: Draw::Uniform(0, 10) },
    Template { name: "CHILD HAS SIBLINGS", category: 0, draw: Draw::Bernoulli(0.6) },
    Template { name: "PARENT HAS PRIOR COURT INVOLVEMENT", category: 2, draw: Draw::Bernoulli(0.25) },
    Template { name: "AGE OF MOTHER", category: 4, draw: Draw::Uniform(16, 45) },
    Template { name: "HOUSEHOLD HAS PRIOR SUBSTANTIATED REFERRAL", category: 1, draw: Draw::Bernoulli(0.3) },
    Template { name: "CHILD IS ENROLLED IN SCHOOL", category: 0, draw: Draw::Bernoulli(0.5) },
    Template { name: "NUMBER OF CHILDREN IN HOUSEHOLD", category: 3, draw: Draw::Uniform(1, 6) },
    Template { name: "PARENT IS SINGLE", category: 4, draw: Draw::Bernoulli(0.4) },
    Template { name: "PAST INVESTIGATION COUNT", category: 1, draw: Draw::Uniform(0, 5) },
    Template { name: "CHILD HAS A DISABILITY", category: 0, draw: Draw::Bernoulli(0.1) },
    Template { name: "FATHER IS LISTED ON REFERRAL", category: 4, draw: Draw::Bernoulli(0.55) },
    Template { name: "HOUSEHOLD HAS PUBLIC BENEFITS", category: 3, draw: Draw::Bernoulli(0.45) },
    Template { name: "PAST COURT PETITION COUNT", category: 2, draw: Draw::Uniform(0, 3) },
    Template { name: "REFERRAL HAS MULTIPLE ALLEGATIONS", category: 1, draw: Draw::Bernoulli(0.35) },
    Template { name: "MOTHER HAS MISSING DATE OF BIRTH", category: 4, draw: Draw::Bernoulli(0.05) },
    Template { name: "DAYS SINCE LAST REFERRAL", category: 1, draw: Draw::Uniform(0, 730) },
];

struct Column {
    meta: FactorMeta,
    draw: Option<Draw>,
}

fn columns(n_factors: usize) -> Vec<Column> {
    let mut cols = Vec::with_capacity(n_factors);
    let (dg_code, dg_name) = CATEGORIES[0];
    let with_group = n_factors >= 6;
    if with_group {
        let mut age = FactorMeta::numeric(AGE, dg_code, dg_name);
        age.min = Some(0.0);
        age.max = Some(17.0);
        cols.push(Column { meta: age, draw: Some(Draw::Uniform(0, 17)) });
        for (name, label, _, _) in AGE_MEMBERS {
            cols.push(Column {
                meta: FactorMeta::member(name, AGE_GROUP, label, dg_code, dg_name),
                draw: None,
            });
        }
    }
    let mut extra = 0;
    while cols.len() < n_factors {
        let t = &POOL[extra % POOL.len()];
        let round = extra / POOL.len();
        let (code, cat) = CATEGORIES[t.category];
        let name = if round == 0 {
            t.name.to_string()
        } else {
            format!("{} ({})", t.name, round + 1)
        };
        let mut meta = match t.draw {
            Draw::Bernoulli(_) => FactorMeta::binary(&name, code, cat),
            Draw::Uniform(lo, hi) => {
                let mut m = FactorMeta::numeric(&name, code, cat);
                m.min = Some(lo as f64);
                m.max = Some(hi as f64);
                m
            }
        };
        meta.name = name.clone();
        meta.description = name;
        cols.push(Column { meta, draw: Some(t.draw) });
        extra += 1;
    }
    cols
}

/// An in-memory synthetic deployment.
#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub model: Model,
    pub metas: Vec<FactorMeta>,
    pub cases: Vec<CaseRecord>,
    pub outcomes: Vec<(String, Outcome)>,
    pub events: Vec<CaseEvent>,
}

pub fn generate_demo_corpus(n_cases: usize, n_factors: usize, seed: u64) -> Result<DemoCorpus> {
    if n_cases < MIN_DEMO_CASES {
        return Err(Error::InvalidInput(format!(
            "demo corpus needs at least {MIN_DEMO_CASES} cases, got {n_cases}"
        )));
    }
    if n_factors == 0 {
        return Err(Error::InvalidInput("demo corpus needs at least 1 factor".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = columns(n_factors);

    // Sparse weights scaled so a typical factor moves the raw output by a few points.
    let weights: Vec<(String, f64)> = cols
        .iter()
        .map(|c| {
            let spread = match (c.meta.kind, c.draw) {
                (_, Some(Draw::Uniform(lo, hi))) => (hi - lo).max(1) as f64,
                _ => 1.0,
            };
            let w = if rng.random_bool(0.7) {
                let mag = rng.random_range(0.01..0.12) / spread;
                let sign = if rng.random_bool(0.7) { 1.0 } else { -1.0 };
                round_to(sign * mag, 6)
            } else {
                0.0
            };
            (c.meta.name.clone(), w)
        })
        .collect();
    let model = Model::new(0.2, weights, "removal_within_2y")?;

    let mut cases = Vec::with_capacity(n_cases);
    for i in 0..n_cases {
        let id = format!("C{:05}", i + 1);
        let mut age = None;
        let mut values = Vec::with_capacity(cols.len());
        for c in &cols {
            let v = match c.draw {
                Some(Draw::Bernoulli(p)) => f64::from(u8::from(rng.random_bool(p))),
                Some(Draw::Uniform(lo, hi)) => {
                    let v = rng.random_range(lo..=hi);
                    if c.meta.name == AGE {
                        age = Some(v);
                    }
                    f64::from(v)
                }
                None => {
                    let a = age.expect("age precedes its group");
                    let (_, _, lo, hi) = AGE_MEMBERS
                        .iter()
                        .find(|(n, ..)| *n == c.meta.name)
                        .expect("group member");
                    f64::from(u8::from((*lo..=*hi).contains(&a)))
                }
            };
            values.push((c.meta.name.clone(), v));
        }
        let narrative = format!(
            "Synthetic referral {id}. Caller reported concerns about the child's care; details are generated and describe no real person."
        );
        cases.push(CaseRecord::new(id, values).with_narrative(narrative));
    }

    let raw: Vec<f64> = cases
        .iter()
        .map(|c| model.predict_raw(c).expect("generated schema"))
        .collect();
    let (mean, std) = crate::stats::mean_and_std(&raw).expect("non-empty");
    let base = NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date");
    let span_days = 365 * 10;

    let mut outcomes = Vec::with_capacity(n_cases);
    let mut events = Vec::new();
    for (c, r) in cases.iter().zip(&raw) {
        let z = if std > 0.0 { (r - mean) / std } else { 0.0 };
        let p = 1.0 / (1.0 + (-(1.5 * z - 1.0)).exp());
        let removed = rng.random_bool(p);

        let n_events = rng.random_range(0..=6);
        let mut evs: Vec<CaseEvent> = (0..n_events)
            .map(|_| CaseEvent {
                case_id: c.id.clone(),
                date: base + Duration::days(rng.random_range(0..span_days)),
                kind: *[EventKind::Referral, EventKind::Investigation, EventKind::Services]
                    .choose(&mut rng)
                    .expect("non-empty"),
                note: None,
            })
            .collect();
        let mut removal_date = None;
        if removed {
            let d = base + Duration::days(rng.random_range(0..span_days));
            removal_date = Some(d);
            evs.push(CaseEvent {
                case_id: c.id.clone(),
                date: d,
                kind: EventKind::Removal,
                note: Some("synthetic".into()),
            });
        }
        evs.sort_by_key(|e| e.date);
        events.extend(evs);
        outcomes.push((c.id.clone(), Outcome { removed, removal_date }));
    }

    Ok(DemoCorpus {
        model,
        metas: cols.into_iter().map(|c| c.meta).collect(),
        cases,
        outcomes,
        events,
    })
}

fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

impl DemoCorpus {
    pub fn cases_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["case_id".to_string()];
        header.extend(self.model.factor_names().map(str::to_string));
        header.push("narrative".into());
        w.write_record(&header).map_err(|e| csv_error(Path::new("cases.csv"), e))?;
        for c in &self.cases {
            let mut rec = vec![c.id.clone()];
            rec.extend(c.values.values().map(|v| v.to_string()));
            rec.push(c.narrative.clone().unwrap_or_default());
            w.write_record(&rec).map_err(|e| csv_error(Path::new("cases.csv"), e))?;
        }
        w.into_inner().map_err(|e| Error::io("cases.csv", std::io::Error::other(e.to_string())))
    }

    pub fn outcomes_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case_id", "removed", "removal_date"])
            .map_err(|e| csv_error(Path::new("outcomes.csv"), e))?;
        for (id, o) in &self.outcomes {
            let date = o.removal_date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
            w.write_record([id.as_str(), if o.removed { "1" } else { "0" }, &date])
                .map_err(|e| csv_error(Path::new("outcomes.csv"), e))?;
        }
        w.into_inner().map_err(|e| Error::io("outcomes.csv", std::io::Error::other(e.to_string())))
    }

    pub fn events_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case_id", "date", "kind", "note"])
            .map_err(|e| csv_error(Path::new("events.csv"), e))?;
        for e in &self.events {
            let date = e.date.format("%Y-%m-%d").to_string();
            w.write_record([e.case_id.as_str(), &date, e.kind.as_str(), e.note.as_deref().unwrap_or("")])
                .map_err(|err| csv_error(Path::new("events.csv"), err))?;
        }
        w.into_inner().map_err(|e| Error::io("events.csv", std::io::Error::other(e.to_string())))
    }

    pub fn factors_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.metas).expect("metadata serializes");
        s.push('\n');
        s
    }

    /// Writes the five standard files into `dir`, creating it if needed.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<DataPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DataPaths::in_dir(dir);
        let write = |p: &Path, bytes: &[u8]| std::fs::write(p, bytes).map_err(|e| Error::io(p, e));
        write(&paths.model, model_to_json(&self.model, None).as_bytes())?;
        write(&paths.factors, self.factors_json().as_bytes())?;
        write(&paths.cases, &self.cases_csv()?)?;
        write(&paths.outcomes, &self.outcomes_csv()?)?;
        write(&paths.events, &self.events_csv()?)?;
        Ok(paths)
    }

    /// Number of standalone Boolean factors (one-hot members excluded).
    pub fn standalone_booleans(&self) -> usize {
        self.metas.iter().filter(|m| m.kind == FactorKind::Binary).count()
    }
}

pub fn write_demo_corpus(dir: impl AsRef<Path>, n_cases: usize, n_factors: usize, seed: u64) -> Result<DataPaths> {
    generate_demo_corpus(n_cases, n_factors, seed)?.write_to(dir)
}
