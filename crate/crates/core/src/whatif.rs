//! Sandbox: rescore a case under user-posed factor changes, and tabulate the
//! effect of reversing each standalone Boolean factor on its own.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{to_risk_score, CaseRecord, Model, RiskScore, ScoreBins};
use crate::present::{render_value, PresentationSchema, PresentedFactor, PresentedKind};

/// Most factor values a user may change at once.
pub const MAX_CHANGES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChangeValue {
    Bool(bool),
    Number(f64),
    Label(String),
}

impl std::fmt::Display for ChangeValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChangeValue::Bool(b) => write!(f, "{b}"),
            ChangeValue::Number(n) => write!(f, "{n}"),
            ChangeValue::Label(l) => write!(f, "{l:?}"),
        }
    }
}

/// A requested edit, addressed by presented factor name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorChange {
    pub factor: String,
    pub value: ChangeValue,
}

impl FactorChange {
    pub fn new(factor: impl Into<String>, value: ChangeValue) -> Self {
        FactorChange {
            factor: factor.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Unchanged,
}

impl Direction {
    pub fn between(old: RiskScore, new: RiskScore) -> Self {
        match new.cmp(&old) {
            std::cmp::Ordering::Greater => Direction::Up,
            std::cmp::Ordering::Less => Direction::Down,
            std::cmp::Ordering::Equal => Direction::Unchanged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedChange {
    pub factor: String,
    pub displayed_value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub old_score: RiskScore,
    pub new_score: RiskScore,
    pub old_raw: f64,
    pub new_raw: f64,
    pub direction: Direction,
    pub applied: Vec<AppliedChange>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidChange(msg.into())
}

fn as_boolean(factor: &PresentedFactor, value: &ChangeValue) -> Result<f64> {
    match value {
        ChangeValue::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
        ChangeValue::Number(n) if *n == 0.0 || *n == 1.0 => Ok(*n),
        other => Err(invalid(format!(
            "`{}` is Boolean; expected true/false or 0/1, got {other}",
            factor.display_name
        ))),
    }
}

fn as_number(factor: &PresentedFactor, value: &ChangeValue) -> Result<f64> {
    let ChangeValue::Number(n) = value else {
        return Err(invalid(format!(
            "`{}` is numeric; expected a number, got {value}",
            factor.display_name
        )));
    };
    if !n.is_finite() {
        return Err(invalid(format!("`{}` must be finite", factor.display_name)));
    }
    if factor.min.is_some_and(|lo| *n < lo) || factor.max.is_some_and(|hi| *n > hi) {
        return Err(invalid(format!(
            "`{}` must lie within [{}, {}], got {n}",
            factor.display_name,
            factor.min.map_or("-inf".into(), |v| v.to_string()),
            factor.max.map_or("inf".into(), |v| v.to_string()),
        )));
    }
    Ok(*n)
}

/// Returns a copy of `case` with the changes applied. Categorical changes
/// switch the whole one-hot group so exactly one member stays active.
pub fn apply_changes(schema: &PresentationSchema, case: &CaseRecord, changes: &[FactorChange]) -> Result<CaseRecord> {
    if changes.is_empty() {
        return Err(invalid("at least one change is required"));
    }
    if changes.len() > MAX_CHANGES {
        return Err(Error::LimitExceeded {
            max: MAX_CHANGES,
            requested: changes.len(),
        });
    }
    let mut seen = HashSet::new();
    let mut out = case.clone();
    for ch in changes {
        if !seen.insert(ch.factor.as_str()) {
            return Err(invalid(format!("`{}` is changed more than once", ch.factor)));
        }
        let factor = schema
            .get(&ch.factor)
            .ok_or_else(|| invalid(format!("unknown factor `{}`", ch.factor)))?;
        let mut set = |name: &str, v: f64| -> Result<()> {
            match out.values.get_mut(name) {
                Some(slot) => {
                    *slot = v;
                    Ok(())
                }
                None => Err(Error::missing(name)),
            }
        };
        match factor.kind {
            PresentedKind::Binary => set(&factor.sources[0], as_boolean(factor, &ch.value)?)?,
            PresentedKind::Numeric => set(&factor.sources[0], as_number(factor, &ch.value)?)?,
            PresentedKind::Categorical => {
                let ChangeValue::Label(label) = &ch.value else {
                    return Err(invalid(format!(
                        "`{}` is categorical; expected one of its labels, got {}",
                        ch.factor, ch.value
                    )));
                };
                if factor.member_factor(label).is_none() {
                    let labels: Vec<_> = factor.members.iter().map(|m| m.label.as_str()).collect();
                    return Err(invalid(format!(
                        "`{label}` is not a value of `{}` (expected one of {labels:?})",
                        ch.factor
                    )));
                }
                for m in &factor.members {
                    set(&m.factor, if &m.label == label { 1.0 } else { 0.0 })?;
                }
            }
        }
    }
    Ok(out)
}

pub fn whatif_score(
    model: &Model,
    bins: &ScoreBins,
    schema: &PresentationSchema,
    case: &CaseRecord,
    changes: &[FactorChange],
) -> Result<WhatIfResult> {
    let changed = apply_changes(schema, case, changes)?;
    let old_raw = model.predict_raw(case)?;
    let new_raw = model.predict_raw(&changed)?;
    let old_score = to_risk_score(old_raw, bins)?;
    let new_score = to_risk_score(new_raw, bins)?;
    let applied = changes
        .iter()
        .map(|ch| {
            let f = schema.get(&ch.factor).expect("validated by apply_changes");
            Ok(AppliedChange {
                factor: ch.factor.clone(),
                displayed_value: crate::present::presented_value(schema, f, &changed)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(WhatIfResult {
        old_score,
        new_score,
        old_raw,
        new_raw,
        direction: Direction::between(old_score, new_score),
        applied,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipRow {
    pub factor: String,
    pub current_statement: String,
    /// Statement that would be true after the flip.
    pub flipped_statement: String,
    pub new_value: f64,
    pub new_raw: f64,
    pub new_score: RiskScore,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipTable {
    pub old_score: RiskScore,
    pub old_raw: f64,
    pub rows: Vec<FlipRow>,
}

/// Reverses every standalone Boolean factor, one at a time, against the
/// unmodified case. One-hot members are never flipped individually.
pub fn flip_all_booleans(
    model: &Model,
    bins: &ScoreBins,
    schema: &PresentationSchema,
    case: &CaseRecord,
) -> Result<FlipTable> {
    let old_raw = model.predict_raw(case)?;
    let old_score = to_risk_score(old_raw, bins)?;
    let mut rows = Vec::new();
    for f in schema.factors().iter().filter(|f| f.kind == PresentedKind::Binary) {
        let name = &f.sources[0];
        let meta = schema
            .meta(name)
            .ok_or_else(|| Error::Schema(format!("no metadata for `{name}`")))?;
        let current = case.value(name).ok_or_else(|| Error::missing(name.as_str()))?;
        let current_statement = render_value(meta, current)?;
        let new_value = 1.0 - current;
        let mut flipped = case.clone();
        flipped.values[name.as_str()] = new_value;
        let new_raw = model.predict_raw(&flipped)?;
        let new_score = to_risk_score(new_raw, bins)?;
        rows.push(FlipRow {
            factor: f.display_name.clone(),
            current_statement,
            flipped_statement: render_value(meta, new_value)?,
            new_value,
            new_raw,
            new_score,
            direction: Direction::between(old_score, new_score),
        });
    }
    let delta = |r: &FlipRow| (i16::from(r.new_score.get()) - i16::from(old_score.get())).abs();
    rows.sort_by(|a, b| delta(b).cmp(&delta(a)).then_with(|| a.factor.cmp(&b.factor)));
    Ok(FlipTable {
        old_score,
        old_raw,
        rows,
    })
}
