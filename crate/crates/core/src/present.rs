//! Screener-facing view of factors and contributions.
//!
//! One-hot member columns collapse into a single categorical factor whose
//! contribution is the sum of its members'. Boolean values are rendered as
//! statements that are true about the case, negating the description when
//! the factor is false.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::ContributionSet;
use crate::model::{CaseRecord, Model};

/// Rows shown on the details view before the user asks for the full list.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Binary,
    Numeric,
    OnehotMember,
}

/// Per-factor presentation metadata, one entry per model factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMeta {
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negated_description: Option<String>,
    pub category_code: String,
    pub category_name: String,
    pub kind: FactorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_label: Option<String>,
    /// Optional what-if bounds for numeric factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl FactorMeta {
    pub fn binary(name: &str, category_code: &str, category_name: &str) -> Self {
        FactorMeta {
            name: name.into(),
            description: name.into(),
            negated_description: None,
            category_code: category_code.into(),
            category_name: category_name.into(),
            kind: FactorKind::Binary,
            group: None,
            member_label: None,
            min: None,
            max: None,
        }
    }

    pub fn numeric(name: &str, category_code: &str, category_name: &str) -> Self {
        FactorMeta {
            kind: FactorKind::Numeric,
            ..FactorMeta::binary(name, category_code, category_name)
        }
    }

    pub fn member(name: &str, group: &str, label: &str, category_code: &str, category_name: &str) -> Self {
        FactorMeta {
            kind: FactorKind::OnehotMember,
            group: Some(group.into()),
            member_label: Some(label.into()),
            ..FactorMeta::binary(name, category_code, category_name)
        }
    }

    pub fn is_boolean(&self) -> bool {
        matches!(self.kind, FactorKind::Binary | FactorKind::OnehotMember)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentedKind {
    Binary,
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMember {
    pub label: String,
    pub factor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresentedFactor {
    pub display_name: String,
    pub kind: PresentedKind,
    pub description: String,
    pub category_code: String,
    pub category_name: String,
    /// Model factors behind this presented factor.
    pub sources: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<CategoryMember>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl PresentedFactor {
    pub fn member_factor(&self, label: &str) -> Option<&str> {
        self.members
            .iter()
            .find(|m| m.label == label)
            .map(|m| m.factor.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct PresentationSchema {
    factors: Vec<PresentedFactor>,
    metas: IndexMap<String, FactorMeta>,
    by_display: HashMap<String, usize>,
    by_model_factor: HashMap<String, usize>,
}

impl PresentationSchema {
    pub fn factors(&self) -> &[PresentedFactor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn get(&self, display_name: &str) -> Option<&PresentedFactor> {
        self.by_display.get(display_name).map(|&i| &self.factors[i])
    }

    pub fn meta(&self, model_factor: &str) -> Option<&FactorMeta> {
        self.metas.get(model_factor)
    }

    pub fn metas(&self) -> impl Iterator<Item = &FactorMeta> {
        self.metas.values()
    }

    /// Presented factor owning a model factor.
    pub fn presented_for(&self, model_factor: &str) -> Option<&PresentedFactor> {
        self.by_model_factor
            .get(model_factor)
            .map(|&i| &self.factors[i])
    }

    /// Checks that metadata and model describe exactly the same factors.
    pub fn check_model(&self, model: &Model) -> Result<()> {
        for name in model.factor_names() {
            if !self.metas.contains_key(name) {
                return Err(Error::Schema(format!(
                    "model factor `{name}` has no metadata entry"
                )));
            }
        }
        for name in self.metas.keys() {
            if model.weight(name).is_none() {
                return Err(Error::Schema(format!(
                    "metadata entry `{name}` is not a model factor"
                )));
            }
        }
        Ok(())
    }

    /// Checks binary domains and one-hot consistency of a case.
    pub fn check_case(&self, case: &CaseRecord) -> Result<()> {
        for meta in self.metas.values() {
            let v = case.value(&meta.name).ok_or_else(|| Error::missing(meta.name.as_str()))?;
            if !v.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "`{}` must be finite, got {v}",
                    meta.name
                )));
            }
            if meta.is_boolean() && v != 0.0 && v != 1.0 {
                return Err(Error::InvalidValue(format!(
                    "`{}` is Boolean and must be 0 or 1, got {v}",
                    meta.name
                )));
            }
        }
        for f in self.factors.iter().filter(|f| f.kind == PresentedKind::Categorical) {
            let active = f
                .members
                .iter()
                .filter(|m| case.value(&m.factor) == Some(1.0))
                .count();
            if active != 1 {
                return Err(Error::InvalidValue(format!(
                    "group `{}` must have exactly one active member, found {active}",
                    f.display_name
                )));
            }
        }
        Ok(())
    }
}

pub fn build_schema(metas: &[FactorMeta]) -> Result<PresentationSchema> {
    let mut by_name: IndexMap<String, FactorMeta> = IndexMap::new();
    for m in metas {
        if m.name.is_empty() {
            return Err(Error::Schema("factor metadata with empty name".into()));
        }
        let is_member = m.kind == FactorKind::OnehotMember;
        match (&m.group, is_member) {
            (None, true) => {
                return Err(Error::Schema(format!(
                    "one-hot member `{}` has no group",
                    m.name
                )))
            }
            (Some(_), false) => {
                return Err(Error::Schema(format!(
                    "`{}` has a group but is not a one-hot member",
                    m.name
                )))
            }
            _ => {}
        }
        if is_member && m.member_label.as_deref().unwrap_or("").is_empty() {
            return Err(Error::Schema(format!(
                "one-hot member `{}` has no member_label",
                m.name
            )));
        }
        if by_name.insert(m.name.clone(), m.clone()).is_some() {
            return Err(Error::Schema(format!("duplicate factor metadata `{}`", m.name)));
        }
    }

    let mut factors: Vec<PresentedFactor> = Vec::new();
    let mut group_slot: HashMap<String, usize> = HashMap::new();
    for m in by_name.values() {
        match m.kind {
            FactorKind::Binary | FactorKind::Numeric => factors.push(PresentedFactor {
                display_name: m.name.clone(),
                kind: if m.kind == FactorKind::Binary {
                    PresentedKind::Binary
                } else {
                    PresentedKind::Numeric
                },
                description: m.description.clone(),
                category_code: m.category_code.clone(),
                category_name: m.category_name.clone(),
                sources: vec![m.name.clone()],
                members: Vec::new(),
                min: m.min,
                max: m.max,
            }),
            FactorKind::OnehotMember => {
                let group = m.group.clone().expect("checked above");
                let label = m.member_label.clone().expect("checked above");
                let slot = *group_slot.entry(group.clone()).or_insert_with(|| {
                    factors.push(PresentedFactor {
                        display_name: group.clone(),
                        kind: PresentedKind::Categorical,
                        description: group.clone(),
                        category_code: m.category_code.clone(),
                        category_name: m.category_name.clone(),
                        sources: Vec::new(),
                        members: Vec::new(),
                        min: None,
                        max: None,
                    });
                    factors.len() - 1
                });
                let f = &mut factors[slot];
                if f.members.iter().any(|x| x.label == label) {
                    return Err(Error::Schema(format!(
                        "duplicate member label `{label}` in group `{group}`"
                    )));
                }
                f.sources.push(m.name.clone());
                f.members.push(CategoryMember {
                    label,
                    factor: m.name.clone(),
                });
            }
        }
    }

    let mut by_display = HashMap::new();
    let mut by_model_factor = HashMap::new();
    for (i, f) in factors.iter().enumerate() {
        if f.kind == PresentedKind::Categorical && f.members.len() < 2 {
            return Err(Error::Schema(format!(
                "group `{}` has a single member; groups need at least 2",
                f.display_name
            )));
        }
        if by_display.insert(f.display_name.clone(), i).is_some() {
            return Err(Error::Schema(format!(
                "duplicate display name `{}`",
                f.display_name
            )));
        }
        for s in &f.sources {
            by_model_factor.insert(s.clone(), i);
        }
    }

    Ok(PresentationSchema {
        factors,
        metas: by_name,
        by_display,
        by_model_factor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContributionLabel {
    Risk,
    Protective,
    Neutral,
}

impl ContributionLabel {
    pub fn of(contribution: f64) -> Self {
        if contribution > 0.0 {
            ContributionLabel::Risk
        } else if contribution < 0.0 {
            ContributionLabel::Protective
        } else {
            ContributionLabel::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedContribution {
    pub display_name: String,
    pub kind: PresentedKind,
    pub description: String,
    pub displayed_value: String,
    pub contribution: f64,
    pub label: ContributionLabel,
    pub category_code: String,
    pub category_name: String,
}

/// Renders the current value of one presented factor for a case.
pub fn presented_value(schema: &PresentationSchema, factor: &PresentedFactor, case: &CaseRecord) -> Result<String> {
    match factor.kind {
        PresentedKind::Categorical => factor
            .members
            .iter()
            .find(|m| case.value(&m.factor) == Some(1.0))
            .map(|m| m.label.clone())
            .ok_or_else(|| {
                Error::InvalidValue(format!(
                    "group `{}` has no active member",
                    factor.display_name
                ))
            }),
        _ => {
            let name = &factor.sources[0];
            let meta = schema
                .meta(name)
                .ok_or_else(|| Error::Schema(format!("no metadata for `{name}`")))?;
            let v = case.value(name).ok_or_else(|| Error::missing(name.as_str()))?;
            render_value(meta, v)
        }
    }
}

pub fn merge_contributions(
    schema: &PresentationSchema,
    contribs: &ContributionSet,
    case: &CaseRecord,
) -> Result<Vec<PresentedContribution>> {
    schema
        .factors
        .iter()
        .map(|f| {
            let mut total = 0.0;
            for s in &f.sources {
                total += contribs
                    .contributions
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::missing(s.as_str()))?;
            }
            Ok(PresentedContribution {
                display_name: f.display_name.clone(),
                kind: f.kind,
                description: f.description.clone(),
                displayed_value: presented_value(schema, f, case)?,
                contribution: total,
                label: ContributionLabel::of(total),
                category_code: f.category_code.clone(),
                category_name: f.category_name.clone(),
            })
        })
        .collect()
}

/// Whole numbers without decimals, anything else with two.
pub fn format_number(value: f64) -> String {
    // normalizes -0.0
    let v = if value == 0.0 { 0.0 } else { value };
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn replace_word(text: &str, word: &str, replacement: &str) -> Option<String> {
    let mut from = 0;
    while let Some(off) = text[from..].find(word) {
        let at = from + off;
        let at_boundary = at == 0 || text[..at].ends_with(|c: char| !c.is_alphanumeric());
        if at_boundary {
            return Some(format!("{}{}{}", &text[..at], replacement, &text[at + word.len()..]));
        }
        from = at + word.len();
    }
    None
}

/// Statement that is true when a Boolean factor is false.
pub fn negate(meta: &FactorMeta) -> String {
    if let Some(n) = meta.negated_description.as_deref().filter(|n| !n.is_empty()) {
        return n.to_string();
    }
    let d = &meta.description;
    replace_word(d, "HAS ", "DOES NOT HAVE ")
        .or_else(|| replace_word(d, "IS ", "IS NOT "))
        .unwrap_or_else(|| format!("NOT: {d}"))
}

pub fn render_value(meta: &FactorMeta, value: f64) -> Result<String> {
    if !value.is_finite() {
        return Err(Error::InvalidValue(format!(
            "`{}` must be finite, got {value}",
            meta.name
        )));
    }
    match meta.kind {
        FactorKind::Numeric => Ok(format_number(value)),
        FactorKind::Binary | FactorKind::OnehotMember => {
            if value == 1.0 {
                Ok(meta.description.clone())
            } else if value == 0.0 {
                Ok(negate(meta))
            } else {
                Err(Error::InvalidValue(format!(
                    "`{}` is Boolean and must be 0 or 1, got {value}",
                    meta.name
                )))
            }
        }
    }
}

fn by_magnitude(a: &PresentedContribution, b: &PresentedContribution) -> std::cmp::Ordering {
    b.contribution
        .abs()
        .total_cmp(&a.contribution.abs())
        .then_with(|| a.display_name.cmp(&b.display_name))
}

/// Largest `k` rows by absolute contribution, ties alphabetical.
pub fn top_k(presented: &[PresentedContribution], k: usize) -> Vec<PresentedContribution> {
    let mut rows = presented.to_vec();
    rows.sort_by(by_magnitude);
    rows.truncate(k);
    rows
}

/// Full list ordered like [`top_k`].
pub fn sort_by_magnitude(presented: &[PresentedContribution]) -> Vec<PresentedContribution> {
    top_k(presented, presented.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitView {
    pub risk: Vec<PresentedContribution>,
    pub protective: Vec<PresentedContribution>,
}

pub fn split_view(presented: &[PresentedContribution]) -> SplitView {
    let mut risk: Vec<_> = presented.iter().filter(|p| p.contribution > 0.0).cloned().collect();
    let mut protective: Vec<_> = presented.iter().filter(|p| p.contribution < 0.0).cloned().collect();
    risk.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then_with(|| a.display_name.cmp(&b.display_name))
    });
    protective.sort_by(|a, b| {
        a.contribution
            .total_cmp(&b.contribution)
            .then_with(|| a.display_name.cmp(&b.display_name))
    });
    SplitView { risk, protective }
}

/// Case-insensitive substring match on the display name, restricted to the
/// given category codes. Empty query or empty set imposes no constraint.
pub fn search_filter(
    presented: &[PresentedContribution],
    query: &str,
    categories: &BTreeSet<String>,
) -> Vec<PresentedContribution> {
    let needle = query.trim().to_lowercase();
    presented
        .iter()
        .filter(|p| needle.is_empty() || p.display_name.to_lowercase().contains(&needle))
        .filter(|p| categories.is_empty() || categories.contains(&p.category_code))
        .cloned()
        .collect()
}
