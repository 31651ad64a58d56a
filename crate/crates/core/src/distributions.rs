//! Retrospective statistics for the reference cases that share a risk score:
//! removal rate, and how each presented factor is distributed among them.

use serde::{Deserialize, Serialize};

use crate::dataio::{OutcomeTable, ReferenceDataset};
use crate::error::{Error, Result};
use crate::model::{to_risk_score, CaseRecord, Model, RiskScore, ScoreBins};
use crate::present::{PresentationSchema, PresentedFactor, PresentedKind};
use crate::stats::{quantile_sorted, sorted_copy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSlice {
    pub score: RiskScore,
    pub case_count: usize,
    pub removed_count: usize,
    /// `None` when the slice is empty.
    pub removal_rate_pct: Option<f64>,
}

/// Five-number summary plus median, with the global range as whisker context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub global_min: f64,
    pub global_max: f64,
    pub slice_min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub slice_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub segments: Vec<Segment>,
}

impl SegmentStats {
    pub fn total_pct(&self) -> f64 {
        self.segments.iter().map(|s| s.pct).sum()
    }
}

/// Reference rows grouped by risk score, computed once.
#[derive(Debug, Clone)]
pub struct SliceIndex {
    scores: Vec<RiskScore>,
    members: Vec<Vec<usize>>,
}

impl SliceIndex {
    pub fn build(model: &Model, bins: &ScoreBins, reference: &ReferenceDataset) -> Result<Self> {
        let raws = reference.raw_outputs(model)?;
        let mut members = vec![Vec::new(); usize::from(RiskScore::MAX)];
        let mut scores = Vec::with_capacity(raws.len());
        for (i, raw) in raws.into_iter().enumerate() {
            let s = to_risk_score(raw, bins)?;
            members[usize::from(s.get() - 1)].push(i);
            scores.push(s);
        }
        Ok(SliceIndex { scores, members })
    }

    /// Score of each reference row, in row order.
    pub fn scores(&self) -> &[RiskScore] {
        &self.scores
    }

    pub fn score_of(&self, row: usize) -> Option<RiskScore> {
        self.scores.get(row).copied()
    }

    /// Row positions of the cases with this score, ascending.
    pub fn rows_for(&self, score: RiskScore) -> &[usize] {
        &self.members[usize::from(score.get() - 1)]
    }

    pub fn cases_for<'a>(&self, reference: &'a ReferenceDataset, score: RiskScore) -> Vec<&'a CaseRecord> {
        self.rows_for(score).iter().map(|&i| &reference.cases()[i]).collect()
    }

    pub fn slice(&self, reference: &ReferenceDataset, outcomes: &OutcomeTable, score: RiskScore) -> Result<ScoreSlice> {
        slice_from_cases(score, &self.cases_for(reference, score), outcomes)
    }
}

fn slice_from_cases(score: RiskScore, cases: &[&CaseRecord], outcomes: &OutcomeTable) -> Result<ScoreSlice> {
    let mut removed = 0;
    for c in cases {
        let o = outcomes
            .get(&c.id)
            .ok_or_else(|| Error::Alignment(format!("case `{}` has no outcome", c.id)))?;
        removed += usize::from(o.removed);
    }
    Ok(ScoreSlice {
        score,
        case_count: cases.len(),
        removed_count: removed,
        removal_rate_pct: (!cases.is_empty()).then(|| 100.0 * removed as f64 / cases.len() as f64),
    })
}

/// Removal statistics for the reference cases scored `score`, without a
/// precomputed index.
pub fn score_slice(
    reference: &ReferenceDataset,
    outcomes: &OutcomeTable,
    bins: &ScoreBins,
    model: &Model,
    score: RiskScore,
) -> Result<ScoreSlice> {
    let raws = reference.raw_outputs(model)?;
    let mut cases = Vec::new();
    for (c, raw) in reference.cases().iter().zip(raws) {
        if to_risk_score(raw, bins)? == score {
            cases.push(c);
        }
    }
    slice_from_cases(score, &cases, outcomes)
}

fn values_of(cases: &[&CaseRecord], factor: &str) -> Result<Vec<f64>> {
    cases
        .iter()
        .map(|c| c.value(factor).ok_or_else(|| Error::missing(factor)))
        .collect()
}

/// Percentage of slice cases with the factor set. `None` for an empty slice.
pub fn binary_distribution(slice: &[&CaseRecord], factor: &str) -> Result<Option<f64>> {
    if slice.is_empty() {
        return Ok(None);
    }
    let ones = values_of(slice, factor)?.iter().filter(|&&v| v == 1.0).count();
    Ok(Some(100.0 * ones as f64 / slice.len() as f64))
}

pub fn numeric_distribution(
    reference: &ReferenceDataset,
    slice: &[&CaseRecord],
    factor: &str,
) -> Result<Option<BoxStats>> {
    if slice.is_empty() {
        return Ok(None);
    }
    let j = reference
        .factor_names()
        .iter()
        .position(|f| f == factor)
        .ok_or_else(|| Error::missing(factor))?;
    let (global_min, global_max) = reference
        .rows()
        .iter()
        .map(|r| r[j])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let sorted = sorted_copy(&values_of(slice, factor)?);
    let q = |p| quantile_sorted(&sorted, p).expect("slice is non-empty");
    Ok(Some(BoxStats {
        global_min,
        global_max,
        slice_min: sorted[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        slice_max: sorted[sorted.len() - 1],
    }))
}

/// Share of slice cases per group label, in metadata order.
pub fn categorical_distribution(slice: &[&CaseRecord], factor: &PresentedFactor) -> Result<Option<SegmentStats>> {
    if factor.kind != PresentedKind::Categorical {
        return Err(Error::InvalidInput(format!("`{}` is not categorical", factor.display_name)));
    }
    if slice.is_empty() {
        return Ok(None);
    }
    let n = slice.len() as f64;
    let segments = factor
        .members
        .iter()
        .map(|m| {
            let active = values_of(slice, &m.factor)?.iter().filter(|&&v| v == 1.0).count();
            Ok(Segment {
                label: m.label.clone(),
                pct: 100.0 * active as f64 / n,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Some(SegmentStats { segments }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionStats {
    Binary { pct_true: Option<f64> },
    Numeric { box_stats: Option<BoxStats> },
    Categorical { segments: Option<SegmentStats> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDistribution {
    pub factor: String,
    pub description: String,
    pub category_code: String,
    pub category_name: String,
    #[serde(flatten)]
    pub stats: DistributionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionBundle {
    pub slice: ScoreSlice,
    pub factors: Vec<FactorDistribution>,
}

/// Slice statistics and per-factor distributions for one score. `only`
/// restricts the factors, by presented name, keeping schema order.
pub fn distribution_bundle(
    index: &SliceIndex,
    reference: &ReferenceDataset,
    outcomes: &OutcomeTable,
    schema: &PresentationSchema,
    score: RiskScore,
    only: Option<&[String]>,
) -> Result<DistributionBundle> {
    if let Some(names) = only {
        if let Some(bad) = names.iter().find(|n| schema.get(n).is_none()) {
            return Err(Error::InvalidInput(format!("unknown factor `{bad}`")));
        }
    }
    let cases = index.cases_for(reference, score);
    let slice = slice_from_cases(score, &cases, outcomes)?;
    let factors = schema
        .factors()
        .iter()
        .filter(|f| only.is_none_or(|names| names.contains(&f.display_name)))
        .map(|f| {
            let stats = match f.kind {
                PresentedKind::Binary => DistributionStats::Binary {
                    pct_true: binary_distribution(&cases, &f.sources[0])?,
                },
                PresentedKind::Numeric => DistributionStats::Numeric {
                    box_stats: numeric_distribution(reference, &cases, &f.sources[0])?,
                },
                PresentedKind::Categorical => DistributionStats::Categorical {
                    segments: categorical_distribution(&cases, f)?,
                },
            };
            Ok(FactorDistribution {
                factor: f.display_name.clone(),
                description: f.description.clone(),
                category_code: f.category_code.clone(),
                category_name: f.category_name.clone(),
                stats,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DistributionBundle { slice, factors })
}
