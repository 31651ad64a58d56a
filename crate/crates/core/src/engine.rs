//! Loaded, immutable serving state and the payloads built from it. The HTTP
//! service, the CLI's JSON output and the C ABI all go through these
//! builders, so their bodies agree field for field.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{load_all, Corpus, DataPaths, LoadedData, ValidationReport};
use crate::distributions::{distribution_bundle, DistributionBundle, SliceIndex};
use crate::error::{Error, Result};
use crate::explain::{
    compute_reference_stats, global_importance, local_contributions, ImportanceReport, ReferenceStats,
    DEFAULT_IMPORTANCE_REPEATS,
};
use crate::model::{CaseRecord, Model, RiskScore, ScoreBins};
use crate::neighbors::{find_similar, NeighborResult, DEFAULT_K, MAX_K};
use crate::present::{
    merge_contributions, presented_value, search_filter, sort_by_magnitude, split_view, top_k, PresentationSchema,
    PresentedContribution, PresentedFactor, PresentedKind, DEFAULT_TOP_K,
};
use crate::whatif::{flip_all_booleans, whatif_score, FactorChange, FlipTable, WhatIfResult, MAX_CHANGES};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    /// Enables the similar-cases view.
    pub review_mode: bool,
    pub importance_repeats: usize,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            review_mode: false,
            importance_repeats: DEFAULT_IMPORTANCE_REPEATS,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    model: Model,
    bins: ScoreBins,
    bins_from_file: bool,
    schema: PresentationSchema,
    stats: ReferenceStats,
    corpus: Corpus,
    raws: Vec<f64>,
    slices: SliceIndex,
    importance: ImportanceReport,
    config: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub score: RiskScore,
    pub raw_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseListPayload {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub cases: Vec<CaseSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedValue {
    pub factor: String,
    pub kind: PresentedKind,
    pub description: String,
    pub displayed_value: String,
    pub category_code: String,
    pub category_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDetail {
    pub case_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
    pub score: RiskScore,
    pub raw_output: f64,
    pub values: Vec<PresentedValue>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContributionView {
    #[default]
    Top,
    All,
    Split,
}

impl FromStr for ContributionView {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(ContributionView::Top),
            "all" => Ok(ContributionView::All),
            "split" => Ok(ContributionView::Split),
            other => Err(Error::InvalidInput(format!(
                "unknown view `{other}` (expected top, all or split)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContributionQuery {
    pub view: ContributionView,
    /// Row limit for the top view; defaults to [`DEFAULT_TOP_K`].
    pub top_k: Option<usize>,
    pub query: String,
    pub categories: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionsPayload {
    pub case_id: String,
    pub score: RiskScore,
    pub raw_output: f64,
    pub base_value: f64,
    pub view: ContributionView,
    pub total_factors: usize,
    /// Rows left after the search and category filters.
    pub matched: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<PresentedContribution>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<Vec<PresentedContribution>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protective: Option<Vec<PresentedContribution>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub code: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelInfo {
    pub outcome_name: String,
    pub intercept: f64,
    pub n_model_factors: usize,
    pub reference_size: usize,
    pub score_min: u8,
    pub score_max: u8,
    pub cutpoints: Vec<f64>,
    pub cutpoints_from_file: bool,
    pub default_top_k: usize,
    pub max_changes: usize,
    pub review_mode: bool,
    pub categories: Vec<Category>,
    pub factors: Vec<PresentedFactor>,
}

/// Body of a what-if request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub changes: Vec<FactorChange>,
}

impl Engine {
    pub fn build(data: LoadedData, config: EngineConfig) -> Result<Self> {
        let LoadedData {
            model,
            bins,
            bins_from_file,
            schema,
            corpus,
            ..
        } = data;
        let reference = &corpus.reference;
        let stats = compute_reference_stats(&model, reference)?;
        let raws = reference.raw_outputs(&model)?;
        let slices = SliceIndex::build(&model, &bins, reference)?;
        let importance = global_importance(
            &model,
            reference,
            &corpus.outcomes,
            config.importance_repeats,
            config.seed,
        )?;
        Ok(Engine {
            model,
            bins,
            bins_from_file,
            schema,
            stats,
            corpus,
            raws,
            slices,
            importance,
            config,
        })
    }

    /// Loads and validates all five files. A failed validation comes back
    /// as [`Error::Validation`] carrying the full report.
    pub fn open(paths: &DataPaths, config: EngineConfig) -> Result<Self> {
        match load_all(paths) {
            (_, Some(data)) => Engine::build(data, config),
            (report, None) => Err(Error::Validation(report)),
        }
    }

    /// Like [`Engine::open`], but also returns the report (which may hold
    /// warnings) on success.
    pub fn open_with_report(paths: &DataPaths, config: EngineConfig) -> Result<(Self, ValidationReport)> {
        match load_all(paths) {
            (report, Some(data)) => Ok((Engine::build(data, config)?, report)),
            (report, None) => Err(Error::Validation(report)),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn bins(&self) -> &ScoreBins {
        &self.bins
    }

    pub fn schema(&self) -> &PresentationSchema {
        &self.schema
    }

    pub fn stats(&self) -> &ReferenceStats {
        &self.stats
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn slices(&self) -> &SliceIndex {
        &self.slices
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn review_mode(&self) -> bool {
        self.config.review_mode
    }

    fn position(&self, id: &str) -> Result<usize> {
        self.corpus
            .reference
            .position(id)
            .ok_or_else(|| Error::CaseNotFound(id.to_string()))
    }

    pub fn case(&self, id: &str) -> Result<&CaseRecord> {
        Ok(&self.corpus.reference.cases()[self.position(id)?])
    }

    pub fn score_of(&self, id: &str) -> Result<RiskScore> {
        let i = self.position(id)?;
        Ok(self.slices.score_of(i).expect("index covers every row"))
    }

    pub fn raw_of(&self, id: &str) -> Result<f64> {
        Ok(self.raws[self.position(id)?])
    }

    pub fn case_list(&self, offset: usize, limit: usize) -> Result<CaseListPayload> {
        if limit == 0 || limit > MAX_PAGE_SIZE {
            return Err(Error::InvalidInput(format!("limit must be in 1..={MAX_PAGE_SIZE}")));
        }
        let cases = self.corpus.reference.cases();
        let cases = cases
            .iter()
            .enumerate()
            .skip(offset)
            .take(limit)
            .map(|(i, c)| CaseSummary {
                case_id: c.id.clone(),
                score: self.slices.score_of(i).expect("index covers every row"),
                raw_output: self.raws[i],
            })
            .collect();
        Ok(CaseListPayload {
            total: self.corpus.reference.len(),
            offset,
            limit,
            cases,
        })
    }

    pub fn case_detail(&self, id: &str) -> Result<CaseDetail> {
        let case = self.case(id)?;
        let values = self
            .schema
            .factors()
            .iter()
            .map(|f| {
                Ok(PresentedValue {
                    factor: f.display_name.clone(),
                    kind: f.kind,
                    description: f.description.clone(),
                    displayed_value: presented_value(&self.schema, f, case)?,
                    category_code: f.category_code.clone(),
                    category_name: f.category_name.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(CaseDetail {
            case_id: case.id.clone(),
            narrative: case.narrative.clone(),
            score: self.score_of(id)?,
            raw_output: self.raw_of(id)?,
            values,
        })
    }

    /// Presented contributions for every factor, in schema order.
    pub fn presented_contributions(&self, id: &str) -> Result<(f64, Vec<PresentedContribution>)> {
        let case = self.case(id)?;
        let set = local_contributions(&self.model, &self.stats, case)?;
        Ok((set.base_value, merge_contributions(&self.schema, &set, case)?))
    }

    pub fn contributions(&self, id: &str, q: &ContributionQuery) -> Result<ContributionsPayload> {
        let (base_value, all) = self.presented_contributions(id)?;
        let filtered = search_filter(&all, &q.query, &q.categories);
        let (rows, risk, protective) = match q.view {
            ContributionView::Top => {
                let k = q.top_k.unwrap_or(DEFAULT_TOP_K);
                if k == 0 {
                    return Err(Error::InvalidInput("top must be at least 1".into()));
                }
                (Some(top_k(&filtered, k)), None, None)
            }
            ContributionView::All => (Some(sort_by_magnitude(&filtered)), None, None),
            ContributionView::Split => {
                let s = split_view(&filtered);
                (None, Some(s.risk), Some(s.protective))
            }
        };
        Ok(ContributionsPayload {
            case_id: id.to_string(),
            score: self.score_of(id)?,
            raw_output: self.raw_of(id)?,
            base_value,
            view: q.view,
            total_factors: all.len(),
            matched: filtered.len(),
            rows,
            risk,
            protective,
        })
    }

    pub fn whatif(&self, id: &str, changes: &[FactorChange]) -> Result<WhatIfResult> {
        whatif_score(&self.model, &self.bins, &self.schema, self.case(id)?, changes)
    }

    pub fn flips(&self, id: &str) -> Result<FlipTable> {
        flip_all_booleans(&self.model, &self.bins, &self.schema, self.case(id)?)
    }

    pub fn model_info(&self) -> ModelInfo {
        let mut categories: Vec<Category> = Vec::new();
        for f in self.schema.factors() {
            if !categories.iter().any(|c| c.code == f.category_code) {
                categories.push(Category {
                    code: f.category_code.clone(),
                    name: f.category_name.clone(),
                });
            }
        }
        ModelInfo {
            outcome_name: self.model.outcome_name().to_string(),
            intercept: self.model.intercept(),
            n_model_factors: self.model.n_factors(),
            reference_size: self.corpus.reference.len(),
            score_min: RiskScore::MIN,
            score_max: RiskScore::MAX,
            cutpoints: self.bins.cutpoints().to_vec(),
            cutpoints_from_file: self.bins_from_file,
            default_top_k: DEFAULT_TOP_K,
            max_changes: MAX_CHANGES,
            review_mode: self.config.review_mode,
            categories,
            factors: self.schema.factors().to_vec(),
        }
    }

    pub fn importance(&self) -> &ImportanceReport {
        &self.importance
    }

    pub fn distributions(&self, score: RiskScore, only: Option<&[String]>) -> Result<DistributionBundle> {
        distribution_bundle(
            &self.slices,
            &self.corpus.reference,
            &self.corpus.outcomes,
            &self.schema,
            score,
            only,
        )
    }

    /// Nearest reference cases with their event timelines. Only available
    /// in review mode.
    pub fn similar(&self, id: &str, k: Option<usize>) -> Result<NeighborResult> {
        if !self.config.review_mode {
            return Err(Error::FeatureDisabled("similar cases (review mode is off)".into()));
        }
        let k = k.unwrap_or(DEFAULT_K);
        if !(1..=MAX_K).contains(&k) {
            return Err(Error::InvalidInput(format!("k must be in 1..={MAX_K}, got {k}")));
        }
        let case = self.case(id)?;
        let list = find_similar(case, &self.corpus.reference, &self.stats, k)?;
        Ok(NeighborResult::new(id, list, &self.corpus.events))
    }
}
