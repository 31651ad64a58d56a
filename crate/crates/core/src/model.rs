//! The additive risk model and the translation of its raw output into the
//! 1-20 risk score.
//!
//! Raw output is `intercept + Σ weight·value`. Scores come from ventile
//! binning of raw outputs over a reference population: 19 cutpoints at the
//! empirical quantiles `j/20`, and a case scores `1 + #{cutpoints < raw}`.
//! A raw output exactly on a cutpoint therefore falls in the lower score.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataio::ReferenceDataset;
use crate::error::{Error, Result};
use crate::stats;

/// Number of cutpoints separating the 20 score bins.
pub const N_CUTPOINTS: usize = 19;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    intercept: f64,
    weights: IndexMap<String, f64>,
    outcome_name: String,
}

impl Model {
    pub fn new<I, S>(intercept: f64, weights: I, outcome_name: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        if !intercept.is_finite() {
            return Err(Error::InvalidInput(format!(
                "intercept must be finite, got {intercept}"
            )));
        }
        let mut map = IndexMap::new();
        for (name, w) in weights {
            let name = name.into();
            if name.is_empty() {
                return Err(Error::InvalidInput("factor names must be non-empty".into()));
            }
            if !w.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "weight for `{name}` must be finite, got {w}"
                )));
            }
            if map.insert(name.clone(), w).is_some() {
                return Err(Error::InvalidInput(format!("duplicate factor `{name}`")));
            }
        }
        Ok(Model {
            intercept,
            weights: map,
            outcome_name: outcome_name.into(),
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn weights(&self) -> &IndexMap<String, f64> {
        &self.weights
    }

    pub fn weight(&self, factor: &str) -> Option<f64> {
        self.weights.get(factor).copied()
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn n_factors(&self) -> usize {
        self.weights.len()
    }

    pub fn factor_names(&self) -> impl ExactSizeIterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn factor_index(&self, factor: &str) -> Option<usize> {
        self.weights.get_index_of(factor)
    }

    /// Lays out a case's values in model factor order.
    ///
    /// Fails on the first missing factor (in model order) and then on the
    /// first value keyed by a name the model does not know.
    pub fn align(&self, case: &CaseRecord) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.weights.len());
        for name in self.weights.keys() {
            match case.values.get(name) {
                Some(v) => out.push(*v),
                None => return Err(Error::missing(name.as_str())),
            }
        }
        if case.values.len() != out.len() {
            if let Some(extra) = case.values.keys().find(|k| !self.weights.contains_key(*k)) {
                return Err(Error::unexpected(extra.as_str()));
            }
        }
        Ok(out)
    }

    /// Raw output for values already in model order.
    pub fn predict_dense(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights
            .values()
            .zip(values)
            .fold(self.intercept, |acc, (w, x)| acc + w * x)
    }

    pub fn predict_raw(&self, case: &CaseRecord) -> Result<f64> {
        let x = self.align(case)?;
        Ok(self.predict_dense(&x))
    }
}

/// One referral: factor values keyed by model factor name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub values: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

impl CaseRecord {
    pub fn new<I, S>(id: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        CaseRecord {
            id: id.into(),
            values: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            narrative: None,
        }
    }

    pub fn with_narrative(mut self, narrative: impl Into<String>) -> Self {
        self.narrative = Some(narrative.into());
        self
    }

    pub fn value(&self, factor: &str) -> Option<f64> {
        self.values.get(factor).copied()
    }
}

/// Integer risk score in `1..=20`; higher means higher predicted risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RiskScore(u8);

impl RiskScore {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 20;

    pub fn new(value: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(RiskScore(value))
        } else {
            Err(Error::InvalidInput(format!(
                "risk score must be in {}..={}, got {value}",
                Self::MIN,
                Self::MAX
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = RiskScore> {
        (Self::MIN..=Self::MAX).map(RiskScore)
    }
}

impl TryFrom<u8> for RiskScore {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        RiskScore::new(v)
    }
}

impl From<RiskScore> for u8 {
    fn from(s: RiskScore) -> u8 {
        s.0
    }
}

impl std::fmt::Display for RiskScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<f64>")]
pub struct ScoreBins {
    cutpoints: [f64; N_CUTPOINTS],
}

impl ScoreBins {
    pub fn new(cutpoints: Vec<f64>) -> Result<Self> {
        let arr: [f64; N_CUTPOINTS] = cutpoints.try_into().map_err(|v: Vec<f64>| {
            Error::InvalidInput(format!(
                "expected exactly {N_CUTPOINTS} score cutpoints, got {}",
                v.len()
            ))
        })?;
        if let Some(bad) = arr.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "score cutpoints must be finite, got {bad}"
            )));
        }
        if arr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(
                "score cutpoints must be non-decreasing".into(),
            ));
        }
        Ok(ScoreBins { cutpoints: arr })
    }

    /// Ventile cutpoints of a population of raw outputs.
    pub fn from_raw_outputs(raw: &[f64]) -> Result<Self> {
        if raw.len() < 20 {
            return Err(Error::InsufficientReference {
                required: 20,
                available: raw.len(),
            });
        }
        if let Some(bad) = raw.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "raw outputs must be finite, got {bad}"
            )));
        }
        let sorted = stats::sorted_copy(raw);
        let cutpoints = (1..=N_CUTPOINTS)
            .map(|j| stats::quantile_sorted(&sorted, j as f64 / 20.0).expect("non-empty"))
            .collect();
        ScoreBins::new(cutpoints)
    }

    pub fn cutpoints(&self) -> &[f64; N_CUTPOINTS] {
        &self.cutpoints
    }
}

impl From<ScoreBins> for Vec<f64> {
    fn from(b: ScoreBins) -> Self {
        b.cutpoints.to_vec()
    }
}

pub fn fit_score_bins(model: &Model, reference: &ReferenceDataset) -> Result<ScoreBins> {
    let raw = reference.raw_outputs(model)?;
    ScoreBins::from_raw_outputs(&raw)
}

pub fn to_risk_score(raw: f64, bins: &ScoreBins) -> Result<RiskScore> {
    if !raw.is_finite() {
        return Err(Error::InvalidInput(format!(
            "raw output must be finite, got {raw}"
        )));
    }
    let exceeded = bins.cutpoints.iter().filter(|&&t| raw > t).count();
    Ok(RiskScore(1 + exceeded as u8))
}

pub fn predict_score(model: &Model, bins: &ScoreBins, case: &CaseRecord) -> Result<RiskScore> {
    to_risk_score(model.predict_raw(case)?, bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> Model {
        Model::new(0.1, [("a", 0.5), ("b", -0.2), ("c", 0.3)], "removal_within_2y").unwrap()
    }

    fn toy_case(x: [f64; 3]) -> CaseRecord {
        CaseRecord::new("c1", [("a", x[0]), ("b", x[1]), ("c", x[2])])
    }

    fn bins_1_to_100() -> ScoreBins {
        let raw: Vec<f64> = (1..=100).map(f64::from).collect();
        ScoreBins::from_raw_outputs(&raw).unwrap()
    }

    #[test]
    fn predict_raw_matches_dot_product() {
        let m = toy_model();
        let raw = m.predict_raw(&toy_case([3.0, 1.0, 1.0])).unwrap();
        let dot: f64 = 0.1 + [0.5, -0.2, 0.3].iter().zip([3.0, 1.0, 1.0]).map(|(w, x)| w * x).sum::<f64>();
        assert!((raw - 1.7).abs() < 1e-12);
        assert!((raw - dot).abs() < 1e-12);
    }

    #[test]
    fn zero_case_returns_intercept() {
        let m = toy_model();
        assert_eq!(m.predict_raw(&toy_case([0.0; 3])).unwrap(), 0.1);
    }

    #[test]
    fn missing_factor_is_named() {
        let m = toy_model();
        let case = CaseRecord::new("c", [("a", 1.0), ("c", 1.0)]);
        match m.predict_raw(&case) {
            Err(Error::SchemaMismatch { factor, problem: crate::error::SchemaProblem::Missing }) => {
                assert_eq!(factor, "b")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_factor_is_named() {
        let m = toy_model();
        let case = CaseRecord::new("c", [("a", 1.0), ("b", 1.0), ("c", 1.0), ("zz", 0.0)]);
        match m.predict_raw(&case) {
            Err(Error::SchemaMismatch { factor, .. }) => assert_eq!(factor, "zz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn model_rejects_bad_weights() {
        assert!(Model::new(f64::NAN, [("a", 1.0)], "y").is_err());
        assert!(Model::new(0.0, [("a", f64::INFINITY)], "y").is_err());
        assert!(Model::new(0.0, [("", 1.0)], "y").is_err());
        assert!(Model::new(0.0, [("a", 1.0), ("a", 2.0)], "y").is_err());
    }

    #[test]
    fn ventile_cutpoints_on_1_to_100() {
        let b = bins_1_to_100();
        assert!((b.cutpoints()[0] - 5.95).abs() < 1e-12);
        assert!((b.cutpoints()[9] - 50.5).abs() < 1e-12);
        assert!((b.cutpoints()[18] - 95.05).abs() < 1e-12);
    }

    #[test]
    fn constant_population_gives_constant_cutpoints() {
        let b = ScoreBins::from_raw_outputs(&[2.5; 40]).unwrap();
        assert!(b.cutpoints().iter().all(|&c| c == 2.5));
        // on-cutpoint ties fall in the lowest score
        assert_eq!(to_risk_score(2.5, &b).unwrap().get(), 1);
        assert_eq!(to_risk_score(2.6, &b).unwrap().get(), 20);
    }

    #[test]
    fn too_few_reference_outputs() {
        let raw: Vec<f64> = (0..19).map(f64::from).collect();
        assert!(matches!(
            ScoreBins::from_raw_outputs(&raw),
            Err(Error::InsufficientReference { required: 20, available: 19 })
        ));
    }

    #[test]
    fn score_translation_examples() {
        let b = bins_1_to_100();
        assert_eq!(to_risk_score(50.0, &b).unwrap().get(), 10);
        assert_eq!(to_risk_score(-1e9, &b).unwrap().get(), 1);
        assert_eq!(to_risk_score(1e9, &b).unwrap().get(), 20);
        assert!(to_risk_score(f64::NAN, &b).is_err());
        assert!(to_risk_score(f64::INFINITY, &b).is_err());
    }

    #[test]
    fn predict_score_composes() {
        let b = bins_1_to_100();
        let m = Model::new(0.0, [("a", 1.0)], "y").unwrap();
        let case = CaseRecord::new("x", [("a", 50.0)]);
        assert_eq!(predict_score(&m, &b, &case).unwrap().get(), 10);
        assert_eq!(predict_score(&m, &b, &case).unwrap(), predict_score(&m, &b, &case.clone()).unwrap());
        let lowest = CaseRecord::new("x", [("a", 1.0)]);
        assert_eq!(predict_score(&m, &b, &lowest).unwrap().get(), 1);
    }

    #[test]
    fn bins_validate_shape() {
        assert!(ScoreBins::new(vec![0.0; 18]).is_err());
        assert!(ScoreBins::new(vec![0.0; 20]).is_err());
        let mut v: Vec<f64> = (0..19).map(f64::from).collect();
        v.swap(3, 4);
        assert!(ScoreBins::new(v).is_err());
        assert!(ScoreBins::new(vec![f64::NAN; 19]).is_err());
    }

    #[test]
    fn risk_score_range() {
        assert!(RiskScore::new(0).is_err());
        assert!(RiskScore::new(21).is_err());
        assert_eq!(RiskScore::all().count(), 20);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn score_is_monotone(mut pop in prop::collection::vec(-1e3f64..1e3, 20..200),
                                 a in -2e3f64..2e3, b in -2e3f64..2e3) {
                pop.push(0.0);
                let bins = ScoreBins::from_raw_outputs(&pop).unwrap();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(to_risk_score(lo, &bins).unwrap() <= to_risk_score(hi, &bins).unwrap());
            }

            #[test]
            fn prediction_is_linear(w in prop::collection::vec(-10f64..10.0, 1..12),
                                    b0 in -5f64..5.0,
                                    seed in prop::collection::vec((-100f64..100.0, -100f64..100.0), 12)) {
                let names: Vec<String> = (0..w.len()).map(|i| format!("f{i}")).collect();
                let m = Model::new(b0, names.iter().cloned().zip(w.iter().copied()), "y").unwrap();
                let x: Vec<f64> = seed.iter().take(w.len()).map(|p| p.0).collect();
                let y: Vec<f64> = seed.iter().take(w.len()).map(|p| p.1).collect();
                let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                let lhs = m.predict_dense(&x) + m.predict_dense(&y) - b0;
                let rhs = m.predict_dense(&sum);
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }
    }
}
