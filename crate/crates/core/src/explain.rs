//! Local factor contributions and global permutation importance.
//!
//! For an additive model with independent background features the Shapley
//! value of factor `i` has the closed form `weight_i * (x_i - mean_i)`,
//! with base value `intercept + Σ weight_i * mean_i`. [`shapley_bruteforce`]
//! enumerates every coalition and exists to check that closed form.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{OutcomeTable, ReferenceDataset};
use crate::error::{Error, Result};
use crate::model::{CaseRecord, Model};
use crate::stats;

/// Largest model the exhaustive coalition enumeration accepts.
pub const MAX_ORACLE_FACTORS: usize = 20;

pub const DEFAULT_IMPORTANCE_REPEATS: usize = 10;

pub const IMPORTANCE_METRIC: &str = "mean_squared_error";

/// Per-factor mean and population standard deviation over a reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub means: IndexMap<String, f64>,
    pub stds: IndexMap<String, f64>,
    pub count: usize,
}

impl ReferenceStats {
    fn check_model(&self, model: &Model) -> Result<()> {
        for (i, name) in model.factor_names().enumerate() {
            match self.means.get_index(i) {
                Some((k, _)) if k == name => {}
                _ => return Err(Error::missing(name)),
            }
        }
        if self.means.len() != model.n_factors() {
            let extra = &self.means.get_index(model.n_factors()).expect("longer").0;
            return Err(Error::unexpected(extra.as_str()));
        }
        Ok(())
    }

    pub fn mean_vec(&self) -> Vec<f64> {
        self.means.values().copied().collect()
    }

    pub fn std_vec(&self) -> Vec<f64> {
        self.stds.values().copied().collect()
    }
}

pub fn compute_reference_stats(model: &Model, reference: &ReferenceDataset) -> Result<ReferenceStats> {
    reference.check_model(model)?;
    if reference.is_empty() {
        return Err(Error::InsufficientReference {
            required: 1,
            available: 0,
        });
    }
    let mut means = IndexMap::with_capacity(model.n_factors());
    let mut stds = IndexMap::with_capacity(model.n_factors());
    for (j, name) in model.factor_names().enumerate() {
        let col = reference.column(j);
        let (m, s) = stats::mean_and_std(&col).expect("non-empty");
        means.insert(name.to_string(), m);
        stds.insert(name.to_string(), s);
    }
    Ok(ReferenceStats {
        means,
        stds,
        count: reference.len(),
    })
}

/// Signed per-factor attributions for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionSet {
    pub base_value: f64,
    pub contributions: IndexMap<String, f64>,
    pub raw_output: f64,
}

impl ContributionSet {
    pub fn total(&self) -> f64 {
        self.contributions.values().sum()
    }
}

pub fn local_contributions(model: &Model, stats: &ReferenceStats, case: &CaseRecord) -> Result<ContributionSet> {
    stats.check_model(model)?;
    let x = model.align(case)?;
    let mut base_value = model.intercept();
    let mut contributions = IndexMap::with_capacity(x.len());
    for ((name, &w), (&xi, &mu)) in model.weights().iter().zip(x.iter().zip(stats.means.values())) {
        base_value += w * mu;
        contributions.insert(name.clone(), w * (xi - mu));
    }
    Ok(ContributionSet {
        base_value,
        contributions,
        raw_output: model.predict_dense(&x),
    })
}

/// Exact Shapley values by enumerating all `2^n` coalitions. A coalition is
/// valued by evaluating the model with every factor outside it set to its
/// reference mean.
pub fn shapley_bruteforce(model: &Model, stats: &ReferenceStats, case: &CaseRecord) -> Result<ContributionSet> {
    let n = model.n_factors();
    if n > MAX_ORACLE_FACTORS {
        return Err(Error::TooLargeForOracle {
            factors: n,
            max: MAX_ORACLE_FACTORS,
        });
    }
    stats.check_model(model)?;
    let x = model.align(case)?;
    let mu = stats.mean_vec();

    let n_masks = 1usize << n;
    let mut hybrid = vec![0.0; n];
    let value: Vec<f64> = (0..n_masks)
        .map(|mask| {
            for j in 0..n {
                hybrid[j] = if mask & (1 << j) != 0 { x[j] } else { mu[j] };
            }
            model.predict_dense(&hybrid)
        })
        .collect();

    // weight of a coalition of size s not containing the player: s!(n-s-1)!/n! = 1 / (n * C(n-1, s))
    let coalition_weight: Vec<f64> = (0..n.max(1))
        .map(|s| 1.0 / (n as f64 * binomial(n.saturating_sub(1), s)))
        .collect();

    let mut contributions = IndexMap::with_capacity(n);
    for (i, name) in model.factor_names().enumerate() {
        let bit = 1usize << i;
        let mut phi = 0.0;
        for mask in (0..n_masks).filter(|m| m & bit == 0) {
            let s = mask.count_ones() as usize;
            phi += coalition_weight[s] * (value[mask | bit] - value[mask]);
        }
        contributions.insert(name.to_string(), phi);
    }
    Ok(ContributionSet {
        base_value: value[0],
        contributions,
        raw_output: value[n_masks - 1],
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub factor: String,
    pub raw_importance: f64,
    pub relative_importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<ImportanceEntry>,
    pub metric_name: String,
    pub baseline_loss: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl ImportanceReport {
    pub fn rank_of(&self, factor: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.factor == factor)
    }

    pub fn get(&self, factor: &str) -> Option<&ImportanceEntry> {
        self.entries.iter().find(|e| e.factor == factor)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// PRNG seed for one (factor, repeat) permutation.
pub fn permutation_seed(seed: u64, factor_index: usize, repeat: usize) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(factor_index as u64)) ^ repeat as u64)
}

/// Permutation importance: mean increase in squared error between raw
/// output and the 0/1 outcome when one factor's column is shuffled.
pub fn global_importance(
    model: &Model,
    reference: &ReferenceDataset,
    outcomes: &OutcomeTable,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    reference.check_model(model)?;
    if reference.is_empty() {
        return Err(Error::InsufficientReference {
            required: 1,
            available: 0,
        });
    }
    let labels = outcomes.aligned_labels(reference)?;
    let rows = reference.rows();
    let n = rows.len();
    let preds: Vec<f64> = rows.iter().map(|r| model.predict_dense(r)).collect();
    let baseline = mean_squared_error(&preds, &labels);

    let weights: Vec<f64> = model.weights().values().copied().collect();
    let raw: Vec<f64> = (0..model.n_factors())
        .into_par_iter()
        .map(|j| {
            let w = weights[j];
            let column = reference.column(j);
            let mut order: Vec<usize> = (0..n).collect();
            let mut total = 0.0;
            for r in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(permutation_seed(seed, j, r));
                order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
                order.shuffle(&mut rng);
                // additive model: swapping one input shifts the output by w * Δx
                let loss = (0..n)
                    .map(|i| {
                        let p = preds[i] + w * (column[order[i]] - column[i]);
                        let e = p - labels[i];
                        e * e
                    })
                    .sum::<f64>()
                    / n as f64;
                total += loss - baseline;
            }
            total / repeats as f64
        })
        .collect();

    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut entries: Vec<ImportanceEntry> = model
        .factor_names()
        .zip(&raw)
        .map(|(name, &r)| ImportanceEntry {
            factor: name.to_string(),
            raw_importance: r,
            relative_importance: if max > 0.0 { (r / max).max(0.0) } else { 0.0 },
        })
        .collect();
    entries.sort_by(|a, b| {
        b.raw_importance
            .total_cmp(&a.raw_importance)
            .then_with(|| a.factor.cmp(&b.factor))
    });
    Ok(ImportanceReport {
        entries,
        metric_name: IMPORTANCE_METRIC.to_string(),
        baseline_loss: baseline,
        repeats,
        seed,
    })
}

fn mean_squared_error(preds: &[f64], labels: &[f64]) -> f64 {
    preds
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / preds.len() as f64
}
