//! Similar past cases and their event timelines.
//!
//! Similarity is plain Euclidean distance over z-scored model columns, every
//! factor weighted equally. Columns with zero spread in the reference set
//! contribute nothing. Search is an exhaustive linear scan.

use std::collections::HashMap;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataio::ReferenceDataset;
use crate::error::{Error, Result};
use crate::explain::{compute_reference_stats, ReferenceStats};
use crate::model::{CaseRecord, Model};

pub const DEFAULT_K: usize = 3;
pub const MAX_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Referral,
    Investigation,
    Removal,
    Services,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Referral => "referral",
            EventKind::Investigation => "investigation",
            EventKind::Removal => "removal",
            EventKind::Services => "services",
        }
    }

    pub const ALL: [EventKind; 4] = [
        EventKind::Referral,
        EventKind::Investigation,
        EventKind::Removal,
        EventKind::Services,
    ];
}

impl FromStr for EventKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidValue(format!(
                    "event kind must be one of referral, investigation, removal, services; got `{s}`"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseEvent {
    pub case_id: String,
    pub date: NaiveDate,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub case_id: String,
    pub events: Vec<CaseEvent>,
}

impl Timeline {
    /// Builds a timeline, keeping only this case's events, sorted by date
    /// (stable, so same-day events keep their input order).
    pub fn new(case_id: impl Into<String>, events: impl IntoIterator<Item = CaseEvent>) -> Self {
        let case_id = case_id.into();
        let mut events: Vec<CaseEvent> = events.into_iter().filter(|e| e.case_id == case_id).collect();
        events.sort_by_key(|e| e.date);
        Timeline { case_id, events }
    }

    pub fn empty(case_id: impl Into<String>) -> Self {
        Timeline {
            case_id: case_id.into(),
            events: Vec::new(),
        }
    }
}

/// All events of a corpus, grouped by case.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    by_case: HashMap<String, Timeline>,
}

impl EventLog {
    pub fn new(events: impl IntoIterator<Item = CaseEvent>) -> Self {
        let mut grouped: HashMap<String, Vec<CaseEvent>> = HashMap::new();
        for e in events {
            grouped.entry(e.case_id.clone()).or_default().push(e);
        }
        EventLog {
            by_case: grouped
                .into_iter()
                .map(|(id, evs)| (id.clone(), Timeline::new(id, evs)))
                .collect(),
        }
    }

    pub fn timeline(&self, case_id: &str) -> Timeline {
        self.by_case
            .get(case_id)
            .cloned()
            .unwrap_or_else(|| Timeline::empty(case_id))
    }

    pub fn event_count(&self) -> usize {
        self.by_case.values().map(|t| t.events.len()).sum()
    }

    /// All events, grouped by case id ascending.
    pub fn events(&self) -> Vec<&CaseEvent> {
        let mut ids: Vec<&String> = self.by_case.keys().collect();
        ids.sort();
        ids.into_iter()
            .flat_map(|id| self.by_case[id].events.iter())
            .collect()
    }
}

pub fn build_standardizer(model: &Model, reference: &ReferenceDataset) -> Result<ReferenceStats> {
    compute_reference_stats(model, reference)
}

fn align_to_stats(case: &CaseRecord, stats: &ReferenceStats) -> Result<Vec<f64>> {
    let out = stats
        .means
        .keys()
        .map(|k| case.value(k).ok_or_else(|| Error::missing(k.as_str())))
        .collect::<Result<Vec<f64>>>()?;
    if case.values.len() != out.len() {
        if let Some(extra) = case.values.keys().find(|k| !stats.means.contains_key(*k)) {
            return Err(Error::unexpected(extra.as_str()));
        }
    }
    Ok(out)
}

/// Distance between two aligned value vectors under per-column spreads.
pub fn standardized_distance(a: &[f64], b: &[f64], stds: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(stds)
        .filter(|(_, &s)| s > 0.0)
        .map(|((x, y), s)| {
            let z = (x - y) / s;
            z * z
        })
        .sum::<f64>()
        .sqrt()
}

pub fn distance(a: &CaseRecord, b: &CaseRecord, stats: &ReferenceStats) -> Result<f64> {
    let xa = align_to_stats(a, stats)?;
    let xb = align_to_stats(b, stats)?;
    Ok(standardized_distance(&xa, &xb, &stats.std_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub case_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub neighbors: Vec<Neighbor>,
    pub requested: usize,
    /// Fewer than `requested` candidates were available.
    pub truncated: bool,
}

/// The `k` reference cases nearest to `case`, never including a reference
/// row with the query's own id. Ties are broken by case id.
pub fn find_similar(
    case: &CaseRecord,
    reference: &ReferenceDataset,
    stats: &ReferenceStats,
    k: usize,
) -> Result<NeighborList> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if reference.is_empty() {
        return Err(Error::InsufficientReference {
            required: 1,
            available: 0,
        });
    }
    if !reference.factor_names().iter().map(String::as_str).eq(stats.means.keys().map(String::as_str)) {
        return Err(Error::InvalidInput(
            "reference statistics do not match the reference dataset's factors".into(),
        ));
    }
    let query = align_to_stats(case, stats)?;
    let stds = stats.std_vec();
    let mut scored: Vec<Neighbor> = reference
        .cases()
        .iter()
        .zip(reference.rows())
        .filter(|(c, _)| c.id != case.id)
        .map(|(c, row)| Neighbor {
            case_id: c.id.clone(),
            distance: standardized_distance(&query, row, &stds),
        })
        .collect();
    let available = scored.len();
    scored.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.case_id.cmp(&b.case_id))
    });
    scored.truncate(k);
    Ok(NeighborList {
        neighbors: scored,
        requested: k,
        truncated: available < k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineView {
    pub axis_start: Option<NaiveDate>,
    pub axis_end: Option<NaiveDate>,
    /// No row has any event, so there is no axis to draw.
    pub empty: bool,
    /// Current case first, then neighbors in rank order.
    pub rows: Vec<Timeline>,
}

pub fn assemble_timelines(current: Timeline, neighbor_timelines: Vec<Timeline>) -> TimelineView {
    let mut rows = Vec::with_capacity(1 + neighbor_timelines.len());
    rows.push(current);
    rows.extend(neighbor_timelines);
    let dates = rows.iter().flat_map(|t| t.events.iter().map(|e| e.date));
    let (start, end) = dates.fold((None, None), |(lo, hi): (Option<NaiveDate>, Option<NaiveDate>), d| {
        (Some(lo.map_or(d, |l| l.min(d))), Some(hi.map_or(d, |h| h.max(d))))
    });
    TimelineView {
        axis_start: start,
        axis_end: end,
        empty: start.is_none(),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborResult {
    pub case_id: String,
    pub neighbors: Vec<Neighbor>,
    pub truncated: bool,
    pub axis_start: Option<NaiveDate>,
    pub axis_end: Option<NaiveDate>,
    pub axis_empty: bool,
    pub timelines: Vec<Timeline>,
}

impl NeighborResult {
    pub fn new(case_id: &str, list: NeighborList, events: &EventLog) -> Self {
        let view = assemble_timelines(
            events.timeline(case_id),
            list.neighbors.iter().map(|n| events.timeline(&n.case_id)).collect(),
        );
        NeighborResult {
            case_id: case_id.to_string(),
            neighbors: list.neighbors,
            truncated: list.truncated,
            axis_start: view.axis_start,
            axis_end: view.axis_end,
            axis_empty: view.empty,
            timelines: view.rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn ev(id: &str, date: &str, kind: EventKind) -> CaseEvent {
        CaseEvent {
            case_id: id.into(),
            date: d(date),
            kind,
            note: None,
        }
    }

    fn two_col_stats() -> ReferenceStats {
        ReferenceStats {
            means: [("a".to_string(), 0.0), ("b".to_string(), 5.0)].into_iter().collect(),
            stds: [("a".to_string(), 2.0), ("b".to_string(), 0.5)].into_iter().collect(),
            count: 10,
        }
    }

    #[test]
    fn one_sigma_apart_is_distance_one() {
        let s = two_col_stats();
        let a = CaseRecord::new("a", [("a", 1.0), ("b", 5.0)]);
        let b = CaseRecord::new("b", [("a", 3.0), ("b", 5.0)]);
        assert_eq!(distance(&a, &b, &s).unwrap(), 1.0);
        let c = CaseRecord::new("c", [("a", 1.0), ("b", 5.5)]);
        assert_eq!(distance(&a, &c, &s).unwrap(), 1.0);
        assert_eq!(distance(&a, &a, &s).unwrap(), 0.0);
        assert_eq!(distance(&a, &b, &s).unwrap(), distance(&b, &a, &s).unwrap());
    }

    #[test]
    fn zero_spread_columns_are_ignored() {
        let mut s = two_col_stats();
        s.stds["b"] = 0.0;
        let a = CaseRecord::new("a", [("a", 1.0), ("b", 5.0)]);
        let b = CaseRecord::new("b", [("a", 1.0), ("b", 900.0)]);
        assert_eq!(distance(&a, &b, &s).unwrap(), 0.0);
    }

    #[test]
    fn distance_schema_mismatch() {
        let s = two_col_stats();
        let a = CaseRecord::new("a", [("a", 1.0)]);
        assert!(matches!(distance(&a, &a, &s), Err(Error::SchemaMismatch { .. })));
    }

    fn grid_reference() -> (Model, ReferenceDataset, ReferenceStats) {
        let m = Model::new(0.0, [("a", 1.0), ("b", 1.0)], "y").unwrap();
        let cases: Vec<_> = (0..100)
            .map(|i| CaseRecord::new(format!("c{i:03}"), [("a", (i % 10) as f64), ("b", (i / 10) as f64)]))
            .collect();
        let r = ReferenceDataset::new(&m, cases).unwrap();
        let s = build_standardizer(&m, &r).unwrap();
        (m, r, s)
    }

    #[test]
    fn duplicate_of_query_ranks_first_and_self_is_excluded() {
        let (_, r, s) = grid_reference();
        let q = CaseRecord::new("query", r.case("c042").unwrap().values.clone());
        let res = find_similar(&q, &r, &s, 3).unwrap();
        assert_eq!(res.neighbors.len(), 3);
        assert_eq!(res.neighbors[0].case_id, "c042");
        assert_eq!(res.neighbors[0].distance, 0.0);
        assert!(!res.truncated);

        let own = r.case("c042").unwrap().clone();
        let res = find_similar(&own, &r, &s, 5).unwrap();
        assert!(res.neighbors.iter().all(|n| n.case_id != "c042"));
        assert!(res.neighbors.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn ties_break_by_id_and_truncation_flags() {
        let (_, r, s) = grid_reference();
        let own = r.case("c055").unwrap().clone();
        let res = find_similar(&own, &r, &s, 4).unwrap();
        // a and b have equal spreads, so the four axis neighbours tie
        let ids: Vec<_> = res.neighbors.iter().map(|n| n.case_id.as_str()).collect();
        assert_eq!(ids, ["c045", "c054", "c056", "c065"]);

        let res = find_similar(&own, &r, &s, 500).unwrap();
        assert_eq!(res.neighbors.len(), 99);
        assert!(res.truncated);
        assert!(find_similar(&own, &r, &s, 0).is_err());
    }

    #[test]
    fn timeline_axis_spans_all_rows() {
        let cur = Timeline::new("q", vec![ev("q", "2018-06-01", EventKind::Removal), ev("q", "2015-01-01", EventKind::Referral)]);
        assert_eq!(cur.events[0].date, d("2015-01-01"));
        let v = assemble_timelines(cur.clone(), vec![]);
        assert_eq!((v.axis_start, v.axis_end), (Some(d("2015-01-01")), Some(d("2018-06-01"))));

        let early = Timeline::new("n", vec![ev("n", "2012-03-04", EventKind::Investigation)]);
        let v = assemble_timelines(cur, vec![Timeline::empty("z"), early]);
        assert_eq!(v.axis_start, Some(d("2012-03-04")));
        assert_eq!(v.axis_end, Some(d("2018-06-01")));
        assert_eq!(v.rows[0].case_id, "q");
        assert_eq!(v.rows[1].events.len(), 0);
        assert!(!v.empty);

        let v = assemble_timelines(Timeline::empty("q"), vec![Timeline::empty("a")]);
        assert!(v.empty && v.axis_start.is_none() && v.axis_end.is_none());
    }

    #[test]
    fn event_kind_parsing() {
        assert_eq!("removal".parse::<EventKind>().unwrap(), EventKind::Removal);
        assert!("court".parse::<EventKind>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-50f64..50.0, 4)
        }

        proptest! {
            #[test]
            fn metric_axioms(a in vec3(), b in vec3(), c in vec3(),
                             stds in prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..10.0], 4)) {
                let dab = standardized_distance(&a, &b, &stds);
                let dba = standardized_distance(&b, &a, &stds);
                let dac = standardized_distance(&a, &c, &stds);
                let dcb = standardized_distance(&c, &b, &stds);
                prop_assert!(dab >= 0.0);
                prop_assert_eq!(dab, dba);
                prop_assert_eq!(standardized_distance(&a, &a, &stds), 0.0);
                prop_assert!(dab <= dac + dcb + 1e-9);
                let same_z = a.iter().zip(&b).zip(&stds).all(|((x, y), s)| *s == 0.0 || x == y);
                prop_assert_eq!(dab == 0.0, same_z);
            }
        }
    }
}
