//! Shared domain types: raw log events, sessions, feature vectors and the
//! fixed effort-feature dictionary, and the query/URL popularity table.
//!
//! Everything here is immutable after construction and safe to share across
//! worker threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Query,
    Click,
    ScrollDown,
    Resize,
    ZoomIn,
    BookmarkClick,
    Pagination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuerySource {
    Manual,
    Suggested,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResultKind {
    Web,
    Image,
    Ad,
    Bookmark,
}

/// One parsed log record. Only the fields relevant to the record's `kind`
/// are populated; the rest stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub user_id: String,
    /// Milliseconds since epoch.
    pub timestamp: i64,
    pub kind: EventKind,
    pub query_text: Option<String>,
    pub query_source: Option<QuerySource>,
    pub clicked_url: Option<String>,
    pub result_kind: Option<ResultKind>,
    pub serp_image_impressions: Option<u64>,
    /// (width, height) in logical pixels.
    pub screen_size: Option<(u32, u32)>,
}

impl RawEvent {
    pub fn is_click(&self) -> bool {
        matches!(self.kind, EventKind::Click | EventKind::BookmarkClick)
    }

    /// Checks the per-kind field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.timestamp < 0 {
            return Err(Error::Data(format!("negative timestamp {}", self.timestamp)));
        }
        match self.kind {
            EventKind::Query => {
                if self.query_text.is_none() || self.query_source.is_none() {
                    return Err(Error::Data("query event missing text or source".into()));
                }
            }
            EventKind::Click | EventKind::BookmarkClick => {
                if self.clicked_url.is_none() || self.result_kind.is_none() {
                    return Err(Error::Data("click event missing url or result kind".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Platform {
    Mobile,
    Pc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Struggle,
    NonStruggle,
    Unlabeled,
}

/// Motivational state along the means-ends dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotivState {
    Telic,
    Paratelic,
    Unassigned,
}

/// A segmented search session: an ordered, non-empty run of one user's events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    pub platform: Platform,
    pub events: Vec<RawEvent>,
    pub label: Label,
    pub topic: Option<String>,
    pub state: MotivState,
}

impl Session {
    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::Data(format!("session {} has no events", self.session_id)));
        }
        let mut prev = i64::MIN;
        for ev in &self.events {
            if ev.user_id != self.user_id {
                return Err(Error::Data(format!(
                    "session {} mixes users {} and {}",
                    self.session_id, self.user_id, ev.user_id
                )));
            }
            if ev.timestamp < prev {
                return Err(Error::Data(format!(
                    "session {} events out of order",
                    self.session_id
                )));
            }
            prev = ev.timestamp;
            ev.validate()?;
        }
        Ok(())
    }

    pub fn queries(&self) -> impl Iterator<Item = &RawEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Query)
    }

    pub fn clicks(&self) -> impl Iterator<Item = &RawEvent> {
        self.events.iter().filter(|e| e.is_click())
    }
}

/// The seven Table-style effort feature groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    QueryEffort,
    ClickEffort,
    ReadEffort,
    ScrollEffort,
    ReformEffort,
    DiversifyEffort,
    RarityEffort,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::QueryEffort,
        FeatureGroup::ClickEffort,
        FeatureGroup::ReadEffort,
        FeatureGroup::ScrollEffort,
        FeatureGroup::ReformEffort,
        FeatureGroup::DiversifyEffort,
        FeatureGroup::RarityEffort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::QueryEffort => "QueryEffort",
            FeatureGroup::ClickEffort => "ClickEffort",
            FeatureGroup::ReadEffort => "ReadEffort",
            FeatureGroup::ScrollEffort => "ScrollEffort",
            FeatureGroup::ReformEffort => "ReformEffort",
            FeatureGroup::DiversifyEffort => "DiversifyEffort",
            FeatureGroup::RarityEffort => "RarityEffort",
        }
    }

    pub fn parse(s: &str) -> Result<FeatureGroup> {
        FeatureGroup::ALL
            .iter()
            .copied()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown feature group {s:?}")))
    }
}

/// The fixed effort-feature dictionary: name and group of every feature, in
/// the canonical column order used by the CSV export and the classifier
/// encoding. The name set is a build-time constant.
pub const FEATURE_DICTIONARY: &[(&str, FeatureGroup)] = &[
    // Efforts to query
    ("num_queries", FeatureGroup::QueryEffort),
    ("num_unique_queries", FeatureGroup::QueryEffort),
    ("avg_terms_per_query", FeatureGroup::QueryEffort),
    ("avg_chars_per_query", FeatureGroup::QueryEffort),
    ("pct_manual_queries", FeatureGroup::QueryEffort),
    ("pct_suggested_queries", FeatureGroup::QueryEffort),
    ("longest_query_position", FeatureGroup::QueryEffort),
    // Efforts to click
    ("total_clicks", FeatureGroup::ClickEffort),
    ("avg_clicks_per_query", FeatureGroup::ClickEffort),
    ("total_sat_clicks", FeatureGroup::ClickEffort),
    ("avg_sat_clicks_per_query", FeatureGroup::ClickEffort),
    ("pct_queries_without_clicks", FeatureGroup::ClickEffort),
    ("max_adjacent_queries_without_clicks", FeatureGroup::ClickEffort),
    ("avg_adjacent_queries_without_clicks", FeatureGroup::ClickEffort),
    ("total_image_clicks", FeatureGroup::ClickEffort),
    ("avg_image_clicks_per_query", FeatureGroup::ClickEffort),
    ("total_ad_clicks", FeatureGroup::ClickEffort),
    ("avg_ad_clicks_per_query", FeatureGroup::ClickEffort),
    ("total_bookmark_clicks", FeatureGroup::ClickEffort),
    ("avg_bookmark_clicks_per_query", FeatureGroup::ClickEffort),
    ("num_events", FeatureGroup::ClickEffort),
    ("clicks_at_queries_1_2", FeatureGroup::ClickEffort),
    ("clicks_at_queries_3_4", FeatureGroup::ClickEffort),
    ("clicks_at_queries_5_6", FeatureGroup::ClickEffort),
    ("ends_with_click", FeatureGroup::ClickEffort),
    // Efforts to read
    ("total_dwell_time", FeatureGroup::ReadEffort),
    ("avg_image_impressions_per_serp", FeatureGroup::ReadEffort),
    ("total_zoom_ins", FeatureGroup::ReadEffort),
    ("log_avg_dwell_per_click", FeatureGroup::ReadEffort),
    ("log_avg_dwell_per_click_excl_last_query", FeatureGroup::ReadEffort),
    ("log_time_to_first_sat_click", FeatureGroup::ReadEffort),
    ("log_avg_time_per_serp", FeatureGroup::ReadEffort),
    ("log_avg_time_per_serp_excl_last_query", FeatureGroup::ReadEffort),
    // Efforts to scroll
    ("screen_size", FeatureGroup::ScrollEffort),
    ("total_scroll_downs", FeatureGroup::ScrollEffort),
    ("avg_scroll_downs_per_query", FeatureGroup::ScrollEffort),
    // Efforts to re-formulate queries
    ("avg_cosine_to_first_query", FeatureGroup::ReformEffort),
    ("avg_cosine_query_pairs", FeatureGroup::ReformEffort),
    ("avg_edit_distance_adjacent", FeatureGroup::ReformEffort),
    ("num_query_generations", FeatureGroup::ReformEffort),
    ("num_query_specifications", FeatureGroup::ReformEffort),
    ("first_minus_avg_query_length", FeatureGroup::ReformEffort),
    ("stddev_query_length", FeatureGroup::ReformEffort),
    ("avg_terms_retained", FeatureGroup::ReformEffort),
    ("avg_terms_added", FeatureGroup::ReformEffort),
    ("avg_terms_removed", FeatureGroup::ReformEffort),
    ("avg_terms_substituted", FeatureGroup::ReformEffort),
    // Efforts to diversify
    ("pct_unique_urls", FeatureGroup::DiversifyEffort),
    ("pct_unique_domains", FeatureGroup::DiversifyEffort),
    ("total_unique_clicks", FeatureGroup::DiversifyEffort),
    ("num_unique_topics", FeatureGroup::DiversifyEffort),
    ("topic_entropy", FeatureGroup::DiversifyEffort),
    // Efforts to issue rare queries & rare clicks
    ("log_avg_query_frequency", FeatureGroup::RarityEffort),
    ("log_avg_query_sat_clicks", FeatureGroup::RarityEffort),
    ("log_avg_query_clicks", FeatureGroup::RarityEffort),
    ("avg_query_click_entropy", FeatureGroup::RarityEffort),
    ("log_avg_query_fastback_clicks", FeatureGroup::RarityEffort),
    ("log_avg_url_click_frequency", FeatureGroup::RarityEffort),
];

pub fn feature_count() -> usize {
    FEATURE_DICTIONARY.len()
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_DICTIONARY.iter().position(|(n, _)| *n == name)
}

pub fn feature_group(name: &str) -> Option<FeatureGroup> {
    FEATURE_DICTIONARY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, g)| *g)
}

/// Column indices of all features belonging to `group`, in dictionary order.
pub fn group_indices(group: FeatureGroup) -> Vec<usize> {
    FEATURE_DICTIONARY
        .iter()
        .enumerate()
        .filter(|(_, (_, g))| *g == group)
        .map(|(i, _)| i)
        .collect()
}

/// One session's effort features, aligned to [`FEATURE_DICTIONARY`] order,
/// plus the categorical search topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub topic: Option<String>,
}

impl FeatureVector {
    pub fn zeros() -> FeatureVector {
        FeatureVector {
            values: vec![0.0; feature_count()],
            topic: None,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != feature_count() {
            return Err(Error::Encoding {
                expected: feature_count(),
                got: self.values.len(),
            });
        }
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value for feature {}",
                    FEATURE_DICTIONARY[i].0
                )));
            }
        }
        Ok(())
    }
}

/// Population statistics for one query string.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryPopularity {
    pub frequency: f64,
    pub avg_sat_clicks: f64,
    pub avg_clicks: f64,
    pub click_entropy: f64,
    pub fastback_count: f64,
}

/// Background popularity statistics for queries and clicked URLs; stands in
/// for large-scale click logs as a file-based input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    pub queries: BTreeMap<String, QueryPopularity>,
    pub urls: BTreeMap<String, f64>,
}

impl PopularityTable {
    pub fn query(&self, q: &str) -> QueryPopularity {
        self.queries.get(q).copied().unwrap_or_default()
    }

    pub fn url_click_frequency(&self, url: &str) -> f64 {
        self.urls.get(url).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (q, p) in &self.queries {
            let fields = [
                p.frequency,
                p.avg_sat_clicks,
                p.avg_clicks,
                p.click_entropy,
                p.fastback_count,
            ];
            if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Data(format!("invalid popularity record for query {q:?}")));
            }
        }
        for (u, f) in &self.urls {
            if !f.is_finite() || *f < 0.0 {
                return Err(Error::Data(format!("invalid popularity record for url {u:?}")));
            }
        }
        Ok(())
    }

    /// Reads the tab-separated popularity file (`q` and `u` records).
    pub fn load(path: &std::path::Path) -> Result<PopularityTable> {
        let text = std::fs::read_to_string(path)?;
        let mut table = PopularityTable::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Format(format!("popularity line {}: {line:?}", lineno + 1));
            match fields.first() {
                Some(&"q") if fields.len() == 7 => {
                    let nums: Vec<f64> = fields[2..]
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?;
                    table.queries.insert(
                        fields[1].to_string(),
                        QueryPopularity {
                            frequency: nums[0],
                            avg_sat_clicks: nums[1],
                            avg_clicks: nums[2],
                            click_entropy: nums[3],
                            fastback_count: nums[4],
                        },
                    );
                }
                Some(&"u") if fields.len() == 3 => {
                    let f = fields[2].parse::<f64>().map_err(|_| bad())?;
                    table.urls.insert(fields[1].to_string(), f);
                }
                _ => return Err(bad()),
            }
        }
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (q, p) in &self.queries {
            writeln!(
                out,
                "q\t{}\t{}\t{}\t{}\t{}\t{}",
                q, p.frequency, p.avg_sat_clicks, p.avg_clicks, p.click_entropy, p.fastback_count
            )?;
        }
        for (u, f) in &self.urls {
            writeln!(out, "u\t{u}\t{f}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_names_unique() {
        let mut names: Vec<&str> = FEATURE_DICTIONARY.iter().map(|(n, _)| *n).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), FEATURE_DICTIONARY.len());
    }

    #[test]
    fn every_group_nonempty() {
        for g in FeatureGroup::ALL {
            assert!(!group_indices(g).is_empty(), "group {g:?} has no features");
        }
    }

    #[test]
    fn unknown_query_defaults_to_zero() {
        let table = PopularityTable::default();
        assert_eq!(table.query("never seen").frequency, 0.0);
        assert_eq!(table.url_click_frequency("http://nowhere"), 0.0);
    }
}
