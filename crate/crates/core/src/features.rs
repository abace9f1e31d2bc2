//! Effort feature extraction: one finite value per dictionary feature for a
//! session, plus the feature-matrix CSV format shared by the statistics and
//! learning stages.
//!
//! Conventions pinned here (the source material leaves them open):
//! dwell of a click is the gap to the next event (last event: 30 s default);
//! SAT clicks use an inclusive 30 s threshold; averages over an empty
//! denominator are 0; query-length features measure characters; term
//! addition/removal/substitution counts come from multiset differences
//! between adjacent queries' token bags with substitutions = min(added,
//! removed).

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    feature_count, EventKind, FeatureVector, Label, MotivState, PopularityTable, RawEvent,
    ResultKind, Session, FEATURE_DICTIONARY,
};
use crate::taxonomy::Taxonomy;
use crate::text::{edit_distance, entropy, query_cosine, query_tokens, url_domain};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Dwell at or above this many seconds makes a click satisfactory.
    pub sat_threshold_s: f64,
    /// Dwell assigned to a click that is the session's last event.
    pub last_event_dwell_s: f64,
    /// Dwell below this many seconds makes a click a fast-back click.
    pub fastback_threshold_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sat_threshold_s: 30.0,
            last_event_dwell_s: 30.0,
            fastback_threshold_s: 15.0,
        }
    }
}

/// Dwell time in seconds for the event at `event_idx`: gap to the next event,
/// or the configured default when it is the session's last event.
pub fn dwell_time(session: &Session, event_idx: usize, cfg: &FeatureConfig) -> f64 {
    match session.events.get(event_idx + 1) {
        Some(next) => (next.timestamp - session.events[event_idx].timestamp) as f64 / 1000.0,
        None => cfg.last_event_dwell_s,
    }
}

/// A click is satisfactory when its dwell reaches the threshold (inclusive).
pub fn sat_click(session: &Session, event_idx: usize, cfg: &FeatureConfig) -> bool {
    dwell_time(session, event_idx, cfg) >= cfg.sat_threshold_s
}

/// Shannon entropy (natural log) of the per-click topic label distribution.
pub fn topic_entropy(session: &Session, taxonomy: &Taxonomy) -> f64 {
    let labels = taxonomy.label_clicks(session);
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.as_str()).or_insert(0.0) += 1.0;
    }
    entropy(&counts.values().copied().collect::<Vec<_>>())
}

struct QueryInfo {
    event_idx: usize,
    text: String,
    manual: bool,
    ts: i64,
}

struct ClickInfo {
    event_idx: usize,
    url: String,
    result_kind: Option<ResultKind>,
    bookmark: bool,
    ts: i64,
    /// 0-based index of the owning query, when one precedes the click.
    query_idx: Option<usize>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn log1p(x: f64) -> f64 {
    (1.0 + x).ln()
}

struct TokenDiff {
    retained: f64,
    added_only: f64,
    removed_only: f64,
    substituted: f64,
    raw_added: f64,
    raw_removed: f64,
}

fn token_diff(prev: &str, next: &str) -> TokenDiff {
    let mut counts: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for t in query_tokens(prev) {
        counts.entry(t).or_insert((0.0, 0.0)).0 += 1.0;
    }
    for t in query_tokens(next) {
        counts.entry(t).or_insert((0.0, 0.0)).1 += 1.0;
    }
    let mut retained = 0.0;
    let mut raw_added = 0.0;
    let mut raw_removed = 0.0;
    for (a, b) in counts.values() {
        retained += a.min(*b);
        raw_added += (b - a).max(0.0);
        raw_removed += (a - b).max(0.0);
    }
    let substituted = raw_added.min(raw_removed);
    TokenDiff {
        retained,
        added_only: raw_added - substituted,
        removed_only: raw_removed - substituted,
        substituted,
        raw_added,
        raw_removed,
    }
}

/// Computes every dictionary feature for one session.
pub fn extract(
    session: &Session,
    pop: &PopularityTable,
    taxonomy: &Taxonomy,
    cfg: &FeatureConfig,
) -> FeatureVector {
    let queries: Vec<QueryInfo> = session
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EventKind::Query)
        .map(|(i, e)| QueryInfo {
            event_idx: i,
            text: e.query_text.clone().unwrap_or_default(),
            manual: e.query_source == Some(crate::model::QuerySource::Manual),
            ts: e.timestamp,
        })
        .collect();
    let clicks: Vec<ClickInfo> = session
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_click())
        .map(|(i, e)| ClickInfo {
            event_idx: i,
            url: e.clicked_url.clone().unwrap_or_default(),
            result_kind: e.result_kind,
            bookmark: e.kind == EventKind::BookmarkClick
                || e.result_kind == Some(ResultKind::Bookmark),
            ts: e.timestamp,
            query_idx: queries
                .iter()
                .rposition(|q| q.event_idx < i),
        })
        .collect();

    let nq = queries.len() as f64;
    let nc = clicks.len() as f64;

    let mut fv = FeatureVector::zeros();
    let mut set = |name: &str, value: f64| {
        let i = crate::model::feature_index(name).expect("dictionary feature");
        fv.values[i] = value;
    };

    // --- efforts to query ---
    set("num_queries", nq);
    let unique_queries: BTreeSet<&str> = queries.iter().map(|q| q.text.as_str()).collect();
    set("num_unique_queries", unique_queries.len() as f64);
    let term_counts: Vec<f64> = queries
        .iter()
        .map(|q| query_tokens(&q.text).len() as f64)
        .collect();
    set("avg_terms_per_query", mean(&term_counts));
    let char_counts: Vec<f64> = queries
        .iter()
        .map(|q| q.text.chars().count() as f64)
        .collect();
    set("avg_chars_per_query", mean(&char_counts));
    let manual = queries.iter().filter(|q| q.manual).count() as f64;
    set("pct_manual_queries", ratio(manual, nq));
    set("pct_suggested_queries", ratio(nq - manual, nq));
    let longest_pos = char_counts
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, &len)| match best {
            Some((_, bl)) if bl >= len => best,
            _ => Some((i, len)),
        })
        .map_or(0.0, |(i, _)| (i + 1) as f64 / nq);
    set("longest_query_position", longest_pos);

    // --- efforts to click ---
    set("total_clicks", nc);
    set("avg_clicks_per_query", ratio(nc, nq));
    let dwells: Vec<f64> = clicks
        .iter()
        .map(|c| dwell_time(session, c.event_idx, cfg))
        .collect();
    let sat = dwells.iter().filter(|&&d| d >= cfg.sat_threshold_s).count() as f64;
    set("total_sat_clicks", sat);
    set("avg_sat_clicks_per_query", ratio(sat, nq));

    let mut clicks_per_query = vec![0usize; queries.len()];
    for c in &clicks {
        if let Some(qi) = c.query_idx {
            clicks_per_query[qi] += 1;
        }
    }
    let clickless = clicks_per_query.iter().filter(|&&n| n == 0).count() as f64;
    set("pct_queries_without_clicks", ratio(clickless, nq));
    // maximal runs of consecutive clickless queries
    let mut runs: Vec<f64> = Vec::new();
    let mut run = 0usize;
    for &n in &clicks_per_query {
        if n == 0 {
            run += 1;
        } else if run > 0 {
            runs.push(run as f64);
            run = 0;
        }
    }
    if run > 0 {
        runs.push(run as f64);
    }
    set(
        "max_adjacent_queries_without_clicks",
        runs.iter().copied().fold(0.0, f64::max),
    );
    set("avg_adjacent_queries_without_clicks", mean(&runs));

    let image = clicks
        .iter()
        .filter(|c| c.result_kind == Some(ResultKind::Image))
        .count() as f64;
    set("total_image_clicks", image);
    set("avg_image_clicks_per_query", ratio(image, nq));
    let ads = clicks
        .iter()
        .filter(|c| c.result_kind == Some(ResultKind::Ad))
        .count() as f64;
    set("total_ad_clicks", ads);
    set("avg_ad_clicks_per_query", ratio(ads, nq));
    let bookmarks = clicks.iter().filter(|c| c.bookmark).count() as f64;
    set("total_bookmark_clicks", bookmarks);
    set("avg_bookmark_clicks_per_query", ratio(bookmarks, nq));
    set("num_events", nq + nc);
    let clicks_in = |lo: usize, hi: usize| {
        clicks
            .iter()
            .filter(|c| c.query_idx.map_or(false, |qi| qi + 1 >= lo && qi + 1 <= hi))
            .count() as f64
    };
    set("clicks_at_queries_1_2", clicks_in(1, 2));
    set("clicks_at_queries_3_4", clicks_in(3, 4));
    set("clicks_at_queries_5_6", clicks_in(5, 6));
    let ends_click = session.events.last().map_or(false, RawEvent::is_click);
    set("ends_with_click", f64::from(u8::from(ends_click)));

    // --- efforts to read ---
    let total_dwell: f64 = dwells.iter().sum();
    set("total_dwell_time", total_dwell);
    let impressions: Vec<f64> = session
        .events
        .iter()
        .filter_map(|e| e.serp_image_impressions)
        .map(|v| v as f64)
        .collect();
    set("avg_image_impressions_per_serp", mean(&impressions));
    let zooms = session
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ZoomIn)
        .count() as f64;
    set("total_zoom_ins", zooms);
    set("log_avg_dwell_per_click", log1p(ratio(total_dwell, nc)));
    let last_q = queries.len().checked_sub(1);
    let dwells_excl_last: Vec<f64> = clicks
        .iter()
        .zip(&dwells)
        .filter(|(c, _)| c.query_idx != last_q || last_q.is_none())
        .map(|(_, &d)| d)
        .collect();
    set(
        "log_avg_dwell_per_click_excl_last_query",
        log1p(mean(&dwells_excl_last)),
    );
    let first_ts = session.events[0].timestamp;
    let first_sat = clicks
        .iter()
        .zip(&dwells)
        .find(|(_, &d)| d >= cfg.sat_threshold_s)
        .map_or(0.0, |(c, _)| (c.ts - first_ts) as f64 / 1000.0);
    set("log_time_to_first_sat_click", log1p(first_sat));
    let last_ts = session.events.last().map_or(first_ts, |e| e.timestamp);
    let serp_times: Vec<f64> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let end = queries.get(i + 1).map_or(last_ts, |n| n.ts);
            (end - q.ts) as f64 / 1000.0
        })
        .collect();
    set("log_avg_time_per_serp", log1p(mean(&serp_times)));
    let serp_excl_last = if serp_times.len() > 1 {
        mean(&serp_times[..serp_times.len() - 1])
    } else {
        0.0
    };
    set("log_avg_time_per_serp_excl_last_query", log1p(serp_excl_last));

    // --- efforts to scroll ---
    let screen = session
        .events
        .iter()
        .rev()
        .find_map(|e| e.screen_size)
        .map_or(0.0, |(w, h)| w as f64 * h as f64);
    set("screen_size", screen);
    let scrolls = session
        .events
        .iter()
        .filter(|e| {
            matches!(
                e.kind,
                EventKind::ScrollDown | EventKind::Resize | EventKind::Pagination
            )
        })
        .count() as f64;
    set("total_scroll_downs", scrolls);
    set("avg_scroll_downs_per_query", ratio(scrolls, nq));

    // --- efforts to re-formulate ---
    if queries.len() >= 2 {
        let first = &queries[0].text;
        let cos_first: Vec<f64> = queries[1..]
            .iter()
            .map(|q| query_cosine(first, &q.text))
            .collect();
        set("avg_cosine_to_first_query", mean(&cos_first));
        let mut pair_cos = Vec::new();
        for i in 0..queries.len() {
            for j in i + 1..queries.len() {
                pair_cos.push(query_cosine(&queries[i].text, &queries[j].text));
            }
        }
        set("avg_cosine_query_pairs", mean(&pair_cos));
        let diffs: Vec<TokenDiff> = queries
            .windows(2)
            .map(|w| token_diff(&w[0].text, &w[1].text))
            .collect();
        let eds: Vec<f64> = queries
            .windows(2)
            .map(|w| edit_distance(&w[0].text, &w[1].text) as f64)
            .collect();
        set("avg_edit_distance_adjacent", mean(&eds));
        let generations = diffs
            .iter()
            .filter(|d| d.raw_removed > 0.0 && d.raw_added == 0.0)
            .count() as f64;
        set("num_query_generations", generations);
        let specifications = diffs
            .iter()
            .filter(|d| d.raw_added > 0.0 && d.raw_removed == 0.0)
            .count() as f64;
        set("num_query_specifications", specifications);
        set(
            "avg_terms_retained",
            mean(&diffs.iter().map(|d| d.retained).collect::<Vec<_>>()),
        );
        set(
            "avg_terms_added",
            mean(&diffs.iter().map(|d| d.added_only).collect::<Vec<_>>()),
        );
        set(
            "avg_terms_removed",
            mean(&diffs.iter().map(|d| d.removed_only).collect::<Vec<_>>()),
        );
        set(
            "avg_terms_substituted",
            mean(&diffs.iter().map(|d| d.substituted).collect::<Vec<_>>()),
        );
    }
    if !queries.is_empty() {
        let avg_len = mean(&char_counts);
        set("first_minus_avg_query_length", char_counts[0] - avg_len);
        if char_counts.len() >= 2 {
            let m = avg_len;
            let var = char_counts.iter().map(|c| (c - m).powi(2)).sum::<f64>()
                / (char_counts.len() - 1) as f64;
            set("stddev_query_length", var.sqrt());
        }
    }

    // --- efforts to diversify ---
    let urls: Vec<&str> = clicks.iter().map(|c| c.url.as_str()).collect();
    let unique_urls: BTreeSet<&str> = urls.iter().copied().collect();
    let domains: BTreeSet<String> = urls.iter().map(|u| url_domain(u)).collect();
    set("pct_unique_urls", ratio(unique_urls.len() as f64, nc));
    set("pct_unique_domains", ratio(domains.len() as f64, nc));
    set("total_unique_clicks", unique_urls.len() as f64);
    let labels = taxonomy.label_clicks(session);
    let unique_topics: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    set("num_unique_topics", unique_topics.len() as f64);
    set("topic_entropy", topic_entropy(session, taxonomy));

    // --- efforts to issue rare queries & rare clicks ---
    if !queries.is_empty() {
        let pops: Vec<_> = queries.iter().map(|q| pop.query(&q.text)).collect();
        let avg = |f: fn(&crate::model::QueryPopularity) -> f64| {
            mean(&pops.iter().map(f).collect::<Vec<_>>())
        };
        set("log_avg_query_frequency", log1p(avg(|p| p.frequency)));
        set("log_avg_query_sat_clicks", log1p(avg(|p| p.avg_sat_clicks)));
        set("log_avg_query_clicks", log1p(avg(|p| p.avg_clicks)));
        set("avg_query_click_entropy", avg(|p| p.click_entropy));
        set("log_avg_query_fastback_clicks", log1p(avg(|p| p.fastback_count)));
    }
    if !urls.is_empty() {
        let freqs: Vec<f64> = urls.iter().map(|u| pop.url_click_frequency(u)).collect();
        set("log_avg_url_click_frequency", log1p(mean(&freqs)));
    }

    fv.topic = session.topic.clone();
    fv
}

/// Session-by-feature matrix plus the categorical columns carried alongside
/// it through normalization, modulation, and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub session_ids: Vec<String>,
    /// One row per session, aligned to `FEATURE_DICTIONARY` order.
    pub rows: Vec<Vec<f64>>,
    pub topics: Vec<Option<String>>,
    pub states: Vec<MotivState>,
    pub labels: Vec<Label>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Extracts features for every session, optionally across worker threads.
    pub fn extract_all(
        sessions: &[Session],
        pop: &PopularityTable,
        taxonomy: &Taxonomy,
        cfg: &FeatureConfig,
        jobs: usize,
    ) -> FeatureMatrix {
        let fvs: Vec<FeatureVector> = if jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .expect("thread pool");
            pool.install(|| {
                sessions
                    .par_iter()
                    .map(|s| extract(s, pop, taxonomy, cfg))
                    .collect()
            })
        } else {
            sessions.iter().map(|s| extract(s, pop, taxonomy, cfg)).collect()
        };
        FeatureMatrix {
            session_ids: sessions.iter().map(|s| s.session_id.clone()).collect(),
            rows: fvs.iter().map(|f| f.values.clone()).collect(),
            topics: fvs.into_iter().map(|f| f.topic).collect(),
            states: sessions.iter().map(|s| s.state).collect(),
            labels: sessions.iter().map(|s| s.label).collect(),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["session_id".to_string()];
        header.extend(FEATURE_DICTIONARY.iter().map(|(n, _)| n.to_string()));
        header.extend(["topic".into(), "state".into(), "label".into()]);
        out.write_record(&header)
            .map_err(|e| Error::Format(e.to_string()))?;
        for i in 0..self.len() {
            let mut rec = vec![self.session_ids[i].clone()];
            rec.extend(self.rows[i].iter().map(|v| format!("{v}")));
            rec.push(self.topics[i].clone().unwrap_or_default());
            rec.push(state_str(self.states[i]).to_string());
            rec.push(label_str(self.labels[i]).to_string());
            out.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<FeatureMatrix> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        let expected: Vec<&str> = std::iter::once("session_id")
            .chain(FEATURE_DICTIONARY.iter().map(|(n, _)| *n))
            .chain(["topic", "state", "label"])
            .collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Format("feature CSV header does not match the dictionary".into()));
        }
        let mut m = FeatureMatrix {
            session_ids: Vec::new(),
            rows: Vec::new(),
            topics: Vec::new(),
            states: Vec::new(),
            labels: Vec::new(),
        };
        let nf = feature_count();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            if rec.len() != nf + 4 {
                return Err(Error::Format("feature CSV row has wrong arity".into()));
            }
            m.session_ids.push(rec[0].to_string());
            let row: Vec<f64> = (1..=nf)
                .map(|i| {
                    rec[i]
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad number {:?}", &rec[i])))
                })
                .collect::<Result<_>>()?;
            m.rows.push(row);
            let topic = &rec[nf + 1];
            m.topics.push(if topic.is_empty() { None } else { Some(topic.to_string()) });
            m.states.push(parse_state(&rec[nf + 2])?);
            m.labels.push(parse_label(&rec[nf + 3])?);
        }
        Ok(m)
    }

    pub fn load_csv(path: &std::path::Path) -> Result<FeatureMatrix> {
        FeatureMatrix::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub fn state_str(s: MotivState) -> &'static str {
    match s {
        MotivState::Telic => "telic",
        MotivState::Paratelic => "paratelic",
        MotivState::Unassigned => "unassigned",
    }
}

pub fn label_str(l: Label) -> &'static str {
    match l {
        Label::Struggle => "struggle",
        Label::NonStruggle => "nonstruggle",
        Label::Unlabeled => "unlabeled",
    }
}

fn parse_state(s: &str) -> Result<MotivState> {
    match s {
        "telic" => Ok(MotivState::Telic),
        "paratelic" => Ok(MotivState::Paratelic),
        "unassigned" => Ok(MotivState::Unassigned),
        _ => Err(Error::Format(format!("unknown state {s:?}"))),
    }
}

fn parse_label(s: &str) -> Result<Label> {
    match s {
        "struggle" => Ok(Label::Struggle),
        "nonstruggle" => Ok(Label::NonStruggle),
        "unlabeled" => Ok(Label::Unlabeled),
        _ => Err(Error::Format(format!("unknown label {s:?}"))),
    }
}
