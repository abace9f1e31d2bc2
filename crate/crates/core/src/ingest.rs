//! Log parsing and session segmentation.
//!
//! The on-disk log format is one JSON object per line:
//!
//! ```text
//! {"user":"u1","ts":1606003200000,"kind":"query","q":"curly hair dye","src":"manual"}
//! {"user":"u1","ts":1606003206000,"kind":"click","url":"https://ex.com/dye","rkind":"web"}
//! {"user":"u1","ts":1606003216000,"kind":"scroll"}
//! ```
//!
//! Keys: `user`, `ts` (ms since epoch), `kind` in
//! `query|click|scroll|resize|zoom|bookmark|page`, plus kind-specific keys
//! `q`/`src` (queries), `url`/`rkind` (clicks and bookmark clicks),
//! `w`/`h` (resize), `imgs` (SERP image impressions). Optional on any line:
//! `sid` (pre-assigned session id) and `plat` (`mobile|pc`, default pc).

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{EventKind, Label, MotivState, Platform, QuerySource, RawEvent, ResultKind, Session};
use crate::text::query_cosine;

/// A raw event together with the per-line metadata that only matters for
/// segmentation.
#[derive(Debug, Clone)]
pub struct ParsedEvent {
    pub event: RawEvent,
    pub session_hint: Option<String>,
    pub platform: Option<Platform>,
}

#[derive(Debug)]
pub struct ParseReport {
    pub events: Vec<ParsedEvent>,
    pub skipped: usize,
}

#[derive(Debug, Deserialize)]
struct WireRecord {
    user: String,
    ts: i64,
    kind: String,
    #[serde(default)]
    q: Option<String>,
    #[serde(default)]
    src: Option<String>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    rkind: Option<String>,
    #[serde(default)]
    w: Option<u32>,
    #[serde(default)]
    h: Option<u32>,
    #[serde(default)]
    imgs: Option<u64>,
    #[serde(default)]
    sid: Option<String>,
    #[serde(default)]
    plat: Option<String>,
}

fn convert(rec: WireRecord) -> Result<ParsedEvent> {
    let kind = match rec.kind.as_str() {
        "query" => EventKind::Query,
        "click" => EventKind::Click,
        "scroll" => EventKind::ScrollDown,
        "resize" => EventKind::Resize,
        "zoom" => EventKind::ZoomIn,
        "bookmark" => EventKind::BookmarkClick,
        "page" => EventKind::Pagination,
        other => return Err(Error::Format(format!("unknown event kind {other:?}"))),
    };
    let query_source = match rec.src.as_deref() {
        None => None,
        Some("manual") => Some(QuerySource::Manual),
        Some("suggested") => Some(QuerySource::Suggested),
        Some(other) => return Err(Error::Format(format!("unknown query source {other:?}"))),
    };
    let result_kind = match rec.rkind.as_deref() {
        None => None,
        Some("web") => Some(ResultKind::Web),
        Some("image") => Some(ResultKind::Image),
        Some("ad") => Some(ResultKind::Ad),
        Some("bookmark") => Some(ResultKind::Bookmark),
        Some(other) => return Err(Error::Format(format!("unknown result kind {other:?}"))),
    };
    let platform = match rec.plat.as_deref() {
        None => None,
        Some("mobile") => Some(Platform::Mobile),
        Some("pc") => Some(Platform::Pc),
        Some(other) => return Err(Error::Format(format!("unknown platform {other:?}"))),
    };
    let screen_size = match (rec.w, rec.h) {
        (Some(w), Some(h)) => Some((w, h)),
        _ => None,
    };
    let event = RawEvent {
        user_id: rec.user,
        timestamp: rec.ts,
        kind,
        query_text: rec.q,
        query_source,
        clicked_url: rec.url,
        result_kind,
        serp_image_impressions: rec.imgs,
        screen_size,
    };
    event.validate()?;
    Ok(ParsedEvent {
        event,
        session_hint: rec.sid,
        platform,
    })
}

/// Parses a line-delimited event log. Malformed lines are counted and
/// skipped; more than 50% malformed (over non-blank lines) signals a wrong
/// file and is a format error.
pub fn parse_log<R: BufRead>(reader: R) -> Result<ParseReport> {
    let mut events = Vec::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<WireRecord>(&line).map_err(|e| Error::Format(e.to_string())) {
            Ok(rec) => match convert(rec) {
                Ok(ev) => events.push(ev),
                Err(_) => skipped += 1,
            },
            Err(_) => skipped += 1,
        }
    }
    if total > 0 && skipped * 2 > total {
        return Err(Error::Format(format!(
            "{skipped} of {total} lines malformed; wrong file?"
        )));
    }
    Ok(ParseReport { events, skipped })
}

pub fn parse_log_file(path: &std::path::Path) -> Result<ParseReport> {
    let file = std::fs::File::open(path)?;
    parse_log(std::io::BufReader::new(file))
}

#[derive(Debug, Clone)]
pub struct SegmentConfig {
    /// Queries further apart than this may start a new session.
    pub gap_minutes: f64,
    /// A lexical cosine at or above this keeps topically coherent queries in
    /// one session even across a long gap.
    pub sim_threshold: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            gap_minutes: 30.0,
            sim_threshold: 0.1,
        }
    }
}

/// Segments parsed events into per-user sessions.
///
/// A new session starts at a query whose time gap from the previous query
/// exceeds `gap_minutes` while its token-tf cosine similarity to the previous
/// query stays below `sim_threshold`. Clicks and other non-query events
/// attach to the most recent query's session. When every event of a user
/// carries a pre-assigned `sid`, those ids are taken as-is and the heuristic
/// is bypassed for that user.
pub fn segment_sessions(events: Vec<ParsedEvent>, cfg: &SegmentConfig) -> Result<Vec<Session>> {
    if cfg.gap_minutes <= 0.0 {
        return Err(Error::Config("gap_minutes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.sim_threshold) {
        return Err(Error::Config("sim_threshold must lie in [0,1]".into()));
    }

    // Defensive stable sort by (user, timestamp); file order breaks ties.
    let mut indexed: Vec<(usize, ParsedEvent)> = events.into_iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| {
        (a.event.user_id.as_str(), a.event.timestamp, *ia)
            .cmp(&(b.event.user_id.as_str(), b.event.timestamp, *ib))
    });

    let mut per_user: BTreeMap<String, Vec<ParsedEvent>> = BTreeMap::new();
    for (_, ev) in indexed {
        per_user.entry(ev.event.user_id.clone()).or_default().push(ev);
    }

    let mut sessions = Vec::new();
    for (user, evs) in per_user {
        let presegmented = evs.iter().all(|e| e.session_hint.is_some());
        if presegmented {
            let mut by_sid: BTreeMap<String, Vec<ParsedEvent>> = BTreeMap::new();
            for ev in evs {
                by_sid
                    .entry(ev.session_hint.clone().unwrap())
                    .or_default()
                    .push(ev);
            }
            for (sid, group) in by_sid {
                sessions.push(build_session(sid, &user, group)?);
            }
        } else {
            let mut current: Vec<ParsedEvent> = Vec::new();
            let mut prev_query: Option<(i64, String)> = None;
            for ev in evs {
                if ev.event.kind == EventKind::Query {
                    let text = ev.event.query_text.clone().unwrap_or_default();
                    if let Some((prev_ts, prev_q)) = &prev_query {
                        let gap_min = (ev.event.timestamp - prev_ts) as f64 / 60_000.0;
                        if gap_min > cfg.gap_minutes
                            && query_cosine(prev_q, &text) < cfg.sim_threshold
                        {
                            let done = std::mem::take(&mut current);
                            sessions.push(build_session(heuristic_id(&user, &done), &user, done)?);
                        }
                    }
                    prev_query = Some((ev.event.timestamp, text));
                }
                current.push(ev);
            }
            if !current.is_empty() {
                sessions.push(build_session(heuristic_id(&user, &current), &user, current)?);
            }
        }
    }
    sessions.sort_by(|a, b| {
        (a.user_id.as_str(), a.events[0].timestamp, a.session_id.as_str())
            .cmp(&(b.user_id.as_str(), b.events[0].timestamp, b.session_id.as_str()))
    });
    Ok(sessions)
}

fn heuristic_id(user: &str, events: &[ParsedEvent]) -> String {
    format!("{}-{}", user, events[0].event.timestamp)
}

fn build_session(session_id: String, user: &str, events: Vec<ParsedEvent>) -> Result<Session> {
    let platform = events
        .iter()
        .find_map(|e| e.platform)
        .unwrap_or(Platform::Pc);
    let session = Session {
        session_id,
        user_id: user.to_string(),
        platform,
        events: events.into_iter().map(|e| e.event).collect(),
        label: Label::Unlabeled,
        topic: None,
        state: MotivState::Unassigned,
    };
    session.validate()?;
    Ok(session)
}

/// Reads a `session_id<TAB>state<TAB>label` sidecar truth file.
pub fn load_truth(path: &std::path::Path) -> Result<BTreeMap<String, (MotivState, Label)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Format(format!("truth line {}: {line:?}", lineno + 1));
        if fields.len() != 3 {
            return Err(bad());
        }
        let state = match fields[1] {
            "telic" => MotivState::Telic,
            "paratelic" => MotivState::Paratelic,
            "unassigned" => MotivState::Unassigned,
            _ => return Err(bad()),
        };
        let label = match fields[2] {
            "struggle" => Label::Struggle,
            "nonstruggle" => Label::NonStruggle,
            "unlabeled" => Label::Unlabeled,
            _ => return Err(bad()),
        };
        out.insert(fields[0].to_string(), (state, label));
    }
    Ok(out)
}

/// Attaches truth-file labels to matching sessions. Ground-truth states stay
/// in the truth map; the pipeline assigns states from topics instead.
pub fn apply_labels(sessions: &mut [Session], truth: &BTreeMap<String, (MotivState, Label)>) {
    for s in sessions {
        if let Some((_, label)) = truth.get(&s.session_id) {
            s.label = *label;
        }
    }
}
