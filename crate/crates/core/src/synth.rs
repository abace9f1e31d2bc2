//! Synthetic session generator built on the bi-modal arousal model: per
//! state, effort is Gaussian, happiness is an inverted-U parabola around the
//! state's preferred effort, and a session struggles when happiness falls
//! below a floor while effort sits in the state's right-hand tail.
//!
//! Event emission maps effort onto query/click/dwell/scroll counts through
//! per-state affine responses over a shared latent, so the telic and
//! paratelic feature distributions are affinely related — the structure the
//! Gaussian modulation step is designed to undo. Diversify and rarity
//! behavior is driven by a separate exploration latent that is independent
//! of effort by default.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::model::{
    EventKind, Label, MotivState, Platform, PopularityTable, QueryPopularity, QuerySource,
    RawEvent, ResultKind, Session,
};
use crate::taxonomy::Taxonomy;
use crate::text::{entropy, query_tokens, url_tokens};

/// Arousal-model parameters for one motivational state.
#[derive(Debug, Clone, Copy)]
pub struct StateParams {
    /// Preferred (peak-happiness) effort level, arbitrary effort units.
    pub effort_mean: f64,
    pub effort_std: f64,
    /// Curvature `a` of the inverted-U happiness parabola.
    pub curvature: f64,
    /// Struggle requires effort above this state-specific level.
    pub e_high: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_sessions: usize,
    pub paratelic_prior: f64,
    pub telic: StateParams,
    pub paratelic: StateParams,
    /// Struggle requires happiness below this floor.
    pub h_low: f64,
    pub happiness_noise_std: f64,
    /// Per-channel jitter of the standardized effort driving event emission.
    pub emission_noise_std: f64,
    /// Probability that the session topic comes from the state's own pool.
    pub topic_fidelity: f64,
    /// 0 keeps diversify/rarity behavior independent of effort.
    pub explore_coupling: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_sessions: 2000,
            paratelic_prior: 0.5,
            telic: StateParams {
                effort_mean: 4.0,
                effort_std: 1.0,
                curvature: 1.0,
                e_high: 4.1,
            },
            paratelic: StateParams {
                effort_mean: 6.5,
                effort_std: 1.0,
                curvature: 1.0,
                e_high: 6.6,
            },
            h_low: 0.0,
            happiness_noise_std: 0.15,
            emission_noise_std: 1.1,
            topic_fidelity: 0.99,
            explore_coupling: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("telic", &self.telic), ("paratelic", &self.paratelic)] {
            if p.effort_std <= 0.0 || p.curvature <= 0.0 {
                return Err(Error::Config(format!(
                    "{name} effort_std and curvature must be positive"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.paratelic_prior) {
            return Err(Error::Config("paratelic_prior must lie in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.topic_fidelity) {
            return Err(Error::Config("topic_fidelity must lie in [0,1]".into()));
        }
        if self.telic.effort_mean >= self.paratelic.effort_mean {
            return Err(Error::Config(
                "telic effort_mean must be below the paratelic effort_mean".into(),
            ));
        }
        if self.happiness_noise_std < 0.0 || self.emission_noise_std < 0.0 {
            return Err(Error::Config("noise stds must be non-negative".into()));
        }
        Ok(())
    }

    fn state_params(&self, state: MotivState) -> &StateParams {
        match state {
            MotivState::Paratelic => &self.paratelic,
            _ => &self.telic,
        }
    }
}

/// Per-session latent draws, kept for diagnostics and tests.
#[derive(Debug, Clone, Copy)]
pub struct SessionTruth {
    pub state: MotivState,
    pub effort: f64,
    pub happiness: f64,
    pub explore: f64,
    pub label: Label,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn session_rng(seed: u64, idx: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(idx as u64)))
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// One emission channel: a shared sigmoid response over standardized effort
/// with per-state gain and offset.
struct Channel {
    center: f64,
    width: f64,
    telic: (f64, f64),
    paratelic: (f64, f64),
}

impl Channel {
    fn value(&self, t_jittered: f64, state: MotivState) -> f64 {
        let (gain, base) = match state {
            MotivState::Paratelic => self.paratelic,
            _ => self.telic,
        };
        gain * logistic((t_jittered - self.center) / self.width) + base
    }
}

// The telic/paratelic gain ratios deliberately alternate across channels
// (steep-telic channels next to steep-paratelic ones): a shared linear
// read-out cannot weight both states well at once, while per-feature moment
// matching equalizes the effective slopes.
const CH_QUERIES: Channel = Channel { center: 0.3, width: 0.8, telic: (0.5, 9.8), paratelic: (0.5, 9.8) };
const CH_TERMS: Channel = Channel { center: 0.0, width: 1.0, telic: (0.8, 1.9), paratelic: (3.0, 0.9) };
const CH_MANUAL: Channel = Channel { center: 0.4, width: 0.8, telic: (0.1, 0.5), paratelic: (0.1, 0.35) };
const CH_CLICKS: Channel = Channel { center: 0.5, width: 0.8, telic: (0.5, 11.4), paratelic: (0.5, 11.4) };
const CH_DWELL: Channel = Channel { center: 0.2, width: 0.8, telic: (-45.0, 54.0), paratelic: (-4.0, 37.0) };
const CH_SERP_GAP: Channel = Channel { center: 0.5, width: 1.0, telic: (6.0, 14.0), paratelic: (20.0, 2.0) };
const CH_SCROLLS: Channel = Channel { center: 0.3, width: 1.0, telic: (10.0, 4.0), paratelic: (2.0, 7.8) };

/// Scroll counting is much burstier on focused (telic) sessions.
const SCROLL_NOISE: (f64, f64) = (3.2, 1.45);
const CH_ZOOMS: Channel = Channel { center: 0.5, width: 1.0, telic: (0.3, 1.0), paratelic: (0.3, 2.2) };
const CH_IMPRESSIONS: Channel = Channel { center: 0.0, width: 1.0, telic: (3.2, 2.2), paratelic: (0.5, 9.0) };
const CH_REFORM: Channel = Channel { center: 0.4, width: 0.8, telic: (0.1, 0.12), paratelic: (0.1, 0.32) };
const CH_TRAILING: Channel = Channel { center: 0.5, width: 0.8, telic: (0.12, 0.06), paratelic: (0.12, 0.1) };

/// Generic query vocabulary shared by every topic.
const FILLERS: [&str; 12] = [
    "best", "how", "online", "near", "guide", "cheap", "free", "review", "top", "new", "price",
    "compare",
];
const FILLER_FREQ: f64 = 150.0;

const MOBILE_SCREENS: [(u32, u32); 3] = [(360, 640), (375, 667), (414, 896)];
const PC_SCREENS: [(u32, u32); 3] = [(1280, 720), (1366, 768), (1920, 1080)];

/// Background popularity of a vocabulary token: head keywords occupy the top
/// Zipf ranks, tail keywords sit far down the curve, fillers in between.
fn token_background(taxonomy: &Taxonomy) -> std::collections::BTreeMap<String, f64> {
    let mut map = std::collections::BTreeMap::new();
    // Zipf offsets per category, interleaved so that the telic and paratelic
    // category families get the same total rank mass at every keyword tier
    // (0+3+4+7+8+11 = 1+2+5+6+9+10); vocabulary rarity then carries no
    // motivational-state signal.
    const TELIC_OFFSETS: [usize; 6] = [0, 3, 4, 7, 8, 11];
    const PARATELIC_OFFSETS: [usize; 6] = [1, 2, 5, 6, 9, 10];
    let mut next = [0usize, 0usize];
    let offsets: Vec<usize> = taxonomy
        .categories()
        .iter()
        .map(|cat| {
            let fam = (cat.state == MotivState::Paratelic) as usize;
            let slot = next[fam];
            next[fam] += 1;
            if fam == 0 { TELIC_OFFSETS[slot] } else { PARATELIC_OFFSETS[slot] }
        })
        .collect();
    for (ci, cat) in taxonomy.categories().iter().enumerate() {
        for (ki, kw) in cat.keywords.iter().enumerate() {
            let rank = if ki < 4 {
                1 + ki * 12 + offsets[ci]
            } else {
                400 + (ki - 4) * 12 + offsets[ci]
            };
            map.insert(kw.clone(), 1.0e4 / rank as f64);
        }
    }
    for f in FILLERS {
        map.insert(f.to_string(), FILLER_FREQ);
    }
    map
}

struct TopicPool<'a> {
    head: &'a [String],
    tail: &'a [String],
}

impl<'a> TopicPool<'a> {
    fn keyword(&self, common: bool, rng: &mut ChaCha8Rng) -> &'a str {
        let slice = if common { self.head } else { self.tail };
        &slice[rng.gen_range(0..slice.len())]
    }
}

fn pool<'a>(taxonomy: &'a Taxonomy, category: &str) -> TopicPool<'a> {
    let kws = &taxonomy
        .category(category)
        .expect("generator categories exist in the bundled taxonomy")
        .keywords;
    TopicPool {
        head: &kws[..4],
        tail: &kws[4..],
    }
}

fn draw_token<'a>(
    pool: &TopicPool<'a>,
    common: bool,
    rng: &mut ChaCha8Rng,
) -> String {
    if rng.gen_bool(0.4) {
        FILLERS[rng.gen_range(0..FILLERS.len())].to_string()
    } else {
        pool.keyword(common, rng).to_string()
    }
}

/// Generates sessions together with their latent truth records.
pub fn generate_detailed(cfg: &SimConfig) -> Result<Vec<(Session, SessionTruth)>> {
    cfg.validate()?;
    let taxonomy = Taxonomy::default_fixture();
    let telic_topics: Vec<String> = taxonomy
        .categories()
        .iter()
        .filter(|c| c.state == MotivState::Telic)
        .map(|c| c.name.clone())
        .collect();
    let paratelic_topics: Vec<String> = taxonomy
        .categories()
        .iter()
        .filter(|c| c.state == MotivState::Paratelic)
        .map(|c| c.name.clone())
        .collect();
    let all_topics = taxonomy.category_names();

    let mut out = Vec::with_capacity(cfg.n_sessions);
    for idx in 0..cfg.n_sessions {
        let mut rng = session_rng(cfg.seed, idx);
        let state = if rng.gen_bool(cfg.paratelic_prior) {
            MotivState::Paratelic
        } else {
            MotivState::Telic
        };
        let sp = cfg.state_params(state);
        let effort_dist = Normal::new(sp.effort_mean, sp.effort_std).expect("validated std");
        // truncation at zero: rejection with a clamp fallback
        let mut effort = effort_dist.sample(&mut rng);
        for _ in 0..64 {
            if effort >= 0.0 {
                break;
            }
            effort = effort_dist.sample(&mut rng);
        }
        effort = effort.max(0.0);
        let t = (effort - sp.effort_mean) / sp.effort_std;
        let h_noise = gauss(&mut rng, cfg.happiness_noise_std);
        let happiness = -sp.curvature * (effort - sp.effort_mean).powi(2) + h_noise;
        let label = if happiness < cfg.h_low && effort > sp.e_high {
            Label::Struggle
        } else {
            Label::NonStruggle
        };
        let explore = clamp01(
            rng.gen::<f64>() + cfg.explore_coupling * (logistic(t) - 0.5),
        );

        let own_pool = match state {
            MotivState::Paratelic => &paratelic_topics,
            _ => &telic_topics,
        };
        let other_pool = match state {
            MotivState::Paratelic => &telic_topics,
            _ => &paratelic_topics,
        };
        let topic = if rng.gen_bool(cfg.topic_fidelity) {
            own_pool[rng.gen_range(0..own_pool.len())].clone()
        } else {
            other_pool[rng.gen_range(0..other_pool.len())].clone()
        };

        let session = emit_session(
            cfg, &taxonomy, idx, state, t, explore, &topic, &all_topics, label, &mut rng,
        );
        out.push((
            session,
            SessionTruth {
                state,
                effort,
                happiness,
                explore,
                label,
            },
        ));
    }
    Ok(out)
}

/// Generates labeled sessions; topic, state, and label fields carry the
/// ground truth.
pub fn generate_sessions(cfg: &SimConfig) -> Result<Vec<Session>> {
    Ok(generate_detailed(cfg)?.into_iter().map(|(s, _)| s).collect())
}

fn gauss(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        Normal::new(0.0, std).expect("non-negative std").sample(rng)
    }
}

#[allow(clippy::too_many_arguments)]
fn emit_session(
    cfg: &SimConfig,
    taxonomy: &Taxonomy,
    idx: usize,
    state: MotivState,
    t: f64,
    explore: f64,
    topic: &str,
    all_topics: &[String],
    label: Label,
    rng: &mut ChaCha8Rng,
) -> Session {
    let jitter = |rng: &mut ChaCha8Rng| gauss(rng, cfg.emission_noise_std);
    let ch = |c: &Channel, rng: &mut ChaCha8Rng| c.value(t + jitter(rng), state);

    let n_queries = ((ch(&CH_QUERIES, rng) + gauss(rng, 2.0)).round() as i64).clamp(1, 30) as usize;
    let terms_target = ch(&CH_TERMS, rng);
    let manual_p = clamp01(ch(&CH_MANUAL, rng));
    let n_clicks = ((ch(&CH_CLICKS, rng) + gauss(rng, 2.0)).round() as i64).clamp(1, 60) as usize;
    let dwell_mean = ch(&CH_DWELL, rng).max(3.0);
    let serp_gap = ch(&CH_SERP_GAP, rng).max(2.0);
    let scroll_noise = if state == MotivState::Paratelic { SCROLL_NOISE.1 } else { SCROLL_NOISE.0 };
    let n_scrolls =
        ((ch(&CH_SCROLLS, rng) + gauss(rng, scroll_noise)).round() as i64).clamp(0, 40) as usize;
    let n_zooms = ((ch(&CH_ZOOMS, rng) + gauss(rng, 1.0)).round() as i64).clamp(0, 12) as usize;
    let impressions_level = ch(&CH_IMPRESSIONS, rng).max(0.0);
    let reform_rate = clamp01(ch(&CH_REFORM, rng));
    let trailing = ((n_queries as f64 * clamp01(ch(&CH_TRAILING, rng))).round() as usize)
        .min(n_queries.saturating_sub(1));

    // common (head-vocabulary) choices happen with 1 - explore
    let commonness = 1.0 - explore;
    let off_topic_p = 0.15 * explore;

    let user = format!("u{idx:05}");
    let sid = format!("s{idx:05}");
    let platform = if rng.gen_bool(0.5) { Platform::Mobile } else { Platform::Pc };
    let screens = match platform {
        Platform::Mobile => &MOBILE_SCREENS,
        Platform::Pc => &PC_SCREENS,
    };
    let screen = screens[rng.gen_range(0..screens.len())];

    let mut ts = 1_600_000_000_000_i64 + idx as i64 * 3_600_000;
    let mut events: Vec<RawEvent> = Vec::new();
    let push = |events: &mut Vec<RawEvent>, ts: i64, kind: EventKind| -> usize {
        events.push(RawEvent {
            user_id: user.clone(),
            timestamp: ts,
            kind,
            query_text: None,
            query_source: None,
            clicked_url: None,
            result_kind: None,
            serp_image_impressions: None,
            screen_size: None,
        });
        events.len() - 1
    };

    let i = push(&mut events, ts, EventKind::Resize);
    events[i].screen_size = Some(screen);
    ts += 1_000;
    for _ in 0..n_zooms {
        push(&mut events, ts, EventKind::ZoomIn);
        ts += 1_000;
    }

    // clicks spread evenly over the leading (non-trailing) queries
    let clicked_queries = n_queries - trailing;
    let mut clicks_per_query = vec![0usize; n_queries];
    for c in 0..n_clicks {
        clicks_per_query[c % clicked_queries] += 1;
    }

    let own_pool = pool(taxonomy, topic);
    let mut tokens: Vec<String> = Vec::new();

    // the set of distinct result pages the session moves between; its size is
    // an explore decision, scaled by the session's click appetite
    let url_pool_n =
        (1 + (explore * (3.0 + 0.3 * n_clicks as f64)).round() as usize).min(n_clicks);
    let url_pool: Vec<String> = (0..url_pool_n)
        .map(|_| {
            let cat = if rng.gen_bool(clamp01(off_topic_p)) {
                &all_topics[rng.gen_range(0..all_topics.len())]
            } else {
                topic
            };
            let p = pool(taxonomy, cat);
            let c = rng.gen_bool(clamp01(commonness));
            let host_kw = p.keyword(c, rng);
            let host_n = rng.gen_range(0..10u32);
            format!(
                "https://{host_kw}{host_n}.example.com/{}-{}",
                p.keyword(c, rng),
                p.keyword(c, rng)
            )
        })
        .collect();
    let mut click_no = 0usize;
    let scroll_share = n_scrolls / n_queries;
    let mut scroll_extra = n_scrolls % n_queries;

    for &cpq in &clicks_per_query {
        let common = rng.gen_bool(clamp01(commonness));
        // evolve the query token multiset at the reformulation rate
        let target_terms =
            ((terms_target + gauss(rng, 0.15)).round() as i64).clamp(1, 6) as usize;
        if tokens.is_empty() {
            for _ in 0..target_terms {
                tokens.push(draw_token(&own_pool, common, rng));
            }
        } else {
            for tok in tokens.iter_mut() {
                if rng.gen_bool(reform_rate) {
                    *tok = draw_token(&own_pool, common, rng);
                }
            }
            while tokens.len() < target_terms {
                tokens.push(draw_token(&own_pool, common, rng));
            }
            while tokens.len() > target_terms {
                let i = rng.gen_range(0..tokens.len());
                tokens.remove(i);
            }
        }
        let qtext = tokens.join(" ");
        let i = push(&mut events, ts, EventKind::Query);
        events[i].query_text = Some(qtext);
        events[i].query_source = Some(if rng.gen_bool(manual_p) {
            QuerySource::Manual
        } else {
            QuerySource::Suggested
        });
        events[i].serp_image_impressions =
            Some(((impressions_level + gauss(rng, 0.5)).round() as i64).clamp(0, 20) as u64);
        let qts = ts;

        let gap = ((serp_gap + gauss(rng, 0.1)).max(2.0) * 1000.0) as i64;
        let mut nscr = scroll_share;
        if scroll_extra > 0 {
            nscr += 1;
            scroll_extra -= 1;
        }
        for s in 0..nscr {
            let frac = (s + 1) as f64 / (nscr + 1) as f64;
            push(&mut events, qts + (gap as f64 * frac) as i64, EventKind::ScrollDown);
        }
        ts = qts + gap;

        for _ in 0..cpq {
            let url = url_pool[click_no % url_pool_n].clone();
            click_no += 1;
            let i = push(&mut events, ts, EventKind::Click);
            events[i].clicked_url = Some(url);
            events[i].result_kind = Some(match rng.gen_range(0..100u32) {
                0..=7 => ResultKind::Image,
                8..=10 => ResultKind::Ad,
                11..=13 => ResultKind::Bookmark,
                _ => ResultKind::Web,
            });
            let dwell = (dwell_mean + gauss(rng, 0.2)).max(2.0);
            ts += (dwell * 1000.0) as i64;
        }
        if cpq == 0 {
            ts += rng.gen_range(3_000..9_000);
        }
    }

    let session = Session {
        session_id: sid,
        user_id: user,
        platform,
        events,
        label,
        topic: Some(topic.to_string()),
        state,
    };
    debug_assert!(session.validate().is_ok());
    session
}

/// Serializes sessions in the ingest module's line-delimited log format,
/// with `sid` and `plat` on every record.
pub fn render_log(sessions: &[Session]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for s in sessions {
        let plat = match s.platform {
            Platform::Mobile => "mobile",
            Platform::Pc => "pc",
        };
        for e in &s.events {
            let mut obj = serde_json::Map::new();
            obj.insert("user".into(), e.user_id.clone().into());
            obj.insert("ts".into(), e.timestamp.into());
            let kind = match e.kind {
                EventKind::Query => "query",
                EventKind::Click => "click",
                EventKind::ScrollDown => "scroll",
                EventKind::Resize => "resize",
                EventKind::ZoomIn => "zoom",
                EventKind::BookmarkClick => "bookmark",
                EventKind::Pagination => "page",
            };
            obj.insert("kind".into(), kind.into());
            if let Some(q) = &e.query_text {
                obj.insert("q".into(), q.clone().into());
            }
            if let Some(src) = e.query_source {
                let s = match src {
                    QuerySource::Manual => "manual",
                    QuerySource::Suggested => "suggested",
                };
                obj.insert("src".into(), s.into());
            }
            if let Some(u) = &e.clicked_url {
                obj.insert("url".into(), u.clone().into());
            }
            if let Some(rk) = e.result_kind {
                let s = match rk {
                    ResultKind::Web => "web",
                    ResultKind::Image => "image",
                    ResultKind::Ad => "ad",
                    ResultKind::Bookmark => "bookmark",
                };
                obj.insert("rkind".into(), s.into());
            }
            if let Some((w, h)) = e.screen_size {
                obj.insert("w".into(), w.into());
                obj.insert("h".into(), h.into());
            }
            if let Some(imgs) = e.serp_image_impressions {
                obj.insert("imgs".into(), imgs.into());
            }
            obj.insert("sid".into(), s.session_id.clone().into());
            obj.insert("plat".into(), plat.into());
            writeln!(out, "{}", serde_json::Value::Object(obj)).expect("string write");
        }
    }
    out
}

/// Serializes the `session_id<TAB>state<TAB>label` truth sidecar.
pub fn render_truth(sessions: &[Session]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for s in sessions {
        writeln!(
            out,
            "{}\t{}\t{}",
            s.session_id,
            crate::features::state_str(s.state),
            crate::features::label_str(s.label)
        )
        .expect("string write");
    }
    out
}

fn background_stats(freq: f64) -> QueryPopularity {
    let l = (1.0 + freq).ln();
    QueryPopularity {
        frequency: freq,
        avg_sat_clicks: 0.2 * l,
        avg_clicks: 0.4 * l,
        click_entropy: 0.25 * l,
        fastback_count: 0.3 * l,
    }
}

/// Builds the popularity table from a Zipf-ranked background vocabulary plus
/// the generated sessions. Queries whose tokens all belong to the background
/// vocabulary take their click statistics from the background curve;
/// out-of-vocabulary queries get statistics measured from the sessions
/// themselves.
pub fn generate_popularity(_cfg: &SimConfig, sessions: &[Session]) -> PopularityTable {
    let taxonomy = Taxonomy::default_fixture();
    let bg = token_background(&taxonomy);
    let fc = FeatureConfig::default();
    let mut table = PopularityTable::default();

    // canonical background entries: single keywords and adjacent pairs
    for cat in taxonomy.categories() {
        for (ki, kw) in cat.keywords.iter().enumerate() {
            let f = bg[kw];
            table.queries.insert(kw.clone(), background_stats(f));
            table
                .urls
                .insert(format!("https://{kw}.example.com/{kw}"), 0.5 * f);
            if let Some(next) = cat.keywords.get(ki + 1) {
                let f2 = 0.5 * (f + bg[next]);
                table
                    .queries
                    .insert(format!("{kw} {next}"), background_stats(f2));
            }
        }
    }

    // session-observed statistics
    struct Obs {
        count: f64,
        clicks: f64,
        sat: f64,
        fastback: f64,
        url_counts: std::collections::BTreeMap<String, f64>,
    }
    let mut observed: std::collections::BTreeMap<String, Obs> = std::collections::BTreeMap::new();
    let mut url_counts: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();

    for s in sessions {
        let mut current: Option<&str> = None;
        for (i, e) in s.events.iter().enumerate() {
            match e.kind {
                EventKind::Query => {
                    let q = e.query_text.as_deref().unwrap_or_default();
                    current = Some(q);
                    observed
                        .entry(q.to_string())
                        .or_insert_with(|| Obs {
                            count: 0.0,
                            clicks: 0.0,
                            sat: 0.0,
                            fastback: 0.0,
                            url_counts: std::collections::BTreeMap::new(),
                        })
                        .count += 1.0;
                }
                _ if e.is_click() => {
                    let url = e.clicked_url.clone().unwrap_or_default();
                    *url_counts.entry(url.clone()).or_insert(0.0) += 1.0;
                    if let Some(q) = current {
                        let obs = observed.get_mut(q).expect("query observed before click");
                        obs.clicks += 1.0;
                        let d = crate::features::dwell_time(s, i, &fc);
                        if d >= fc.sat_threshold_s {
                            obs.sat += 1.0;
                        }
                        if d < fc.fastback_threshold_s {
                            obs.fastback += 1.0;
                        }
                        *obs.url_counts.entry(url).or_insert(0.0) += 1.0;
                    }
                }
                _ => {}
            }
        }
    }

    for (q, obs) in observed {
        let toks = query_tokens(&q);
        // popularity keyed to one representative term, so the background
        // statistics reflect how common the vocabulary is rather than how
        // many terms the query has; any token outside the background
        // vocabulary marks the whole query as unseen
        let bg_freq = if toks.iter().all(|t| bg.contains_key(t)) && !toks.is_empty() {
            bg[&toks[q.len() % toks.len()]]
        } else {
            0.0
        };
        let entry = table.queries.entry(q).or_default();
        if bg_freq > 0.0 {
            *entry = background_stats(bg_freq);
        } else {
            entry.frequency = obs.count;
            entry.avg_clicks = obs.clicks / obs.count;
            entry.avg_sat_clicks = obs.sat / obs.count;
            entry.fastback_count = obs.fastback;
            entry.click_entropy =
                entropy(&obs.url_counts.values().copied().collect::<Vec<_>>());
        }
    }

    // URL popularity comes from the background curve of the page's own
    // vocabulary; the observed corpus only decides which pages exist
    for url in url_counts.into_keys() {
        let toks = url_tokens(&url);
        let known: Vec<f64> = toks.iter().filter_map(|t| bg.get(t).copied()).collect();
        let bg_freq = known.iter().copied().fold(f64::INFINITY, f64::min);
        let bg_freq = if bg_freq.is_finite() { 0.5 * bg_freq } else { 0.0 };
        *table.urls.entry(url).or_insert(0.0) = bg_freq + 1.0;
    }

    table.validate().expect("generated table is valid");
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_prior_gives_all_telic() {
        let cfg = SimConfig {
            n_sessions: 40,
            paratelic_prior: 0.0,
            ..SimConfig::default()
        };
        let sessions = generate_sessions(&cfg).unwrap();
        assert_eq!(sessions.len(), 40);
        assert!(sessions.iter().all(|s| s.state == MotivState::Telic));
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = SimConfig {
            n_sessions: 30,
            ..SimConfig::default()
        };
        let a = generate_sessions(&cfg).unwrap();
        let b = generate_sessions(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(render_log(&a), render_log(&b));
        assert_eq!(render_truth(&a), render_truth(&b));
    }

    #[test]
    fn sessions_are_valid_and_clicked() {
        let cfg = SimConfig {
            n_sessions: 60,
            ..SimConfig::default()
        };
        for s in generate_sessions(&cfg).unwrap() {
            s.validate().unwrap();
            assert!(s.clicks().count() >= 1, "session {} has no clicks", s.session_id);
            assert!(s.queries().count() >= 1);
        }
    }

    #[test]
    fn paratelic_effort_mean_matches_config() {
        // Monte-Carlo: with 10,000 sessions the empirical paratelic effort
        // mean must land within 3 standard errors of the configured mean.
        let cfg = SimConfig {
            n_sessions: 10_000,
            seed: 5,
            ..SimConfig::default()
        };
        let detailed = generate_detailed(&cfg).unwrap();
        let efforts: Vec<f64> = detailed
            .iter()
            .filter(|(_, t)| t.state == MotivState::Paratelic)
            .map(|(_, t)| t.effort)
            .collect();
        assert!(efforts.len() > 4000);
        let n = efforts.len() as f64;
        let mean = efforts.iter().sum::<f64>() / n;
        let se = cfg.paratelic.effort_std / n.sqrt();
        assert!(
            (mean - cfg.paratelic.effort_mean).abs() < 3.0 * se,
            "mean {mean} vs {} (se {se})",
            cfg.paratelic.effort_mean
        );
    }

    #[test]
    fn telic_struggles_more_at_matched_effort() {
        // the central confound: bin effort over the overlap region and
        // compare struggle rates between states
        let cfg = SimConfig {
            n_sessions: 20_000,
            seed: 11,
            ..SimConfig::default()
        };
        let detailed = generate_detailed(&cfg).unwrap();
        let mut strictly_greater = 0;
        for bin in 0..6 {
            let lo = 4.0 + bin as f64 * 0.5;
            let hi = lo + 0.5;
            let rate = |state: MotivState| {
                let in_bin: Vec<&SessionTruth> = detailed
                    .iter()
                    .map(|(_, t)| t)
                    .filter(|t| t.state == state && t.effort >= lo && t.effort < hi)
                    .collect();
                let pos = in_bin.iter().filter(|t| t.label == Label::Struggle).count();
                (pos as f64, in_bin.len() as f64)
            };
            let (tp, tn) = rate(MotivState::Telic);
            let (pp, pn) = rate(MotivState::Paratelic);
            if tn >= 30.0 && pn >= 30.0 {
                let (tr, pr) = (tp / tn, pp / pn);
                assert!(tr >= pr, "bin [{lo},{hi}): telic {tr} < paratelic {pr}");
                if tr > pr {
                    strictly_greater += 1;
                }
            }
        }
        assert!(strictly_greater >= 2, "no bin with a strict gap");
    }

    #[test]
    fn struggle_rate_is_in_a_sane_band() {
        let cfg = SimConfig {
            n_sessions: 4_000,
            seed: 3,
            ..SimConfig::default()
        };
        let sessions = generate_sessions(&cfg).unwrap();
        let pos = sessions.iter().filter(|s| s.label == Label::Struggle).count() as f64;
        let rate = pos / sessions.len() as f64;
        assert!((0.1..=0.45).contains(&rate), "struggle rate {rate}");
    }

    #[test]
    fn taxonomy_recovers_most_states() {
        let cfg = SimConfig {
            n_sessions: 500,
            seed: 9,
            ..SimConfig::default()
        };
        let mut sessions = generate_sessions(&cfg).unwrap();
        let truth: Vec<MotivState> = sessions.iter().map(|s| s.state).collect();
        Taxonomy::default_fixture().annotate(&mut sessions);
        let agree = sessions
            .iter()
            .zip(&truth)
            .filter(|(s, t)| s.state == **t)
            .count() as f64;
        let rate = agree / sessions.len() as f64;
        assert!(rate > 0.85, "state recovery rate {rate}");
    }

    #[test]
    fn log_round_trips_through_ingest() {
        let cfg = SimConfig {
            n_sessions: 25,
            seed: 2,
            ..SimConfig::default()
        };
        let sessions = generate_sessions(&cfg).unwrap();
        let log = render_log(&sessions);
        let report = crate::ingest::parse_log(std::io::Cursor::new(log.as_bytes())).unwrap();
        assert_eq!(report.skipped, 0);
        let back = crate::ingest::segment_sessions(
            report.events,
            &crate::ingest::SegmentConfig::default(),
        )
        .unwrap();
        assert_eq!(back.len(), sessions.len());
        for (a, b) in back.iter().zip(&sessions) {
            assert_eq!(a.session_id, b.session_id);
            assert_eq!(a.events, b.events);
            assert_eq!(a.platform, b.platform);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = SimConfig::default();
        cfg.telic.effort_std = 0.0;
        assert!(generate_sessions(&cfg).is_err());
        let mut cfg = SimConfig::default();
        cfg.telic.effort_mean = cfg.paratelic.effort_mean + 1.0;
        assert!(generate_sessions(&cfg).is_err());
        let cfg = SimConfig {
            paratelic_prior: 1.5,
            ..SimConfig::default()
        };
        assert!(generate_sessions(&cfg).is_err());
    }

    #[test]
    fn popularity_background_without_sessions() {
        let table = generate_popularity(&SimConfig::default(), &[]);
        assert!(!table.queries.is_empty());
        assert!(!table.urls.is_empty());
        // head keyword outranks a tail keyword of the same category
        let head = table.queries["finance"].frequency;
        let tail = table.queries["stock"].frequency;
        assert!(head > tail, "head {head} <= tail {tail}");
    }

    #[test]
    fn repeated_query_has_strictly_higher_frequency() {
        let mk = |n: usize, q: &str, start: i64| -> Vec<Session> {
            (0..n)
                .map(|i| Session {
                    session_id: format!("r{start}-{i}"),
                    user_id: format!("ur{start}-{i}"),
                    platform: Platform::Pc,
                    events: vec![RawEvent {
                        user_id: format!("ur{start}-{i}"),
                        timestamp: start + i as i64,
                        kind: EventKind::Query,
                        query_text: Some(q.into()),
                        query_source: Some(QuerySource::Manual),
                        clicked_url: None,
                        result_kind: None,
                        serp_image_impressions: None,
                        screen_size: None,
                    }],
                    label: Label::Unlabeled,
                    topic: None,
                    state: MotivState::Unassigned,
                })
                .collect()
        };
        let mut sessions = mk(100, "zzz popular", 0);
        sessions.extend(mk(1, "zzz obscure", 10_000));
        let table = generate_popularity(&SimConfig::default(), &sessions);
        assert!(
            table.queries["zzz popular"].frequency > table.queries["zzz obscure"].frequency
        );
    }

    #[test]
    fn uniform_two_url_split_has_ln2_entropy() {
        let user = "ue".to_string();
        let mut events = vec![RawEvent {
            user_id: user.clone(),
            timestamp: 0,
            kind: EventKind::Query,
            query_text: Some("zzz qqq".into()),
            query_source: Some(QuerySource::Manual),
            clicked_url: None,
            result_kind: None,
            serp_image_impressions: None,
            screen_size: None,
        }];
        for (i, url) in ["https://one.test/a", "https://two.test/b"]
            .iter()
            .cycle()
            .take(4)
            .enumerate()
        {
            events.push(RawEvent {
                user_id: user.clone(),
                timestamp: (i as i64 + 1) * 40_000,
                kind: EventKind::Click,
                query_text: None,
                query_source: None,
                clicked_url: Some((*url).into()),
                result_kind: Some(ResultKind::Web),
                serp_image_impressions: None,
                screen_size: None,
            });
        }
        let session = Session {
            session_id: "se".into(),
            user_id: user,
            platform: Platform::Pc,
            events,
            label: Label::Unlabeled,
            topic: None,
            state: MotivState::Unassigned,
        };
        let table = generate_popularity(&SimConfig::default(), &[session]);
        let e = table.queries["zzz qqq"].click_entropy;
        assert!((e - 2.0f64.ln()).abs() < 1e-12, "entropy {e}");
    }

    #[test]
    fn explore_latent_is_uncoupled_by_default() {
        let cfg = SimConfig {
            n_sessions: 6_000,
            seed: 21,
            ..SimConfig::default()
        };
        let detailed = generate_detailed(&cfg).unwrap();
        let xs: Vec<f64> = detailed.iter().map(|(_, t)| t.explore).collect();
        let es: Vec<f64> = detailed.iter().map(|(_, t)| t.effort).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let me = es.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&es).map(|(x, e)| (x - mx) * (e - me)).sum::<f64>() / n;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
        let se = (es.iter().map(|e| (e - me).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sx * se);
        assert!(corr.abs() < 0.05, "corr {corr}");
    }
}
