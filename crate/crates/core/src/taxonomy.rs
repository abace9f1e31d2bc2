//! Topic taxonomy: tf-idf URL-to-category scoring, per-session topic
//! assignment, and the category-to-motivational-state mapping.
//!
//! Taxonomy files are line-delimited UTF-8 records:
//! `state<TAB>category<TAB>keyword,keyword,...` with `state` in
//! `telic|paratelic`. A small default taxonomy ships with the crate; the
//! category-to-state mapping beyond the well-known six examples is an
//! extrapolation and is not normative.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MotivState, Session};
use crate::text::{term_frequencies, url_tokens};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyCategory {
    pub name: String,
    pub keywords: Vec<String>,
    /// Telic or Paratelic; never Unassigned for a real category.
    pub state: MotivState,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    /// Sorted by name; lookup and tie-breaks rely on this order.
    categories: Vec<TaxonomyCategory>,
    /// Inverse document frequency over the category corpus, where each
    /// category's name + keywords form one document.
    idf: BTreeMap<String, f64>,
}

pub const DEFAULT_TAXONOMY: &str = include_str!("../data/default_taxonomy.tsv");

impl Taxonomy {
    pub fn new(mut categories: Vec<TaxonomyCategory>) -> Result<Taxonomy> {
        if categories.is_empty() {
            return Err(Error::Config("taxonomy has no categories".into()));
        }
        categories.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in categories.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(Error::Config(format!("duplicate category {:?}", pair[0].name)));
            }
        }
        for c in &categories {
            if c.keywords.is_empty() {
                return Err(Error::Config(format!("category {:?} has no keywords", c.name)));
            }
            if c.state == MotivState::Unassigned {
                return Err(Error::Config(format!("category {:?} has no state", c.name)));
            }
        }
        let n = categories.len() as f64;
        let mut df: BTreeMap<String, f64> = BTreeMap::new();
        for c in &categories {
            let mut terms: Vec<String> = category_terms(c);
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_insert(0.0) += 1.0;
            }
        }
        // Smoothed idf; strictly positive so single-category matches still score.
        let idf = df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d)).ln() + 1.0))
            .collect();
        Ok(Taxonomy { categories, idf })
    }

    pub fn parse(text: &str) -> Result<Taxonomy> {
        let mut categories = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Format(format!("taxonomy line {}: {line:?}", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let state = match fields[0] {
                "telic" => MotivState::Telic,
                "paratelic" => MotivState::Paratelic,
                _ => return Err(bad()),
            };
            let keywords: Vec<String> = fields[2]
                .split(',')
                .map(|k| k.trim().to_lowercase())
                .filter(|k| !k.is_empty())
                .collect();
            categories.push(TaxonomyCategory {
                name: fields[1].to_string(),
                keywords,
                state,
            });
        }
        Taxonomy::new(categories)
    }

    pub fn load(path: &std::path::Path) -> Result<Taxonomy> {
        Taxonomy::parse(&std::fs::read_to_string(path)?)
    }

    pub fn default_fixture() -> Taxonomy {
        Taxonomy::parse(DEFAULT_TAXONOMY).expect("bundled taxonomy parses")
    }

    pub fn categories(&self) -> &[TaxonomyCategory] {
        &self.categories
    }

    pub fn category(&self, name: &str) -> Option<&TaxonomyCategory> {
        self.categories
            .binary_search_by(|c| c.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.categories[i])
    }

    /// Names of all categories, sorted; used as the topic vocabulary for the
    /// classifier's one-hot encoding.
    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.categories.len() as f64;
        self.idf
            .get(term)
            .copied()
            .unwrap_or_else(|| ((1.0 + n) / 1.0).ln() + 1.0)
    }

    /// tf-idf cosine similarity between the URL's token multiset and a
    /// category's name + keywords. Empty token sets score 0.
    pub fn score_url(&self, url_text: &str, category: &TaxonomyCategory) -> f64 {
        let toks = url_tokens(url_text);
        self.score_tokens(&toks, category)
    }

    fn score_tokens(&self, toks: &[String], category: &TaxonomyCategory) -> f64 {
        if toks.is_empty() {
            return 0.0;
        }
        let url_tf = term_frequencies(toks);
        let cat_terms = category_terms(category);
        let cat_tf = term_frequencies(&cat_terms);
        let mut dot = 0.0;
        let mut nu = 0.0;
        for (t, f) in &url_tf {
            let w = f * self.idf(t);
            nu += w * w;
            if let Some(cf) = cat_tf.get(t) {
                dot += w * cf * self.idf(t);
            }
        }
        let mut nc = 0.0;
        for (t, f) in &cat_tf {
            let w = f * self.idf(t);
            nc += w * w;
        }
        if nu == 0.0 || nc == 0.0 {
            0.0
        } else {
            dot / (nu.sqrt() * nc.sqrt())
        }
    }

    /// Argmax-score category name for a URL; ties resolve to the
    /// lexicographically smallest name (categories are kept sorted).
    pub fn label_url(&self, url_text: &str) -> String {
        let toks = url_tokens(url_text);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (i, c) in self.categories.iter().enumerate() {
            let s = self.score_tokens(&toks, c);
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        self.categories[best].name.clone()
    }

    /// Per-click category labels for every clicked URL in the session.
    pub fn label_clicks(&self, session: &Session) -> Vec<String> {
        session
            .clicks()
            .filter_map(|e| e.clicked_url.as_deref())
            .map(|u| self.label_url(u))
            .collect()
    }

    /// Most frequent URL label in the session; ties resolve to the smallest
    /// name. Sessions without clicks have no topic.
    pub fn assign_topic(&self, session: &Session) -> Option<String> {
        let labels = self.label_clicks(session);
        if labels.is_empty() {
            return None;
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &labels {
            *counts.entry(l.as_str()).or_insert(0) += 1;
        }
        // BTreeMap iterates name-ascending, so a strict `>` keeps the
        // lexicographically smallest name on count ties.
        let mut best: Option<(&str, usize)> = None;
        for (name, n) in counts {
            if best.map_or(true, |(_, bn)| n > bn) {
                best = Some((name, n));
            }
        }
        best.map(|(name, _)| name.to_string())
    }

    /// Maps a topic to its motivational state; unknown or missing topics
    /// stay Unassigned (and are treated as telic downstream, i.e. never
    /// modulated).
    pub fn assign_state(&self, topic: Option<&str>) -> MotivState {
        match topic.and_then(|t| self.category(t)) {
            Some(c) => c.state,
            None => MotivState::Unassigned,
        }
    }

    /// Assigns topic and state for a batch of sessions.
    pub fn annotate(&self, sessions: &mut [Session]) {
        for s in sessions.iter_mut() {
            s.topic = self.assign_topic(s);
            s.state = self.assign_state(s.topic.as_deref());
        }
    }
}

fn category_terms(c: &TaxonomyCategory) -> Vec<String> {
    let mut terms = url_tokens(&c.name);
    terms.extend(c.keywords.iter().map(|k| k.to_lowercase()));
    terms
}
