//! Small text utilities shared by segmentation, taxonomy scoring, and the
//! reformulation features: tokenization, Levenshtein distance, and
//! term-frequency cosine similarity.

use std::collections::BTreeMap;

/// Whitespace tokenization, lowercased. Used for query strings.
pub fn query_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Splits on non-alphanumeric characters, lowercased, empty tokens dropped.
/// Used for URL link text.
pub fn url_tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Host part of a URL, lowercased: after `scheme://` up to the next `/`,
/// port stripped.
pub fn url_domain(url: &str) -> String {
    let rest = match url.find("://") {
        Some(i) => &url[i + 3..],
        None => url,
    };
    let host = rest.split('/').next().unwrap_or("");
    let host = host.split('@').last().unwrap_or("");
    host.split(':').next().unwrap_or("").to_lowercase()
}

pub fn term_frequencies(tokens: &[String]) -> BTreeMap<&str, f64> {
    let mut tf = BTreeMap::new();
    for t in tokens {
        *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    tf
}

/// Cosine similarity between two term-frequency maps; 0 if either is empty.
pub fn tf_cosine_maps(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(t, va)| b.get(t).map(|vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Term-frequency cosine over whitespace tokens of two query strings.
pub fn query_cosine(q1: &str, q2: &str) -> f64 {
    let t1 = query_tokens(q1);
    let t2 = query_tokens(q2);
    tf_cosine_maps(&term_frequencies(&t1), &term_frequencies(&t2))
}

/// Levenshtein distance over characters.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Shannon entropy (natural log) of a list of non-negative counts.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            p * p.ln()
        })
        .sum::<f64>()
}
