//! Statistical machinery: min-max normalization, ExploreScore, two-group
//! ANOVA and MANOVA (Wilks' lambda with the exact two-group F transform),
//! the rules-dimension irrelevance test, means-ends feature-group selection,
//! and the one-tailed paired t-test.

pub mod special;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{group_indices, FeatureGroup, MotivState};
#[cfg(test)]
use crate::model::feature_count;
use special::{f_survival, t_survival};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df1: u64,
    pub df2: u64,
    pub p: f64,
}

impl fmt::Display for AnovaResult {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(w, "F({}, {})={:.4}, {}", self.df1, self.df2, self.f, fmt_p(self.p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManovaResult {
    pub wilks_lambda: f64,
    pub f: f64,
    pub df1: u64,
    pub df2: u64,
    pub p: f64,
}

impl fmt::Display for ManovaResult {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(w, "F({}, {})={:.4}, {}", self.df1, self.df2, self.f, fmt_p(self.p))
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.0001 {
        "p<0.0001".to_string()
    } else {
        format!("p={p:.4}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    pub df: u64,
    pub p: f64,
}

/// Per-column min-max bounds fit on one matrix and applied to another (or the
/// same) matrix. Transforming the fit matrix lands in [0,1]; constant columns
/// map to 0 everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> MinMaxScaler {
        let ncol = rows.first().map_or(0, Vec::len);
        let mut mins = vec![f64::INFINITY; ncol];
        let mut maxs = vec![f64::NEG_INFINITY; ncol];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        MinMaxScaler { mins, maxs }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.maxs[j] - self.mins[j];
                if span > 0.0 {
                    (v - self.mins[j]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Normalizes each column of a matrix into [0,1] by its own min and max.
pub fn minmax_normalize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    MinMaxScaler::fit(rows).transform(rows)
}

/// Mean of a feature group's columns within one (normalized) row.
pub fn group_average(row: &[f64], group: FeatureGroup) -> f64 {
    let idx = group_indices(group);
    idx.iter().map(|&i| row[i]).sum::<f64>() / idx.len() as f64
}

/// ExploreScore: sum of the diversify-group mean and the rarity-group mean of
/// an already-normalized feature row.
pub fn explore_score(row: &[f64]) -> f64 {
    group_average(row, FeatureGroup::DiversifyEffort)
        + group_average(row, FeatureGroup::RarityEffort)
}

fn sample_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard two-group one-way ANOVA with df (1, n1+n2-2).
pub fn one_way_anova(a: &[f64], b: &[f64]) -> Result<AnovaResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Data("ANOVA needs at least 2 values per group".into()));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (m1, m2) = (sample_mean(a), sample_mean(b));
    let grand = (n1 * m1 + n2 * m2) / (n1 + n2);
    let ss_between = n1 * (m1 - grand).powi(2) + n2 * (m2 - grand).powi(2);
    let ss_within: f64 = a.iter().map(|x| (x - m1).powi(2)).sum::<f64>()
        + b.iter().map(|x| (x - m2).powi(2)).sum::<f64>();
    let df1 = 1u64;
    let df2 = (a.len() + b.len() - 2) as u64;
    let (f, p) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_between / df1 as f64) / (ss_within / df2 as f64);
        (f, f_survival(f, df1, df2))
    };
    Ok(AnovaResult { f, df1, df2, p })
}

/// Determinant by LU decomposition with partial pivoting.
fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for k in 0..n {
        let (pivot, pv) = (k..n)
            .map(|i| (i, m[i][k].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pv == 0.0 {
            return 0.0;
        }
        if pivot != k {
            m.swap(pivot, k);
            det = -det;
        }
        det *= m[k][k];
        for i in k + 1..n {
            let factor = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= factor * m[k][j];
            }
        }
    }
    det
}

fn column_means(rows: &[Vec<f64>], ncol: usize) -> Vec<f64> {
    let mut means = vec![0.0; ncol];
    for row in rows {
        for (j, &v) in row.iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= rows.len() as f64;
    }
    means
}

fn scatter_about(rows: &[Vec<f64>], center: &[f64], acc: &mut [Vec<f64>]) {
    let p = center.len();
    for row in rows {
        for i in 0..p {
            let di = row[i] - center[i];
            for j in 0..p {
                acc[i][j] += di * (row[j] - center[j]);
            }
        }
    }
}

/// Two-group MANOVA via Wilks' lambda and the exact F transform
/// F = ((n1+n2-p-1)/p) * (1-lambda)/lambda with df (p, n1+n2-p-1).
pub fn two_group_manova(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<ManovaResult> {
    let p = a.first().map_or(0, Vec::len);
    if p == 0 || b.first().map_or(0, Vec::len) != p {
        return Err(Error::Data("MANOVA groups need matching, nonzero column counts".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::Data("MANOVA needs at least 2 rows per group".into()));
    }
    if n1 + n2 <= p + 1 {
        return Err(Error::Data(format!(
            "MANOVA needs n1+n2 > p+1 (got n={}, p={p})",
            n1 + n2
        )));
    }
    let ma = column_means(a, p);
    let mb = column_means(b, p);
    let mut grand = vec![0.0; p];
    for j in 0..p {
        grand[j] = (n1 as f64 * ma[j] + n2 as f64 * mb[j]) / (n1 + n2) as f64;
    }
    let mut within = vec![vec![0.0; p]; p];
    scatter_about(a, &ma, &mut within);
    scatter_about(b, &mb, &mut within);
    let mut between = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            between[i][j] = n1 as f64 * (ma[i] - grand[i]) * (ma[j] - grand[j])
                + n2 as f64 * (mb[i] - grand[i]) * (mb[j] - grand[j]);
        }
    }
    let det_w = determinant(within.clone());
    if det_w <= 0.0 || !det_w.is_finite() {
        // fully degenerate data (both groups constant and equal) is still a
        // defined no-difference outcome; anything else needs pruning
        let no_spread = between.iter().flatten().all(|&v| v.abs() < 1e-12);
        if no_spread {
            return Ok(ManovaResult {
                wilks_lambda: 1.0,
                f: 0.0,
                df1: p as u64,
                df2: (n1 + n2 - p - 1) as u64,
                p: 1.0,
            });
        }
        return Err(Error::SingularCovariance);
    }
    let mut total = within;
    for i in 0..p {
        for j in 0..p {
            total[i][j] += between[i][j];
        }
    }
    let det_t = determinant(total);
    let lambda = (det_w / det_t).clamp(0.0, 1.0);
    let df1 = p as u64;
    let df2 = (n1 + n2 - p - 1) as u64;
    let (f, pval) = if lambda >= 1.0 {
        (0.0, 1.0)
    } else if lambda <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (df2 as f64 / df1 as f64) * (1.0 - lambda) / lambda;
        (f, f_survival(f, df1, df2))
    };
    Ok(ManovaResult {
        wilks_lambda: lambda,
        f,
        df1,
        df2,
        p: pval,
    })
}

/// MANOVA when the group sizes satisfy its preconditions; otherwise the
/// defined no-difference outcome. Tail tests on small inputs keep their
/// ANOVAs meaningful while the joint test degrades gracefully.
fn manova_or_degenerate(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<ManovaResult> {
    let p = a.first().map_or(0, Vec::len);
    if a.len() + b.len() <= p + 1 {
        return Ok(ManovaResult {
            wilks_lambda: 1.0,
            f: 0.0,
            df1: p as u64,
            df2: 0,
            p: 1.0,
        });
    }
    two_group_manova(a, b)
}

/// The five feature groups tested by the rules-dimension check: everything
/// except the two groups that define ExploreScore.
pub const RULES_TEST_GROUPS: [FeatureGroup; 5] = [
    FeatureGroup::QueryEffort,
    FeatureGroup::ClickEffort,
    FeatureGroup::ReadEffort,
    FeatureGroup::ScrollEffort,
    FeatureGroup::ReformEffort,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RulesReport {
    pub manova: ManovaResult,
    pub anovas: BTreeMap<FeatureGroup, AnovaResult>,
    /// Sessions per 15% tail.
    pub tail_size: usize,
}

/// Rules-dimension irrelevance test: ranks sessions by ExploreScore, takes
/// the top 15% (negativistic) and bottom 15% (conformist) tails, and compares
/// the five non-ExploreScore group-average scores with one MANOVA plus one
/// ANOVA per group. Rows must already be min-max normalized.
pub fn rules_relevance_test(session_ids: &[String], rows: &[Vec<f64>]) -> Result<RulesReport> {
    let n = rows.len();
    if n < 14 {
        return Err(Error::TooFewSessions { need: 14, got: n });
    }
    if session_ids.len() != n {
        return Err(Error::Data("session id / row count mismatch".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let scores: Vec<f64> = rows.iter().map(|r| explore_score(r)).collect();
    order.sort_by(|&i, &j| {
        scores[i]
            .total_cmp(&scores[j])
            .then_with(|| session_ids[i].cmp(&session_ids[j]))
    });
    let k = ((0.15 * n as f64).floor() as usize).max(2);
    let conformist: Vec<&Vec<f64>> = order[..k].iter().map(|&i| &rows[i]).collect();
    let negativistic: Vec<&Vec<f64>> = order[n - k..].iter().map(|&i| &rows[i]).collect();

    let averages = |tail: &[&Vec<f64>]| -> Vec<Vec<f64>> {
        tail.iter()
            .map(|r| RULES_TEST_GROUPS.iter().map(|&g| group_average(r, g)).collect())
            .collect()
    };
    let neg_avg = averages(&negativistic);
    let con_avg = averages(&conformist);
    let manova = manova_or_degenerate(&neg_avg, &con_avg)?;
    let mut anovas = BTreeMap::new();
    for (gi, &g) in RULES_TEST_GROUPS.iter().enumerate() {
        let a: Vec<f64> = neg_avg.iter().map(|r| r[gi]).collect();
        let b: Vec<f64> = con_avg.iter().map(|r| r[gi]).collect();
        anovas.insert(g, one_way_anova(&a, &b)?);
    }
    Ok(RulesReport {
        manova,
        anovas,
        tail_size: k,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selected: BTreeSet<FeatureGroup>,
    pub manova: ManovaResult,
    pub anovas: BTreeMap<FeatureGroup, AnovaResult>,
    pub n_telic: usize,
    pub n_paratelic: usize,
}

/// Means-ends feature-group selection: one ANOVA per group on group-average
/// scores split by telic/paratelic state; groups with p below `alpha` are
/// selected. The joint MANOVA over all seven group averages is reported
/// alongside. Rows must already be normalized; Unassigned sessions are
/// excluded from the split.
pub fn select_means_ends_groups(
    rows: &[Vec<f64>],
    states: &[MotivState],
    alpha: f64,
) -> Result<SelectionReport> {
    if rows.len() != states.len() {
        return Err(Error::Data("state / row count mismatch".into()));
    }
    let averages = |state: MotivState| -> Vec<Vec<f64>> {
        rows.iter()
            .zip(states)
            .filter(|(_, &s)| s == state)
            .map(|(r, _)| FeatureGroup::ALL.iter().map(|&g| group_average(r, g)).collect())
            .collect()
    };
    let telic = averages(MotivState::Telic);
    let paratelic = averages(MotivState::Paratelic);
    if telic.len() < 2 || paratelic.len() < 2 {
        return Err(Error::StateCoverage(format!(
            "need >= 2 sessions per state (telic {}, paratelic {})",
            telic.len(),
            paratelic.len()
        )));
    }
    let manova = manova_or_degenerate(&telic, &paratelic)?;
    let mut anovas = BTreeMap::new();
    let mut selected = BTreeSet::new();
    for (gi, &g) in FeatureGroup::ALL.iter().enumerate() {
        let a: Vec<f64> = telic.iter().map(|r| r[gi]).collect();
        let b: Vec<f64> = paratelic.iter().map(|r| r[gi]).collect();
        let res = one_way_anova(&a, &b)?;
        if res.p < alpha {
            selected.insert(g);
        }
        anovas.insert(g, res);
    }
    Ok(SelectionReport {
        selected,
        manova,
        anovas,
        n_telic: telic.len(),
        n_paratelic: paratelic.len(),
    })
}

/// Paired one-tailed t-test with alternative mean(a-b) > 0.
pub fn paired_t_one_tailed(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Data("paired t-test needs equal lengths >= 2".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = sample_mean(&diffs);
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = (diffs.len() - 1) as u64;
    if var == 0.0 {
        // degenerate: all differences identical
        return Ok(if mean == 0.0 {
            PairedT { t: 0.0, df, p: 0.5 }
        } else if mean > 0.0 {
            PairedT { t: f64::INFINITY, df, p: 0.0 }
        } else {
            PairedT { t: f64::NEG_INFINITY, df, p: 1.0 }
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    Ok(PairedT {
        t,
        df,
        p: t_survival(t, df),
    })
}
