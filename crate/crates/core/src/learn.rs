//! Classifiers and evaluation: zero-rule and logistic regression, the
//! five-metric confusion report, stratified k-fold cross-validation with the
//! normalize / select / modulate pipeline fit on training folds, and the
//! before/after-modulation comparison table.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::{feature_count, FeatureGroup, Label, MotivState, FEATURE_DICTIONARY};
use crate::modulation::{fit_modulation, ModulationParams};
use crate::stats::{paired_t_one_tailed, select_means_ends_groups, MinMaxScaler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    ZeroRule,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    /// Logistic weights over the feature dictionary + one-hot topic block.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Only meaningful for ZeroRule.
    pub majority_label: Label,
    /// Topic vocabulary behind the one-hot block, sorted.
    pub topic_vocab: Vec<String>,
}

/// Encodes a (normalized, possibly modulated) feature row plus its topic into
/// the dense classifier input: dictionary features then one topic indicator
/// per vocabulary entry. Unknown or missing topics encode as all zeros.
pub fn encode(row: &[f64], topic: Option<&str>, topic_vocab: &[String]) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len() + topic_vocab.len());
    out.extend_from_slice(row);
    for name in topic_vocab {
        let hit = topic == Some(name.as_str());
        out.push(f64::from(u8::from(hit)));
    }
    out
}

/// Majority-class baseline; ties predict NonStruggle.
pub fn train_zero_rule(labels: &[Label]) -> Result<ClassifierModel> {
    if labels.is_empty() {
        return Err(Error::Training("zero rule needs at least one label".into()));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Struggle).count();
    let neg = labels.len() - pos;
    let majority = if pos > neg { Label::Struggle } else { Label::NonStruggle };
    Ok(ClassifierModel {
        kind: ClassifierKind::ZeroRule,
        weights: Vec::new(),
        bias: 0.0,
        majority_label: majority,
        topic_vocab: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 0.1,
            epochs: 2000,
            l2: 1e-4,
            seed: 0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// L2-regularized mean negative log-likelihood (bias unregularized).
pub fn logistic_loss(x: &[Vec<f64>], y: &[bool], weights: &[f64], bias: f64, l2: f64) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let z = bias + row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        // log(1 + exp(-m)) with m = +-z, numerically stable
        let m = if yi { z } else { -z };
        loss += if m > 0.0 {
            (-m).exp().ln_1p()
        } else {
            -m + m.exp().ln_1p()
        };
    }
    loss / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logistic_loss`]; returns (weight gradient, bias
/// gradient).
pub fn logistic_gradient(
    x: &[Vec<f64>],
    y: &[bool],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let z = bias + row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        let err = sigmoid(z) - f64::from(u8::from(yi));
        gb += err;
        for (g, a) in gw.iter_mut().zip(row) {
            *g += err * a;
        }
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Deterministic full-batch gradient descent with seeded near-zero
/// initialization.
pub fn train_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    hyper: &Hyper,
    topic_vocab: Vec<String>,
) -> Result<ClassifierModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Training("empty or mismatched training data".into()));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::Training("logistic training needs both classes".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Training("ragged feature rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
    let mut bias = 0.0;
    for _ in 0..hyper.epochs {
        let (gw, gb) = logistic_gradient(x, y, &weights, bias, hyper.l2);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= hyper.lr * g;
        }
        bias -= hyper.lr * gb;
    }
    Ok(ClassifierModel {
        kind: ClassifierKind::Logistic,
        weights,
        bias,
        majority_label: Label::NonStruggle,
        topic_vocab,
    })
}

impl ClassifierModel {
    /// Struggle probability and predicted label; the decision threshold is a
    /// strict `prob > 0.5`.
    pub fn predict(&self, encoded: &[f64]) -> Result<(f64, Label)> {
        match self.kind {
            ClassifierKind::ZeroRule => {
                let prob = if self.majority_label == Label::Struggle { 1.0 } else { 0.0 };
                Ok((prob, self.majority_label))
            }
            ClassifierKind::Logistic => {
                if encoded.len() != self.weights.len() {
                    return Err(Error::Encoding {
                        expected: self.weights.len(),
                        got: encoded.len(),
                    });
                }
                let z = self.bias
                    + encoded.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>();
                let prob = sigmoid(z);
                let label = if prob > 0.5 { Label::Struggle } else { Label::NonStruggle };
                Ok((prob, label))
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.kind {
            ClassifierKind::ZeroRule => {
                out.push_str("kind\tzero_rule\n");
                out.push_str(&format!(
                    "majority\t{}\n",
                    crate::features::label_str(self.majority_label)
                ));
            }
            ClassifierKind::Logistic => {
                out.push_str("kind\tlogistic\n");
                out.push_str(&format!("bias\t{:.16e}\n", self.bias));
                let names: Vec<String> = FEATURE_DICTIONARY
                    .iter()
                    .map(|(n, _)| (*n).to_string())
                    .chain(self.topic_vocab.iter().map(|t| format!("topic:{t}")))
                    .collect();
                for (name, w) in names.iter().zip(&self.weights) {
                    out.push_str(&format!("w\t{name}\t{w:.16e}\n"));
                }
            }
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// One evaluation row: accuracy plus precision/recall for both classes.
/// Ratios with a zero denominator are absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub accuracy: f64,
    pub pos_precision: Option<f64>,
    pub pos_recall: Option<f64>,
    pub neg_precision: Option<f64>,
    pub neg_recall: Option<f64>,
}

pub fn metrics(preds: &[Label], labels: &[Label]) -> Result<MetricsRow> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::Data("metrics need equal, non-empty prediction/label lists".into()));
    }
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut tn = 0.0;
    let mut fal_n = 0.0;
    for (&p, &l) in preds.iter().zip(labels) {
        match (p == Label::Struggle, l == Label::Struggle) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fal_n += 1.0,
        }
    }
    let frac = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    Ok(MetricsRow {
        accuracy: (tp + tn) / preds.len() as f64,
        pos_precision: frac(tp, tp + fp),
        pos_recall: frac(tp, tp + fal_n),
        neg_precision: frac(tn, tn + fal_n),
        neg_recall: frac(tn, tn + fp),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<MetricsRow>,
    pub aggregate: MetricsRow,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

fn aggregate(folds: &[MetricsRow]) -> MetricsRow {
    MetricsRow {
        accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64,
        pos_precision: mean_opt(folds.iter().map(|f| f.pos_precision)),
        pos_recall: mean_opt(folds.iter().map(|f| f.pos_recall)),
        neg_precision: mean_opt(folds.iter().map(|f| f.neg_precision)),
        neg_recall: mean_opt(folds.iter().map(|f| f.neg_recall)),
    }
}

/// Which features get modulated: none, all groups (no selection), or only
/// the significant means-ends groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FmMode {
    Off,
    Fmns,
    Fm,
}

impl FmMode {
    pub fn parse(s: &str) -> Result<FmMode> {
        match s {
            "off" => Ok(FmMode::Off),
            "fmns" => Ok(FmMode::Fmns),
            "fm" => Ok(FmMode::Fm),
            _ => Err(Error::Config(format!("unknown fm mode {s:?}"))),
        }
    }
}

/// Whether normalization/selection/modulation parameters are fit per
/// training fold (default, leak-free) or once on the full dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitScope {
    Fold,
    Global,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub k: usize,
    pub fm: FmMode,
    pub classifier: ClassifierKind,
    pub alpha: f64,
    pub fit_scope: FitScope,
    pub seed: u64,
    pub hyper: Hyper,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 10,
            fm: FmMode::Off,
            classifier: ClassifierKind::Logistic,
            alpha: 0.05,
            fit_scope: FitScope::Fold,
            seed: 0,
            hyper: Hyper::default(),
        }
    }
}

/// Seeded stratified fold assignment: shuffles each class separately and
/// deals indices round-robin, so every fold holds both classes whenever the
/// class counts allow it.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config("k must be at least 2".into()));
    }
    if labels.iter().any(|&l| l == Label::Unlabeled) {
        return Err(Error::Data("cross-validation needs fully labeled sessions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for class in [Label::Struggle, Label::NonStruggle] {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    for fold in 0..k {
        let mut pos = 0usize;
        let mut neg = 0usize;
        for (i, &f) in assignment.iter().enumerate() {
            if f == fold {
                match labels[i] {
                    Label::Struggle => pos += 1,
                    _ => neg += 1,
                }
            }
        }
        if pos == 0 || neg == 0 {
            return Err(Error::Split(format!(
                "fold {fold} is missing a class ({pos} struggle / {neg} non-struggle)"
            )));
        }
    }
    Ok(assignment)
}

/// Sorted unique topics of a matrix; the one-hot vocabulary.
pub fn topic_vocabulary(matrix: &FeatureMatrix) -> Vec<String> {
    let set: BTreeSet<&String> = matrix.topics.iter().flatten().collect();
    set.into_iter().cloned().collect()
}

/// Runs stratified k-fold cross-validation of the full pipeline: per fold
/// (or globally, when configured) fit min-max normalization, optionally
/// select means-ends groups and fit modulation on the training split, apply
/// to both splits, train the classifier, and score the held-out fold.
pub fn kfold_eval(matrix: &FeatureMatrix, cfg: &PipelineConfig) -> Result<EvalReport> {
    let n = matrix.len();
    if n < 2 * cfg.k {
        return Err(Error::TooFewSessions { need: 2 * cfg.k, got: n });
    }
    let assignment = stratified_folds(&matrix.labels, cfg.k, cfg.seed)?;
    let vocab = topic_vocabulary(matrix);

    let global = if cfg.fit_scope == FitScope::Global {
        Some(fit_stage(matrix, &(0..n).collect::<Vec<_>>(), cfg)?)
    } else {
        None
    };

    let mut folds = Vec::with_capacity(cfg.k);
    for fold in 0..cfg.k {
        let train_idx: Vec<usize> = (0..n).filter(|i| assignment[*i] != fold).collect();
        let test_idx: Vec<usize> = (0..n).filter(|i| assignment[*i] == fold).collect();
        let stage = match &global {
            Some(s) => s.clone(),
            None => fit_stage(matrix, &train_idx, cfg)?,
        };
        let encode_set = |idx: &[usize]| -> Vec<Vec<f64>> {
            idx.iter()
                .map(|&i| {
                    let row = stage.transform(&matrix.rows[i], matrix.states[i]);
                    encode(&row, matrix.topics[i].as_deref(), &vocab)
                })
                .collect()
        };
        let preds: Vec<Label> = match cfg.classifier {
            ClassifierKind::ZeroRule => {
                let labels: Vec<Label> = train_idx.iter().map(|&i| matrix.labels[i]).collect();
                let model = train_zero_rule(&labels)?;
                test_idx.iter().map(|_| model.majority_label).collect()
            }
            ClassifierKind::Logistic => {
                let x = encode_set(&train_idx);
                let y: Vec<bool> = train_idx
                    .iter()
                    .map(|&i| matrix.labels[i] == Label::Struggle)
                    .collect();
                let model = train_logistic(&x, &y, &cfg.hyper, vocab.clone())?;
                encode_set(&test_idx)
                    .iter()
                    .map(|row| model.predict(row).map(|(_, l)| l))
                    .collect::<Result<_>>()?
            }
        };
        let truth: Vec<Label> = test_idx.iter().map(|&i| matrix.labels[i]).collect();
        folds.push(metrics(&preds, &truth)?);
    }
    let aggregate = aggregate(&folds);
    Ok(EvalReport { folds, aggregate })
}

/// The per-fold preprocessing state: scaler plus optional modulation params.
#[derive(Debug, Clone)]
struct Stage {
    scaler: MinMaxScaler,
    modulation: Option<ModulationParams>,
}

impl Stage {
    fn transform(&self, row: &[f64], state: MotivState) -> Vec<f64> {
        let norm = self.scaler.transform_row(row);
        match &self.modulation {
            Some(params) => params.apply_row(&norm, state),
            None => norm,
        }
    }
}

fn fit_stage(matrix: &FeatureMatrix, train_idx: &[usize], cfg: &PipelineConfig) -> Result<Stage> {
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| matrix.rows[i].clone()).collect();
    let train_states: Vec<MotivState> = train_idx.iter().map(|&i| matrix.states[i]).collect();
    let scaler = MinMaxScaler::fit(&train_rows);
    let modulation = match cfg.fm {
        FmMode::Off => None,
        _ => {
            let norm = scaler.transform(&train_rows);
            let groups: BTreeSet<FeatureGroup> = match cfg.fm {
                FmMode::Fmns => FeatureGroup::ALL.iter().copied().collect(),
                _ => select_means_ends_groups(&norm, &train_states, cfg.alpha)?.selected,
            };
            if groups.is_empty() {
                None
            } else {
                Some(fit_modulation(&norm, &train_states, &groups)?)
            }
        }
    };
    Ok(Stage { scaler, modulation })
}

/// A named evaluation run, for the comparison table and record stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    /// Name of the run this one is compared against, if any.
    pub baseline: Option<String>,
    pub report: EvalReport,
}

const METRIC_NAMES: [&str; 5] = ["accu.", "pos. p", "pos. r", "neg. p", "neg. r"];

fn metric_values(row: &MetricsRow) -> [Option<f64>; 5] {
    [
        Some(row.accuracy),
        row.pos_precision,
        row.pos_recall,
        row.neg_precision,
        row.neg_recall,
    ]
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.4}"))
}

/// Relative improvement column plus a `*` marker when the paired one-tailed
/// t-test over matched folds is significant at p < 0.05.
fn fmt_improvement(run: &EvalReport, base: &EvalReport, metric: usize) -> String {
    let (new, old) = (
        metric_values(&run.aggregate)[metric],
        metric_values(&base.aggregate)[metric],
    );
    let (Some(new), Some(old)) = (new, old) else {
        return "--".to_string();
    };
    if old == 0.0 {
        return "--".to_string();
    }
    let pct = (new - old) / old * 100.0;
    let arrow = if pct > 0.0 { "^" } else if pct < 0.0 { "v" } else { "=" };
    let mut cell = format!("{:.1}%{arrow}", pct.abs());
    let pairs: Vec<(f64, f64)> = run
        .folds
        .iter()
        .zip(&base.folds)
        .filter_map(|(r, b)| Some((metric_values(r)[metric]?, metric_values(b)[metric]?)))
        .collect();
    if pairs.len() >= 2 {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Ok(t) = paired_t_one_tailed(&a, &b) {
            if t.p < 0.05 {
                cell.push('*');
            }
        }
    }
    cell
}

/// Renders the comparison table: one row per run, five metrics, improvement
/// columns against each run's named baseline.
pub fn render_table(runs: &[RunSummary]) -> String {
    let by_name: BTreeMap<&str, &RunSummary> =
        runs.iter().map(|r| (r.name.as_str(), r)).collect();
    let mut out = format!("{:<14}", "run");
    for m in METRIC_NAMES {
        out.push_str(&format!("{m:>8}{:>9}", "impr."));
    }
    out.push('\n');
    for run in runs {
        out.push_str(&format!("{:<14}", run.name));
        let base = run.baseline.as_deref().and_then(|b| by_name.get(b));
        for metric in 0..5 {
            out.push_str(&format!(
                "{:>8}",
                fmt_metric(metric_values(&run.report.aggregate)[metric])
            ));
            let impr = match base {
                Some(b) if run.baseline.as_deref() != Some(run.name.as_str()) => {
                    fmt_improvement(&run.report, &b.report, metric)
                }
                _ => "--".to_string(),
            };
            out.push_str(&format!("{impr:>9}"));
        }
        out.push('\n');
    }
    out
}

/// Machine-readable record stream: one JSON object per fold per run plus one
/// aggregate record per run.
pub fn to_records(runs: &[RunSummary]) -> String {
    #[derive(Serialize)]
    struct Record<'a> {
        run: &'a str,
        fold: Option<usize>,
        #[serde(flatten)]
        metrics: MetricsRow,
    }
    let mut out = String::new();
    for run in runs {
        for (i, fold) in run.report.folds.iter().enumerate() {
            let rec = Record {
                run: &run.name,
                fold: Some(i),
                metrics: *fold,
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
        }
        let rec = Record {
            run: &run.name,
            fold: None,
            metrics: run.report.aggregate,
        };
        out.push_str(&serde_json::to_string(&rec).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<RunSummary>> {
    #[derive(Deserialize)]
    struct Record {
        run: String,
        fold: Option<usize>,
        #[serde(flatten)]
        metrics: MetricsRow,
    }
    let mut order: Vec<String> = Vec::new();
    let mut folds: BTreeMap<String, Vec<MetricsRow>> = BTreeMap::new();
    let mut aggregates: BTreeMap<String, MetricsRow> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let rec: Record =
            serde_json::from_str(line).map_err(|e| Error::Format(e.to_string()))?;
        if !order.contains(&rec.run) {
            order.push(rec.run.clone());
        }
        match rec.fold {
            Some(_) => folds.entry(rec.run).or_default().push(rec.metrics),
            None => {
                aggregates.insert(rec.run, rec.metrics);
            }
        }
    }
    order
        .into_iter()
        .map(|name| {
            let fold_rows = folds.remove(&name).unwrap_or_default();
            let agg = aggregates
                .remove(&name)
                .or_else(|| (!fold_rows.is_empty()).then(|| aggregate(&fold_rows)))
                .ok_or_else(|| Error::Format(format!("run {name:?} has no records")))?;
            Ok(RunSummary {
                name,
                baseline: None,
                report: EvalReport {
                    folds: fold_rows,
                    aggregate: agg,
                },
            })
        })
        .collect()
}

/// Evaluates the three-way modulation comparison on one feature matrix:
/// ZeroRule, plain logistic, logistic+FMNS, and logistic+FM, over identical
/// seeded folds.
pub fn three_way_comparison(matrix: &FeatureMatrix, cfg: &PipelineConfig) -> Result<Vec<RunSummary>> {
    let mut runs = Vec::new();
    let zr = kfold_eval(
        matrix,
        &PipelineConfig {
            classifier: ClassifierKind::ZeroRule,
            fm: FmMode::Off,
            ..cfg.clone()
        },
    )?;
    runs.push(RunSummary {
        name: "ZeroRule".into(),
        baseline: None,
        report: zr,
    });
    for (suffix, fm) in [("", FmMode::Off), ("+FMNS", FmMode::Fmns), ("+FM", FmMode::Fm)] {
        let report = kfold_eval(
            matrix,
            &PipelineConfig {
                classifier: ClassifierKind::Logistic,
                fm,
                ..cfg.clone()
            },
        )?;
        runs.push(RunSummary {
            name: format!("LM{suffix}"),
            baseline: (!suffix.is_empty()).then(|| "LM".to_string()),
            report,
        });
    }
    Ok(runs)
}

pub fn dimension() -> usize {
    feature_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rule_majority_and_tie() {
        let mut labels = vec![Label::NonStruggle; 824];
        labels.extend(vec![Label::Struggle; 299]);
        let m = train_zero_rule(&labels).unwrap();
        assert_eq!(m.majority_label, Label::NonStruggle);

        let m = train_zero_rule(&[Label::Struggle, Label::Struggle]).unwrap();
        assert_eq!(m.majority_label, Label::Struggle);

        let m = train_zero_rule(&[Label::Struggle, Label::NonStruggle]).unwrap();
        assert_eq!(m.majority_label, Label::NonStruggle);
    }

    #[test]
    fn predict_threshold_is_strict() {
        let model = ClassifierModel {
            kind: ClassifierKind::Logistic,
            weights: vec![0.0, 0.0],
            bias: 0.0,
            majority_label: Label::NonStruggle,
            topic_vocab: Vec::new(),
        };
        let (prob, label) = model.predict(&[1.0, 1.0]).unwrap();
        assert_eq!(prob, 0.5);
        assert_eq!(label, Label::NonStruggle);

        let hot = ClassifierModel {
            weights: vec![10.0, 10.0],
            ..model.clone()
        };
        assert_eq!(hot.predict(&[1.0, 1.0]).unwrap().1, Label::Struggle);

        assert!(model.predict(&[1.0]).is_err());
    }

    #[test]
    fn separable_two_points_train_to_perfection() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![false, true];
        let model = train_logistic(&x, &y, &Hyper::default(), Vec::new()).unwrap();
        assert_eq!(model.predict(&x[0]).unwrap().1, Label::NonStruggle);
        assert_eq!(model.predict(&x[1]).unwrap().1, Label::Struggle);
    }

    #[test]
    fn single_class_training_errors() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(train_logistic(&x, &[true, true], &Hyper::default(), Vec::new()).is_err());
    }

    #[test]
    fn loss_non_increasing_over_epochs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] + 0.5 * r[1] > 0.0).collect();
        let hyper = Hyper::default();
        let mut weights = vec![0.0; 4];
        let mut bias = 0.0;
        let mut prev = logistic_loss(&x, &y, &weights, bias, hyper.l2);
        for _ in 0..200 {
            let (gw, gb) = logistic_gradient(&x, &y, &weights, bias, hyper.l2);
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= hyper.lr * g;
            }
            bias -= hyper.lr * gb;
            let loss = logistic_loss(&x, &y, &weights, bias, hyper.l2);
            assert!(loss <= prev + 1e-12);
            prev = loss;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<bool> = (0..25).map(|_| rng.gen_bool(0.4)).collect();
        let l2 = 1e-3;
        for _ in 0..5 {
            let weights: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bias: f64 = rng.gen_range(-1.0..1.0);
            let (gw, gb) = logistic_gradient(&x, &y, &weights, bias, l2);
            let h = 1e-6;
            for j in 0..3 {
                let mut wp = weights.clone();
                wp[j] += h;
                let mut wm = weights.clone();
                wm[j] -= h;
                let fd = (logistic_loss(&x, &y, &wp, bias, l2)
                    - logistic_loss(&x, &y, &wm, bias, l2))
                    / (2.0 * h);
                let rel = (gw[j] - fd).abs() / gw[j].abs().max(1e-8);
                assert!(rel < 1e-5, "weight {j}: analytic {} vs fd {fd}", gw[j]);
            }
            let fd = (logistic_loss(&x, &y, &weights, bias + h, l2)
                - logistic_loss(&x, &y, &weights, bias - h, l2))
                / (2.0 * h);
            assert!((gb - fd).abs() / gb.abs().max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn zero_rule_metrics_match_table_counts() {
        // 824 negative / 299 positive, majority prediction
        let mut labels = vec![Label::NonStruggle; 824];
        labels.extend(vec![Label::Struggle; 299]);
        let preds = vec![Label::NonStruggle; 1123];
        let m = metrics(&preds, &labels).unwrap();
        assert!((m.accuracy - 0.7337).abs() < 5e-5);
        assert_eq!(m.pos_recall, Some(0.0));
        assert_eq!(m.neg_recall, Some(1.0));
        assert_eq!(m.pos_precision, None);
    }

    #[test]
    fn metrics_hand_confusion() {
        let labels = [
            Label::Struggle,
            Label::Struggle,
            Label::Struggle,
            Label::NonStruggle,
        ];
        let preds = [Label::Struggle; 4];
        let m = metrics(&preds, &labels).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.pos_precision, Some(0.75));
        assert_eq!(m.pos_recall, Some(1.0));
        assert_eq!(m.neg_recall, Some(0.0));
        assert_eq!(m.neg_precision, None);

        let perfect = metrics(&labels, &labels).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.pos_precision, Some(1.0));
        assert_eq!(perfect.neg_precision, Some(1.0));
    }

    #[test]
    fn metrics_identity_accuracy_is_prevalence_weighted_recall() {
        let labels = [
            Label::Struggle,
            Label::NonStruggle,
            Label::Struggle,
            Label::NonStruggle,
            Label::NonStruggle,
        ];
        let preds = [
            Label::Struggle,
            Label::Struggle,
            Label::NonStruggle,
            Label::NonStruggle,
            Label::NonStruggle,
        ];
        let m = metrics(&preds, &labels).unwrap();
        let pos_prev = 2.0 / 5.0;
        let weighted =
            m.pos_recall.unwrap() * pos_prev + m.neg_recall.unwrap() * (1.0 - pos_prev);
        assert!((m.accuracy - weighted).abs() < 1e-12);
    }

    #[test]
    fn stratified_folds_balanced_and_deterministic() {
        let labels = vec![
            Label::Struggle,
            Label::Struggle,
            Label::NonStruggle,
            Label::NonStruggle,
        ];
        let a = stratified_folds(&labels, 2, 7).unwrap();
        let b = stratified_folds(&labels, 2, 7).unwrap();
        assert_eq!(a, b);
        for fold in 0..2 {
            let pos = labels
                .iter()
                .zip(&a)
                .filter(|(&l, &f)| l == Label::Struggle && f == fold)
                .count();
            assert_eq!(pos, 1);
        }
    }

    #[test]
    fn folds_partition_the_universe() {
        let labels: Vec<Label> = (0..50)
            .map(|i| if i % 3 == 0 { Label::Struggle } else { Label::NonStruggle })
            .collect();
        let assignment = stratified_folds(&labels, 5, 1).unwrap();
        assert_eq!(assignment.len(), 50);
        for fold in 0..5 {
            let test: BTreeSet<usize> = (0..50).filter(|&i| assignment[i] == fold).collect();
            let train: BTreeSet<usize> = (0..50).filter(|&i| assignment[i] != fold).collect();
            assert!(test.is_disjoint(&train));
            assert_eq!(test.len() + train.len(), 50);
        }
    }

    #[test]
    fn records_round_trip() {
        let runs = vec![RunSummary {
            name: "LM".into(),
            baseline: None,
            report: EvalReport {
                folds: vec![
                    MetricsRow {
                        accuracy: 0.8,
                        pos_precision: Some(0.7),
                        pos_recall: Some(0.6),
                        neg_precision: Some(0.9),
                        neg_recall: Some(0.95),
                    },
                    MetricsRow {
                        accuracy: 0.82,
                        pos_precision: None,
                        pos_recall: Some(0.0),
                        neg_precision: Some(0.82),
                        neg_recall: Some(1.0),
                    },
                ],
                aggregate: MetricsRow {
                    accuracy: 0.81,
                    pos_precision: Some(0.7),
                    pos_recall: Some(0.3),
                    neg_precision: Some(0.86),
                    neg_recall: Some(0.975),
                },
            },
        }];
        let text = to_records(&runs);
        let back = parse_records(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].report, runs[0].report);
    }
}
