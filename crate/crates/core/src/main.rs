//! Command-line pipeline driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/processing error. Every
//! subcommand is deterministic given `--seed`. Options may also come from a
//! `key=value` config file (`--config`); explicit flags win.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use struggle_detect::error::{Error, Result};
use struggle_detect::features::{FeatureConfig, FeatureMatrix};
use struggle_detect::ingest::{self, SegmentConfig};
use struggle_detect::learn::{
    self, train_logistic, train_zero_rule, ClassifierKind, FitScope, FmMode, Hyper,
    PipelineConfig,
};
use struggle_detect::model::{FeatureGroup, Label, PopularityTable, Session};
use struggle_detect::modulation::fit_modulation;
use struggle_detect::stats::{
    rules_relevance_test, select_means_ends_groups, MinMaxScaler,
};
use struggle_detect::synth::{self, SimConfig};
use struggle_detect::taxonomy::Taxonomy;

#[derive(Parser)]
#[command(
    name = "struggle-detect",
    about = "Detect struggling search sessions from event logs",
    version
)]
struct Cli {
    /// key=value config file; explicit flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event log, truth sidecar, and popularity table
    Simulate(SimulateArgs),
    /// Parse and segment a log; print a summary and optionally re-emit it
    Ingest(IngestArgs),
    /// Extract the effort-feature matrix from a log
    Extract(ExtractArgs),
    /// Run the rules-irrelevance tail test on a feature matrix
    RulesTest(RulesArgs),
    /// Select the means-ends feature groups by state ANOVAs
    Select(SelectArgs),
    /// Fit and apply Gaussian feature modulation to a feature matrix
    Modulate(ModulateArgs),
    /// Train a classifier on a full feature matrix
    Train(TrainArgs),
    /// Cross-validated three-way comparison: baseline, +FMNS, +FM
    Eval(EvalArgs),
    /// Re-render the comparison table from a machine-readable record stream
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// number of sessions
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// output directory for log.jsonl, truth.tsv, popularity.tsv
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    paratelic_prior: Option<f64>,
    #[arg(long)]
    topic_fidelity: Option<f64>,
    #[arg(long)]
    explore_coupling: Option<f64>,
}

#[derive(Args)]
struct IngestArgs {
    /// input log file
    #[arg(long = "in")]
    input: PathBuf,
    /// optional canonical re-emission of the segmented log
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gap_minutes: Option<f64>,
    #[arg(long)]
    sim_threshold: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    /// input log file
    #[arg(long = "in")]
    input: PathBuf,
    /// output feature CSV
    #[arg(long)]
    out: PathBuf,
    /// truth sidecar with session labels
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    popularity: Option<PathBuf>,
    /// taxonomy file; the bundled default when omitted
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    gap_minutes: Option<f64>,
    #[arg(long)]
    sim_threshold: Option<f64>,
    /// worker threads for extraction
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RulesArgs {
    /// input feature CSV
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    /// machine-readable JSON records
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct ModulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// output CSV with modulated rows
    #[arg(long)]
    out: PathBuf,
    /// fitted parameter file
    #[arg(long)]
    params_out: Option<PathBuf>,
    /// comma-separated group names, or "auto" for ANOVA selection
    #[arg(long, default_value = "auto")]
    groups: String,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// output model file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "logistic")]
    classifier: String,
    /// off | fmns | fm
    #[arg(long)]
    fm: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// feature CSV, or a simulate output directory
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// fold | global parameter fitting
    #[arg(long)]
    fit_scope: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// record stream produced by eval --records
    #[arg(long = "in")]
    input: PathBuf,
}

/// key=value file; blank lines and # comments ignored.
fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    if let Some(path) = path {
        for (lineno, line) in std::fs::read_to_string(path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key=value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

fn setting<T: std::str::FromStr>(
    flag: Option<T>,
    cfg: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match cfg.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::Config(format!("bad value {raw:?} for {key}"))),
        None => Ok(default),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successful exits; anything else is
            // a usage error
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(a, &cfg),
        Command::Ingest(a) => ingest_cmd(a, &cfg),
        Command::Extract(a) => extract_cmd(a, &cfg),
        Command::RulesTest(a) => rules_cmd(a, &cfg),
        Command::Select(a) => select_cmd(a, &cfg),
        Command::Modulate(a) => modulate_cmd(a, &cfg),
        Command::Train(a) => train_cmd(a, &cfg),
        Command::Eval(a) => eval_cmd(a, &cfg),
        Command::Report(a) => report_cmd(a),
    }
}

fn simulate(a: SimulateArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let d = SimConfig::default();
    let sim = SimConfig {
        n_sessions: setting(a.n, cfg, "n", d.n_sessions)?,
        seed: setting(a.seed, cfg, "seed", d.seed)?,
        paratelic_prior: setting(a.paratelic_prior, cfg, "paratelic_prior", d.paratelic_prior)?,
        topic_fidelity: setting(a.topic_fidelity, cfg, "topic_fidelity", d.topic_fidelity)?,
        explore_coupling: setting(a.explore_coupling, cfg, "explore_coupling", d.explore_coupling)?,
        ..d
    };
    let sessions = synth::generate_sessions(&sim)?;
    let pop = synth::generate_popularity(&sim, &sessions);
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("log.jsonl"), synth::render_log(&sessions))?;
    std::fs::write(a.out.join("truth.tsv"), synth::render_truth(&sessions))?;
    pop.save(&a.out.join("popularity.tsv"))?;
    let pos = sessions.iter().filter(|s| s.label == Label::Struggle).count();
    println!(
        "simulated {} sessions ({} struggling) into {}",
        sessions.len(),
        pos,
        a.out.display()
    );
    Ok(())
}

fn load_sessions(
    input: &Path,
    gap_minutes: f64,
    sim_threshold: f64,
) -> Result<(Vec<Session>, usize)> {
    let report = ingest::parse_log_file(input)?;
    let seg = SegmentConfig {
        gap_minutes,
        sim_threshold,
    };
    let sessions = ingest::segment_sessions(report.events, &seg)?;
    Ok((sessions, report.skipped))
}

fn ingest_cmd(a: IngestArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let gap = setting(a.gap_minutes, cfg, "gap_minutes", 30.0)?;
    let sim = setting(a.sim_threshold, cfg, "sim_threshold", 0.1)?;
    let (sessions, skipped) = load_sessions(&a.input, gap, sim)?;
    let events: usize = sessions.iter().map(|s| s.events.len()).sum();
    println!(
        "{} sessions, {} events, {} malformed lines skipped",
        sessions.len(),
        events,
        skipped
    );
    if let Some(out) = a.out {
        std::fs::write(out, synth::render_log(&sessions))?;
    }
    Ok(())
}

fn load_taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    match path {
        Some(p) => Taxonomy::load(p),
        None => Ok(Taxonomy::default_fixture()),
    }
}

fn extract_cmd(a: ExtractArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let gap = setting(a.gap_minutes, cfg, "gap_minutes", 30.0)?;
    let sim = setting(a.sim_threshold, cfg, "sim_threshold", 0.1)?;
    let jobs = setting(a.jobs, cfg, "jobs", 1)?;
    let (mut sessions, _) = load_sessions(&a.input, gap, sim)?;
    let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
    taxonomy.annotate(&mut sessions);
    if let Some(truth_path) = &a.truth {
        let truth = ingest::load_truth(truth_path)?;
        ingest::apply_labels(&mut sessions, &truth);
    }
    let pop = match &a.popularity {
        Some(p) => PopularityTable::load(p)?,
        None => PopularityTable::default(),
    };
    let matrix = FeatureMatrix::extract_all(
        &sessions,
        &pop,
        &taxonomy,
        &FeatureConfig::default(),
        jobs,
    );
    matrix.save_csv(&a.out)?;
    println!(
        "extracted {} sessions x {} features to {}",
        matrix.len(),
        struggle_detect::model::feature_count(),
        a.out.display()
    );
    Ok(())
}

fn rules_cmd(a: RulesArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let alpha = setting(a.alpha, cfg, "alpha", 0.05)?;
    let matrix = FeatureMatrix::load_csv(&a.input)?;
    let norm = struggle_detect::stats::minmax_normalize(&matrix.rows);
    let report = rules_relevance_test(&matrix.session_ids, &norm)?;
    println!(
        "rules-irrelevance tail test (top/bottom {} of {} by ExploreScore)",
        report.tail_size,
        matrix.len()
    );
    println!("  MANOVA: {}", report.manova);
    for (group, anova) in &report.anovas {
        println!("  {:<16} {}", format!("{}:", group.name()), anova);
    }
    let reject = report.manova.p < alpha;
    println!(
        "  MANOVA p {} alpha={alpha}: {}",
        if reject { "<" } else { ">=" },
        if reject {
            "rules dimension looks relevant"
        } else {
            "fail to reject; rules dimension irrelevant"
        }
    );
    if let Some(path) = a.records {
        let mut lines = String::new();
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "test": "manova", "f": report.manova.f, "p": report.manova.p,
                "df1": report.manova.df1, "df2": report.manova.df2,
            })
        ));
        for (group, anova) in &report.anovas {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({
                    "test": "anova", "group": group.name(), "f": anova.f,
                    "p": anova.p, "df1": anova.df1, "df2": anova.df2,
                })
            ));
        }
        std::fs::write(path, lines)?;
    }
    Ok(())
}

fn select_cmd(a: SelectArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let alpha = setting(a.alpha, cfg, "alpha", 0.05)?;
    let matrix = FeatureMatrix::load_csv(&a.input)?;
    let norm = struggle_detect::stats::minmax_normalize(&matrix.rows);
    let report = select_means_ends_groups(&norm, &matrix.states, alpha)?;
    println!("means-ends group selection (telic vs paratelic, alpha={alpha})");
    println!("  MANOVA: {}", report.manova);
    for (group, anova) in &report.anovas {
        let mark = if report.selected.contains(group) { "*" } else { " " };
        println!("  {mark} {:<16} {}", format!("{}:", group.name()), anova);
    }
    let names: Vec<&str> = report.selected.iter().map(|g| g.name()).collect();
    println!("  selected: {}", names.join(", "));
    if let Some(path) = a.records {
        let mut lines = String::new();
        for (group, anova) in &report.anovas {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({
                    "group": group.name(), "f": anova.f, "p": anova.p,
                    "selected": report.selected.contains(group),
                })
            ));
        }
        std::fs::write(path, lines)?;
    }
    Ok(())
}

fn parse_groups(raw: &str) -> Result<BTreeSet<FeatureGroup>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(FeatureGroup::parse)
        .collect()
}

fn modulate_cmd(a: ModulateArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let alpha = setting(a.alpha, cfg, "alpha", 0.05)?;
    let mut matrix = FeatureMatrix::load_csv(&a.input)?;
    let groups = if a.groups == "auto" {
        let norm = struggle_detect::stats::minmax_normalize(&matrix.rows);
        select_means_ends_groups(&norm, &matrix.states, alpha)?.selected
    } else {
        parse_groups(&a.groups)?
    };
    if groups.is_empty() {
        return Err(Error::Data("no feature groups to modulate".into()));
    }
    let params = fit_modulation(&matrix.rows, &matrix.states, &groups)?;
    matrix.rows = params.apply_all(&matrix.rows, &matrix.states);
    matrix.save_csv(&a.out)?;
    if let Some(p) = a.params_out {
        params.save(&p)?;
    }
    let names: Vec<&str> = groups.iter().map(|g| g.name()).collect();
    println!(
        "modulated groups [{}] for {} sessions into {}",
        names.join(", "),
        matrix.len(),
        a.out.display()
    );
    Ok(())
}

fn hyper_from(
    lr: Option<f64>,
    epochs: Option<usize>,
    l2: Option<f64>,
    seed: u64,
    cfg: &BTreeMap<String, String>,
) -> Result<Hyper> {
    let d = Hyper::default();
    Ok(Hyper {
        lr: setting(lr, cfg, "lr", d.lr)?,
        epochs: setting(epochs, cfg, "epochs", d.epochs)?,
        l2: setting(l2, cfg, "l2", d.l2)?,
        seed,
    })
}

fn train_cmd(a: TrainArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let alpha = setting(a.alpha, cfg, "alpha", 0.05)?;
    let seed = setting(a.seed, cfg, "seed", 0)?;
    let fm = FmMode::parse(&setting(a.fm, cfg, "fm", "off".to_string())?)?;
    let matrix = FeatureMatrix::load_csv(&a.input)?;
    let model = match a.classifier.as_str() {
        "zero-rule" => train_zero_rule(&matrix.labels)?,
        "logistic" => {
            let scaler = MinMaxScaler::fit(&matrix.rows);
            let mut rows = scaler.transform(&matrix.rows);
            if fm != FmMode::Off {
                let groups = match fm {
                    FmMode::Fmns => FeatureGroup::ALL.iter().copied().collect(),
                    _ => select_means_ends_groups(&rows, &matrix.states, alpha)?.selected,
                };
                if !groups.is_empty() {
                    let params = fit_modulation(&rows, &matrix.states, &groups)?;
                    rows = params.apply_all(&rows, &matrix.states);
                }
            }
            let vocab = learn::topic_vocabulary(&matrix);
            let x: Vec<Vec<f64>> = rows
                .iter()
                .zip(&matrix.topics)
                .map(|(row, topic)| learn::encode(row, topic.as_deref(), &vocab))
                .collect();
            let y: Vec<bool> = matrix.labels.iter().map(|&l| l == Label::Struggle).collect();
            let hyper = hyper_from(a.lr, a.epochs, a.l2, seed, cfg)?;
            train_logistic(&x, &y, &hyper, vocab)?
        }
        other => return Err(Error::Config(format!("unknown classifier {other:?}"))),
    };
    model.save(&a.out)?;
    println!("trained {} model on {} sessions -> {}", a.classifier, matrix.len(), a.out.display());
    Ok(())
}

/// For `eval --in DIR`, run the front half of the pipeline from a simulate
/// output directory.
fn matrix_from_dir(dir: &Path, jobs: usize) -> Result<FeatureMatrix> {
    let (mut sessions, _) = load_sessions(&dir.join("log.jsonl"), 30.0, 0.1)?;
    let taxonomy = Taxonomy::default_fixture();
    taxonomy.annotate(&mut sessions);
    let truth = ingest::load_truth(&dir.join("truth.tsv"))?;
    ingest::apply_labels(&mut sessions, &truth);
    let pop = PopularityTable::load(&dir.join("popularity.tsv"))?;
    Ok(FeatureMatrix::extract_all(
        &sessions,
        &pop,
        &taxonomy,
        &FeatureConfig::default(),
        jobs,
    ))
}

fn eval_cmd(a: EvalArgs, cfg: &BTreeMap<String, String>) -> Result<()> {
    let jobs = setting(a.jobs, cfg, "jobs", 1)?;
    let matrix = if a.input.is_dir() {
        matrix_from_dir(&a.input, jobs)?
    } else {
        FeatureMatrix::load_csv(&a.input)?
    };
    let scope = match setting(a.fit_scope, cfg, "fit_scope", "fold".to_string())?.as_str() {
        "fold" => FitScope::Fold,
        "global" => FitScope::Global,
        other => return Err(Error::Config(format!("unknown fit scope {other:?}"))),
    };
    let seed = setting(a.seed, cfg, "seed", 0)?;
    let pipeline = PipelineConfig {
        k: setting(a.k, cfg, "k", 10)?,
        alpha: setting(a.alpha, cfg, "alpha", 0.05)?,
        fit_scope: scope,
        seed,
        hyper: hyper_from(a.lr, a.epochs, a.l2, seed, cfg)?,
        fm: FmMode::Off,
        classifier: ClassifierKind::Logistic,
    };
    let runs = learn::three_way_comparison(&matrix, &pipeline)?;
    print!("{}", learn::render_table(&runs));
    if let Some(path) = a.records {
        std::fs::write(path, learn::to_records(&runs))?;
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input)?;
    let mut runs = learn::parse_records(&text)?;
    let has_lm = runs.iter().any(|r| r.name == "LM");
    for r in &mut runs {
        if has_lm && (r.name == "LM+FM" || r.name == "LM+FMNS") {
            r.baseline = Some("LM".to_string());
        }
    }
    print!("{}", learn::render_table(&runs));
    Ok(())
}
