//! `rerank`: command-line driver for log parsing, synthetic data, topic and
//! expert training, policy replay and the HSMM sequence tool.

mod output;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rerank_core::bandit::PolicyKind;
use rerank_core::hsmm::{self, HsmmModel};
use rerank_core::logmodel::{read_sessions, write_labels, ParseOptions, Session};
use rerank_core::ranksvm::{write_models, write_models_text};
use rerank_core::replay::{
    self, cluster_sweep, compare, config_hash, policy_seed, prepare, replay_policy, ComparisonReport, ReplayConfig,
    ReplayReport, SweepReport, SWEEP_TOPICS, VERSION,
};
use rerank_core::synthgen::{self, parse_truth, SynthConfig, TruthRow};
use rerank_core::topics::{build_session_docs, gibbs_train, LdaConfig, TopicModel};

use output::{read_text, timestamp, write_atomic, write_json};

#[derive(Parser)]
#[command(name = "rerank", version, about = "Contextual-bandit re-ranking of search results, evaluated offline on click logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a log and report record, session and malformed-line counts.
    ParseCheck {
        /// Click log (TSV).
        #[arg(long)]
        log: PathBuf,
        /// Fail on the first malformed line.
        #[arg(long)]
        strict: bool,
    },
    /// Write per-SERP relevance grades derived from dwell times.
    Label {
        /// Click log (TSV).
        #[arg(long)]
        log: PathBuf,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
        /// Fail on the first malformed line.
        #[arg(long)]
        strict: bool,
    },
    /// Generate a synthetic log and its truth sidecar.
    Synth {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
        /// Truth sidecar CSV from `synth`; enables regret.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Train the session topic model.
    Topics {
        /// Click log (TSV).
        #[arg(long)]
        log: PathBuf,
        /// Topic count K.
        #[arg(long, default_value_t = 7)]
        clusters: usize,
        /// Random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sweeps / EM iterations.
        #[arg(long, default_value_t = rerank_core::topics::DEFAULT_ITERATIONS)]
        iterations: usize,
        /// Doc-topic prior (default 50 / clusters).
        #[arg(long)]
        alpha: Option<f64>,
        /// Binary model output.
        #[arg(long)]
        out: PathBuf,
        /// Human-readable top terms per topic.
        #[arg(long)]
        text: Option<PathBuf>,
        /// `session_id<TAB>topic` for every session.
        #[arg(long)]
        assignments: Option<PathBuf>,
    },
    /// Train one RankSVM expert per topic on the whole log.
    TrainExperts {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Binary expert models output.
        #[arg(long)]
        out: PathBuf,
        /// Weights as text.
        #[arg(long)]
        text: Option<PathBuf>,
        /// Also write the topic model used for the split.
        #[arg(long)]
        topics_out: Option<PathBuf>,
    },
    /// Replay one policy over the scored days.
    Replay {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// One of default, random, linucb, ts-linear, gts, gts+ts.
        #[arg(long, value_parser = parse_policy)]
        policy: PolicyKind,
        /// Truth sidecar from `synth`; enables regret.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// JSON report.
        #[arg(long)]
        out: PathBuf,
        /// CTR trace as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Policy state after the last event.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Replay several policies on the same stream and report lifts.
    Compare {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', value_parser = parse_policy,
              default_value = "default,random,linucb,ts-linear,gts,gts+ts")]
        policies: Vec<PolicyKind>,
        /// Truth sidecar CSV from `synth`; enables regret.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
        /// CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Run gts and random for K in {1,3,5,7,10} instead.
        #[arg(long)]
        sweep_clusters: bool,
    },
    /// Hidden semi-Markov model over query-cluster sequences.
    Hsmm {
        #[command(subcommand)]
        command: HsmmCommand,
    },
    /// Convert a saved JSON report to JSON or CSV.
    Report {
        /// Saved JSON report.
        #[arg(long)]
        input: PathBuf,
        /// Output format.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum HsmmCommand {
    /// Fit a model by EM.
    Train {
        #[command(flatten)]
        input: SequenceInput,
        /// Hidden states M.
        #[arg(long, default_value_t = 3)]
        states: usize,
        /// Longest segment duration D_max.
        #[arg(long, default_value_t = 3)]
        max_duration: usize,
        /// Observation vocabulary size (default: inferred).
        #[arg(long)]
        symbols: Option<usize>,
        /// Sweeps / EM iterations.
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        /// Random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
        /// JSON training report with the log-likelihood trace.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Log-likelihood of sequences under a model.
    Eval {
        /// HSMM model file.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: SequenceInput,
        /// Optional JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Next-segment distribution after each sequence (or after step `at`).
    Predict {
        /// HSMM model file.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: SequenceInput,
        /// Predict after this many observations (default: whole sequence).
        #[arg(long)]
        at: Option<usize>,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SequenceInput {
    /// One sequence per line of whitespace-separated symbol ids.
    #[arg(long, conflicts_with = "log")]
    sequences: Option<PathBuf>,
    /// Click log; queries become their most likely topic.
    #[arg(long, requires = "topic_model")]
    log: Option<PathBuf>,
    /// Topic model from `topics`.
    #[arg(long)]
    topic_model: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Click log (TSV).
    #[arg(long)]
    log: PathBuf,
    /// Flat `key = value` replay config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one replay config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Topic count K.
    #[arg(long)]
    clusters: Option<usize>,
    /// Trailing days that are scored.
    #[arg(long)]
    scored_days: Option<u64>,
    /// Gibbs sweeps for the topic model.
    #[arg(long)]
    lda_iterations: Option<usize>,
    /// RankSVM training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// RankSVM SGD step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// RankSVM L2 penalty.
    #[arg(long)]
    l2: Option<f64>,
    /// GTS exploration rate.
    #[arg(long)]
    gamma: Option<f64>,
    /// GTS learning rate.
    #[arg(long)]
    eta: Option<f64>,
    /// TS-linear posterior scale.
    #[arg(long)]
    v: Option<f64>,
    /// LinUCB exploration weight.
    #[arg(long)]
    alpha_explore: Option<f64>,
    /// Trace granularity in events.
    #[arg(long)]
    trace_every: Option<u64>,
    /// Keep the warm-start experts for every scored day.
    #[arg(long)]
    no_retrain: bool,
    /// Fail on the first malformed log line.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse()
}

/// Usage problems exit with 2, data problems with 1.
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

fn split_kv(raw: &str) -> Result<(&str, &str), Failure> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {raw:?}")))
}

impl PipelineArgs {
    fn resolve(&self) -> Result<ReplayConfig, Failure> {
        let mut cfg = ReplayConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_text(&read_text(path)?)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        }
        for raw in &self.set {
            let (k, v) = split_kv(raw)?;
            cfg.set(k, v).map_err(usage)?;
        }
        macro_rules! take {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$target = v; })*
            };
        }
        take!(seed => seed, clusters => topics, scored_days => scored_days, lda_iterations => lda_iterations,
              epochs => epochs, learning_rate => learning_rate, l2 => l2, gamma => gamma, eta => eta, v => v,
              alpha_explore => alpha_explore, trace_every => trace_every);
        if self.no_retrain {
            cfg.retrain_daily = false;
        }
        if cfg.topics == 0 {
            return Err(usage("--clusters must be positive"));
        }
        Ok(cfg)
    }

    fn sessions(&self) -> Result<Vec<Session>, Failure> {
        load_sessions(&self.log, self.strict)
    }
}

fn load_sessions(path: &Path, strict: bool) -> Result<Vec<Session>, Failure> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (sessions, stats) = read_sessions(BufReader::new(file), ParseOptions { strict })
        .with_context(|| format!("parsing {}", path.display()))?;
    if stats.malformed > 0 {
        eprintln!("warning: skipped {} malformed line(s) in {}", stats.malformed, path.display());
        for s in &stats.samples {
            eprintln!("  {s}");
        }
    }
    Ok(sessions)
}

fn load_truth(path: Option<&PathBuf>) -> Result<Option<Vec<TruthRow>>, Failure> {
    path.map(|p| parse_truth(&read_text(p)?).with_context(|| format!("parsing {}", p.display())))
        .transpose()
        .map_err(data)
}

/// Provenance comment written at the top of text artifacts.
fn meta_line(w: &mut impl Write, seed: Option<u64>, hash: &str) -> std::io::Result<()> {
    match seed {
        Some(s) => writeln!(w, "# version={VERSION} seed={s} config_hash={hash}"),
        None => writeln!(w, "# version={VERSION} seed=none config_hash={hash}"),
    }
}

fn cmd_parse_check(log: &Path, strict: bool) -> CmdResult {
    let file = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let (sessions, stats) = read_sessions(BufReader::new(file), ParseOptions { strict }).map_err(data)?;
    let serps: usize = sessions.iter().map(|s| s.serps.len()).sum();
    let clicks: usize = sessions.iter().map(Session::click_count).sum();
    for s in &stats.samples {
        eprintln!("malformed: {s}");
    }
    println!(
        "lines={} records={} malformed={} sessions={} serps={serps} clicks={clicks}",
        stats.lines,
        stats.records,
        stats.malformed,
        sessions.len()
    );
    Ok(())
}

fn cmd_label(log: &Path, out: &Path, strict: bool) -> CmdResult {
    let sessions = load_sessions(log, strict)?;
    let hash = config_hash(&serde_json::json!({ "command": "label", "strict": strict }));
    write_atomic(out, |w| {
        meta_line(w, None, &hash)?;
        write_labels(w, &sessions)
    })?;
    let serps: usize = sessions.iter().map(|s| s.serps.len()).sum();
    println!("labeled {serps} SERPs from {} sessions -> {}", sessions.len(), out.display());
    Ok(())
}

fn cmd_synth(config: Option<&PathBuf>, set: &[String], seed: Option<u64>, out: &Path, truth: &Path) -> CmdResult {
    let mut cfg = SynthConfig::default();
    if let Some(path) = config {
        cfg.apply_text(&read_text(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    for raw in set {
        let (k, v) = split_kv(raw)?;
        cfg.set(k, v).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let hash = config_hash(&cfg);
    let mut summary = None;
    write_atomic(out, |log| {
        write_atomic(truth, |t| {
            writeln!(t, "# version={VERSION} seed={} config_hash={hash}", cfg.seed)?;
            summary = Some(synthgen::generate(&cfg, &mut *log, &mut *t).map_err(std::io::Error::other)?);
            Ok(())
        })
        .map_err(std::io::Error::other)
    })?;
    let s = summary.expect("generator ran");
    println!(
        "synth seed={} config_hash={hash}: {} sessions, {} SERPs, {} clicks -> {}, {}",
        cfg.seed,
        s.sessions,
        s.serps,
        s.clicks,
        out.display(),
        truth.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_topics(
    log: &Path,
    clusters: usize,
    seed: u64,
    iterations: usize,
    alpha: Option<f64>,
    out: &Path,
    text: Option<&PathBuf>,
    assignments: Option<&PathBuf>,
) -> CmdResult {
    if clusters == 0 {
        return Err(usage("--clusters must be positive"));
    }
    let sessions = load_sessions(log, false)?;
    let docs = build_session_docs(&sessions);
    let cfg = LdaConfig {
        alpha,
        iterations,
        ..LdaConfig::new(clusters, seed)
    };
    let fit = gibbs_train(&docs, &cfg).map_err(data)?;
    let hash = config_hash(&serde_json::json!({
        "command": "topics", "clusters": clusters, "seed": seed, "iterations": iterations, "alpha": alpha,
    }));
    write_atomic(out, |w| fit.model.write_to(w))?;
    if let Some(path) = text {
        write_atomic(path, |w| {
            meta_line(w, Some(seed), &hash)?;
            fit.model.write_text(w)
        })?;
    }
    if let Some(path) = assignments {
        let labels = fit.assignments();
        write_atomic(path, |w| {
            meta_line(w, Some(seed), &hash)?;
            writeln!(w, "session_id\ttopic")?;
            for (doc, k) in docs.iter().zip(labels) {
                writeln!(w, "{}\t{k}", doc.session_id)?;
            }
            Ok(())
        })?;
    }
    println!(
        "topics K={clusters} seed={seed} vocab={} docs={} final log-likelihood={:.3} -> {}",
        fit.model.vocab_len(),
        docs.len(),
        fit.log_likelihood.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn cmd_train_experts(p: &PipelineArgs, out: &Path, text: Option<&PathBuf>, topics_out: Option<&PathBuf>) -> CmdResult {
    let cfg = p.resolve()?;
    let sessions = p.sessions()?;
    let (fit, experts) = replay::train_topic_experts(&sessions, &cfg).map_err(data)?;
    let hash = config_hash(&cfg);
    write_atomic(out, |w| write_models(w, &experts))?;
    if let Some(path) = text {
        write_atomic(path, |w| {
            meta_line(w, Some(cfg.seed), &hash)?;
            write_models_text(w, &experts)
        })?;
    }
    if let Some(path) = topics_out {
        write_atomic(path, |w| fit.model.write_to(w))?;
    }
    let pairs: usize = experts.iter().map(|e| e.training_pairs).sum();
    println!(
        "trained {} experts on {pairs} preference pairs seed={} config_hash={} -> {}",
        experts.len(),
        cfg.seed,
        hash,
        out.display()
    );
    Ok(())
}

fn cmd_replay(
    p: &PipelineArgs,
    kind: PolicyKind,
    truth: Option<&PathBuf>,
    out: &Path,
    csv: Option<&PathBuf>,
    checkpoint: Option<&PathBuf>,
) -> CmdResult {
    let cfg = p.resolve()?;
    let truth = load_truth(truth)?;
    let sessions = p.sessions()?;
    let prepared = prepare(&sessions, &cfg).map_err(data)?;
    let (report, policy) =
        replay_policy(&prepared, kind, policy_seed(cfg.seed, kind), truth.as_deref()).map_err(data)?;
    let stamped = Stamped {
        timestamp: timestamp(),
        report: &report,
    };
    write_json(out, &stamped)?;
    if let Some(path) = csv {
        write_atomic(path, |w| replay::write_trace_csv(w, &report))?;
    }
    if let Some(path) = checkpoint {
        let bytes = policy.checkpoint();
        write_atomic(path, |w| w.write_all(&bytes))?;
    }
    println!(
        "{} events={} ctr@1={:.4} lift_vs_default={:+.4} seed={} config_hash={} -> {}",
        report.policy,
        report.events,
        report.ctr_at_1,
        report.lift_vs_default,
        report.seed,
        report.config_hash,
        out.display()
    );
    Ok(())
}

/// A replay report with the run's wall-clock time alongside.
#[derive(Serialize)]
struct Stamped<'a> {
    timestamp: String,
    #[serde(flatten)]
    report: &'a ReplayReport,
}

fn cmd_compare(
    p: &PipelineArgs,
    kinds: &[PolicyKind],
    truth: Option<&PathBuf>,
    out: &Path,
    csv: Option<&PathBuf>,
    sweep: bool,
) -> CmdResult {
    let cfg = p.resolve()?;
    let sessions = p.sessions()?;
    if sweep {
        let mut report = cluster_sweep(&sessions, &cfg, &SWEEP_TOPICS).map_err(data)?;
        report.timestamp = Some(timestamp());
        write_json(out, &report)?;
        if let Some(path) = csv {
            write_atomic(path, |w| replay::write_sweep_csv(w, &report))?;
        }
        let curve: Vec<String> = report
            .points
            .iter()
            .map(|pt| format!("K={}:{:.4}", pt.topics, pt.gts_ctr))
            .collect();
        println!("sweep gts ctr@1 {} config_hash={} -> {}", curve.join(" "), report.config_hash, out.display());
        return Ok(());
    }
    if kinds.is_empty() {
        return Err(usage("--policies must name at least one policy"));
    }
    let truth = load_truth(truth)?;
    let prepared = prepare(&sessions, &cfg).map_err(data)?;
    let mut report = compare(&prepared, kinds, truth.as_deref()).map_err(data)?;
    report.timestamp = Some(timestamp());
    write_json(out, &report)?;
    if let Some(path) = csv {
        write_atomic(path, |w| replay::write_comparison_csv(w, &report))?;
    }
    let summary: Vec<String> = report
        .results
        .iter()
        .map(|r| format!("{}={:.4}", r.policy, r.ctr_at_1))
        .collect();
    println!(
        "compare events={} ctr@1 {} seed={} config_hash={} -> {}",
        report.events,
        summary.join(" "),
        report.master_seed,
        report.config_hash,
        out.display()
    );
    Ok(())
}

fn load_sequences(input: &SequenceInput) -> Result<(Vec<Vec<usize>>, Option<usize>), Failure> {
    match (&input.sequences, &input.log, &input.topic_model) {
        (Some(path), None, _) => {
            let seqs = hsmm::parse_sequences(&read_text(path)?)
                .map_err(|e| data(anyhow!("{}: {e}", path.display())))?;
            Ok((seqs, None))
        }
        (None, Some(log), Some(model)) => {
            let file = File::open(model).with_context(|| format!("opening {}", model.display()))?;
            let topics = TopicModel::read_from(BufReader::new(file)).map_err(data)?;
            let sessions = load_sessions(log, false)?;
            Ok((hsmm::session_observations(&sessions, &topics), Some(topics.topics)))
        }
        _ => Err(usage("give either --sequences or --log with --topic-model")),
    }
}

fn load_hsmm(path: &Path) -> Result<HsmmModel, Failure> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    HsmmModel::read_from(BufReader::new(file)).map_err(data)
}

#[derive(Serialize)]
struct HsmmTrainReport {
    version: &'static str,
    timestamp: String,
    seed: u64,
    states: usize,
    max_duration: usize,
    symbols: usize,
    iterations: usize,
    sequences: usize,
    log_likelihood: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_hsmm_train(
    input: &SequenceInput,
    states: usize,
    max_duration: usize,
    symbols: Option<usize>,
    iterations: usize,
    seed: u64,
    out: &Path,
    report: Option<&PathBuf>,
) -> CmdResult {
    let (corpus, known) = load_sequences(input)?;
    if corpus.is_empty() {
        return Err(data(anyhow!("no sequences to train on")));
    }
    let seen = corpus.iter().flatten().max().map_or(1, |m| m + 1);
    let v = symbols.or(known).unwrap_or(seen);
    if v < seen {
        return Err(usage(format!("--symbols {v} is smaller than the largest symbol + 1 ({seen})")));
    }
    if states < 2 || max_duration == 0 {
        return Err(usage("need --states >= 2 and --max-duration >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = HsmmModel::random(states, max_duration, v, &mut rng).map_err(data)?;
    let (model, trace) = hsmm::train(&start, &corpus, iterations).map_err(data)?;
    write_atomic(out, |w| model.write_to(w))?;
    if let Some(path) = report {
        write_json(
            path,
            &HsmmTrainReport {
                version: VERSION,
                timestamp: timestamp(),
                seed,
                states,
                max_duration,
                symbols: v,
                iterations,
                sequences: corpus.len(),
                log_likelihood: trace.clone(),
            },
        )?;
    }
    println!(
        "hsmm M={states} D={max_duration} V={v} seed={seed}: log-likelihood {:.4} -> {:.4} over {} sequences -> {}",
        trace[0],
        trace[trace.len() - 1],
        corpus.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct HsmmEvalReport {
    version: &'static str,
    timestamp: String,
    sequences: usize,
    log_likelihood: f64,
    per_sequence: Vec<f64>,
}

fn cmd_hsmm_eval(model: &Path, input: &SequenceInput, out: Option<&PathBuf>) -> CmdResult {
    let model = load_hsmm(model)?;
    let (corpus, _) = load_sequences(input)?;
    let per_sequence = corpus
        .iter()
        .map(|o| hsmm::forward(&model, o).map(|t| t.log_likelihood))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data)?;
    let total: f64 = per_sequence.iter().sum();
    if let Some(path) = out {
        write_json(
            path,
            &HsmmEvalReport {
                version: VERSION,
                timestamp: timestamp(),
                sequences: corpus.len(),
                log_likelihood: total,
                per_sequence,
            },
        )?;
    }
    println!("hsmm eval sequences={} log-likelihood={total:.6}", corpus.len());
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    length: usize,
    at: usize,
    /// `P(next state = j)`.
    next_state: Vec<f64>,
    /// `P(next segment = (j, d))`, laid out `j * max_duration + d - 1`.
    next_segment: Vec<f64>,
}

#[derive(Serialize)]
struct HsmmPredictReport {
    version: &'static str,
    timestamp: String,
    states: usize,
    max_duration: usize,
    predictions: Vec<Prediction>,
}

fn cmd_hsmm_predict(model_path: &Path, input: &SequenceInput, at: Option<usize>, out: &Path) -> CmdResult {
    let model = load_hsmm(model_path)?;
    let (corpus, _) = load_sequences(input)?;
    let dmax = model.max_duration();
    let mut predictions = Vec::with_capacity(corpus.len());
    for obs in &corpus {
        let t = at.unwrap_or(obs.len());
        let tr = hsmm::forward(&model, obs).map_err(data)?;
        let seg = hsmm::predict_next(&model, &tr, t).map_err(data)?;
        let next_state = seg.chunks(dmax).map(|c| c.iter().sum()).collect();
        predictions.push(Prediction {
            length: obs.len(),
            at: t,
            next_state,
            next_segment: seg,
        });
    }
    let n = predictions.len();
    write_json(
        out,
        &HsmmPredictReport {
            version: VERSION,
            timestamp: timestamp(),
            states: model.states(),
            max_duration: dmax,
            predictions,
        },
    )?;
    println!("hsmm predict sequences={n} -> {}", out.display());
    Ok(())
}

/// Any of the report kinds the tool writes.
enum AnyReport {
    Comparison(ComparisonReport),
    Sweep(SweepReport),
    Replay(ReplayReport),
}

fn read_report(path: &Path) -> Result<AnyReport, Failure> {
    let text = read_text(path)?;
    if let Ok(r) = serde_json::from_str::<ComparisonReport>(&text) {
        return Ok(AnyReport::Comparison(r));
    }
    if let Ok(r) = serde_json::from_str::<SweepReport>(&text) {
        return Ok(AnyReport::Sweep(r));
    }
    serde_json::from_str::<ReplayReport>(&text)
        .map(AnyReport::Replay)
        .with_context(|| format!("{} is not a replay, compare or sweep report", path.display()))
        .map_err(data)
}

fn cmd_report(input: &Path, format: Format, out: &Path) -> CmdResult {
    let report = read_report(input)?;
    match (format, &report) {
        (Format::Json, AnyReport::Comparison(r)) => write_json(out, r)?,
        (Format::Json, AnyReport::Sweep(r)) => write_json(out, r)?,
        (Format::Json, AnyReport::Replay(r)) => write_json(out, r)?,
        (Format::Csv, AnyReport::Comparison(r)) => write_atomic(out, |w| replay::write_comparison_csv(w, r))?,
        (Format::Csv, AnyReport::Sweep(r)) => write_atomic(out, |w| replay::write_sweep_csv(w, r))?,
        (Format::Csv, AnyReport::Replay(r)) => write_atomic(out, |w| replay::write_trace_csv(w, r))?,
    }
    println!("report {} -> {}", input.display(), out.display());
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match &cli.command {
        Command::ParseCheck { log, strict } => cmd_parse_check(log, *strict),
        Command::Label { log, out, strict } => cmd_label(log, out, *strict),
        Command::Synth {
            config,
            set,
            seed,
            out,
            truth,
        } => cmd_synth(config.as_ref(), set, *seed, out, truth),
        Command::Topics {
            log,
            clusters,
            seed,
            iterations,
            alpha,
            out,
            text,
            assignments,
        } => cmd_topics(log, *clusters, *seed, *iterations, *alpha, out, text.as_ref(), assignments.as_ref()),
        Command::TrainExperts {
            pipeline,
            out,
            text,
            topics_out,
        } => cmd_train_experts(pipeline, out, text.as_ref(), topics_out.as_ref()),
        Command::Replay {
            pipeline,
            policy,
            truth,
            out,
            csv,
            checkpoint,
        } => cmd_replay(pipeline, *policy, truth.as_ref(), out, csv.as_ref(), checkpoint.as_ref()),
        Command::Compare {
            pipeline,
            policies,
            truth,
            out,
            csv,
            sweep_clusters,
        } => cmd_compare(pipeline, policies, truth.as_ref(), out, csv.as_ref(), *sweep_clusters),
        Command::Hsmm { command } => match command {
            HsmmCommand::Train {
                input,
                states,
                max_duration,
                symbols,
                iterations,
                seed,
                out,
                report,
            } => cmd_hsmm_train(input, *states, *max_duration, *symbols, *iterations, *seed, out, report.as_ref()),
            HsmmCommand::Eval { model, input, out } => cmd_hsmm_eval(model, input, out.as_ref()),
            HsmmCommand::Predict { model, input, at, out } => cmd_hsmm_predict(model, input, *at, out),
        },
        Command::Report { input, format, out } => cmd_report(input, *format, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
