//! The `corrlda` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure. Every invocation ends with a one-line JSON summary
//! on standard error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::corpus::{Corpus, Stoplist, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{
    map_at_k, per_word_metrics, perplexity_sweep, pr_curve, pr_curve_csv, precision_recall_at_k,
    CaptionSource, MetricReport, QueryMetrics, RelevanceJudgments,
};
use crate::indexing::annotate;
use crate::inference::{train, Convergence, TrainConfig};
use crate::model::ModelParams;
use crate::ranking::RankedList;
use crate::retrieval::{retrieve, RetrievalIndex};
use crate::synthetic::{generate, SyntheticConfig};

/// Environment variable bounding the worker-thread count (0 = automatic).
pub const THREADS_ENV: &str = "CORRLDA_THREADS";

const DEFAULT_LENGTHS: &str = "5,10,15,20,25,30,35,40,45,50";

#[derive(Parser, Debug)]
#[command(name = "corrlda", version, about = "Correspondence LDA for paired bag-of-words data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model with variational EM.
    Train(TrainArgs),
    /// Rank documents for a text query.
    Retrieve(RetrieveArgs),
    /// Annotate documents with text words.
    Annotate(AnnotateArgs),
    /// Precision/recall at k, MAP and optional PR curves for judged queries.
    EvalRetrieval(EvalRetrievalArgs),
    /// Mean per-word precision, recall and F-score of annotations.
    EvalAnnotation(EvalAnnotationArgs),
    /// Perplexity of generated annotations over a range of lengths.
    Perplexity(PerplexityArgs),
    /// Sample a corpus from a random ground-truth model.
    GenSynthetic(GenArgs),
}

#[derive(Args, Debug)]
struct VocabArgs {
    #[arg(long)]
    sensory_vocab: Option<PathBuf>,
    #[arg(long)]
    text_vocab: PathBuf,
}

#[derive(Args, Debug)]
struct InferenceArgs {
    /// key=value file overriding inference settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    sensory_vocab: PathBuf,
    #[arg(long)]
    text_vocab: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training report (defaults to `<out>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write a retrieval index built from the training posteriors.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topics: Option<usize>,
    /// Dirichlet prior; defaults to 0.1 for 5 topics and 0.2 otherwise.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    convergence: Option<Convergence>,
    /// Independent EM runs; the best final objective is kept.
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[arg(long)]
    model: PathBuf,
    /// Precomputed index; otherwise one is built from --corpus.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    index: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    vocab: VocabArgs,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    threshold: Option<f64>,
    /// Stop-word list, one word per line (default: bundled English list).
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    vocab: VocabArgs,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args, Debug)]
struct EvalRetrievalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    index: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    vocab: VocabArgs,
    /// JSON object mapping query → array of relevant document ids.
    #[arg(long)]
    judgments: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Directory receiving one `rank,recall,precision` CSV per query.
    #[arg(long)]
    pr_curves: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Report file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args, Debug)]
struct EvalAnnotationArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test corpus; its captions are the reference annotations.
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    vocab: VocabArgs,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, default_value_t = 100)]
    mc_samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args, Debug)]
struct PerplexityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    vocab: VocabArgs,
    /// Comma-separated annotation lengths.
    #[arg(long, default_value = DEFAULT_LENGTHS, value_delimiter = ',')]
    lengths: Vec<usize>,
    /// Score the corpus captions instead of generated annotations.
    #[arg(long)]
    ground_truth: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    topics: usize,
    #[arg(long, default_value_t = 100)]
    docs: usize,
    #[arg(long, default_value_t = 60)]
    sensory_size: usize,
    #[arg(long, default_value_t = 30)]
    text_size: usize,
    #[arg(long, default_value_t = 50)]
    words_per_doc: usize,
    #[arg(long, default_value_t = 5)]
    caption_len: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Disjoint vocabulary blocks per topic.
    #[arg(long)]
    separated: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Retrieve(_) => "retrieve",
            Command::Annotate(_) => "annotate",
            Command::EvalRetrieval(_) => "eval-retrieval",
            Command::EvalAnnotation(_) => "eval-annotation",
            Command::Perplexity(_) => "perplexity",
            Command::GenSynthetic(_) => "gen-synthetic",
        }
    }
}

/// Entry point of the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            summary(err, "usage", Err(&Error::InvalidArgument(e.kind().to_string())), Map::new());
            return 1;
        }
    };
    let name = cli.command.name();
    // Workers need `Send` sinks, so output is buffered and copied afterwards.
    let mut out_buf = Vec::new();
    let mut err_buf = Vec::new();
    let result = thread_pool()
        .and_then(|pool| pool.install(|| dispatch(cli.command, &mut out_buf, &mut err_buf)));
    let _ = err.write_all(&err_buf);
    let result = result.and_then(|f| out.write_all(&out_buf).map(|_| f).map_err(stdout_io));
    let _ = out.flush();
    match result {
        Ok(fields) => {
            summary(err, name, Ok(()), fields);
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            summary(err, name, Err(&e), Map::new());
            e.exit_code()
        }
    }
}

fn summary(err: &mut dyn Write, command: &str, status: Result<(), &Error>, fields: Map<String, Value>) {
    let mut line = Map::new();
    line.insert("command".into(), json!(command));
    match status {
        Ok(()) => {
            line.insert("status".into(), json!("ok"));
            line.insert("exit_code".into(), json!(0));
        }
        Err(e) => {
            line.insert("status".into(), json!("error"));
            line.insert("exit_code".into(), json!(e.exit_code()));
            line.insert("error".into(), json!(e.to_string()));
        }
    }
    line.extend(fields);
    let _ = writeln!(err, "{}", Value::Object(line));
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidData(format!("cannot start worker threads: {e}")))
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<Map<String, Value>> {
    match cmd {
        Command::Train(a) => run_train(a, err),
        Command::Retrieve(a) => run_retrieve(a, out),
        Command::Annotate(a) => run_annotate(a, out),
        Command::EvalRetrieval(a) => run_eval_retrieval(a, out),
        Command::EvalAnnotation(a) => run_eval_annotation(a, out),
        Command::Perplexity(a) => run_perplexity(a, out),
        Command::GenSynthetic(a) => run_gen_synthetic(a),
    }
}

fn fields(pairs: impl IntoIterator<Item = (&'static str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Reference training setup: α = 0.1 for 5 topics, 0.2 otherwise.
pub fn default_alpha(topics: usize) -> f64 {
    if topics == 5 {
        0.1
    } else {
        0.2
    }
}

fn read_config(path: Option<&Path>, cfg: &mut TrainConfig) -> Result<()> {
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_kv(&text)?;
    }
    Ok(())
}

fn inference_config(args: &InferenceArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    read_config(args.config.as_deref(), &mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_vocab(path: &Path) -> Result<Arc<Vocabulary>> {
    Vocabulary::load(path).map(Arc::new)
}

fn load_corpus(path: &Path, vocab: &VocabArgs) -> Result<Corpus> {
    let sv = vocab.sensory_vocab.as_deref().ok_or_else(|| {
        Error::InvalidArgument("--sensory-vocab is required when reading a corpus".into())
    })?;
    Corpus::load(path, load_vocab(sv)?, load_vocab(&vocab.text_vocab)?)
}

fn load_stoplist(path: Option<&Path>) -> Result<Stoplist> {
    match path {
        Some(p) => Stoplist::load(p),
        None => Ok(Stoplist::english()),
    }
}

fn check_vocab_sizes(p: &ModelParams, sensory: Option<usize>, text: usize) -> Result<()> {
    if sensory.is_some_and(|s| s != p.sensory_size()) || text != p.text_size() {
        return Err(Error::DimensionMismatch(format!(
            "vocabularies do not match the model (|S| = {}, |D| = {})",
            p.sensory_size(),
            p.text_size()
        )));
    }
    Ok(())
}

fn index_for(
    p: &ModelParams,
    index: Option<&Path>,
    corpus: Option<&Path>,
    vocab: &VocabArgs,
    cfg: &TrainConfig,
) -> Result<RetrievalIndex> {
    match (index, corpus) {
        (Some(path), _) => {
            let idx = RetrievalIndex::load(path)?;
            idx.check_model(p)?;
            Ok(idx)
        }
        (None, Some(path)) => RetrievalIndex::build(&load_corpus(path, vocab)?, p, cfg, None),
        (None, None) => Err(Error::InvalidArgument("either --index or --corpus is required".into())),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn stdout_io(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn emit_report(report: &MetricReport, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let text = report.to_json();
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(stdout_io),
    }
}

fn run_train(a: TrainArgs, err: &mut dyn Write) -> Result<Map<String, Value>> {
    let mut cfg = TrainConfig {
        alpha: f64::NAN,
        ..TrainConfig::default()
    };
    read_config(a.config.as_deref(), &mut cfg)?;
    if let Some(k) = a.topics {
        cfg.k = k;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if cfg.alpha.is_nan() {
        cfg.alpha = default_alpha(cfg.k);
    }
    if let Some(v) = a.threshold {
        cfg.em_threshold = v;
    }
    if let Some(v) = a.max_iters {
        cfg.max_em_iters = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.convergence {
        cfg.convergence = v;
    }
    if let Some(v) = a.restarts {
        cfg.restarts = v;
    }
    cfg.validate()?;

    let corpus = Corpus::load(&a.corpus, load_vocab(&a.sensory_vocab)?, load_vocab(&a.text_vocab)?)?;
    let _ = writeln!(
        err,
        "training {} topics on {} documents (alpha {}, threshold {:e})",
        cfg.k,
        corpus.len(),
        cfg.alpha,
        cfg.em_threshold
    );
    let (params, report, states) = train(&corpus, &cfg)?;
    params.save(&a.out)?;

    // Wall time is left out of the file so identical runs give identical bytes.
    let report_path = a.report.unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".report.json");
        PathBuf::from(s)
    });
    let body = json!({
        "config": cfg,
        "elbo_per_iter": report.elbo_per_iter,
        "iters_run": report.iters_run,
        "converged": report.converged,
        "best_restart": report.best_restart,
    });
    write_file(
        &report_path,
        (serde_json::to_string_pretty(&body).expect("report serializes") + "\n").as_bytes(),
    )?;
    if let Some(path) = &a.index {
        RetrievalIndex::build(&corpus, &params, &cfg, Some(&states))?.save(path)?;
    }
    Ok(fields([
        ("model", json!(a.out)),
        ("model_digest", json!(params.digest())),
        ("iters_run", json!(report.iters_run)),
        ("converged", json!(report.converged)),
        ("final_elbo", json!(report.elbo_per_iter.last())),
        ("wall_time", json!(report.wall_time)),
    ]))
}

/// `%g`-style rendering with six significant digits.
pub fn format_score(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

fn tsv_ranking<Id: std::fmt::Display>(
    out: &mut dyn Write,
    list: &RankedList<Id>,
    label: impl Fn(&Id) -> String,
) -> std::io::Result<()> {
    for (i, (id, score)) in list.items().iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", i + 1, label(id), format_score(*score))?;
    }
    Ok(())
}

fn run_retrieve(a: RetrieveArgs, out: &mut dyn Write) -> Result<Map<String, Value>> {
    let cfg = inference_config(&a.inference)?;
    let p = ModelParams::load(&a.model)?;
    let tv = load_vocab(&a.vocab.text_vocab)?;
    check_vocab_sizes(&p, None, tv.len())?;
    let stoplist = load_stoplist(a.stopwords.as_deref())?;
    let index = index_for(&p, a.index.as_deref(), a.corpus.as_deref(), &a.vocab, &cfg)?;
    let result = retrieve(&a.query, &index, &p, &tv, &stoplist, a.top, a.threshold)?;
    let q = &result.query;
    if !q.stopped.is_empty() || !q.oov.is_empty() {
        writeln!(
            out,
            "# dropped query tokens: stop-words [{}], out-of-vocabulary [{}]",
            q.stopped.join(","),
            q.oov.join(",")
        )
        .map_err(stdout_io)?;
    }
    tsv_ranking(out, &result.ranking, |id| id.clone()).map_err(stdout_io)?;
    Ok(fields([
        ("results", json!(result.ranking.len())),
        ("query_tokens", json!(q.indices.len())),
        ("stopped", json!(q.stopped)),
        ("oov", json!(q.oov)),
    ]))
}

fn run_annotate(a: AnnotateArgs, out: &mut dyn Write) -> Result<Map<String, Value>> {
    let cfg = inference_config(&a.inference)?;
    let p = ModelParams::load(&a.model)?;
    let corpus = load_corpus(&a.corpus, &a.vocab)?;
    check_vocab_sizes(&p, Some(corpus.sensory_vocab().len()), corpus.text_vocab().len())?;
    let tv = corpus.text_vocab().clone();
    for doc in corpus.documents() {
        let ann = annotate(&doc.id, &doc.sensory, &p, &cfg, a.top, a.threshold)?;
        writeln!(out, "# {}", ann.doc_id).map_err(stdout_io)?;
        tsv_ranking(out, &ann.words, |&w| tv.token(w).expect("in range").to_string())
            .map_err(stdout_io)?;
    }
    Ok(fields([("documents", json!(corpus.len()))]))
}

fn sanitize(query: &str) -> String {
    let s: String = query
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "query".into()
    } else {
        s
    }
}

fn run_eval_retrieval(a: EvalRetrievalArgs, out: &mut dyn Write) -> Result<Map<String, Value>> {
    let cfg = inference_config(&a.inference)?;
    if a.top == 0 {
        return Err(Error::InvalidArgument("--top must be ≥ 1".into()));
    }
    let p = ModelParams::load(&a.model)?;
    let tv = load_vocab(&a.vocab.text_vocab)?;
    check_vocab_sizes(&p, None, tv.len())?;
    let stoplist = load_stoplist(a.stopwords.as_deref())?;
    let index = index_for(&p, a.index.as_deref(), a.corpus.as_deref(), &a.vocab, &cfg)?;
    let judgments = RelevanceJudgments::load(&a.judgments)?;
    if judgments.is_empty() {
        return Err(Error::InvalidData("judgments file lists no queries".into()));
    }
    judgments.check_ids(index.entries.iter().map(|e| e.id.as_str()))?;

    let mut rankings = BTreeMap::new();
    let mut report = MetricReport {
        k: Some(a.top),
        ..Default::default()
    };
    for (query, relevant) in judgments.iter() {
        let full = retrieve(query, &index, &p, &tv, &stoplist, index.entries.len(), None)?.ranking;
        let (precision, recall) = precision_recall_at_k(&full, relevant, a.top)?;
        report.per_query.insert(query.to_string(), QueryMetrics { precision, recall });
        if let Some(dir) = &a.pr_curves {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let csv = pr_curve_csv(&pr_curve(&full, relevant)?);
            write_file(&dir.join(format!("{}.csv", sanitize(query))), csv.as_bytes())?;
        }
        rankings.insert(query.to_string(), full);
    }
    let map = map_at_k(&rankings, &judgments, a.top)?;
    report.map_at_k = Some(map);
    emit_report(&report, a.out.as_deref(), out)?;
    Ok(fields([("queries", json!(judgments.len())), ("map_at_k", json!(map))]))
}

fn run_eval_annotation(a: EvalAnnotationArgs, out: &mut dyn Write) -> Result<Map<String, Value>> {
    let cfg = inference_config(&a.inference)?;
    let p = ModelParams::load(&a.model)?;
    let corpus = load_corpus(&a.corpus, &a.vocab)?;
    check_vocab_sizes(&p, Some(corpus.sensory_vocab().len()), corpus.text_vocab().len())?;
    let mut annotations = BTreeMap::new();
    let mut truth = BTreeMap::new();
    for doc in corpus.documents() {
        let ann = annotate(&doc.id, &doc.sensory, &p, &cfg, a.top, None)?;
        annotations.insert(doc.id.clone(), ann.words.ids().copied().collect::<BTreeSet<_>>());
        truth.insert(doc.id.clone(), doc.caption.iter().copied().collect::<BTreeSet<_>>());
    }
    let m = per_word_metrics(&annotations, &truth, p.text_size(), a.mc_samples, a.seed)?;
    let report = MetricReport {
        k: Some(a.top),
        mpw_precision: Some(m.precision),
        mpw_recall: Some(m.recall),
        f_score: Some(m.f_score),
        ..Default::default()
    };
    emit_report(&report, a.out.as_deref(), out)?;
    Ok(fields([
        ("words", json!(m.words)),
        ("fallback_words", json!(m.fallback_words)),
        ("f_score", json!(m.f_score)),
    ]))
}

fn run_perplexity(a: PerplexityArgs, out: &mut dyn Write) -> Result<Map<String, Value>> {
    let cfg = inference_config(&a.inference)?;
    let p = ModelParams::load(&a.model)?;
    let corpus = load_corpus(&a.corpus, &a.vocab)?;
    check_vocab_sizes(&p, Some(corpus.sensory_vocab().len()), corpus.text_vocab().len())?;
    let source = if a.ground_truth {
        CaptionSource::GroundTruth
    } else {
        CaptionSource::Generated
    };
    let sweep = perplexity_sweep(&corpus, &p, &cfg, &a.lengths, source)?;
    let report = MetricReport {
        perplexity_by_length: sweep,
        ..Default::default()
    };
    emit_report(&report, a.out.as_deref(), out)?;
    Ok(fields([("lengths", json!(a.lengths.len()))]))
}

fn run_gen_synthetic(a: GenArgs) -> Result<Map<String, Value>> {
    let cfg = SyntheticConfig {
        topics: a.topics,
        docs: a.docs,
        sensory_size: a.sensory_size,
        text_size: a.text_size,
        words_per_doc: a.words_per_doc,
        caption_len: a.caption_len,
        alpha: a.alpha,
        seed: a.seed,
        separated: a.separated,
    };
    let data = generate(&cfg)?;
    data.write_dir(&a.out)?;
    Ok(fields([
        ("out", json!(a.out)),
        ("documents", json!(data.corpus.len())),
        ("truth_digest", json!(data.params.digest())),
    ]))
}
