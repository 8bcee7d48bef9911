use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use relmap::cluster::{format_clusters, ClusteredDocument};
use relmap::filter::{filter_document, rejection_log_jsonl};
use relmap::interchange::{load_document, load_embeddings, required_keys, DocumentExtraction, EmbeddingTable};
use relmap::mapper::{mapping_record, render_mapping, MappingRecord};
use relmap::metrics::{evaluate_ranking, mapping_prf, read_labels_csv, GoldMapping};
use relmap::mining::{map_pair, mine, read_ranking_csv, write_ranking_csv};
use relmap::similarity::{Mode, SimilarityMatrix};
use relmap::{EngineConfig, RunMetadata};

/// Analogical entity mapping between procedural texts.
#[derive(Parser)]
#[command(name = "relmap", version)]
struct Cli {
    #[command(flatten)]
    engine: EngineArgs,

    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EngineArgs {
    /// JSON config file; absent sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Similarity mode, overriding the config.
    #[arg(long, global = true)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Map the entities of a base document onto a target document.
    Map(MapArgs),
    /// Rank every document pair of a corpus directory.
    Mine {
        corpus: PathBuf,
        #[arg(short, long)]
        embeddings: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(short, long, default_value_t = 0)]
        jobs: usize,
    },
    /// Score predicted mappings against a gold mapping.
    EvalMap {
        prediction: PathBuf,
        gold: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3")]
        k: Vec<usize>,
    },
    /// Score a ranking CSV against analogy labels.
    EvalRank {
        ranking: PathBuf,
        labels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,10,25")]
        k: Vec<usize>,
    },
    /// Dump intermediate results.
    Debug {
        #[command(subcommand)]
        what: DebugCommand,
    },
}

#[derive(Args)]
struct MapArgs {
    base: PathBuf,
    target: PathBuf,
    #[arg(short, long)]
    embeddings: PathBuf,
    /// Write the mapping JSON here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Write the top mapping as a DOT graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Spans shown per graph node.
    #[arg(long, default_value_t = 3)]
    graph_spans: usize,
    /// Print rejected records to stderr.
    #[arg(long)]
    debug_filter: bool,
    /// Print entity clusters to stderr.
    #[arg(long)]
    debug_clusters: bool,
    /// Print the similarity matrix to stderr.
    #[arg(long)]
    debug_sim: bool,
}

#[derive(Subcommand)]
enum DebugCommand {
    /// Rejected records as JSON lines.
    Filter { doc: PathBuf },
    /// Entity clusters of a filtered document.
    Cluster {
        doc: PathBuf,
        #[arg(short, long)]
        embeddings: PathBuf,
    },
    /// Non-zero cells of the similarity matrix.
    Sim {
        base: PathBuf,
        target: PathBuf,
        #[arg(short, long)]
        embeddings: PathBuf,
    },
}

impl EngineArgs {
    fn load(&self) -> Result<EngineConfig> {
        let cfg = match &self.config {
            Some(path) => EngineConfig::load(path)?,
            None => EngineConfig::default(),
        };
        Ok(match self.mode {
            Some(mode) => cfg.with_mode(mode),
            None => cfg,
        })
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

fn with_meta(meta: &RunMetadata, body: Value) -> Value {
    let mut out = json!({
        "engine": meta.engine,
        "config_hash": meta.config_hash,
        "mode": meta.mode.to_string(),
    });
    if let (Some(out), Value::Object(body)) = (out.as_object_mut(), body) {
        out.extend(body);
    }
    out
}

/// Filters the documents and loads embeddings covering what remains.
fn load_inputs(
    paths: &[&Path],
    embeddings: &Path,
    cfg: &EngineConfig,
) -> Result<(Vec<DocumentExtraction>, EmbeddingTable)> {
    let docs = paths
        .iter()
        .map(|p| load_document(p).map(|d| filter_document(&d, &cfg.filter).0))
        .collect::<relmap::Result<Vec<_>>>()?;
    let emb = load_embeddings(embeddings, &required_keys(&docs))?;
    Ok((docs, emb))
}

fn cluster(doc: DocumentExtraction, emb: &EmbeddingTable, cfg: &EngineConfig) -> Result<ClusteredDocument> {
    Ok(ClusteredDocument::new(doc, emb, &cfg.clustering)?)
}

fn format_matrix(m: &SimilarityMatrix, base: &ClusteredDocument, target: &ClusteredDocument) -> String {
    let mut out = String::new();
    for c in &m.cells {
        if c.total() == 0.0 {
            continue;
        }
        out.push_str(&format!(
            "b{} {:?} ~ t{} {:?}: base={:.4} bonus={:.4} total={:.4}\n",
            c.base_cluster,
            base.clusters[c.base_cluster].representative,
            c.target_cluster,
            target.clusters[c.target_cluster].representative,
            c.base_score,
            c.bonus,
            c.total()
        ));
        for q in &c.matches {
            out.push_str(&format!(
                "    {:.4}  {} ~ {}\n",
                q.score, q.base_question, q.target_question
            ));
        }
    }
    out
}

fn cmd_map(cfg: &EngineConfig, args: &MapArgs) -> Result<()> {
    let (base, target) = (args.base.as_path(), args.target.as_path());
    if args.debug_filter {
        for path in [base, target] {
            let doc = load_document(path)?;
            let (_, log) = filter_document(&doc, &cfg.filter);
            eprint!("{}", rejection_log_jsonl(&doc.doc_id, &log));
        }
    }
    let (mut docs, emb) = load_inputs(&[base, target], &args.embeddings, cfg)?;
    let t = cluster(docs.pop().expect("two documents"), &emb, cfg)?;
    let b = cluster(docs.pop().expect("two documents"), &emb, cfg)?;
    if args.debug_clusters {
        for d in [&b, &t] {
            eprintln!("{}:\n{}", d.doc_id(), format_clusters(&d.clusters));
        }
    }
    let (matrix, mappings) = map_pair(&b, &t, &emb, cfg)?;
    if args.debug_sim {
        eprint!("{}", format_matrix(&matrix, &b, &t));
    }
    let records = mappings
        .iter()
        .map(|m| mapping_record(m, &b, &t))
        .collect::<relmap::Result<Vec<_>>>()?;
    let meta = RunMetadata::new(cfg);
    let report = with_meta(
        &meta,
        json!({
            "base_doc": b.doc_id(),
            "target_doc": t.doc_id(),
            "mappings": records,
        }),
    );
    emit(args.out.as_deref(), &pretty(&report))?;
    if let Some(path) = &args.graph {
        let dot = match mappings.first() {
            Some(top) => render_mapping(top, &b, &t, args.graph_spans)?,
            None => String::new(),
        };
        fs::write(path, dot).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| relmap::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("cannot list {}", dir.display()))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn cmd_mine(cfg: &EngineConfig, corpus: &Path, embeddings: &Path, out: Option<&Path>, jobs: usize) -> Result<()> {
    let files = corpus_files(corpus)?;
    let corpus = files
        .iter()
        .map(load_document)
        .collect::<relmap::Result<Vec<_>>>()?;
    let filtered: Vec<DocumentExtraction> =
        corpus.iter().map(|d| filter_document(d, &cfg.filter).0).collect();
    let emb = load_embeddings(embeddings, &required_keys(&filtered))?;
    log::info!("mining {} documents", corpus.len());
    let ranking = mine(&corpus, &emb, cfg, jobs)?;
    emit(out, &write_ranking_csv(&ranking, Some(&RunMetadata::new(cfg))))
}

/// Accepts a `{"mappings": [...]}` wrapper, a bare array or a single mapping.
fn read_mappings(path: &Path) -> Result<Vec<MappingRecord>> {
    let text = fs::read_to_string(path).map_err(|e| relmap::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| relmap::Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        source: e,
    })?;
    let list = match value {
        Value::Object(mut obj) if obj.contains_key("mappings") => obj.remove("mappings").expect("key checked"),
        Value::Array(_) => value,
        single => Value::Array(vec![single]),
    };
    serde_json::from_value(list).with_context(|| format!("{} does not hold mappings", path.display()))
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        bail!(relmap::Error::InvalidK);
    }
    Ok(())
}

fn cmd_eval_map(cfg: &EngineConfig, prediction: &Path, gold: &Path, ks: &[usize]) -> Result<()> {
    check_ks(ks)?;
    let pred = read_mappings(prediction)?;
    let gold_records = read_mappings(gold)?;
    let [gold_record] = gold_records.as_slice() else {
        bail!(relmap::Error::Gold(format!(
            "{} holds {} mappings, expected 1",
            gold.display(),
            gold_records.len()
        )));
    };
    let gold = GoldMapping::from_record(gold_record)?;
    let metrics = ks
        .iter()
        .map(|&k| {
            let prf = mapping_prf(&pred, &gold, k)?;
            Ok(json!({"k": k, "precision": prf.precision, "recall": prf.recall, "f1": prf.f1}))
        })
        .collect::<relmap::Result<Vec<_>>>()?;
    print!("{}", pretty(&with_meta(&RunMetadata::new(cfg), json!({ "metrics": metrics }))));
    Ok(())
}

fn cmd_eval_rank(cfg: &EngineConfig, ranking: &Path, labels: &Path, ks: &[usize]) -> Result<()> {
    check_ks(ks)?;
    let ranking = read_ranking_csv(ranking)?;
    let labels = read_labels_csv(labels)?;
    let metrics = evaluate_ranking(&ranking, &labels, ks)?;
    print!("{}", pretty(&with_meta(&RunMetadata::new(cfg), json!({ "metrics": metrics }))));
    Ok(())
}

fn cmd_debug(cfg: &EngineConfig, what: &DebugCommand) -> Result<()> {
    match what {
        DebugCommand::Filter { doc } => {
            let doc = load_document(doc)?;
            let (_, log) = filter_document(&doc, &cfg.filter);
            print!("{}", rejection_log_jsonl(&doc.doc_id, &log));
        }
        DebugCommand::Cluster { doc, embeddings } => {
            let (mut docs, emb) = load_inputs(&[doc], embeddings, cfg)?;
            let d = cluster(docs.pop().expect("one document"), &emb, cfg)?;
            println!("{}", format_clusters(&d.clusters));
        }
        DebugCommand::Sim { base, target, embeddings } => {
            let (mut docs, emb) = load_inputs(&[base, target], embeddings, cfg)?;
            let t = cluster(docs.pop().expect("two documents"), &emb, cfg)?;
            let b = cluster(docs.pop().expect("two documents"), &emb, cfg)?;
            let (matrix, _) = map_pair(&b, &t, &emb, cfg)?;
            print!("{}", format_matrix(&matrix, &b, &t));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.engine.load()?;
    match &cli.command {
        Command::Map(args) => cmd_map(&cfg, args),
        Command::Mine { corpus, embeddings, out, jobs } => {
            cmd_mine(&cfg, corpus, embeddings, out.as_deref(), *jobs)
        }
        Command::EvalMap { prediction, gold, k } => cmd_eval_map(&cfg, prediction, gold, k),
        Command::EvalRank { ranking, labels, k } => cmd_eval_rank(&cfg, ranking, labels, k),
        Command::Debug { what } => cmd_debug(&cfg, what),
    }
}

/// 2 for configuration problems, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<relmap::Error>() {
        Some(relmap::Error::Config(_)) => 2,
        _ => 1,
    }
}

/// The error chain on one line, skipping causes a message already quotes.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
