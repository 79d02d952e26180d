//! `docdep` command line.
//!
//! Config precedence, lowest first: built-in defaults, `--config` file,
//! `DOCDEP_*` environment variables, `--set key=value`, dedicated flags.
//!
//! Exit codes: 0 ok, 1 usage or configuration, 2 data error, 3 internal.
//! Failures print one JSON object on stderr.

pub mod manifest;
pub mod stages;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use docdep::config::{env_var, PipelineConfig, KEYS};
use docdep::io::{read_jsonl, write_json, write_jsonl, QueryRecord};
use docdep::synth::{cross_page_edges, expected_cross_page_edges, generate_corpus, write_split};
use docdep::Error;

use manifest::Manifest;
use stages::{ChunkStrategy, EvalInputs};

#[derive(Debug, Parser)]
#[command(name = "docdep", version, about = "Document hierarchy parsing and structure-aware chunking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Overrides,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_parser = ["mst", "argmax"])]
    pub decode: Option<String>,
    #[arg(long = "m-pages", global = true)]
    pub m_pages: Option<usize>,
    #[arg(long = "top-k", global = true)]
    pub top_k: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long = "no-header-prior", global = true)]
    pub no_header_prior: bool,
    #[arg(long = "max-len", global = true)]
    pub max_len: Option<usize>,
    #[arg(long = "no-metadata", global = true)]
    pub no_metadata: bool,
    #[arg(long, global = true, value_parser = ["whitespace"])]
    pub tokenizer: Option<String>,
    #[arg(long, global = true, value_parser = ["bm25", "dense"])]
    pub retriever: Option<String>,
    /// Retrieval depth.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detections to block documents.
    Ingest {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Token grids to block embeddings.
    Pool {
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        grids: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the scoring head against gold trees.
    Train {
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode one dependency tree per document.
    Parse {
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build chunk stores.
    Chunk {
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        trees: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        strategy: ChunkStrategy,
    },
    /// Corpus-level index over chunk stores.
    Index {
        #[arg(long)]
        chunks: PathBuf,
        /// Block embeddings; chunk vectors are their means.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank chunks for every query.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hierarchy and retrieval metrics.
    Eval {
        #[arg(long)]
        trees: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        blocks: Option<PathBuf>,
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        judgments: Option<PathBuf>,
        #[arg(long)]
        chunks: Option<PathBuf>,
        /// Report path; a `.txt` table is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted-signal corpus with train/ and test/ splits.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// ingest, pool, parse, chunk, index, retrieve and eval in one run.
    Pipeline {
        /// A split directory, or a directory with train/ and test/.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip training and use this checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

/// CLI failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Usage(m) => ("Usage", m.clone()),
            CliError::Data(e) => (e.kind(), e.to_string()),
            CliError::Internal(m) => ("Internal", m.clone()),
        };
        json!({"error": kind, "message": message, "exit_code": self.exit_code()})
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid(m) => CliError::Usage(format!("invalid configuration: {m}")),
            Error::Diverged { .. } => CliError::Internal(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Layers config file, environment and flags over the defaults.
pub fn resolve_config(opts: &Overrides, env: impl Fn(&str) -> Option<String>) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &opts.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_kv(&text)?;
    }
    for key in KEYS {
        if let Some(v) = env(&env_var(key)) {
            cfg.set(key, &v)?;
        }
    }
    for pair in &opts.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let flags: [(&str, Option<String>); 14] = [
        ("seed", opts.seed.map(|v| v.to_string())),
        ("parser.decode", opts.decode.clone()),
        ("parser.m_pages", opts.m_pages.map(|v| v.to_string())),
        ("parser.top_k", opts.top_k.map(|v| v.to_string())),
        ("softroi.alpha", opts.alpha.map(|v| v.to_string())),
        ("parser.header_prior", opts.no_header_prior.then(|| "false".into())),
        ("chunk.max_len", opts.max_len.map(|v| v.to_string())),
        ("chunk.include_metadata", opts.no_metadata.then(|| "false".into())),
        ("chunk.tokenizer", opts.tokenizer.clone()),
        ("retrieval.retriever", opts.retriever.clone()),
        ("retrieval.k", opts.k.map(|v| v.to_string())),
        ("train.lr", opts.lr.map(|v| v.to_string())),
        ("train.epochs", opts.epochs.map(|v| v.to_string())),
        ("train.batch_size", opts.batch_size.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn report_epoch(log: &docdep::parser::EpochLog) {
    eprintln!("{}", json!({"epoch": log.epoch, "loss": log.loss, "val_accuracy": log.val_accuracy}));
}

fn write_report(out: &Path, report: &serde_json::Value, table: &str) -> CliResult<()> {
    write_json(out, report)?;
    fs::write(out.with_extension("txt"), table)?;
    Ok(())
}

/// Input for the test half of `pipeline`: `<data>/test` when present.
fn split_dirs(data: &Path) -> (PathBuf, PathBuf) {
    let test = data.join("test");
    if test.is_dir() {
        (data.join("train"), test)
    } else {
        (data.join("train"), data.to_path_buf())
    }
}

fn run_pipeline(data: &Path, out: &Path, model: Option<&Path>, cfg: &PipelineConfig) -> CliResult<Manifest> {
    let (train_dir, test_dir) = split_dirs(data);
    let mut m = Manifest::new("pipeline", cfg);
    fs::create_dir_all(out)?;

    let params = match model {
        Some(path) => {
            m.input_file("model", path)?;
            docdep::io::load_checkpoint(path)?
        }
        None => {
            if !train_dir.is_dir() {
                return Err(CliError::Usage(format!(
                    "no --model given and {} does not exist",
                    train_dir.display()
                )));
            }
            m.input_tree("data", data, &train_dir)?;
            let work = out.join("train");
            stages::ingest(&train_dir.join("detections"), &work.join("blocks"), cfg)?;
            stages::pool(&work.join("blocks"), &train_dir.join("grids"), &work.join("embeddings"), cfg)?;
            let outcome = stages::train_model(
                &work.join("blocks"),
                &work.join("embeddings"),
                &train_dir.join("gold"),
                cfg,
                report_epoch,
            )?;
            stages::save_model(&out.join("model.json"), &outcome.params)?;
            outcome.params
        }
    };
    m.input_tree("data", data, &test_dir)?;

    let blocks = out.join("blocks");
    let embeddings = out.join("embeddings");
    let trees = out.join("trees");
    let chunks = out.join("chunks");
    stages::ingest(&test_dir.join("detections"), &blocks, cfg)?;
    stages::pool(&blocks, &test_dir.join("grids"), &embeddings, cfg)?;
    stages::parse_with(&blocks, &embeddings, &params, &trees, cfg)?;
    stages::chunk(&blocks, Some(&trees), &chunks, ChunkStrategy::Tree, cfg)?;
    let index = stages::index(&chunks, Some(&embeddings))?;
    stages::write_index(&out.join("index.json"), &index)?;

    let queries_path = test_dir.join("queries.jsonl");
    let judgments_path = test_dir.join("judgments.jsonl");
    let results_path = out.join("results.jsonl");
    let have_queries = queries_path.is_file();
    if have_queries {
        let queries: Vec<QueryRecord> = read_jsonl(&queries_path)?;
        write_jsonl(&results_path, &stages::retrieve(&index, &queries, cfg)?)?;
    }
    let gold = test_dir.join("gold");
    let inputs = EvalInputs {
        trees: Some(&trees),
        gold: gold.is_dir().then_some(gold.as_path()),
        blocks: Some(&blocks),
        results: have_queries.then_some(results_path.as_path()),
        judgments: judgments_path.is_file().then_some(judgments_path.as_path()),
        chunks: Some(&chunks),
    };
    let (report, table) = stages::eval(&inputs, cfg)?;
    write_report(&out.join("report.json"), &report, &table)?;
    print!("{table}");
    m.output_tree(out, out)?;
    Ok(m)
}

fn execute(cli: &Cli, cfg: &PipelineConfig) -> CliResult<()> {
    let (manifest, manifest_path) = match &cli.command {
        Command::Ingest { detections, out } => {
            stages::ingest(detections, out, cfg)?;
            let mut m = Manifest::new("ingest", cfg);
            m.input_tree("detections", detections, detections)?;
            m.output_tree(out, out)?;
            (m, sibling_manifest(out))
        }
        Command::Pool { blocks, grids, out } => {
            stages::pool(blocks, grids, out, cfg)?;
            let mut m = Manifest::new("pool", cfg);
            m.input_tree("blocks", blocks, blocks)?;
            m.input_tree("grids", grids, grids)?;
            m.output_tree(out, out)?;
            (m, sibling_manifest(out))
        }
        Command::Train {
            blocks,
            embeddings,
            gold,
            out,
        } => {
            let outcome = stages::train_model(blocks, embeddings, gold, cfg, report_epoch)?;
            stages::save_model(out, &outcome.params)?;
            let mut m = Manifest::new("train", cfg);
            m.input_tree("blocks", blocks, blocks)?;
            m.input_tree("embeddings", embeddings, embeddings)?;
            m.input_tree("gold", gold, gold)?;
            m.output_file("model", out)?;
            m.extra("best_epoch", json!(outcome.best_epoch));
            m.extra("gold_coverage", json!(outcome.gold_coverage));
            (m, sibling_manifest(out))
        }
        Command::Parse {
            blocks,
            embeddings,
            model,
            out,
        } => {
            stages::parse(blocks, embeddings, model, out, cfg)?;
            let mut m = Manifest::new("parse", cfg);
            m.input_tree("blocks", blocks, blocks)?;
            m.input_tree("embeddings", embeddings, embeddings)?;
            m.input_file("model", model)?;
            m.output_tree(out, out)?;
            (m, sibling_manifest(out))
        }
        Command::Chunk {
            blocks,
            trees,
            out,
            strategy,
        } => {
            stages::chunk(blocks, trees.as_deref(), out, *strategy, cfg)?;
            let mut m = Manifest::new("chunk", cfg);
            m.input_tree("blocks", blocks, blocks)?;
            if let Some(t) = trees {
                m.input_tree("trees", t, t)?;
            }
            m.output_tree(out, out)?;
            (m, sibling_manifest(out))
        }
        Command::Index { chunks, embeddings, out } => {
            let index = stages::index(chunks, embeddings.as_deref())?;
            stages::write_index(out, &index)?;
            let mut m = Manifest::new("index", cfg);
            m.input_tree("chunks", chunks, chunks)?;
            if let Some(e) = embeddings {
                m.input_tree("embeddings", e, e)?;
            }
            m.output_file("index", out)?;
            (m, sibling_manifest(out))
        }
        Command::Retrieve { index, queries, out } => {
            let idx = stages::read_index(index)?;
            let qs: Vec<QueryRecord> = read_jsonl(queries)?;
            write_jsonl(out, &stages::retrieve(&idx, &qs, cfg)?)?;
            let mut m = Manifest::new("retrieve", cfg);
            m.input_file("index", index)?;
            m.input_file("queries", queries)?;
            m.output_file("results", out)?;
            (m, sibling_manifest(out))
        }
        Command::Eval {
            trees,
            gold,
            blocks,
            results,
            judgments,
            chunks,
            out,
        } => {
            let inputs = EvalInputs {
                trees: trees.as_deref(),
                gold: gold.as_deref(),
                blocks: blocks.as_deref(),
                results: results.as_deref(),
                judgments: judgments.as_deref(),
                chunks: chunks.as_deref(),
            };
            if inputs.trees.is_some() != inputs.gold.is_some() {
                return Err(CliError::Usage("--trees and --gold go together".into()));
            }
            if inputs.results.is_some() != inputs.judgments.is_some() {
                return Err(CliError::Usage("--results and --judgments go together".into()));
            }
            let (report, table) = stages::eval(&inputs, cfg)?;
            write_report(out, &report, &table)?;
            print!("{table}");
            let mut m = Manifest::new("eval", cfg);
            for (label, p) in [("trees", trees), ("gold", gold), ("blocks", blocks), ("chunks", chunks)] {
                if let Some(p) = p {
                    m.input_tree(label, p, p)?;
                }
            }
            for (label, p) in [("results", results), ("judgments", judgments)] {
                if let Some(p) = p {
                    m.input_file(label, p)?;
                }
            }
            m.output_file("report", out)?;
            (m, sibling_manifest(out))
        }
        Command::Synth { out } => {
            let corpus = generate_corpus(&cfg.synth)?;
            write_split(&out.join("train"), &corpus.train)?;
            write_split(&out.join("test"), &corpus.test)?;
            let (mut cross, mut total, mut expected) = (0usize, 0usize, 0.0);
            for d in corpus.train.iter().chain(&corpus.test) {
                let (c, t) = cross_page_edges(&d.doc, &d.gold);
                cross += c;
                total += t;
                expected += expected_cross_page_edges(&d.gold, d.doc.num_pages(), cfg.synth.page_capacity());
            }
            let mut m = Manifest::new("synth", cfg);
            let rate = |x: f64| if total == 0 { 0.0 } else { x / total as f64 };
            m.extra(
                "cross_page_edges",
                json!({"observed": rate(cross as f64), "expected": rate(expected), "edges": total}),
            );
            m.output_tree(out, out)?;
            (m, out.join("manifest.json"))
        }
        Command::Pipeline { data, out, model } => (run_pipeline(data, out, model.as_deref(), cfg)?, out.join("manifest.json")),
    };
    manifest.write(&manifest_path)?;
    Ok(())
}

/// Parses `args` and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let result = std::panic::catch_unwind(|| -> CliResult<()> {
        let cfg = resolve_config(&cli.opts, |k| std::env::var(k).ok())?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.opts.jobs {
            if j == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            pool = pool.num_threads(j);
        }
        let pool = pool.build().map_err(|e| CliError::Internal(e.to_string()))?;
        pool.install(|| execute(&cli, &cfg))
    });
    let err = match result {
        Ok(Ok(())) => return 0,
        Ok(Err(e)) => e,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            CliError::Internal(msg)
        }
    };
    eprintln!("{}", err.to_json());
    err.exit_code()
}
