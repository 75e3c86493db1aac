//! Command-line front end: `import`, `synth`, `embed` and `eval`.
//!
//! Settings come from an optional TOML file (sections `paths`, `sampler`,
//! `train`, `eval`, `retrieval`) and are overridden by flags. Exit codes:
//! 0 success, 1 usage or config error, 2 invalid data, 3 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Once;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{
    read_checkpoint, train, train_with_control, write_checkpoint, write_tsv, EmbeddingModel, EncoderError, TrainConfig,
};
use crate::eval::{
    eval_edge_types, eval_entity_retrieval, eval_node_types, eval_typed_path, eval_typed_path_repeated, EvalConfig,
    EvalError, EvalReport,
};
use crate::graph::{
    generate_synthetic, load_graph_files, write_graph_files, GeneralizedGraph, GraphError, SyntheticSpec, TypedPath,
};
use crate::sampler::{build_training_set, write_pairs, SampleError, SamplerConfig};
use crate::vectors::Metric;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
    #[error("interrupted; partial model written to {0}")]
    Interrupted(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) | CliError::Interrupted(_) => 3,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SampleError> for CliError {
    fn from(e: SampleError) -> Self {
        match e {
            SampleError::Config(_) => CliError::Config(e.to_string()),
            SampleError::Graph(g) => g.into(),
            SampleError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Config(_) => CliError::Config(e.to_string()),
            EncoderError::Checkpoint(_) | EncoderError::UnwritableToken(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) => CliError::Config(e.to_string()),
            EvalError::Graph(g) => g.into(),
            EvalError::Sample(s) => s.into(),
            EvalError::Encoder(x) => x.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub holdout_fraction: f64,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self { holdout_fraction: 0.1 }
    }
}

/// Everything a run needs; written next to the outputs so it can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub log_level: String,
    pub paths: PathsSection,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub retrieval: RetrievalSection,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            log_level: "warn".into(),
            paths: PathsSection::default(),
            sampler: SamplerConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            retrieval: RetrievalSection::default(),
        }
    }
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("config: {e}")))
    }

    fn validate(&self) -> Result<(), CliError> {
        self.sampler.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        let h = self.retrieval.holdout_fraction;
        if !(h > 0.0 && h < 1.0) {
            return Err(CliError::Config(format!("retrieval holdout fraction {h} outside (0, 1)")));
        }
        Ok(())
    }

    fn graph_paths(&self) -> Result<(&Path, &Path), CliError> {
        let nodes = self.paths.nodes.as_deref().ok_or_else(|| CliError::Usage("--nodes is required".into()))?;
        let edges = self.paths.edges.as_deref().ok_or_else(|| CliError::Usage("--edges is required".into()))?;
        for p in [nodes, edges] {
            if !p.is_file() {
                return Err(CliError::Config(format!("cannot read {}", p.display())));
            }
        }
        Ok((nodes, edges))
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let out = self.paths.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))?;
        fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(out)
    }

    fn load_graph(&self) -> Result<GeneralizedGraph, CliError> {
        let (nodes, edges) = self.graph_paths()?;
        let g = load_graph_files(nodes, edges)?;
        info!("loaded {} nodes, {} edges", g.node_count(), g.edge_count());
        Ok(g)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ggembed", version, about = "Embed generalized property graphs and evaluate the embedding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a graph and print counts and histograms.
    Import {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
    },
    /// Generate a synthetic graph from a TOML or JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train an embedding; writes embedding.tsv, model.bin, manifest.json and config.toml.
    Embed {
        #[command(flatten)]
        run: RunFlags,
        /// Also write the sampled training pairs to pairs.jsonl.
        #[arg(long)]
        dump_pairs: bool,
    },
    /// Run an evaluation task and write report files.
    Eval {
        #[arg(long, value_enum)]
        task: Task,
        /// Typed path such as `A-[r]->B-[s]->C` (typed-path task).
        #[arg(long)]
        path: Option<String>,
        /// Model checkpoint to evaluate instead of training a fresh one.
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    NodeTypes,
    EdgeTypes,
    EntityRetrieval,
    TypedPath,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::NodeTypes => "node-types",
            Task::EdgeTypes => "edge-types",
            Task::EntityRetrieval => "entity-retrieval",
            Task::TypedPath => "typed-path",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for sampling, training and evaluation.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of (node, context) training pairs.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Hold-out fraction (test split for type tasks, edges for retrieval).
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Single training worker: output is bit-reproducible.
    #[arg(long)]
    pub deterministic: bool,
}

impl RunFlags {
    pub fn resolve(&self) -> Result<CliConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                CliConfig::from_toml(&text)?
            }
            None => CliConfig::default(),
        };
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut cfg.paths.nodes, &self.nodes);
        set(&mut cfg.paths.edges, &self.edges);
        set(&mut cfg.paths.out, &self.out);
        if let Some(s) = self.seed {
            cfg.sampler.seed = s;
            cfg.train.seed = s;
            cfg.eval.seed = s;
        }
        if let Some(v) = self.dim {
            cfg.train.dim = v;
        }
        if let Some(v) = self.pairs {
            cfg.sampler.n_pairs = v;
        }
        if let Some(v) = self.window {
            cfg.sampler.window = v;
        }
        if let Some(v) = self.negatives {
            cfg.train.negatives = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.workers {
            cfg.train.workers = v;
        }
        if let Some(v) = self.k {
            cfg.eval.k = v;
        }
        if let Some(v) = self.holdout {
            cfg.eval.holdout_fraction = v;
            cfg.retrieval.holdout_fraction = v;
        }
        if let Some(v) = self.reps {
            cfg.eval.repetitions = v;
        }
        if let Some(v) = self.metric {
            cfg.eval.metric = v;
        }
        if self.deterministic {
            cfg.train.workers = 1;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

static STOP: AtomicBool = AtomicBool::new(false);

fn install_stop_handler() {
    static INSTALL: Once = Once::new();
    INSTALL.call_once(|| {
        if let Err(e) = ctrlc::set_handler(|| STOP.store(true, Ordering::SeqCst)) {
            warn!("no signal handler: {e}");
        }
    });
}

fn init_logging(default_level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(default_level)
        .parse_env(env_logger::Env::new().filter("GG_LOG"))
        .try_init();
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from_args<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Import { nodes, edges } => {
            init_logging("warn");
            let cfg = CliConfig {
                paths: PathsSection { nodes: Some(nodes), edges: Some(edges), out: None },
                ..Default::default()
            };
            let g = cfg.load_graph()?;
            stdout.write_all(import_summary(&g).as_bytes())?;
        }
        Command::Synth { spec, out, seed } => {
            init_logging("warn");
            cmd_synth(&spec, &out, seed, stdout)?;
        }
        Command::Embed { run, dump_pairs } => {
            let cfg = run.resolve()?;
            init_logging(&cfg.log_level);
            cmd_embed(&cfg, dump_pairs, stdout)?;
        }
        Command::Eval { task, path, embedding, run } => {
            let path = match (task, path) {
                (Task::TypedPath, None) => {
                    return Err(CliError::Usage("typed-path task needs --path, e.g. --path 'A-[r]->B-[s]->C'".into()))
                }
                (Task::TypedPath, Some(p)) => Some(p.parse::<TypedPath>().map_err(|e| CliError::Usage(e.to_string()))?),
                _ => None,
            };
            let cfg = run.resolve()?;
            init_logging(&cfg.log_level);
            cmd_eval(task, path.as_ref(), embedding.as_deref(), &cfg, stdout)?;
        }
    }
    Ok(())
}

fn histogram<K: ToString>(counts: BTreeMap<K, usize>) -> String {
    let body: Vec<String> = counts.into_iter().map(|(k, v)| format!("{}:{v}", k.to_string())).collect();
    format!("{{{}}}", body.join(", "))
}

/// Counts plus node-type, edge-type and richness histograms.
pub fn import_summary(g: &GeneralizedGraph) -> String {
    let mut node_types: BTreeMap<&str, usize> = BTreeMap::new();
    let mut richness: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..g.node_count() {
        for t in g.node_types(i).into_iter().flatten() {
            *node_types.entry(t).or_default() += 1;
        }
        *richness.entry(g.richness_of(i)).or_default() += 1;
    }
    let mut edge_types: BTreeMap<&str, usize> = BTreeMap::new();
    for e in 0..g.edge_count() {
        for t in g.edge_types(e).into_iter().flatten() {
            *edge_types.entry(t).or_default() += 1;
        }
    }
    format!(
        "nodes={} edges={}\nnode_types {}\nedge_types {}\nrichness {}\n",
        g.node_count(),
        g.edge_count(),
        histogram(node_types),
        histogram(edge_types),
        histogram(richness)
    )
}

fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let mut spec: SyntheticSpec = if spec_path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("spec: {e}")))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("spec: {e}")))?
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let g = generate_synthetic(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(out)?;
    write_graph_files(&g, &out.join("nodes.jsonl"), &out.join("edges.jsonl"))?;
    writeln!(stdout, "nodes={} edges={}", g.node_count(), g.edge_count())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    n_pairs: usize,
    dim: usize,
    window: usize,
    vocab_size: usize,
    redraws: usize,
    unsampleable_nodes: usize,
    updates: usize,
    mean_loss: f64,
    first_decile_loss: f64,
    last_decile_loss: f64,
    interrupted: bool,
    wall_time_secs: f64,
    config: &'a CliConfig,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_model(model: &EmbeddingModel, path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_embed(cfg: &CliConfig, dump_pairs: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let g = cfg.load_graph()?;
    let out = cfg.out_dir()?;
    let started = Instant::now();

    let set = build_training_set(&g, &cfg.sampler)?;
    if set.unsampleable_nodes > 0 {
        warn!("{} nodes have no neighbors and no properties and are not embedded", set.unsampleable_nodes);
    }
    if dump_pairs {
        let mut w = create(&out.join("pairs.jsonl"))?;
        write_pairs(&set.pairs, &mut w)?;
        w.flush()?;
    }

    install_stop_handler();
    let outcome = train_with_control(&set.pairs, &cfg.train, Some(&STOP))?;
    write_model(&outcome.model, &out.join("model.bin"))?;

    let manifest = Manifest {
        seed: cfg.train.seed,
        n_pairs: cfg.sampler.n_pairs,
        dim: cfg.train.dim,
        window: cfg.sampler.window,
        vocab_size: outcome.model.vocab().len(),
        redraws: set.redraws,
        unsampleable_nodes: set.unsampleable_nodes,
        updates: outcome.stats.updates,
        mean_loss: outcome.stats.mean_loss,
        first_decile_loss: outcome.stats.first_decile_loss,
        last_decile_loss: outcome.stats.last_decile_loss,
        interrupted: outcome.interrupted,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config: cfg,
    };
    let mut w = create(&out.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    if outcome.interrupted {
        return Err(CliError::Interrupted(out.join("model.bin")));
    }

    let mut w = create(&out.join("embedding.tsv"))?;
    write_tsv(&outcome.model, &mut w)?;
    w.flush()?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    writeln!(
        stdout,
        "vocab={} dim={} pairs={} loss={:.4} seconds={:.2}",
        manifest.vocab_size, manifest.dim, manifest.n_pairs, manifest.last_decile_loss, manifest.wall_time_secs
    )?;
    Ok(())
}

fn train_model(g: &GeneralizedGraph, cfg: &CliConfig) -> Result<EmbeddingModel, CliError> {
    let set = build_training_set(g, &cfg.sampler)?;
    Ok(train(&set.pairs, &cfg.train)?)
}

fn load_or_train(g: &GeneralizedGraph, embedding: Option<&Path>, cfg: &CliConfig) -> Result<EmbeddingModel, CliError> {
    match embedding {
        Some(p) => {
            let f = File::open(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            Ok(read_checkpoint(std::io::BufReader::new(f))?)
        }
        None => train_model(g, cfg),
    }
}

/// `task=<t> mean=<m> std=<s> n=<R>`, plus exclusions and baseline for retrieval.
pub fn summary_line(task: &str, report: &EvalReport) -> String {
    let mut line =
        format!("task={task} mean={:.3} std={:.3} n={}", report.mean, report.stddev, report.per_repetition.len());
    if let Some(b) = report.baseline_mean() {
        line.push_str(&format!(" baseline={b:.3} excluded={}", report.excluded));
    }
    line
}

pub fn cmd_eval(
    task: Task,
    path: Option<&TypedPath>,
    embedding: Option<&Path>,
    cfg: &CliConfig,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let g = cfg.load_graph()?;
    let out = cfg.out_dir()?;
    let report = match task {
        Task::NodeTypes => eval_node_types(&g, &load_or_train(&g, embedding, cfg)?, &cfg.eval)?,
        Task::EdgeTypes => eval_edge_types(&g, &load_or_train(&g, embedding, cfg)?, &cfg.eval)?,
        Task::EntityRetrieval => {
            if embedding.is_some() {
                warn!("entity retrieval retrains on the reduced graph; --embedding is ignored");
            }
            eval_entity_retrieval(&g, cfg.retrieval.holdout_fraction, &cfg.sampler, &cfg.train, &cfg.eval)?
        }
        Task::TypedPath => {
            let path = path.ok_or_else(|| CliError::Usage("typed-path task needs --path".into()))?;
            match embedding {
                Some(_) => eval_typed_path(&g, &load_or_train(&g, embedding, cfg)?, path, &cfg.eval)?,
                None => eval_typed_path_repeated(&g, path, &cfg.sampler, &cfg.train, &cfg.eval)?,
            }
        }
    };

    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(out.join("report.json"), json + "\n")?;
    fs::write(out.join("report.txt"), report.to_table())?;
    if let Some(c) = &report.confusion {
        fs::write(out.join("confusion.csv"), c.to_csv())?;
    }
    let mut reps = String::from("repetition\tvalue\n");
    for (i, v) in report.per_repetition.iter().enumerate() {
        reps.push_str(&format!("{i}\t{v}\n"));
    }
    fs::write(out.join("repetitions.tsv"), reps)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    writeln!(stdout, "{}", summary_line(task.name(), &report))?;
    Ok(())
}
