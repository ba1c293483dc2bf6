//! Command-line surface: `ingest`, `generate`, `train`, `eval`, `ablate`,
//! `sweep`, with one TOML/JSON config file mirroring every module's config
//! block. CLI flags override file values; secrets come from env vars only
//! (`LECT_EMBED_TOKEN`, `LECT_LLM_TOKEN`).

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::encode::{HashEncoder, RemoteEncoder, TextEncoder};
use crate::error::{LectError, Result};
use crate::graph::{build_split, load_graph, save_graph, NodeSplit, SplitSpec, TextAttributedGraph};
use crate::metrics::{mean_std, EvalReport};
use crate::oodgen::{
    default_num_pseudo, generate_texts, init_pseudo_edges, ChatClient, GeneratorKind, ModeConfig,
    OodGenConfig, OodMode, PseudoOodBatch, RandomTextGenerator, RemoteLlmGenerator,
    TemplateGenerator, TextGenerator,
};
use crate::seeds;
use crate::trainer::{
    evaluate_checkpoint, format_metric_cell, load_checkpoint, run_training, synth_benchmark,
    train_in_memory, AblationFlags, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Hash,
    Remote,
}

/// Default hash-encoder width, matching the width class of a small
/// pretrained sentence encoder.
pub const DEFAULT_ENCODER_DIM: usize = 384;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Absent means 384, or the benchmark's desk-scale width for the
    /// built-in synthetic experiments.
    pub dim: Option<usize>,
    pub endpoint: String,
    pub batch_size: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Hash,
            dim: None,
            endpoint: String::new(),
            batch_size: 16,
            max_retries: 3,
            backoff_ms: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Pseudo-node count; absent means 10% of the training set (min 8).
    pub num_pseudo: Option<usize>,
    pub c_max: Option<usize>,
    pub mode: ModeConfig,
    pub endpoint: String,
    pub model: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Template,
            num_pseudo: None,
            c_max: None,
            mode: ModeConfig::Mixed,
            endpoint: String::new(),
            model: String::new(),
            max_retries: 3,
            backoff_ms: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ood_classes: Vec<u32>,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { ood_classes: vec![], train_fraction: 0.6, val_fraction: 0.2 }
    }
}

/// The whole config file. Unknown keys are rejected everywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub out_dir: String,
    /// Class names for prompts and reports; defaults to "class N".
    pub class_names: Vec<String>,
    pub encoder: EncoderConfig,
    pub generator: GeneratorConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub sweep_pair_counts: Vec<usize>,
    pub sweep_triplet_counts: Vec<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "out".into(),
            class_names: vec![],
            encoder: EncoderConfig::default(),
            generator: GeneratorConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            sweep_pair_counts: vec![0, 100, 300],
            sweep_triplet_counts: vec![0, 100],
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    let Some(path) = path else { return Ok(CliConfig::default()) };
    let raw = std::fs::read_to_string(path)?;
    let is_toml = path.extension().map(|e| e == "toml").unwrap_or(false);
    if is_toml {
        toml::from_str(&raw).map_err(|e| LectError::InvalidConfig(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&raw)
            .map_err(|e| LectError::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

#[derive(Parser, Debug)]
#[command(name = "lect", about = "Energy-based OOD detection on text-attributed graphs")]
pub struct Cli {
    /// TOML or JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel workers across seeds / grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory override.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate and normalize a graph JSON file, printing summary stats.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wire pseudo-OOD nodes into the graph and generate their texts.
    Generate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a graph plus a generated pseudo batch.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        batch: PathBuf,
        #[arg(long, default_value = "run")]
        tag: String,
    },
    /// Evaluate a saved checkpoint.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Run the ablation arms over the seed list and emit a comparison CSV.
    /// Defaults to the built-in synthetic benchmark when no graph is given.
    Ablate {
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Grid over (linked-pair count x triplet count) and emit CSV.
    Sweep {
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.display().to_string();
    }
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Ingest { input, out } => cmd_ingest(&cfg, &input, out.as_deref()),
        Command::Generate { graph, out } => cmd_generate(&cfg, &graph, out.as_deref()),
        Command::Train { graph, batch, tag } => cmd_train(&cfg, &graph, &batch, &tag),
        Command::Eval { graph, checkpoint, batch } => {
            cmd_eval(&cfg, &graph, &checkpoint, batch.as_deref())
        }
        Command::Ablate { graph } => cmd_ablate(&cfg, graph.as_deref(), jobs),
        Command::Sweep { graph } => cmd_sweep(&cfg, graph.as_deref(), jobs),
    }
}

fn out_dir(cfg: &CliConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn class_names(cfg: &CliConfig, graph: &TextAttributedGraph) -> Result<Vec<String>> {
    if cfg.class_names.is_empty() {
        return Ok((0..graph.num_classes).map(|c| format!("class {c}")).collect());
    }
    if cfg.class_names.len() != graph.num_classes as usize {
        return Err(LectError::InvalidConfig(format!(
            "config lists {} class names but the graph has {} classes",
            cfg.class_names.len(),
            graph.num_classes
        )));
    }
    Ok(cfg.class_names.clone())
}

fn split_spec(cfg: &CliConfig) -> Result<SplitSpec> {
    if cfg.split.ood_classes.is_empty() {
        return Err(LectError::InvalidConfig(
            "split.ood_classes is empty; list the classes held out as OOD".into(),
        ));
    }
    Ok(SplitSpec {
        ood_classes: cfg.split.ood_classes.iter().copied().collect(),
        train_fraction: cfg.split.train_fraction,
        val_fraction: cfg.split.val_fraction,
        seed: seeds::derive(cfg.seed, "split"),
    })
}

pub fn build_encoder(cfg: &CliConfig, default_dim: usize) -> Result<Box<dyn TextEncoder>> {
    let dim = cfg.encoder.dim.unwrap_or(default_dim);
    match cfg.encoder.kind {
        EncoderKind::Hash => {
            Ok(Box::new(HashEncoder::new(dim, seeds::derive(cfg.seed, "encoder"))?))
        }
        EncoderKind::Remote => Ok(Box::new(RemoteEncoder::new(
            cfg.encoder.endpoint.clone(),
            dim,
            cfg.encoder.batch_size,
            cfg.encoder.max_retries,
            cfg.encoder.backoff_ms,
            std::env::var("LECT_EMBED_TOKEN").ok(),
        )?)),
    }
}

pub fn source_encoder_dim(source: &ExperimentSource) -> usize {
    match source {
        ExperimentSource::Synth(_) => crate::trainer::SYNTH_ENCODER_DIM,
        ExperimentSource::File(_) => DEFAULT_ENCODER_DIM,
    }
}

fn cmd_ingest(cfg: &CliConfig, input: &Path, out: Option<&Path>) -> Result<()> {
    let graph = load_graph(input)?;
    let dir = out_dir(cfg)?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("graph.json"));
    save_graph(&graph, &target)?;
    println!("nodes: {}", graph.node_count);
    println!("edges: {}", graph.edges.len());
    println!("classes: {}", graph.num_classes);
    match graph.homophily() {
        Some(h) => println!("homophily: {h:.4}"),
        None => println!("homophily: n/a"),
    }
    println!("wrote {}", target.display());
    Ok(())
}

fn cmd_generate(cfg: &CliConfig, graph_path: &Path, out: Option<&Path>) -> Result<()> {
    let graph = load_graph(graph_path)?;
    let names = class_names(cfg, &graph)?;
    let split = build_split(&graph, &split_spec(cfg)?)?;
    let gen_cfg = OodGenConfig {
        num_pseudo: cfg
            .generator
            .num_pseudo
            .unwrap_or_else(|| default_num_pseudo(split.train_idx.len())),
        c_max: cfg.generator.c_max,
        mode: cfg.generator.mode,
        seed: seeds::derive(cfg.seed, "oodgen"),
        generator: cfg.generator.kind,
    };
    let skeleton = init_pseudo_edges(&graph, &split, &gen_cfg, &names)?;
    let ind_names = split.ind_class_names(&names);
    let dir = out_dir(cfg)?;
    let gen_seed = seeds::derive(cfg.seed, "generate");

    let batch = match cfg.generator.kind {
        GeneratorKind::Template => {
            generate_texts(&skeleton, &ind_names, &TemplateGenerator { seed: gen_seed })?
        }
        GeneratorKind::RandomText => {
            generate_texts(&skeleton, &ind_names, &RandomTextGenerator { seed: gen_seed })?
        }
        GeneratorKind::RemoteLlm => {
            let client = ChatClient::new(
                cfg.generator.endpoint.clone(),
                cfg.generator.model.clone(),
                std::env::var("LECT_LLM_TOKEN").ok(),
                cfg.generator.max_retries,
                cfg.generator.backoff_ms,
            )?;
            let generator = RemoteLlmGenerator::new(client);
            let batch = generate_texts(&skeleton, &ind_names, &generator)?;
            let transcripts = generator.transcripts.borrow();
            std::fs::write(
                dir.join("transcripts.json"),
                serde_json::to_string_pretty(&*transcripts)?,
            )?;
            batch
        }
    };
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("pseudo.json"));
    batch.save(&target)?;
    let near = batch.meta.iter().filter(|m| m.mode == OodMode::Near).count();
    println!("pseudo nodes: {} ({} near / {} far)", batch.node_ids.len(), near, batch.node_ids.len() - near);
    println!("injected edges: {}", batch.edges.len());
    println!("wrote {}", target.display());
    Ok(())
}

fn cmd_train(cfg: &CliConfig, graph_path: &Path, batch_path: &Path, tag: &str) -> Result<()> {
    let graph = load_graph(graph_path)?;
    let batch = PseudoOodBatch::load(batch_path).map_err(|e| {
        LectError::InvalidConfig(format!(
            "cannot read pseudo batch {}: {e}; run `lect generate` first",
            batch_path.display()
        ))
    })?;
    let split = build_split(&graph, &split_spec(cfg)?)?;
    let encoder = build_encoder(cfg, DEFAULT_ENCODER_DIM)?;
    let train_cfg = TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
    let dir = out_dir(cfg)?;
    let generator_id = format!("{:?}", cfg.generator.kind);
    let manifest =
        run_training(&dir, tag, &graph, &split, &batch, encoder.as_ref(), &train_cfg, &generator_id)?;
    println!("{}", serde_json::to_string_pretty(&manifest.report)?);
    println!("wrote {}", manifest.checkpoint_path);
    Ok(())
}

fn cmd_eval(
    cfg: &CliConfig,
    graph_path: &Path,
    checkpoint: &Path,
    batch_path: Option<&Path>,
) -> Result<()> {
    if !checkpoint.exists() {
        return Err(LectError::InvalidConfig(format!(
            "no checkpoint at {}; run train first",
            checkpoint.display()
        )));
    }
    let graph = load_graph(graph_path)?;
    let batch = match batch_path {
        Some(p) => PseudoOodBatch::load(p)?,
        None => PseudoOodBatch::empty(graph.node_count),
    };
    let split = build_split(&graph, &split_spec(cfg)?)?;
    let encoder = build_encoder(cfg, DEFAULT_ENCODER_DIM)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let train_cfg = TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
    let report =
        evaluate_checkpoint(&ckpt, &graph, &split, &batch, encoder.as_ref(), &train_cfg)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Run `f(i)` for `i in 0..n` on up to `jobs` worker threads, preserving
/// result order; the first error wins.
pub fn parallel_map<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let jobs = jobs.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(i);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker filled its slot"))
        .collect()
}

/// Experiments fix the dataset (and its split) once and vary only the
/// per-run seeds, mirroring the repeated-runs protocol.
pub enum ExperimentSource {
    Synth(crate::trainer::SynthBenchmark),
    File(TextAttributedGraph),
}

pub fn experiment_source(cfg: &CliConfig, graph_path: Option<&Path>) -> Result<ExperimentSource> {
    match graph_path {
        Some(p) => Ok(ExperimentSource::File(load_graph(p)?)),
        None => Ok(ExperimentSource::Synth(synth_benchmark(cfg.seed))),
    }
}

pub fn seed_setup(
    cfg: &CliConfig,
    source: &ExperimentSource,
) -> Result<(TextAttributedGraph, NodeSplit, Vec<String>)> {
    match source {
        ExperimentSource::Synth(bench) => {
            let split = build_split(&bench.graph, &bench.split_spec)?;
            Ok((bench.graph.clone(), split, bench.class_names.clone()))
        }
        ExperimentSource::File(graph) => {
            let names = class_names(cfg, graph)?;
            let split = build_split(graph, &split_spec(cfg)?)?;
            Ok((graph.clone(), split, names))
        }
    }
}

pub fn experiment_batch(
    cfg: &CliConfig,
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    names: &[String],
    seed: u64,
    random_text: bool,
) -> Result<PseudoOodBatch> {
    let gen_cfg = OodGenConfig {
        num_pseudo: cfg
            .generator
            .num_pseudo
            .unwrap_or_else(|| default_num_pseudo(split.train_idx.len())),
        c_max: cfg.generator.c_max,
        mode: cfg.generator.mode,
        seed: seeds::derive(seed, "oodgen"),
        generator: if random_text { GeneratorKind::RandomText } else { GeneratorKind::Template },
    };
    let skeleton = init_pseudo_edges(graph, split, &gen_cfg, names)?;
    let ind_names = split.ind_class_names(names);
    let gen_seed = seeds::derive(seed, "generate");
    let generator: Box<dyn TextGenerator> = if random_text {
        Box::new(RandomTextGenerator { seed: gen_seed })
    } else {
        Box::new(TemplateGenerator { seed: gen_seed })
    };
    generate_texts(&skeleton, &ind_names, generator.as_ref())
}

fn experiment_seeds(cfg: &CliConfig) -> Vec<u64> {
    if cfg.train.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        cfg.train.seeds.clone()
    }
}

pub const ABLATION_ARMS: [(&str, AblationFlags, bool); 5] = [
    ("full", AblationFlags::FULL, false),
    (
        "no_ind_ood",
        AblationFlags { no_ind_ood: true, ..AblationFlags::FULL },
        false,
    ),
    (
        "no_triplet",
        AblationFlags { no_triplet: true, ..AblationFlags::FULL },
        false,
    ),
    (
        "no_contrastive",
        AblationFlags { no_contrastive: true, ..AblationFlags::FULL },
        false,
    ),
    (
        "random_text_ood",
        AblationFlags { random_text_ood: true, ..AblationFlags::FULL },
        true,
    ),
];

/// One arm-tagged training outcome per ablation arm for one seed, in
/// `ABLATION_ARMS` order. The split of the source dataset is fixed; only
/// the run seed varies between repetitions.
pub fn ablate_one_seed_outcomes(
    cfg: &CliConfig,
    source: &ExperimentSource,
    seed: u64,
) -> Result<Vec<(&'static str, crate::trainer::TrainOutcome, NodeSplit)>> {
    let (graph, split, names) = seed_setup(cfg, source)?;
    let encoder = build_encoder(cfg, source_encoder_dim(source))?;
    let template_batch = experiment_batch(cfg, &graph, &split, &names, seed, false)?;
    let random_batch = experiment_batch(cfg, &graph, &split, &names, seed, true)?;
    let mut out = Vec::with_capacity(ABLATION_ARMS.len());
    for (name, flags, random_text) in ABLATION_ARMS.iter() {
        let batch = if *random_text { &random_batch } else { &template_batch };
        let train_cfg = TrainConfig { seed, ablation: *flags, ..cfg.train.clone() };
        let outcome =
            train_in_memory(&graph, &split, batch, encoder.as_ref(), &train_cfg, None)?;
        out.push((*name, outcome, split.clone()));
    }
    Ok(out)
}

/// One seed of the ablation experiment: reports for every arm, in
/// `ABLATION_ARMS` order.
pub fn ablate_one_seed(
    cfg: &CliConfig,
    source: &ExperimentSource,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    Ok(ablate_one_seed_outcomes(cfg, source, seed)?
        .into_iter()
        .map(|(_, o, _)| o.report)
        .collect())
}

fn metric_column(reports: &[&EvalReport], pick: impl Fn(&EvalReport) -> Option<f64>) -> String {
    let values: Vec<f64> = reports.iter().filter_map(|r| pick(r)).collect();
    if values.len() != reports.len() {
        return "n/a".into();
    }
    let (m, s) = mean_std(&values);
    format_metric_cell(m, s)
}

fn cmd_ablate(cfg: &CliConfig, graph_path: Option<&Path>, jobs: usize) -> Result<()> {
    let source = experiment_source(cfg, graph_path)?;
    let seeds_list = experiment_seeds(cfg);
    let per_seed = parallel_map(seeds_list.len(), jobs, |i| {
        ablate_one_seed(cfg, &source, seeds_list[i])
    })?;

    let dir = out_dir(cfg)?;
    let path = dir.join("ablate.csv");
    let mut rows = String::from("arm,ind_acc,auroc,aupr,fpr95\n");
    for (k, (name, _, _)) in ABLATION_ARMS.iter().enumerate() {
        let arm_reports: Vec<&EvalReport> = per_seed.iter().map(|v| &v[k]).collect();
        let line = format!(
            "{},{},{},{},{}\n",
            name,
            metric_column(&arm_reports, |r| Some(r.ind_acc)),
            metric_column(&arm_reports, |r| r.auroc),
            metric_column(&arm_reports, |r| r.aupr),
            metric_column(&arm_reports, |r| r.fpr95),
        );
        rows.push_str(&line);
    }
    std::fs::write(&path, &rows)?;
    print!("{rows}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(cfg: &CliConfig, graph_path: Option<&Path>, jobs: usize) -> Result<()> {
    let source = experiment_source(cfg, graph_path)?;
    let seeds_list = experiment_seeds(cfg);
    let mut cells = Vec::new();
    for &p in &cfg.sweep_pair_counts {
        for &t in &cfg.sweep_triplet_counts {
            cells.push((p, t));
        }
    }

    let results = parallel_map(cells.len(), jobs, |ci| {
        let (pair_count, triplet_count) = cells[ci];
        let mut aurocs = Vec::new();
        let mut accs = Vec::new();
        for &seed in &seeds_list {
            let (graph, split, names) = seed_setup(cfg, &source)?;
            let encoder = build_encoder(cfg, source_encoder_dim(&source))?;
            let batch = experiment_batch(cfg, &graph, &split, &names, seed, false)?;
            let train_cfg =
                TrainConfig { seed, pair_count, triplet_count, ..cfg.train.clone() };
            let outcome =
                train_in_memory(&graph, &split, &batch, encoder.as_ref(), &train_cfg, None)?;
            aurocs.push(outcome.report.auroc.ok_or_else(|| {
                LectError::Metric("sweep needs an OOD test set for AUROC".into())
            })?);
            accs.push(outcome.report.ind_acc);
        }
        Ok((mean_std(&aurocs), mean_std(&accs)))
    })?;

    let dir = out_dir(cfg)?;
    let path = dir.join("sweep.csv");
    let mut rows =
        String::from("pair_count,triplet_count,auroc_mean,auroc_std,ind_acc_mean,ind_acc_std\n");
    for ((p, t), ((am, astd), (im, istd))) in cells.iter().zip(results) {
        rows.push_str(&format!("{p},{t},{am:.6},{astd:.6},{im:.6},{istd:.6}\n"));
    }
    std::fs::write(&path, &rows)?;
    print!("{rows}");
    println!("wrote {}", path.display());
    Ok(())
}
