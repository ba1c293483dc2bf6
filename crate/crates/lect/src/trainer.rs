//! Training orchestration: the full-graph training loop over the augmented
//! graph, final evaluation and threshold calibration, checkpointing, and
//! the built-in synthetic benchmark.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{
    sample_linked_pairs, sample_triplets, total_objective, LossComponents, LossWeights,
    ObjectiveInputs,
};
use crate::encode::{encode_all, TextEncoder};
use crate::energy::{calibrate_tau, detect, energies, Decision, Detector, EnergyRecord};
use crate::error::{LectError, Result};
use crate::graph::{build_split, normalized_adjacency, NodeSplit, SplitSpec, TextAttributedGraph};
use crate::metrics::{aupr, auroc, fpr_at_tpr, ind_accuracy, EvalReport, ScoredSet};
use crate::net::{
    adam_step, backward, forward, update_running_stats, AdamConfig, AdamState, Mode, ModelConfig,
    ModelParams,
};
use crate::oodgen::{augment_graph, PseudoOodBatch};
use crate::seeds;
use crate::vocab;

/// Which pieces of the objective (or of text generation) are disabled.
/// `no_contrastive` implies both loss flags and also drops the pseudo batch,
/// leaving a plain supervised run with an energy readout. `random_text_ood`
/// only affects the generation stage and is recorded here for provenance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub no_contrastive: bool,
    pub random_text_ood: bool,
    pub no_ind_ood: bool,
    pub no_triplet: bool,
}

impl AblationFlags {
    pub const FULL: AblationFlags = AblationFlags {
        no_contrastive: false,
        random_text_ood: false,
        no_ind_ood: false,
        no_triplet: false,
    };
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub weights: LossWeights,
    pub pair_count: usize,
    pub triplet_count: usize,
    pub proj_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    pub tau_tpr: f64,
    pub ablation: AblationFlags,
    /// Seed list for repeated runs; experiment commands iterate over it.
    pub seeds: Vec<u64>,
    /// The seed of this particular run.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            weights: LossWeights::default(),
            pair_count: 300,
            triplet_count: 100,
            proj_dim: 128,
            hidden_dim: 64,
            dropout: 0.5,
            adam: AdamConfig::default(),
            tau_tpr: 0.95,
            ablation: AblationFlags::default(),
            seeds: vec![0, 1, 2, 3, 4],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(LectError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable hash over the serialized config, recorded in reports.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", seeds::fnv1a(json.as_bytes()))
    }

    /// Loss weights with the ablation flags applied.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights.clone();
        if self.ablation.no_ind_ood || self.ablation.no_contrastive {
            w.lambda1 = 0.0;
            w.mean_constraint = false;
        }
        if self.ablation.no_triplet || self.ablation.no_contrastive {
            w.lambda2 = 0.0;
        }
        w
    }

    pub fn with_ablation(mut self, ablation: AblationFlags) -> Self {
        self.ablation = ablation;
        self
    }
}

/// Everything a finished run produces in memory.
pub struct TrainOutcome {
    pub params: ModelParams,
    pub model_cfg: ModelConfig,
    pub adam_state: AdamState,
    pub report: EvalReport,
    pub loss_log: Vec<LossComponents>,
    pub embeddings: Array2<f64>,
    /// Eval-mode energies for every node of the augmented graph.
    pub final_energies: Array1<f64>,
    pub final_logits: Array2<f64>,
    pub augmented_node_count: usize,
}

/// Full training loop on the augmented graph.
///
/// Per epoch: one train-mode forward shared by all losses, pair/triplet
/// resampling with an epoch-derived seed, exact backward, one Adam step.
/// The encoder runs once up front; embeddings are never updated. After
/// the last epoch the model is evaluated in eval mode with tau calibrated
/// on the IND validation energies only.
///
/// `observer` is called after every successful epoch with the epoch index,
/// loss components, and current parameters (used for last-good checkpoints).
pub fn train_in_memory(
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    batch: &PseudoOodBatch,
    encoder: &dyn TextEncoder,
    cfg: &TrainConfig,
    mut observer: Option<&mut dyn FnMut(usize, &LossComponents, &ModelParams)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let weights = cfg.effective_weights();
    let empty_batch;
    let batch = if cfg.ablation.no_contrastive {
        empty_batch = PseudoOodBatch::empty(graph.node_count);
        &empty_batch
    } else {
        batch
    };
    let aug = augment_graph(graph, batch)?;
    let embeddings = encode_all(&aug.texts, encoder)?;
    let adj = normalized_adjacency(graph, &batch.edges, aug.node_count)?;

    let model_cfg = ModelConfig {
        in_dim: encoder.dim(),
        proj_dim: cfg.proj_dim,
        hidden_dim: cfg.hidden_dim,
        out_dim: split.num_ind_classes as usize,
        dropout: cfg.dropout,
        seed: seeds::derive(cfg.seed, "model"),
    };
    let mut params = ModelParams::init(&model_cfg)?;
    let mut adam_state = AdamState::new(&params);

    let train_labels: Vec<u32> = split
        .train_idx
        .iter()
        .map(|&i| split.remapped_label(graph, i).expect("train node has an IND label"))
        .collect();
    let train_set: BTreeSet<usize> = split.train_idx.iter().copied().collect();
    let pseudo_ids: Vec<usize> = batch.node_ids.clone();
    let use_pairs = !batch.edges.is_empty() && weights.lambda1 > 0.0 && cfg.pair_count > 0;
    let use_triplets = !batch.edges.is_empty() && weights.lambda2 > 0.0 && cfg.triplet_count > 0;
    let use_mean = !batch.edges.is_empty() && weights.mean_constraint;

    let mut loss_log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(
            cfg.seed,
            "dropout",
            epoch as u64,
        ));
        let mut sample_rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(
            cfg.seed,
            "sample",
            epoch as u64,
        ));
        let (logits, trace) =
            forward(&params, &embeddings, &adj, &model_cfg, Mode::Train, Some(&mut drop_rng))
                .map_err(|e| LectError::Other(format!("diverged at epoch {epoch}: {e}")))?;

        let pairs = if use_pairs {
            sample_linked_pairs(&batch.edges, cfg.pair_count, &mut sample_rng)?
        } else {
            Vec::new()
        };
        let triplets = if use_triplets {
            sample_triplets(&graph.edges, &train_set, &batch.edges, cfg.triplet_count, &mut sample_rng)?
        } else {
            Vec::new()
        };
        let inputs = ObjectiveInputs {
            train_nodes: &split.train_idx,
            train_labels: &train_labels,
            pairs: &pairs,
            triplets: &triplets,
            mean_ind_nodes: if use_mean { &split.train_idx } else { &[] },
            mean_ood_nodes: if use_mean { &pseudo_ids } else { &[] },
        };
        let (comps, grad_logits) = total_objective(&logits, &inputs, &weights)
            .map_err(|e| LectError::Other(format!("diverged at epoch {epoch}: {e}")))?;

        let grads = backward(&params, &trace, &adj, &grad_logits)?;
        update_running_stats(&mut params, &trace);
        adam_step(&mut params, &grads, &mut adam_state, &cfg.adam)
            .map_err(|e| LectError::Other(format!("diverged at epoch {epoch}: {e}")))?;

        if let Some(obs) = observer.as_deref_mut() {
            obs(epoch, &comps, &params);
        }
        loss_log.push(comps);
    }

    let (report, final_energies, final_logits) =
        evaluate_params(&params, &model_cfg, graph, split, batch, &embeddings, &adj, cfg)?;

    Ok(TrainOutcome {
        params,
        model_cfg,
        adam_state,
        report,
        loss_log,
        embeddings,
        final_energies,
        final_logits,
        augmented_node_count: aug.node_count,
    })
}

/// Eval-mode forward, tau calibration on validation IND energies, and the
/// final metric report. Pseudo nodes participate in message passing only.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_params(
    params: &ModelParams,
    model_cfg: &ModelConfig,
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    batch: &PseudoOodBatch,
    embeddings: &Array2<f64>,
    adj: &crate::graph::CsrMatrix,
    cfg: &TrainConfig,
) -> Result<(EvalReport, Array1<f64>, Array2<f64>)> {
    let (logits, _) = forward(params, embeddings, adj, model_cfg, Mode::Eval, None)?;
    let e = energies(&logits)?;

    let val_energies: Vec<f64> = split.val_idx.iter().map(|&i| e[i]).collect();
    let tau = calibrate_tau(&val_energies, cfg.tau_tpr)?;

    let test_labels: Vec<u32> = split
        .test_ind_idx
        .iter()
        .map(|&i| split.remapped_label(graph, i).expect("test IND node has an IND label"))
        .collect();
    let ind_acc = ind_accuracy(&logits, &split.test_ind_idx, &test_labels)?;

    let (auroc_v, aupr_v, fpr_v) = if split.test_ood_idx.is_empty() {
        (None, None, None)
    } else {
        let mut scores = Vec::new();
        let mut is_ood = Vec::new();
        for &i in &split.test_ind_idx {
            scores.push(e[i]);
            is_ood.push(false);
        }
        for &i in &split.test_ood_idx {
            scores.push(e[i]);
            is_ood.push(true);
        }
        let set = ScoredSet::new(scores, is_ood)?;
        (Some(auroc(&set)?), Some(aupr(&set)?), Some(fpr_at_tpr(&set, cfg.tau_tpr)?))
    };
    let _ = batch;

    let report = EvalReport {
        ind_acc,
        auroc: auroc_v,
        aupr: aupr_v,
        fpr95: fpr_v,
        tau,
        seed: cfg.seed,
        epoch: cfg.epochs as u64,
        config_hash: cfg.content_hash(),
    };
    Ok((report, e, logits))
}

const CKPT_MAGIC: &[u8; 8] = b"LECTCKP1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    model_cfg: ModelConfig,
    epoch: u64,
    seed: u64,
    adam_t: u64,
}

/// Saved training state: config, parameters, optimizer moments, BN running
/// statistics, seed and epoch counter.
pub struct Checkpoint {
    pub model_cfg: ModelConfig,
    pub params: ModelParams,
    pub adam_state: AdamState,
    pub epoch: u64,
    pub seed: u64,
}

fn write_vec(f: &mut impl Write, v: &[f64]) -> Result<()> {
    f.write_u64::<LittleEndian>(v.len() as u64)?;
    for &x in v {
        f.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vec(f: &mut impl Read) -> Result<Vec<f64>> {
    let n = f.read_u64::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f.read_f64::<LittleEndian>()?);
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CKPT_MAGIC)?;
    let header = CheckpointHeader {
        model_cfg: ckpt.model_cfg.clone(),
        epoch: ckpt.epoch,
        seed: ckpt.seed,
        adam_t: ckpt.adam_state.t,
    };
    let json = serde_json::to_vec(&header)?;
    f.write_u64::<LittleEndian>(json.len() as u64)?;
    f.write_all(&json)?;
    let p = &ckpt.params;
    for v in [
        p.w_proj.as_slice().unwrap(),
        p.b_proj.as_slice().unwrap(),
        p.w1.as_slice().unwrap(),
        p.b1.as_slice().unwrap(),
        p.w2.as_slice().unwrap(),
        p.b2.as_slice().unwrap(),
        p.bn_gamma.as_slice().unwrap(),
        p.bn_beta.as_slice().unwrap(),
        p.bn_running_mean.as_slice().unwrap(),
        p.bn_running_var.as_slice().unwrap(),
    ] {
        write_vec(&mut f, v)?;
    }
    write_vec(&mut f, &ckpt.adam_state.m)?;
    write_vec(&mut f, &ckpt.adam_state.v)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(LectError::Other(format!("bad checkpoint magic in {}", path.display())));
    }
    let json_len = f.read_u64::<LittleEndian>()? as usize;
    let mut json = vec![0u8; json_len];
    f.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let cfg = &header.model_cfg;
    let mut params = ModelParams::init(cfg)?;
    let shapes: Vec<(usize, usize)> = vec![
        (cfg.in_dim, cfg.proj_dim),
        (1, cfg.proj_dim),
        (cfg.proj_dim, cfg.hidden_dim),
        (1, cfg.hidden_dim),
        (cfg.hidden_dim, cfg.out_dim),
        (1, cfg.out_dim),
        (1, cfg.hidden_dim),
        (1, cfg.hidden_dim),
        (1, cfg.hidden_dim),
        (1, cfg.hidden_dim),
    ];
    let mut tensors = Vec::new();
    for (rows, cols) in &shapes {
        let v = read_vec(&mut f)?;
        if v.len() != rows * cols {
            return Err(LectError::DimMismatch(format!(
                "checkpoint tensor: got {} values, expected {}",
                v.len(),
                rows * cols
            )));
        }
        tensors.push(v);
    }
    params.w_proj = Array2::from_shape_vec((cfg.in_dim, cfg.proj_dim), tensors[0].clone()).unwrap();
    params.b_proj = Array1::from_vec(tensors[1].clone());
    params.w1 = Array2::from_shape_vec((cfg.proj_dim, cfg.hidden_dim), tensors[2].clone()).unwrap();
    params.b1 = Array1::from_vec(tensors[3].clone());
    params.w2 = Array2::from_shape_vec((cfg.hidden_dim, cfg.out_dim), tensors[4].clone()).unwrap();
    params.b2 = Array1::from_vec(tensors[5].clone());
    params.bn_gamma = Array1::from_vec(tensors[6].clone());
    params.bn_beta = Array1::from_vec(tensors[7].clone());
    params.bn_running_mean = Array1::from_vec(tensors[8].clone());
    params.bn_running_var = Array1::from_vec(tensors[9].clone());
    let m = read_vec(&mut f)?;
    let v = read_vec(&mut f)?;
    Ok(Checkpoint {
        model_cfg: header.model_cfg,
        params,
        adam_state: AdamState { m, v, t: header.adam_t },
        epoch: header.epoch,
        seed: header.seed,
    })
}

/// Run manifest linking a run's inputs to its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub graph_hash: String,
    pub generator_id: String,
    pub loss_log_path: String,
    pub checkpoint_path: String,
    pub energy_csv_path: String,
    pub report: EvalReport,
}

/// File-writing wrapper around [`train_in_memory`]: emits the JSON-lines
/// loss log, the checkpoint, the per-node energy dump, and the manifest.
/// On divergence the last good epoch's checkpoint is written before the
/// error is returned.
#[allow(clippy::too_many_arguments)]
pub fn run_training(
    out_dir: &Path,
    tag: &str,
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    batch: &PseudoOodBatch,
    encoder: &dyn TextEncoder,
    cfg: &TrainConfig,
    generator_id: &str,
) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir)?;
    let loss_log_path = out_dir.join(format!("{tag}.losses.jsonl"));
    let checkpoint_path = out_dir.join(format!("{tag}.ckpt"));
    let energy_csv_path = out_dir.join(format!("{tag}.energies.csv"));
    let manifest_path = out_dir.join(format!("{tag}.manifest.json"));

    let mut last_good: Option<(usize, ModelParams)> = None;
    let mut observer = |epoch: usize, _comps: &LossComponents, params: &ModelParams| {
        last_good = Some((epoch, params.clone()));
    };
    let outcome =
        train_in_memory(graph, split, batch, encoder, cfg, Some(&mut observer));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            if let Some((epoch, params)) = last_good {
                let model_cfg = ModelConfig {
                    in_dim: encoder.dim(),
                    proj_dim: cfg.proj_dim,
                    hidden_dim: cfg.hidden_dim,
                    out_dim: split.num_ind_classes as usize,
                    dropout: cfg.dropout,
                    seed: seeds::derive(cfg.seed, "model"),
                };
                let ckpt = Checkpoint {
                    model_cfg,
                    params,
                    adam_state: AdamState { m: vec![], v: vec![], t: 0 },
                    epoch: epoch as u64,
                    seed: cfg.seed,
                };
                let _ = save_checkpoint(&checkpoint_path, &ckpt);
            }
            return Err(e);
        }
    };

    let mut log = std::io::BufWriter::new(std::fs::File::create(&loss_log_path)?);
    for (epoch, c) in outcome.loss_log.iter().enumerate() {
        writeln!(
            log,
            "{}",
            serde_json::json!({
                "epoch": epoch,
                "l_sup": c.l_sup,
                "l_pairs": c.l_pairs,
                "l_mean": c.l_mean,
                "l_triplet": c.l_triplet,
                "l_total": c.l_total,
            })
        )?;
    }
    log.flush()?;

    save_checkpoint(
        &checkpoint_path,
        &Checkpoint {
            model_cfg: outcome.model_cfg.clone(),
            params: outcome.params.clone(),
            adam_state: outcome.adam_state.clone(),
            epoch: cfg.epochs as u64,
            seed: cfg.seed,
        },
    )?;

    let detector = Detector { tau: outcome.report.tau };
    let decisions = detect(&outcome.final_energies, &detector);
    let mut records = Vec::with_capacity(outcome.augmented_node_count);
    for i in 0..outcome.augmented_node_count {
        let split_name = if i >= graph.node_count {
            "pseudo"
        } else if split.train_idx.binary_search(&i).is_ok() {
            "train"
        } else if split.val_idx.binary_search(&i).is_ok() {
            "val"
        } else if split.test_ind_idx.binary_search(&i).is_ok() {
            "test_ind"
        } else if split.test_ood_idx.binary_search(&i).is_ok() {
            "test_ood"
        } else {
            "unlabeled"
        };
        records.push(EnergyRecord {
            node_id: i,
            is_pseudo: i >= graph.node_count,
            split: split_name.to_string(),
            energy: outcome.final_energies[i],
            decision: if decisions[i] == Decision::Ind { Decision::Ind } else { Decision::Ood },
        });
    }
    crate::energy::write_energy_csv(&energy_csv_path, &records)?;

    let manifest = RunManifest {
        config_hash: cfg.content_hash(),
        graph_hash: format!("{:016x}", graph.content_hash()),
        generator_id: generator_id.to_string(),
        loss_log_path: loss_log_path.display().to_string(),
        checkpoint_path: checkpoint_path.display().to_string(),
        energy_csv_path: energy_csv_path.display().to_string(),
        report: outcome.report.clone(),
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Evaluate a saved checkpoint against a graph/split (and optional pseudo
/// batch for message passing), reproducing the training-time evaluation.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    batch: &PseudoOodBatch,
    encoder: &dyn TextEncoder,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    if ckpt.model_cfg.in_dim != encoder.dim() {
        return Err(LectError::DimMismatch(format!(
            "checkpoint expects embedding dim {}, encoder provides {}",
            ckpt.model_cfg.in_dim,
            encoder.dim()
        )));
    }
    if ckpt.model_cfg.out_dim != split.num_ind_classes as usize {
        return Err(LectError::DimMismatch(format!(
            "checkpoint has {} output classes, split has {}",
            ckpt.model_cfg.out_dim, split.num_ind_classes
        )));
    }
    let aug = augment_graph(graph, batch)?;
    let embeddings = encode_all(&aug.texts, encoder)?;
    let adj = normalized_adjacency(graph, &batch.edges, aug.node_count)?;
    let eval_cfg = TrainConfig { seed: ckpt.seed, epochs: ckpt.epoch.max(1) as usize, ..cfg.clone() };
    let (report, _, _) = evaluate_params(
        &ckpt.params,
        &ckpt.model_cfg,
        graph,
        split,
        batch,
        &embeddings,
        &adj,
        &eval_cfg,
    )?;
    Ok(report)
}

/// The built-in synthetic benchmark: a 4-block stochastic block model with
/// class-specific keyword texts drawn from disjoint topic vocabularies;
/// the last class is held out as OOD.
pub struct SynthBenchmark {
    pub graph: TextAttributedGraph,
    pub split_spec: SplitSpec,
    pub class_names: Vec<String>,
}

pub const SYNTH_CLASSES: usize = 4;
/// Desk-scale hash-encoder width for the synthetic benchmark. Deliberately
/// narrow: bucket collisions keep the raw-energy baseline off its ceiling so
/// the contrastive arms are distinguishable.
pub const SYNTH_ENCODER_DIM: usize = 16;
pub const SYNTH_NODES_PER_CLASS: usize = 150;
pub const SYNTH_P_INTRA: f64 = 0.05;
pub const SYNTH_P_INTER: f64 = 0.005;

pub fn synth_benchmark(seed: u64) -> SynthBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "synth"));
    let n = SYNTH_CLASSES * SYNTH_NODES_PER_CLASS;
    let class_names: Vec<String> =
        vocab::TOPICS[..SYNTH_CLASSES].iter().map(|t| t.name.to_string()).collect();

    let mut texts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i / SYNTH_NODES_PER_CLASS;
        let words = vocab::TOPICS[class].words;
        // keyword sentences: class-specific topic words (disjoint across
        // classes) glued together with shared filler words
        let mut chosen: Vec<&str> = Vec::with_capacity(8);
        let picked = rand::seq::index::sample(&mut rng, words.len(), 4.min(words.len()));
        chosen.extend(picked.iter().map(|k| words[k]));
        for _ in 0..4 {
            chosen.push(vocab::FILLER[rng.random_range(0..vocab::FILLER.len())]);
        }
        texts.push(chosen.join(" "));
        labels.push(Some(class as u32));
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if i / SYNTH_NODES_PER_CLASS == j / SYNTH_NODES_PER_CLASS {
                SYNTH_P_INTRA
            } else {
                SYNTH_P_INTER
            };
            if rng.random_range(0.0..1.0) < p {
                edges.push((i, j));
            }
        }
    }

    let graph = TextAttributedGraph::new(texts, labels, edges, SYNTH_CLASSES as u32)
        .expect("synthetic graph is valid");
    let split_spec = SplitSpec {
        ood_classes: [(SYNTH_CLASSES - 1) as u32].into_iter().collect(),
        train_fraction: 0.6,
        val_fraction: 0.2,
        seed: seeds::derive(seed, "synth-split"),
    };
    SynthBenchmark { graph, split_spec, class_names }
}

/// Convenience: split for a synthetic benchmark bundle.
pub fn synth_split(bench: &SynthBenchmark) -> Result<NodeSplit> {
    build_split(&bench.graph, &bench.split_spec)
}

/// Format one Table-shaped CSV row (percent scale, mean ± std inputs).
pub fn format_metric_cell(mean: f64, std: f64) -> String {
    format!("{:.2}±{:.2}", 100.0 * mean, 100.0 * std)
}

/// Output locations for one tagged run.
pub fn run_paths(out_dir: &Path, tag: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        out_dir.join(format!("{tag}.manifest.json")),
        out_dir.join(format!("{tag}.ckpt")),
        out_dir.join(format!("{tag}.losses.jsonl")),
    )
}
