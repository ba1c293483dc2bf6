//! Pseudo-OOD node construction: random edge initialization against
//! training IND nodes, four-step chain-of-thought prompts, and text
//! generation through either a remote chat-completion service or the
//! deterministic template generator.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LectError, Result};
use crate::graph::{NodeSplit, TextAttributedGraph};
use crate::seeds;
use crate::vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OodMode {
    Near,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Near,
    Far,
    /// Half near, half far; near gets the extra node on odd counts.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    RemoteLlm,
    Template,
    /// Ablation: neighbor-ignoring random vocabulary text.
    RandomText,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OodGenConfig {
    pub num_pseudo: usize,
    /// Maximum IND neighbors per pseudo node; defaults to the number of
    /// IND classes when absent.
    pub c_max: Option<usize>,
    pub mode: ModeConfig,
    pub seed: u64,
    pub generator: GeneratorKind,
}

impl OodGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_pseudo == 0 {
            return Err(LectError::InvalidConfig("num_pseudo must be >= 1".into()));
        }
        if self.c_max == Some(0) {
            return Err(LectError::InvalidConfig("c_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Default pseudo-node count: 10% of the training set, at least 8.
pub fn default_num_pseudo(train_len: usize) -> usize {
    (train_len / 10).max(8)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoMeta {
    pub mode: OodMode,
    pub chosen_category: String,
    pub neighbor_labels: Vec<String>,
}

/// Completed pseudo-OOD batch: node ids, injected edges, generated texts
/// and per-node generation metadata. Persisted as a JSON sidecar between
/// the generate and train pipeline stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoOodBatch {
    pub node_ids: Vec<usize>,
    /// (IND training node, pseudo node) pairs — the injected edge set.
    pub edges: Vec<(usize, usize)>,
    pub texts: Vec<String>,
    pub meta: Vec<PseudoMeta>,
}

impl PseudoOodBatch {
    pub fn empty(base_node_count: usize) -> Self {
        let _ = base_node_count;
        Self { node_ids: vec![], edges: vec![], texts: vec![], meta: vec![] }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Edge skeleton produced before any text exists: per-node neighbor sets,
/// their label names, and the assigned near/far mode.
#[derive(Debug, Clone)]
pub struct PseudoSkeleton {
    pub node_ids: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub neighbor_labels: Vec<Vec<String>>,
    pub modes: Vec<OodMode>,
}

/// Sample the random IND connections for every pseudo node: degree uniform
/// in {1..c_max} (capped at the training-set size), neighbors drawn without
/// replacement from the training IND nodes only.
pub fn init_pseudo_edges(
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    cfg: &OodGenConfig,
    class_names: &[String],
) -> Result<PseudoSkeleton> {
    cfg.validate()?;
    if split.train_idx.is_empty() {
        return Err(LectError::InvalidConfig("empty training set".into()));
    }
    let c_max = cfg.c_max.unwrap_or(split.num_ind_classes as usize).max(1);
    let cap = c_max.min(split.train_idx.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "oodgen-edges"));

    let n = cfg.num_pseudo;
    let n_near = match cfg.mode {
        ModeConfig::Near => n,
        ModeConfig::Far => 0,
        ModeConfig::Mixed => n - n / 2,
    };

    let mut node_ids = Vec::with_capacity(n);
    let mut edges = Vec::new();
    let mut neighbor_labels = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for p in 0..n {
        let pseudo_id = graph.node_count + p;
        let k = rng.random_range(1..=cap);
        let picked = rand::seq::index::sample(&mut rng, split.train_idx.len(), k);
        let mut labels: Vec<String> = Vec::with_capacity(k);
        for j in picked {
            let ind = split.train_idx[j];
            edges.push((ind, pseudo_id));
            let label = graph.labels[ind].expect("training node must be labeled");
            labels.push(class_names[label as usize].clone());
        }
        labels.sort();
        node_ids.push(pseudo_id);
        neighbor_labels.push(labels);
        modes.push(if p < n_near { OodMode::Near } else { OodMode::Far });
    }
    Ok(PseudoSkeleton { node_ids, edges, neighbor_labels, modes })
}

/// The four-step chain-of-thought conversation skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotPrompt {
    pub system: String,
    pub steps: [String; 4],
}

/// Build the 4-step prompt: domain classification, OOD-category selection
/// (near/far differ only here), neighbor-label analysis (only the labels of
/// connected IND nodes appear), and sample generation.
pub fn build_cot_prompt(
    ind_class_names: &[String],
    neighbor_labels: &[String],
    mode: OodMode,
) -> Result<CotPrompt> {
    if ind_class_names.is_empty() {
        return Err(LectError::InvalidConfig("ind_class_names must be non-empty".into()));
    }
    if neighbor_labels.is_empty() {
        return Err(LectError::InvalidConfig(
            "neighbor_labels must be non-empty: every pseudo node has at least one neighbor".into(),
        ));
    }
    for l in neighbor_labels {
        if !ind_class_names.contains(l) {
            return Err(LectError::InvalidConfig(format!(
                "neighbor label {l:?} is not one of the known class names"
            )));
        }
    }
    let system = "You help construct synthetic out-of-distribution node descriptions for a \
                  text-attributed graph. Answer each step concisely and put your final answer \
                  on the last line of your reply."
        .to_string();
    let step1 = format!(
        "Step 1: The known sample categories are: {}. Classify them into a single main domain \
         and name that domain.",
        ind_class_names.join(", ")
    );
    let distance = match mode {
        OodMode::Near => "close to the main domain identified above",
        OodMode::Far => "far from the main domain identified above",
    };
    let step2 = format!(
        "Step 2: Select one out-of-distribution category that is {distance}. It must not be any \
         of the known categories listed in step 1."
    );
    let step3 = format!(
        "Step 3: The new node is connected to samples labeled: {}. Choose an out-of-distribution \
         label correlated with these connected labels, refining your step 2 choice if needed.",
        neighbor_labels.join(", ")
    );
    let step4 = "Step 4: Generate a short textual description (one to two sentences) of a sample \
                 belonging to the chosen category."
        .to_string();
    Ok(CotPrompt { system, steps: [step1, step2, step3, step4] })
}

/// One pseudo node's generated text and chosen category.
pub trait TextGenerator {
    fn id(&self) -> String;
    fn generate(
        &self,
        node_index: usize,
        ind_class_names: &[String],
        neighbor_labels: &[String],
        mode: OodMode,
    ) -> Result<(String, String)>;
}

/// Offline template generator: picks an OOD category from the fixed topic
/// vocabulary (near = same domain as the IND classes, far = other domains)
/// and emits a deterministic sentence. Output is a pure function of
/// (seed, neighbor_labels, mode).
#[derive(Debug, Clone)]
pub struct TemplateGenerator {
    pub seed: u64,
}

impl TextGenerator for TemplateGenerator {
    fn id(&self) -> String {
        format!("template-s{}", self.seed)
    }

    fn generate(
        &self,
        _node_index: usize,
        ind_class_names: &[String],
        neighbor_labels: &[String],
        mode: OodMode,
    ) -> Result<(String, String)> {
        let _ = build_cot_prompt(ind_class_names, neighbor_labels, mode)?;
        let near = mode == OodMode::Near;
        let pool = vocab::candidate_topics(ind_class_names, near);
        let key = seeds::derive(self.seed, "template")
            ^ seeds::fnv1a(neighbor_labels.join("|").as_bytes())
            ^ if near { 0 } else { 0x5a5a };
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let topic = pool[rng.random_range(0..pool.len())];
        let k = 8.min(topic.words.len());
        let picked = rand::seq::index::sample(&mut rng, topic.words.len(), k);
        let words: Vec<&str> = picked.iter().map(|i| topic.words[i]).collect();
        let text = format!(
            "A study of {} covering {}, connected to work on {}.",
            topic.name,
            words.join(" "),
            neighbor_labels.join(" and ")
        );
        Ok((text, topic.name.to_string()))
    }
}

/// Ablation generator: random non-IND vocabulary words. Keeps only the
/// basic constraint that generated nodes are pseudo-OOD (IND class
/// vocabularies are excluded) and drops every dependency-aware step:
/// neighbor labels, near/far mode and category selection are all ignored.
#[derive(Debug, Clone)]
pub struct RandomTextGenerator {
    pub seed: u64,
}

impl TextGenerator for RandomTextGenerator {
    fn id(&self) -> String {
        format!("random-text-s{}", self.seed)
    }

    fn generate(
        &self,
        node_index: usize,
        ind_class_names: &[String],
        _neighbor_labels: &[String],
        _mode: OodMode,
    ) -> Result<(String, String)> {
        let excluded: Vec<String> = ind_class_names.iter().map(|s| s.to_lowercase()).collect();
        let mut all: Vec<&str> = vocab::FILLER.to_vec();
        for t in vocab::TOPICS {
            if !excluded.contains(&t.name.to_lowercase()) {
                all.extend_from_slice(t.words);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(
            self.seed,
            "random-text",
            node_index as u64,
        ));
        let words: Vec<&str> = (0..10).map(|_| all[rng.random_range(0..all.len())]).collect();
        Ok((words.join(" "), "random".to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessageOwned,
}

#[derive(Deserialize)]
struct ChatMessageOwned {
    content: String,
}

/// Minimal chat-completion client with bounded retries and exponential
/// backoff.
pub struct ChatClient {
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    pub max_retries: u32,
    pub backoff_ms: u64,
    client: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(
        endpoint: String,
        model: String,
        token: Option<String>,
        max_retries: u32,
        backoff_ms: u64,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LectError::Remote(e.to_string()))?;
        Ok(Self { endpoint, model, token, max_retries, backoff_ms, client })
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let mut attempt = 0;
        loop {
            let mut req = self
                .client
                .post(&self.endpoint)
                .json(&ChatRequest { model: &self.model, messages });
            if let Some(tok) = &self.token {
                req = req.bearer_auth(tok);
            }
            match req.send().and_then(|r| r.error_for_status()) {
                Ok(resp) => {
                    let parsed: ChatResponse =
                        resp.json().map_err(|e| LectError::Remote(format!("bad body: {e}")))?;
                    let content = parsed
                        .choices
                        .first()
                        .map(|c| c.message.content.clone())
                        .unwrap_or_default();
                    return Ok(content);
                }
                Err(e) => {
                    if attempt >= self.max_retries {
                        let status = e
                            .status()
                            .map(|s| format!("HTTP {s}"))
                            .unwrap_or_else(|| e.to_string());
                        return Err(LectError::Remote(format!(
                            "failed after {} attempts: {status}",
                            attempt + 1
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(self.backoff_ms << attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// Remote generator: one 4-turn conversation per pseudo node, with the
/// step answers parsed leniently (last non-empty line of each reply).
pub struct RemoteLlmGenerator {
    pub client: ChatClient,
    /// When set, prompt transcripts are appended here for auditability.
    pub transcripts: std::cell::RefCell<Vec<Vec<ChatMessage>>>,
}

impl RemoteLlmGenerator {
    pub fn new(client: ChatClient) -> Self {
        Self { client, transcripts: std::cell::RefCell::new(Vec::new()) }
    }
}

fn last_nonempty_line(s: &str) -> String {
    s.lines().rev().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string()
}

impl TextGenerator for RemoteLlmGenerator {
    fn id(&self) -> String {
        format!("remote-llm-{}", self.client.model)
    }

    fn generate(
        &self,
        node_index: usize,
        ind_class_names: &[String],
        neighbor_labels: &[String],
        mode: OodMode,
    ) -> Result<(String, String)> {
        let prompt = build_cot_prompt(ind_class_names, neighbor_labels, mode)?;
        let mut messages =
            vec![ChatMessage { role: "system".into(), content: prompt.system.clone() }];
        let mut category = String::new();
        let mut text = String::new();
        for (i, step) in prompt.steps.iter().enumerate() {
            messages.push(ChatMessage { role: "user".into(), content: step.clone() });
            let reply = self
                .client
                .complete(&messages)
                .map_err(|e| LectError::Generate { node: node_index, reason: e.to_string() })?;
            if i == 2 {
                category = last_nonempty_line(&reply);
            }
            if i == 3 {
                text = reply.trim().to_string();
            }
            messages.push(ChatMessage { role: "assistant".into(), content: reply });
        }
        if text.is_empty() {
            return Err(LectError::Generate {
                node: node_index,
                reason: "empty completion for sample generation step".into(),
            });
        }
        self.transcripts.borrow_mut().push(messages);
        Ok((text, category))
    }
}

/// Fill in the texts for a skeleton. All-or-nothing: any generation failure
/// aborts the whole batch.
pub fn generate_texts(
    skeleton: &PseudoSkeleton,
    ind_class_names: &[String],
    generator: &dyn TextGenerator,
) -> Result<PseudoOodBatch> {
    let n = skeleton.node_ids.len();
    let mut texts = Vec::with_capacity(n);
    let mut meta = Vec::with_capacity(n);
    for p in 0..n {
        let (text, category) =
            generator.generate(p, ind_class_names, &skeleton.neighbor_labels[p], skeleton.modes[p])?;
        if text.is_empty() {
            return Err(LectError::Generate { node: p, reason: "empty generated text".into() });
        }
        texts.push(text);
        meta.push(PseudoMeta {
            mode: skeleton.modes[p],
            chosen_category: category,
            neighbor_labels: skeleton.neighbor_labels[p].clone(),
        });
    }
    Ok(PseudoOodBatch {
        node_ids: skeleton.node_ids.clone(),
        edges: skeleton.edges.clone(),
        texts,
        meta,
    })
}

/// The enhanced graph: original nodes plus pseudo nodes, with the injected
/// edges merged in. Pseudo nodes carry no label and are flagged by index.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    pub base_node_count: usize,
    pub node_count: usize,
    pub texts: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl AugmentedGraph {
    pub fn is_pseudo(&self, node: usize) -> bool {
        node >= self.base_node_count
    }
}

/// Merge a pseudo batch into the original graph.
pub fn augment_graph(graph: &TextAttributedGraph, batch: &PseudoOodBatch) -> Result<AugmentedGraph> {
    let n = graph.node_count;
    for (k, &id) in batch.node_ids.iter().enumerate() {
        if id != n + k {
            return Err(LectError::InvalidGraph(format!(
                "pseudo node id {id} collides or is non-contiguous (expected {})",
                n + k
            )));
        }
    }
    if batch.texts.len() != batch.node_ids.len() {
        return Err(LectError::InvalidGraph("pseudo batch texts/ids length mismatch".into()));
    }
    let total = n + batch.node_ids.len();
    let mut edge_set: BTreeSet<(usize, usize)> = graph.edges.iter().copied().collect();
    for &(a, b) in &batch.edges {
        if a >= total || b >= total {
            return Err(LectError::InvalidGraph(format!(
                "pseudo edge ({a}, {b}) out of range for {total} nodes"
            )));
        }
        edge_set.insert((a.min(b), a.max(b)));
    }
    let mut texts = graph.texts.clone();
    texts.extend(batch.texts.iter().cloned());
    Ok(AugmentedGraph {
        base_node_count: n,
        node_count: total,
        texts,
        edges: edge_set.into_iter().collect(),
    })
}
