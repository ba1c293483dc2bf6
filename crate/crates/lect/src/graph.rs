//! Text-attributed graph data model, adjacency normalization, and
//! label-shift IND/OOD split construction.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LectError, Result};
use crate::seeds;

/// An undirected graph whose nodes carry a free-text attribute and an
/// optional class label. Edges are stored canonicalized as (min, max)
/// with no self-loops and no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAttributedGraph {
    pub node_count: usize,
    pub texts: Vec<String>,
    pub labels: Vec<Option<u32>>,
    pub edges: Vec<(usize, usize)>,
    pub num_classes: u32,
}

impl TextAttributedGraph {
    /// Build a graph from raw parts, canonicalizing and deduplicating the
    /// edge list. Self-loops are rejected.
    pub fn new(
        texts: Vec<String>,
        labels: Vec<Option<u32>>,
        edges: Vec<(usize, usize)>,
        num_classes: u32,
    ) -> Result<Self> {
        if texts.len() != labels.len() {
            return Err(LectError::InvalidGraph(format!(
                "texts length {} != labels length {}",
                texts.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(LectError::InvalidGraph("num_classes must be positive".into()));
        }
        let n = texts.len();
        for (i, label) in labels.iter().enumerate() {
            if let Some(l) = label {
                if *l >= num_classes {
                    return Err(LectError::InvalidGraph(format!(
                        "node {i}: label {l} out of range [0, {num_classes})"
                    )));
                }
            }
        }
        let mut canon = BTreeSet::new();
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(LectError::InvalidGraph(format!(
                    "edge {k} ({a}, {b}): endpoint out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(LectError::InvalidGraph(format!("edge {k}: self-loop at node {a}")));
            }
            canon.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            node_count: n,
            texts,
            labels,
            edges: canon.into_iter().collect(),
            num_classes,
        })
    }

    /// Stable content hash over nodes, labels, edges and class count.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = seeds::fnv1a(b"graph-v1");
        let mut mix = |bytes: &[u8]| {
            h ^= seeds::fnv1a(bytes);
            h = h.wrapping_mul(0x100000001b3);
        };
        mix(&(self.node_count as u64).to_le_bytes());
        mix(&(self.num_classes as u64).to_le_bytes());
        for t in &self.texts {
            mix(t.as_bytes());
        }
        for l in &self.labels {
            mix(&l.map_or(u64::MAX, u64::from).to_le_bytes());
        }
        for &(a, b) in &self.edges {
            mix(&(a as u64).to_le_bytes());
            mix(&(b as u64).to_le_bytes());
        }
        h
    }

    /// Fraction of edges with both endpoints labeled that connect
    /// same-label nodes. Returns `None` when no edge has two labels.
    pub fn homophily(&self) -> Option<f64> {
        let mut both = 0usize;
        let mut same = 0usize;
        for &(a, b) in &self.edges {
            if let (Some(la), Some(lb)) = (self.labels[a], self.labels[b]) {
                both += 1;
                if la == lb {
                    same += 1;
                }
            }
        }
        (both > 0).then(|| same as f64 / both as f64)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct GraphFileNode {
    id: usize,
    text: String,
    label: Option<u32>,
}

#[derive(Debug, Deserialize, Serialize)]
struct GraphFile {
    nodes: Vec<GraphFileNode>,
    edges: Vec<(usize, usize)>,
    num_classes: u32,
}

/// Load a graph from the JSON file format
/// `{"nodes": [{"id", "text", "label"}], "edges": [[i,j],...], "num_classes"}`.
///
/// Node ids must cover exactly `0..n`; labels and edges are validated with
/// record-identifying messages.
pub fn load_graph(path: &Path) -> Result<TextAttributedGraph> {
    let raw = std::fs::read_to_string(path)?;
    parse_graph(&raw)
}

pub fn parse_graph(raw: &str) -> Result<TextAttributedGraph> {
    let file: GraphFile = serde_json::from_str(raw)?;
    let n = file.nodes.len();
    let mut texts = vec![None; n];
    let mut labels = vec![None; n];
    for (k, node) in file.nodes.into_iter().enumerate() {
        if node.id >= n {
            return Err(LectError::InvalidGraph(format!(
                "node record {k}: id {} out of range for {n} nodes",
                node.id
            )));
        }
        if texts[node.id].is_some() {
            return Err(LectError::InvalidGraph(format!(
                "node record {k}: duplicate id {}",
                node.id
            )));
        }
        labels[node.id] = node.label;
        texts[node.id] = Some(node.text);
    }
    let texts = texts.into_iter().map(|t| t.unwrap()).collect();
    TextAttributedGraph::new(texts, labels, file.edges, file.num_classes)
}

/// Write a graph back out in the canonical JSON file format.
pub fn save_graph(graph: &TextAttributedGraph, path: &Path) -> Result<()> {
    let file = GraphFile {
        nodes: (0..graph.node_count)
            .map(|i| GraphFileNode {
                id: i,
                text: graph.texts[i].clone(),
                label: graph.labels[i],
            })
            .collect(),
        edges: graph.edges.clone(),
        num_classes: graph.num_classes,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Which classes to hold out as OOD and how to slice the IND nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ood_classes: BTreeSet<u32>,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, num_classes: u32) -> Result<()> {
        if self.ood_classes.is_empty() {
            return Err(LectError::InvalidSplit("ood_classes must be non-empty".into()));
        }
        for &c in &self.ood_classes {
            if c >= num_classes {
                return Err(LectError::InvalidSplit(format!(
                    "ood class {c} out of range [0, {num_classes})"
                )));
            }
        }
        if self.ood_classes.len() >= num_classes as usize {
            return Err(LectError::InvalidSplit("no IND classes remain".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(LectError::InvalidSplit("train_fraction must be in (0, 1)".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(LectError::InvalidSplit("val_fraction must be in (0, 1)".into()));
        }
        if self.train_fraction + self.val_fraction >= 1.0 {
            return Err(LectError::InvalidSplit("train + val fractions must sum below 1".into()));
        }
        Ok(())
    }
}

/// Label-shift split: IND nodes partitioned into train/val/test, every
/// OOD-class node in the OOD test set, labels remapped to [0, C_ind).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_ind_idx: Vec<usize>,
    pub test_ood_idx: Vec<usize>,
    pub ind_class_remap: BTreeMap<u32, u32>,
    pub num_ind_classes: u32,
}

impl NodeSplit {
    /// Remapped label of a node, if it is an IND labeled node.
    pub fn remapped_label(&self, graph: &TextAttributedGraph, node: usize) -> Option<u32> {
        graph.labels[node].and_then(|l| self.ind_class_remap.get(&l).copied())
    }

    /// Names of the retained IND classes, remap order, from a full class-name list.
    pub fn ind_class_names(&self, all_names: &[String]) -> Vec<String> {
        self.ind_class_remap
            .keys()
            .map(|&c| all_names[c as usize].clone())
            .collect()
    }
}

/// Partition labeled nodes into train/val/test-IND/test-OOD by label shift.
///
/// Deterministic given `spec.seed`; fractions are honored with floor
/// rounding over the shuffled IND node list. Unlabeled nodes appear in no
/// split.
pub fn build_split(graph: &TextAttributedGraph, spec: &SplitSpec) -> Result<NodeSplit> {
    spec.validate(graph.num_classes)?;
    let mut class_counts = vec![0usize; graph.num_classes as usize];
    for l in graph.labels.iter().flatten() {
        class_counts[*l as usize] += 1;
    }
    for (c, &count) in class_counts.iter().enumerate() {
        if count == 0 {
            return Err(LectError::InvalidSplit(format!("class {c} has zero nodes")));
        }
    }

    let mut ind_nodes = Vec::new();
    let mut test_ood_idx = Vec::new();
    for (i, label) in graph.labels.iter().enumerate() {
        if let Some(l) = label {
            if spec.ood_classes.contains(l) {
                test_ood_idx.push(i);
            } else {
                ind_nodes.push(i);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(spec.seed, "split"));
    ind_nodes.shuffle(&mut rng);

    let n_ind = ind_nodes.len();
    let n_train = (spec.train_fraction * n_ind as f64).floor() as usize;
    let n_val = (spec.val_fraction * n_ind as f64).floor() as usize;
    let mut train_idx: Vec<usize> = ind_nodes[..n_train].to_vec();
    let mut val_idx: Vec<usize> = ind_nodes[n_train..n_train + n_val].to_vec();
    let mut test_ind_idx: Vec<usize> = ind_nodes[n_train + n_val..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_ind_idx.sort_unstable();

    let retained: Vec<u32> =
        (0..graph.num_classes).filter(|c| !spec.ood_classes.contains(c)).collect();
    let ind_class_remap: BTreeMap<u32, u32> =
        retained.iter().enumerate().map(|(new, &old)| (old, new as u32)).collect();

    Ok(NodeSplit {
        train_idx,
        val_idx,
        test_ind_idx,
        test_ood_idx,
        num_ind_classes: retained.len() as u32,
        ind_class_remap,
    })
}

/// Compressed sparse row matrix, square, used for the normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sparse-dense product `self * x` for an `n x k` dense matrix.
    pub fn matmul_dense(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return Err(LectError::DimMismatch(format!(
                "sparse n {} vs dense rows {}",
                self.n,
                x.nrows()
            )));
        }
        let k = x.ncols();
        let mut out = Array2::zeros((self.n, k));
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                let v = self.values[idx];
                for c in 0..k {
                    out[[i, c]] += v * x[[j, c]];
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[[i, self.col_idx[idx]]] = self.values[idx];
            }
        }
        out
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[idx] == j {
                return self.values[idx];
            }
        }
        0.0
    }
}

/// Symmetrically normalized adjacency with self-loops,
/// `D^{-1/2} (A + I) D^{-1/2}`, over the union of the graph's edges and
/// `extra_edges`, sized `node_count x node_count` (pseudo-node indices
/// beyond the original graph are allowed when the matrix is sized for them).
pub fn normalized_adjacency(
    graph: &TextAttributedGraph,
    extra_edges: &[(usize, usize)],
    node_count: usize,
) -> Result<CsrMatrix> {
    if node_count < graph.node_count {
        return Err(LectError::InvalidGraph(format!(
            "node_count {node_count} smaller than graph node count {}",
            graph.node_count
        )));
    }
    let mut edge_set: BTreeSet<(usize, usize)> = graph.edges.iter().copied().collect();
    for (k, &(a, b)) in extra_edges.iter().enumerate() {
        if a >= node_count || b >= node_count {
            return Err(LectError::InvalidGraph(format!(
                "extra edge {k} ({a}, {b}): endpoint out of range for {node_count} nodes"
            )));
        }
        if a == b {
            return Err(LectError::InvalidGraph(format!("extra edge {k}: self-loop at {a}")));
        }
        edge_set.insert((a.min(b), a.max(b)));
    }

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for &(a, b) in &edge_set {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    // degree with the self-loop counted
    let degree: Vec<f64> = neighbors.iter().map(|ns| 1.0 + ns.len() as f64).collect();

    let mut row_ptr = Vec::with_capacity(node_count + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..node_count {
        let mut row: Vec<usize> = neighbors[i].clone();
        row.push(i);
        row.sort_unstable();
        for j in row {
            col_idx.push(j);
            values.push(1.0 / (degree[i] * degree[j]).sqrt());
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix { n: node_count, row_ptr, col_idx, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_graph() -> TextAttributedGraph {
        // 10 nodes, labels 0,0,0,1,1,1,2,2,2,2
        let labels = vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
        TextAttributedGraph::new(
            (0..10).map(|i| format!("node {i}")).collect(),
            labels.into_iter().map(Some).collect(),
            vec![(0, 1), (1, 2), (3, 4), (6, 7), (8, 9)],
            3,
        )
        .unwrap()
    }

    #[test]
    fn split_counts_match_fractions() {
        let g = toy_graph();
        let spec = SplitSpec {
            ood_classes: [2].into_iter().collect(),
            train_fraction: 0.5,
            val_fraction: 0.25,
            seed: 1,
        };
        let split = build_split(&g, &spec).unwrap();
        assert_eq!(split.test_ood_idx, vec![6, 7, 8, 9]);
        assert_eq!(split.train_idx.len(), 3);
        assert_eq!(split.val_idx.len(), 1);
        assert_eq!(split.test_ind_idx.len(), 2);
        assert_eq!(split.num_ind_classes, 2);
    }

    #[test]
    fn all_classes_ood_is_an_error() {
        let g = toy_graph();
        let spec = SplitSpec {
            ood_classes: [0, 1, 2].into_iter().collect(),
            train_fraction: 0.5,
            val_fraction: 0.25,
            seed: 1,
        };
        let err = build_split(&g, &spec).unwrap_err();
        assert!(err.to_string().contains("no IND classes remain"));
    }

    #[test]
    fn split_is_deterministic() {
        let g = toy_graph();
        let spec = SplitSpec {
            ood_classes: [1].into_iter().collect(),
            train_fraction: 0.6,
            val_fraction: 0.2,
            seed: 99,
        };
        assert_eq!(build_split(&g, &spec).unwrap(), build_split(&g, &spec).unwrap());
    }

    #[test]
    fn split_partitions_labeled_nodes() {
        let g = toy_graph();
        let spec = SplitSpec {
            ood_classes: [0].into_iter().collect(),
            train_fraction: 0.4,
            val_fraction: 0.3,
            seed: 5,
        };
        let s = build_split(&g, &spec).unwrap();
        let mut all: Vec<usize> = s
            .train_idx
            .iter()
            .chain(&s.val_idx)
            .chain(&s.test_ind_idx)
            .chain(&s.test_ood_idx)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn remap_is_contiguous() {
        let g = toy_graph();
        let spec = SplitSpec {
            ood_classes: [1].into_iter().collect(),
            train_fraction: 0.5,
            val_fraction: 0.25,
            seed: 0,
        };
        let s = build_split(&g, &spec).unwrap();
        let mut vals: Vec<u32> = s.ind_class_remap.values().copied().collect();
        vals.sort_unstable();
        assert_eq!(vals, vec![0, 1]);
        assert_eq!(s.ind_class_remap[&0], 0);
        assert_eq!(s.ind_class_remap[&2], 1);
    }

    #[test]
    fn empty_class_is_an_error() {
        let g = TextAttributedGraph::new(
            vec!["a".into(), "b".into()],
            vec![Some(0), Some(0)],
            vec![],
            2,
        )
        .unwrap();
        let spec = SplitSpec {
            ood_classes: [0].into_iter().collect(),
            train_fraction: 0.5,
            val_fraction: 0.25,
            seed: 0,
        };
        assert!(build_split(&g, &spec).is_err());
    }

    #[test]
    fn adjacency_no_edges_is_identity() {
        let g =
            TextAttributedGraph::new(vec!["a".into(), "b".into()], vec![None, None], vec![], 1)
                .unwrap();
        let a = normalized_adjacency(&g, &[], 2).unwrap();
        assert_eq!(a.entry(0, 0), 1.0);
        assert_eq!(a.entry(1, 1), 1.0);
        assert_eq!(a.entry(0, 1), 0.0);
    }

    #[test]
    fn adjacency_single_edge_hand_check() {
        // degree-with-self-loop is 2 per node, so every entry is 1/2
        let g = TextAttributedGraph::new(
            vec!["a".into(), "b".into()],
            vec![None, None],
            vec![(0, 1)],
            1,
        )
        .unwrap();
        let a = normalized_adjacency(&g, &[], 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.entry(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = toy_graph();
        let a = normalized_adjacency(&g, &[(2, 5), (0, 9)], 12).unwrap();
        let d = a.to_dense();
        for i in 0..a.n {
            for j in 0..a.n {
                assert_eq!(d[[i, j]], d[[j, i]]);
            }
        }
    }

    #[test]
    fn adjacency_rejects_out_of_range_extra_edge() {
        let g = toy_graph();
        assert!(normalized_adjacency(&g, &[(0, 12)], 12).is_err());
    }

    #[test]
    fn adjacency_entries_in_unit_interval() {
        let g = toy_graph();
        let a = normalized_adjacency(&g, &[], 10).unwrap();
        for &v in &a.values {
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn graph_loader_rejects_dangling_edge() {
        let raw = r#"{"nodes": [{"id": 0, "text": "a", "label": 0}],
                      "edges": [[0, 3]], "num_classes": 1}"#;
        let err = parse_graph(raw).unwrap_err();
        assert!(err.to_string().contains("edge 0"));
    }

    #[test]
    fn graph_loader_rejects_bad_label() {
        let raw = r#"{"nodes": [{"id": 0, "text": "a", "label": 5}],
                      "edges": [], "num_classes": 2}"#;
        let err = parse_graph(raw).unwrap_err();
        assert!(err.to_string().contains("label 5"));
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = TextAttributedGraph::new(
            vec!["a".into(), "b".into()],
            vec![None, None],
            vec![(0, 1), (1, 0), (0, 1)],
            1,
        )
        .unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
    }
}
