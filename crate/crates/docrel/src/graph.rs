//! The relation correlation graph: co-occurrence counts, conditional
//! probabilities, binarized adjacency, and the re-weighted propagation
//! matrix.
//!
//! For relations i ≠ j, `C[i][j]` counts entity pairs whose gold label set
//! contains both; the diagonal is zero and asymmetry enters only through
//! row normalization. Counts below `tau` are dropped before normalizing, so
//! `P[i][j]` is the conditional probability of j given i over the retained
//! evidence. `B` thresholds `P` at `delta` (boundary kept) and forces
//! self-loops; `R` gives each node weight 1−p on itself and splits p across
//! its neighbors.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{entity_pair_labels, Corpus, DataError, RelationVocab};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{name} must lie in {range}, got {value}")]
    Param {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("graph invariant violated: {0}")]
    Invariant(String),
    #[error("graph relations do not match the corpus vocabulary")]
    VocabMismatch,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Hyper-parameters of graph construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    /// Minimum raw co-occurrence count; rarer pairs are dropped.
    pub tau: u64,
    /// Conditional-probability threshold for keeping an edge.
    pub delta: f64,
    /// Total weight a node spreads across its neighbors.
    pub p: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            tau: 10,
            delta: 0.05,
            p: 0.3,
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(GraphError::Param {
                name: "delta",
                range: "(0, 1]",
                value: self.delta,
            });
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(GraphError::Param {
                name: "p",
                range: "(0, 1)",
                value: self.p,
            });
        }
        Ok(())
    }
}

/// The four matrices of the correlation graph plus the vocabulary and
/// hyper-parameters that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGraph {
    pub r: usize,
    pub relations: Vec<String>,
    #[serde(rename = "C")]
    pub counts: Vec<Vec<u64>>,
    #[serde(rename = "P")]
    pub cond: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub adj: Vec<Vec<u8>>,
    #[serde(rename = "R")]
    pub weights: Vec<Vec<f64>>,
    pub tau: u64,
    pub delta: f64,
    pub p: f64,
}

/// Symmetric co-occurrence counts with a zero diagonal: `C[i][j]` (i ≠ j)
/// is the number of entity pairs whose label set contains both i and j.
pub fn count_cooccurrence(
    corpus: &Corpus,
    vocab: &RelationVocab,
) -> Result<Vec<Vec<u64>>, DataError> {
    let r = vocab.len();
    let mut counts = vec![vec![0u64; r]; r];
    for doc in &corpus.docs {
        for labels in entity_pair_labels(doc, vocab)?.values() {
            let labels: Vec<usize> = labels.iter().copied().collect();
            for (a_pos, &a) in labels.iter().enumerate() {
                for &b in &labels[a_pos + 1..] {
                    counts[a][b] += 1;
                    counts[b][a] += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Row-normalized conditional probabilities after dropping counts below
/// `tau`. All-zero rows stay all-zero.
pub fn conditional_matrix(counts: &[Vec<u64>], tau: u64) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let kept: Vec<u64> = row.iter().map(|&c| if c >= tau { c } else { 0 }).collect();
            let total: u64 = kept.iter().sum();
            if total == 0 {
                vec![0.0; row.len()]
            } else {
                kept.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect()
}

/// Thresholds `P` at `delta` (boundary kept) and forces a self-loop on
/// every node.
pub fn binarize(cond: &[Vec<f64>], delta: f64) -> Vec<Vec<u8>> {
    cond.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &pij)| if i == j || pij >= delta { 1 } else { 0 })
                .collect()
        })
        .collect()
}

/// Re-weights the binary adjacency: off-diagonal edges of row i share the
/// weight p equally, the self-loop keeps 1−p. Rows without neighbors keep
/// only the self-loop weight.
pub fn reweight(adj: &[Vec<u8>], p: f64) -> Vec<Vec<f64>> {
    adj.iter()
        .enumerate()
        .map(|(i, row)| {
            let degree = row
                .iter()
                .enumerate()
                .filter(|&(j, &b)| j != i && b == 1)
                .count();
            row.iter()
                .enumerate()
                .map(|(j, &b)| {
                    if i == j {
                        1.0 - p
                    } else if b == 1 && degree > 0 {
                        p / degree as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

impl CorrelationGraph {
    pub fn build(
        corpus: &Corpus,
        vocab: &RelationVocab,
        params: GraphParams,
    ) -> Result<Self, GraphError> {
        params.validate()?;
        let counts = count_cooccurrence(corpus, vocab)?;
        let cond = conditional_matrix(&counts, params.tau);
        let adj = binarize(&cond, params.delta);
        let weights = reweight(&adj, params.p);
        let graph = CorrelationGraph {
            r: vocab.len(),
            relations: vocab.codes().to_vec(),
            counts,
            cond,
            adj,
            weights,
            tau: params.tau,
            delta: params.delta,
            p: params.p,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Checks the structural invariants of all four matrices.
    pub fn validate(&self) -> Result<(), GraphError> {
        let fail = |msg: String| Err(GraphError::Invariant(msg));
        let r = self.r;
        if self.relations.len() != r {
            return fail(format!("{} relations for r = {r}", self.relations.len()));
        }
        for m in [
            self.counts.len(),
            self.cond.len(),
            self.adj.len(),
            self.weights.len(),
        ] {
            if m != r {
                return fail(format!("matrix with {m} rows for r = {r}"));
            }
        }
        for i in 0..r {
            if self.counts[i][i] != 0 {
                return fail(format!("C[{i}][{i}] = {} is nonzero", self.counts[i][i]));
            }
            for j in 0..r {
                if self.counts[i][j] != self.counts[j][i] {
                    return fail(format!("C is asymmetric at ({i}, {j})"));
                }
                if !(0.0..=1.0).contains(&self.cond[i][j]) {
                    return fail(format!("P[{i}][{j}] = {} outside [0, 1]", self.cond[i][j]));
                }
                if self.adj[i][j] > 1 {
                    return fail(format!("B[{i}][{j}] = {} is not binary", self.adj[i][j]));
                }
            }
            if self.adj[i][i] != 1 {
                return fail(format!("B[{i}][{i}] misses its self-loop"));
            }
            let row_sum: f64 = self.cond[i].iter().sum();
            if row_sum != 0.0 && (row_sum - 1.0).abs() >= 1e-9 {
                return fail(format!("P row {i} sums to {row_sum}"));
            }
            let degree = (0..r).filter(|&j| j != i && self.adj[i][j] == 1).count();
            let w_sum: f64 = self.weights[i].iter().sum();
            let expected = if degree == 0 { 1.0 - self.p } else { 1.0 };
            if (w_sum - expected).abs() >= 1e-9 {
                return fail(format!("R row {i} sums to {w_sum}, expected {expected}"));
            }
            if (self.weights[i][i] - (1.0 - self.p)).abs() >= 1e-12 {
                return fail(format!("R[{i}][{i}] = {}", self.weights[i][i]));
            }
        }
        Ok(())
    }

    /// Directed off-diagonal edges (support of B without self-loops).
    pub fn edge_count(&self) -> usize {
        (0..self.r)
            .flat_map(|i| (0..self.r).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.adj[i][j] == 1)
            .count()
    }

    /// Edge count over the possible off-diagonal slots.
    pub fn density(&self) -> f64 {
        if self.r < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.r * (self.r - 1)) as f64
    }

    pub fn matches_vocab(&self, vocab: &RelationVocab) -> bool {
        self.relations == vocab.codes()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        write_text(path, &self.to_json_string())
    }

    pub fn from_json_str(json: &str) -> Result<Self, GraphError> {
        let graph: CorrelationGraph = serde_json::from_str(json).map_err(|e| {
            GraphError::Data(DataError::Json {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })
        })?;
        graph.validate()?;
        Ok(graph)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| {
            GraphError::Data(DataError::Io {
                path: path.display().to_string(),
                source,
            })
        })?;
        Self::from_json_str(&text)
    }

    /// (head-code, tail-code, weight) triples for every nonzero entry of R,
    /// self-loops included.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.r {
            for j in 0..self.r {
                if self.weights[i][j] > 0.0 {
                    out.push_str(&format!(
                        "{}\t{}\t{}\n",
                        self.relations[i], self.relations[j], self.weights[i][j]
                    ));
                }
            }
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        write_text(path, &self.to_tsv())
    }

    /// Graphviz rendering of the directed graph: one node per relation and
    /// one edge per off-diagonal nonzero of R, labeled with the weight
    /// rounded to three decimals.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph relation_correlation {\n");
        for code in &self.relations {
            out.push_str(&format!("    \"{code}\";\n"));
        }
        for i in 0..self.r {
            for j in 0..self.r {
                if i != j && self.weights[i][j] > 0.0 {
                    out.push_str(&format!(
                        "    \"{}\" -> \"{}\" [label=\"{:.3}\"];\n",
                        self.relations[i], self.relations[j], self.weights[i][j]
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn write_dot(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        write_text(path, &self.to_dot())
    }
}

fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), GraphError> {
    let path = path.as_ref();
    let io_err = |source| GraphError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(text.as_bytes()).map_err(io_err)
}

/// Brute-force co-occurrence oracle: enumerates every unordered relation
/// pair inside every entity pair's label set. Kept separate from
/// [`count_cooccurrence`] so tests can compare the two routes.
pub fn cooccurrence_oracle(
    corpus: &Corpus,
    vocab: &RelationVocab,
) -> Result<Vec<Vec<u64>>, DataError> {
    let r = vocab.len();
    let mut counts = vec![vec![0u64; r]; r];
    for doc in &corpus.docs {
        for labels in entity_pair_labels(doc, vocab)?.values() {
            let set: BTreeSet<usize> = labels.iter().copied().collect();
            for &a in &set {
                for &b in &set {
                    if a != b {
                        counts[a][b] += 1;
                    }
                }
            }
        }
    }
    Ok(counts)
}
