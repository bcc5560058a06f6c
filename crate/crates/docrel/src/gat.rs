//! Learnable relation features and their propagation over the re-weighted
//! correlation graph with multi-head graph attention.
//!
//! Node i attends over N(i) = {j : R[i][j] > 0}; the self-loop weight
//! R[i][i] = 1−p keeps every neighborhood nonempty. Learned attention is
//! multiplied by the fixed re-weighting and renormalized per row, so the
//! self-vs-neighbor split survives training while per-edge weights stay
//! learnable. A mask-only mode (attention over the same support, without
//! the R re-weighting) is kept behind a switch for ablation runs.

use serde::{Deserialize, Serialize};

use crate::graph::CorrelationGraph;
use crate::tensor::{Bindings, Initializer, NodeId, ParamSet, Tape, Tensor, TensorError};

/// How the fixed re-weighted matrix steers attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatMode {
    /// Attention weights are multiplied by R and renormalized per row.
    WeightedRenorm,
    /// R only defines the neighborhoods; attention is used as-is.
    MaskOnly,
}

/// Architecture of the propagation stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    /// Number of stacked attention layers; 0 falls back to a single linear
    /// projection onto the output width.
    pub layers: usize,
    pub heads: usize,
    /// Per-head width of hidden layers (heads are concatenated).
    pub hidden: usize,
    /// Input width: the relation-embedding dimension.
    pub d_in: usize,
    /// Output width; the final layer averages its heads onto this.
    pub d_out: usize,
    pub leaky_slope: f64,
    pub mode: GatMode,
}

impl GatConfig {
    /// Input width of a given layer.
    fn layer_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.d_in
        } else {
            self.heads * self.hidden
        }
    }

    /// Per-head output width of a given layer.
    fn layer_head_out(&self, layer: usize) -> usize {
        if layer + 1 == self.layers {
            self.d_out
        } else {
            self.hidden
        }
    }
}

/// Fixed propagation structure extracted from a correlation graph: the
/// neighborhood mask (support of R) and the re-weighted values.
#[derive(Clone, Debug, PartialEq)]
pub struct GatStructure {
    pub n: usize,
    pub mask: Vec<bool>,
    pub weights: Vec<f64>,
}

impl GatStructure {
    pub fn from_graph(graph: &CorrelationGraph) -> Self {
        let n = graph.r;
        let mut mask = vec![false; n * n];
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                weights[i * n + j] = graph.weights[i][j];
                mask[i * n + j] = graph.weights[i][j] > 0.0;
            }
        }
        GatStructure { n, mask, weights }
    }

    /// Structure over explicit row-major weights; neighborhoods are the
    /// nonzero entries.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), n * n);
        let mask = weights.iter().map(|&w| w > 0.0).collect();
        GatStructure { n, mask, weights }
    }
}

/// Seeded relation-feature matrix, one row per statistical relation.
pub fn init_relation_features(init: &mut Initializer, r: usize, d_rel: usize) -> Tensor {
    init.embedding(r, d_rel)
}

/// Registers the relation features and per-layer, per-head attention
/// parameters.
pub fn init_params(params: &mut ParamSet, init: &mut Initializer, cfg: &GatConfig, r: usize) {
    params.insert("rel.feat", init_relation_features(init, r, cfg.d_in));
    if cfg.layers == 0 {
        params.insert("gat.proj", init.weight(cfg.d_in, cfg.d_out));
        return;
    }
    for layer in 0..cfg.layers {
        let d_in = cfg.layer_in(layer);
        let d_head = cfg.layer_head_out(layer);
        for head in 0..cfg.heads {
            params.insert(format!("gat{layer}.h{head}.w"), init.weight(d_in, d_head));
            params.insert(
                format!("gat{layer}.h{head}.a"),
                init.weight_vector(2 * d_head),
            );
        }
    }
}

/// Tape handles for one attention head: the projection and the attention
/// vector (source half then destination half).
#[derive(Clone, Copy, Debug)]
pub struct GatHeadIds {
    pub w: NodeId,
    pub a: NodeId,
}

/// Tape handles for the whole stack.
#[derive(Clone, Debug)]
pub struct GatIds {
    pub features: NodeId,
    pub layers: Vec<Vec<GatHeadIds>>,
    pub proj: Option<NodeId>,
}

impl GatIds {
    pub fn from_bindings(bind: &Bindings, cfg: &GatConfig) -> Self {
        GatIds {
            features: bind.id("rel.feat"),
            layers: (0..cfg.layers)
                .map(|l| {
                    (0..cfg.heads)
                        .map(|h| GatHeadIds {
                            w: bind.id(&format!("gat{l}.h{h}.w")),
                            a: bind.id(&format!("gat{l}.h{h}.a")),
                        })
                        .collect()
                })
                .collect(),
            proj: if cfg.layers == 0 {
                Some(bind.id("gat.proj"))
            } else {
                None
            },
        }
    }
}

/// How a layer combines its heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadCombine {
    Concat,
    Average,
}

fn attention_head(
    tape: &mut Tape,
    h: NodeId,
    structure: &GatStructure,
    head: &GatHeadIds,
    d_head: usize,
    slope: f64,
    mode: GatMode,
    weights_node: NodeId,
) -> Result<NodeId, TensorError> {
    let projected = tape.matmul(h, head.w)?;
    let a_src = tape.slice(head.a, 0, d_head)?;
    let a_dst = tape.slice(head.a, d_head, d_head)?;
    let src_scores = tape.matvec(projected, a_src)?;
    let dst_scores = tape.matvec(projected, a_dst)?;
    let pair_scores = tape.outer_sum(src_scores, dst_scores)?;
    let activated = tape.leaky_relu(pair_scores, slope);
    let attention = tape.softmax_masked_rows(activated, &structure.mask)?;
    let coefficients = match mode {
        GatMode::MaskOnly => attention,
        GatMode::WeightedRenorm => {
            let scaled = tape.mul(attention, weights_node)?;
            tape.renorm_rows(scaled)?
        }
    };
    tape.matmul(coefficients, projected)
}

/// One multi-head attention layer over the fixed structure.
pub fn gat_layer(
    tape: &mut Tape,
    h: NodeId,
    structure: &GatStructure,
    heads: &[GatHeadIds],
    d_head: usize,
    combine: HeadCombine,
    slope: f64,
    mode: GatMode,
    weights_node: NodeId,
) -> Result<NodeId, TensorError> {
    if heads.is_empty() {
        return Err(TensorError::Empty { op: "gat_layer" });
    }
    let outputs: Vec<NodeId> = heads
        .iter()
        .map(|head| attention_head(tape, h, structure, head, d_head, slope, mode, weights_node))
        .collect::<Result<_, _>>()?;
    match combine {
        HeadCombine::Concat => tape.concat_cols(&outputs),
        HeadCombine::Average => {
            let mut acc = outputs[0];
            for &o in &outputs[1..] {
                acc = tape.add(acc, o)?;
            }
            Ok(tape.scale(acc, 1.0 / outputs.len() as f64))
        }
    }
}

/// Runs the full stack: hidden layers concatenate their heads and apply an
/// exponential linear unit; the final layer averages its heads onto the
/// output width. A 0-layer stack is a single linear projection.
pub fn propagate(
    tape: &mut Tape,
    ids: &GatIds,
    structure: &GatStructure,
    cfg: &GatConfig,
) -> Result<NodeId, TensorError> {
    if cfg.layers == 0 {
        let proj = ids.proj.expect("projection bound for a 0-layer stack");
        return tape.matmul(ids.features, proj);
    }
    let weights_node = tape.leaf(Tensor::matrix(
        structure.n,
        structure.n,
        structure.weights.clone(),
    )?);
    let mut current = ids.features;
    for (layer, heads) in ids.layers.iter().enumerate() {
        let last = layer + 1 == cfg.layers;
        let combined = gat_layer(
            tape,
            current,
            structure,
            heads,
            cfg.layer_head_out(layer),
            if last {
                HeadCombine::Average
            } else {
                HeadCombine::Concat
            },
            cfg.leaky_slope,
            cfg.mode,
            weights_node,
        )?;
        current = if last { combined } else { tape.elu(combined) };
    }
    Ok(current)
}
