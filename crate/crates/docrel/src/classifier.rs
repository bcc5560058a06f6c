//! Relation-aware projections, per-class bilinear scoring, the
//! multi-relation adaptive thresholding loss, and the inference rule.
//!
//! Each entity pair receives r+1 logits; the last one belongs to the
//! learnable threshold class TH that doubles as NA. The positive loss
//! drives every gold logit above TH jointly, the negative loss is a
//! softmax pushing TH above all non-gold logits, and inference keeps the
//! classes whose probability clears (1+θ)·P(TH). Both loss terms are
//! evaluated in log space from the logits, so they stay finite for any
//! finite scores.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{sigmoid, Bindings, Initializer, NodeId, ParamSet, Tape, TensorError};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaRange(f64),
    #[error("bilinear width {width} is not divisible into {blocks} blocks")]
    BlockSplit { width: usize, blocks: usize },
}

/// Classifier dimensions: entity width d_B, relation count r, and the
/// block-diagonal grouping factor for the bilinear forms (1 = the full
/// (d_B+r)×(d_B+r) form per class).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub d_entity: usize,
    pub r: usize,
    pub blocks: usize,
    pub ln_eps: f64,
}

impl ClassifierConfig {
    /// Width of the concatenated pair representation E ⊕ I.
    pub fn width(&self) -> usize {
        self.d_entity + self.r
    }

    pub fn block_width(&self) -> Result<usize, ClassifierError> {
        let width = self.width();
        if self.blocks == 0 || width % self.blocks != 0 {
            return Err(ClassifierError::BlockSplit {
                width,
                blocks: self.blocks,
            });
        }
        Ok(width / self.blocks)
    }

    /// Classes including TH.
    pub fn n_classes(&self) -> usize {
        self.r + 1
    }
}

/// Registers layer-norm parameters for both projections and one bilinear
/// form (plus scalar bias) per class including TH.
pub fn init_params(
    params: &mut ParamSet,
    init: &mut Initializer,
    cfg: &ClassifierConfig,
) -> Result<(), ClassifierError> {
    let bw = cfg.block_width()?;
    for side in ["subj", "obj"] {
        params.insert(format!("cls.{side}.gain"), init.ones(&[cfg.r]));
        params.insert(format!("cls.{side}.bias"), init.zeros(&[cfg.r]));
    }
    for class in 0..cfg.n_classes() {
        for block in 0..cfg.blocks {
            params.insert(format!("cls.w{class}.b{block}"), init.weight(bw, bw));
        }
        params.insert(format!("cls.bias{class}"), init.zeros(&[]));
    }
    Ok(())
}

/// Tape handles for the classifier.
#[derive(Clone, Debug)]
pub struct ClassifierIds {
    pub subj_gain: NodeId,
    pub subj_bias: NodeId,
    pub obj_gain: NodeId,
    pub obj_bias: NodeId,
    /// Per class: the block list and the scalar bias.
    pub classes: Vec<(Vec<NodeId>, NodeId)>,
}

impl ClassifierIds {
    pub fn from_bindings(bind: &Bindings, cfg: &ClassifierConfig) -> Self {
        ClassifierIds {
            subj_gain: bind.id("cls.subj.gain"),
            subj_bias: bind.id("cls.subj.bias"),
            obj_gain: bind.id("cls.obj.gain"),
            obj_bias: bind.id("cls.obj.bias"),
            classes: (0..cfg.n_classes())
                .map(|c| {
                    (
                        (0..cfg.blocks)
                            .map(|b| bind.id(&format!("cls.w{c}.b{b}")))
                            .collect(),
                        bind.id(&format!("cls.bias{c}")),
                    )
                })
                .collect(),
        }
    }
}

/// Projects an entity vector through the relation matrix and layer-norms
/// the result: I = LayerNorm(relmat · E).
pub fn project(
    tape: &mut Tape,
    relmat: NodeId,
    entity: NodeId,
    gain: NodeId,
    bias: NodeId,
    eps: f64,
) -> Result<NodeId, TensorError> {
    let mapped = tape.matvec(relmat, entity)?;
    tape.layer_norm(mapped, gain, bias, eps)
}

/// One logit per class (TH last): (E_s ⊕ I_s)ᵀ W_c (E_o ⊕ I_o) + b_c,
/// with W_c block-diagonal when the grouping factor exceeds 1.
pub fn pair_logits(
    tape: &mut Tape,
    subject: NodeId,
    subject_proj: NodeId,
    object: NodeId,
    object_proj: NodeId,
    ids: &ClassifierIds,
    cfg: &ClassifierConfig,
) -> Result<Vec<NodeId>, ClassifierError> {
    let bw = cfg.block_width()?;
    let u = tape.concat(&[subject, subject_proj])?;
    let v = tape.concat(&[object, object_proj])?;
    let mut logits = Vec::with_capacity(cfg.n_classes());
    for (blocks, bias) in &ids.classes {
        let mut acc: Option<NodeId> = None;
        for (b, &w) in blocks.iter().enumerate() {
            let u_blk = tape.slice(u, b * bw, bw)?;
            let v_blk = tape.slice(v, b * bw, bw)?;
            let wv = tape.matvec(w, v_blk)?;
            let quad = tape.dot(u_blk, wv)?;
            acc = Some(match acc {
                None => quad,
                Some(prev) => tape.add(prev, quad)?,
            });
        }
        let quad = acc.expect("at least one block");
        logits.push(tape.add(quad, *bias)?);
    }
    Ok(logits)
}

/// Positive term: −log(1 − P(TH)) − Σ_{c ∈ gold} log P(c), computed from
/// logits as softplus(logit_TH) + Σ softplus(−logit_c). An empty gold set
/// leaves only the TH term.
pub fn mat_loss_positive(
    tape: &mut Tape,
    logits: &[NodeId],
    gold: &BTreeSet<usize>,
) -> Result<NodeId, TensorError> {
    let th = *logits.last().expect("TH logit present");
    let mut loss = tape.softplus(th);
    for &c in gold {
        let negated = tape.neg(logits[c]);
        let term = tape.softplus(negated);
        loss = tape.add(loss, term)?;
    }
    Ok(loss)
}

/// Negative term: cross-entropy pushing TH above every non-gold logit,
/// log Σ_{c ∈ L_o ∪ {TH}} exp(logit_c) − logit_TH. Zero when every class
/// is gold.
pub fn mat_loss_negative(
    tape: &mut Tape,
    logits: &[NodeId],
    gold: &BTreeSet<usize>,
) -> Result<NodeId, TensorError> {
    let r = logits.len() - 1;
    let mut members: Vec<NodeId> = (0..r)
        .filter(|c| !gold.contains(c))
        .map(|c| logits[c])
        .collect();
    members.push(logits[r]);
    let stacked = tape.concat(&members)?;
    let lse = tape.logsumexp(stacked)?;
    tape.sub(lse, logits[r])
}

/// The adaptive-thresholding baseline loss: each positive competes with
/// the others and TH in its own softmax, so multiple relations are not
/// optimized jointly. Kept for ablation runs.
pub fn at_loss(
    tape: &mut Tape,
    logits: &[NodeId],
    gold: &BTreeSet<usize>,
) -> Result<NodeId, TensorError> {
    let r = logits.len() - 1;
    let mut loss = mat_loss_negative(tape, logits, gold)?;
    if !gold.is_empty() {
        let mut members: Vec<NodeId> = gold.iter().map(|&c| logits[c]).collect();
        members.push(logits[r]);
        let stacked = tape.concat(&members)?;
        let lse = tape.logsumexp(stacked)?;
        for &c in gold {
            let term = tape.sub(lse, logits[c])?;
            loss = tape.add(loss, term)?;
        }
    }
    Ok(loss)
}

/// Convex combination α·L+ + (1−α)·L−.
pub fn total_loss(
    tape: &mut Tape,
    positive: NodeId,
    negative: NodeId,
    alpha: f64,
) -> Result<NodeId, ClassifierError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ClassifierError::AlphaRange(alpha));
    }
    let lp = tape.scale(positive, alpha);
    let ln = tape.scale(negative, 1.0 - alpha);
    Ok(tape.add(lp, ln)?)
}

/// Logits of one entity pair, TH last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub logits: Vec<f64>,
}

impl PairScores {
    pub fn relation_count(&self) -> usize {
        self.logits.len() - 1
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| sigmoid(l)).collect()
    }

    pub fn probability(&self, class: usize) -> f64 {
        sigmoid(self.logits[class])
    }

    pub fn th_probability(&self) -> f64 {
        sigmoid(*self.logits.last().expect("TH logit"))
    }

    /// Classes whose probability reaches (1+θ)·P(TH); the empty set
    /// encodes NA.
    pub fn predict(&self, theta: f64) -> BTreeSet<usize> {
        debug_assert!(theta >= 0.0, "theta must be nonnegative");
        let bar = (1.0 + theta) * self.th_probability();
        (0..self.relation_count())
            .filter(|&c| self.probability(c) >= bar)
            .collect()
    }
}
