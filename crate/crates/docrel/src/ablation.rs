//! Ablation harness: trains the full model and selected variants under
//! identical seeds and data, then compares multi-relation F1.

use std::fmt;
use std::str::FromStr;

use crate::data::{Corpus, RelationVocab};
use crate::eval::{evaluate, multi_label_f1, SetSize};
use crate::gat::GatMode;
use crate::graph::{CorrelationGraph, GraphParams};
use crate::model::{CorrelationMode, LossKind, Model, ModelConfig};
use crate::train::{predict_corpus, train_model, Prepared, TrainConfig, TrainError};

/// A variant to compare against the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationSwitch {
    /// Relation features bypass the correlation graph entirely.
    NoCorrelationModule,
    /// Per-positive adaptive thresholding replaces the multi-relation loss.
    AtLossInsteadOfMat,
    /// The graph only masks attention; the re-weighting is dropped.
    MaskOnlyGat,
}

impl AblationSwitch {
    pub const ALL: [AblationSwitch; 3] = [
        AblationSwitch::NoCorrelationModule,
        AblationSwitch::AtLossInsteadOfMat,
        AblationSwitch::MaskOnlyGat,
    ];

    fn apply(&self, model_cfg: &mut ModelConfig, train_cfg: &mut TrainConfig) {
        match self {
            AblationSwitch::NoCorrelationModule => {
                model_cfg.correlation = CorrelationMode::Bypass;
            }
            AblationSwitch::AtLossInsteadOfMat => {
                train_cfg.loss = LossKind::At;
            }
            AblationSwitch::MaskOnlyGat => {
                model_cfg.gat_mode = GatMode::MaskOnly;
            }
        }
    }
}

impl fmt::Display for AblationSwitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AblationSwitch::NoCorrelationModule => "no-correlation-module",
            AblationSwitch::AtLossInsteadOfMat => "at-loss-instead-of-mat",
            AblationSwitch::MaskOnlyGat => "mask-only-gat",
        };
        f.write_str(name)
    }
}

impl FromStr for AblationSwitch {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no-correlation-module" => Ok(AblationSwitch::NoCorrelationModule),
            "at-loss-instead-of-mat" => Ok(AblationSwitch::AtLossInsteadOfMat),
            "mask-only-gat" => Ok(AblationSwitch::MaskOnlyGat),
            other => Err(TrainError::Config(format!(
                "unknown ablation switch {other:?}"
            ))),
        }
    }
}

/// Metrics of one trained variant on the evaluation corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub f1: f64,
    pub recall: f64,
    pub two_rel_f1: Option<f64>,
    pub three_rel_f1: Option<f64>,
    /// F1 over pairs with two or more gold relations.
    pub overall_multi_f1: Option<f64>,
    pub multi_recall: Option<f64>,
    pub final_mean_loss: f64,
}

/// Trains the baseline plus one variant per switch under identical seeds
/// and reports evaluation metrics for each. An empty switch list yields
/// just the baseline row.
pub fn run_ablation(
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
    graph_params: GraphParams,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    switches: &[AblationSwitch],
) -> Result<Vec<AblationRow>, TrainError> {
    let vocab = RelationVocab::from_corpus(train_corpus);
    let graph = CorrelationGraph::build(train_corpus, &vocab, graph_params)?;

    let mut rows = Vec::with_capacity(switches.len() + 1);
    rows.push(run_variant(
        "full",
        train_corpus,
        eval_corpus,
        &vocab,
        &graph,
        model_cfg,
        train_cfg,
    )?);
    for switch in switches {
        let mut mc = model_cfg;
        let mut tc = train_cfg;
        switch.apply(&mut mc, &mut tc);
        rows.push(run_variant(
            &switch.to_string(),
            train_corpus,
            eval_corpus,
            &vocab,
            &graph,
            mc,
            tc,
        )?);
    }
    Ok(rows)
}

fn run_variant(
    name: &str,
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
    vocab: &RelationVocab,
    graph: &CorrelationGraph,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
) -> Result<AblationRow, TrainError> {
    let prepared = Prepared::new(train_corpus, vocab.clone(), graph)?;
    let model = Model::init(
        model_cfg,
        prepared.vocab.len(),
        prepared.words.len(),
        prepared.types.len(),
        train_cfg.seed,
    )?;
    let outcome = train_model(model, train_corpus, &prepared, train_cfg, None)?;
    let predictions = predict_corpus(&outcome.model, &prepared, eval_corpus, train_cfg.theta)?;
    let metrics = evaluate(&predictions, eval_corpus, None)?;
    let two = multi_label_f1(&predictions, eval_corpus, SetSize::Exactly(2))?;
    let three = multi_label_f1(&predictions, eval_corpus, SetSize::Exactly(3))?;
    let overall = multi_label_f1(&predictions, eval_corpus, SetSize::AtLeast(2))?;
    Ok(AblationRow {
        variant: name.to_string(),
        f1: metrics.f1,
        recall: metrics.recall,
        two_rel_f1: two.map(|m| m.f1),
        three_rel_f1: three.map(|m| m.f1),
        overall_multi_f1: overall.map(|m| m.f1),
        multi_recall: overall.map(|m| m.recall),
        final_mean_loss: outcome.trace.last().map(|s| s.mean_loss).unwrap_or(0.0),
    })
}
