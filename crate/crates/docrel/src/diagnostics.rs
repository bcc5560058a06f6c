//! Canned gradient checks over seeded fixtures: the LSTM cell, the BiLSTM
//! stack, one attention layer, and the full model loss on a two-document
//! corpus. Each check compares the tape gradient of every parameter
//! coordinate against central differences at eps = 1e-5 and reports the
//! worst relative error; anything at or above 1e-4 counts as a failure.

use std::collections::BTreeSet;

use crate::data::{entity_pair_labels, Corpus, RelationVocab};
use crate::encoder::{self, DocTokens, EncoderConfig, EncoderIds, LstmDirIds};
use crate::gat::{self, GatConfig, GatIds, GatMode, GatStructure};
use crate::graph::{CorrelationGraph, GraphParams};
use crate::model::{pair_loss, CorrelationMode, LossKind, Model, ModelConfig};
use crate::tensor::{grad_check, randomize_uniform, Initializer, NodeId, ParamSet, Tensor};
use crate::train::{Prepared, TrainError};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_EPS: f64 = 1e-5;

/// One component's verdict.
#[derive(Clone, Debug)]
pub struct ComponentCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub checked_values: usize,
}

impl ComponentCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_TOLERANCE
    }
}

/// Gradient check of a single LSTM cell step.
pub fn check_lstm_cell(seed: u64) -> Result<ComponentCheck, TrainError> {
    let (d_in, d_hidden) = (4, 3);
    let mut params = ParamSet::new();
    let mut init = Initializer::new(seed);
    for gate in ["i", "f", "g", "o"] {
        params.insert(
            format!("enc.lstm0.fwd.wx_{gate}"),
            init.weight(d_hidden, d_in),
        );
        params.insert(
            format!("enc.lstm0.fwd.wh_{gate}"),
            init.weight(d_hidden, d_hidden),
        );
        params.insert(format!("enc.lstm0.fwd.b_{gate}"), init.zeros(&[d_hidden]));
    }
    randomize_uniform(&mut params, seed ^ 1, 0.8);
    let checked_values = params.value_count();
    let report = grad_check(&params, GRAD_EPS, |tape, bind| {
        let ids = lstm_ids(bind, 0, "fwd");
        let x = tape.leaf(Tensor::vector(vec![0.4, -0.8, 1.2, 0.1]));
        let h0 = tape.leaf(Tensor::vector(vec![0.2, -0.1, 0.5]));
        let c0 = tape.leaf(Tensor::vector(vec![-0.3, 0.7, 0.0]));
        let (h, c) = encoder::lstm_cell(tape, &ids, x, h0, c0)?;
        let hs = tape.sum(h);
        let cs = tape.sum(c);
        tape.add(hs, cs)
    })?;
    Ok(ComponentCheck {
        name: "lstm-cell",
        max_rel_err: report.max_rel_err,
        checked_values,
    })
}

fn lstm_ids(bind: &crate::tensor::Bindings, layer: usize, dir: &str) -> LstmDirIds {
    let id = |kind: &str, gate: &str| bind.id(&format!("enc.lstm{layer}.{dir}.{kind}_{gate}"));
    LstmDirIds {
        wx: ["i", "f", "g", "o"].map(|g| id("wx", g)),
        wh: ["i", "f", "g", "o"].map(|g| id("wh", g)),
        b: ["i", "f", "g", "o"].map(|g| id("b", g)),
    }
}

/// Gradient check of the full bidirectional stack on a 4-token sequence.
pub fn check_bilstm(seed: u64) -> Result<ComponentCheck, TrainError> {
    let cfg = EncoderConfig {
        d_word: 3,
        d_type: 2,
        d_hidden: 3,
        layers: 1,
    };
    let mut params = ParamSet::new();
    let mut init = Initializer::new(seed);
    encoder::init_params(&mut params, &mut init, &cfg, 6, 3);
    randomize_uniform(&mut params, seed ^ 2, 0.7);
    let checked_values = params.value_count();
    let report = grad_check(&params, GRAD_EPS, move |tape, bind| {
        let ids = EncoderIds::from_bindings(bind, &cfg);
        let xs = encoder::embed_tokens(tape, ids.word, ids.typ, &[0, 3, 5, 2], &[0, 1, 2, 0])?;
        let states = encoder::bilstm_encode(tape, &ids, &cfg, &xs)?;
        let sums: Vec<NodeId> = states.iter().map(|&s| tape.sum(s)).collect();
        let cat = tape.concat(&sums)?;
        tape.logsumexp(cat)
    })?;
    Ok(ComponentCheck {
        name: "bilstm",
        max_rel_err: report.max_rel_err,
        checked_values,
    })
}

/// Gradient check of one multi-head attention layer over a 4-node graph.
pub fn check_gat_layer(seed: u64) -> Result<ComponentCheck, TrainError> {
    let cfg = GatConfig {
        layers: 1,
        heads: 2,
        hidden: 3,
        d_in: 4,
        d_out: 3,
        leaky_slope: 0.2,
        mode: GatMode::WeightedRenorm,
    };
    let structure = ring_structure(4, 0.3);
    let mut params = ParamSet::new();
    let mut init = Initializer::new(seed);
    gat::init_params(&mut params, &mut init, &cfg, 4);
    randomize_uniform(&mut params, seed ^ 3, 0.7);
    let checked_values = params.value_count();
    let report = grad_check(&params, GRAD_EPS, move |tape, bind| {
        let ids = GatIds::from_bindings(bind, &cfg);
        let out = gat::propagate(tape, &ids, &structure, &cfg)?;
        let squashed = tape.tanh(out);
        Ok(tape.sum(squashed))
    })?;
    Ok(ComponentCheck {
        name: "gat-layer",
        max_rel_err: report.max_rel_err,
        checked_values,
    })
}

fn ring_structure(n: usize, p: f64) -> GatStructure {
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        weights[i * n + i] = 1.0 - p;
        weights[i * n + (i + 1) % n] = p / 2.0;
        weights[i * n + (i + n - 1) % n] = p / 2.0;
    }
    GatStructure::from_weights(n, weights)
}

/// Two hand-written documents over three relations; the first carries a
/// two-relation pair.
pub fn fixture_corpus() -> Corpus {
    let json = r#"[
        {
            "title": "fixture-0",
            "sents": [["the", "lab", "in", "osten", "grew"], ["osten", "cited", "lab"]],
            "vertexSet": [
                [{"name": "lab", "sent_id": 0, "pos": [1, 2], "type": "ORG"},
                 {"name": "lab", "sent_id": 1, "pos": [2, 3], "type": "ORG"}],
                [{"name": "osten", "sent_id": 0, "pos": [3, 4], "type": "LOC"},
                 {"name": "osten", "sent_id": 1, "pos": [0, 1], "type": "LOC"}],
                [{"name": "grew", "sent_id": 0, "pos": [4, 5], "type": "MISC"}]
            ],
            "labels": [
                {"h": 0, "t": 1, "r": "Ra", "evidence": [0]},
                {"h": 0, "t": 1, "r": "Rb", "evidence": [0, 1]},
                {"h": 2, "t": 1, "r": "Rc", "evidence": [0]}
            ]
        },
        {
            "title": "fixture-1",
            "sents": [["pia", "met", "the", "lab"]],
            "vertexSet": [
                [{"name": "pia", "sent_id": 0, "pos": [0, 1], "type": "PER"}],
                [{"name": "lab", "sent_id": 0, "pos": [3, 4], "type": "ORG"}]
            ],
            "labels": [{"h": 0, "t": 1, "r": "Ra", "evidence": [0]}]
        }
    ]"#;
    Corpus::from_json_str(json).expect("fixture corpus is valid")
}

fn check_scale_model_cfg() -> ModelConfig {
    ModelConfig {
        d_word: 3,
        d_type: 2,
        d_hidden: 2,
        lstm_layers: 1,
        d_rel: 3,
        gat_layers: 2,
        gat_heads: 2,
        gat_hidden: 2,
        leaky_slope: 0.2,
        gat_mode: GatMode::WeightedRenorm,
        correlation: CorrelationMode::Graph,
        bilinear_blocks: 1,
        ln_eps: 1e-5,
    }
}

/// Gradient check of the complete loss (encoder, propagation, bilinear
/// scoring, and the thresholding loss) on the two-document fixture, over
/// every parameter of the model.
pub fn check_full_model(seed: u64) -> Result<ComponentCheck, TrainError> {
    let corpus = fixture_corpus();
    let vocab = RelationVocab::from_corpus(&corpus);
    let graph = CorrelationGraph::build(
        &corpus,
        &vocab,
        GraphParams {
            tau: 0,
            delta: 0.05,
            p: 0.3,
        },
    )?;
    let prepared = Prepared::new(&corpus, vocab, &graph)?;
    let docs: Vec<DocTokens> = corpus
        .docs
        .iter()
        .map(|d| DocTokens::build(d, &prepared.words, &prepared.types))
        .collect();
    let gold: Vec<_> = corpus
        .docs
        .iter()
        .map(|d| entity_pair_labels(d, &prepared.vocab))
        .collect::<Result<Vec<_>, _>>()?;

    let mut model = Model::init(
        check_scale_model_cfg(),
        prepared.vocab.len(),
        prepared.words.len(),
        prepared.types.len(),
        seed,
    )?;
    randomize_uniform(&mut model.params, seed ^ 4, 0.6);
    let checked_values = model.params.value_count();

    let structure = prepared.structure.clone();
    let shell = model.clone();
    let report = grad_check(&model.params, GRAD_EPS, move |tape, bind| {
        let ids = shell.ids(bind);
        let to_tensor = |e: crate::model::ModelError| match e {
            crate::model::ModelError::Tensor(t) => t,
            other => panic!("unexpected model error in grad check: {other}"),
        };
        let relmat = shell
            .relation_matrix(tape, &ids, &structure)
            .map_err(to_tensor)?;
        let mut terms = Vec::new();
        for (doc, labels) in docs.iter().zip(&gold) {
            let entities = shell.entity_features(tape, &ids, doc).map_err(to_tensor)?;
            for s in 0..entities.len() {
                for o in 0..entities.len() {
                    if s == o {
                        continue;
                    }
                    let empty = BTreeSet::new();
                    let gold_set = labels.get(&(s, o)).unwrap_or(&empty);
                    let logits = shell
                        .pair_logit_nodes(tape, &ids, relmat, entities[s], entities[o])
                        .map_err(to_tensor)?;
                    terms.push(
                        pair_loss(tape, &logits, gold_set, LossKind::Mat, 0.4)
                            .map_err(to_tensor)?,
                    );
                }
            }
        }
        let stacked = tape.concat(&terms)?;
        let total = tape.sum(stacked);
        Ok(tape.scale(total, 1.0 / terms.len() as f64))
    })?;
    Ok(ComponentCheck {
        name: "full-model",
        max_rel_err: report.max_rel_err,
        checked_values,
    })
}

/// Runs all four checks in order.
pub fn run_all(seed: u64) -> Result<Vec<ComponentCheck>, TrainError> {
    Ok(vec![
        check_lstm_cell(seed)?,
        check_bilstm(seed)?,
        check_gat_layer(seed)?,
        check_full_model(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstm_cell_check_passes() {
        let check = check_lstm_cell(11).unwrap();
        assert!(check.passed(), "{}", check.max_rel_err);
    }

    #[test]
    fn full_model_check_passes() {
        let check = check_full_model(11).unwrap();
        assert!(check.passed(), "{}", check.max_rel_err);
        assert!(check.checked_values > 300);
    }
}
