//! End-to-end training: document batches, pair sampling, the Adam update
//! with gradient clipping, loss tracing, prediction, and checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{ClassifierError, PairScores};
use crate::data::{entity_pair_labels, Corpus, DataError, RelationVocab, TokenVocab, TypeVocab};
use crate::encoder::DocTokens;
use crate::eval::{evaluate, sort_predictions, EvalError, Prediction};
use crate::gat::GatStructure;
use crate::graph::{CorrelationGraph, GraphError};
use crate::model::{pair_loss, LossKind, Model, ModelConfig, ModelError};
use crate::tensor::{ParamSet, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training configuration: {0}")]
    Config(String),
    #[error("corpus vocabulary does not match the graph relations")]
    VocabMismatch,
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint is inconsistent: {0}")]
    Checkpoint(String),
}

/// Optimization and sampling knobs. The two learning rates split the
/// embedding/encoder parameters from the head, mirroring the usual
/// fine-tuning setup; with the defaults both sides train at 1e-3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Documents per optimizer step.
    pub batch_docs: usize,
    pub lr_encoder: f64,
    pub lr_head: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Keep-probability for relation-free entity pairs, in (0, 1].
    pub neg_rate: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub alpha: f64,
    pub theta: f64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            epochs: 30,
            batch_docs: 4,
            lr_encoder: 1e-3,
            lr_head: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            neg_rate: 0.25,
            clip_norm: 1.0,
            alpha: 0.4,
            theta: 0.85,
            loss: LossKind::Mat,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.into()));
        if self.lr_encoder <= 0.0 || self.lr_head <= 0.0 {
            return bad("learning rates must be positive");
        }
        if !(self.neg_rate > 0.0 && self.neg_rate <= 1.0) {
            return bad("neg_rate must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.theta < 0.0 {
            return bad("theta must be nonnegative");
        }
        if self.batch_docs == 0 {
            return bad("batch_docs must be positive");
        }
        Ok(())
    }
}

/// First-order optimizer with per-parameter moment buffers.
pub struct Adam {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Adam {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    /// One update over all parameters; `lr_for` picks the learning rate by
    /// parameter name.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Vec<f64>>,
        lr_for: impl Fn(&str) -> f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, grad) in grads {
            let lr = lr_for(name);
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let data = params.get_mut(name).data_mut();
            for k in 0..grad.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                data[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Scales all gradients so their global L2 norm does not exceed `clip`.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Vec<f64>>, clip: f64) -> f64 {
    let norm: f64 = grads
        .values()
        .flat_map(|g| g.iter().map(|x| x * x))
        .sum::<f64>()
        .sqrt();
    if norm > clip && norm > 0.0 {
        let scale = clip / norm;
        for g in grads.values_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<EpochStats>,
}

/// Everything derived from a corpus that training and prediction need.
pub struct Prepared {
    pub vocab: RelationVocab,
    pub words: TokenVocab,
    pub types: TypeVocab,
    pub structure: GatStructure,
}

impl Prepared {
    pub fn new(
        corpus: &Corpus,
        vocab: RelationVocab,
        graph: &CorrelationGraph,
    ) -> Result<Self, TrainError> {
        if !graph.matches_vocab(&vocab) {
            return Err(TrainError::VocabMismatch);
        }
        Ok(Prepared {
            words: TokenVocab::from_corpus(corpus),
            types: TypeVocab::from_corpus(corpus),
            structure: GatStructure::from_graph(graph),
            vocab,
        })
    }
}

/// Ordered entity pairs to train on for one document: every gold pair plus
/// a `neg_rate` sample of the relation-free ones.
fn sample_pairs(
    n_entities: usize,
    gold: &BTreeMap<(usize, usize), BTreeSet<usize>>,
    neg_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<((usize, usize), BTreeSet<usize>)> {
    let mut pairs = Vec::new();
    for s in 0..n_entities {
        for o in 0..n_entities {
            if s == o {
                continue;
            }
            match gold.get(&(s, o)) {
                Some(set) => pairs.push(((s, o), set.clone())),
                None => {
                    if rng.gen::<f64>() < neg_rate {
                        pairs.push(((s, o), BTreeSet::new()));
                    }
                }
            }
        }
    }
    pairs
}

/// Trains a fresh model on `corpus` under `graph`. Deterministic for a
/// fixed config: the same seed yields the same trace and parameters.
pub fn train(
    corpus: &Corpus,
    graph: &CorrelationGraph,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    dev: Option<&Corpus>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let vocab = RelationVocab::from_corpus(corpus);
    let prepared = Prepared::new(corpus, vocab, graph)?;
    let model = Model::init(
        model_cfg,
        prepared.vocab.len(),
        prepared.words.len(),
        prepared.types.len(),
        cfg.seed,
    )?;
    train_model(model, corpus, &prepared, cfg, dev)
}

/// Trains an already initialized model in place; used by the ablation
/// harness to share initialization across variants.
pub fn train_model(
    mut model: Model,
    corpus: &Corpus,
    prepared: &Prepared,
    cfg: TrainConfig,
    dev: Option<&Corpus>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let docs: Vec<DocTokens> = corpus
        .docs
        .iter()
        .map(|d| DocTokens::build(d, &prepared.words, &prepared.types))
        .collect();
    let gold: Vec<BTreeMap<(usize, usize), BTreeSet<usize>>> = corpus
        .docs
        .iter()
        .map(|d| entity_pair_labels(d, &prepared.vocab))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_cafe);
    let mut adam = Adam::new(&cfg);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let lr_for = |name: &str| {
        if name.starts_with("enc.") {
            cfg.lr_encoder
        } else {
            cfg.lr_head
        }
    };

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_pairs = 0usize;

        for batch in order.chunks(cfg.batch_docs) {
            let mut tape = Tape::new();
            let (bind, ids) = model.bind(&mut tape);
            let relmat = model.relation_matrix(&mut tape, &ids, &prepared.structure)?;

            let mut terms = Vec::new();
            for &di in batch {
                if docs[di].is_empty() || corpus.docs[di].entities.is_empty() {
                    continue;
                }
                let pairs = sample_pairs(
                    corpus.docs[di].entities.len(),
                    &gold[di],
                    cfg.neg_rate,
                    &mut rng,
                );
                if pairs.is_empty() {
                    continue;
                }
                let entities = model.entity_features(&mut tape, &ids, &docs[di])?;
                for ((s, o), labels) in pairs {
                    let logits = model.pair_logit_nodes(
                        &mut tape,
                        &ids,
                        relmat,
                        entities[s],
                        entities[o],
                    )?;
                    terms.push(pair_loss(&mut tape, &logits, &labels, cfg.loss, cfg.alpha)?);
                }
            }
            if terms.is_empty() {
                continue;
            }
            let stacked = tape.concat(&terms)?;
            let total = tape.sum(stacked);
            let batch_loss = tape.scale(total, 1.0 / terms.len() as f64);
            tape.backward(batch_loss)?;

            epoch_loss += tape.value(total).item();
            epoch_pairs += terms.len();

            let mut grads: BTreeMap<String, Vec<f64>> = bind
                .iter()
                .map(|(name, &id)| (name.clone(), tape.grad(id).expect("backward ran").to_vec()))
                .collect();
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(&mut model.params, &grads, lr_for);
        }

        let mean_loss = if epoch_pairs == 0 {
            0.0
        } else {
            epoch_loss / epoch_pairs as f64
        };
        let dev_f1 = match dev {
            Some(dev_corpus) => {
                let preds = predict_corpus(&model, prepared, dev_corpus, cfg.theta)?;
                Some(evaluate(&preds, dev_corpus, None)?.f1)
            }
            None => None,
        };
        trace.push(EpochStats {
            epoch,
            mean_loss,
            dev_f1,
        });
    }
    Ok(TrainOutcome { model, trace })
}

/// Scores every ordered pair of every document and keeps the classes that
/// clear the adaptive threshold at `theta`.
pub fn predict_corpus(
    model: &Model,
    prepared: &Prepared,
    corpus: &Corpus,
    theta: f64,
) -> Result<Vec<Prediction>, TrainError> {
    let mut out = Vec::new();
    for doc in &corpus.docs {
        let tokens = DocTokens::build(doc, &prepared.words, &prepared.types);
        if tokens.is_empty() || doc.entities.is_empty() {
            continue;
        }
        let scores = model.score_document(&tokens, &prepared.structure)?;
        for ((s, o), pair) in scores {
            for class in pair.predict(theta) {
                out.push(Prediction {
                    title: doc.title.clone(),
                    h_idx: s,
                    t_idx: o,
                    r: prepared.vocab.code(class).to_string(),
                    score: Some(pair.probability(class)),
                });
            }
        }
    }
    sort_predictions(&mut out);
    Ok(out)
}

/// Pair scores of one document, keyed by ordered entity pair.
pub type DocScores = BTreeMap<(usize, usize), PairScores>;

/// Scores for every ordered pair, keyed by document title; feeds the
/// theta-sweep.
pub fn score_corpus(
    model: &Model,
    prepared: &Prepared,
    corpus: &Corpus,
) -> Result<Vec<(String, DocScores)>, TrainError> {
    let mut out = Vec::new();
    for doc in &corpus.docs {
        let tokens = DocTokens::build(doc, &prepared.words, &prepared.types);
        if tokens.is_empty() || doc.entities.is_empty() {
            continue;
        }
        out.push((
            doc.title.clone(),
            model.score_document(&tokens, &prepared.structure)?,
        ));
    }
    Ok(out)
}

/// Turns cached pair scores into prediction tuples at a given theta.
pub fn decode_scores(
    scored: &[(String, DocScores)],
    vocab: &RelationVocab,
    theta: f64,
) -> Vec<Prediction> {
    let mut out = Vec::new();
    for (title, pairs) in scored {
        for ((s, o), pair) in pairs {
            for class in pair.predict(theta) {
                out.push(Prediction {
                    title: title.clone(),
                    h_idx: *s,
                    t_idx: *o,
                    r: vocab.code(class).to_string(),
                    score: Some(pair.probability(class)),
                });
            }
        }
    }
    sort_predictions(&mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SavedTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Everything needed to reload and run a trained model: configuration,
/// vocabularies, the correlation graph (with an integrity hash), and the
/// parameter payload. The JSON serialization round-trips byte-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub relations: Vec<String>,
    pub words: Vec<String>,
    pub types: Vec<String>,
    pub graph: CorrelationGraph,
    pub graph_sha256: String,
    params: BTreeMap<String, SavedTensor>,
}

pub fn graph_digest(graph: &CorrelationGraph) -> String {
    let mut hasher = Sha256::new();
    hasher.update(graph.to_json_string().as_bytes());
    format!("{:x}", hasher.finalize())
}

impl Checkpoint {
    pub fn capture(
        model: &Model,
        cfg: &TrainConfig,
        prepared: &Prepared,
        graph: &CorrelationGraph,
    ) -> Self {
        Checkpoint {
            model: model.cfg,
            train: *cfg,
            relations: prepared.vocab.codes().to_vec(),
            words: prepared.words.tokens().to_vec(),
            types: prepared.types.types().to_vec(),
            graph: graph.clone(),
            graph_sha256: graph_digest(graph),
            params: model
                .params
                .iter()
                .map(|(name, t)| {
                    (
                        name.clone(),
                        SavedTensor {
                            shape: t.shape().to_vec(),
                            data: t.data().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Rebuilds the model and its corpus-independent surroundings.
    pub fn restore(&self) -> Result<(Model, Prepared), TrainError> {
        if self.graph_sha256 != graph_digest(&self.graph) {
            return Err(TrainError::Checkpoint("graph hash mismatch".into()));
        }
        let vocab = RelationVocab::from_codes(self.relations.clone());
        if !self.graph.matches_vocab(&vocab) {
            return Err(TrainError::Checkpoint(
                "relations do not match the graph".into(),
            ));
        }
        let words = TokenVocab::from_list(
            &self
                .words
                .iter()
                .filter(|t| t.as_str() != "<unk>")
                .cloned()
                .collect::<Vec<_>>(),
        );
        if words.tokens() != self.words {
            return Err(TrainError::Checkpoint(
                "word vocabulary is not canonical".into(),
            ));
        }
        let types = TypeVocab::from_list(&self.types[1..]);
        if types.types() != self.types {
            return Err(TrainError::Checkpoint(
                "type vocabulary is not canonical".into(),
            ));
        }

        let mut model = Model::init(self.model, vocab.len(), words.len(), types.len(), 0)?;
        for (name, saved) in &self.params {
            let current = model
                .params
                .try_get(name)
                .ok_or_else(|| TrainError::Checkpoint(format!("unexpected parameter {name:?}")))?;
            if current.shape() != saved.shape {
                return Err(TrainError::Checkpoint(format!(
                    "parameter {name:?} has shape {:?}, expected {:?}",
                    saved.shape,
                    current.shape()
                )));
            }
            *model.params.get_mut(name) =
                Tensor::new(saved.shape.clone(), saved.data.clone()).expect("validated shape");
        }
        if self.params.len() != model.params.len() {
            return Err(TrainError::Checkpoint("parameter set mismatch".into()));
        }
        let structure = GatStructure::from_graph(&self.graph);
        Ok((
            model,
            Prepared {
                vocab,
                words,
                types,
                structure,
            },
        ))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| TrainError::Checkpoint(format!("malformed JSON: {e}")))
    }
}

/// Writes the per-epoch trace as `epoch,mean_loss,dev_f1` CSV.
pub fn write_trace(path: impl AsRef<Path>, trace: &[EpochStats]) -> Result<(), TrainError> {
    let path = path.as_ref();
    let mut out = String::from("epoch,mean_loss,dev_f1\n");
    for row in trace {
        let dev = row.dev_f1.map(|f| f.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", row.epoch, row.mean_loss, dev));
    }
    fs::write(path, out).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}
