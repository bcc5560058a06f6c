//! The assembled model: one parameter set spanning encoder, relation
//! propagation, and classifier, with forward passes for scoring and loss.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierConfig, ClassifierError, ClassifierIds, PairScores};
use crate::encoder::{self, DocTokens, EncoderConfig, EncoderIds};
use crate::gat::{self, GatConfig, GatIds, GatMode, GatStructure};
use crate::tensor::{Bindings, Initializer, NodeId, ParamSet, Tape, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("model configuration: {0}")]
    Config(String),
}

/// Whether relation features pass through the correlation graph at all.
/// `Bypass` feeds the raw embeddings to the classifier, which is the
/// no-correlation-module ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMode {
    Graph,
    Bypass,
}

/// Every architectural knob in one place. Defaults follow the realistic
/// configuration; tests shrink the dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_word: usize,
    pub d_type: usize,
    pub d_hidden: usize,
    pub lstm_layers: usize,
    pub d_rel: usize,
    pub gat_layers: usize,
    pub gat_heads: usize,
    pub gat_hidden: usize,
    pub leaky_slope: f64,
    pub gat_mode: GatMode,
    pub correlation: CorrelationMode,
    pub bilinear_blocks: usize,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_word: 100,
            d_type: 20,
            d_hidden: 128,
            lstm_layers: 1,
            d_rel: 500,
            gat_layers: 2,
            gat_heads: 2,
            gat_hidden: 500,
            leaky_slope: 0.2,
            gat_mode: GatMode::WeightedRenorm,
            correlation: CorrelationMode::Graph,
            bilinear_blocks: 1,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Entity feature width: both BiLSTM directions.
    pub fn d_entity(&self) -> usize {
        2 * self.d_hidden
    }

    /// Relation-embedding width actually used; bypass mode must match the
    /// entity width because the raw features feed the projections.
    pub fn effective_d_rel(&self) -> usize {
        match self.correlation {
            CorrelationMode::Graph => self.d_rel,
            CorrelationMode::Bypass => self.d_entity(),
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            d_word: self.d_word,
            d_type: self.d_type,
            d_hidden: self.d_hidden,
            layers: self.lstm_layers,
        }
    }

    pub fn gat(&self) -> GatConfig {
        GatConfig {
            layers: self.gat_layers,
            heads: self.gat_heads,
            hidden: self.gat_hidden,
            d_in: self.effective_d_rel(),
            d_out: self.d_entity(),
            leaky_slope: self.leaky_slope,
            mode: self.gat_mode,
        }
    }

    pub fn classifier(&self, r: usize) -> ClassifierConfig {
        ClassifierConfig {
            d_entity: self.d_entity(),
            r,
            blocks: self.bilinear_blocks,
            ln_eps: self.ln_eps,
        }
    }

    pub fn validate(&self, r: usize) -> Result<(), ModelError> {
        for (name, v) in [
            ("d_word", self.d_word),
            ("d_type", self.d_type),
            ("d_hidden", self.d_hidden),
            ("lstm_layers", self.lstm_layers),
            ("gat_heads", self.gat_heads),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.correlation == CorrelationMode::Graph && self.gat_layers > 0 && self.gat_hidden == 0
        {
            return Err(ModelError::Config("gat_hidden must be positive".into()));
        }
        self.classifier(r).block_width()?;
        Ok(())
    }
}

/// Parameters plus the sizes they were built for.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamSet,
    pub r: usize,
    pub n_words: usize,
    pub n_types: usize,
}

/// Tape handles for one forward pass over the whole model.
#[derive(Clone, Debug)]
pub struct ModelIds {
    pub encoder: EncoderIds,
    pub gat: GatIds,
    pub classifier: ClassifierIds,
}

impl Model {
    pub fn init(
        cfg: ModelConfig,
        r: usize,
        n_words: usize,
        n_types: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        cfg.validate(r)?;
        let mut params = ParamSet::new();
        let mut init = Initializer::new(seed);
        encoder::init_params(&mut params, &mut init, &cfg.encoder(), n_words, n_types);
        match cfg.correlation {
            CorrelationMode::Graph => gat::init_params(&mut params, &mut init, &cfg.gat(), r),
            CorrelationMode::Bypass => {
                params.insert(
                    "rel.feat",
                    gat::init_relation_features(&mut init, r, cfg.effective_d_rel()),
                );
            }
        }
        classifier::init_params(&mut params, &mut init, &cfg.classifier(r))?;
        Ok(Model {
            cfg,
            params,
            r,
            n_words,
            n_types,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> (Bindings, ModelIds) {
        let bind = Bindings::bind(tape, &self.params);
        let ids = self.ids(&bind);
        (bind, ids)
    }

    pub fn ids(&self, bind: &Bindings) -> ModelIds {
        ModelIds {
            encoder: EncoderIds::from_bindings(bind, &self.cfg.encoder()),
            gat: match self.cfg.correlation {
                CorrelationMode::Graph => GatIds::from_bindings(bind, &self.cfg.gat()),
                CorrelationMode::Bypass => GatIds {
                    features: bind.id("rel.feat"),
                    layers: Vec::new(),
                    proj: None,
                },
            },
            classifier: ClassifierIds::from_bindings(bind, &self.cfg.classifier(self.r)),
        }
    }

    /// The transformed relation matrix consumed by the projections: GAT
    /// output in graph mode, the raw features in bypass mode.
    pub fn relation_matrix(
        &self,
        tape: &mut Tape,
        ids: &ModelIds,
        structure: &GatStructure,
    ) -> Result<NodeId, ModelError> {
        match self.cfg.correlation {
            CorrelationMode::Graph => {
                Ok(gat::propagate(tape, &ids.gat, structure, &self.cfg.gat())?)
            }
            CorrelationMode::Bypass => Ok(ids.gat.features),
        }
    }

    /// Pooled feature vector per entity.
    pub fn entity_features(
        &self,
        tape: &mut Tape,
        ids: &ModelIds,
        doc: &DocTokens,
    ) -> Result<Vec<NodeId>, ModelError> {
        Ok(encoder::encode_entities(
            tape,
            &ids.encoder,
            &self.cfg.encoder(),
            doc,
        )?)
    }

    /// Logit nodes (TH last) for one ordered entity pair.
    pub fn pair_logit_nodes(
        &self,
        tape: &mut Tape,
        ids: &ModelIds,
        relmat: NodeId,
        subject: NodeId,
        object: NodeId,
    ) -> Result<Vec<NodeId>, ModelError> {
        let cfg = self.cfg.classifier(self.r);
        let subject_proj = classifier::project(
            tape,
            relmat,
            subject,
            ids.classifier.subj_gain,
            ids.classifier.subj_bias,
            cfg.ln_eps,
        )?;
        let object_proj = classifier::project(
            tape,
            relmat,
            object,
            ids.classifier.obj_gain,
            ids.classifier.obj_bias,
            cfg.ln_eps,
        )?;
        Ok(classifier::pair_logits(
            tape,
            subject,
            subject_proj,
            object,
            object_proj,
            &ids.classifier,
            &cfg,
        )?)
    }

    /// Scores every ordered entity pair of a document on a throwaway tape.
    pub fn score_document(
        &self,
        doc: &DocTokens,
        structure: &GatStructure,
    ) -> Result<BTreeMap<(usize, usize), PairScores>, ModelError> {
        let mut tape = Tape::new();
        let (_, ids) = self.bind(&mut tape);
        let relmat = self.relation_matrix(&mut tape, &ids, structure)?;
        let entities = self.entity_features(&mut tape, &ids, doc)?;
        let mut scores = BTreeMap::new();
        for s in 0..entities.len() {
            for o in 0..entities.len() {
                if s == o {
                    continue;
                }
                let logits =
                    self.pair_logit_nodes(&mut tape, &ids, relmat, entities[s], entities[o])?;
                scores.insert(
                    (s, o),
                    PairScores {
                        logits: logits.iter().map(|&l| tape.value(l).item()).collect(),
                    },
                );
            }
        }
        Ok(scores)
    }
}

/// Which loss trains the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Multi-relation adaptive thresholding: all golds pushed above TH
    /// jointly.
    Mat,
    /// Per-positive adaptive thresholding baseline.
    At,
}

/// Loss node for one pair given its gold label set.
pub fn pair_loss(
    tape: &mut Tape,
    logits: &[NodeId],
    gold: &BTreeSet<usize>,
    kind: LossKind,
    alpha: f64,
) -> Result<NodeId, ModelError> {
    match kind {
        LossKind::Mat => {
            let lp = classifier::mat_loss_positive(tape, logits, gold)?;
            let ln = classifier::mat_loss_negative(tape, logits, gold)?;
            Ok(classifier::total_loss(tape, lp, ln, alpha)?)
        }
        LossKind::At => Ok(classifier::at_loss(tape, logits, gold)?),
    }
}
