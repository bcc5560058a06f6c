//! Document encoder: embedding concatenation, BiLSTM contextualization,
//! mention max-pooling, and entity log-sum-exp pooling.

use std::fs;
use std::path::Path;

use crate::data::{DataError, Document, TokenVocab, TypeVocab, NONE_TYPE_ID};
use crate::tensor::{Bindings, Initializer, NodeId, ParamSet, Tape, Tensor, TensorError};

/// Encoder dimensions. The contextual width is 2·`d_hidden` (one LSTM
/// direction each way).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub d_word: usize,
    pub d_type: usize,
    pub d_hidden: usize,
    pub layers: usize,
}

impl EncoderConfig {
    pub fn d_out(&self) -> usize {
        2 * self.d_hidden
    }

    pub fn d_in(&self) -> usize {
        self.d_word + self.d_type
    }
}

const GATES: [&str; 4] = ["i", "f", "g", "o"];
const DIRS: [&str; 2] = ["fwd", "bwd"];

/// Registers the word table, type table, and per-direction LSTM weights.
pub fn init_params(
    params: &mut ParamSet,
    init: &mut Initializer,
    cfg: &EncoderConfig,
    n_words: usize,
    n_types: usize,
) {
    params.insert("enc.word", init.embedding(n_words, cfg.d_word));
    params.insert("enc.type", init.embedding(n_types, cfg.d_type));
    for layer in 0..cfg.layers {
        let d_in = if layer == 0 { cfg.d_in() } else { cfg.d_out() };
        for dir in DIRS {
            for gate in GATES {
                let stem = format!("enc.lstm{layer}.{dir}");
                params.insert(format!("{stem}.wx_{gate}"), init.weight(cfg.d_hidden, d_in));
                params.insert(
                    format!("{stem}.wh_{gate}"),
                    init.weight(cfg.d_hidden, cfg.d_hidden),
                );
                params.insert(format!("{stem}.b_{gate}"), init.zeros(&[cfg.d_hidden]));
            }
        }
    }
}

/// Tape handles for one LSTM direction: input weights, recurrent weights,
/// and biases per gate, ordered i, f, g, o.
#[derive(Clone, Copy, Debug)]
pub struct LstmDirIds {
    pub wx: [NodeId; 4],
    pub wh: [NodeId; 4],
    pub b: [NodeId; 4],
}

impl LstmDirIds {
    fn from_bindings(bind: &Bindings, layer: usize, dir: &str) -> Self {
        let id = |kind: &str, gate: &str| bind.id(&format!("enc.lstm{layer}.{dir}.{kind}_{gate}"));
        LstmDirIds {
            wx: GATES.map(|g| id("wx", g)),
            wh: GATES.map(|g| id("wh", g)),
            b: GATES.map(|g| id("b", g)),
        }
    }
}

/// Tape handles for the whole encoder.
#[derive(Clone, Debug)]
pub struct EncoderIds {
    pub word: NodeId,
    pub typ: NodeId,
    pub layers: Vec<(LstmDirIds, LstmDirIds)>,
}

impl EncoderIds {
    pub fn from_bindings(bind: &Bindings, cfg: &EncoderConfig) -> Self {
        EncoderIds {
            word: bind.id("enc.word"),
            typ: bind.id("enc.type"),
            layers: (0..cfg.layers)
                .map(|l| {
                    (
                        LstmDirIds::from_bindings(bind, l, "fwd"),
                        LstmDirIds::from_bindings(bind, l, "bwd"),
                    )
                })
                .collect(),
        }
    }
}

/// One LSTM step: gates from the input and previous hidden state, then the
/// usual cell/hidden update.
pub fn lstm_cell(
    tape: &mut Tape,
    p: &LstmDirIds,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId), TensorError> {
    let mut pre = [x; 4];
    for (k, slot) in pre.iter_mut().enumerate() {
        let from_x = tape.matvec(p.wx[k], x)?;
        let from_h = tape.matvec(p.wh[k], h_prev)?;
        let s = tape.add(from_x, from_h)?;
        *slot = tape.add(s, p.b[k])?;
    }
    let input_gate = tape.sigmoid(pre[0]);
    let forget_gate = tape.sigmoid(pre[1]);
    let candidate = tape.tanh(pre[2]);
    let output_gate = tape.sigmoid(pre[3]);

    let keep = tape.mul(forget_gate, c_prev)?;
    let write = tape.mul(input_gate, candidate)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c);
    let h = tape.mul(output_gate, c_act)?;
    Ok((h, c))
}

fn lstm_direction(
    tape: &mut Tape,
    p: &LstmDirIds,
    inputs: &[NodeId],
    d_hidden: usize,
    reverse: bool,
) -> Result<Vec<NodeId>, TensorError> {
    let mut h = tape.leaf(Tensor::zeros(&[d_hidden]));
    let mut c = tape.leaf(Tensor::zeros(&[d_hidden]));
    let mut states = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let (nh, nc) = lstm_cell(tape, p, inputs[t], h, c)?;
        h = nh;
        c = nc;
        states[t] = h;
    }
    Ok(states)
}

/// Runs the stacked BiLSTM and concatenates the two directions per
/// position; each output state has width 2·d_hidden.
pub fn bilstm_encode(
    tape: &mut Tape,
    enc: &EncoderIds,
    cfg: &EncoderConfig,
    inputs: &[NodeId],
) -> Result<Vec<NodeId>, TensorError> {
    if inputs.is_empty() {
        return Err(TensorError::Empty {
            op: "bilstm_encode",
        });
    }
    let mut current = inputs.to_vec();
    for (fwd, bwd) in &enc.layers {
        let forward = lstm_direction(tape, fwd, &current, cfg.d_hidden, false)?;
        let backward = lstm_direction(tape, bwd, &current, cfg.d_hidden, true)?;
        current = forward
            .iter()
            .zip(&backward)
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect::<Result<_, _>>()?;
    }
    Ok(current)
}

/// One embedding vector per token: word row concatenated with type row.
pub fn embed_tokens(
    tape: &mut Tape,
    word_table: NodeId,
    type_table: NodeId,
    token_ids: &[usize],
    type_ids: &[usize],
) -> Result<Vec<NodeId>, TensorError> {
    debug_assert_eq!(token_ids.len(), type_ids.len());
    token_ids
        .iter()
        .zip(type_ids)
        .map(|(&tok, &ty)| {
            let w = tape.embed_row(word_table, tok)?;
            let t = tape.embed_row(type_table, ty)?;
            tape.concat(&[w, t])
        })
        .collect()
}

/// Coordinate-wise maximum of the contextual states inside a mention span.
pub fn mention_pool(
    tape: &mut Tape,
    states: &[NodeId],
    start: usize,
    end: usize,
) -> Result<NodeId, TensorError> {
    if start >= end || end > states.len() {
        return Err(TensorError::Slice {
            start,
            end,
            len: states.len(),
        });
    }
    tape.max_stack(&states[start..end])
}

/// Coordinate-wise log-sum-exp over a nonempty set of mention vectors.
pub fn entity_pool(tape: &mut Tape, mentions: &[NodeId]) -> Result<NodeId, TensorError> {
    if mentions.is_empty() {
        return Err(TensorError::Empty { op: "entity_pool" });
    }
    tape.lse_stack(mentions)
}

/// A document flattened to one token sequence, with per-token type ids and
/// global mention spans per entity.
#[derive(Clone, Debug, PartialEq)]
pub struct DocTokens {
    pub token_ids: Vec<usize>,
    pub type_ids: Vec<usize>,
    /// Half-open global spans of every mention, grouped by entity.
    pub mentions: Vec<Vec<(usize, usize)>>,
}

impl DocTokens {
    pub fn build(doc: &Document, words: &TokenVocab, types: &TypeVocab) -> Self {
        let mut offsets = Vec::with_capacity(doc.sents.len());
        let mut token_ids = Vec::new();
        for sent in &doc.sents {
            offsets.push(token_ids.len());
            token_ids.extend(sent.iter().map(|t| words.id(t)));
        }
        let mut type_ids = vec![NONE_TYPE_ID; token_ids.len()];
        let mut mentions = Vec::with_capacity(doc.entities.len());
        for entity in &doc.entities {
            let mut spans = Vec::with_capacity(entity.mentions.len());
            for m in &entity.mentions {
                let start = offsets[m.sent_id] + m.pos.0;
                let end = offsets[m.sent_id] + m.pos.1;
                let ty = types.id(&m.entity_type);
                for slot in &mut type_ids[start..end] {
                    *slot = ty;
                }
                spans.push((start, end));
            }
            mentions.push(spans);
        }
        DocTokens {
            token_ids,
            type_ids,
            mentions,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Full encoder pass: one pooled feature vector per entity.
pub fn encode_entities(
    tape: &mut Tape,
    enc: &EncoderIds,
    cfg: &EncoderConfig,
    doc: &DocTokens,
) -> Result<Vec<NodeId>, TensorError> {
    let embedded = embed_tokens(tape, enc.word, enc.typ, &doc.token_ids, &doc.type_ids)?;
    let states = bilstm_encode(tape, enc, cfg, &embedded)?;
    doc.mentions
        .iter()
        .map(|spans| {
            let pooled: Vec<NodeId> = spans
                .iter()
                .map(|&(s, e)| mention_pool(tape, &states, s, e))
                .collect::<Result<_, _>>()?;
            entity_pool(tape, &pooled)
        })
        .collect()
}

/// Seeds word-table rows from a text embedding file: one token per line,
/// the token followed by `d_word` space-separated floats. Returns how many
/// vocabulary rows were covered.
pub fn load_embedding_file(
    path: impl AsRef<Path>,
    vocab: &TokenVocab,
    d_word: usize,
    table: &mut Tensor,
) -> Result<usize, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut loaded = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("nonempty line");
        let values: Vec<f64> = parts.map(|p| p.parse().unwrap_or(0.0)).collect();
        if values.len() != d_word {
            return Err(DataError::Validation {
                title: path.display().to_string(),
                detail: format!(
                    "embedding line {} carries {} values, expected {d_word}",
                    lineno + 1,
                    values.len()
                ),
            });
        }
        let id = vocab.id(token);
        if id != crate::data::UNK_ID || token == vocab.token(crate::data::UNK_ID) {
            table.data_mut()[id * d_word..(id + 1) * d_word].copy_from_slice(&values);
            loaded += 1;
        }
    }
    Ok(loaded)
}
