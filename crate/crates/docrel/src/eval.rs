//! DocRED-protocol evaluation: micro precision/recall/F1 over predicted
//! (title, head, tail, relation) tuples, the train-overlap-ignoring
//! variant, and F1 restricted to pairs with a given gold label-set size.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Corpus;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction addresses unknown document title {0:?}")]
    UnknownTitle(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed predictions JSON: {0}")]
    Json(String),
}

/// One predicted relation tuple; the score is dropped in submission mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub title: String,
    pub h_idx: usize,
    pub t_idx: usize,
    pub r: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Micro-averaged tuple metrics. All 0/0 ratios are reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// F1 with correct predictions discounted when their fact (by mention
    /// surface names) already occurs in the training corpus. Present only
    /// when a training corpus was supplied.
    pub ign_f1: Option<f64>,
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

type Tuple = (String, usize, usize, String);

fn gold_tuples(corpus: &Corpus) -> BTreeSet<Tuple> {
    corpus
        .docs
        .iter()
        .flat_map(|doc| {
            doc.facts()
                .iter()
                .map(move |f| (doc.title.clone(), f.h, f.t, f.r.clone()))
        })
        .collect()
}

/// Every (head-name, tail-name, relation) combination over the training
/// facts, the key the official evaluation uses to spot shared facts.
fn train_fact_surfaces(train: &Corpus) -> BTreeSet<(String, String, String)> {
    let mut set = BTreeSet::new();
    for doc in &train.docs {
        for fact in doc.facts() {
            for hn in doc.entities[fact.h].names() {
                for tn in doc.entities[fact.t].names() {
                    set.insert((hn.to_string(), tn.to_string(), fact.r.clone()));
                }
            }
        }
    }
    set
}

/// Micro P/R/F1 over deduplicated prediction tuples. With a training
/// corpus, Ign F1 removes correct predictions whose surface-name fact also
/// occurs in training from both the correct and predicted counts, keeping
/// the recall denominator.
pub fn evaluate(
    predictions: &[Prediction],
    gold_corpus: &Corpus,
    train_corpus: Option<&Corpus>,
) -> Result<Metrics, EvalError> {
    let titles: BTreeSet<&str> = gold_corpus.docs.iter().map(|d| d.title.as_str()).collect();
    for p in predictions {
        if !titles.contains(p.title.as_str()) {
            return Err(EvalError::UnknownTitle(p.title.clone()));
        }
    }
    let predicted: BTreeSet<Tuple> = predictions
        .iter()
        .map(|p| (p.title.clone(), p.h_idx, p.t_idx, p.r.clone()))
        .collect();
    let gold = gold_tuples(gold_corpus);
    let correct: BTreeSet<&Tuple> = predicted.intersection(&gold).collect();

    let precision = ratio(correct.len(), predicted.len());
    let recall = ratio(correct.len(), gold.len());

    let ign_f1 = train_corpus.map(|train| {
        let surfaces = train_fact_surfaces(train);
        let doc_by_title: BTreeMap<&str, &crate::data::Document> = gold_corpus
            .docs
            .iter()
            .map(|d| (d.title.as_str(), d))
            .collect();
        let shared = correct
            .iter()
            .filter(|(title, h, t, r)| {
                let doc = doc_by_title[title.as_str()];
                doc.entities[*h].names().any(|hn| {
                    doc.entities[*t]
                        .names()
                        .any(|tn| surfaces.contains(&(hn.to_string(), tn.to_string(), r.clone())))
                })
            })
            .count();
        let p = ratio(correct.len() - shared, predicted.len() - shared);
        f1_of(p, recall)
    });

    Ok(Metrics {
        precision,
        recall,
        f1: f1_of(precision, recall),
        ign_f1,
        predicted: predicted.len(),
        gold: gold.len(),
        correct: correct.len(),
    })
}

/// Which pairs a restricted evaluation keeps, by gold label-set size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetSize {
    Exactly(usize),
    AtLeast(usize),
}

impl SetSize {
    fn keeps(&self, size: usize) -> bool {
        match *self {
            SetSize::Exactly(k) => size == k,
            SetSize::AtLeast(k) => size >= k,
        }
    }
}

/// Micro F1 over tuples whose (title, head, tail) pair has a gold label
/// set of the selected size. Returns `None` when no gold pair qualifies,
/// so an absent split is distinguishable from a zero score.
pub fn multi_label_f1(
    predictions: &[Prediction],
    gold_corpus: &Corpus,
    selector: SetSize,
) -> Result<Option<Metrics>, EvalError> {
    let mut pair_sizes: BTreeMap<(String, usize, usize), usize> = BTreeMap::new();
    for doc in &gold_corpus.docs {
        let mut sets: BTreeMap<(usize, usize), BTreeSet<&str>> = BTreeMap::new();
        for f in doc.facts() {
            sets.entry((f.h, f.t)).or_default().insert(f.r.as_str());
        }
        for ((h, t), set) in sets {
            pair_sizes.insert((doc.title.clone(), h, t), set.len());
        }
    }
    if !pair_sizes.values().any(|&size| selector.keeps(size)) {
        return Ok(None);
    }
    let kept_pair = |title: &str, h: usize, t: usize| {
        pair_sizes
            .get(&(title.to_string(), h, t))
            .map(|&size| selector.keeps(size))
            .unwrap_or(false)
    };

    let kept_predictions: Vec<Prediction> = predictions
        .iter()
        .filter(|p| kept_pair(&p.title, p.h_idx, p.t_idx))
        .cloned()
        .collect();
    let kept_gold = Corpus {
        docs: gold_corpus
            .docs
            .iter()
            .map(|doc| {
                let mut doc = doc.clone();
                if let Some(labels) = doc.labels.take() {
                    doc.labels = Some(
                        labels
                            .into_iter()
                            .filter(|f| kept_pair(&doc.title, f.h, f.t))
                            .collect(),
                    );
                }
                doc
            })
            .collect(),
    };
    evaluate(&kept_predictions, &kept_gold, None).map(Some)
}

/// Deterministic ordering for prediction files: title, head, tail,
/// relation code.
pub fn sort_predictions(predictions: &mut [Prediction]) {
    predictions.sort_by(|a, b| {
        (&a.title, a.h_idx, a.t_idx, &a.r).cmp(&(&b.title, b.h_idx, b.t_idx, &b.r))
    });
}

/// Writes predictions as a JSON array; submission mode strips scores to
/// match the upstream format exactly.
pub fn write_predictions(
    path: impl AsRef<Path>,
    predictions: &[Prediction],
    submission: bool,
) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut rows = predictions.to_vec();
    if submission {
        for row in &mut rows {
            row.score = None;
        }
    }
    let json = serde_json::to_string_pretty(&rows).expect("prediction serialization");
    fs::write(path, json).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Json(e.to_string()))
}
