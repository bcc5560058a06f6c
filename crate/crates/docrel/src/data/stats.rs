//! Label-set statistics over entity pairs.

use std::collections::{BTreeMap, BTreeSet};

use super::{Corpus, DataError, Document, RelationVocab};

/// Groups a document's facts by (head, tail): only pairs with at least one
/// fact appear, and duplicate facts collapse into the set.
pub fn entity_pair_labels(
    doc: &Document,
    vocab: &RelationVocab,
) -> Result<BTreeMap<(usize, usize), BTreeSet<usize>>, DataError> {
    let mut map: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for fact in doc.facts() {
        let rel = vocab
            .index(&fact.r)
            .ok_or_else(|| DataError::UnknownRelation {
                code: fact.r.clone(),
            })?;
        map.entry((fact.h, fact.t)).or_default().insert(rel);
    }
    Ok(map)
}

/// Distribution of gold label-set sizes across all entity pairs that carry
/// at least one relation.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiLabelStats {
    /// label-set size → number of pairs with that size.
    pub histogram: BTreeMap<usize, usize>,
    /// (pairs with ≥ 2 labels) / (pairs with ≥ 1 label); 0 when no pairs.
    pub multi_fraction: f64,
    /// False when the corpus has no labeled pairs, making the fraction
    /// degenerate.
    pub has_pairs: bool,
    pub max_set_size: usize,
    pub total_pairs: usize,
    /// Σ size × count: total (pair, relation) assignments.
    pub total_assignments: usize,
}

pub fn multi_label_stats(
    corpus: &Corpus,
    vocab: &RelationVocab,
) -> Result<MultiLabelStats, DataError> {
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for doc in &corpus.docs {
        for labels in entity_pair_labels(doc, vocab)?.values() {
            *histogram.entry(labels.len()).or_insert(0) += 1;
        }
    }
    let total_pairs: usize = histogram.values().sum();
    let multi: usize = histogram
        .iter()
        .filter(|(size, _)| **size >= 2)
        .map(|(_, count)| count)
        .sum();
    let total_assignments = histogram.iter().map(|(size, count)| size * count).sum();
    Ok(MultiLabelStats {
        multi_fraction: if total_pairs == 0 {
            0.0
        } else {
            multi as f64 / total_pairs as f64
        },
        has_pairs: total_pairs > 0,
        max_set_size: histogram.keys().max().copied().unwrap_or(0),
        total_pairs,
        total_assignments,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Corpus;

    fn fixture(labels_json: &str) -> (Corpus, RelationVocab) {
        let json = format!(
            r#"[{{
                "title": "t",
                "sents": [["a", "b", "c"]],
                "vertexSet": [
                    [{{"name": "a", "sent_id": 0, "pos": [0, 1], "type": "PER"}}],
                    [{{"name": "b", "sent_id": 0, "pos": [1, 2], "type": "LOC"}}],
                    [{{"name": "c", "sent_id": 0, "pos": [2, 3], "type": "LOC"}}]
                ],
                "labels": [{labels_json}]
            }}]"#
        );
        let corpus = Corpus::from_json_str(&json).unwrap();
        let vocab = RelationVocab::from_corpus(&corpus);
        (corpus, vocab)
    }

    #[test]
    fn facts_group_into_label_sets() {
        let (corpus, vocab) = fixture(
            r#"{"h": 0, "t": 1, "r": "P17", "evidence": []},
               {"h": 0, "t": 1, "r": "P131", "evidence": []}"#,
        );
        let map = entity_pair_labels(&corpus.docs[0], &vocab).unwrap();
        assert_eq!(map.len(), 1);
        let set = &map[&(0, 1)];
        assert_eq!(set.len(), 2);
        assert!(set.contains(&vocab.index("P17").unwrap()));
        assert!(set.contains(&vocab.index("P131").unwrap()));
    }

    #[test]
    fn duplicate_facts_deduplicate() {
        let (corpus, vocab) = fixture(
            r#"{"h": 0, "t": 1, "r": "P17", "evidence": []},
               {"h": 0, "t": 1, "r": "P17", "evidence": [0]}"#,
        );
        let map = entity_pair_labels(&corpus.docs[0], &vocab).unwrap();
        assert_eq!(map[&(0, 1)].len(), 1);
    }

    #[test]
    fn no_facts_yields_empty_map() {
        let json = r#"[{"title": "t", "sents": [["a"]], "vertexSet": [[{"name": "a", "sent_id": 0, "pos": [0, 1], "type": "PER"}]]}]"#;
        let corpus = Corpus::from_json_str(json).unwrap();
        let vocab = RelationVocab::from_corpus(&corpus);
        assert!(entity_pair_labels(&corpus.docs[0], &vocab)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unknown_code_is_a_vocab_error() {
        let (corpus, _) = fixture(r#"{"h": 0, "t": 1, "r": "P17", "evidence": []}"#);
        let other = RelationVocab::from_codes(vec!["P131".into()]);
        assert!(matches!(
            entity_pair_labels(&corpus.docs[0], &other),
            Err(DataError::UnknownRelation { .. })
        ));
    }

    #[test]
    fn histogram_and_fraction_from_hand_count() {
        // Sets {P17} on (0,1) and {P17, P131} on (0,2).
        let (corpus, vocab) = fixture(
            r#"{"h": 0, "t": 1, "r": "P17", "evidence": []},
               {"h": 0, "t": 2, "r": "P17", "evidence": []},
               {"h": 0, "t": 2, "r": "P131", "evidence": []}"#,
        );
        let stats = multi_label_stats(&corpus, &vocab).unwrap();
        assert_eq!(stats.histogram[&1], 1);
        assert_eq!(stats.histogram[&2], 1);
        assert_eq!(stats.multi_fraction, 0.5);
        assert_eq!(stats.max_set_size, 2);
        assert_eq!(stats.total_assignments, 3);
        assert!(stats.has_pairs);
    }

    #[test]
    fn empty_corpus_reports_no_pairs_flag() {
        let vocab = RelationVocab::from_codes(vec![]);
        let stats = multi_label_stats(&Corpus::default(), &vocab).unwrap();
        assert!(!stats.has_pairs);
        assert_eq!(stats.multi_fraction, 0.0);
        assert!(stats.histogram.is_empty());
    }

    #[test]
    fn assignment_total_matches_an_independent_recount() {
        let corpus = crate::synth::generate(&crate::synth::SynthConfig {
            docs: 15,
            seed: 3,
            ..crate::synth::SynthConfig::default()
        });
        let vocab = RelationVocab::from_corpus(&corpus);
        let stats = multi_label_stats(&corpus, &vocab).unwrap();
        let mut recount = 0;
        for doc in &corpus.docs {
            for set in entity_pair_labels(doc, &vocab).unwrap().values() {
                assert!(!set.is_empty(), "pair map carries an empty label set");
                recount += set.len();
            }
        }
        assert_eq!(stats.total_assignments, recount);
    }
}
