//! The DocRED JSON document model, bit-faithful to the public release:
//! `{title, sents: [[token,...],...], vertexSet: [[{name, sent_id,
//! pos: [start, end), type},...],...], labels: [{h, t, r, evidence},...]}`.
//! The `labels` field is optional so blind test sets parse as fact-free.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// One surface occurrence of an entity inside a sentence. `pos` is a
/// half-open token span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub name: String,
    pub sent_id: usize,
    pub pos: (usize, usize),
    #[serde(rename = "type")]
    pub entity_type: String,
}

/// A document-level entity: a nonempty group of mentions. Mention types are
/// preserved verbatim even when the source disagrees with itself; the
/// conflict is observable through [`Entity::has_type_conflict`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Entity {
    pub mentions: Vec<Mention>,
}

impl Entity {
    /// The type of the first mention; the conventional entity-level type.
    pub fn entity_type(&self) -> &str {
        &self.mentions[0].entity_type
    }

    pub fn has_type_conflict(&self) -> bool {
        self.mentions
            .iter()
            .any(|m| m.entity_type != self.mentions[0].entity_type)
    }

    /// Distinct surface names across the mentions.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        let mut seen = Vec::new();
        self.mentions.iter().filter_map(move |m| {
            if seen.contains(&m.name.as_str()) {
                None
            } else {
                seen.push(m.name.as_str());
                Some(m.name.as_str())
            }
        })
    }
}

/// A gold relation fact: head entity index, tail entity index, relation
/// code, and the sentences supporting it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationFact {
    pub h: usize,
    pub t: usize,
    pub r: String,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    pub sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<RelationFact>>,
}

impl Document {
    pub fn facts(&self) -> &[RelationFact] {
        self.labels.as_deref().unwrap_or(&[])
    }

    fn validate(&self) -> Result<(), DataError> {
        let fail = |detail: String| DataError::Validation {
            title: self.title.clone(),
            detail,
        };
        for (ei, entity) in self.entities.iter().enumerate() {
            if entity.mentions.is_empty() {
                return Err(fail(format!("entity {ei} has no mentions")));
            }
            for m in &entity.mentions {
                let sent = self.sents.get(m.sent_id).ok_or_else(|| {
                    fail(format!(
                        "mention of entity {ei} addresses sentence {} of {}",
                        m.sent_id,
                        self.sents.len()
                    ))
                })?;
                if m.pos.0 >= m.pos.1 || m.pos.1 > sent.len() {
                    return Err(fail(format!(
                        "mention span {}..{} of entity {ei} is invalid for sentence {} of length {}",
                        m.pos.0,
                        m.pos.1,
                        m.sent_id,
                        sent.len()
                    )));
                }
            }
        }
        for fact in self.facts() {
            if fact.h >= self.entities.len() || fact.t >= self.entities.len() {
                return Err(fail(format!(
                    "fact ({}, {}, {}) addresses a missing entity; document has {}",
                    fact.h,
                    fact.t,
                    fact.r,
                    self.entities.len()
                )));
            }
            if fact.h == fact.t {
                return Err(fail(format!("fact relates entity {} to itself", fact.h)));
            }
        }
        Ok(())
    }
}

/// An ordered collection of documents, serialized as a bare JSON array.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Corpus {
    pub docs: Vec<Document>,
}

impl Corpus {
    pub fn from_json_str(json: &str) -> Result<Self, DataError> {
        let corpus: Corpus = serde_json::from_str(json).map_err(|e| DataError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        for doc in &corpus.docs {
            doc.validate()?;
        }
        Ok(corpus)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("corpus serialization")
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_entities(&self) -> usize {
        self.docs.iter().map(|d| d.entities.len()).sum()
    }

    pub fn n_facts(&self) -> usize {
        self.docs.iter().map(|d| d.facts().len()).sum()
    }
}
