//! Vocabularies: relation codes, tokens, and entity types.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{Corpus, DataError};

/// Bijection between relation codes (e.g. "P17") and dense indices
/// 0..r−1. Indices are assigned by lexicographic sort of the codes, so the
/// mapping is stable across corpus shuffles. Index r is reserved for the
/// TH/NA class and is excluded from the r statistical relations.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationVocab {
    codes: Vec<String>,
    index: HashMap<String, usize>,
}

impl RelationVocab {
    pub fn from_codes(mut codes: Vec<String>) -> Self {
        codes.sort();
        codes.dedup();
        let index = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        RelationVocab { codes, index }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let distinct: BTreeSet<String> = corpus
            .docs
            .iter()
            .flat_map(|d| d.facts().iter().map(|f| f.r.clone()))
            .collect();
        Self::from_codes(distinct.into_iter().collect())
    }

    /// Number of statistical relations (96 on full DocRED).
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Index of the threshold/NA class.
    pub fn th_index(&self) -> usize {
        self.codes.len()
    }

    pub fn index(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn code(&self, index: usize) -> &str {
        &self.codes[index]
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }
}

/// Token vocabulary with a reserved UNK row at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub const UNK_ID: usize = 0;

impl TokenVocab {
    pub fn from_tokens(distinct: BTreeSet<String>) -> Self {
        let mut tokens = vec!["<unk>".to_string()];
        tokens.extend(distinct.into_iter().filter(|t| t != "<unk>"));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TokenVocab { tokens, index }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let distinct: BTreeSet<String> = corpus
            .docs
            .iter()
            .flat_map(|d| d.sents.iter().flatten().cloned())
            .collect();
        Self::from_tokens(distinct)
    }

    pub fn from_list(tokens: &[String]) -> Self {
        Self::from_tokens(tokens.iter().cloned().collect())
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Entity-type vocabulary with a reserved "none" row at index 0, used for
/// tokens outside any mention and for unseen types.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeVocab {
    types: Vec<String>,
}

pub const NONE_TYPE_ID: usize = 0;

impl TypeVocab {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let distinct: BTreeSet<String> = corpus
            .docs
            .iter()
            .flat_map(|d| d.entities.iter())
            .flat_map(|e| e.mentions.iter().map(|m| m.entity_type.clone()))
            .collect();
        let mut types = vec!["<none>".to_string()];
        types.extend(distinct.into_iter().filter(|t| t != "<none>"));
        TypeVocab { types }
    }

    pub fn from_list(types: &[String]) -> Self {
        let mut all = vec!["<none>".to_string()];
        all.extend(types.iter().filter(|t| t.as_str() != "<none>").cloned());
        TypeVocab { types: all }
    }

    pub fn id(&self, entity_type: &str) -> usize {
        self.types
            .iter()
            .position(|t| t == entity_type)
            .unwrap_or(NONE_TYPE_ID)
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// Optional map from relation code to a human-readable name, as shipped in
/// DocRED's rel_info.json.
#[derive(Clone, Debug, Default)]
pub struct RelationNames {
    names: BTreeMap<String, String>,
}

impl RelationNames {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let names: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| DataError::Json {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        Ok(RelationNames { names })
    }

    pub fn name(&self, code: &str) -> Option<&str> {
        self.names.get(code).map(String::as_str)
    }
}
