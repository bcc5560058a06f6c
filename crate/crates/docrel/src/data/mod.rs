//! DocRED-format corpus ingestion: schema, validation, vocabularies, and
//! label statistics.

mod schema;
mod stats;
mod vocab;

pub use schema::{Corpus, Document, Entity, Mention, RelationFact};
pub use stats::{entity_pair_labels, multi_label_stats, MultiLabelStats};
pub use vocab::{RelationNames, RelationVocab, TokenVocab, TypeVocab, NONE_TYPE_ID, UNK_ID};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("document {title:?}: {detail}")]
    Validation { title: String, detail: String },
    #[error("unknown relation code {code:?}")]
    UnknownRelation { code: String },
}
