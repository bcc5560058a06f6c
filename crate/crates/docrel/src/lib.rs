//! Document-level relation extraction with a label co-occurrence relation
//! graph.
//!
//! The pipeline parses DocRED-format corpora, derives a directed relation
//! correlation graph from label co-occurrence statistics, encodes documents
//! with a BiLSTM, propagates learnable relation embeddings over the graph
//! with multi-head graph attention, and scores entity pairs with per-class
//! bilinear forms trained under a multi-relation adaptive thresholding loss.
//! All gradients come from the crate's own reverse-mode tape and are
//! verified against finite differences.

pub mod ablation;
pub mod classifier;
pub mod data;
pub mod diagnostics;
pub mod encoder;
pub mod eval;
pub mod gat;
pub mod graph;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;
