//! Measuring word-class flexibility and diachronic semantic change in
//! Chinese at the character level.
//!
//! The pipeline has five parts:
//!
//! * [`treebank`] — CoNLL-U ingestion, coarse noun/verb/other tagging,
//!   clause segmentation, character-level tag counts.
//! * [`posstats`] — grammatical function words, syntactic-position POS
//!   distributions and entropies, and the noun/verb flexibility census.
//! * [`embedding`] — character vocabulary, windowed co-occurrence counts,
//!   and GloVe vector training.
//! * [`alignment`] — orthogonal Procrustes alignment of two embedding
//!   spaces and per-character semantic-change distances.
//! * [`norms`] / [`stats`] — psycholinguistic rating aggregation and the
//!   Pearson correlation studies tying everything together.

pub mod alignment;
pub mod embedding;
pub mod norms;
pub mod posstats;
pub mod stats;
pub mod treebank;
