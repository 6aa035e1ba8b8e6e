//! Word-level N-gram shallow fusion for character-level decoders.
//!
//! A character prefix is expanded into the lattice of all its segmentations
//! into vocabulary words, the lattice is intersected with a backoff N-gram
//! model, and the forward score of the result is the prefix log-probability.
//! Differences of consecutive prefix scores give per-character posteriors
//! that plug straight into beam search.

pub mod decoder;
pub mod lattice;
pub mod ngram;
pub mod scorer;
pub mod symbols;
pub mod wfsa;

pub use ngram::{LmStateId, NGramEntry, NGramError, NGramModel, NGramModelBuilder};
pub use symbols::{SymbolTable, TokenId};
pub use wfsa::{Semiring, Wfsa};
