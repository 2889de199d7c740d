//! Correspondence LDA over paired bag-of-words data.
//!
//! Each document pairs a bag of *sensory* words (for example acoustic units
//! extracted from a video's soundtrack) with a caption drawn from a text
//! dictionary. Topics carry one multinomial over each dictionary; every
//! caption word is generated from the topic of a uniformly chosen sensory
//! word, so captions can only describe topics actually present in the
//! content.
//!
//! The crate covers the full workflow:
//!
//! - [`corpus`]: vocabularies, JSON-lines corpora, tokenization.
//! - [`model`]: parameters, the generative sampler, an exact-likelihood
//!   enumerator for tiny documents, and the binary model format.
//! - [`inference`]: mean-field variational EM.
//! - [`retrieval`]: ranking documents for a text query.
//! - [`indexing`]: annotating unlabeled documents with text words.
//! - [`eval`]: perplexity, precision/recall, MAP and per-word metrics.
//! - [`cli`]: the `corrlda` command-line front end.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod indexing;
pub mod inference;
pub mod model;
pub mod ranking;
pub mod retrieval;
pub mod special;
pub mod synthetic;

pub use corpus::{BowVector, Corpus, Document, Stoplist, TokenizedText, Vocabulary};
pub use error::{Error, Result};
pub use inference::{TrainConfig, TrainReport, VariationalState};
pub use model::{LatentTrace, ModelParams};
pub use ranking::RankedList;

/// Deterministic, platform-independent generator behind every seeded operation.
pub(crate) fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
