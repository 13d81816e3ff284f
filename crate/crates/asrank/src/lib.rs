//! Metric learning for answer sentence selection at desk scale: a small
//! trainable transformer encoder, siamese and triplet training heads,
//! exhaustive triplet generation with optional mining, and exact MAP/MRR
//! ranking evaluation.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`] — dense arrays, a minimal reverse-mode graph, and a
//!   finite-difference gradient checker that validates every analytic
//!   gradient in the stack.
//! * [`corpus`] — the canonical question/candidate data model, TSV parsing,
//!   pair and triplet construction, and a deterministic synthetic corpus
//!   generator.
//! * [`encoder`] — vocabulary, tokenization, and the transformer encoder
//!   that maps a sentence to a fixed-size embedding by mean pooling.
//! * [`objectives`] — the siamese classification head and the squared-L2
//!   triplet hinge, plus triplet difficulty classification and mining.
//! * [`trainer`] — Adam with linear warmup and global-norm clipping, the
//!   epoch loop with early stopping on dev MAP, and checkpoint io.
//! * [`ranking`] — candidate ranking by embedding distance or head score,
//!   and MAP/MRR computation over answerable question groups.
//! * [`cli`] — the operator surface behind the `asrank` binary.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod numerics;
pub mod objectives;
pub mod ranking;
pub mod trainer;

pub use error::{Error, Result};
