//! Graph-based coreference resolution.
//!
//! Documents are encoded by a Transformer whose self-attention is conditioned
//! on a token-pair relation graph. The model predicts mentions and coreference
//! links as a lower-triangular matrix of relation codes, then iteratively
//! re-encodes the document conditioned on its own prediction until the graph
//! reaches a fixed point or an iteration bound.
//!
//! The crate is organized around the stages of that pipeline:
//!
//! * [`corpus`] — CoNLL-2012 column format I/O, JSON-lines fixtures, word to
//!   sub-token span remapping, and a synthetic corpus generator.
//! * [`graph`] — the relation matrix, head assignment, cluster/graph
//!   conversions and the union-find cluster decoder.
//! * [`encoder`] — a small from-scratch Transformer with per-pair relation
//!   embeddings added to attention keys and values, plus exact backprop.
//! * [`objective`] — mention and antecedent scoring heads and their losses.
//! * [`refine`] — the iterative refinement engine and the training loop.
//! * [`longdoc`] — overlapping windows, document reduction and truncation.
//! * [`metrics`] — MUC, B³, CEAF and paired bootstrap resampling.
//! * [`cli`] — the `gen`/`train`/`predict`/`score`/`convert` entry points
//!   used by the thin binary.
//!
//! Every capability has a runnable demo under `examples/`. Start with
//! `cargo run --example synthetic_corpus` and `cargo run --example
//! train_overfit`.

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod longdoc;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optim;
pub mod refine;
pub mod rng;
pub mod vocab;

/// Numeric scalar used throughout: `f64` by default, `f32` behind the
/// `single-precision` feature for speed runs.
#[cfg(not(feature = "single-precision"))]
pub type Scalar = f64;
#[cfg(feature = "single-precision")]
pub type Scalar = f32;

pub use error::{Error, Result};
