//! Dependency-tree recovery over document layout blocks and structure-aware
//! chunking for retrieval.
//!
//! The pipeline runs in stages, each with its own module:
//!
//! 1. [`canvas`]: detector/OCR output to normalized blocks in reading order.
//! 2. [`softroi`]: token-grid pooling into block embeddings.
//! 3. [`parser`]: candidate parents, biaffine scoring, training, decoding.
//! 4. [`chunker`]: tree to retrieval chunks and their serialized text.
//! 5. [`index`]: corpus-level BM25 / dense retrieval.
//! 6. [`metrics`]: hierarchy, retrieval and answer metrics.
//!
//! [`synth`] generates planted-signal corpora with known hierarchy and
//! [`io`] holds the JSON / JSON-Lines interchange formats.

pub mod canvas;
pub mod chunker;
pub mod config;
pub mod error;
pub mod index;
pub mod io;
pub mod metrics;
pub mod parser;
pub mod softroi;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
