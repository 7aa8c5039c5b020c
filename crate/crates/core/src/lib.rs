//! Contrastive course recommendation over frozen encoder embeddings.
//!
//! A small projection head is trained on pooled encoder features with a
//! supervised NT-Xent loss plus an isotropy regularizer, then used to rank
//! courses against free-form interest statements by cosine similarity.
//!
//! The modules follow the data flow:
//!
//! - [`catalog`]: cleaning, loading and splitting course and statement data
//! - [`augment`]: word-level augmentation and contrastive view pairs
//! - [`embed`]: token-level encoder features, masked mean pooling, EMB1 files
//! - [`model`]: the two-layer projection head and PRJ1 files
//! - [`objective`]: contrastive and isotropy losses with gradients
//! - [`train`]: AdamW, the learning-rate schedule and the epoch loop
//! - [`eval`] and [`geometry`]: retrieval metrics and embedding-space statistics
//! - [`serve`]: the course index, Top-N ranking, REPL and HTTP endpoint
//! - [`pipeline`]: file-level stages used by the `isorec` binary

pub mod augment;
pub mod catalog;
pub mod embed;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod pipeline;
pub mod seed;
pub mod serve;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
