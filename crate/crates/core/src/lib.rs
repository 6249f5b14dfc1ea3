//! Tree-structured multi-stage PCA (TMPCA) for sequence-to-vector dimension
//! reduction, together with the text-classification pipeline around it:
//! tokenization and embedding lookup, length normalization, dataset
//! centering, a dense softmax classifier, and a diagnostics suite covering
//! energy retention, Gaussian mutual-information proxies, and cost scaling.
//!
//! The central object is [`tmpca::TmpcaModel`]: an unsupervised, linear,
//! orthonormal transform that maps a length-`N` sequence of `D`-dimensional
//! embeddings to a single `D`-vector through `log_P N` PCA stages.

pub mod classifier;
pub mod diagnostics;
pub mod error;
pub mod format;
pub mod linalg;
pub mod pca;
pub mod seqprep;
pub mod tmpca;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
