//! Unsupervised word translation between two embedding spaces.
//!
//! The crate aligns a source embedding space with a target space without any
//! bilingual supervision. A forward linear map and an inverse linear map are
//! trained jointly against two adversarial discriminators, then refined by
//! inducing a synthetic dictionary with mutual nearest neighbours under CSLS
//! and solving an orthogonal Procrustes problem on it.
//!
//! Module layout:
//!
//! * [`numerics`] — dense matrices, QR, SVD, orthogonalization, gradient checking
//! * [`embeddings`] — text-format embedding I/O and the synthetic language generator
//! * [`adversarial`] — discriminators, losses, and the two-way training loop
//! * [`similarity`] — inner-product and CSLS retrieval, mutual-NN dictionary induction
//! * [`procrustes`] — closed-form orthogonal map fitting and iterative refinement
//! * [`evaluation`] — bilingual dictionary scoring, error analysis, vector export
//!
//! All randomness flows from a single `u64` seed through named substreams
//! (see [`seeding`]), so every pipeline stage is reproducible bit for bit.

pub mod adversarial;
pub mod embeddings;
pub mod evaluation;
pub mod numerics;
pub mod procrustes;
pub mod seeding;
pub mod similarity;

pub use embeddings::EmbeddingSpace;
pub use evaluation::TranslationDictionary;
pub use numerics::Matrix;
pub use similarity::SimilarityMetric;
