//! Kernel Stein goodness-of-fit testing for models of variable-length
//! discrete sequences.
//!
//! The crate is organised bottom-up:
//!
//! * [`seqspace`] – sequences, edit actions and reproducible random streams.
//! * [`models`] – scored sequence distributions (Markov chains with restarts,
//!   i.i.d. content models, an exactly solvable MRF, top-k autoregressive
//!   models) and maximum-likelihood chain fitting.
//! * [`neighborhoods`] – edit neighbourhoods that induce the Zanella-Stein
//!   graph, plus symmetry / connectivity validation.
//! * [`kernels`] – Hamming, contiguous-subsequence and Dirac kernels.
//! * [`stein`] – balancing functions, the Stein operator, Stein kernels and
//!   the KSD estimators.
//! * [`hypothesis`] – parametric and wild bootstrap KSD tests and the MMD and
//!   likelihood-ratio baselines.
//! * [`scenarios`] and [`harness`] – synthetic benchmark problems and the
//!   experiment runner behind the `steinseq` CLI.
//!
//! The numerical core is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`, which is what the test procedures use.

pub mod harness;
pub mod hypothesis;
pub mod kernels;
pub mod models;
pub mod neighborhoods;
pub mod scalar;
pub mod scenarios;
pub mod seqspace;
pub mod stein;

pub use scalar::Real;
pub use seqspace::{apply_edit, derive_stream, edit_inverse, Alphabet, EditAction, RngStream, Sequence, Symbol};

/// Stein Gram matrix over `f64`.
pub type SteinGram64 = stein::SteinGram<f64>;
/// Stein Gram matrix over `f32`.
pub type SteinGram32 = stein::SteinGram<f32>;
/// Kernel Gram matrix over `f64`.
pub type GramMatrix64 = kernels::GramMatrix<f64>;
/// Sparse Stein feature vector over `f64`.
pub type SteinFeatures64 = stein::SparseVector<f64>;
