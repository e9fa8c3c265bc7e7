//! Glocal novelty detection for layout-like image samples and graph-based
//! selection of representative novelties.
//!
//! The crate is organised along the processing chain:
//!
//! - [`io`]: feature matrices (GLFM / CSV), PGM images, manifests and score reports.
//! - [`migna`]: novelty labels from prediction/ground-truth disagreement.
//! - [`embed`]: linear principal-subspace embedder and the reconstruction (global) score.
//! - [`attention`]: self-attention forward pass producing the local feature.
//! - [`scoring`]: k-means + per-cluster SVDD local score, normalisation, fusion and AUC.
//! - [`graph`]: symmetrised k-NN data graph, dense/sparse split, centralities, densities.
//! - [`sampling`]: one-time and incremental random-walk sampling.
//! - [`config`] and [`pipeline`]: flat key=value configuration and the end-to-end run.
//! - [`synth`]: seeded synthetic corpora used by tests and demos.

pub mod attention;
pub mod config;
pub mod embed;
pub mod error;
pub mod graph;
pub mod io;
pub mod migna;
pub mod pipeline;
pub mod sampling;
pub mod scoring;
pub mod synth;
mod util;

pub use error::{Error, Result};
