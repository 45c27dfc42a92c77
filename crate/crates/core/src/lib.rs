//! Brain–language-model alignment toolkit.
//!
//! The pipeline runs from event-level BOLD modeling (canonical HRF, GLM,
//! least-squares-separate single-trial betas) through ROI response
//! extraction, layer-wise cross-validated ridge encoding of embedding
//! tensors, the cross-lingual semantic alignment accuracy (CSAA) metric,
//! and the inferential statistics used to compare models and hemispheres.
//!
//! Every stage exchanges data through the `NAT1` tensor format and small
//! TSV files (see [`tensorio`]), so synthetic fixtures from [`synth`] and
//! real data flow through the same code.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod csaa;
pub mod encoding;
pub mod error;
pub mod hrf_glm;
pub mod linalg;
pub mod report;
pub mod roi;
pub mod special;
pub mod stats;
pub mod synth;
pub mod tensorio;

pub use error::{Error, ErrorKind, Result};
