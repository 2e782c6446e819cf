//! Two-modality fusion with canonical correlation analysis.
//!
//! The crate covers the full embedding pipeline: data containers and
//! covariance products ([`datamodel`]), classical CCA ([`cca`]), sparse and
//! graph-regularized penalized CCA ([`pcca`]), the four matrix deflation
//! schemes that stack single pairs into multi-dimensional embeddings
//! ([`deflation`]), embedding-quality metrics ([`metrics`]), the generative
//! two-modality model with its posterior estimators ([`genmodel`]), simulation
//! protocol generators ([`simulate`]), and the stage-2 prediction heads
//! ([`predictors`]).

pub mod cca;
pub mod datamodel;
pub mod deflation;
pub mod error;
pub mod genmodel;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pcca;
pub mod predictors;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
