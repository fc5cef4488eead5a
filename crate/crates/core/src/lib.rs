//! Encoding models that compare hypotheses about how task semantics and
//! stimulus semantics combine to predict trial-level brain responses.
//!
//! Pipeline: load or synthesize a [`data::Dataset`], build zero-shot
//! [`crossval::Fold`]s, fit each hypothesis with [`crossval::run_cv`], score
//! held-out predictions with the 2v2 metric in [`evaluation`], and test the
//! differences with [`stats`].

pub mod crossval;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod hypotheses;
pub mod model;
pub mod solvers;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
