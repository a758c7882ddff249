//! Benchmarking toolkit for causal inference with text as the treatment.
//!
//! The crate is organised around the paired write/edit experimental design:
//! every original text is edited to flip a single latent feature, and the
//! within-pair contrast gives a design-based estimate of the feature's
//! effect. On top of that sit
//!
//! * [`corpus`]: ingestion, validation and auditing of paired corpora,
//! * [`design`]: the paired estimator, its weighted least squares form,
//!   permutation inference and evaluator-clustered standard errors,
//! * [`sim`]: semi-synthetic confounding built by selecting real texts,
//! * [`dgp`]: a fully synthetic generator with analytic effects,
//! * [`bow`]: bag-of-words adjustment estimators with cross-fitted forests,
//! * [`diagnostics`]: overlap tables and benchmark coverage reports,
//! * [`benchmark`]: the replica loop tying simulation and estimators together.

pub mod benchmark;
pub mod bow;
pub mod corpus;
pub mod design;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use estimate::{EffectEstimate, Outcome};
