//! Bag-of-words adjustment estimators.

pub mod estimators;
pub mod forest;
pub mod leakage;
pub mod nuisance;
pub mod vectorize;

pub use estimators::{
    aipw_estimate, bound_propensities, diff_in_means, ipw_estimate, or_estimate, topic_adjusted, BoundMode,
    PropensityBounds,
};
pub use forest::{FeatureMatrix, FeaturesPerSplit, Forest, Learner, LearnerKind, LearnerSpec, Model};
pub use leakage::{leakage_probe, probe_nuisance, LeakageResult};
pub use nuisance::{
    cross_fit_outcomes, cross_fit_propensity, fit_nuisance, fit_nuisance_with, stratified_folds, NuisanceFits,
    NuisanceSpec,
};
pub use vectorize::{bow_vectorize, tokenize, DocTermMatrix, DEFAULT_MIN_DF};
