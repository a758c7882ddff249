//! Treatment-ignorant representation probe.
//!
//! A pooled outcome forest is fitted on the document-term matrix without
//! the treatment, arm-specific heads map its prediction to `(q0, q1)`, and
//! the propensity model only sees that two-dimensional representation. When
//! the outcome depends strongly on the treatment, the representation
//! encodes the treatment and the propensities are pushed toward 0 and 1.

use super::estimators::{aipw_estimate, bound_propensities, BoundMode, PropensityBounds};
use super::forest::{FeatureMatrix, Learner};
use super::nuisance::{held_out, stratified_folds, training_rows, NuisanceFits, NuisanceSpec};
use crate::diagnostics::{propensity_bins, PropensityBins};
use crate::error::{Error, Result};
use crate::estimate::EffectEstimate;
use crate::rng;

#[derive(Debug, Clone)]
pub struct LeakageResult {
    pub estimate: EffectEstimate,
    /// Bins of the raw (unbounded) propensities.
    pub bins: PropensityBins,
    /// Raw cross-fitted nuisances.
    pub fits: NuisanceFits,
    pub n_kept: usize,
}

fn representation(q0: &dyn super::forest::Model, q1: &dyn super::forest::Model, g: &[f64]) -> Result<FeatureMatrix> {
    let gm = FeatureMatrix::from_columns(&[g.to_vec()])?;
    FeatureMatrix::from_columns(&[q0.predict(&gm), q1.predict(&gm)])
}

/// Cross-fitted probe nuisances. In each fold the propensity model is
/// trained on the training units' in-sample representations and scores the
/// held-out units' representations.
pub fn probe_nuisance(
    x: &FeatureMatrix,
    doc_ids: &[String],
    treatment: &[bool],
    outcome: &[f64],
    spec: &NuisanceSpec,
) -> Result<NuisanceFits> {
    let n = x.n_rows();
    if doc_ids.len() != n || treatment.len() != n || outcome.len() != n {
        return Err(Error::InvalidInput("features, ids, treatment and outcome differ in length".into()));
    }
    let fold = stratified_folds(doc_ids, treatment, spec.k_folds, spec.propensity.seed)?;
    let mut e = vec![f64::NAN; n];
    let mut q1 = vec![f64::NAN; n];
    let mut q0 = vec![f64::NAN; n];
    for f in 0..spec.k_folds {
        let test = held_out(&fold, f);
        if test.is_empty() {
            continue;
        }
        let train = training_rows(doc_ids, &fold, f, |_| true);
        let tag = |name: &str| [rng::str_tag(name), f as u64];
        let y_train: Vec<f64> = train.iter().map(|&i| outcome[i]).collect();
        let x_train = x.select_rows(&train);
        let g = spec.outcome.fit(&x_train, &y_train, &tag("probe-g"))?;
        let g_train = g.predict(&x_train);
        let g_test = g.predict(&x.select_rows(&test));

        let arm = |want: bool| -> Vec<usize> { (0..train.len()).filter(|&k| treatment[train[k]] == want).collect() };
        let (tr1, tr0) = (arm(true), arm(false));
        if tr1.is_empty() {
            return Err(Error::DegenerateFold { fold: f, arm: "treated" });
        }
        if tr0.is_empty() {
            return Err(Error::DegenerateFold { fold: f, arm: "control" });
        }
        let head = |rows: &[usize], name: &str| {
            let feat = FeatureMatrix::from_columns(&[rows.iter().map(|&k| g_train[k]).collect()])?;
            let y: Vec<f64> = rows.iter().map(|&k| y_train[k]).collect();
            spec.outcome.fit(&feat, &y, &tag(name))
        };
        let h1 = head(&tr1, "probe-q1")?;
        let h0 = head(&tr0, "probe-q0")?;

        let rep_train = representation(h0.as_ref(), h1.as_ref(), &g_train)?;
        let rep_test = representation(h0.as_ref(), h1.as_ref(), &g_test)?;
        let labels: Vec<f64> = train.iter().map(|&i| f64::from(u8::from(treatment[i]))).collect();
        let pm = spec.propensity.fit(&rep_train, &labels, &tag("probe-propensity"))?;
        let e_test = pm.predict(&rep_test);
        for (k, &i) in test.iter().enumerate() {
            e[i] = e_test[k];
            q0[i] = rep_test.get(k, 0) as f64;
            q1[i] = rep_test.get(k, 1) as f64;
        }
    }
    Ok(NuisanceFits {
        doc_ids: doc_ids.to_vec(),
        treatment: treatment.to_vec(),
        outcome: outcome.to_vec(),
        propensity: e,
        q1,
        q0,
        fold,
    })
}

/// Runs the probe and its bounded AIPW estimate.
pub fn leakage_probe(
    x: &FeatureMatrix,
    doc_ids: &[String],
    treatment: &[bool],
    outcome: &[f64],
    spec: &NuisanceSpec,
    bounds: PropensityBounds,
) -> Result<LeakageResult> {
    let fits = probe_nuisance(x, doc_ids, treatment, outcome, spec)?;
    let bins = propensity_bins(&fits.propensity, bounds.lo, bounds.hi)?;
    let (bounded, kept) = bound_propensities(&fits, bounds.lo, bounds.hi, bounds.mode)?;
    let name = match bounds.mode {
        BoundMode::Trim => "ti_trimmed",
        BoundMode::Winsorize => "ti_winsorized",
    };
    let mut estimate = aipw_estimate(&bounded)?;
    estimate.estimator_name = name.into();
    let estimate = estimate.with_meta("n_kept", kept.len());
    Ok(LeakageResult { estimate, bins, fits, n_kept: kept.len() })
}
