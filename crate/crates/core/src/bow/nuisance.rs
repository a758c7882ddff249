//! Cross-fitted propensity and outcome models.

use serde::{Deserialize, Serialize};

use super::forest::{FeatureMatrix, Learner, LearnerSpec};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceSpec {
    pub propensity: LearnerSpec,
    pub outcome: LearnerSpec,
    pub k_folds: usize,
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        NuisanceSpec { propensity: LearnerSpec::classifier(0), outcome: LearnerSpec::regressor(0), k_folds: 5 }
    }
}

impl NuisanceSpec {
    pub fn with_seed(seed: u64) -> Self {
        NuisanceSpec {
            propensity: LearnerSpec::classifier(seed),
            outcome: LearnerSpec::regressor(seed),
            k_folds: 5,
        }
    }
}

/// Per-unit out-of-fold nuisance values, together with the unit data they
/// were fitted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFits {
    pub doc_ids: Vec<String>,
    pub treatment: Vec<bool>,
    pub outcome: Vec<f64>,
    pub propensity: Vec<f64>,
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
    pub fold: Vec<usize>,
}

impl NuisanceFits {
    pub fn len(&self) -> usize {
        self.treatment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treatment.is_empty()
    }

    pub fn subset(&self, keep: &[usize]) -> NuisanceFits {
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        NuisanceFits {
            doc_ids: keep.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            treatment: keep.iter().map(|&i| self.treatment[i]).collect(),
            outcome: pick(&self.outcome),
            propensity: pick(&self.propensity),
            q1: pick(&self.q1),
            q0: pick(&self.q0),
            fold: keep.iter().map(|&i| self.fold[i]).collect(),
        }
    }
}

/// Assigns folds separately within each arm. Units are ordered by a hash of
/// `(seed, doc_id)` and dealt round-robin, so the assignment does not
/// depend on input order.
pub fn stratified_folds(doc_ids: &[String], treatment: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid_parameter("k_folds", "must be at least 2"));
    }
    if doc_ids.len() != treatment.len() {
        return Err(Error::InvalidInput("doc ids and treatment differ in length".into()));
    }
    let mut fold = vec![0; doc_ids.len()];
    let mut offset = 0;
    for arm in [true, false] {
        let mut idx: Vec<usize> = (0..doc_ids.len()).filter(|&i| treatment[i] == arm).collect();
        idx.sort_by_key(|&i| (rng::derive_seed(seed, &[rng::str_tag("fold"), rng::str_tag(&doc_ids[i])]), &doc_ids[i]));
        for (r, &i) in idx.iter().enumerate() {
            fold[i] = (r + offset) % k;
        }
        // Continue the deal where the treated arm stopped to balance fold sizes.
        offset = idx.len() % k;
    }
    Ok(fold)
}

pub(crate) fn check_inputs(x: &FeatureMatrix, doc_ids: &[String], treatment: &[bool], outcome: &[f64]) -> Result<()> {
    let n = x.n_rows();
    if doc_ids.len() != n || treatment.len() != n || outcome.len() != n {
        return Err(Error::InvalidInput("features, ids, treatment and outcome differ in length".into()));
    }
    Ok(())
}

/// Training rows of fold `f`, in doc-id order so fits do not depend on the
/// order units were supplied in.
pub(crate) fn training_rows(doc_ids: &[String], fold: &[usize], f: usize, filter: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] != f && filter(i)).collect();
    rows.sort_by(|&a, &b| doc_ids[a].cmp(&doc_ids[b]));
    rows
}

pub(crate) fn held_out(fold: &[usize], f: usize) -> Vec<usize> {
    (0..fold.len()).filter(|&i| fold[i] == f).collect()
}

/// Cross-fitted nuisances with the forest learners in `spec`.
pub fn fit_nuisance(
    x: &FeatureMatrix,
    doc_ids: &[String],
    treatment: &[bool],
    outcome: &[f64],
    spec: &NuisanceSpec,
) -> Result<NuisanceFits> {
    let fold_seed = spec.propensity.seed;
    fit_nuisance_with(x, doc_ids, treatment, outcome, spec.k_folds, fold_seed, &spec.propensity, &spec.outcome)
}

/// Out-of-fold propensity scores: for every fold the learner is trained on
/// the other folds' treatment labels.
pub fn cross_fit_propensity(
    x: &FeatureMatrix,
    doc_ids: &[String],
    treatment: &[bool],
    fold: &[usize],
    k_folds: usize,
    learner: &dyn Learner,
) -> Result<Vec<f64>> {
    let mut e = vec![f64::NAN; x.n_rows()];
    for f in 0..k_folds {
        let test = held_out(fold, f);
        if test.is_empty() {
            continue;
        }
        let train = training_rows(doc_ids, fold, f, |_| true);
        check_arms(treatment, &train, f)?;
        let labels: Vec<f64> = train.iter().map(|&i| f64::from(u8::from(treatment[i]))).collect();
        let model = learner.fit(&x.select_rows(&train), &labels, &[rng::str_tag("propensity"), f as u64])?;
        for (&i, v) in test.iter().zip(model.predict(&x.select_rows(&test))) {
            e[i] = v;
        }
    }
    Ok(e)
}

/// Out-of-fold arm outcome models: `q1` is trained on the other folds'
/// treated units and `q0` on their control units.
pub fn cross_fit_outcomes(
    x: &FeatureMatrix,
    doc_ids: &[String],
    treatment: &[bool],
    outcome: &[f64],
    fold: &[usize],
    k_folds: usize,
    learner: &dyn Learner,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.n_rows();
    let (mut q1, mut q0) = (vec![f64::NAN; n], vec![f64::NAN; n]);
    for f in 0..k_folds {
        let test = held_out(fold, f);
        if test.is_empty() {
            continue;
        }
        let x_test = x.select_rows(&test);
        for (arm, dst, name) in [(true, &mut q1, "q1"), (false, &mut q0, "q0")] {
            let rows = training_rows(doc_ids, fold, f, |i| treatment[i] == arm);
            if rows.is_empty() {
                return Err(Error::DegenerateFold { fold: f, arm: if arm { "treated" } else { "control" } });
            }
            let y: Vec<f64> = rows.iter().map(|&i| outcome[i]).collect();
            let model = learner.fit(&x.select_rows(&rows), &y, &[rng::str_tag(name), f as u64])?;
            for (&i, v) in test.iter().zip(model.predict(&x_test)) {
                dst[i] = v;
            }
        }
    }
    Ok((q1, q0))
}

fn check_arms(treatment: &[bool], train: &[usize], f: usize) -> Result<()> {
    if !train.iter().any(|&i| treatment[i]) {
        return Err(Error::DegenerateFold { fold: f, arm: "treated" });
    }
    if !train.iter().any(|&i| !treatment[i]) {
        return Err(Error::DegenerateFold { fold: f, arm: "control" });
    }
    Ok(())
}

/// Cross-fitting with arbitrary learners: for every fold, the propensity
/// model is trained on the other folds, `q1` on their treated units and
/// `q0` on their control units; all three score the held-out fold.
#[allow(clippy::too_many_arguments)]
pub fn fit_nuisance_with(
    x: &FeatureMatrix,
    doc_ids: &[String],
    treatment: &[bool],
    outcome: &[f64],
    k_folds: usize,
    fold_seed: u64,
    propensity: &dyn Learner,
    outcome_learner: &dyn Learner,
) -> Result<NuisanceFits> {
    check_inputs(x, doc_ids, treatment, outcome)?;
    let fold = stratified_folds(doc_ids, treatment, k_folds, fold_seed)?;
    let e = cross_fit_propensity(x, doc_ids, treatment, &fold, k_folds, propensity)?;
    let (q1, q0) = cross_fit_outcomes(x, doc_ids, treatment, outcome, &fold, k_folds, outcome_learner)?;
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
