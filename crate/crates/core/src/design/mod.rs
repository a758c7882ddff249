//! Design-based estimation for the paired write/edit design.
//!
//! Each original text and its edits form a [`DesignGroup`]. The paired
//! estimator averages, over groups, the difference between the mean treated
//! version and the mean control version.

mod permutation;
mod report;
mod variance;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::estimate::{EffectEstimate, Outcome};
use crate::stats;

pub use permutation::{permutation_test, permutation_test_exhaustive, PermutationResult};
pub use report::{write_estimates_jsonl, write_summary_csv};
pub use variance::{clustered_se, hc_se, tau_t_wls, tau_t_wls_evaluations, SandwichSe};

/// One evaluation of a text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalObs {
    pub evaluator_id: String,
    pub value: f64,
}

/// One version (original or edit) within a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub text_id: String,
    pub treatment: bool,
    /// Text-level outcome: the mean of `evals`, or a directly supplied value.
    pub outcome: f64,
    pub evals: Vec<EvalObs>,
}

impl DesignRow {
    pub fn from_evals(text_id: impl Into<String>, treatment: bool, evals: Vec<EvalObs>) -> Self {
        let outcome = stats::mean(&evals.iter().map(|e| e.value).collect::<Vec<_>>());
        DesignRow { text_id: text_id.into(), treatment, outcome, evals }
    }

    /// A row carrying only a text-level outcome, with no evaluation detail.
    pub fn from_mean(text_id: impl Into<String>, treatment: bool, outcome: f64) -> Self {
        DesignRow { text_id: text_id.into(), treatment, outcome, evals: Vec::new() }
    }
}

/// An original text together with all of its edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGroup {
    pub pair_id: String,
    pub rows: Vec<DesignRow>,
}

impl DesignGroup {
    pub fn new(pair_id: impl Into<String>, rows: Vec<DesignRow>) -> Self {
        DesignGroup { pair_id: pair_id.into(), rows }
    }

    /// Convenience constructor from `(treatment, text outcome)` pairs.
    pub fn from_means(pair_id: impl Into<String>, versions: &[(bool, f64)]) -> Self {
        let pair_id = pair_id.into();
        let rows = versions
            .iter()
            .enumerate()
            .map(|(j, &(t, y))| DesignRow::from_mean(format!("{pair_id}-{j}"), t, y))
            .collect();
        DesignGroup { pair_id, rows }
    }

    /// Number of versions J.
    pub fn j(&self) -> usize {
        self.rows.len()
    }

    /// `(treated, control)` version counts.
    pub fn arm_counts(&self) -> (usize, usize) {
        let t = self.rows.iter().filter(|r| r.treatment).count();
        (t, self.rows.len() - t)
    }

    /// Mean treated outcome minus mean control outcome.
    pub fn contrast(&self) -> Result<f64> {
        let (t, c) = self.arm_counts();
        if t == 0 || c == 0 {
            return Err(Error::EmptyArm(format!(
                "pair {} has {} treated and {} control versions",
                self.pair_id, t, c
            )));
        }
        Ok(arm_contrast(self.rows.iter().map(|r| (r.treatment, r.outcome)), t, c))
    }

    pub fn n_evals(&self) -> usize {
        self.rows.iter().map(|r| r.evals.len()).sum()
    }
}

pub(crate) fn arm_contrast(rows: impl Iterator<Item = (bool, f64)>, t: usize, c: usize) -> f64 {
    let (mut st, mut sc) = (0.0, 0.0);
    for (treated, y) in rows {
        if treated {
            st += y;
        } else {
            sc += y;
        }
    }
    st / t as f64 - sc / c as f64
}

/// Builds one group per pair for `outcome`. Versions with no evaluation of
/// that outcome are left out; a pair left with a single arm is kept so that
/// estimators can report it.
pub fn design_groups(corpus: &Corpus, outcome: Outcome) -> Vec<DesignGroup> {
    let mut by_text: HashMap<&str, Vec<EvalObs>> = HashMap::new();
    for e in corpus.evaluations().iter().filter(|e| e.outcome == outcome) {
        by_text
            .entry(e.text_id.as_str())
            .or_default()
            .push(EvalObs { evaluator_id: e.evaluator_id.clone(), value: e.value });
    }
    corpus
        .pairs()
        .into_iter()
        .filter_map(|pair| {
            let rows: Vec<DesignRow> = pair
                .versions()
                .filter_map(|u| {
                    by_text
                        .remove(u.text_id.as_str())
                        .map(|ev| DesignRow::from_evals(u.text_id.clone(), u.treatment, ev))
                })
                .collect();
            (!rows.is_empty()).then(|| DesignGroup::new(pair.pair_id, rows))
        })
        .collect()
}

fn check_groups(groups: &[DesignGroup]) -> Result<Vec<f64>> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("no design groups".into()));
    }
    groups.iter().map(DesignGroup::contrast).collect()
}

fn counts(groups: &[DesignGroup]) -> (usize, usize) {
    (groups.iter().map(|g| g.j()).sum(), groups.iter().map(|g| g.n_evals()).sum())
}

/// Paired estimator: the mean over groups of the within-group arm contrast.
/// The standard error is the sample standard deviation of the contrasts over
/// the square root of the number of groups.
pub fn tau_t_hat(groups: &[DesignGroup]) -> Result<EffectEstimate> {
    let contrasts = check_groups(groups)?;
    let (n_texts, n_evals) = counts(groups);
    let mut est = EffectEstimate::new("tau_t_hat", stats::mean(&contrasts))
        .with_counts(n_texts, n_evals)
        .with_meta("n_pairs", groups.len());
    if contrasts.len() >= 2 {
        est = est.with_std_error(stats::std_error(&contrasts));
    }
    Ok(est)
}

/// Which texts enter the document-level difference in means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextScope {
    #[default]
    All,
    OriginalsOnly,
}

/// Document-level contrast: mean outcome of D=1 texts minus that of D=0
/// texts, ignoring pairing. Text outcomes are evaluation means.
pub fn tau_d_hat(corpus: &Corpus, outcome: Outcome, scope: TextScope) -> Result<EffectEstimate> {
    let mut sums: HashMap<&str, (f64, usize)> = HashMap::new();
    for e in corpus.evaluations().iter().filter(|e| e.outcome == outcome) {
        let s = sums.entry(e.text_id.as_str()).or_insert((0.0, 0));
        s.0 += e.value;
        s.1 += 1;
    }
    let (mut treated, mut control) = (Vec::new(), Vec::new());
    let mut n_evals = 0;
    for u in corpus.units() {
        if scope == TextScope::OriginalsOnly && !u.is_original() {
            continue;
        }
        if let Some(&(s, n)) = sums.get(u.text_id.as_str()) {
            n_evals += n;
            if u.treatment { treated.push(s / n as f64) } else { control.push(s / n as f64) }
        }
    }
    if treated.is_empty() || control.is_empty() {
        return Err(Error::EmptyArm(format!(
            "outcome {outcome}: {} treated and {} control texts",
            treated.len(),
            control.len()
        )));
    }
    let point = stats::mean(&treated) - stats::mean(&control);
    let mut est = EffectEstimate::new("tau_d_hat", point)
        .with_outcome(outcome)
        .with_counts(treated.len() + control.len(), n_evals)
        .with_meta("scope", serde_json::to_value(scope)?);
    if treated.len() >= 2 && control.len() >= 2 {
        let se = (stats::variance(&treated) / treated.len() as f64
            + stats::variance(&control) / control.len() as f64)
            .sqrt();
        est = est.with_std_error(se);
    }
    Ok(est)
}

/// Settings for [`analyze_outcome`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub n_perm: usize,
    pub seed: u64,
}

/// Full design-based analysis of one outcome: WLS point estimate,
/// evaluator-clustered standard error and permutation p-value.
pub fn analyze_outcome(corpus: &Corpus, outcome: Outcome, opts: &AnalysisOptions) -> Result<EffectEstimate> {
    let groups = design_groups(corpus, outcome);
    let wls = tau_t_wls(&groups)?;
    let se = clustered_se(&groups)?;
    let perm = permutation_test(&groups, opts.n_perm, opts.seed)?;
    let control_mean = stats::mean(
        &groups
            .iter()
            .map(|g| {
                let c: Vec<f64> = g.rows.iter().filter(|r| !r.treatment).map(|r| r.outcome).collect();
                stats::mean(&c)
            })
            .collect::<Vec<_>>(),
    );
    let mut est = EffectEstimate::new("tau_t_wls", wls.point)
        .with_outcome(outcome)
        .with_std_error(se.std_error)
        .with_counts(wls.n_texts, wls.n_evals)
        .with_meta("n_pairs", groups.len())
        .with_meta("n_clusters", se.n_clusters)
        .with_meta("se_method", "evaluator_clustered_cr1")
        .with_meta("n_permutations", perm.n_perm)
        .with_meta("control_mean", control_mean);
    est.p_value = Some(perm.p_value);
    Ok(est)
}
