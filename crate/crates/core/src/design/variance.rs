//! Weighted least squares with absorbed pair effects, and sandwich variances.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::DesignGroup;
use crate::error::{Error, Result};
use crate::estimate::EffectEstimate;
use crate::linalg;

/// Within-pair demeaned regression data.
struct Within {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    /// Evaluator index per observation (evaluation level only).
    cluster: Vec<usize>,
    n_clusters: usize,
    n_groups: usize,
    n_texts: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Level {
    Text,
    Evaluation,
}

fn within(groups: &[DesignGroup], level: Level) -> Result<Within> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("no design groups".into()));
    }
    let mut out = Within {
        x: Vec::new(),
        y: Vec::new(),
        w: Vec::new(),
        cluster: Vec::new(),
        n_clusters: 0,
        n_groups: groups.len(),
        n_texts: 0,
    };
    let mut evaluators: HashMap<&str, usize> = HashMap::new();
    for g in groups {
        let (t, c) = g.arm_counts();
        if t == 0 || c == 0 {
            return Err(Error::EmptyArm(format!("pair {} lacks a treatment arm", g.pair_id)));
        }
        let start = out.x.len();
        for r in &g.rows {
            let w = 1.0 / if r.treatment { t } else { c } as f64;
            let x = if r.treatment { 1.0 } else { 0.0 };
            match level {
                Level::Text => {
                    out.x.push(x);
                    out.y.push(r.outcome);
                    out.w.push(w);
                }
                Level::Evaluation => {
                    if r.evals.is_empty() {
                        return Err(Error::InvalidInput(format!(
                            "text {} has no evaluation-level data",
                            r.text_id
                        )));
                    }
                    let we = w / r.evals.len() as f64;
                    for e in &r.evals {
                        let next = evaluators.len();
                        out.cluster.push(*evaluators.entry(e.evaluator_id.as_str()).or_insert(next));
                        out.x.push(x);
                        out.y.push(e.value);
                        out.w.push(we);
                    }
                }
            }
        }
        out.n_texts += g.rows.len();
        let sw: f64 = out.w[start..].iter().sum();
        let xbar: f64 = out.w[start..].iter().zip(&out.x[start..]).map(|(w, x)| w * x).sum::<f64>() / sw;
        let ybar: f64 = out.w[start..].iter().zip(&out.y[start..]).map(|(w, y)| w * y).sum::<f64>() / sw;
        for i in start..out.x.len() {
            out.x[i] -= xbar;
            out.y[i] -= ybar;
        }
    }
    out.n_clusters = evaluators.len();
    Ok(out)
}

fn slope(d: &Within) -> Result<f64> {
    let sx: Vec<f64> = d.x.iter().zip(&d.w).map(|(x, w)| x * w.sqrt()).collect();
    let sy: Vec<f64> = d.y.iter().zip(&d.w).map(|(y, w)| y * w.sqrt()).collect();
    let fit = linalg::lstsq(&[sx], &sy)?;
    fit.coef[0].ok_or_else(|| Error::SingularDesign("treatment has no within-pair variation".into()))
}

/// Treatment coefficient of the pair fixed-effects WLS regression on
/// text-level outcomes, with weights one over the number of same-arm
/// versions in the pair.
pub fn tau_t_wls(groups: &[DesignGroup]) -> Result<EffectEstimate> {
    let d = within(groups, Level::Text)?;
    let beta = slope(&d)?;
    let n_evals = groups.iter().map(|g| g.n_evals()).sum();
    Ok(EffectEstimate::new("tau_t_wls", beta)
        .with_counts(d.n_texts, n_evals)
        .with_meta("n_pairs", d.n_groups)
        .with_meta("level", "text"))
}

/// Same regression at evaluation level, each evaluation weighted by its
/// text weight divided by the text's evaluation count, with an
/// evaluator-clustered standard error.
pub fn tau_t_wls_evaluations(groups: &[DesignGroup]) -> Result<EffectEstimate> {
    let d = within(groups, Level::Evaluation)?;
    let beta = slope(&d)?;
    let se = sandwich(&d, beta, &d.cluster, d.n_clusters)?;
    Ok(EffectEstimate::new("tau_t_wls", beta)
        .with_std_error(se.std_error)
        .with_counts(d.n_texts, d.x.len())
        .with_meta("n_pairs", d.n_groups)
        .with_meta("n_clusters", se.n_clusters)
        .with_meta("level", "evaluation"))
}

/// A sandwich standard error and the quantities behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichSe {
    pub std_error: f64,
    pub n_clusters: usize,
    pub n_obs: usize,
    pub small_sample_factor: f64,
}

fn sandwich(d: &Within, beta: f64, cluster: &[usize], n_clusters: usize) -> Result<SandwichSe> {
    if n_clusters < 2 {
        return Err(Error::SingleCluster(n_clusters));
    }
    let mut scores = vec![0.0; n_clusters];
    let mut bread = 0.0;
    for i in 0..d.x.len() {
        let e = d.y[i] - beta * d.x[i];
        scores[cluster[i]] += d.w[i] * d.x[i] * e;
        bread += d.w[i] * d.x[i] * d.x[i];
    }
    let meat: f64 = scores.iter().map(|s| s * s).sum();
    let n = d.x.len() as f64;
    let k = (1 + d.n_groups) as f64;
    let g = n_clusters as f64;
    let dof = if n > k { (n - 1.0) / (n - k) } else { 1.0 };
    let factor = g / (g - 1.0) * dof;
    Ok(SandwichSe {
        std_error: (factor * meat).sqrt() / bread,
        n_clusters,
        n_obs: d.x.len(),
        small_sample_factor: factor,
    })
}

/// Evaluator-clustered (CR1) standard error of the evaluation-level WLS
/// treatment coefficient. The degrees-of-freedom count includes the
/// absorbed pair effects.
pub fn clustered_se(groups: &[DesignGroup]) -> Result<SandwichSe> {
    let d = within(groups, Level::Evaluation)?;
    let beta = slope(&d)?;
    sandwich(&d, beta, &d.cluster, d.n_clusters)
}

/// Heteroskedasticity-robust (HC1) standard error: every evaluation is its
/// own cluster.
pub fn hc_se(groups: &[DesignGroup]) -> Result<SandwichSe> {
    let d = within(groups, Level::Evaluation)?;
    let beta = slope(&d)?;
    let own: Vec<usize> = (0..d.x.len()).collect();
    sandwich(&d, beta, &own, d.x.len())
}
