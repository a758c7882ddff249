//! Adjustment estimators of the average treatment effect on unit-level data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::nuisance::NuisanceFits;
use crate::error::{Error, Result};
use crate::estimate::EffectEstimate;
use crate::linalg;
use crate::stats;

fn arms(treatment: &[bool], outcome: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if treatment.len() != outcome.len() {
        return Err(Error::InvalidInput("treatment and outcome differ in length".into()));
    }
    let t: Vec<f64> = treatment.iter().zip(outcome).filter(|(t, _)| **t).map(|(_, y)| *y).collect();
    let c: Vec<f64> = treatment.iter().zip(outcome).filter(|(t, _)| !**t).map(|(_, y)| *y).collect();
    if t.is_empty() || c.is_empty() {
        return Err(Error::EmptyArm(format!("{} treated and {} control units", t.len(), c.len())));
    }
    Ok((t, c))
}

pub fn diff_in_means(treatment: &[bool], outcome: &[f64]) -> Result<EffectEstimate> {
    let (t, c) = arms(treatment, outcome)?;
    let mut est = EffectEstimate::new("diff_in_means", stats::mean(&t) - stats::mean(&c)).with_counts(outcome.len(), 0);
    if t.len() >= 2 && c.len() >= 2 {
        est = est.with_std_error((stats::variance(&t) / t.len() as f64 + stats::variance(&c) / c.len() as f64).sqrt());
    }
    Ok(est)
}

/// Treatment coefficient from least squares of the outcome on an intercept,
/// the treatment indicator and topic indicators. Redundant indicators are
/// dropped and listed in the metadata.
pub fn topic_adjusted<S: AsRef<str>>(treatment: &[bool], outcome: &[f64], topic: &[S]) -> Result<EffectEstimate> {
    arms(treatment, outcome)?;
    if topic.len() != outcome.len() {
        return Err(Error::InvalidInput("topic and outcome differ in length".into()));
    }
    let levels: BTreeMap<&str, usize> = {
        let mut m = BTreeMap::new();
        for t in topic {
            let next = m.len();
            m.entry(t.as_ref()).or_insert(next);
        }
        m
    };
    let names: Vec<&str> = levels.keys().copied().collect();
    let mut columns = vec![vec![1.0; outcome.len()], treatment.iter().map(|&t| f64::from(u8::from(t))).collect()];
    for name in &names {
        columns.push(topic.iter().map(|t| f64::from(u8::from(t.as_ref() == *name))).collect());
    }
    let fit = linalg::lstsq(&columns, outcome)?;
    let beta = fit.coef[1].ok_or_else(|| Error::SingularDesign("treatment is collinear with topic".into()))?;
    let dropped: Vec<&str> = fit.dropped.iter().filter(|&&j| j >= 2).map(|&j| names[j - 2]).collect();
    Ok(EffectEstimate::new("topic_adjusted", beta)
        .with_counts(outcome.len(), 0)
        .with_meta("n_topics", names.len())
        .with_meta("dropped_topics", dropped))
}

fn count_extreme(e: &[f64]) -> usize {
    e.iter().filter(|&&p| p <= 0.0 || p >= 1.0 || p.is_nan()).count()
}

/// Self-normalised (Hajek) inverse propensity weighting.
pub fn ipw_estimate(fits: &NuisanceFits) -> Result<EffectEstimate> {
    arms(&fits.treatment, &fits.outcome)?;
    let count = count_extreme(&fits.propensity);
    if count > 0 {
        return Err(Error::ExtremePropensity { count });
    }
    let (mut sw, mut swy, mut sv, mut svy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..fits.len() {
        let (y, e) = (fits.outcome[i], fits.propensity[i]);
        if fits.treatment[i] {
            sw += 1.0 / e;
            swy += y / e;
        } else {
            sv += 1.0 / (1.0 - e);
            svy += y / (1.0 - e);
        }
    }
    let (mu1, mu0) = (swy / sw, svy / sv);
    let n = fits.len() as f64;
    let psi: Vec<f64> = (0..fits.len())
        .map(|i| {
            let (y, e) = (fits.outcome[i], fits.propensity[i]);
            if fits.treatment[i] {
                (y - mu1) / e / (sw / n)
            } else {
                -(y - mu0) / (1.0 - e) / (sv / n)
            }
        })
        .collect();
    Ok(EffectEstimate::new("bow_ipw", mu1 - mu0)
        .with_std_error(stats::std_error(&psi))
        .with_counts(fits.len(), 0)
        .with_meta("weighting", "hajek"))
}

/// Mean over all units of `q1 - q0`.
pub fn or_estimate(fits: &NuisanceFits) -> Result<EffectEstimate> {
    if fits.is_empty() {
        return Err(Error::InvalidInput("no units".into()));
    }
    let d: Vec<f64> = fits.q1.iter().zip(&fits.q0).map(|(a, b)| a - b).collect();
    Ok(EffectEstimate::new("bow_or", stats::mean(&d)).with_counts(fits.len(), 0))
}

/// Mean of `q1 - q0 + T (Y - q1) / e - (1 - T) (Y - q0) / (1 - e)`.
pub fn aipw_estimate(fits: &NuisanceFits) -> Result<EffectEstimate> {
    if fits.is_empty() {
        return Err(Error::InvalidInput("no units".into()));
    }
    let count = count_extreme(&fits.propensity);
    if count > 0 {
        return Err(Error::NonComputable { count });
    }
    let psi: Vec<f64> = (0..fits.len())
        .map(|i| {
            let (y, e, q1, q0) = (fits.outcome[i], fits.propensity[i], fits.q1[i], fits.q0[i]);
            let aug = if fits.treatment[i] { (y - q1) / e } else { -(y - q0) / (1.0 - e) };
            q1 - q0 + aug
        })
        .collect();
    let mut est = EffectEstimate::new("bow_aipw", stats::mean(&psi)).with_counts(fits.len(), 0);
    if psi.len() >= 2 {
        est = est.with_std_error(stats::std_error(&psi));
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Trim,
    #[default]
    Winsorize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropensityBounds {
    pub lo: f64,
    pub hi: f64,
    pub mode: BoundMode,
}

impl Default for PropensityBounds {
    fn default() -> Self {
        PropensityBounds { lo: 0.1, hi: 0.9, mode: BoundMode::Winsorize }
    }
}

/// Winsorizing clips propensities to `[lo, hi]` and keeps every unit;
/// trimming drops units outside `[lo, hi]`. Returns the bounded fits and
/// the indices of the units kept.
pub fn bound_propensities(fits: &NuisanceFits, lo: f64, hi: f64, mode: BoundMode) -> Result<(NuisanceFits, Vec<usize>)> {
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(Error::invalid_parameter("propensity bounds", format!("need 0 < lo < hi < 1, got [{lo}, {hi}]")));
    }
    match mode {
        BoundMode::Winsorize => {
            let mut out = fits.clone();
            for e in &mut out.propensity {
                *e = e.clamp(lo, hi);
            }
            Ok((out, (0..fits.len()).collect()))
        }
        BoundMode::Trim => {
            let keep: Vec<usize> = (0..fits.len()).filter(|&i| (lo..=hi).contains(&fits.propensity[i])).collect();
            if keep.is_empty() {
                return Err(Error::AllTrimmed { lo, hi });
            }
            Ok((fits.subset(&keep), keep))
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn fits(t: &[bool], y: &[f64], e: &[f64], q1: &[f64], q0: &[f64]) -> NuisanceFits {
        NuisanceFits {
            doc_ids: (0..t.len()).map(|i| format!("u{i}")).collect(),
            treatment: t.to_vec(),
            outcome: y.to_vec(),
            propensity: e.to_vec(),
            q1: q1.to_vec(),
            q0: q0.to_vec(),
            fold: vec![0; t.len()],
        }
    }

    #[test]
    fn difference_in_means_identities() {
        let t = [true, false, true, false];
        let y: Vec<f64> = t.iter().map(|&b| f64::from(u8::from(b))).collect();
        assert_eq!(diff_in_means(&t, &y).unwrap().point, 1.0);
        assert_eq!(diff_in_means(&t, &[2.0; 4]).unwrap().point, 0.0);
        assert!(matches!(diff_in_means(&[true, true], &[1.0, 2.0]), Err(Error::EmptyArm(_))));
    }

    #[test]
    fn hand_hajek() {
        let f = fits(
            &[true, true, false, false],
            &[2.0, 4.0, 1.0, 3.0],
            &[0.5, 0.8, 0.5, 0.2],
            &[0.0; 4],
            &[0.0; 4],
        );
        // treated: (2/0.5 + 4/0.8) / (2 + 1.25) = 9 / 3.25; control: (2 + 3.75) / (2 + 1.25)
        let est = ipw_estimate(&f).unwrap();
        assert!((est.point - (9.0 / 3.25 - 5.75 / 3.25)).abs() < 1e-12);
        assert!((est.point - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_propensity_is_difference_in_means() {
        let t = [true, false, true, false, true];
        let y = [3.0, 1.0, 2.5, 0.5, 4.0];
        let f = fits(&t, &y, &[0.5; 5], &[0.0; 5], &[0.0; 5]);
        let dim = diff_in_means(&t, &y).unwrap().point;
        assert!((ipw_estimate(&f).unwrap().point - dim).abs() < 1e-12);
    }

    #[test]
    fn extreme_propensities_are_refused() {
        let f = fits(&[true, false], &[1.0, 0.0], &[1.0, 0.5], &[0.0; 2], &[0.0; 2]);
        assert!(matches!(ipw_estimate(&f), Err(Error::ExtremePropensity { count: 1 })));
        assert!(matches!(aipw_estimate(&f), Err(Error::NonComputable { count: 1 })));
    }

    #[test]
    fn outcome_regression_and_exact_augmentation() {
        let t = [true, false, true];
        let q1 = [2.0, 3.0, 4.0];
        let q0 = [1.0, 1.0, 1.0];
        let y = [2.0, 1.0, 4.0];
        let f = fits(&t, &y, &[0.3, 0.6, 0.7], &q1, &q0);
        let or = or_estimate(&f).unwrap().point;
        assert!((or - 2.0).abs() < 1e-12);
        assert!((aipw_estimate(&f).unwrap().point - or).abs() < 1e-12);
        let same = fits(&t, &y, &[0.5; 3], &q0, &q0);
        assert_eq!(or_estimate(&same).unwrap().point, 0.0);
    }

    #[test]
    fn bounding_modes() {
        let f = fits(&[true, false, true], &[1.0, 0.0, 1.0], &[0.5, 0.95, 0.05], &[0.0; 3], &[0.0; 3]);
        let (w, kept) = bound_propensities(&f, 0.1, 0.9, BoundMode::Winsorize).unwrap();
        assert_eq!(w.propensity, vec![0.5, 0.9, 0.1]);
        assert_eq!(kept, vec![0, 1, 2]);
        let (t, kept) = bound_propensities(&f, 0.1, 0.9, BoundMode::Trim).unwrap();
        assert_eq!(kept, vec![0]);
        assert_eq!(t.propensity, vec![0.5]);
        let all_out = fits(&[true], &[1.0], &[0.99], &[0.0], &[0.0]);
        assert!(matches!(bound_propensities(&all_out, 0.1, 0.9, BoundMode::Trim), Err(Error::AllTrimmed { .. })));
        assert!(bound_propensities(&f, 0.6, 0.4, BoundMode::Trim).is_err());
    }

    #[test]
    fn topic_adjustment() {
        let t = [true, false, true, false, true, false];
        let y = [3.0, 1.0, 2.0, 1.5, 4.0, 0.0];
        let one = ["a"; 6];
        let dim = diff_in_means(&t, &y).unwrap().point;
        let est = topic_adjusted(&t, &y, &one).unwrap();
        assert!((est.point - dim).abs() < 1e-12);
        assert_eq!(est.metadata["dropped_topics"], serde_json::json!(["a"]));

        // Balanced topics with an additive topic shift: the shift is absorbed.
        let topics = ["a", "a", "b", "b", "c", "c"];
        let shifted: Vec<f64> = y
            .iter()
            .zip(&topics)
            .map(|(v, k)| v + match *k { "a" => 0.0, "b" => 10.0, _ => -5.0 })
            .collect();
        let adj = topic_adjusted(&t, &shifted, &topics).unwrap();
        assert!((adj.point - dim).abs() < 1e-10);
    }
}
