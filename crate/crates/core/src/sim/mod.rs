//! Semi-synthetic confounding built by selecting real texts.
//!
//! A replica resamples evaluations, optionally amplifies the respect
//! confounder and injects a treatment effect, dichotomizes, computes the
//! paired ground truth on the full modified corpus, and only then selects
//! the observational view with respect- and treatment-dependent
//! probabilities.

mod output;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Evaluation, LatentFeature, LatentRating, TextUnit, ValueScale};
use crate::design::{design_groups, tau_t_hat};
use crate::error::{Error, Result};
use crate::estimate::{EffectEstimate, Outcome};
use crate::{rng, stats};

pub use output::{read_truth, text_outcomes, write_bands, write_replica_dir, write_truth, write_view_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfoundingMode {
    /// Selection only; outcomes are left as observed.
    #[default]
    Baseline,
    /// Selection plus respect amplification and effect injection.
    Amplified,
}

/// How each replica redraws evaluations before modification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// One evaluation per text and outcome, drawn uniformly.
    #[default]
    OnePerText,
    /// Every evaluation is kept; replicas differ only in selection.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfoundingConfig {
    pub mode: ConfoundingMode,
    /// Slope of the selection probability in respect (kappa).
    pub selection_strength: f64,
    /// Selection probabilities are kept inside [floor, 1 - floor].
    pub selection_floor: f64,
    /// Likert steps added to respectful texts and removed from the others.
    pub outcome_shift: u32,
    /// Added to treated outcomes and removed from control outcomes.
    pub effect_delta: f64,
    pub dichotomize_threshold: u32,
    pub n_replicas: usize,
    pub resampling: Resampling,
    pub seed: u64,
}

impl Default for ConfoundingConfig {
    fn default() -> Self {
        ConfoundingConfig {
            mode: ConfoundingMode::Baseline,
            selection_strength: 0.8,
            selection_floor: 0.05,
            outcome_shift: 1,
            effect_delta: 0.6,
            dichotomize_threshold: 4,
            n_replicas: 100,
            resampling: Resampling::OnePerText,
            seed: 0,
        }
    }
}

impl ConfoundingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.selection_strength >= 0.0 && self.selection_strength.is_finite()) {
            return Err(Error::invalid_parameter("selection_strength", "must be finite and non-negative"));
        }
        if !(self.selection_floor > 0.0 && self.selection_floor < 0.5) {
            return Err(Error::invalid_parameter("selection_floor", "must lie in (0, 0.5)"));
        }
        if !(self.effect_delta >= 0.0 && self.effect_delta.is_finite()) {
            return Err(Error::invalid_parameter("effect_delta", "must be finite and non-negative"));
        }
        if !(2..=5).contains(&self.dichotomize_threshold) {
            return Err(Error::invalid_parameter("dichotomize_threshold", "must lie in 2..=5"));
        }
        if self.n_replicas == 0 {
            return Err(Error::invalid_parameter("n_replicas", "must be positive"));
        }
        Ok(())
    }

    pub fn replica_seed(&self, replica: usize) -> u64 {
        rng::derive_seed(self.seed, &[rng::str_tag("replica"), replica as u64])
    }
}

/// `clamp(0.5 + kappa * (2T - 1) * (r - 50) / 100, floor, 1 - floor)`.
pub fn selection_probability(respect: f64, treated: bool, kappa: f64, floor: f64) -> f64 {
    let sign = if treated { 1.0 } else { -1.0 };
    (0.5 + kappa * sign * (respect - 50.0) / 100.0).clamp(floor, 1.0 - floor)
}

fn respect_by_text<'a>(units: &'a [TextUnit], ratings: &'a [LatentRating]) -> Result<HashMap<&'a str, f64>> {
    let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
    for r in ratings.iter().filter(|r| r.feature == LatentFeature::Respect) {
        let e = acc.entry(r.text_id.as_str()).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    units
        .iter()
        .map(|u| {
            acc.get(u.text_id.as_str())
                .map(|&(s, n)| (u.text_id.as_str(), s / n as f64))
                .ok_or_else(|| Error::MissingRating { text_id: u.text_id.clone(), feature: "respect".into() })
        })
        .collect()
}

/// Texts kept in the observational view for one replica, in corpus order.
/// Each text is kept independently with its selection probability.
pub fn select_filtered(corpus: &Corpus, config: &ConfoundingConfig, replica_seed: u64) -> Result<Vec<String>> {
    let respect = respect_by_text(corpus.units(), corpus.latent_ratings())?;
    Ok(corpus
        .units()
        .iter()
        .filter(|u| {
            let p = selection_probability(
                respect[u.text_id.as_str()],
                u.treatment,
                config.selection_strength,
                config.selection_floor,
            );
            rng::uniform(replica_seed, &[rng::str_tag("select"), rng::str_tag(&u.text_id)]) < p
        })
        .map(|u| u.text_id.clone())
        .collect())
}

/// Shifts each value by `+shift` when the text's mean respect is at least
/// the median over `units`, by `-shift` otherwise, and clips to [1, 5].
pub fn amplify_outcomes(
    evaluations: &[Evaluation],
    units: &[TextUnit],
    ratings: &[LatentRating],
    shift: u32,
) -> Result<Vec<Evaluation>> {
    let respect = respect_by_text(units, ratings)?;
    let median = stats::median(&respect.values().copied().collect::<Vec<_>>());
    let s = f64::from(shift);
    evaluations
        .iter()
        .map(|e| {
            let r = respect
                .get(e.text_id.as_str())
                .ok_or_else(|| Error::MissingRating { text_id: e.text_id.clone(), feature: "respect".into() })?;
            let delta = if *r >= median { s } else { -s };
            Ok(Evaluation { value: (e.value + delta).clamp(1.0, 5.0), ..e.clone() })
        })
        .collect()
}

/// Adds `delta` to treated texts' values and subtracts it from control
/// texts' values, without clipping.
pub fn inject_effect(evaluations: &[Evaluation], units: &[TextUnit], delta: f64) -> Result<Vec<Evaluation>> {
    let treated: HashMap<&str, bool> = units.iter().map(|u| (u.text_id.as_str(), u.treatment)).collect();
    evaluations
        .iter()
        .map(|e| {
            let t = treated
                .get(e.text_id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("evaluation `{}` refers to unknown text", e.eval_id)))?;
            Ok(Evaluation { value: if *t { e.value + delta } else { e.value - delta }, ..e.clone() })
        })
        .collect()
}

/// 1 if the value is at least `threshold`, else 0.
pub fn dichotomize(evaluations: &[Evaluation], threshold: f64) -> Vec<Evaluation> {
    evaluations
        .iter()
        .map(|e| Evaluation { value: if e.value >= threshold { 1.0 } else { 0.0 }, ..e.clone() })
        .collect()
}

fn resample(evaluations: &[Evaluation], replica_seed: u64) -> Vec<Evaluation> {
    let mut groups: BTreeMap<(&str, Outcome), Vec<&Evaluation>> = BTreeMap::new();
    for e in evaluations {
        groups.entry((e.text_id.as_str(), e.outcome)).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|((text, outcome), evs)| {
            let mut r = rng::stream(replica_seed, &[rng::str_tag("resample"), rng::str_tag(text), outcome as u64]);
            evs[r.random_range(0..evs.len())].clone()
        })
        .collect()
}

/// One semi-synthetic dataset.
#[derive(Debug, Clone)]
pub struct Replica {
    pub replica_index: usize,
    pub selected_text_ids: Vec<String>,
    /// Modified (binary) evaluations of every text, selected or not.
    pub evaluations: Vec<Evaluation>,
    pub ground_truth: BTreeMap<Outcome, EffectEstimate>,
}

impl Replica {
    /// The full corpus with this replica's outcomes.
    pub fn full(&self, corpus: &Corpus) -> Result<Corpus> {
        corpus.with_evaluations(self.evaluations.clone(), ValueScale::Continuous)
    }

    /// The observational view: selected texts only.
    pub fn view(&self, corpus: &Corpus) -> View {
        let keep: HashSet<&str> = self.selected_text_ids.iter().map(String::as_str).collect();
        View {
            units: corpus.units().iter().filter(|u| keep.contains(u.text_id.as_str())).cloned().collect(),
            evaluations: self.evaluations.iter().filter(|e| keep.contains(e.text_id.as_str())).cloned().collect(),
        }
    }
}

/// Selected texts with their modified evaluations. Unlike a [`Corpus`], a
/// view need not contain complete pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub units: Vec<TextUnit>,
    pub evaluations: Vec<Evaluation>,
}

impl View {
    /// Outcome labels with at least one evaluation, in label order.
    pub fn outcomes(&self) -> Vec<Outcome> {
        let present: HashSet<Outcome> = self.evaluations.iter().map(|e| e.outcome).collect();
        Outcome::ALL.into_iter().filter(|o| present.contains(o)).collect()
    }
}

/// Builds replica `index`. Depends only on `(config.seed, index)`.
pub fn generate_replica(corpus: &Corpus, config: &ConfoundingConfig, index: usize) -> Result<Replica> {
    config.validate()?;
    let seed = config.replica_seed(index);
    let mut evals = match config.resampling {
        Resampling::OnePerText => resample(corpus.evaluations(), seed),
        Resampling::None => corpus.evaluations().to_vec(),
    };
    if config.mode == ConfoundingMode::Amplified {
        evals = amplify_outcomes(&evals, corpus.units(), corpus.latent_ratings(), config.outcome_shift)?;
        evals = inject_effect(&evals, corpus.units(), config.effect_delta)?;
    }
    let evals = dichotomize(&evals, f64::from(config.dichotomize_threshold));
    let full = corpus.with_evaluations(evals, ValueScale::Continuous)?;
    let mut ground_truth = BTreeMap::new();
    for outcome in full.outcomes() {
        let est = tau_t_hat(&design_groups(&full, outcome))?
            .with_outcome(outcome)
            .with_meta("replica", index);
        ground_truth.insert(outcome, est);
    }
    let selected_text_ids = select_filtered(corpus, config, seed)?;
    Ok(Replica {
        replica_index: index,
        selected_text_ids,
        evaluations: full.evaluations().to_vec(),
        ground_truth,
    })
}

/// Percentile band of ground-truth estimates across replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBand {
    pub outcome: Outcome,
    pub lo: f64,
    pub hi: f64,
    pub median: f64,
    pub n_replicas: usize,
}

impl TruthBand {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// [2.5, 97.5] percentile band per outcome.
pub fn truth_bands(replicas: &[Replica]) -> Vec<TruthBand> {
    bands_from_truths(replicas.iter().map(|r| &r.ground_truth))
}

/// Bands from per-replica ground truths, e.g. ones read back from disk.
pub fn bands_from_truths<'a>(truths: impl IntoIterator<Item = &'a BTreeMap<Outcome, EffectEstimate>>) -> Vec<TruthBand> {
    let mut by_outcome: BTreeMap<Outcome, Vec<f64>> = BTreeMap::new();
    for truth in truths {
        for (o, e) in truth {
            by_outcome.entry(*o).or_default().push(e.point);
        }
    }
    by_outcome
        .into_iter()
        .map(|(outcome, pts)| TruthBand {
            outcome,
            lo: stats::percentile(&pts, 2.5),
            hi: stats::percentile(&pts, 97.5),
            median: stats::median(&pts),
            n_replicas: pts.len(),
        })
        .collect()
}

/// All replicas (built in parallel) and their truth bands.
pub fn generate_replicas(corpus: &Corpus, config: &ConfoundingConfig) -> Result<(Vec<Replica>, Vec<TruthBand>)> {
    config.validate()?;
    let replicas = (0..config.n_replicas)
        .into_par_iter()
        .map(|i| generate_replica(corpus, config, i))
        .collect::<Result<Vec<_>>>()?;
    let bands = truth_bands(&replicas);
    Ok((replicas, bands))
}
