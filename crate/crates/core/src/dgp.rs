//! Fully synthetic paired corpora with known effects.
//!
//! Each pair draws a document label `D`, a latent confounder
//! `Z = z0 + z_shift * D + z_resolution * m` with `m` uniform on
//! `{-M, ..., M}`, and an original text with `T = D`. The edit flips `T` and
//! keeps `Z`. Words encode both exactly:
//!
//! * the total number of treatment-marker tokens is `marker_counts[T]`,
//!   with each occurrence drawn at random from the marker set, so single
//!   markers are only weakly informative while their total decodes `T`;
//! * the total number of confounder-marker tokens is the index of `Z` in a
//!   sorted codebook of attainable values, spread round-robin over the
//!   confounder tokens so each token's count is monotone in `Z`;
//! * filler tokens are shared by the original and its edit.
//!
//! Outcomes are `alpha + tau * T + beta * Z` plus Gaussian noise per
//! evaluation, so `tau_t = tau` and `tau_d = tau + beta * z_shift`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Evaluation, LatentFeature, LatentRating, TextUnit, ValueScale};
use crate::error::{Error, Result};
use crate::estimate::Outcome;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub treatment_markers: Vec<String>,
    pub confounder_markers: Vec<String>,
    pub filler: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let make = |stem: &str, n: usize| (0..n).map(|i| format!("{stem}{i}")).collect();
        Vocabulary {
            treatment_markers: make("hedge", 20),
            confounder_markers: make("civil", 8),
            filler: make("word", 300),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpParams {
    pub n_pairs: usize,
    /// P(D = 1).
    pub p_treat: f64,
    pub z0: f64,
    /// E[Z | D=1] - E[Z | D=0].
    pub z_shift: f64,
    /// Half-width of the uniform jitter added to Z.
    pub z_jitter: f64,
    /// Spacing of the jitter lattice.
    pub z_resolution: f64,
    pub tau: f64,
    pub beta: f64,
    pub alpha: f64,
    pub noise_sd: f64,
    pub vocab: Vocabulary,
    /// Filler tokens per document.
    pub tokens_per_doc: usize,
    /// Total treatment-marker occurrences for T = 0 and T = 1.
    pub marker_counts: [usize; 2],
    pub evals_per_text: usize,
    pub n_evaluators: usize,
    pub outcomes: Vec<Outcome>,
    pub topics: Vec<String>,
    /// Round and clamp outcomes to integers 1..=5.
    pub likert: bool,
    pub seed: u64,
}

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            n_pairs: 200,
            p_treat: 0.5,
            z0: 0.0,
            z_shift: 0.3,
            z_jitter: 1.0,
            z_resolution: 0.05,
            tau: 0.5,
            beta: 1.0,
            alpha: 0.0,
            noise_sd: 1.0,
            vocab: Vocabulary::default(),
            tokens_per_doc: 60,
            marker_counts: [3, 6],
            evals_per_text: 1,
            n_evaluators: 50,
            outcomes: vec![Outcome::Informative],
            topics: vec!["economy".into(), "health".into(), "education".into()],
            likert: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub tau_t: f64,
    pub tau_d: f64,
}

pub fn true_effects(params: &DgpParams) -> TrueEffects {
    TrueEffects { tau_t: params.tau, tau_d: params.tau + params.beta * params.z_shift }
}

/// Generating values for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub text_id: String,
    pub treatment: bool,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub truth: TrueEffects,
    pub latent: Vec<LatentTruth>,
    pub codebook: ZCodebook,
}

/// Sorted attainable values of Z; a document's confounder-marker count is
/// the index of its Z in this list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZCodebook {
    pub values: Vec<f64>,
}

impl ZCodebook {
    pub fn new(params: &DgpParams) -> Self {
        let m = jitter_steps(params);
        let mut values: Vec<f64> = Vec::new();
        for d in [0.0, 1.0] {
            for k in -m..=m {
                values.push(z_value(params, d, k));
            }
        }
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
        ZCodebook { values }
    }

    pub fn index_of(&self, z: f64) -> usize {
        self.values
            .iter()
            .position(|v| (v - z).abs() <= 1e-9 * (1.0 + v.abs()))
            .expect("Z values are generated from the codebook lattice")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

fn jitter_steps(params: &DgpParams) -> i64 {
    if params.z_jitter == 0.0 {
        0
    } else {
        (params.z_jitter / params.z_resolution).round() as i64
    }
}

fn z_value(params: &DgpParams, d: f64, k: i64) -> f64 {
    params.z0 + params.z_shift * d + params.z_resolution * k as f64
}

fn validate(params: &DgpParams) -> Result<()> {
    let bad = |name: &str, msg: &str| Err(Error::invalid_parameter(name, msg));
    if params.n_pairs == 0 {
        return bad("n_pairs", "must be positive");
    }
    if !(params.p_treat > 0.0 && params.p_treat < 1.0) {
        return bad("p_treat", "must lie in (0, 1)");
    }
    if !(params.noise_sd >= 0.0 && params.noise_sd.is_finite()) {
        return bad("noise_sd", "must be finite and non-negative");
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let bad_z = !(params.z_jitter >= 0.0) || !(params.z_resolution > 0.0);
    if bad_z {
        return bad("z_jitter", "jitter must be non-negative and resolution positive");
    }
    for (name, v) in [("z0", params.z0), ("z_shift", params.z_shift), ("tau", params.tau), ("beta", params.beta), ("alpha", params.alpha)] {
        if !v.is_finite() {
            return bad(name, "must be finite");
        }
    }
    let v = &params.vocab;
    if v.treatment_markers.is_empty() || v.confounder_markers.is_empty() || v.filler.is_empty() {
        return bad("vocab", "token sets must be non-empty");
    }
    let mut seen = std::collections::HashSet::new();
    for t in v.treatment_markers.iter().chain(&v.confounder_markers).chain(&v.filler) {
        if t.is_empty() || !t.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) {
            return bad("vocab", "tokens must be non-empty lowercase alphanumeric strings");
        }
        if !seen.insert(t.as_str()) {
            return bad("vocab", "token sets must be disjoint and free of duplicates");
        }
    }
    if params.marker_counts[0] == params.marker_counts[1] {
        return bad("marker_counts", "the two arms need different marker totals");
    }
    if params.evals_per_text == 0 || params.n_evaluators == 0 {
        return bad("evals_per_text", "evaluation and evaluator counts must be positive");
    }
    if params.outcomes.is_empty() || params.topics.is_empty() {
        return bad("outcomes", "at least one outcome and one topic are required");
    }
    Ok(())
}

fn compose(
    params: &DgpParams,
    treatment: bool,
    z_index: usize,
    filler: &[&str],
    r: &mut rng::StreamRng,
) -> String {
    let v = &params.vocab;
    let mut tokens: Vec<&str> = filler.to_vec();
    for _ in 0..params.marker_counts[usize::from(treatment)] {
        tokens.push(&v.treatment_markers[r.random_range(0..v.treatment_markers.len())]);
    }
    for k in 0..z_index {
        tokens.push(&v.confounder_markers[k % v.confounder_markers.len()]);
    }
    tokens.shuffle(r);
    tokens.join(" ")
}

/// Recovers `(T, Z)` from a document's words.
pub fn decode(body: &str, params: &DgpParams, codebook: &ZCodebook) -> Result<(bool, f64)> {
    let v = &params.vocab;
    let (mut markers, mut conf) = (0usize, 0usize);
    for tok in body.split_whitespace() {
        if v.treatment_markers.iter().any(|m| m == tok) {
            markers += 1;
        } else if v.confounder_markers.iter().any(|m| m == tok) {
            conf += 1;
        }
    }
    let t = match markers {
        c if c == params.marker_counts[1] => true,
        c if c == params.marker_counts[0] => false,
        c => return Err(Error::InvalidInput(format!("{c} treatment markers match neither arm"))),
    };
    let z = *codebook
        .values
        .get(conf)
        .ok_or_else(|| Error::InvalidInput(format!("{conf} confounder markers exceed the codebook")))?;
    Ok((t, z))
}

/// Draws a synthetic corpus. Respect ratings are Z rescaled to 0..100 over
/// the codebook range; the treatment rating is 75 for treated texts and 25
/// otherwise.
pub fn sample_dataset(params: &DgpParams) -> Result<SyntheticData> {
    validate(params)?;
    let codebook = ZCodebook::new(params);
    let m = jitter_steps(params);
    let noise = Normal::new(0.0, params.noise_sd).map_err(|e| Error::invalid_parameter("noise_sd", e.to_string()))?;
    let (zmin, zmax) = (codebook.min(), codebook.max());
    let respect = |z: f64| if zmax > zmin { 100.0 * (z - zmin) / (zmax - zmin) } else { 50.0 };
    let width = params.n_pairs.to_string().len().max(4);

    let mut units = Vec::with_capacity(2 * params.n_pairs);
    let mut evals = Vec::new();
    let mut ratings = Vec::new();
    let mut latent = Vec::new();
    for i in 0..params.n_pairs {
        let mut r = rng::stream(params.seed, &[rng::str_tag("dgp-pair"), i as u64]);
        let d = r.random::<f64>() < params.p_treat;
        let k = r.random_range(-m..=m);
        let z = z_value(params, if d { 1.0 } else { 0.0 }, k);
        let z_index = codebook.index_of(z);
        let topic = params.topics[r.random_range(0..params.topics.len())].clone();
        let filler: Vec<&str> = (0..params.tokens_per_doc)
            .map(|_| params.vocab.filler[r.random_range(0..params.vocab.filler.len())].as_str())
            .collect();
        let pair_id = format!("p{i:0width$}");
        for (version, treatment) in [(1u32, d), (2u32, !d)] {
            let text_id = format!("{pair_id}-v{version}");
            let body = compose(params, treatment, z_index, &filler, &mut r);
            let mu = params.alpha + params.tau * f64::from(u8::from(treatment)) + params.beta * z;
            for outcome in &params.outcomes {
                for e in 0..params.evals_per_text {
                    let mut y = mu + noise.sample(&mut r);
                    if params.likert {
                        y = y.round().clamp(1.0, 5.0);
                    }
                    evals.push(Evaluation {
                        eval_id: format!("{text_id}-{}-{e}", outcome.as_str()),
                        text_id: text_id.clone(),
                        evaluator_id: format!("rater{}", r.random_range(0..params.n_evaluators)),
                        outcome: *outcome,
                        value: y,
                    });
                }
            }
            ratings.push(LatentRating {
                text_id: text_id.clone(),
                rater_id: "synthetic".into(),
                feature: LatentFeature::Respect,
                value: respect(z),
            });
            ratings.push(LatentRating {
                text_id: text_id.clone(),
                rater_id: "synthetic".into(),
                feature: LatentFeature::Ih,
                value: if treatment { 75.0 } else { 25.0 },
            });
            latent.push(LatentTruth { text_id: text_id.clone(), treatment, z });
            units.push(TextUnit { text_id, pair_id: pair_id.clone(), version_index: version, treatment, topic: topic.clone(), body });
        }
    }
    let scale = if params.likert { ValueScale::Likert } else { ValueScale::Continuous };
    let corpus = Corpus::new(units, evals, ratings, scale)?;
    Ok(SyntheticData { corpus, truth: true_effects(params), latent, codebook })
}

/// Latent values keyed by text id.
pub fn latent_map(data: &SyntheticData) -> HashMap<&str, &LatentTruth> {
    data.latent.iter().map(|l| (l.text_id.as_str(), l)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_groups, tau_d_hat, tau_t_hat, TextScope};

    #[test]
    fn closed_form_effects() {
        let p = DgpParams { tau: 0.5, beta: 1.0, z_shift: 0.3, ..Default::default() };
        let t = true_effects(&p);
        assert_eq!(t.tau_t, 0.5);
        assert!((t.tau_d - 0.8).abs() < 1e-15);
        assert_eq!(true_effects(&DgpParams { beta: 0.0, ..p.clone() }).tau_d, 0.5);
        assert_eq!(true_effects(&DgpParams { z_shift: 0.0, ..p }).tau_d, 0.5);
    }

    #[test]
    fn decoding_recovers_generating_values() {
        let p = DgpParams { n_pairs: 50, seed: 3, ..Default::default() };
        let data = sample_dataset(&p).unwrap();
        let latent = latent_map(&data);
        for u in data.corpus.units() {
            let (t, z) = decode(&u.body, &p, &data.codebook).unwrap();
            let truth = latent[u.text_id.as_str()];
            assert_eq!(t, truth.treatment);
            assert_eq!(t, u.treatment);
            assert!((z - truth.z).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_contrasts_are_exact() {
        let p = DgpParams { n_pairs: 40, noise_sd: 0.0, seed: 5, ..Default::default() };
        let data = sample_dataset(&p).unwrap();
        let groups = design_groups(&data.corpus, Outcome::Informative);
        assert!((tau_t_hat(&groups).unwrap().point - 0.5).abs() < 1e-12);
    }

    #[test]
    fn edits_keep_filler_and_confounder() {
        let p = DgpParams { n_pairs: 5, seed: 11, ..Default::default() };
        let data = sample_dataset(&p).unwrap();
        for pair in data.corpus.pairs() {
            fn strip(b: &str) -> Vec<&str> {
                let mut v: Vec<&str> = b.split_whitespace().filter(|t| !t.starts_with("hedge")).collect();
                v.sort();
                v
            }
            assert_eq!(strip(&pair.original.body), strip(&pair.edits[0].body));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let p = DgpParams { n_pairs: 20, seed: 9, ..Default::default() };
        let a = sample_dataset(&p).unwrap();
        let b = sample_dataset(&p).unwrap();
        assert_eq!(a.corpus.units(), b.corpus.units());
        assert_eq!(a.corpus.evaluations(), b.corpus.evaluations());
    }

    #[test]
    fn null_model_is_centered() {
        let p = DgpParams { n_pairs: 2000, tau: 0.0, beta: 0.0, seed: 1, ..Default::default() };
        let data = sample_dataset(&p).unwrap();
        let groups = design_groups(&data.corpus, Outcome::Informative);
        let t = tau_t_hat(&groups).unwrap();
        assert!(t.point.abs() < 4.0 * t.std_error.unwrap());
        let d = tau_d_hat(&data.corpus, Outcome::Informative, TextScope::OriginalsOnly).unwrap();
        assert!(d.point.abs() < 4.0 * d.std_error.unwrap());
    }

    #[test]
    fn rejects_overlapping_vocabularies() {
        let mut p = DgpParams::default();
        p.vocab.filler.push("hedge0".into());
        assert!(matches!(sample_dataset(&p), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn likert_outcomes_are_valid() {
        let p = DgpParams { n_pairs: 30, alpha: 3.0, likert: true, seed: 2, ..Default::default() };
        let data = sample_dataset(&p).unwrap();
        assert!(data.corpus.evaluations().iter().all(|e| (1.0..=5.0).contains(&e.value) && e.value.fract() == 0.0));
    }
}
