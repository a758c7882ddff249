//! Paired write/edit corpora: texts, their evaluations and latent ratings.
//!
//! A pair is one original text (`version_index == 1`) together with its
//! edits. Edits flip the treatment of the original and keep everything else.
//! [`Corpus::new`] enforces the structural invariants once, so downstream
//! code can rely on them.

mod audit;
mod counts;
mod io;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Outcome;

pub use audit::{audit_edits, AuditReport};
pub use counts::{summarize_counts, summarize_counts_for, CountKey, CountTable};
pub use io::{parse_corpus, read_corpus_dir, write_corpus, write_corpus_dir};

pub const UNITS_FILE: &str = "units.csv";
pub const EVALS_FILE: &str = "evaluations.csv";
pub const RATINGS_FILE: &str = "ratings.csv";

const UNITS: &str = UNITS_FILE;
const EVALS: &str = EVALS_FILE;
const RATINGS: &str = RATINGS_FILE;

/// One version of one argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextUnit {
    pub text_id: String,
    pub pair_id: String,
    /// 1 for the original, > 1 for edits.
    pub version_index: u32,
    pub treatment: bool,
    pub topic: String,
    pub body: String,
}

impl TextUnit {
    pub fn is_original(&self) -> bool {
        self.version_index == 1
    }
}

/// One rater's score of one text on one outcome label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub eval_id: String,
    pub text_id: String,
    pub evaluator_id: String,
    pub outcome: Outcome,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentFeature {
    Respect,
    Uncertainty,
    Limitations,
    Ih,
}

impl LatentFeature {
    pub fn as_str(self) -> &'static str {
        match self {
            LatentFeature::Respect => "respect",
            LatentFeature::Uncertainty => "uncertainty",
            LatentFeature::Limitations => "limitations",
            LatentFeature::Ih => "ih",
        }
    }
}

impl fmt::Display for LatentFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatentFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "respect" => Ok(LatentFeature::Respect),
            "uncertainty" => Ok(LatentFeature::Uncertainty),
            "limitations" => Ok(LatentFeature::Limitations),
            "ih" => Ok(LatentFeature::Ih),
            other => Err(Error::InvalidInput(format!("unknown latent feature `{other}`"))),
        }
    }
}

/// A 0-100 rating of a latent text feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRating {
    pub text_id: String,
    pub rater_id: String,
    pub feature: LatentFeature,
    pub value: f64,
}

/// How evaluation values are validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueScale {
    /// Integer scores 1 through 5.
    #[default]
    Likert,
    /// Any finite real (synthetic outcomes).
    Continuous,
}

impl FromStr for ValueScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "likert" => Ok(ValueScale::Likert),
            "continuous" => Ok(ValueScale::Continuous),
            other => Err(Error::InvalidInput(format!("unknown value scale `{other}`"))),
        }
    }
}

/// An original text and its edits.
#[derive(Debug, Clone)]
pub struct Pair<'a> {
    pub pair_id: &'a str,
    pub original: &'a TextUnit,
    pub edits: Vec<&'a TextUnit>,
}

impl<'a> Pair<'a> {
    pub fn versions(&self) -> impl Iterator<Item = &'a TextUnit> + '_ {
        std::iter::once(self.original).chain(self.edits.iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    units: Vec<TextUnit>,
    evaluations: Vec<Evaluation>,
    latent_ratings: Vec<LatentRating>,
    scale: ValueScale,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates and assembles a corpus.
    ///
    /// Rows in error messages are 1-based positions within each collection,
    /// which match data rows of the corresponding CSV file.
    pub fn new(
        units: Vec<TextUnit>,
        evaluations: Vec<Evaluation>,
        latent_ratings: Vec<LatentRating>,
        scale: ValueScale,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(units.len());
        let mut versions: HashMap<(&str, u32), usize> = HashMap::new();
        for (i, u) in units.iter().enumerate() {
            let row = i + 1;
            if index.insert(u.text_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    file: UNITS.into(),
                    row,
                    what: "text_id",
                    id: u.text_id.clone(),
                });
            }
            if u.version_index == 0 {
                return Err(Error::InvariantViolation {
                    file: UNITS.into(),
                    row,
                    message: format!("text `{}` has version_index 0; versions start at 1", u.text_id),
                });
            }
            if versions.insert((u.pair_id.as_str(), u.version_index), i).is_some() {
                return Err(Error::DuplicateId {
                    file: UNITS.into(),
                    row,
                    what: "(pair_id, version_index)",
                    id: format!("({}, {})", u.pair_id, u.version_index),
                });
            }
        }

        let mut originals: HashMap<&str, &TextUnit> = HashMap::new();
        for u in units.iter().filter(|u| u.is_original()) {
            originals.insert(u.pair_id.as_str(), u);
        }
        for (i, u) in units.iter().enumerate().filter(|(_, u)| !u.is_original()) {
            let row = i + 1;
            match originals.get(u.pair_id.as_str()) {
                None => {
                    return Err(Error::InvariantViolation {
                        file: UNITS.into(),
                        row,
                        message: format!("pair `{}` has no original (version_index 1)", u.pair_id),
                    })
                }
                Some(orig) if orig.treatment == u.treatment => {
                    return Err(Error::InvariantViolation {
                        file: UNITS.into(),
                        row,
                        message: format!(
                            "edit `{}` has the same treatment as its original `{}`",
                            u.text_id, orig.text_id
                        ),
                    })
                }
                Some(_) => {}
            }
        }

        let mut eval_ids = HashSet::with_capacity(evaluations.len());
        for (i, e) in evaluations.iter().enumerate() {
            let row = i + 1;
            if !eval_ids.insert(e.eval_id.as_str()) {
                return Err(Error::DuplicateId { file: EVALS.into(), row, what: "eval_id", id: e.eval_id.clone() });
            }
            if !index.contains_key(&e.text_id) {
                return Err(Error::DanglingReference { file: EVALS.into(), row, id: e.text_id.clone() });
            }
            let ok = match scale {
                ValueScale::Likert => e.value.fract() == 0.0 && (1.0..=5.0).contains(&e.value),
                ValueScale::Continuous => e.value.is_finite(),
            };
            if !ok {
                return Err(Error::InvariantViolation {
                    file: EVALS.into(),
                    row,
                    message: match scale {
                        ValueScale::Likert => format!("value {} is not an integer in [1, 5]", e.value),
                        ValueScale::Continuous => format!("value {} is not finite", e.value),
                    },
                });
            }
        }

        for (i, r) in latent_ratings.iter().enumerate() {
            let row = i + 1;
            if !index.contains_key(&r.text_id) {
                return Err(Error::DanglingReference { file: RATINGS.into(), row, id: r.text_id.clone() });
            }
            if !(0.0..=100.0).contains(&r.value) {
                return Err(Error::InvariantViolation {
                    file: RATINGS.into(),
                    row,
                    message: format!("rating {} is outside [0, 100]", r.value),
                });
            }
        }

        Ok(Corpus { units, evaluations, latent_ratings, scale, index })
    }

    pub fn empty() -> Self {
        Corpus {
            units: Vec::new(),
            evaluations: Vec::new(),
            latent_ratings: Vec::new(),
            scale: ValueScale::Likert,
            index: HashMap::new(),
        }
    }

    pub fn units(&self) -> &[TextUnit] {
        &self.units
    }

    pub fn evaluations(&self) -> &[Evaluation] {
        &self.evaluations
    }

    pub fn latent_ratings(&self) -> &[LatentRating] {
        &self.latent_ratings
    }

    pub fn scale(&self) -> ValueScale {
        self.scale
    }

    pub fn unit(&self, text_id: &str) -> Option<&TextUnit> {
        self.index.get(text_id).map(|&i| &self.units[i])
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Pairs sorted by `pair_id`; edits sorted by version.
    pub fn pairs(&self) -> Vec<Pair<'_>> {
        let mut by_pair: BTreeMap<&str, (Option<&TextUnit>, Vec<&TextUnit>)> = BTreeMap::new();
        for u in &self.units {
            let entry = by_pair.entry(u.pair_id.as_str()).or_default();
            if u.is_original() {
                entry.0 = Some(u);
            } else {
                entry.1.push(u);
            }
        }
        by_pair
            .into_iter()
            .filter_map(|(pair_id, (original, mut edits))| {
                edits.sort_by_key(|u| u.version_index);
                original.map(|original| Pair { pair_id, original, edits })
            })
            .collect()
    }

    /// Mean rating of `feature` per text, for texts that have at least one.
    pub fn mean_ratings(&self, feature: LatentFeature) -> HashMap<&str, f64> {
        let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
        for r in self.latent_ratings.iter().filter(|r| r.feature == feature) {
            let e = acc.entry(r.text_id.as_str()).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// Outcome labels that have at least one evaluation, in label order.
    pub fn outcomes(&self) -> Vec<Outcome> {
        let present: HashSet<Outcome> = self.evaluations.iter().map(|e| e.outcome).collect();
        Outcome::ALL.into_iter().filter(|o| present.contains(o)).collect()
    }

    /// Keeps the texts for which `keep` returns true, along with their
    /// evaluations and ratings.
    pub fn retain_texts(&self, keep: impl Fn(&TextUnit) -> bool) -> Result<Corpus> {
        let units: Vec<TextUnit> = self.units.iter().filter(|u| keep(u)).cloned().collect();
        let kept: HashSet<&str> = units.iter().map(|u| u.text_id.as_str()).collect();
        let evaluations = self.evaluations.iter().filter(|e| kept.contains(e.text_id.as_str())).cloned().collect();
        let ratings = self.latent_ratings.iter().filter(|r| kept.contains(r.text_id.as_str())).cloned().collect();
        Corpus::new(units, evaluations, ratings, self.scale)
    }

    /// Replaces the evaluation collection, revalidating against `scale`.
    pub fn with_evaluations(&self, evaluations: Vec<Evaluation>, scale: ValueScale) -> Result<Corpus> {
        Corpus::new(self.units.clone(), evaluations, self.latent_ratings.clone(), scale)
    }
}
