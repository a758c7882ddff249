use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Survey outcome labels. Each evaluation scores one text on one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Aggressive,
    Articulated,
    Enjoyable,
    Informative,
    PersuadesSelf,
    PersuadesOther,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::Aggressive,
        Outcome::Articulated,
        Outcome::Enjoyable,
        Outcome::Informative,
        Outcome::PersuadesSelf,
        Outcome::PersuadesOther,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Aggressive => "aggressive",
            Outcome::Articulated => "articulated",
            Outcome::Enjoyable => "enjoyable",
            Outcome::Informative => "informative",
            Outcome::PersuadesSelf => "persuades_self",
            Outcome::PersuadesOther => "persuades_other",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown outcome label `{s}`")))
    }
}

/// Point estimate plus optional inference for one estimator on one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimator_name: String,
    pub outcome: Option<Outcome>,
    pub point: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub n_texts: usize,
    pub n_evals: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl EffectEstimate {
    pub fn new(estimator_name: impl Into<String>, point: f64) -> Self {
        EffectEstimate {
            estimator_name: estimator_name.into(),
            outcome: None,
            point,
            std_error: None,
            p_value: None,
            n_texts: 0,
            n_evals: 0,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_outcome(mut self, outcome: Outcome) -> Self {
        self.outcome = Some(outcome);
        self
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        if se.is_finite() {
            self.std_error = Some(se.max(0.0));
        }
        self
    }

    pub fn with_counts(mut self, n_texts: usize, n_evals: usize) -> Self {
        self.n_texts = n_texts;
        self.n_evals = n_evals;
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }
}
