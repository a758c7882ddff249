//! The replica loop: simulate, estimate on each observational view, and
//! compare against the ground-truth bands.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bow::{
    self, aipw_estimate, bound_propensities, bow_vectorize, cross_fit_outcomes, cross_fit_propensity, diff_in_means,
    ipw_estimate, leakage_probe, or_estimate, stratified_folds, topic_adjusted, FeatureMatrix, NuisanceFits,
    NuisanceSpec, PropensityBounds,
};
use crate::corpus::Corpus;
use crate::diagnostics::{build_report, propensity_bins, BenchmarkReport, PropensityBins, ReplicaEstimate};
use crate::error::{Error, Result};
use crate::estimate::{EffectEstimate, Outcome};
use crate::sim::{self, generate_replica, text_outcomes, ConfoundingConfig, Replica, TruthBand, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    DiffInMeans,
    TopicAdjusted,
    BowOr,
    BowIpw,
    BowAipw,
    TiTrimmed,
    TiWinsorized,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::DiffInMeans,
        EstimatorKind::TopicAdjusted,
        EstimatorKind::BowOr,
        EstimatorKind::BowIpw,
        EstimatorKind::BowAipw,
        EstimatorKind::TiTrimmed,
        EstimatorKind::TiWinsorized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::DiffInMeans => "diff_in_means",
            EstimatorKind::TopicAdjusted => "topic_adjusted",
            EstimatorKind::BowOr => "bow_or",
            EstimatorKind::BowIpw => "bow_ipw",
            EstimatorKind::BowAipw => "bow_aipw",
            EstimatorKind::TiTrimmed => "ti_trimmed",
            EstimatorKind::TiWinsorized => "ti_winsorized",
        }
    }

    fn needs_propensity(self) -> bool {
        matches!(self, EstimatorKind::BowIpw | EstimatorKind::BowAipw)
    }

    fn needs_outcome_models(self) -> bool {
        matches!(self, EstimatorKind::BowOr | EstimatorKind::BowAipw)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub confounding: ConfoundingConfig,
    pub estimators: Vec<EstimatorKind>,
    pub nuisance: NuisanceSpec,
    pub min_df: usize,
    pub binary_features: bool,
    /// Optional bounds applied to BoW propensities before IPW and AIPW.
    pub bow_bounds: Option<PropensityBounds>,
    /// Bounds for the representation probe; the mode is set per estimator.
    pub ti_lo: f64,
    pub ti_hi: f64,
    /// Thresholds of the reported propensity bins.
    pub bin_lo: f64,
    pub bin_hi: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            confounding: ConfoundingConfig::default(),
            estimators: EstimatorKind::ALL.to_vec(),
            nuisance: NuisanceSpec::default(),
            min_df: bow::DEFAULT_MIN_DF,
            binary_features: false,
            bow_bounds: None,
            ti_lo: 0.1,
            ti_hi: 0.9,
            bin_lo: 0.1,
            bin_hi: 0.9,
        }
    }
}

/// Unit-level data of one outcome in one observational view.
struct Units {
    rows: Vec<usize>,
    ids: Vec<String>,
    treatment: Vec<bool>,
    outcome: Vec<f64>,
    topic: Vec<String>,
}

fn units_for(view: &View, outcome: Outcome) -> Units {
    let values = text_outcomes(&view.evaluations, outcome);
    let mut u = Units { rows: vec![], ids: vec![], treatment: vec![], outcome: vec![], topic: vec![] };
    for (i, t) in view.units.iter().enumerate() {
        if let Some(&y) = values.get(t.text_id.as_str()) {
            u.rows.push(i);
            u.ids.push(t.text_id.clone());
            u.treatment.push(t.treatment);
            u.outcome.push(y);
            u.topic.push(t.topic.clone());
        }
    }
    u
}

/// One estimator applied to one outcome of an observational view.
#[derive(Debug)]
pub struct ViewEstimate {
    pub kind: EstimatorKind,
    pub outcome: Outcome,
    pub result: Result<EffectEstimate>,
    pub bins: Option<PropensityBins>,
}

impl ViewEstimate {
    fn into_replica(self, replica: usize) -> ReplicaEstimate {
        let (estimate, error) = match self.result {
            Ok(e) => (Some(e.point), None),
            Err(e) => (None, Some(e.to_string())),
        };
        ReplicaEstimate {
            estimator: self.kind.as_str().into(),
            outcome: self.outcome,
            replica,
            estimate,
            error,
            bins: self.bins,
        }
    }
}

/// Estimates every configured estimator on one replica's observational view.
/// Estimator failures (extreme propensities, empty arms, ...) are recorded
/// rather than propagated.
pub fn estimate_replica(corpus: &Corpus, replica: &Replica, cfg: &BenchmarkConfig) -> Vec<ReplicaEstimate> {
    estimate_view(&replica.view(corpus), cfg)
        .into_iter()
        .map(|e| e.into_replica(replica.replica_index))
        .collect()
}

/// Every configured estimator on every outcome of `view`. Units without an
/// evaluation of an outcome are left out of that outcome's estimates.
/// Cross-fitted nuisance output, or the message of the error that stopped it.
type Fitted<A> = std::result::Result<(A, Vec<f64>), String>;

pub fn estimate_view(view: &View, cfg: &BenchmarkConfig) -> Vec<ViewEstimate> {
    let needs_text = cfg.estimators.iter().any(|k| {
        k.needs_propensity()
            || k.needs_outcome_models()
            || matches!(k, EstimatorKind::TiTrimmed | EstimatorKind::TiWinsorized)
    });
    let dtm = if needs_text {
        let docs: Vec<(&str, &str)> = view.units.iter().map(|u| (u.text_id.as_str(), u.body.as_str())).collect();
        Some(bow_vectorize(&docs, cfg.min_df, cfg.binary_features).map(|d| FeatureMatrix::from_dtm(&d)))
    } else {
        None
    };
    let mut propensity_cache: HashMap<Vec<usize>, Fitted<Vec<usize>>> = HashMap::new();
    let k = cfg.nuisance.k_folds;
    let fold_seed = cfg.nuisance.propensity.seed;
    let mut out = Vec::new();

    for outcome in view.outcomes() {
        let u = units_for(view, outcome);
        let x = match &dtm {
            Some(Ok(m)) => Ok(m.select_rows(&u.rows)),
            Some(Err(e)) => Err(e.to_string()),
            None => Err(String::new()),
        };
        let prop = if cfg.estimators.iter().any(|k| k.needs_propensity()) {
            Some(
                propensity_cache
                    .entry(u.rows.clone())
                    .or_insert_with(|| {
                        let x = x.clone()?;
                        let fold = stratified_folds(&u.ids, &u.treatment, k, fold_seed).map_err(|e| e.to_string())?;
                        let e = cross_fit_propensity(&x, &u.ids, &u.treatment, &fold, k, &cfg.nuisance.propensity)
                            .map_err(|e| e.to_string())?;
                        Ok((fold, e))
                    })
                    .clone(),
            )
        } else {
            None
        };

        let qs: Option<Fitted<Vec<f64>>> =
            cfg.estimators.iter().any(|k| k.needs_outcome_models()).then(|| {
                let x = x.clone()?;
                let fold = stratified_folds(&u.ids, &u.treatment, k, fold_seed).map_err(|e| e.to_string())?;
                cross_fit_outcomes(&x, &u.ids, &u.treatment, &u.outcome, &fold, k, &cfg.nuisance.outcome)
                    .map_err(|e| e.to_string())
            });

        let fits = |with_q: bool| -> Result<NuisanceFits> {
            let (fold, e) = match &prop {
                Some(Ok((f, e))) => (f.clone(), e.clone()),
                Some(Err(msg)) => return Err(Error::InvalidInput(msg.clone())),
                None => (vec![0; u.ids.len()], vec![f64::NAN; u.ids.len()]),
            };
            let (q1, q0) = if with_q {
                match &qs {
                    Some(Ok(q)) => q.clone(),
                    Some(Err(msg)) => return Err(Error::InvalidInput(msg.clone())),
                    None => unreachable!("outcome models requested without being fitted"),
                }
            } else {
                (vec![f64::NAN; u.ids.len()], vec![f64::NAN; u.ids.len()])
            };
            let f = NuisanceFits {
                doc_ids: u.ids.clone(),
                treatment: u.treatment.clone(),
                outcome: u.outcome.clone(),
                propensity: e,
                q1,
                q0,
                fold,
            };
            match cfg.bow_bounds {
                Some(b) if prop.is_some() => Ok(bound_propensities(&f, b.lo, b.hi, b.mode)?.0),
                _ => Ok(f),
            }
        };

        for &kind in &cfg.estimators {
            let mut bins = None;
            let res = match kind {
                EstimatorKind::DiffInMeans => diff_in_means(&u.treatment, &u.outcome),
                EstimatorKind::TopicAdjusted => topic_adjusted(&u.treatment, &u.outcome, &u.topic),
                EstimatorKind::BowOr => fits(true).and_then(|f| or_estimate(&f)),
                EstimatorKind::BowIpw => {
                    if let Some(Ok((_, e))) = &prop {
                        bins = propensity_bins(e, cfg.bin_lo, cfg.bin_hi).ok();
                    }
                    fits(false).and_then(|f| ipw_estimate(&f))
                }
                EstimatorKind::BowAipw => {
                    if let Some(Ok((_, e))) = &prop {
                        bins = propensity_bins(e, cfg.bin_lo, cfg.bin_hi).ok();
                    }
                    fits(true).and_then(|f| aipw_estimate(&f))
                }
                EstimatorKind::TiTrimmed | EstimatorKind::TiWinsorized => {
                    let mode = if kind == EstimatorKind::TiTrimmed { bow::BoundMode::Trim } else { bow::BoundMode::Winsorize };
                    let bounds = PropensityBounds { lo: cfg.ti_lo, hi: cfg.ti_hi, mode };
                    match &x {
                        Ok(x) => leakage_probe(x, &u.ids, &u.treatment, &u.outcome, &cfg.nuisance, bounds).map(|r| {
                            bins = propensity_bins(&r.fits.propensity, cfg.bin_lo, cfg.bin_hi).ok();
                            r.estimate
                        }),
                        Err(msg) => Err(Error::InvalidInput(msg.clone())),
                    }
                }
            };
            let result = res.map(|e| e.with_outcome(outcome));
            out.push(ViewEstimate { kind, outcome, result, bins });
        }
    }
    out
}

/// Everything produced by a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub replicas: Vec<Replica>,
    pub bands: Vec<TruthBand>,
    pub estimates: Vec<ReplicaEstimate>,
    pub report: BenchmarkReport,
}

/// Generates all replicas, estimates on each view, and builds the report.
/// Replicas run in parallel; results do not depend on scheduling.
pub fn run_benchmark(corpus: &Corpus, cfg: &BenchmarkConfig) -> Result<BenchmarkRun> {
    cfg.confounding.validate()?;
    let per_replica: Vec<(Replica, Vec<ReplicaEstimate>)> = (0..cfg.confounding.n_replicas)
        .into_par_iter()
        .map(|i| {
            let r = generate_replica(corpus, &cfg.confounding, i)?;
            let est = estimate_replica(corpus, &r, cfg);
            Ok((r, est))
        })
        .collect::<Result<_>>()?;
    let (replicas, estimates): (Vec<Replica>, Vec<Vec<ReplicaEstimate>>) = per_replica.into_iter().unzip();
    let estimates: Vec<ReplicaEstimate> = estimates.into_iter().flatten().collect();
    let bands = sim::truth_bands(&replicas);
    let report = build_report(&bands, replicas.len(), &estimates)?;
    Ok(BenchmarkRun { replicas, bands, estimates, report })
}
