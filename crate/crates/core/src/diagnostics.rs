//! Overlap diagnostics and benchmark coverage reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Outcome;
use crate::sim::TruthBand;

/// Shares of propensity scores at or below `lo`, strictly between the
/// bounds, and at or above `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityBins {
    pub p_low: f64,
    pub p_mid: f64,
    pub p_high: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PropensityBins {
    pub fn extreme(&self) -> f64 {
        self.p_low + self.p_high
    }
}

pub fn propensity_bins(e: &[f64], lo: f64, hi: f64) -> Result<PropensityBins> {
    if e.is_empty() {
        return Err(Error::InvalidInput("no propensity scores to bin".into()));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let unordered = !(lo < hi);
    if unordered {
        return Err(Error::invalid_parameter("propensity bins", "lo must be below hi"));
    }
    let low = e.iter().filter(|&&p| p <= lo).count();
    let high = e.iter().filter(|&&p| p >= hi).count();
    let n = e.len() as f64;
    Ok(PropensityBins {
        p_low: low as f64 / n,
        p_mid: (e.len() - low - high) as f64 / n,
        p_high: high as f64 / n,
        lo,
        hi,
    })
}

/// Averages bins over replicas (all must share bounds).
pub fn mean_bins(bins: &[PropensityBins]) -> Option<PropensityBins> {
    let first = bins.first()?;
    let n = bins.len() as f64;
    Some(PropensityBins {
        p_low: bins.iter().map(|b| b.p_low).sum::<f64>() / n,
        p_mid: bins.iter().map(|b| b.p_mid).sum::<f64>() / n,
        p_high: bins.iter().map(|b| b.p_high).sum::<f64>() / n,
        lo: first.lo,
        hi: first.hi,
    })
}

/// One estimator's result on one replica. `estimate` is `None` when the
/// estimator could not be computed; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaEstimate {
    pub estimator: String,
    pub outcome: Outcome,
    pub replica: usize,
    pub estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<PropensityBins>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub outcome: Outcome,
    /// Indexed by replica.
    pub estimates: Vec<Option<f64>>,
    pub band_lo: f64,
    pub band_hi: f64,
    /// Share of replicas whose estimate lies inside the band; failed
    /// replicas count as outside.
    pub coverage: f64,
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<PropensityBins>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n_replicas: usize,
    pub bands: Vec<TruthBand>,
    pub summaries: Vec<EstimatorSummary>,
}

impl BenchmarkReport {
    pub fn summary(&self, estimator: &str, outcome: Outcome) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator && s.outcome == outcome)
    }
}

/// Fraction of `estimates` inside `[lo, hi]`, counting `None` as outside.
pub fn coverage(estimates: &[Option<f64>], lo: f64, hi: f64) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    estimates.iter().filter(|e| e.is_some_and(|x| x >= lo && x <= hi)).count() as f64 / estimates.len() as f64
}

/// Aggregates replica estimates against the truth bands. Every estimator
/// seen must have an entry for every outcome with a band and every replica.
pub fn build_report(bands: &[TruthBand], n_replicas: usize, estimates: &[ReplicaEstimate]) -> Result<BenchmarkReport> {
    let band_of: BTreeMap<Outcome, &TruthBand> = bands.iter().map(|b| (b.outcome, b)).collect();
    let estimators: BTreeSet<&str> = estimates.iter().map(|e| e.estimator.as_str()).collect();
    let mut cells: BTreeMap<(&str, Outcome), Vec<Option<&ReplicaEstimate>>> = BTreeMap::new();
    for e in estimates {
        if !band_of.contains_key(&e.outcome) {
            return Err(Error::InvalidInput(format!("no truth band for outcome {}", e.outcome)));
        }
        if e.replica >= n_replicas {
            return Err(Error::InvalidInput(format!("replica {} out of range", e.replica)));
        }
        cells.entry((e.estimator.as_str(), e.outcome)).or_insert_with(|| vec![None; n_replicas])[e.replica] = Some(e);
    }
    let mut summaries = Vec::new();
    for est in &estimators {
        for (outcome, band) in &band_of {
            let Some(row) = cells.get(&(*est, *outcome)) else {
                return Err(Error::MissingEstimate { estimator: est.to_string(), outcome: outcome.to_string(), replica: 0 });
            };
            if let Some(hole) = row.iter().position(Option::is_none) {
                return Err(Error::MissingEstimate { estimator: est.to_string(), outcome: outcome.to_string(), replica: hole });
            }
            let values: Vec<Option<f64>> = row.iter().map(|r| r.and_then(|r| r.estimate)).collect();
            let bins: Vec<PropensityBins> = row.iter().filter_map(|r| r.and_then(|r| r.bins)).collect();
            summaries.push(EstimatorSummary {
                estimator: est.to_string(),
                outcome: *outcome,
                coverage: coverage(&values, band.lo, band.hi),
                n_failed: values.iter().filter(|v| v.is_none()).count(),
                estimates: values,
                band_lo: band.lo,
                band_hi: band.hi,
                bins: mean_bins(&bins),
            });
        }
    }
    Ok(BenchmarkReport { n_replicas, bands: bands.to_vec(), summaries })
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<report>", e)
}

pub fn write_report_json(report: &BenchmarkReport, out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

/// Flat rows `estimator,outcome,replica,estimate,band_lo,band_hi`; failed
/// estimates leave the estimate cell empty.
pub fn write_report_csv(report: &BenchmarkReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "outcome", "replica", "estimate", "band_lo", "band_hi"])?;
    for s in &report.summaries {
        for (r, e) in s.estimates.iter().enumerate() {
            w.write_record([
                s.estimator.as_str(),
                s.outcome.as_str(),
                &r.to_string(),
                &e.map(|x| x.to_string()).unwrap_or_default(),
                &s.band_lo.to_string(),
                &s.band_hi.to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn write_bins_csv(rows: &[(String, Outcome, PropensityBins)], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "outcome", "p_low", "p_mid", "p_high"])?;
    for (est, o, b) in rows {
        w.write_record([est.as_str(), o.as_str(), &b.p_low.to_string(), &b.p_mid.to_string(), &b.p_high.to_string()])?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Bin rows of every summary that carries propensity scores.
pub fn report_bins(report: &BenchmarkReport) -> Vec<(String, Outcome, PropensityBins)> {
    report.summaries.iter().filter_map(|s| s.bins.map(|b| (s.estimator.clone(), s.outcome, b))).collect()
}
