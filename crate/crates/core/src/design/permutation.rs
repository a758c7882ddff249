//! Within-pair randomization inference for the paired estimator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DesignGroup;
use crate::error::{Error, Result};
use crate::rng;

pub const MIN_PERMUTATIONS: usize = 100;
const MAX_ENUMERATION: u128 = 20_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub p_value: f64,
    /// Draws (Monte Carlo) or relabelings enumerated (exhaustive).
    pub n_perm: usize,
    pub exhaustive: bool,
}

struct Prepared {
    values: Vec<Vec<f64>>,
    treated: Vec<usize>,
    observed: f64,
}

fn prepare(groups: &[DesignGroup]) -> Result<Prepared> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("no design groups".into()));
    }
    let mut values = Vec::with_capacity(groups.len());
    let mut treated = Vec::with_capacity(groups.len());
    let mut total = 0.0;
    for g in groups {
        total += g.contrast()?;
        // Treated versions first, so that the identity labeling is the prefix.
        let mut v: Vec<f64> = g.rows.iter().filter(|r| r.treatment).map(|r| r.outcome).collect();
        treated.push(v.len());
        v.extend(g.rows.iter().filter(|r| !r.treatment).map(|r| r.outcome));
        values.push(v);
    }
    Ok(Prepared { values, treated, observed: total / groups.len() as f64 })
}

fn at_least_as_extreme(stat: f64, observed: f64) -> bool {
    stat.abs() >= observed.abs() - 1e-12 * (1.0 + observed.abs())
}

/// Monte Carlo permutation test. Each draw relabels every pair
/// independently, keeping its number of treated versions, and uses its own
/// sub-seed so the result does not depend on thread scheduling.
///
/// `p = (1 + #{|stat*| >= |stat|}) / (1 + n_perm)`.
pub fn permutation_test(groups: &[DesignGroup], n_perm: usize, seed: u64) -> Result<PermutationResult> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::invalid_parameter("n_perm", format!("must be at least {MIN_PERMUTATIONS}, got {n_perm}")));
    }
    let prep = prepare(groups)?;
    let n_groups = prep.values.len() as f64;
    let max_j = prep.values.iter().map(Vec::len).max().unwrap_or(0);
    let hits: usize = (0..n_perm as u64)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(max_j),
            |scratch, b| {
                let mut r = rng::stream(seed, &[rng::str_tag("permutation"), b]);
                let mut total = 0.0;
                for (v, &k) in prep.values.iter().zip(&prep.treated) {
                    scratch.clear();
                    scratch.extend_from_slice(v);
                    let j = scratch.len();
                    for i in 0..k {
                        let pick = r.random_range(i..j);
                        scratch.swap(i, pick);
                    }
                    let st: f64 = scratch[..k].iter().sum();
                    let sc: f64 = scratch[k..].iter().sum();
                    total += st / k as f64 - sc / (j - k) as f64;
                }
                usize::from(at_least_as_extreme(total / n_groups, prep.observed))
            },
        )
        .sum();
    Ok(PermutationResult {
        observed: prep.observed,
        p_value: (1 + hits) as f64 / (1 + n_perm) as f64,
        n_perm,
        exhaustive: false,
    })
}

/// Exact permutation test over every within-pair relabeling (the observed
/// labeling included): `p = #{|stat*| >= |stat|} / #relabelings`.
pub fn permutation_test_exhaustive(groups: &[DesignGroup]) -> Result<PermutationResult> {
    let prep = prepare(groups)?;
    let mut per_group: Vec<Vec<f64>> = Vec::with_capacity(prep.values.len());
    let mut total: u128 = 1;
    for (v, &k) in prep.values.iter().zip(&prep.treated) {
        let j = v.len();
        if j > 24 {
            return Err(Error::invalid_parameter("groups", "exhaustive enumeration supports at most 24 versions per pair"));
        }
        let sum: f64 = v.iter().sum();
        let contrasts: Vec<f64> = (0u32..1 << j)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| {
                let st: f64 = (0..j).filter(|&i| m >> i & 1 == 1).map(|i| v[i]).sum();
                st / k as f64 - (sum - st) / (j - k) as f64
            })
            .collect();
        total = total.saturating_mul(contrasts.len() as u128);
        per_group.push(contrasts);
    }
    if total > MAX_ENUMERATION {
        return Err(Error::invalid_parameter(
            "groups",
            format!("{total} relabelings exceed the enumeration limit of {MAX_ENUMERATION}"),
        ));
    }
    let n_groups = per_group.len() as f64;
    let mut idx = vec![0usize; per_group.len()];
    let mut hits = 0usize;
    loop {
        let s: f64 = per_group.iter().zip(&idx).map(|(c, &i)| c[i]).sum();
        if at_least_as_extreme(s / n_groups, prep.observed) {
            hits += 1;
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(PermutationResult {
                    observed: prep.observed,
                    p_value: hits as f64 / total as f64,
                    n_perm: total as usize,
                    exhaustive: true,
                });
            }
            idx[pos] += 1;
            if idx[pos] < per_group[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
