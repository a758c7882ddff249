use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{Corpus, LatentFeature};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub edits_removed_frac: f64,
    pub originals_removed_frac: f64,
    pub removed_text_ids: Vec<String>,
    /// Texts without any `ih` rating. They are kept, but their edit
    /// direction could not be checked.
    pub flagged_text_ids: Vec<String>,
    pub n_edits: usize,
    pub n_originals: usize,
    pub n_edits_removed: usize,
    pub n_originals_removed: usize,
}

/// Drops edits whose mean `ih` rating did not move in the instructed
/// direction by at least `min_gap`, then drops originals left without edits.
///
/// The instructed direction is up for edits of untreated originals and down
/// for edits of treated originals. With `min_gap == 0` an unchanged mean
/// counts as acceptable.
pub fn audit_edits(corpus: &Corpus, min_gap: f64) -> Result<(Corpus, AuditReport)> {
    if !(min_gap.is_finite() && min_gap >= 0.0) {
        return Err(Error::invalid_parameter("min_gap", format!("must be a finite value >= 0, got {min_gap}")));
    }
    let ih = corpus.mean_ratings(LatentFeature::Ih);
    let mut removed: BTreeSet<String> = BTreeSet::new();
    let mut flagged: BTreeSet<String> = BTreeSet::new();
    let mut n_edits = 0;
    let mut n_edits_removed = 0;
    let mut n_originals_removed = 0;

    let pairs = corpus.pairs();
    for pair in &pairs {
        let orig = pair.original;
        let orig_mean = ih.get(orig.text_id.as_str()).copied();
        if orig_mean.is_none() {
            flagged.insert(orig.text_id.clone());
        }
        let mut surviving = 0;
        for edit in &pair.edits {
            n_edits += 1;
            let edit_mean = ih.get(edit.text_id.as_str()).copied();
            if edit_mean.is_none() {
                flagged.insert(edit.text_id.clone());
            }
            let keep = match (orig_mean, edit_mean) {
                (Some(o), Some(e)) => {
                    let toward = if orig.treatment { o - e } else { e - o };
                    toward >= min_gap
                }
                _ => true,
            };
            if keep {
                surviving += 1;
            } else {
                n_edits_removed += 1;
                removed.insert(edit.text_id.clone());
            }
        }
        if surviving == 0 {
            n_originals_removed += 1;
            removed.insert(orig.text_id.clone());
        }
    }

    let drop: HashSet<&str> = removed.iter().map(String::as_str).collect();
    let audited = corpus.retain_texts(|u| !drop.contains(u.text_id.as_str()))?;
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let report = AuditReport {
        edits_removed_frac: frac(n_edits_removed, n_edits),
        originals_removed_frac: frac(n_originals_removed, pairs.len()),
        removed_text_ids: removed.into_iter().collect(),
        flagged_text_ids: flagged.into_iter().collect(),
        n_edits,
        n_originals: pairs.len(),
        n_edits_removed,
        n_originals_removed,
    };
    Ok((audited, report))
}
