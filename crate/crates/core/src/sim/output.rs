use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Replica, TruthBand, View};
use crate::corpus::{Corpus, Evaluation};
use crate::error::{Error, Result};
use crate::estimate::{EffectEstimate, Outcome};

/// Mean evaluation value per text for one outcome.
pub fn text_outcomes(evaluations: &[Evaluation], outcome: Outcome) -> HashMap<&str, f64> {
    let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
    for e in evaluations.iter().filter(|e| e.outcome == outcome) {
        let a = acc.entry(e.text_id.as_str()).or_insert((0.0, 0));
        a.0 += e.value;
        a.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Observational rows: `text_id,treatment,topic,body` and one column per
/// outcome holding the text's (binary) outcome. Texts without an
/// evaluation for an outcome get an empty cell.
pub fn write_view_csv(view: &View, out: impl Write) -> Result<()> {
    let outcomes = view.outcomes();
    let values: Vec<HashMap<&str, f64>> = outcomes.iter().map(|o| text_outcomes(&view.evaluations, *o)).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["text_id", "treatment", "topic", "body"];
    header.extend(outcomes.iter().map(|o| o.as_str()));
    w.write_record(&header)?;
    for u in &view.units {
        let mut row = vec![
            u.text_id.clone(),
            if u.treatment { "1" } else { "0" }.to_string(),
            u.topic.clone(),
            u.body.clone(),
        ];
        row.extend(values.iter().map(|m| m.get(u.text_id.as_str()).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<view>", e))?;
    Ok(())
}

pub fn write_truth(truth: &BTreeMap<Outcome, EffectEstimate>, out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, truth)?;
    Ok(())
}

pub fn read_truth(input: impl std::io::Read) -> Result<BTreeMap<Outcome, EffectEstimate>> {
    Ok(serde_json::from_reader(input)?)
}

pub fn write_bands(bands: &[TruthBand], out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, bands)?;
    Ok(())
}

/// Writes `view.csv` and `truth.json` for one replica into `dir`.
pub fn write_replica_dir(replica: &Replica, corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let view_path = dir.join("view.csv");
    let f = fs::File::create(&view_path).map_err(|e| Error::io(&view_path, e))?;
    write_view_csv(&replica.view(corpus), f)?;
    let truth_path = dir.join("truth.json");
    let f = fs::File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
    write_truth(&replica.ground_truth, f)
}
