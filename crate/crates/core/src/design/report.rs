use std::io::Write;

use crate::error::{Error, Result};
use crate::estimate::EffectEstimate;

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

/// One JSON object per line.
pub fn write_estimates_jsonl(estimates: &[EffectEstimate], mut out: impl Write) -> Result<()> {
    for e in estimates {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

/// Regression-table summary: one row per estimate.
pub fn write_summary_csv(estimates: &[EffectEstimate], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outcome", "estimator", "coefficient", "std_error", "p_value", "n_texts", "n_evals"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in estimates {
        w.write_record([
            e.outcome.map(|o| o.as_str()).unwrap_or(""),
            &e.estimator_name,
            &e.point.to_string(),
            &opt(e.std_error),
            &opt(e.p_value),
            &e.n_texts.to_string(),
            &e.n_evals.to_string(),
        ])?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}
