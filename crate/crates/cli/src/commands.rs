use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use textbench::benchmark::{estimate_replica, estimate_view, BenchmarkConfig};
use textbench::corpus::{audit_edits, read_corpus_dir, summarize_counts, write_corpus, Corpus, CountTable, ValueScale};
use textbench::design::{
    analyze_outcome, design_groups, tau_d_hat, tau_t_hat, write_estimates_jsonl, write_summary_csv, AnalysisOptions,
    TextScope,
};
use textbench::dgp::{sample_dataset, DgpParams};
use textbench::diagnostics::{
    build_report, report_bins, write_bins_csv, write_report_csv, write_report_json, BenchmarkReport, PropensityBins,
    ReplicaEstimate,
};
use textbench::sim::{
    bands_from_truths, generate_replica, read_truth, write_bands, write_truth, write_view_csv, ConfoundingConfig,
    TruthBand, View,
};
use textbench::{EffectEstimate, Outcome};

use crate::config::load_or_default;
use crate::output::{check_resumable, write_atomic, write_json, ManifestBuilder};
use crate::{
    AuditArgs, BenchmarkArgs, ConfoundingOverrides, DataArgs, DgpArgs, EstimateArgs, EstimatorArg, Failure, IngestArgs,
    ReportArgs, ScaleArg, SimulateArgs,
};

const UNITS: &str = "units.csv";
const EVALS: &str = "evaluations.csv";
const RATINGS: &str = "ratings.csv";
const CORPUS_FILES: [&str; 3] = [UNITS, EVALS, RATINGS];

fn load_corpus(args: &DataArgs) -> Result<(Corpus, Vec<PathBuf>), Failure> {
    let dir = &args.data;
    if !dir.is_dir() {
        return Err(Failure::validation(format!("{}: not a directory", dir.display())));
    }
    let corpus = match args.scale {
        ScaleArg::Likert => read_corpus_dir(dir, ValueScale::Likert)?,
        ScaleArg::Continuous => read_corpus_dir(dir, ValueScale::Continuous)?,
        ScaleArg::Auto => match read_corpus_dir(dir, ValueScale::Likert) {
            Ok(c) => c,
            Err(e) if e.is_validation() => read_corpus_dir(dir, ValueScale::Continuous)?,
            Err(e) => return Err(e.into()),
        },
    };
    let inputs = CORPUS_FILES.iter().map(|f| dir.join(f)).collect();
    Ok((corpus, inputs))
}

fn with_inputs(mut m: ManifestBuilder, inputs: &[PathBuf]) -> ManifestBuilder {
    for p in inputs {
        m = m.input(p);
    }
    m
}

/// Writes the three corpus tables into `dir`, each replaced atomically.
fn write_corpus_files(corpus: &Corpus, dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let tmp = tempfile::tempdir_in(dir).map_err(|e| Failure::io(dir, e))?;
    let staged: Vec<PathBuf> = CORPUS_FILES.iter().map(|f| tmp.path().join(f)).collect();
    write_corpus(corpus, &staged[0], &staged[1], &staged[2])?;
    for (from, name) in staged.iter().zip(CORPUS_FILES) {
        let to = dir.join(name);
        fs::rename(from, &to).map_err(|e| Failure::io(&to, e))?;
    }
    Ok(())
}

fn scale_name(s: ValueScale) -> &'static str {
    match s {
        ValueScale::Likert => "likert",
        ValueScale::Continuous => "continuous",
    }
}

#[derive(Debug, Serialize)]
struct CorpusConfig {
    data: String,
    scale: &'static str,
    min_gap: Option<f64>,
}

fn corpus_config(args: &DataArgs, corpus: &Corpus, min_gap: Option<f64>) -> CorpusConfig {
    CorpusConfig { data: args.data.display().to_string(), scale: scale_name(corpus.scale()), min_gap }
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    n_texts: usize,
    n_pairs: usize,
    n_evaluations: usize,
    n_ratings: usize,
    scale: &'static str,
    outcomes: Vec<Outcome>,
}

pub fn ingest(a: &IngestArgs, out: &Path) -> Result<String, Failure> {
    let (corpus, inputs) = load_corpus(&a.data)?;
    write_corpus_files(&corpus, out)?;
    let summary = IngestSummary {
        n_texts: corpus.len(),
        n_pairs: corpus.pairs().len(),
        n_evaluations: corpus.evaluations().len(),
        n_ratings: corpus.latent_ratings().len(),
        scale: scale_name(corpus.scale()),
        outcomes: corpus.outcomes(),
    };
    write_json(&out.join("ingest.json"), &summary)?;
    let manifest = ManifestBuilder::new("ingest", None, &corpus_config(&a.data, &corpus, None))?;
    with_inputs(manifest, &inputs).write(out, &[UNITS, EVALS, RATINGS, "ingest.json"])?;
    Ok(format!(
        "ingest: {} texts in {} pairs, {} evaluations, {} ratings -> {}",
        summary.n_texts,
        summary.n_pairs,
        summary.n_evaluations,
        summary.n_ratings,
        out.display()
    ))
}

pub fn audit(a: &AuditArgs, out: &Path) -> Result<String, Failure> {
    let (corpus, inputs) = load_corpus(&a.data)?;
    let (audited, report) = audit_edits(&corpus, a.min_gap)?;
    write_corpus_files(&audited, out)?;
    write_json(&out.join("audit.json"), &report)?;
    let manifest = ManifestBuilder::new("audit", None, &corpus_config(&a.data, &corpus, Some(a.min_gap)))?;
    with_inputs(manifest, &inputs).write(out, &[UNITS, EVALS, RATINGS, "audit.json"])?;
    let mut line = format!(
        "audit: removed {:.2}% of edits and {:.2}% of originals; {} texts and {} evaluations remain -> {}",
        100.0 * report.edits_removed_frac,
        100.0 * report.originals_removed_frac,
        audited.len(),
        audited.evaluations().len(),
        out.display()
    );
    if !report.flagged_text_ids.is_empty() {
        line.push_str(&format!(" ({} texts without ih ratings flagged)", report.flagged_text_ids.len()));
    }
    Ok(line)
}

pub fn counts(a: &AuditArgs, out: &Path) -> Result<String, Failure> {
    let (corpus, inputs) = load_corpus(&a.data)?;
    let (audited, _) = audit_edits(&corpus, a.min_gap)?;
    let before = summarize_counts(&corpus);
    let after = summarize_counts(&audited);
    let path = out.join("counts.csv");
    write_atomic(&path, |w| Ok(CountTable::write_comparison(&before, &after, w)?))?;
    let manifest = ManifestBuilder::new("counts", None, &corpus_config(&a.data, &corpus, Some(a.min_gap)))?;
    with_inputs(manifest, &inputs).write(out, &["counts.csv"])?;
    Ok(format!(
        "counts: {} evaluations before audit, {} after -> {}",
        before.total(),
        after.total(),
        path.display()
    ))
}

fn apply_overrides(cfg: &mut ConfoundingConfig, o: &ConfoundingOverrides, seed: u64) {
    if let Some(m) = o.mode {
        cfg.mode = m.into();
    }
    if let Some(n) = o.replicas {
        cfg.n_replicas = n;
    }
    if let Some(k) = o.kappa {
        cfg.selection_strength = k;
    }
    if let Some(s) = o.shift {
        cfg.outcome_shift = s;
    }
    if let Some(d) = o.delta {
        cfg.effect_delta = d;
    }
    cfg.seed = seed;
}

fn replica_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("replica_{index:04}"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let f = fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn band_line(bands: &[TruthBand]) -> String {
    bands
        .iter()
        .map(|b| format!("{} [{:.3}, {:.3}]", b.outcome, b.lo, b.hi))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn simulate(a: &SimulateArgs, out: &Path) -> Result<String, Failure> {
    let mut cfg: ConfoundingConfig = load_or_default(a.config.as_deref())?;
    apply_overrides(&mut cfg, &a.overrides, a.seed);
    cfg.validate()?;
    let (corpus, inputs) = load_corpus(&a.data)?;
    let manifest = with_inputs(ManifestBuilder::new("simulate", Some(a.seed), &cfg)?, &inputs);
    check_resumable(out, "simulate", manifest.config_sha256())?;
    manifest.clone().write(out, &[])?;

    let results: Vec<(BTreeMap<Outcome, EffectEstimate>, bool)> = (0..cfg.n_replicas)
        .into_par_iter()
        .map(|i| {
            let dir = replica_dir(out, i);
            let truth_path = dir.join("truth.json");
            if truth_path.is_file() && dir.join("view.csv").is_file() {
                let f = fs::File::open(&truth_path).map_err(|e| Failure::io(&truth_path, e))?;
                return Ok((read_truth(std::io::BufReader::new(f))?, true));
            }
            let replica = generate_replica(&corpus, &cfg, i)?;
            let view = replica.view(&corpus);
            write_atomic(&dir.join("view.csv"), |w| Ok(write_view_csv(&view, w)?))?;
            write_atomic(&truth_path, |w| Ok(write_truth(&replica.ground_truth, w)?))?;
            Ok((replica.ground_truth, false))
        })
        .collect::<Result<_, Failure>>()?;
    let resumed = results.iter().filter(|r| r.1).count();
    let bands = bands_from_truths(results.iter().map(|r| &r.0));
    write_atomic(&out.join("bands.json"), |w| Ok(write_bands(&bands, w)?))?;
    manifest.write(out, &["bands.json"])?;
    Ok(format!(
        "simulate: {} replicas ({resumed} resumed); truth bands {} -> {}",
        cfg.n_replicas,
        band_line(&bands),
        out.display()
    ))
}

pub fn dgp(a: &DgpArgs, out: &Path) -> Result<String, Failure> {
    let mut p: DgpParams = load_or_default(a.config.as_deref())?;
    if let Some(v) = a.n_pairs {
        p.n_pairs = v;
    }
    if let Some(v) = a.tau {
        p.tau = v;
    }
    if let Some(v) = a.beta {
        p.beta = v;
    }
    if let Some(v) = a.z_shift {
        p.z_shift = v;
    }
    if let Some(v) = a.alpha {
        p.alpha = v;
    }
    if let Some(v) = a.noise_sd {
        p.noise_sd = v;
    }
    if let Some(v) = a.evals_per_text {
        p.evals_per_text = v;
    }
    if a.likert {
        p.likert = true;
    }
    p.seed = a.seed;
    let data = sample_dataset(&p)?;
    write_corpus_files(&data.corpus, out)?;
    write_json(&out.join("truth.json"), &data.truth)?;
    write_atomic(&out.join("latent.csv"), |w| {
        let fail = |e: csv::Error| Failure::runtime(format!("latent.csv: {e}"));
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["text_id", "treatment", "z"]).map_err(fail)?;
        for l in &data.latent {
            csv.write_record([l.text_id.as_str(), if l.treatment { "1" } else { "0" }, &l.z.to_string()])
                .map_err(fail)?;
        }
        csv.flush().map_err(|e| Failure::io("latent.csv", e))
    })?;
    ManifestBuilder::new("dgp", Some(a.seed), &p)?.write(out, &[UNITS, EVALS, RATINGS, "truth.json", "latent.csv"])?;
    Ok(format!(
        "dgp: {} pairs, {} evaluations; tau_t = {}, tau_d = {} -> {}",
        p.n_pairs,
        data.corpus.evaluations().len(),
        data.truth.tau_t,
        data.truth.tau_d,
        out.display()
    ))
}

fn seed_learners(cfg: &mut BenchmarkConfig, seed: u64) {
    cfg.nuisance.propensity.seed = seed;
    cfg.nuisance.outcome.seed = seed;
}

#[derive(Debug, Serialize)]
struct EstimateConfig<'a> {
    data: String,
    estimators: Vec<String>,
    outcomes: &'a [Outcome],
    n_perm: usize,
    settings: &'a BenchmarkConfig,
}

fn design_estimate(
    kind: EstimatorArg,
    corpus: &Corpus,
    outcome: Outcome,
    opts: &AnalysisOptions,
) -> textbench::Result<EffectEstimate> {
    let est = match kind {
        EstimatorArg::TauT => analyze_outcome(corpus, outcome, opts)?,
        EstimatorArg::TauTPaired => tau_t_hat(&design_groups(corpus, outcome))?,
        EstimatorArg::TauD => tau_d_hat(corpus, outcome, TextScope::All)?,
        EstimatorArg::TauDOriginals => tau_d_hat(corpus, outcome, TextScope::OriginalsOnly)?,
        other => unreachable!("{other:?} is not a design estimator"),
    };
    Ok(est.with_outcome(outcome))
}

pub fn estimate(a: &EstimateArgs, out: &Path) -> Result<String, Failure> {
    let mut cfg: BenchmarkConfig = load_or_default(a.config.as_deref())?;
    seed_learners(&mut cfg, a.seed);
    cfg.estimators = a.estimator.iter().filter_map(|e| e.observational()).collect();
    cfg.estimators.dedup();
    cfg.nuisance.propensity.validate()?;
    cfg.nuisance.outcome.validate()?;
    let (corpus, inputs) = load_corpus(&a.data)?;

    let present = corpus.outcomes();
    let outcomes: Vec<Outcome> = if a.outcome.is_empty() { present.clone() } else { a.outcome.clone() };
    if let Some(missing) = outcomes.iter().find(|o| !present.contains(o)) {
        return Err(Failure::validation(format!("outcome `{missing}` has no evaluations in {}", a.data.data.display())));
    }

    let opts = AnalysisOptions { n_perm: a.n_perm, seed: a.seed };
    let mut estimates = Vec::new();
    for &outcome in &outcomes {
        for &kind in a.estimator.iter().filter(|e| e.observational().is_none()) {
            let est = design_estimate(kind, &corpus, outcome, &opts).map_err(|e| {
                let f = Failure::from(e);
                Failure { message: format!("{kind:?} on {outcome}: {}", f.message), ..f }
            })?;
            estimates.push(est);
        }
    }
    let mut bins: Vec<(String, Outcome, PropensityBins)> = Vec::new();
    if !cfg.estimators.is_empty() {
        let view = View {
            units: corpus.units().to_vec(),
            evaluations: corpus.evaluations().iter().filter(|e| outcomes.contains(&e.outcome)).cloned().collect(),
        };
        for r in estimate_view(&view, &cfg) {
            let est = r.result.map_err(|e| {
                let f = Failure::from(e);
                Failure { message: format!("{} on {}: {}", r.kind, r.outcome, f.message), ..f }
            })?;
            if let Some(b) = r.bins {
                bins.push((r.kind.as_str().to_string(), r.outcome, b));
            }
            estimates.push(est);
        }
    }

    write_atomic(&out.join("estimates.jsonl"), |w| Ok(write_estimates_jsonl(&estimates, w)?))?;
    write_atomic(&out.join("summary.csv"), |w| Ok(write_summary_csv(&estimates, w)?))?;
    let mut outputs = vec!["estimates.jsonl", "summary.csv"];
    if !bins.is_empty() {
        write_atomic(&out.join("bins.csv"), |w| Ok(write_bins_csv(&bins, w)?))?;
        outputs.push("bins.csv");
    }
    let record = EstimateConfig {
        data: a.data.data.display().to_string(),
        estimators: a.estimator.iter().map(|e| format!("{e:?}")).collect(),
        outcomes: &outcomes,
        n_perm: a.n_perm,
        settings: &cfg,
    };
    with_inputs(ManifestBuilder::new("estimate", Some(a.seed), &record)?, &inputs).write(out, &outputs)?;

    let first = estimates
        .first()
        .map(|e| {
            let se = e.std_error.map(|s| format!(" (se {s:.3})")).unwrap_or_default();
            let outcome = e.outcome.map(|o| o.to_string()).unwrap_or_default();
            format!("; {} {} = {:.4}{se}", e.estimator_name, outcome, e.point)
        })
        .unwrap_or_default();
    Ok(format!(
        "estimate: {} estimates -> {}{first}",
        estimates.len(),
        out.join("estimates.jsonl").display()
    ))
}

/// Everything a benchmark stores per replica; its presence marks the
/// replica as done.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica_index: usize,
    pub ground_truth: BTreeMap<Outcome, EffectEstimate>,
    pub estimates: Vec<ReplicaEstimate>,
}

const RESULT_FILE: &str = "result.json";
const REPORT_FILES: [&str; 4] = ["report.json", "report.csv", "bins.csv", "bands.json"];

fn write_report_files(records: &[ReplicaRecord], out: &Path) -> Result<BenchmarkReport, Failure> {
    let bands = bands_from_truths(records.iter().map(|r| &r.ground_truth));
    let estimates: Vec<ReplicaEstimate> = records.iter().flat_map(|r| r.estimates.iter().cloned()).collect();
    let report = build_report(&bands, records.len(), &estimates)?;
    write_atomic(&out.join("report.json"), |w| Ok(write_report_json(&report, w)?))?;
    write_atomic(&out.join("report.csv"), |w| Ok(write_report_csv(&report, w)?))?;
    write_atomic(&out.join("bins.csv"), |w| Ok(write_bins_csv(&report_bins(&report), w)?))?;
    write_atomic(&out.join("bands.json"), |w| Ok(write_bands(&bands, w)?))?;
    Ok(report)
}

fn coverage_line(report: &BenchmarkReport) -> String {
    report
        .summaries
        .iter()
        .map(|s| format!("{}/{} {:.2}", s.estimator, s.outcome, s.coverage))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn benchmark(a: &BenchmarkArgs, out: &Path) -> Result<String, Failure> {
    let mut cfg: BenchmarkConfig = load_or_default(a.config.as_deref())?;
    apply_overrides(&mut cfg.confounding, &a.overrides, a.seed);
    if !a.estimators.is_empty() {
        cfg.estimators = a.estimators.clone();
    }
    seed_learners(&mut cfg, a.seed);
    cfg.confounding.validate()?;
    cfg.nuisance.propensity.validate()?;
    cfg.nuisance.outcome.validate()?;
    if cfg.estimators.is_empty() {
        return Err(Failure::validation("no estimators selected"));
    }
    let (corpus, inputs) = load_corpus(&a.data)?;
    let manifest = with_inputs(ManifestBuilder::new("benchmark", Some(a.seed), &cfg)?, &inputs);
    check_resumable(out, "benchmark", manifest.config_sha256())?;
    manifest.clone().write(out, &[])?;

    let records: Vec<(ReplicaRecord, bool)> = (0..cfg.confounding.n_replicas)
        .into_par_iter()
        .map(|i| {
            let path = replica_dir(out, i).join(RESULT_FILE);
            if path.is_file() {
                let r: ReplicaRecord = read_json(&path)?;
                if r.replica_index != i {
                    return Err(Failure::validation(format!("{}: holds replica {}", path.display(), r.replica_index)));
                }
                return Ok((r, true));
            }
            let replica = generate_replica(&corpus, &cfg.confounding, i)?;
            let estimates = estimate_replica(&corpus, &replica, &cfg);
            let record = ReplicaRecord { replica_index: i, ground_truth: replica.ground_truth, estimates };
            write_json(&path, &record)?;
            Ok((record, false))
        })
        .collect::<Result<_, Failure>>()?;
    let resumed = records.iter().filter(|r| r.1).count();
    let records: Vec<ReplicaRecord> = records.into_iter().map(|r| r.0).collect();
    let report = write_report_files(&records, out)?;
    manifest.write(out, &REPORT_FILES)?;
    Ok(format!(
        "benchmark: {} replicas ({resumed} resumed); coverage {} -> {}",
        records.len(),
        coverage_line(&report),
        out.display()
    ))
}

#[derive(Debug, Serialize)]
struct ReportConfig {
    input: String,
}

pub fn report(a: &ReportArgs, out: &Path) -> Result<String, Failure> {
    let dir = &a.input;
    let entries = fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Failure::io(dir, e))?;
        let name = entry.file_name();
        let Some(index) = name.to_str().and_then(|n| n.strip_prefix("replica_")).and_then(|n| n.parse().ok()) else {
            continue;
        };
        let path = entry.path().join(RESULT_FILE);
        if path.is_file() {
            found.push((index, path));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Failure::validation(format!("{}: no replica results found", dir.display())));
    }
    if let Some((expected, _)) = found.iter().enumerate().find(|(i, (idx, _))| i != idx) {
        return Err(Failure::validation(format!("{}: replica {expected} is missing", dir.display())));
    }
    let records = found.iter().map(|(_, p)| read_json::<ReplicaRecord>(p)).collect::<Result<Vec<_>, _>>()?;
    let report = write_report_files(&records, out)?;
    let mut manifest = ManifestBuilder::new("report", None, &ReportConfig { input: dir.display().to_string() })?;
    manifest = manifest.input(dir.join(crate::output::MANIFEST_FILE));
    manifest.write(out, &REPORT_FILES)?;
    Ok(format!(
        "report: {} replicas; coverage {} -> {}",
        records.len(),
        coverage_line(&report),
        out.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use textbench::benchmark::EstimatorKind;

    #[test]
    fn replica_dirs_sort_by_index() {
        let out = Path::new("o");
        assert_eq!(replica_dir(out, 7), Path::new("o/replica_0007"));
        assert!(replica_dir(out, 9) < replica_dir(out, 10));
    }

    #[test]
    fn overrides_replace_config_values() {
        let mut cfg = ConfoundingConfig::default();
        let o = ConfoundingOverrides { mode: Some(crate::ModeArg::Amplified), replicas: Some(3), kappa: None, shift: None, delta: Some(0.2) };
        apply_overrides(&mut cfg, &o, 9);
        assert_eq!(cfg.mode, textbench::sim::ConfoundingMode::Amplified);
        assert_eq!(cfg.n_replicas, 3);
        assert_eq!(cfg.effect_delta, 0.2);
        assert_eq!(cfg.selection_strength, ConfoundingConfig::default().selection_strength);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn estimator_kinds_map_one_to_one() {
        let mapped: Vec<EstimatorKind> = [
            EstimatorArg::DiffInMeans,
            EstimatorArg::TopicAdjusted,
            EstimatorArg::BowOr,
            EstimatorArg::BowIpw,
            EstimatorArg::BowAipw,
            EstimatorArg::TiTrimmed,
            EstimatorArg::TiWinsorized,
        ]
        .iter()
        .map(|e| e.observational().unwrap())
        .collect();
        assert_eq!(mapped, EstimatorKind::ALL.to_vec());
        assert!(EstimatorArg::TauT.observational().is_none());
    }
}
