use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn textbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textbench"))
        .args(args)
        .env_remove("TEXTBENCH_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = textbench(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    textbench(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

/// One original, two edits, one evaluation each, with ih ratings that put
/// the second edit on the wrong side of its original.
fn small_corpus(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    fs::write(
        dir.join("units.csv"),
        "text_id,pair_id,version_index,treatment,topic,body\n\
         a1,a,1,1,climate,\"we might be wrong, maybe\"\n\
         a2,a,2,0,climate,we are right\n\
         b1,b,1,0,guns,this is certain\n\
         b2,b,2,1,guns,this could perhaps be\n\
         b3,b,3,1,guns,this is surely certain\n",
    )
    .unwrap();
    fs::write(
        dir.join("evaluations.csv"),
        "eval_id,text_id,evaluator_id,outcome,value\n\
         e1,a1,r1,informative,4\n\
         e2,a2,r2,informative,2\n\
         e3,b1,r1,informative,3\n\
         e4,b2,r2,informative,5\n\
         e5,b3,r1,informative,4\n",
    )
    .unwrap();
    fs::write(
        dir.join("ratings.csv"),
        "text_id,rater_id,feature,value\n\
         a1,x,ih,80\n\
         a2,x,ih,30\n\
         b1,x,ih,20\n\
         b2,x,ih,70\n\
         b3,x,ih,10\n\
         a1,x,respect,60\n\
         a2,x,respect,40\n\
         b1,x,respect,50\n\
         b2,x,respect,70\n\
         b3,x,respect,30\n",
    )
    .unwrap();
}

#[test]
fn ingest_audit_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_corpus(&data);

    let ingested = tmp.path().join("ingested");
    let line = ok(&["ingest", "--data", s(&data), "--out", s(&ingested)]);
    assert!(line.starts_with("ingest: 5 texts in 2 pairs, 5 evaluations"), "{line}");
    assert_eq!(json(ingested.join("ingest.json"))["scale"], "likert");
    assert!(ingested.join("units.csv").is_file());

    let audited = tmp.path().join("audited");
    ok(&["audit", "--data", s(&data), "--out", s(&audited)]);
    let report = json(audited.join("audit.json"));
    assert_eq!(report["removed_text_ids"], serde_json::json!(["b3"]));
    assert!((report["edits_removed_frac"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(report["originals_removed_frac"].as_f64().unwrap(), 0.0);
    let units = fs::read_to_string(audited.join("units.csv")).unwrap();
    assert!(!units.contains("b3"));
    assert!(units.contains("\"we might be wrong, maybe\""));

    let counted = tmp.path().join("counts");
    ok(&["counts", "--data", s(&data), "--out", s(&counted)]);
    let table = fs::read_to_string(counted.join("counts.csv")).unwrap();
    assert!(table.starts_with("topic,ih,original,raw_evaluations,final_evaluations\n"));
    assert!(table.contains("guns,yes,no,2,1"), "{table}");
    assert!(table.contains("climate,yes,yes,1,1"), "{table}");

    let manifest = json(counted.join("manifest.json"));
    assert_eq!(manifest["command"], "counts");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn dgp_then_estimate_recovers_tau() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("dgp");
    let line = ok(&[
        "dgp", "--tau", "0.5", "--beta", "1", "--z-shift", "0.3", "--n-pairs", "400", "--seed", "3", "--out",
        s(&data),
    ]);
    assert!(line.contains("tau_t = 0.5, tau_d = 0.8"), "{line}");
    assert_eq!(json(data.join("truth.json"))["tau_t"], 0.5);
    assert_eq!(json(data.join("manifest.json"))["seed"], 3);

    let est = tmp.path().join("est");
    ok(&[
        "estimate", "--data", s(&data), "--estimator", "tau_t,tau_t_paired,tau_d_originals", "--seed", "1", "--n-perm",
        "200", "--out", s(&est),
    ]);
    let lines: Vec<serde_json::Value> = fs::read_to_string(est.join("estimates.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    let tau_t = &lines[0];
    assert_eq!(tau_t["outcome"], "informative");
    let point = tau_t["point"].as_f64().unwrap();
    let se = tau_t["std_error"].as_f64().unwrap();
    assert!((point - 0.5).abs() <= 4.0 * se, "tau_t {point} (se {se})");
    assert!(tau_t["p_value"].as_f64().unwrap() < 0.05);
    assert!((lines[1]["point"].as_f64().unwrap() - point).abs() < 1e-9);
    let tau_d = lines[2]["point"].as_f64().unwrap();
    let se_d = lines[2]["std_error"].as_f64().unwrap();
    assert!((tau_d - 0.8).abs() <= 4.0 * se_d, "tau_d {tau_d} (se {se_d})");

    let summary = fs::read_to_string(est.join("summary.csv")).unwrap();
    assert!(summary.starts_with("outcome,estimator,coefficient,std_error,p_value,n_texts,n_evals\n"));
}

fn benchmark_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("corpus");
    ok(&[
        "dgp", "--n-pairs", "60", "--alpha", "3", "--likert", "--evals-per-text", "3", "--seed", "2", "--out",
        s(&data),
    ]);
    let config = dir.join("amplified.toml");
    fs::write(
        &config,
        "estimators = [\"diff_in_means\", \"bow_ipw\", \"ti_winsorized\"]\n\
         [bow_bounds]\nlo = 0.02\nhi = 0.98\nmode = \"winsorize\"\n\
         [confounding]\nmode = \"amplified\"\nn_replicas = 4\n\
         [nuisance.propensity]\nn_trees = 10\n\
         [nuisance.outcome]\nkind = \"tree_ensemble_regressor\"\nn_trees = 10\n",
    )
    .unwrap();
    (data, config)
}

#[test]
fn benchmark_is_deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, config) = benchmark_fixture(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = |out: &Path| -> Vec<String> {
        ["benchmark", "--data", s(&data), "--config", s(&config), "--seed", "7", "--out", s(out)]
            .map(String::from)
            .to_vec()
    };
    let run = |out: &Path, extra: &[&str]| {
        let mut v = args(out);
        v.extend(extra.iter().map(|x| x.to_string()));
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let line = run(&a, &[]);
    assert!(line.starts_with("benchmark: 4 replicas (0 resumed)"), "{line}");
    run(&b, &["--jobs", "2"]);
    let report_a = fs::read(a.join("report.csv")).unwrap();
    assert_eq!(report_a, fs::read(b.join("report.csv")).unwrap());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());

    let report = json(a.join("report.json"));
    assert_eq!(report["n_replicas"], 4);
    let bins = fs::read_to_string(a.join("bins.csv")).unwrap();
    assert!(bins.starts_with("estimator,outcome,p_low,p_mid,p_high\n"));
    assert!(bins.contains("bow_ipw,informative"));
    let csv = String::from_utf8(report_a.clone()).unwrap();
    assert!(csv.lines().filter(|l| l.starts_with("bow_ipw,")).all(|l| !l.contains(",,")), "{csv}");

    let manifest = json(a.join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["confounding"]["n_replicas"], 4);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);

    fs::remove_file(a.join("replica_0002").join("result.json")).unwrap();
    fs::remove_file(a.join("report.csv")).unwrap();
    let line = run(&a, &[]);
    assert!(line.starts_with("benchmark: 4 replicas (3 resumed)"), "{line}");
    assert_eq!(fs::read(a.join("report.csv")).unwrap(), report_a);

    let rebuilt = tmp.path().join("rebuilt");
    ok(&["report", "--input", s(&a), "--out", s(&rebuilt)]);
    assert_eq!(fs::read(rebuilt.join("report.csv")).unwrap(), report_a);

    let other = args(&a).into_iter().map(|x| if x == "7" { "8".to_string() } else { x }).collect::<Vec<_>>();
    assert_eq!(code(&other.iter().map(String::as_str).collect::<Vec<_>>()), 1);
}

#[test]
fn simulate_writes_replica_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = benchmark_fixture(tmp.path());
    let out = tmp.path().join("sim");
    let line = ok(&[
        "simulate", "--data", s(&data), "--seed", "4", "--mode", "amplified", "--replicas", "3", "--out", s(&out),
    ]);
    assert!(line.starts_with("simulate: 3 replicas (0 resumed)"), "{line}");
    for i in 0..3 {
        let dir = out.join(format!("replica_{i:04}"));
        let view = fs::read_to_string(dir.join("view.csv")).unwrap();
        assert!(view.starts_with("text_id,treatment,topic,body,informative\n"));
        let truth = json(dir.join("truth.json"));
        let p = truth["informative"]["point"].as_f64().unwrap();
        assert!((-1.0..=1.0).contains(&p));
    }
    let bands = json(out.join("bands.json"));
    assert_eq!(bands[0]["n_replicas"], 3);
    assert_eq!(json(out.join("manifest.json"))["config"]["mode"], "amplified");

    let again = ok(&[
        "simulate", "--data", s(&data), "--seed", "4", "--mode", "amplified", "--replicas", "3", "--out", s(&out),
    ]);
    assert!(again.starts_with("simulate: 3 replicas (3 resumed)"), "{again}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_corpus(&data);
    let out = tmp.path().join("out");

    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["estimate", "--data", s(&data)]), 1, "seed is mandatory");
    assert_eq!(code(&["estimate", "--data", s(&tmp.path().join("nope")), "--seed", "1"]), 1);
    assert_eq!(
        code(&["estimate", "--data", s(&data), "--seed", "1", "--outcome", "aggressive", "--out", s(&out)]),
        1
    );

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "n_pairs = 10\nwat = 2\n").unwrap();
    let res = textbench(&["dgp", "--config", s(&bad), "--seed", "1", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("wat"));

    fs::write(data.join("units.csv"), "text_id,pair_id,version_index,treatment,topic,body\nx,p,1,1,t,b\ny,p,2,1,t,b\n")
        .unwrap();
    let res = textbench(&["ingest", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("units.csv"));

    // Two pairs rated by two evaluators are enough for a clustered estimate.
    let one = tmp.path().join("one");
    small_corpus(&one);
    let res = textbench(&["estimate", "--data", s(&one), "--seed", "1", "--n-perm", "100", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from-env");
    let res = Command::new(env!("CARGO_BIN_EXE_textbench"))
        .args(["dgp", "--n-pairs", "5", "--seed", "1"])
        .env("TEXTBENCH_OUT", &out)
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(out.join("units.csv").is_file());
    assert!(out.join("manifest.json").is_file());
}
