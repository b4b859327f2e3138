use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_coinfection"));
    cmd.env_remove("COINFECTION_THREADS");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn schema_for(file: &str) -> &'static str {
    match file {
        "manifest.json" => "manifest",
        "generator.json" => "generator",
        "summary.json" => "summary",
        "fit.json" | "model.json" => "fit",
        "stepwise.json" => "stepwise",
        "wald.json" => "wald",
        "rf.json" => "rf",
        "ensemble.json" => "ensemble",
        "odds.json" => "odds",
        "calibration.json" => "calibration",
        "holdout.json" => "holdout",
        other => panic!("no schema for {other}"),
    }
}

fn validate(schema: &str, instance: &Value) {
    let path = schema_dir().join(format!("{schema}.schema.json"));
    let schema: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{} violates {}: {errors:#?}", instance, path.display());
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|_| panic!("missing {}", path.display()))).unwrap()
}

/// Validates every JSON file in `dir` and checks the manifest lists exactly
/// the other files written next to it.
fn check_outputs(dir: &Path, expected: &[&str]) -> Value {
    let manifest = read_json(&dir.join("manifest.json"));
    let mut listed: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    listed.sort();
    let mut want: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
    want.sort();
    assert_eq!(listed, want);
    validate("manifest", &manifest);
    for name in &listed {
        if name.ends_with(".json") {
            validate(schema_for(name), &read_json(&dir.join(name)));
        }
        assert!(dir.join(name).exists(), "{name} listed but not written");
    }
    manifest
}

fn simulate(work: &Path, n: usize, seed: u64, out: &str) -> PathBuf {
    run_ok(work, &["simulate", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out-dir", out]);
    work.join(out).join("data.csv")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn manifest_without_volatile(dir: &Path) -> Value {
    let mut m = read_json(&dir.join("manifest.json"));
    let obj = m.as_object_mut().unwrap();
    for key in ["timestamp", "threads", "argv"] {
        obj.remove(key);
    }
    m
}

#[test]
fn simulate_then_summarize() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), 400, 3, "sim");
    let manifest = check_outputs(&tmp.path().join("sim"), &["data.csv", "generator.json"]);
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["n"], 400);

    let header = fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "temperature,sick_days,age,rainfall,sex,headache,eye_pain,muscle_pain,joint_pain,cough,\
         nausea_vomiting,chills,diarrhea,nasal_congestion,jaundice,malaria,igm,igg"
    );

    run_ok(tmp.path(), &["summarize", "--input", "sim/data.csv", "--out-dir", "sum"]);
    check_outputs(&tmp.path().join("sum"), &["summary.json"]);
    let summary = read_json(&tmp.path().join("sum/summary.json"));
    assert_eq!(summary["table"]["total"], 400);
    assert_eq!(summary["drop_report"]["kept"], 400);
}

#[test]
fn renamed_columns_are_accepted() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), 200, 1, "sim");
    let text = fs::read_to_string(&data).unwrap().replacen("temperature,", "temp_c,", 1);
    fs::write(tmp.path().join("renamed.csv"), text).unwrap();

    let out = run(tmp.path(), &["summarize", "--input", "renamed.csv", "--out-dir", "a"]);
    assert_eq!(out.status.code(), Some(1));
    run_ok(tmp.path(), &["summarize", "--input", "renamed.csv", "--rename", "temperature=temp_c", "--out-dir", "b"]);
}

#[test]
fn fit_with_stepwise_and_independence_test() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 3000, 11, "sim");
    run_ok(
        tmp.path(),
        &[
            "fit", "--input", "sim/data.csv", "--covariates", "temperature,sick_days,age,sex,cough",
            "--stepwise", "--test-independence", "--seed", "7", "--out-dir", "fit",
        ],
    );
    let dir = tmp.path().join("fit");
    let manifest = check_outputs(&dir, &["fit.json", "stepwise.json", "wald.json", "coefficients.csv"]);
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["stepwise"], true);

    let fit = read_json(&dir.join("fit.json"));
    let stepwise = read_json(&dir.join("stepwise.json"));
    assert_eq!(fit, stepwise["fit"]);
    let p = fit["coef"]["covariates"].as_array().unwrap().len();
    let rows = fs::read_to_string(dir.join("coefficients.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 3 * (p + 1));
    assert_eq!(read_json(&dir.join("wald.json"))["dof"], p + 1);
}

#[test]
fn odds_from_model_and_from_data_agree() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 2000, 5, "sim");
    let covs = "temperature,age,sex";
    run_ok(tmp.path(), &["fit", "--input", "sim/data.csv", "--covariates", covs, "--out-dir", "fit"]);
    run_ok(
        tmp.path(),
        &[
            "odds", "--model", "fit/fit.json", "--contrast", "3", "--contrast", "3:2",
            "--covariate", "age", "--d", "5", "--covariate", "sex", "--out-dir", "a",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "odds", "--input", "sim/data.csv", "--covariates", covs, "--contrast", "3", "--contrast", "3:2",
            "--covariate", "age", "--d", "5", "--covariate", "sex", "--out-dir", "b",
        ],
    );
    check_outputs(&tmp.path().join("a"), &["odds.json", "odds.csv"]);
    check_outputs(&tmp.path().join("b"), &["odds.json", "odds.csv"]);
    let a = read_json(&tmp.path().join("a/odds.json"));
    assert_eq!(a, read_json(&tmp.path().join("b/odds.json")));
    let table = a["odds_ratios"].as_array().unwrap();
    assert_eq!(table.len(), 4);
    assert_eq!(table[0]["d"], 5.0);
    assert_eq!(table[2]["d"], 1.0);

    // default: all covariates against the six standard contrasts
    run_ok(tmp.path(), &["odds", "--model", "fit/fit.json", "--out-dir", "c"]);
    assert_eq!(read_json(&tmp.path().join("c/odds.json"))["odds_ratios"].as_array().unwrap().len(), 18);
}

#[test]
fn random_forest_with_selection() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 300, 2, "sim");
    let common = ["--input", "sim/data.csv", "--ntree", "40", "--seed", "4"];
    let mut plain = vec!["rf"];
    plain.extend(common);
    plain.extend(["--out-dir", "plain"]);
    run_ok(tmp.path(), &plain);
    check_outputs(&tmp.path().join("plain"), &["rf.json", "importance.csv"]);
    let rf = read_json(&tmp.path().join("plain/rf.json"));
    assert_eq!(rf["importance"].as_array().unwrap().len(), 15);
    assert!(rf["vsurf"].is_null());

    let mut sel = vec!["rf"];
    sel.extend(common);
    sel.extend(["--vsurf", "--n-forests", "3", "--out-dir", "sel"]);
    run_ok(tmp.path(), &sel);
    check_outputs(&tmp.path().join("sel"), &["rf.json", "importance.csv"]);
    let rf = read_json(&tmp.path().join("sel/rf.json"));
    let selected: Vec<&str> = rf["vsurf"]["selected"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for row in rf["importance"].as_array().unwrap() {
        let name = row["covariate"].as_str().unwrap();
        assert_eq!(row["selected"].as_bool().unwrap(), selected.contains(&name));
    }
}

const ENSEMBLE_ARGS: &[&str] = &[
    "ensemble", "--input", "../sim/data.csv", "--b", "4", "--n-majority", "40", "--analyses", "vsurf,fit,wald,or",
    "--covariates", "temperature,sick_days,age,sex,cough", "--ntree", "30", "--n-forests", "2", "--seed", "9",
];

#[test]
fn ensemble_reports() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 4000, 8, "sim");
    let work = tmp.path().join("run");
    fs::create_dir(&work).unwrap();
    let mut args = ENSEMBLE_ARGS.to_vec();
    args.extend(["--out-dir", "out"]);
    run_ok(&work, &args);
    check_outputs(
        &work.join("out"),
        &["ensemble.json", "selection_frequency.csv", "importance_box.csv", "odds_box.csv"],
    );
    let report = read_json(&work.join("out/ensemble.json"));
    assert_eq!(report["b"], 4);
    assert_eq!(report["fits"].as_array().unwrap().len(), 4);
    assert_eq!(report["wald"]["p_values"].as_array().unwrap().len(), 4);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 4000, 8, "sim");
    let work = tmp.path().join("run");
    fs::create_dir(&work).unwrap();
    for (threads, out) in [("1", "t1"), ("3", "t3"), ("3", "t3b")] {
        let mut args = vec!["--threads", threads];
        args.extend(ENSEMBLE_ARGS);
        args.extend(["--out-dir", out]);
        run_ok(&work, &args);
    }
    let reference = files(&work.join("t1"));
    assert!(!reference.is_empty());
    for other in ["t3", "t3b"] {
        assert_eq!(files(&work.join(other)), reference, "{other} differs from t1");
    }
    let m1 = manifest_without_volatile(&work.join("t1"));
    let mut m3 = manifest_without_volatile(&work.join("t3"));
    m3["config"]["out_dir"] = m1["config"]["out_dir"].clone();
    assert_eq!(m1, m3);
    assert_eq!(read_json(&work.join("t3/manifest.json"))["threads"], 3);

    // environment override
    let out = bin()
        .current_dir(&work)
        .env("COINFECTION_THREADS", "2")
        .args(ENSEMBLE_ARGS)
        .args(["--out-dir", "env"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_json(&work.join("env/manifest.json"))["threads"], 2);
    assert_eq!(files(&work.join("env")), reference);
}

#[test]
fn calibrate_then_predict() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 3000, 21, "sim");
    let covs = "temperature,sick_days,age,sex";
    run_ok(
        tmp.path(),
        &[
            "calibrate", "--input", "sim/data.csv", "--covariates", covs, "--folds", "5", "--cost", "2",
            "--grid-step", "0.01", "--filter", "age>10,sick_days>3", "--holdout", "--seed", "3", "--out-dir", "cal",
        ],
    );
    let dir = tmp.path().join("cal");
    check_outputs(&dir, &["calibration.json", "curve.csv", "holdout.json", "model.json"]);
    let cal = read_json(&dir.join("calibration.json"));
    assert_eq!(cal["curve"].as_array().unwrap().len(), 101);
    assert_eq!(fs::read_to_string(dir.join("curve.csv")).unwrap().lines().next().unwrap(), "gamma,wmcr,fn,fp");
    let gamma = cal["gamma_star"].as_f64().unwrap().to_string();

    run_ok(
        tmp.path(),
        &[
            "predict", "--model", "cal/model.json", "--input", "sim/data.csv", "--gamma", &gamma,
            "--filter", "age>10,sick_days>3", "--out-dir", "pred",
        ],
    );
    check_outputs(&tmp.path().join("pred"), &["predictions.csv"]);
    let mut reader = csv::Reader::from_path(tmp.path().join("pred/predictions.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["id", "prob", "label", "gamma", "filter"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3000);
    for r in &rows {
        let p: f64 = r[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(&r[2] == "0" || &r[2] == "1");
        assert_eq!(&r[4], "age>10,sick_days>3");
    }
}

#[test]
fn predict_accepts_bare_coefficients() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("beta.json"),
        r#"{"covariates": ["age"], "beta": [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]}"#,
    )
    .unwrap();
    fs::write(tmp.path().join("patients.csv"), "id,age\np1,20\np2,5\n").unwrap();
    run_ok(
        tmp.path(),
        &["predict", "--model", "beta.json", "--input", "patients.csv", "--gamma", "0.4", "--out-dir", "p"],
    );
    // all four classes equally likely: P(C|M) = 1/2 > 0.4
    let text = fs::read_to_string(tmp.path().join("p/predictions.csv")).unwrap();
    assert_eq!(text, "id,prob,label,gamma,filter\np1,0.5,1,0.4,\np2,0.5,1,0.4,\n");
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let line = stderr.lines().last().expect("error record on stderr");
    let record: Value = serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {stderr}"));
    validate("error", &record);
    record
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["fit", "--no-such-flag"],
        vec!["fit"],
        vec!["simulate", "--n", "many"],
        vec!["odds", "--contrast", "4"],
        vec!["calibrate", "--input", "x.csv", "--filter", "weight>3"],
    ] {
        let out = run(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_record(&out)["error"]["kind"], "usage", "{args:?}");
    }
}

#[test]
fn data_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["summarize", "--input", "missing.csv", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "io");

    fs::write(tmp.path().join("bad.csv"), "temperature,age\n39,20\n").unwrap();
    let out = run(tmp.path(), &["summarize", "--input", "bad.csv", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "schema");

    let data = simulate(tmp.path(), 50, 1, "sim");
    let header = fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    fs::write(tmp.path().join("empty.csv"), format!("{header}\n")).unwrap();
    let out = run(tmp.path(), &["summarize", "--input", "empty.csv", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "empty_data");

    let out = run(
        tmp.path(),
        &["predict", "--model", "sim/generator.json", "--input", "sim/data.csv", "--gamma", "0.5", "--out-dir", "o"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "input");
}
