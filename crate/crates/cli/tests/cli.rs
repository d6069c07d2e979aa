use std::fs;
use std::path::Path;
use std::process::Command;

use torus_drift_cli::{parse_scenarios, parse_scenarios_str, predict_all, run, write_outputs, Status, GALLERY};

const BIN: &str = env!("CARGO_BIN_EXE_torus-drift");

fn body(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# schema_version=1 generated="), "{first}");
    rest.to_string()
}

const SMALL: &str = r#"
[[scenario]]
id = "flat"
family = "direction"
starts = [["0", "0"]]
t_end = "50"
xi = ["3", "4"]
a = { constant = "1.5" }
abs_tol = "1e-12"
rel_tol = "0"

[[scenario]]
id = "rational"
family = "direction"
starts = [["0", "0"], ["0", "0.25"]]
t_end = "1e3"
n = 16
xi = ["1", "0"]
a = { constant = "2", terms = [{ k = ["1", "1"], sin = "0.5" }, { k = ["1", "-1"], sin = "0.5" }] }
"#;

#[test]
fn gallery_has_ten_scenarios() {
    let s = parse_scenarios_str(GALLERY, "gallery").unwrap();
    assert_eq!(s.len(), 10);
    let families: std::collections::BTreeSet<&str> = s.iter().map(|s| s.spec.family()).collect();
    assert_eq!(families.len(), 4, "{families:?}");
}

#[test]
fn gallery_predictions_are_all_available() {
    let s = parse_scenarios_str(GALLERY, "gallery").unwrap();
    let report = predict_all(&s);
    assert!(report.rows.iter().all(|r| r.predicted.is_some()), "{:#?}", report.rows);
    let harmonic = report.rows.iter().find(|r| r.scenario_id == "oned-harmonic").unwrap();
    assert!((harmonic.predicted.as_ref().unwrap()[0] - 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn constant_field_matches_exactly() {
    let s = parse_scenarios_str(SMALL, "small").unwrap();
    let results = run(&s[..1], 1).unwrap();
    let row = &results[0].1.comparison;
    assert_eq!(row.status, Status::Pass);
    assert!(row.abs_error.as_ref().unwrap().iter().all(|e| *e <= 1e-12));
}

#[test]
fn rational_direction_line_means() {
    let s = parse_scenarios_str(SMALL, "small").unwrap();
    let results = run(&s[1..], 2).unwrap();
    let expect = [3f64.sqrt(), 2.0];
    for ((_, r), e) in results.iter().zip(expect) {
        let m = &r.comparison.measured.as_ref().unwrap();
        assert!((m[0] - e).abs() <= 0.01 * e, "{m:?} vs {e}");
        assert_eq!(r.comparison.status, Status::Pass);
        assert_eq!(r.comparison.case_tag.as_deref(), Some("Rational-line-positive"));
    }
}

#[test]
fn vanishing_one_d_has_no_drift() {
    let src = r#"
[[scenario]]
id = "cos-squared"
family = "oned"
starts = [["0.1"]]
measures = false
b = { constant = "1/(2*pi)", terms = [{ k = ["1"], cos = "1/(2*pi)" }] }
"#;
    let s = parse_scenarios_str(src, "cos-squared").unwrap();
    let results = run(&s, 1).unwrap();
    let row = &results[0].1.comparison;
    assert_eq!(row.case_tag.as_deref(), Some("OneD-vanishing"));
    assert_eq!(row.predicted, Some(vec![0.0]));
    assert!(row.measured.as_ref().unwrap()[0].abs() <= 1e-3);
    assert_eq!(row.status, Status::Pass);
}

#[test]
fn integrator_errors_become_failed_rows() {
    let src = SMALL.replace("t_end = \"50\"", "t_end = \"50\"\nrtol = \"0.5\"");
    let s = parse_scenarios_str(&src, "bad").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let results = run(&s, 2).unwrap();
    let report = write_outputs(dir.path(), &s, &results).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows[0].status, Status::Failed);
    assert!(report.rows[0].notes[0].contains("rtol"), "{:?}", report.rows[0].notes);
    assert!(report.rows[1..].iter().all(|r| r.status == Status::Pass));
    assert!(!report.passed);
    let csv = body(&dir.path().join("comparison.csv"));
    assert!(csv.lines().nth(1).unwrap().starts_with("flat,0,direction,FAILED"));
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let s = parse_scenarios_str(SMALL, "small").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(a.path(), &s, &run(&s, 1).unwrap()).unwrap();
    write_outputs(b.path(), &s, &run(&s, 4).unwrap()).unwrap();
    for rel in [
        "comparison.csv",
        "flat/drift.csv",
        "rational/drift.csv",
        "rational/residuals.csv",
        "rational/measure_0.csv",
        "rational/measure_1.csv",
    ] {
        assert_eq!(body(&a.path().join(rel)), body(&b.path().join(rel)), "{rel}");
    }
    assert_eq!(
        fs::read(a.path().join("comparison.json")).unwrap(),
        fs::read(b.path().join("comparison.json")).unwrap()
    );
}

#[test]
fn csv_layout() {
    let s = parse_scenarios_str(SMALL, "small").unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &s, &run(&s, 2).unwrap()).unwrap();
    let drift = body(&dir.path().join("rational/drift.csv"));
    let mut lines = drift.lines();
    assert_eq!(lines.next().unwrap(), "scenario_id,start_index,t,X1,X2,drift1,drift2");
    let rows: Vec<&str> = lines.collect();
    // Checkpoints 1, 2, 4, ..., 512 and 1000 for each of two starts.
    assert_eq!(rows.len(), 2 * 11);
    assert!(rows[0].starts_with("rational,0,1,"));
    assert!(rows[11].starts_with("rational,1,1,"));

    let residuals = body(&dir.path().join("rational/residuals.csv"));
    assert_eq!(residuals.lines().count(), 1 + 2 * 10);
    let measure = body(&dir.path().join("rational/measure_0.csv"));
    assert_eq!(measure.lines().next().unwrap(), "i1,i2,c1,c2,weight");
    let mass: f64 = measure
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-12);

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
    assert_eq!(json["rows"][1]["period"]["found"], true);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL).unwrap();
    let out = Command::new(BIN)
        .args(["run", good.to_str().unwrap(), "--jobs", "2", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("out/comparison.csv").exists());

    // A tolerance of zero cannot be met by a finite-time estimate.
    let strict = dir.path().join("strict.toml");
    fs::write(&strict, SMALL.replace("n = 16", "n = 16\nabs_tol = \"0\"\nrel_tol = \"0\"")).unwrap();
    let out = Command::new(BIN)
        .args(["run", strict.to_str().unwrap(), "--out"])
        .arg(dir.path().join("strict"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, SMALL.replace("n = 16", "integratr = 16")).unwrap();
    let out = Command::new(BIN).args(["predict", typo.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integratr"));
}

#[test]
fn predict_and_gallery_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.toml");
    let out = Command::new(BIN).args(["gallery", path.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&path).unwrap(), GALLERY);
    assert_eq!(parse_scenarios(&path).unwrap().len(), 10);

    let again = Command::new(BIN).args(["gallery", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(again.status.code(), Some(2));

    let out = Command::new(BIN).args(["predict", path.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema_version=1"));
    assert!(text.contains("oned-harmonic,0,oned,PASS,OneD-positive,1,,1.7320508075688"));
}
