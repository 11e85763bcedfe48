//! End-to-end tests of the `whitney` binary: golden decompositions, exact
//! evaluation of a collapsing jet, grid output shape and determinism, bound
//! tables, verification suites, and the exit-code contract.

use std::path::PathBuf;
use std::process::{Command, Output};

use whitney_core::exact::{parse_ratio, ratio_as_dyadic};
use whitney_core::Dyadic;

const ORIGIN_SET: &str = r#"{"dim":1,"parts":[{"type":"point","coords":["0"]}]}"#;
const TWO_POINT_SET: &str =
    r#"{"dim":1,"parts":[{"type":"point","coords":["0"]},{"type":"point","coords":["1"]}]}"#;
const IDENTITY_JET: &str = r#"{"builtin":"poly","coeffs":[0,1],"order":1}"#;
const COS_JET: &str = r#"{"builtin":"cos","coeffs":[1],"order":0}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_whitney"))
}

fn fixtures() -> (tempfile::TempDir, PathBuf, PathBuf, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().expect("temp dir");
    let origin = dir.path().join("origin.json");
    let two = dir.path().join("two.json");
    let identity = dir.path().join("identity.json");
    let cos = dir.path().join("cos.json");
    std::fs::write(&origin, ORIGIN_SET).unwrap();
    std::fs::write(&two, TWO_POINT_SET).unwrap();
    std::fs::write(&identity, IDENTITY_JET).unwrap();
    std::fs::write(&cos, COS_JET).unwrap();
    (dir, origin, two, identity, cos)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn parse_decimal(s: &str) -> Dyadic {
    let r = parse_ratio(s.trim()).expect("decimal output parses");
    ratio_as_dyadic(&r).expect("printed values are dyadic")
}

#[test]
fn decompose_origin_matches_the_dyadic_ladder() {
    let (_dir, origin, _, _, _) = fixtures();
    let out = bin()
        .args(["decompose", "--set"])
        .arg(&origin)
        .args(["--region", "1/4:4", "--levels", "-2:2", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = rows.as_array().unwrap();
    // [1/4, 4] to the right of the origin holds exactly the cubes
    // [2^-k, 2^{-k+1}] for k = -1..2, each with corner index 1.
    assert_eq!(rows.len(), 4);
    let mut levels: Vec<i64> = rows.iter().map(|r| r["level"].as_i64().unwrap()).collect();
    levels.sort();
    assert_eq!(levels, vec![-1, 0, 1, 2]);
    for r in rows {
        assert_eq!(r["corner"].as_array().unwrap().len(), 1);
        assert_eq!(r["corner"][0].as_i64().unwrap(), 1);
        assert_eq!(r["certified"].as_bool().unwrap(), true);
    }
}

#[test]
fn decompose_csv_has_header_and_one_row_per_cube() {
    let (_dir, origin, _, _, _) = fixtures();
    let out = bin()
        .args(["decompose", "--set"])
        .arg(&origin)
        .args(["--region", "1/4:4", "--levels", "-2:2", "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "level,corner_1,d_lo,d_hi,certified");
    assert_eq!(lines.len(), 5);
    for row in &lines[1..] {
        assert!(row.ends_with(",true"), "uncertified row: {row}");
    }
}

#[test]
fn eval_collapses_to_the_global_polynomial() {
    let (_dir, origin, _, identity, _) = fixtures();
    // One-point domain, first-order data (0, 1): the extension is x itself,
    // so value and derivative are exact.
    let out = bin()
        .args(["eval", "--set"])
        .arg(&origin)
        .arg("--jet")
        .arg(&identity)
        .args(["--point", "7/4", "--precision", "16"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let value_line = text.lines().find(|l| l.starts_with("value:")).unwrap();
    let v = parse_decimal(value_line.trim_start_matches("value:"));
    let diff = v.sub(&Dyadic::int_times_pow2(7, -2)).abs();
    assert!(diff <= Dyadic::pow2(-16), "value {} too far from 7/4", v.to_decimal_string());
    assert!(text.contains("branch: outsideF"));

    let out = bin()
        .args(["eval", "--set"])
        .arg(&origin)
        .arg("--jet")
        .arg(&identity)
        .args(["--point", "7/4", "--deriv", "1", "--precision", "16", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["branch"], "outsideF");
    assert_eq!(v["precision"], 16);
    let mant: i64 = v["value"]["mant"].as_str().unwrap().parse().unwrap();
    let exp = v["value"]["exp"].as_i64().unwrap();
    let got = Dyadic::int_times_pow2(mant, exp);
    let diff = got.sub(&Dyadic::one()).abs();
    assert!(diff <= Dyadic::pow2(-16), "derivative should be 1");
}

#[test]
fn eval_on_the_set_reports_the_via_f_branch() {
    let (_dir, _, two, _, cos) = fixtures();
    let out = bin()
        .args(["eval", "--set"])
        .arg(&two)
        .arg("--jet")
        .arg(&cos)
        .args(["--point", "1", "--precision", "20"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("branch: viaF"), "got: {text}");
    let value_line = text.lines().find(|l| l.starts_with("value:")).unwrap();
    let v = parse_decimal(value_line.trim_start_matches("value:"));
    // cos 1 = 0.5403023058…, and the answer is within 2^-20 of it.
    let vr = v.to_ratio();
    let lo = parse_ratio("0.540300").unwrap();
    let hi = parse_ratio("0.540305").unwrap();
    assert!(vr >= lo && vr <= hi, "cos 1 evaluation off: {}", v.to_decimal_string());
}

#[test]
fn eval_rejects_derivatives_beyond_the_jet_order() {
    let (_dir, origin, _, identity, _) = fixtures();
    let out = bin()
        .args(["eval", "--set"])
        .arg(&origin)
        .arg("--jet")
        .arg(&identity)
        .args(["--point", "1", "--deriv", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_and_empty_sets_use_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let empty = dir.path().join("empty.json");
    std::fs::write(&bad, "{not json").unwrap();
    std::fs::write(&empty, r#"{"dim":1,"parts":[]}"#).unwrap();

    let out = bin()
        .args(["decompose", "--set"])
        .arg(&bad)
        .args(["--region", "0:1", "--levels", "0:1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["decompose", "--set"])
        .arg(&empty)
        .args(["--region", "0:1", "--levels", "0:1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = bin()
        .args(["decompose", "--set", "/nonexistent/set.json"])
        .args(["--region", "0:1", "--levels", "0:1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn region_and_level_syntax_errors_exit_2() {
    let (_dir, origin, _, _, _) = fixtures();
    for (region, levels) in
        [("0:1,0:1", "0:1"), ("01", "0:1"), ("0:1", "1:0"), ("0:1", "a:b")]
    {
        let out = bin()
            .args(["decompose", "--set"])
            .arg(&origin)
            .args(["--region", region, "--levels", levels])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "region={region} levels={levels}");
    }
}

#[test]
fn grid_rows_match_pointwise_evaluation_and_repeat_exactly() {
    let (_dir, origin, _, identity, _) = fixtures();
    let run = || {
        bin()
            .args(["grid", "--set"])
            .arg(&origin)
            .arg("--jet")
            .arg(&identity)
            .args(["--region", "-2:2", "--resolution", "33", "--precision", "12"])
            .output()
            .unwrap()
    };
    let out = run();
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x1,value");
    assert_eq!(lines.len(), 34);
    let tol = Dyadic::pow2(-12);
    for row in &lines[1..] {
        let (x, v) = row.split_once(',').unwrap();
        let x = parse_decimal(x);
        let v = parse_decimal(v);
        assert!(v.sub(&x).abs() <= tol, "identity grid row {row} off");
    }
    // Same command, byte-identical output.
    let again = run();
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn grid_rejects_oversize_resolutions() {
    let (_dir, origin, _, identity, _) = fixtures();
    for res in ["5000", "0"] {
        let out = bin()
            .args(["grid", "--set"])
            .arg(&origin)
            .arg("--jet")
            .arg(&identity)
            .args(["--region", "0:1", "--resolution", res])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "resolution {res}");
    }
}

#[test]
fn bounds_prints_the_frozen_anchors() {
    let out = bin().args(["bounds", "--order", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let h_column: Vec<&str> = text
        .lines()
        .skip(1)
        .take(4)
        .map(|l| l.split_whitespace().nth(2).unwrap())
        .collect();
    assert_eq!(h_column, vec!["1", "4", "768", "606528"]);

    let out = bin()
        .args(["bounds", "--order", "2", "--format", "json"])
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["table"][2]["h"], "768");
    assert_eq!(v["table"][2]["b"], "1277952");
    assert_eq!(v["bprime"][0]["value"]["mant"], "1");
    assert_eq!(v["bprime"][0]["value"]["exp"], 3);
}

#[test]
fn bounds_with_set_and_jet_reports_extension_constants() {
    let (_dir, origin, _, identity, _) = fixtures();
    let out = bin()
        .args(["bounds", "--order", "1", "--set"])
        .arg(&origin)
        .arg("--jet")
        .arg(&identity)
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let ext = &v["extension"];
    assert_eq!(ext["order"], 1);
    assert_eq!(ext["dim"], 1);
    // c = 33 exactly; e is bounded above by a hair over 16/7.
    assert_eq!(ext["c"]["mant"], "33");
    assert_eq!(ext["c"]["exp"], 0);
    assert!(ext["a_m"]["mant"].as_str().is_some());
    assert_eq!(ext["a_mk"].as_array().unwrap().len(), 2);

    let out = bin()
        .args(["bounds", "--jet"])
        .arg(&identity)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "--jet without --set must be a usage error");
}

#[test]
fn check_cubes_passes_and_prints_one_line_per_invariant() {
    let out = bin().args(["check", "--suite", "cubes", "--seed", "42"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let verdicts: Vec<&str> = text.lines().filter(|l| l.starts_with("PASS")).collect();
    assert!(verdicts.len() >= 9, "expected at least nine PASS lines, got:\n{text}");
    assert!(!text.contains("FAIL "), "unexpected failure:\n{text}");
    assert!(text.lines().last().unwrap().starts_with("ok:"));
}

#[test]
fn check_accepts_a_custom_set_and_json_format() {
    let (_dir, origin, _, _, _) = fixtures();
    let out = bin()
        .args(["check", "--suite", "cubes", "--set"])
        .arg(&origin)
        .args(["--seed", "7", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 3, "custom set runs one labeled round of each check");
    for r in reports {
        assert_eq!(r["passed"], true, "failed: {r}");
        assert!(r["name"].as_str().unwrap().ends_with("[custom]"));
    }
}

#[test]
fn check_rejects_unknown_suites() {
    let out = bin().args(["check", "--suite", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_the_file_instead_of_stdout() {
    let (_dir, origin, _, _, _) = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cubes.csv");
    let out = bin()
        .args(["decompose", "--set"])
        .arg(&origin)
        .args(["--region", "1:2", "--levels", "0:0", "--format", "csv", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("level,corner_1,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn eps_is_validated_and_reshapes_the_decomposition() {
    let (_dir, origin, _, _, _) = fixtures();
    for eps in ["0", "1/5", "-1/8", "1/3"] {
        let out = bin()
            .args(["decompose", "--set"])
            .arg(&origin)
            .args(["--region", "1:2", "--levels", "0:0", "--eps", eps])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "eps {eps} must be rejected");
    }
    // A legal eps still certifies the same golden cube.
    let out = bin()
        .args(["decompose", "--set"])
        .arg(&origin)
        .args(["--region", "1:2", "--levels", "0:0", "--eps", "1/16", "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 2);
}
