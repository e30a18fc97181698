// End-to-end runs of the installed binary: output formats, exit codes,
// and the documented command examples.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn ellg2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellg2"))
        .args(args)
        .env_remove("ELLG2_THREADS")
        .output()
        .expect("binary runs")
}

fn ellg2_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellg2"))
        .args(args)
        .env("ELLG2_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn tmp_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

/// RE+IMi literal as the binary prints it.
fn parse_complex(s: &str) -> (f64, f64) {
    let t = s.trim();
    let Some(body) = t.strip_suffix('i') else {
        return (t.parse().expect("real literal"), 0.0);
    };
    let bytes = body.as_bytes();
    let k = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'))
        .expect("sign between parts");
    (body[..k].parse().expect("re"), body[k..].parse().expect("im"))
}

#[test]
fn eval_theta_at_zero_nome_prints_the_exact_linear_value() {
    let out = ellg2(&["eval", "theta", "--u", "0.4", "--p", "0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_str(&out), "0.6\n");
}

#[test]
fn eval_gamma_matches_the_library_oracle() {
    let out = ellg2(&["eval", "gamma", "--u", "0.5", "--p", "0.1", "--q", "0.2"]);
    assert_eq!(code(&out), 0);
    let v: f64 = stdout_str(&out).trim().parse().unwrap();
    assert!((v - 2.3119761109532475).abs() <= 1e-15);
}

#[test]
fn eval_accepts_complex_literals_and_prints_them_back() {
    let out = ellg2(&["eval", "e", "--u", "0.4+0.25i", "--v", "0.3-0.1i", "--p", "0.05"]);
    assert_eq!(code(&out), 0);
    let (re, im) = parse_complex(&stdout_str(&out));
    let expected = ellg2::special_functions::e_pair(
        num_complex::Complex64::new(0.4, 0.25),
        num_complex::Complex64::new(0.3, -0.1),
        num_complex::Complex64::new(0.05, 0.0),
    )
    .unwrap();
    assert!((re - expected.re).abs() + (im - expected.im).abs() <= 1e-14);
}

#[test]
fn eval_rejects_a_malformed_complex_literal_with_status_two() {
    let out = ellg2(&["eval", "theta", "--u", "0.4+bogusi", "--p", "0.1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_reports_domain_errors_with_status_two() {
    let out = ellg2(&["eval", "gamma", "--u", "1", "--p", "0.1", "--q", "0.2"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("pole"), "message names the precondition: {err}");
}

#[test]
fn verify_unknown_id_exits_two_and_lists_the_known_ids() {
    let out = ellg2(&["verify", "nonsense"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bc1") && err.contains("g2"), "lists ids: {err}");
}

#[test]
fn verify_emits_the_versioned_report_schema() {
    let out = ellg2(&["verify", "bc1"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    let r = &v.as_array().unwrap()[0];
    assert_eq!(r["schema"], 1);
    assert_eq!(r["check_id"], "bc1");
    assert_eq!(r["pass"], true);
    assert_eq!(r["tol"], 1e-9);
    assert_eq!(r["params"]["p"]["re"], 0.1);
    assert!(r["lhs"]["re"].is_f64() && r["lhs"]["im"].is_f64());
    assert!(r["warnings"].is_array());
}

#[test]
fn verify_csv_flattens_complex_fields_with_re_im_suffixes() {
    let out = ellg2(&["verify", "bc1", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout_str(&out);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "schema,check_id,p_re,p_im,q_re,q_im,a,epsilon,lhs_re,lhs_im,rhs_re,rhs_im,\
abs_err,rel_err,tol,pass,n_used,runtime_ms,warnings"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("1,bc1,0.1,0.0,0.2,0.0,"), "row: {row}");
    assert!(row.contains(",true,"));
    assert_eq!(lines.next(), None);
}

#[test]
fn verify_writes_to_the_out_path_and_keeps_stdout_empty() {
    let path = tmp_path("verify-bc1.json");
    let out = ellg2(&["verify", "bc1", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_str(&out), "");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
}

#[test]
fn verify_exit_code_follows_the_tolerance_override() {
    let path = tmp_path("tight-bc1.json");
    std::fs::write(&path, r#"{"tolerances": {"bc1": 1e-18}}"#).unwrap();
    let out = ellg2(&["verify", "bc1", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn verify_rejects_a_config_with_unknown_fields() {
    let path = tmp_path("bad-config.json");
    std::fs::write(&path, r#"{"oops": 3}"#).unwrap();
    let out = ellg2(&["verify", "bc1", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_cap_changes_nothing_but_the_runtime() {
    let a = ellg2_threads(&["verify", "bc1"], "1");
    let b = ellg2_threads(&["verify", "bc1"], "3");
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    let mut va: Value = serde_json::from_str(&stdout_str(&a)).unwrap();
    let mut vb: Value = serde_json::from_str(&stdout_str(&b)).unwrap();
    va[0]["runtime_ms"] = 0.into();
    vb[0]["runtime_ms"] = 0.into();
    assert_eq!(va, vb);
}

#[test]
fn thread_cap_must_be_a_positive_integer() {
    let out = ellg2_threads(&["verify", "bc1"], "zero");
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_with_an_empty_grid_exits_two() {
    let out = ellg2(&["sweep", "bc1", "--axis", "p", "--from", "0.1", "--to", "0.2", "--steps", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_rejects_an_axis_the_check_does_not_have() {
    let out = ellg2(&["sweep", "bc1", "--axis", "a1", "--from", "0.1", "--to", "0.2", "--steps", "2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_log_spacing_needs_positive_endpoints() {
    let out = ellg2(&[
        "sweep", "remark1", "--axis", "p", "--from", "-0.1", "--to", "0.0125", "--steps", "4",
        "--spacing", "log",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_emits_one_row_per_grid_point_and_moves_the_axis() {
    let out = ellg2(&[
        "sweep", "gustafson", "--axis", "a1", "--from", "0.3", "--to", "0.5", "--steps", "3",
    ]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (row, want) in rows.iter().zip([0.3, 0.4, 0.5]) {
        assert_eq!(row["axis"], "a1");
        assert_eq!(row["value"], want);
        assert_eq!(row["report"]["params"]["a"][0]["re"], want);
        assert_eq!(row["report"]["pass"], true);
    }
}

#[test]
fn shipped_configs_parse_and_name_known_checks() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).expect("configs directory") {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg: ellg2::SuiteConfig =
            serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        for id in cfg.checks.as_deref().unwrap_or(&[]) {
            assert!(
                ellg2::CHECK_IDS.contains(&id.as_str()),
                "{}: unknown check id {id}",
                path.display()
            );
        }
        seen += 1;
    }
    assert!(seen >= 6, "expected the six canonical configs, found {seen}");
}

#[test]
fn verify_all_runs_the_checks_a_config_names() {
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/canonical-bc1.json");
    let out = ellg2(&["verify", "all", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["check_id"], "bc1");
    assert_eq!(rows[0]["params"]["a"][0]["re"], 0.55);
}

#[test]
fn sweep_over_p_reproduces_the_small_p_deviation_trend() {
    let out = ellg2(&[
        "sweep", "remark1", "--axis", "p", "--from", "0.1", "--to", "0.0125", "--steps", "4",
        "--spacing", "log",
    ]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    let devs: Vec<f64> =
        v.as_array().unwrap().iter().map(|r| r["report"]["abs_err"].as_f64().unwrap()).collect();
    assert_eq!(devs.len(), 4);
    assert!(devs.windows(2).all(|w| w[1] < w[0]), "deviations decrease: {devs:?}");
}
