use std::path::PathBuf;
use std::process::{Command, Output};

fn qcompat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcompat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_tmp(name: &str, body: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_reports_out_of_range_effect() {
    let p = write_tmp(
        "big_effect.json",
        r#"{"devices":[{"name":"big","type":"effect","dims":[2],"payload":{"matrix":[[1.5,0],[0,0]]}}]}"#,
    );
    let o = qcompat(&["--file", p.to_str().unwrap(), "validate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("big") && err.contains("outside [0, 1]"), "{err}");
}

#[test]
fn malformed_file_is_invalid_input() {
    let p = write_tmp("broken.json", r#"{"devices": [ {"name": "x"} ]"#);
    assert_eq!(qcompat(&["-f", p.to_str().unwrap(), "validate"]).status.code(), Some(2));
}

#[test]
fn builtin_fixture_validates() {
    let o = qcompat(&["validate"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("13 devices valid"));
}

#[test]
fn instrument_pairs_are_unsupported() {
    assert_eq!(qcompat(&["classify", "luders_x", "luders_x"]).status.code(), Some(4));
}

#[test]
fn unknown_device_is_invalid_input() {
    assert_eq!(qcompat(&["classify", "nope", "px"]).status.code(), Some(2));
}

#[test]
fn classify_builtin_pairs() {
    let o = qcompat(&["classify", "luders_px", "px"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("relation: compatible"));
    let o = qcompat(&["classify", "px", "pz"]);
    assert!(stdout(&o).contains("relation: weakly-compatible-only"));
}

#[test]
fn json_output_parses() {
    let o = qcompat(&["classify", "px", "pz", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["relation"], "weakly-compatible-only");
    assert_eq!(v["pair"][0], "px");
}

#[test]
fn stdout_is_byte_deterministic() {
    for args in [
        &["witness", "luders_px", "luders_pz", "--no-fast-paths"][..],
        &["witness", "half_luders_px", "half_sigma_x", "--no-fast-paths"][..],
        &["table1"][..],
        &["model", "luders_x"][..],
    ] {
        let a = qcompat(args);
        let b = qcompat(args);
        assert_eq!(a.status.code(), b.status.code());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}
