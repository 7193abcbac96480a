//! End-to-end runs of the binary against the checked-in fixtures. Every
//! expected string is frozen output, cross-checked by hand before pinning;
//! update one only after recomputing what it claims.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn qpbn<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpbn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> &str {
    std::str::from_utf8(&out.stdout).expect("stdout is utf8")
}

fn stderr_of(out: &Output) -> &str {
    std::str::from_utf8(&out.stderr).expect("stderr is utf8")
}

fn net() -> String {
    fixture("two_route.json").display().to_string()
}

fn val() -> String {
    fixture("half.json").display().to_string()
}

#[test]
fn infer_prints_the_conditional_with_six_decimals() {
    // 7/11 at the all-half valuation
    let out = qpbn(&["infer", "--net", &net(), "--val", &val(), "--query", "B | F"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "0.636364\n");
}

#[test]
fn oracle_engine_agrees_on_the_marginal() {
    // 11/64
    let out = qpbn(&[
        "infer", "--net", &net(), "--val", &val(), "--query", "F", "--engine", "oracle",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "0.171875\n");
}

#[test]
fn symbolic_flag_prints_numerator_and_denominator() {
    let out = qpbn(&[
        "infer", "--net", &net(), "--val", &val(), "--query", "B | F", "--symbolic",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "0.636364\nnumerator pq[1-(1-rs)(1-tu)]\ndenominator q[1-(1-prs)(1-tu)]\n"
    );
}

#[test]
fn json_output_is_one_record() {
    let out = qpbn(&[
        "infer", "--net", &net(), "--val", &val(), "--query", "B | F", "--json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "{\"denominator\":\"q[1-(1-prs)(1-tu)]\",\"numerator\":\"pq[1-(1-rs)(1-tu)]\",\
         \"query\":\"B | F\",\"value\":0.6363636363636364}\n"
    );
}

#[test]
fn pulse_engine_reports_estimate_reference_and_spread() {
    // seeded, so the estimate is reproducible byte for byte
    let out = qpbn(&[
        "infer", "--net", &net(), "--val", &val(), "--query", "F", "--engine", "pulse",
        "--periods", "2000", "--seed", "5", "--repeats", "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "0.170701\nexact 0.171875\nstddev 0.002500\n"
    );
}

#[test]
fn sat_prints_model_free_variables_and_solver_code() {
    let out = qpbn(&["sat".into(), fixture("six_var.cnf").into_os_string()]);
    assert_eq!(out.status.code(), Some(10));
    assert_eq!(
        stdout_of(&out),
        "c free v6\ns SATISFIABLE\nv 1 2 -3 -4 -5 -6 0\n"
    );
}

#[test]
fn unsat_instance_exits_twenty() {
    let out = qpbn(&["sat".into(), fixture("six_var_unsat.cnf").into_os_string()]);
    assert_eq!(out.status.code(), Some(20));
    assert_eq!(stdout_of(&out), "s UNSATISFIABLE\n");
}

#[test]
fn count_flag_prints_the_model_count() {
    let out = qpbn(&[
        "sat".into(),
        "--count".into(),
        fixture("six_var.cnf").into_os_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "c models 2\n");
}

#[test]
fn show_prints_raw_decomposed_and_expanded_views() {
    let out = qpbn(&["show", "--net", &net(), "F", "--expanded"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(
        stdout_of(&out),
        "raw 1-(1-p*q*r*s)*(1-q*t*u)\ndecomposed q[1-(1-prs)(1-tu)]\nexpanded pqrs+qtu-pqrstu\n"
    );

    let out = qpbn(&["show", "--net", &net(), "D"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "raw p*q*r\ndecomposed pqr\n");

    // roots are sure, so every view collapses to 1
    let out = qpbn(&["show", "--net", &net(), "__prior_B", "--expanded"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "raw 1\ndecomposed 1\nexpanded 1\n");
}

#[test]
fn convert_writes_the_compiled_pair_and_inference_matches_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out_net = dir.path().join("net.json");
    let out_val = dir.path().join("val.json");
    let out = qpbn(&[
        "convert".into(),
        "--cpt".into(),
        fixture("two_parent_cpt.json").into_os_string(),
        "--out-net".into(),
        out_net.clone().into_os_string(),
        "--out-val".into(),
        out_val.clone().into_os_string(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(
        fs::read_to_string(&out_net).unwrap(),
        fs::read_to_string(fixture("compiled_two_parent_net.json")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(&out_val).unwrap(),
        fs::read_to_string(fixture("compiled_two_parent_val.json")).unwrap()
    );

    let out_net = out_net.display().to_string();
    let out_val = out_val.display().to_string();
    // chain rule by hand: 0.7*0.8*0.05 + 0.3*0.1*0.5 + 0.7*0.2*0.4 + 0.3*0.9*0.99
    let out = qpbn(&["infer", "--net", &out_net, "--val", &out_val, "--query", "C"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "0.366300\n");
    let out = qpbn(&[
        "infer", "--net", &out_net, "--val", &out_val, "--query", "C", "--engine", "oracle",
    ]);
    assert_eq!(stdout_of(&out), "0.366300\n");
    // 0.3*(0.1*0.5 + 0.9*0.99) / 0.3663
    let out = qpbn(&["infer", "--net", &out_net, "--val", &out_val, "--query", "A | C"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "0.770680\n");
}

#[test]
fn failures_use_the_documented_exit_codes() {
    // unreadable input: parse
    let out = qpbn(&["infer", "--net", "/nonexistent.json", "--val", "/nonexistent.json",
        "--query", "F"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).starts_with("error: cannot read"));

    // malformed query: parse
    let out = qpbn(&["infer", "--net", &net(), "--val", &val(), "--query", "|"]);
    assert_eq!(out.status.code(), Some(1));

    // node outside the network: validation
    let out = qpbn(&["infer", "--net", &net(), "--val", &val(), "--query", "Z"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("no node named Z"));

    // conditioning on an impossible event: zero evidence
    let dir = tempfile::tempdir().unwrap();
    let zeroed = dir.path().join("val.json");
    fs::write(&zeroed, "{\"p\":0.5,\"q\":0.0,\"r\":0.5,\"s\":0.5,\"t\":0.5,\"u\":0.5}\n").unwrap();
    let zeroed = zeroed.display().to_string();
    let out = qpbn(&["infer", "--net", &net(), "--val", &zeroed, "--query", "B | F"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("probability zero"));

    // sat keeps its own plain failure code
    let out = qpbn(&["sat", "/nonexistent.cnf"]);
    assert_eq!(out.status.code(), Some(1));
}
