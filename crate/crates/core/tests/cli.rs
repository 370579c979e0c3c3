// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hedgeband")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn temp_file(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hedgeband-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn thresholds_on_defaults() {
    let out = run(&["thresholds"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("case=Case1_III\n"), "{text}");
    let field = |k: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(k))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(field("L=") < field("U="));
}

#[test]
fn value_table_has_requested_rows() {
    let out = run(&["value", "--points", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "x,Y,dY,d2Y");
    assert_eq!(lines.len(), 6);
}

#[test]
fn verify_passes_on_defaults() {
    let out = run(&["verify"]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn simulate_writes_one_row_per_path() {
    let out = run(&["simulate", "--paths", "3", "--policy", "cf", "--seed", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "path_id,policy,objective,net_benefit");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(1) == Some("cf")));
    assert_eq!(text, stdout(&run(&["simulate", "--paths", "3", "--policy", "cf", "--seed", "4"])));
}

#[test]
fn config_file_overrides_defaults() {
    let cfg = temp_file("wide.cfg", "# wider volatility\nsigma = 1.5\n");
    let base = stdout(&run(&["thresholds"]));
    let wide = stdout(&run(&["thresholds", "--config", cfg.to_str().unwrap()]));
    assert_ne!(base, wide);
}

#[test]
fn contract_lattice_covers_the_simplex() {
    let cfg = temp_file(
        "two.cfg",
        "R_p_1=2010\nC_p_1=2000\nI_p_1=0.001\nD_p_1=0.001\ntheta_l_1=-1000\ntheta_u_1=1000\n\
         R_p_2=1210\nC_p_2=1200\nI_p_2=0.001\nD_p_2=0.001\ntheta_l_2=-1000\ntheta_u_2=1000\n\
         R_s=1\nC_s=0\nsigma=1\nD0=96.9\n",
    );
    let out = run(&["contract", "--config", cfg.to_str().unwrap(), "--grid-step", "0.25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "w_1,w_2,L,U,J_w");
    assert_eq!(lines.len(), 6);
    assert!(!out.stderr.is_empty());
}

#[test]
fn contract_without_resources_is_rejected() {
    let out = run(&["contract"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(run(&["thresholds", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let cfg = temp_file("bad.cfg", "sigma = 0\n");
    assert_eq!(run(&["thresholds", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    let cfg = temp_file("typo.cfg", "sigmaa = 1\n");
    assert_eq!(run(&["thresholds", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["compare", "--sweep", "sigma:1"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
