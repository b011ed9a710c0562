use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use dp_market::rows::{read_csv, LevelCell, VarianceCell};
use dp_market_core::Regime;

fn scenario(name: &str, body: &str) -> PathBuf {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{name}.scn"));
    fs::write(&path, body).unwrap();
    path
}

fn single_item(name: &str, intensity: &str, p: f64) -> PathBuf {
    scenario(
        name,
        &format!(
            "coeffs = [1]\nprivacy_weights = [1]\ngamma = 1\nsigma_min = 1\np = {p}\nintensity_kind = {intensity}\n"
        ),
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dp-market"))
        .args(args)
        .env_remove("DP_MARKET_SEED")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).filter(|rest| rest.starts_with(' ')))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .trim()
}

#[test]
fn classify_reports_each_regime() {
    let path = single_item("classify-profitable", "constant 10", 1.0);
    let out = run(&["classify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out);
    assert!(line.starts_with("Profitable A=10.0 Gamma=1.4142135623730951 2pGamma="), "{line}");

    let path = single_item("classify-no-trade", "constant 1", 1.0);
    let out = run(&["classify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("NoTrade"));

    let path = single_item("classify-break-even", "constant 2", 0.75);
    assert!(stdout(&run(&["classify", path.to_str().unwrap()])).starts_with("BreakEven"));
}

#[test]
fn invalid_exponent_is_a_domain_error() {
    let path = single_item("classify-bad-p", "constant 10", 1.5);
    let out = run(&["classify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("(1/2, 1]"), "{}", stderr(&out));
}

#[test]
fn parse_errors_name_the_key() {
    let path = scenario(
        "unknown-key",
        "coeffs = [1]\nprivacy_weights = [1]\ngamma = 1\nsigma_min = 1\np = 1\ncolour = blue\n",
    );
    let out = run(&["classify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"));

    let path = scenario("bad-number", "coeffs = [1]\nprivacy_weights = [1]\ngamma = lots\nsigma_min = 1\np = 1\n");
    let out = run(&["classify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gamma"));
}

#[test]
fn missing_file_and_bad_flags_are_usage_errors() {
    assert_eq!(run(&["classify", "/nonexistent/scenario"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let path = single_item("bad-flag", "constant 10", 1.0);
    assert_eq!(run(&["sweep", path.to_str().unwrap(), "--var", "x"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", path.to_str().unwrap(), "--var", "k"]).status.code(), Some(2));
}

#[test]
fn equilibrium_profitable_levels() {
    let path = single_item("eq-five", "constant 5", 1.0);
    let out = run(&["equilibrium", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(field(&text, "regime"), "Profitable");
    assert_eq!(field(&text, "k_star").parse::<f64>().unwrap(), 2.5);
    assert_eq!(field(&text, "sigma_star").parse::<f64>().unwrap(), 1.0);

    let path = single_item("eq-ten", "constant 10", 1.0);
    let out = run(&["equilibrium", path.to_str().unwrap(), "--json"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["k_star"], 5.0);
    assert_eq!(doc["sigma_star"], 1.0);
    assert!((doc["psi_star"].as_f64().unwrap() - (5.0 - 2f64.sqrt())).abs() < 1e-12);
    assert!((doc["k_lower"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(doc["k_upper"], 5.0);
}

#[test]
fn equilibrium_markers_are_literal() {
    let path = single_item("eq-break-even", "constant 2.5", 1.0);
    let out = run(&["equilibrium", path.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["regime"], "BreakEven");
    assert_eq!(doc["k_star"], "indifferent");
    assert_eq!(doc["psi_star"], 0.0);

    let path = single_item("eq-no-trade", "constant 1", 1.0);
    let out = run(&["equilibrium", path.to_str().unwrap(), "--csv"]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("regime,A,Gamma,k_star,sigma_star,psi_star,phi_star,k_lower,k_upper")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "NoTrade");
    assert_eq!(row[3], "indifferent");
    assert_eq!(row[4], "no-trade");
}

#[test]
fn equilibrium_writes_to_out() {
    let path = single_item("eq-out", "constant 5", 1.0);
    let target = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("eq-out.json");
    let out = run(&["equilibrium", path.to_str().unwrap(), "--json", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(doc["k_star"], 2.5);
}

#[test]
fn sweep_csv_is_reproducible_and_round_trips() {
    let path = single_item("sweep-k", "constant 10", 1.0);
    let args = ["sweep", path.to_str().unwrap(), "--var", "k", "--lo", "0.1", "--hi", "10", "--points", "200", "--scale", "log"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let rows = read_csv(first.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r.k_star == LevelCell::Value(5.0)));
    assert!(rows.iter().all(|r| r.check().is_ok()));
}

#[test]
fn sweep_block_in_file_drives_the_grid() {
    let path = scenario(
        "sweep-block",
        "coeffs = [1]\nprivacy_weights = [1]\ngamma = 1\nsigma_min = 1\np = 1\nintensity_kind = shifted-log 5\n\
         sweep.variable = q\nsweep.lo = -4.99\nsweep.hi = 4\nsweep.points = 901\n",
    );
    let out_path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("sweep-block.csv");
    let out = run(&["sweep", path.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = read_csv(fs::File::open(out_path).unwrap()).unwrap();
    assert_eq!(rows.len(), 901);
    assert_eq!(rows[0].sigma_star, VarianceCell::NoTrade);
    assert_eq!(
        dp_market::sweep::regime_sequence(&rows),
        [Regime::NoTrade, Regime::BreakEven, Regime::Profitable, Regime::BreakEven, Regime::NoTrade]
    );
}

#[test]
fn q_sweep_needs_a_single_item() {
    let path = scenario(
        "sweep-two-items",
        "coeffs = [1, 2]\nprivacy_weights = [1, 1]\ngamma = 1\nsigma_min = 1\np = 1\n",
    );
    let out = run(&["sweep", path.to_str().unwrap(), "--var", "q", "--lo", "0", "--hi", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("single-item"));
}

#[test]
fn verify_default_family_passes() {
    let path = single_item("verify-pass", "constant 10", 1.0);
    let out = run(&["verify", path.to_str().unwrap(), "--instances", "200", "--seed", "17"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("Profitable"), "{text}");
    assert!(text.contains("arbitrage checks: 200/200"), "{text}");
    assert!(text.trim_end().ends_with("PASS"));
}

#[test]
fn verify_finds_counterexample_in_test_mode() {
    let path = scenario(
        "verify-bad-p",
        "coeffs = [1, 1]\nprivacy_weights = [1, 1]\ngamma = 1\nsigma_min = 1\np = 1.5\n",
    );
    let strict = run(&["verify", path.to_str().unwrap(), "--instances", "5"]);
    assert_eq!(strict.status.code(), Some(3));
    let out = run(&["--test-mode-allow-invalid-p", "verify", path.to_str().unwrap(), "--instances", "5"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("FAIL arbitrage counterexample"), "{text}");
    assert!(text.contains("alpha"), "{text}");
    assert!(text.contains("bundle[1]"), "{text}");
}

#[test]
fn verify_rejects_zero_instances() {
    let path = single_item("verify-zero", "constant 10", 1.0);
    let out = run(&["verify", path.to_str().unwrap(), "--instances", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_falls_back_to_environment() {
    let path = scenario(
        "verify-env-seed",
        "coeffs = [1, 1]\nprivacy_weights = [1, 1]\ngamma = 1\nsigma_min = 1\np = 1.5\n",
    );
    let args = ["--test-mode-allow-invalid-p", "verify", path.to_str().unwrap(), "--instances", "1"];
    let with_env = Command::new(env!("CARGO_BIN_EXE_dp-market"))
        .args(args)
        .env("DP_MARKET_SEED", "9")
        .output()
        .unwrap();
    let with_flag = run(&[&args[..], &["--seed", "9"]].concat());
    let default = run(&args);
    assert_eq!(with_env.stdout, with_flag.stdout);
    assert_ne!(with_env.stdout, default.stdout);
}
