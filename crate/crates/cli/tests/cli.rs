use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn run(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polytile")).args(args).output().unwrap()
}

fn run_str(args: &[&str]) -> Output {
    let paths: Vec<PathBuf> = args.iter().map(PathBuf::from).collect();
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    run(&refs)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn edited_problem(dir: &TempDir, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(problem(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.path().join(format!("edited_{name}"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn factorize_to(dir: &TempDir, prob: &Path) -> PathBuf {
    let out = dir.path().join("fact.json");
    let o = run(&[Path::new("factorize"), prob, Path::new("--output"), &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn line_value<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no line starting with {prefix:?} in\n{text}"))
        .trim()
}

#[test]
fn bound_on_the_outer_product_example() {
    let o = run(&[Path::new("bound"), &problem("outer_product.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(line_value(&out, "constructive bound:"), "16");
    assert_eq!(line_value(&out, "general bound:"), "16");
    assert_eq!(line_value(&out, "simplified bound:"), "16");
    assert_eq!(line_value(&out, "baseline servers (T = 1):"), "32");
    assert_eq!(line_value(&out, "baseline / constructive:"), "2");
}

#[test]
fn bound_with_k_not_divisible_by_delta() {
    let o = run(&[Path::new("bound"), &problem("outer_product_k5.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(line_value(&out, "constructive bound:"), "20");
    assert_eq!(line_value(&out, "general bound:"), "20");
    assert!(line_value(&out, "simplified bound:").starts_with("unavailable"));
    assert_eq!(line_value(&out, "tile classes:"), "C1 = 8, C2 = 4, C3 = 0, C4 = 0");
}

#[test]
fn gamma_above_l_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let p = edited_problem(&dir, "outer_product.json", |v| v["Gamma"] = 3.into());
    let o = run(&[Path::new("bound"), &p]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Gamma"), "{}", stderr(&o));
}

#[test]
fn malformed_json_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ \"K\": 4, ").unwrap();
    assert_eq!(code(&run(&[Path::new("bound"), &p])), 2);
    assert_eq!(code(&run(&[Path::new("bound"), &dir.path().join("missing.json")])), 2);
}

#[test]
fn factorize_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&[Path::new("factorize"), &problem("outer_product.json"), Path::new("--output"), out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(line_value(&stdout(&o), "N ="), "16");
        let residual: f64 = line_value(&stdout(&o), "residual =").parse().unwrap();
        assert!(residual <= 1e-10);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(file["format_version"], "1");
    assert_eq!(file["N"], 16);
    assert_eq!(file["tiles"].as_array().unwrap().len(), 8);
}

#[test]
fn zero_demand_needs_no_servers() {
    let dir = TempDir::new().unwrap();
    let p = edited_problem(&dir, "outer_product.json", |v| v["coefficients"] = Value::Array(vec![]));
    let out = dir.path().join("fact.json");
    let o = run(&[Path::new("factorize"), &p, Path::new("--output"), &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(line_value(&stdout(&o), "N ="), "0");
    let o = run(&[Path::new("verify"), &p, &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("rate = undefined"));
}

#[test]
fn inadmissible_demand_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = edited_problem(&dir, "outer_product.json", |v| v["Gamma"] = 1.into());
    let o = run(&[Path::new("factorize"), &p, Path::new("--output"), &dir.path().join("f.json")]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("Gamma = 1"), "{}", stderr(&o));
    assert!(!dir.path().join("f.json").exists());
}

#[test]
fn verify_accepts_its_own_output() {
    let dir = TempDir::new().unwrap();
    let f = factorize_to(&dir, &problem("outer_product.json"));
    let o = run(&[Path::new("verify"), &problem("outer_product.json"), &f]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(line_value(&out, "rate ="), "0.25");
    assert_eq!(out.lines().last(), Some("ok"));
}

#[test]
fn verify_flags_an_overloaded_column() {
    let dir = TempDir::new().unwrap();
    let f = factorize_to(&dir, &problem("outer_product.json"));
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    // server 1 belongs to users 1 and 2; add user 4
    v["D"][3][0] = 0.5.into();
    std::fs::write(&f, v.to_string()).unwrap();
    let o = run(&[Path::new("verify"), &problem("outer_product.json"), &f]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("server 1: serves 3 users, Delta = 2"), "{}", stderr(&o));
}

#[test]
fn verify_flags_a_perturbed_encoding() {
    let dir = TempDir::new().unwrap();
    let f = factorize_to(&dir, &problem("outer_product.json"));
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    let x = v["E"][0]["value"].as_f64().unwrap();
    v["E"][0]["value"] = (x + 1e-3).into();
    std::fs::write(&f, v.to_string()).unwrap();
    let o = run(&[Path::new("verify"), &problem("outer_product.json"), &f]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("residual"), "{}", stderr(&o));
}

#[test]
fn simulate_recovers_every_demand() {
    let dir = TempDir::new().unwrap();
    for name in ["mixed_basis.json", "outer_product.json", "outer_product_k5.json"] {
        let f = factorize_to(&dir, &problem(name));
        let report = dir.path().join("report.json");
        let o = run(&[Path::new("simulate"), &problem(name), &f, Path::new("--output"), &report]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert!(r["simulation"]["max_rel_error"].as_f64().unwrap() <= 1e-9, "{name}");
        if name != "mixed_basis.json" {
            assert_eq!(r["rate"], 0.25, "{name}");
        }
    }
}

#[test]
fn simulate_reports_the_failing_server() {
    let dir = TempDir::new().unwrap();
    let f = factorize_to(&dir, &problem("outer_product.json"));
    let p = edited_problem(&dir, "outer_product.json", |v| v["input"] = serde_json::json!([-1.0]));
    let o = run(&[Path::new("simulate"), &p, &f]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("server") && err.contains("log"), "{err}");
}

#[test]
fn simulate_needs_a_basis() {
    let dir = TempDir::new().unwrap();
    let f = factorize_to(&dir, &problem("outer_product.json"));
    let p = edited_problem(&dir, "outer_product.json", |v| {
        let obj = v.as_object_mut().unwrap();
        obj.remove("basis");
        obj.remove("input");
    });
    assert_eq!(code(&run(&[Path::new("simulate"), &p, &f])), 2);
    // report works without one
    let o = run(&[Path::new("report"), &p, &f]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["simulation"].is_null());
}

fn all_numbers_finite(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        Value::Array(a) => a.iter().all(all_numbers_finite),
        Value::Object(o) => o.values().all(all_numbers_finite),
        _ => true,
    }
}

#[test]
fn report_fields_are_complete_and_finite() {
    let dir = TempDir::new().unwrap();
    let f = factorize_to(&dir, &problem("outer_product.json"));
    let o = run(&[Path::new("report"), &problem("outer_product.json"), &f]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["N", "rate", "residual", "achieved", "declared", "normalized", "bounds", "baseline", "multiplication_costs", "total_multiplications"] {
        assert!(!r[key].is_null(), "missing {key}");
    }
    assert!(all_numbers_finite(&r));
    assert_eq!(r["N"], 16);
    assert_eq!(r["bounds"]["constructive"], 16);
    assert_eq!(r["baseline"]["servers"], 32.0);
    assert_eq!(r["baseline"]["ratio"], 2.0);
    assert_eq!(r["normalized"]["Delta"], 0.5);
    assert_eq!(r["multiplication_costs"].as_array().unwrap().len(), 16);
}

#[test]
fn baseline_t_is_configurable() {
    let o = run_str(&["--baseline-T", "2", "bound", problem("outer_product.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(line_value(&stdout(&o), "baseline servers (T = 2):"), "16");
    assert_eq!(code(&run_str(&["--baseline-T", "0", "bound", problem("outer_product.json").to_str().unwrap()])), 2);
    assert_eq!(code(&run_str(&["--tolerance", "-1", "bound", problem("outer_product.json").to_str().unwrap()])), 2);
}
