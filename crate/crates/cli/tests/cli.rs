mod common;

use common::*;

fn temp_file(name: &str, text: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("fuel-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn arg(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_ok() {
    let out = fuel(["check", arg(&fixture("fig1b"))]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.ends_with(": ok\n"));
}

#[test]
fn check_type_error_human() {
    let out = fuel(["check", arg(&fixture("fig1b_no_store"))]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("error[UseOfJunk]"), "{}", out.stderr);
    assert!(out.stderr.contains("4 | bval = load breg"), "{}", out.stderr);
    assert!(out.stderr.contains("^^^^"));
    assert!(!out.stderr.contains('\x1b'));
}

#[test]
fn check_type_error_json_fields() {
    let out = fuel(["check", "--json", arg(&fixture("fig1b_no_store"))]);
    assert_eq!(out.code, 1);
    let recs = out.records();
    assert_eq!(recs.len(), 1);
    let obj = recs[0].as_object().unwrap();
    let keys: Vec<_> = obj.keys().map(String::as_str).collect();
    assert_eq!(keys, ["code", "col", "file", "line", "message", "severity"]);
    assert_eq!(obj["code"], "UseOfJunk");
    assert_eq!(obj["severity"], "error");
    assert_eq!(obj["line"], 4);
    assert_eq!(obj["col"], 1);
}

#[test]
fn empty_module_is_well_typed() {
    let p = temp_file("empty.fuel", "");
    assert_eq!(fuel(["check", arg(&p)]).code, 0);
}

#[test]
fn parse_error_exits_2() {
    let p = temp_file("bad.fuel", "func main(): () -> () { x = salloc I32 }\n");
    let out = fuel(["check", "--json", arg(&p)]);
    assert_eq!(out.code, 2);
    assert_eq!(out.records()[0]["line"], 1);
    assert_eq!(fuel(["run", arg(&p)]).code, 2);
}

#[test]
fn unreadable_input_exits_66() {
    assert_eq!(fuel(["check", "/nonexistent/x.fuel"]).code, 66);
    assert_eq!(fuel(["run", "/nonexistent/x.fuel"]).code, 66);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(fuel(Vec::<&str>::new()).code, 64);
    assert_eq!(fuel(["frobnicate"]).code, 64);
    assert_eq!(fuel(["check"]).code, 64);
    assert_eq!(fuel(["check", "--unchecked", arg(&fixture("fig1b"))]).code, 64);
    assert_eq!(fuel(["fuzz", "--features", "wings"]).code, 64);
    assert_eq!(fuel(["run", "--entry", "nope", arg(&fixture("fig1b"))]).code, 64);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(fuel(["--help"]).code, 0);
    assert_eq!(fuel(["--version"]).code, 0);
}

#[test]
fn run_completed() {
    let out = fuel(["run", arg(&fixture("fig1b"))]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("completed after 6 steps"), "{}", out.stdout);
    assert!(out.stdout.contains("m1#1 = 2"));
}

#[test]
fn run_checked_rejects_ill_typed() {
    let out = fuel(["run", "--json", arg(&fixture("fig1b_no_store"))]);
    assert_eq!(out.code, 1);
    assert_eq!(out.records()[0]["code"], "UseOfJunk");
}

#[test]
fn run_unchecked_faults() {
    let out = fuel(["run", "--unchecked", "--json", arg(&fixture("fig1b_no_store"))]);
    assert_eq!(out.code, 3);
    let fault = out.record("fault");
    assert_eq!(fault["kind"], "JunkRead");
    assert_eq!(fault["line"], 4);
    assert_eq!(out.record("exit")["status"], "faulted");
}

#[test]
fn run_leaks_exit_4() {
    let out = fuel(["run", "--json", arg(&fixture("fig5_no_assuming"))]);
    assert_eq!(out.code, 4);
    let leaks: Vec<_> = out.records().into_iter().filter(|r| r["record"] == "leak").collect();
    assert_eq!(leaks.len(), 2);
    assert!(leaks.iter().all(|l| l["dynamic"] == true && l["region"] == "Heap"));
    assert_eq!(out.record("exit")["leaked"], 2);
}

#[test]
fn step_limit_exits_3() {
    let out = fuel(["run", "--max-steps", "3", "--json", arg(&fixture("fig1b"))]);
    assert_eq!(out.code, 3);
    assert_eq!(out.record("exit")["status"], "step-limit-exceeded");
}

#[test]
fn trace_goes_to_stderr() {
    let out = fuel(["run", "--trace", arg(&fixture("fig1b"))]);
    assert_eq!(out.code, 0);
    let lines: Vec<_> = out.stderr.lines().filter(|l| l.starts_with("step ")).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].contains("salloc"), "{}", lines[0]);
    assert!(!out.stdout.contains("step "));
}

#[test]
fn alternate_entry() {
    let p = temp_file("entry.fuel", "func go(): () -> () {\n  x = salloc I32 at m0\n  store 1, x\n}\n");
    assert_eq!(fuel(["run", "--entry", "go", arg(&p)]).code, 0);
}

#[test]
fn color_forced() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_fuel"))
        .args(["check", arg(&fixture("fig1b_no_store"))])
        .env("FUEL_COLOR", "always")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains('\x1b'));
}

#[test]
fn fuzz_small_campaign() {
    let out = fuel(["fuzz", "--seeds", "100", "--json"]);
    assert_eq!(out.code, 0, "{}", out.stdout);
    let s = out.record("summary");
    assert_eq!(s["programs"], 100);
    assert_eq!(s["faults"], 0);
    assert_eq!(s["disagreements"], 0);
}

#[test]
fn fuzz_zero_seeds_is_vacuous() {
    let out = fuel(["fuzz", "--seeds", "0", "--json"]);
    assert_eq!(out.code, 0);
    assert_eq!(out.record("summary")["programs"], 0);
}

#[test]
fn fuzz_feature_subsets() {
    for f in ["none", "heap", "branches,calls", "heap,dynamics,assuming"] {
        let out = fuel(["fuzz", "--seeds", "50", "--features", f]);
        assert_eq!(out.code, 0, "{f}: {}", out.stderr);
    }
}

#[test]
fn oracle_agrees() {
    let out = fuel(["oracle", "--json"]);
    assert_eq!(out.code, 0);
    let s = out.record("summary");
    assert_eq!(s["disagreements"], 0);
    assert_eq!(s["programs"], 16423);
}
