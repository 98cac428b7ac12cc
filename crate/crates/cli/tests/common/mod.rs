#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use fuel_core::harness::{applicable_mutations, mutate, Mutation, MutationKind};
use fuel_core::interp::{run_module, RunOptions};
use fuel_core::{parse_module, print_module, Module};
use serde_json::Value;

/// Fixtures with a runnable `main`, the ones mutants are derived from.
pub const RUNNABLE: [&str; 6] = ["fig1b", "fig2b", "fig4", "fig5", "fig5_free_second", "heap_out_param"];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(format!("{name}.fuel"))
}

pub fn load(path: &Path) -> Module {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_module(&text, &path.display().to_string()).unwrap_or_else(|d| panic!("{}", d[0]))
}

/// Every applicable mutant of a runnable fixture, as (file name, mutation, printed text).
pub fn mutants_of(name: &str) -> Vec<(String, Mutation, String)> {
    let m = load(&fixture(name));
    let opts = RunOptions { record_events: true, ..RunOptions::default() };
    let report = run_module(&m, &"main".into(), opts).expect("fixture runs");
    applicable_mutations(&m, &report)
        .into_iter()
        .map(|mu| {
            let mutant = mutate(&m, mu).expect("applicable mutation applies");
            (format!("{name}.{}.{}.fuel", mu.kind, mu.target), mu, print_module(&mutant))
        })
        .collect()
}

pub fn parse_kind(file_name: &str) -> MutationKind {
    let kind = file_name.split('.').nth(1).expect("mutant name has a kind");
    *MutationKind::ALL.iter().find(|k| k.to_string() == kind).unwrap_or_else(|| panic!("unknown kind {kind}"))
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    pub fn records(&self) -> Vec<Value> {
        self.stdout.lines().map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}"))).collect()
    }

    pub fn record(&self, kind: &str) -> Value {
        self.records().into_iter().find(|r| r["record"] == kind).unwrap_or_else(|| panic!("no {kind} record in {}", self.stdout))
    }
}

pub fn fuel<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_fuel")).args(args).env("FUEL_COLOR", "never").output().expect("fuel runs");
    Output {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}
