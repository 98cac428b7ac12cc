//! `fuel`: check, run and fuzz Fuel IL programs.
//!
//! Exit codes: 0 success, 1 type errors, 2 parse errors, 3 runtime fault,
//! 4 leaks at exit, 5 harness property violation, 64 usage error,
//! 66 unreadable input.

use std::io::{IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use fuel_core::check::TypeDiagnostic;
use fuel_core::diag::{render, Severity, SourceSpan};
use fuel_core::harness::{fuzz, oracle_compare, Feature, OracleBounds};
use fuel_core::il::{FuncName, Module};
use fuel_core::interp::{run_module, ExitReport, ExitStatus, RunError, RunOptions};
use fuel_core::{check_module, parse_module, ParseDiagnostic};

const EXIT_TYPE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_FAULT: u8 = 3;
const EXIT_LEAK: u8 = 4;
const EXIT_PROPERTY: u8 = 5;
const EXIT_USAGE: u8 = 64;
const EXIT_NOINPUT: u8 = 66;

#[derive(Parser)]
#[command(name = "fuel", version, about = "Capability type checker and interpreter for the Fuel IL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and type-check a module.
    Check {
        file: PathBuf,
        /// Emit line-delimited JSON records on standard output.
        #[arg(long)]
        json: bool,
    },
    /// Run a module's entry function in the instrumented interpreter.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "main")]
        entry: String,
        /// Print one line per executed instruction on standard error.
        #[arg(long)]
        trace: bool,
        /// Skip the type checker and rely on runtime checks alone.
        #[arg(long)]
        unchecked: bool,
        #[arg(long, default_value_t = 10_000_000)]
        max_steps: u64,
        #[arg(long)]
        json: bool,
    },
    /// Generate, check and run random well-typed programs.
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        seeds: u64,
        /// Comma-separated: heap, branches, calls, borrows, dynamics, assuming, or all.
        #[arg(long, default_value = "all")]
        features: String,
        #[arg(long)]
        json: bool,
    },
    /// Compare the checker with a brute-force oracle on small programs.
    Oracle {
        #[arg(long)]
        json: bool,
    },
}

struct Out {
    json: bool,
    color: bool,
}

impl Out {
    fn new(json: bool) -> Self {
        let color = match std::env::var("FUEL_COLOR").as_deref() {
            Ok("always") => true,
            Ok("never") => false,
            _ => std::io::stderr().is_terminal(),
        };
        Out { json, color }
    }

    fn record(&self, v: Value) {
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{v}");
    }

    fn diagnostic(&self, source: &str, span: &SourceSpan, code: &str, message: &str) {
        if self.json {
            self.record(json!({
                "severity": "error",
                "code": code,
                "file": span.file,
                "line": span.start_line,
                "col": span.start_col,
                "message": message,
            }));
        } else {
            eprint!("{}", render(Some(source), span, Severity::Error, code, message, self.color));
        }
    }

    fn parse_errors(&self, source: &str, diags: &[ParseDiagnostic]) {
        for d in diags {
            self.diagnostic(source, &d.span, &d.code.to_string(), &d.message);
        }
    }

    fn type_errors(&self, source: &str, diags: &[TypeDiagnostic]) {
        for d in diags {
            self.diagnostic(source, &d.span, &d.code.to_string(), &d.detail);
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("fuel: {msg}");
    ExitCode::from(EXIT_USAGE)
}

/// Reads and parses `path`, reporting failures with the matching exit code.
fn load(path: &PathBuf, out: &Out) -> Result<(String, Module), ExitCode> {
    let source = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("fuel: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_NOINPUT)
    })?;
    let name = path.display().to_string();
    match parse_module(&source, &name) {
        Ok(m) => Ok((source, m)),
        Err(diags) => {
            out.parse_errors(&source, &diags);
            Err(ExitCode::from(EXIT_PARSE))
        }
    }
}

fn cmd_check(file: PathBuf, json: bool) -> ExitCode {
    let out = Out::new(json);
    let (source, m) = match load(&file, &out) {
        Ok(x) => x,
        Err(code) => return code,
    };
    match check_module(&m) {
        Ok(()) => {
            if !json {
                println!("{}: ok", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(diags) => {
            out.type_errors(&source, &diags);
            ExitCode::from(EXIT_TYPE)
        }
    }
}

fn cell_records(report: &ExitReport) -> Vec<Value> {
    report
        .cells
        .iter()
        .map(|c| {
            json!({
                "id": c.id,
                "name": c.name,
                "activation": c.activation,
                "region": c.region,
                "freed": c.is_freed(),
                "value": c.contents(),
            })
        })
        .collect()
}

fn cmd_run(file: PathBuf, entry: String, trace: bool, unchecked: bool, max_steps: u64, json: bool) -> ExitCode {
    let out = Out::new(json);
    let (source, m) = match load(&file, &out) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let opts = RunOptions { trace, unchecked, max_steps, ..RunOptions::default() };
    let report = match run_module(&m, &FuncName::new(entry), opts) {
        Ok(r) => r,
        Err(RunError::IllTyped(diags)) => {
            out.type_errors(&source, &diags);
            return ExitCode::from(EXIT_TYPE);
        }
        Err(e) => return usage(e),
    };
    let status = match &report.status {
        ExitStatus::Completed => "completed",
        ExitStatus::Faulted(_) => "faulted",
        ExitStatus::StepLimitExceeded => "step-limit-exceeded",
    };
    if let Some(f) = report.fault() {
        if json {
            out.record(json!({
                "record": "fault",
                "kind": f.kind,
                "file": f.span.file,
                "line": f.span.start_line,
                "col": f.span.start_col,
                "cell": f.cell,
                "message": f.detail,
            }));
        } else {
            eprint!("{}", render(Some(&source), &f.span, Severity::Error, &f.kind.to_string(), &f.detail, out.color));
        }
    }
    for leak in &report.leaked_cells {
        if json {
            out.record(json!({
                "record": "leak",
                "cell": leak.id,
                "name": leak.name,
                "region": leak.region,
                "layout": leak.layout,
                "dynamic": leak.ever_dynamic,
            }));
        } else {
            eprintln!("leak: heap cell {}#{} was never freed", leak.name, leak.id);
        }
    }
    if json {
        out.record(json!({
            "record": "exit",
            "status": status,
            "steps": report.steps,
            "leaked": report.leaked_cells.len(),
            "cells": cell_records(&report),
        }));
    } else {
        println!("{status} after {} steps", report.steps);
        for c in &report.cells {
            let value = c.contents().map_or("junk".to_owned(), |v| v.to_string());
            let freed = if c.is_freed() { " (freed)" } else { "" };
            println!("  {}#{} = {value}{freed}", c.name, c.id);
        }
    }
    match report.status {
        ExitStatus::Completed if report.leaked_cells.is_empty() => ExitCode::SUCCESS,
        ExitStatus::Completed => ExitCode::from(EXIT_LEAK),
        _ => ExitCode::from(EXIT_FAULT),
    }
}

fn cmd_fuzz(seeds: u64, features: String, json: bool) -> ExitCode {
    let features = match Feature::parse_list(&features) {
        Ok(f) => f,
        Err(e) => return usage(e),
    };
    let s = fuzz(0..seeds, &features);
    let out = Out::new(json);
    for f in &s.failures {
        if json {
            out.record(json!({ "record": "failure", "seed": f.seed, "problem": f.problem, "program": f.program }));
        } else {
            eprintln!("seed {}: {}\n{}", f.seed, f.problem, f.program);
        }
    }
    if json {
        out.record(json!({
            "record": "summary",
            "programs": s.programs,
            "faults": s.faults,
            "ill_typed": s.ill_typed,
            "static_leaks": s.static_leaks,
            "dynamic_leaks": s.dynamic_leaks,
            "step_limits": s.step_limits,
            "disagreements": s.failures.len(),
        }));
    } else {
        println!(
            "programs: {}  faults: {}  ill-typed: {}  static leaks: {}  stranded dynamic cells: {}",
            s.programs, s.faults, s.ill_typed, s.static_leaks, s.dynamic_leaks
        );
    }
    if s.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PROPERTY)
    }
}

fn cmd_oracle(json: bool) -> ExitCode {
    let s = oracle_compare(OracleBounds::default());
    let out = Out::new(json);
    for (what, list) in [("disagreement", &s.disagreements), ("code-mismatch", &s.code_mismatches)] {
        for d in list {
            if json {
                out.record(json!({ "record": what, "oracle": d.oracle, "checker": d.checker, "program": d.program }));
            } else {
                eprintln!("{what}: {d}");
            }
        }
    }
    if json {
        out.record(json!({
            "record": "summary",
            "programs": s.programs,
            "accepted": s.accepted,
            "faults": 0,
            "disagreements": s.disagreements.len(),
            "code_mismatches": s.code_mismatches.len(),
        }));
    } else {
        println!(
            "programs: {}  accepted: {}  disagreements: {}  code mismatches: {}",
            s.programs,
            s.accepted,
            s.disagreements.len(),
            s.code_mismatches.len()
        );
    }
    if s.disagreements.is_empty() && s.code_mismatches.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PROPERTY)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Check { file, json } => cmd_check(file, json),
        Command::Run { file, entry, trace, unchecked, max_steps, json } => {
            cmd_run(file, entry, trace, unchecked, max_steps, json)
        }
        Command::Fuzz { seeds, features, json } => cmd_fuzz(seeds, features, json),
        Command::Oracle { json } => cmd_oracle(json),
    }
}
