//! Program generator, mutation catalog, brute-force oracle, and the
//! soundness fuzz loop built from them.

mod gen;
mod mutate;
mod oracle;

use std::collections::BTreeSet;
use std::ops::Range;

use serde::Serialize;

pub use gen::{generate_program, Feature, GenConfig};
pub use mutate::{applicable_mutations, mutate, MutateError, Mutation, MutationKind, RuntimeExpectation};
pub use oracle::{oracle_compare, oracle_enumerate, Disagreement, OracleBounds, OracleClass, OracleSummary, Verdict};

use crate::check::check_module;
use crate::interp::{run_module_with_trace, ExitStatus, RunOptions};
use crate::parser::print_module;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzFailure {
    pub seed: u64,
    pub problem: String,
    pub program: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FuzzSummary {
    pub programs: u64,
    /// Generated programs the checker rejected.
    pub ill_typed: u64,
    pub faults: u64,
    /// Leaked cells that were never under dynamic governance.
    pub static_leaks: u64,
    /// Leaked cells stranded under dynamic governance.
    pub dynamic_leaks: u64,
    pub step_limits: u64,
    pub steps: u64,
    pub failures: Vec<FuzzFailure>,
}

impl FuzzSummary {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }

    fn merge(&mut self, other: FuzzSummary) {
        self.programs += other.programs;
        self.ill_typed += other.ill_typed;
        self.faults += other.faults;
        self.static_leaks += other.static_leaks;
        self.dynamic_leaks += other.dynamic_leaks;
        self.step_limits += other.step_limits;
        self.steps += other.steps;
        self.failures.extend(other.failures);
    }
}

/// Generates, checks and runs one program.
pub fn fuzz_one(cfg: &GenConfig) -> FuzzSummary {
    let mut s = FuzzSummary { programs: 1, ..FuzzSummary::default() };
    let m = generate_program(cfg);
    let fail = |problem: String| FuzzFailure { seed: cfg.seed, problem, program: print_module(&m) };
    if let Err(d) = check_module(&m) {
        s.ill_typed += 1;
        s.failures.push(fail(format!("generated program is ill-typed: {}", d[0])));
        return s;
    }
    let opts = RunOptions { unchecked: true, ..RunOptions::default() };
    let report = run_module_with_trace(&m, &"main".into(), opts, &mut std::io::sink()).expect("generated entry is runnable");
    s.steps = report.steps;
    match &report.status {
        ExitStatus::Completed => {}
        ExitStatus::Faulted(f) => {
            s.faults += 1;
            s.failures.push(fail(format!("fault: {f}")));
        }
        ExitStatus::StepLimitExceeded => {
            s.step_limits += 1;
            s.failures.push(fail("step limit exceeded".into()));
        }
    }
    for leak in &report.leaked_cells {
        if leak.ever_dynamic {
            s.dynamic_leaks += 1;
        } else {
            s.static_leaks += 1;
            s.failures.push(fail(format!("cell {}#{} leaked without dynamic governance", leak.name, leak.id)));
        }
    }
    s
}

/// Runs [`fuzz_one`] for every seed in `seeds`, spread over the available
/// cores. Failures are listed in seed order.
pub fn fuzz(seeds: Range<u64>, features: &BTreeSet<Feature>) -> FuzzSummary {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()) as u64;
    let len = seeds.end.saturating_sub(seeds.start);
    let chunk = len.div_ceil(threads).max(1);
    let parts: Vec<FuzzSummary> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| seeds.start + t * chunk)
            .take_while(|&lo| lo < seeds.end)
            .map(|lo| {
                let hi = (lo + chunk).min(seeds.end);
                scope.spawn(move || {
                    let mut s = FuzzSummary::default();
                    for seed in lo..hi {
                        s.merge(fuzz_one(&GenConfig::new(seed, features.iter().copied())));
                    }
                    s
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fuzz worker panicked")).collect()
    });
    let mut total = FuzzSummary::default();
    for p in parts {
        total.merge(p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_range_is_vacuous() {
        let s = fuzz(0..0, &Feature::ALL.into());
        assert_eq!(s.programs, 0);
        assert!(s.is_clean());
    }

    #[test]
    fn short_campaign_is_clean() {
        let s = fuzz(0..200, &Feature::ALL.into());
        assert_eq!(s.programs, 200);
        assert!(s.is_clean(), "{:#?}", s.failures.first());
    }
}
