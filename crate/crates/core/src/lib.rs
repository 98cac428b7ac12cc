//! Fuel: a small register IL whose types track the state of every memory
//! cell, a checker for it, and an interpreter that faults on exactly the
//! errors the checker is meant to rule out.

pub mod capenv;
pub mod check;
pub mod diag;
pub mod harness;
pub mod il;
pub mod interp;
pub mod intrinsics;
pub mod parser;

pub use check::{check_module, check_signature, DiagCode, TypeDiagnostic};
pub use il::{Module, Type};
pub use parser::{parse_module, print_module, ParseDiagnostic};
