//! Exhaustive cross-check of the checker on tiny straight-line programs.
//!
//! Every program of at most `max_instrs` allocations, stores, loads and
//! frees over at most `max_cells` cells is enumerated. A direct simulation
//! of cell states, sharing no code with the checker, decides each one.

use std::fmt;

use serde::Serialize;

use crate::check::{check_module, DiagCode};
use crate::il::*;
use crate::parser::print_module;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleClass {
    /// Read of an uninitialized cell.
    Junk,
    /// Use of a freed cell.
    Dead,
    StackFree,
    Layout,
    NotPointer,
    Leak,
}

impl OracleClass {
    pub fn expected_code(self) -> DiagCode {
        match self {
            OracleClass::Junk => DiagCode::UseOfJunk,
            OracleClass::Dead => DiagCode::UseAfterConsume,
            OracleClass::StackFree => DiagCode::FreeOfStackCell,
            OracleClass::Layout => DiagCode::LayoutMismatch,
            OracleClass::NotPointer => DiagCode::TypeMismatch,
            OracleClass::Leak => DiagCode::MemoryLeak,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Accept,
    Reject(OracleClass),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBounds {
    pub max_instrs: usize,
    pub max_cells: usize,
}

impl Default for OracleBounds {
    fn default() -> Self {
        OracleBounds { max_instrs: 4, max_cells: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Val {
    Bool,
    Int,
    Ptr(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Bool,
    Int,
    Ptr,
}

fn kind_of(v: Val) -> Kind {
    match v {
        Val::Bool => Kind::Bool,
        Val::Int => Kind::Int,
        Val::Ptr(_) => Kind::Ptr,
    }
}

#[derive(Debug, Clone)]
struct Cell {
    kind: Kind,
    heap: bool,
    contents: Option<Val>,
    dead: bool,
}

#[derive(Debug, Clone, Default)]
struct Sim {
    cells: Vec<Cell>,
    regs: Vec<Val>,
    error: Option<OracleClass>,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Alloc(Kind, bool),
    Store { value: Option<usize>, lit: Option<Literal>, target: usize },
    Load(usize),
    Free(usize),
}

impl Sim {
    fn cell_of(&self, reg: usize) -> Result<usize, OracleClass> {
        match self.regs[reg] {
            Val::Ptr(c) if self.cells[c].dead => Err(OracleClass::Dead),
            Val::Ptr(c) => Ok(c),
            _ => Err(OracleClass::NotPointer),
        }
    }

    fn step(&mut self, op: Op) {
        let r = match op {
            Op::Alloc(kind, heap) => {
                self.regs.push(Val::Ptr(self.cells.len()));
                self.cells.push(Cell { kind, heap, contents: None, dead: false });
                Ok(())
            }
            Op::Store { value, lit, target } => self.cell_of(target).and_then(|c| {
                let v = match (value, lit) {
                    (Some(r), _) => self.regs[r],
                    (None, Some(Literal::Bool(_))) => Val::Bool,
                    _ => Val::Int,
                };
                if kind_of(v) != self.cells[c].kind {
                    return Err(OracleClass::Layout);
                }
                self.cells[c].contents = Some(v);
                Ok(())
            }),
            Op::Load(src) => {
                let r = self.cell_of(src).and_then(|c| self.cells[c].contents.ok_or(OracleClass::Junk));
                self.regs.push(*r.as_ref().unwrap_or(&Val::Int));
                r.map(|_| ())
            }
            Op::Free(target) => self.cell_of(target).and_then(|c| {
                if !self.cells[c].heap {
                    return Err(OracleClass::StackFree);
                }
                self.cells[c].dead = true;
                Ok(())
            }),
        };
        // Only the first error counts; later steps just keep registers defined.
        if self.error.is_none() {
            self.error = r.err();
        }
    }

    fn verdict(&self) -> Verdict {
        match self.error {
            Some(e) => Verdict::Reject(e),
            None if self.cells.iter().any(|c| c.heap && !c.dead) => Verdict::Reject(OracleClass::Leak),
            None => Verdict::Accept,
        }
    }
}

fn reg(i: usize) -> RegName {
    RegName::new(format!("r{i}"))
}

fn instr(op: Op, regs: usize, cells: usize) -> Instruction {
    match op {
        Op::Alloc(kind, heap) => Instruction::Alloc {
            dst: reg(regs),
            ty: match kind {
                Kind::Bool => Type::Bool,
                Kind::Int => Type::I32,
                Kind::Ptr => Type::ExistsAddr(CellVar::new("a")),
            },
            cell: CellName::new(format!("m{cells}")),
            region: if heap { Region::Heap } else { Region::Stack },
        },
        Op::Store { value, lit, target } => Instruction::Store {
            value: match value {
                Some(r) => Operand::Reg(reg(r)),
                None => Operand::Lit(lit.expect("literal store")),
            },
            target: Operand::Reg(reg(target)),
        },
        Op::Load(src) => Instruction::Load { dst: reg(regs), source: Operand::Reg(reg(src)) },
        Op::Free(t) => Instruction::Free { target: Operand::Reg(reg(t)) },
    }
}

fn ops(regs: usize, cells: usize, bounds: &OracleBounds) -> Vec<Op> {
    let mut out = vec![];
    if cells < bounds.max_cells {
        for kind in [Kind::Bool, Kind::Int, Kind::Ptr] {
            for heap in [false, true] {
                out.push(Op::Alloc(kind, heap));
            }
        }
    }
    for t in 0..regs {
        for lit in [Literal::Bool(true), Literal::I32(0), Literal::I32(1)] {
            out.push(Op::Store { value: None, lit: Some(lit), target: t });
        }
        for v in 0..regs {
            out.push(Op::Store { value: Some(v), lit: None, target: t });
        }
        out.push(Op::Load(t));
        out.push(Op::Free(t));
    }
    out
}

/// All straight-line `main` functions within `bounds`, with the oracle's
/// verdict for each.
pub fn oracle_enumerate(bounds: OracleBounds) -> Vec<(Module, Verdict)> {
    fn go(sim: &Sim, body: &mut Block, bounds: &OracleBounds, out: &mut Vec<(Module, Verdict)>) {
        let main = Function {
            name: FuncName::new("main"),
            params: vec![],
            sig: Signature::unit(),
            body: Some(body.clone()),
            span: Span::default(),
        };
        out.push((Module { file: "oracle.fuel".into(), functions: vec![main] }, sim.verdict()));
        if body.len() == bounds.max_instrs {
            return;
        }
        for op in ops(sim.regs.len(), sim.cells.len(), bounds) {
            let mut next = sim.clone();
            body.push(Stmt::new(instr(op, sim.regs.len(), sim.cells.len())));
            next.step(op);
            go(&next, body, bounds, out);
            body.pop();
        }
    }
    let mut out = vec![];
    go(&Sim::default(), &mut vec![], &bounds, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disagreement {
    pub program: String,
    pub oracle: Verdict,
    pub checker: Option<DiagCode>,
}

impl fmt::Display for Disagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "oracle {:?}, checker {:?} on\n{}", self.oracle, self.checker, self.program)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OracleSummary {
    pub programs: usize,
    pub accepted: usize,
    /// Programs where the checker and the oracle disagree on acceptance.
    pub disagreements: Vec<Disagreement>,
    /// Programs both reject, but with a code other than the oracle's class.
    pub code_mismatches: Vec<Disagreement>,
}

/// Runs the checker on every enumerated program and compares.
pub fn oracle_compare(bounds: OracleBounds) -> OracleSummary {
    let mut s = OracleSummary::default();
    for (m, verdict) in oracle_enumerate(bounds) {
        s.programs += 1;
        let checker = check_module(&m).err().map(|d| d[0].code);
        let record = || Disagreement { program: print_module(&m), oracle: verdict, checker };
        match (verdict, checker) {
            (Verdict::Accept, None) => s.accepted += 1,
            (Verdict::Reject(class), Some(code)) => {
                if class.expected_code() != code {
                    s.code_mismatches.push(record());
                }
            }
            _ => s.disagreements.push(record()),
        }
    }
    s
}
