//! Single-edit mutations and the rules deciding where each one applies.
//!
//! A mutation names its target by the statement's pre-order index in the
//! module (see [`Module::statements`]). Whether a mutation is applicable
//! depends on the program's shape and on what the unmutated program did at
//! runtime, so that every applicable mutant both fails the checker with a
//! known code and misbehaves in a known way when run unchecked.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::check::DiagCode;
use crate::il::*;
use crate::interp::{EventKind, ExitReport, FaultKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MutationKind {
    DeleteStore,
    DeleteFree,
    DuplicateFree,
    SwapStoreBeforeAfterLoad,
    FreeStackCell,
    DropAssumingGuard,
    RemovePostCapRestore,
}

/// What an unchecked run of a mutant is expected to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuntimeExpectation {
    Fault(&'static [FaultKind]),
    /// Completes and reports at least one leaked cell.
    Leak,
}

impl RuntimeExpectation {
    pub fn accepts(self, report: &ExitReport) -> bool {
        match self {
            RuntimeExpectation::Fault(kinds) => report.fault().is_some_and(|f| kinds.contains(&f.kind)),
            RuntimeExpectation::Leak => report.completed() && !report.leaked_cells.is_empty(),
        }
    }
}

impl MutationKind {
    pub const ALL: [MutationKind; 7] = [
        MutationKind::DeleteStore,
        MutationKind::DeleteFree,
        MutationKind::DuplicateFree,
        MutationKind::SwapStoreBeforeAfterLoad,
        MutationKind::FreeStackCell,
        MutationKind::DropAssumingGuard,
        MutationKind::RemovePostCapRestore,
    ];

    pub fn expected_code(self) -> DiagCode {
        match self {
            MutationKind::DeleteStore | MutationKind::SwapStoreBeforeAfterLoad => DiagCode::UseOfJunk,
            MutationKind::DeleteFree => DiagCode::MemoryLeak,
            MutationKind::DuplicateFree => DiagCode::UseAfterConsume,
            MutationKind::FreeStackCell => DiagCode::FreeOfStackCell,
            MutationKind::DropAssumingGuard => DiagCode::UnguardedDynamicUse,
            MutationKind::RemovePostCapRestore => DiagCode::MissingPostCapability,
        }
    }

    pub fn expected_runtime(self) -> RuntimeExpectation {
        use FaultKind::*;
        match self {
            MutationKind::DeleteStore | MutationKind::SwapStoreBeforeAfterLoad | MutationKind::RemovePostCapRestore => {
                RuntimeExpectation::Fault(&[JunkRead])
            }
            MutationKind::DeleteFree => RuntimeExpectation::Leak,
            MutationKind::DuplicateFree => RuntimeExpectation::Fault(&[DoubleFree]),
            MutationKind::FreeStackCell => RuntimeExpectation::Fault(&[FreeOfStack]),
            MutationKind::DropAssumingGuard => {
                RuntimeExpectation::Fault(&[UnguardedDynamicAccess, DoubleFree, UseAfterFree])
            }
        }
    }
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Mutation {
    pub kind: MutationKind,
    pub target: usize,
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutateError {
    #[error("{mutation}: {reason}")]
    InvalidTarget { mutation: Mutation, reason: String },
}

/// Applies `edit` to the block holding statement `target` and the
/// statement's position within it.
fn edit_at<F>(m: &mut Module, target: usize, edit: F) -> Result<(), String>
where
    F: FnOnce(&mut Block, usize) -> Result<(), String>,
{
    fn walk<F>(block: &mut Block, counter: &mut usize, target: usize, edit: &mut Option<F>) -> Option<Result<(), String>>
    where
        F: FnOnce(&mut Block, usize) -> Result<(), String>,
    {
        for pos in 0..block.len() {
            if *counter == target {
                return Some((edit.take().expect("edit applied once"))(block, pos));
            }
            *counter += 1;
            let found = match &mut block[pos].instr {
                Instruction::If { then_block, else_block, .. } => {
                    walk(then_block, counter, target, edit).or_else(|| walk(else_block, counter, target, edit))
                }
                Instruction::Assuming { body, .. } => walk(body, counter, target, edit),
                _ => None,
            };
            if found.is_some() {
                return found;
            }
        }
        None
    }
    let mut counter = 0;
    let mut edit = Some(edit);
    for f in &mut m.functions {
        if let Some(body) = &mut f.body {
            if let Some(r) = walk(body, &mut counter, target, &mut edit) {
                return r;
            }
        }
    }
    Err(format!("no statement with index {target}"))
}

/// Produces the single-edit mutant. Only the form of the target statement
/// is validated here; see [`applicable_mutations`] for where a mutation is
/// meaningful.
pub fn mutate(m: &Module, mutation: Mutation) -> Result<Module, MutateError> {
    let mut out = m.clone();
    let kind = mutation.kind;
    let r = edit_at(&mut out, mutation.target, |block, pos| {
        let instr = &block[pos].instr;
        match (kind, instr) {
            (MutationKind::DeleteStore | MutationKind::RemovePostCapRestore, Instruction::Store { .. })
            | (MutationKind::DeleteFree, Instruction::Free { .. }) => {
                block.remove(pos);
            }
            (MutationKind::DuplicateFree, Instruction::Free { .. }) => {
                let copy = block[pos].clone();
                block.insert(pos + 1, copy);
            }
            (MutationKind::SwapStoreBeforeAfterLoad, Instruction::Store { target, .. }) => {
                match block.get(pos + 1).map(|s| &s.instr) {
                    Some(Instruction::Load { source, .. }) if source == target => block.swap(pos, pos + 1),
                    _ => return Err("the next statement is not a load from the same register".into()),
                }
            }
            (MutationKind::FreeStackCell, Instruction::Alloc { dst, region: Region::Stack, .. }) => {
                let free = Stmt::at(Instruction::Free { target: Operand::Reg(dst.clone()) }, block[pos].span);
                block.insert(pos + 1, free);
            }
            (MutationKind::DropAssumingGuard, Instruction::Assuming { body, .. }) => {
                let body = body.clone();
                block.splice(pos..=pos, body);
            }
            (_, other) => return Err(format!("`{}` is not a valid target", other.header())),
        }
        Ok(())
    });
    r.map(|()| out).map_err(|reason| MutateError::InvalidTarget { mutation, reason })
}

#[derive(Debug, Clone, Copy, Default)]
struct StmtInfo {
    func: usize,
    /// Directly in the function body rather than a nested block.
    top_level: bool,
    next_sibling: Option<usize>,
}

fn stmt_infos(m: &Module) -> Vec<StmtInfo> {
    fn walk(block: &[Stmt], func: usize, top_level: bool, out: &mut Vec<StmtInfo>) {
        let mut prev: Option<usize> = None;
        for s in block {
            let idx = out.len();
            if let Some(p) = prev {
                out[p].next_sibling = Some(idx);
            }
            prev = Some(idx);
            out.push(StmtInfo { func, top_level, next_sibling: None });
            match &s.instr {
                Instruction::If { then_block, else_block, .. } => {
                    walk(then_block, func, false, out);
                    walk(else_block, func, false, out);
                }
                Instruction::Assuming { body, .. } => walk(body, func, false, out),
                _ => {}
            }
        }
    }
    let mut out = vec![];
    for (i, f) in m.functions.iter().enumerate() {
        if let Some(body) = &f.body {
            walk(body, i, true, &mut out);
        }
    }
    out
}

/// Catalog mutations that apply to `m`, given the report of a run of the
/// unmutated program with events recorded.
pub fn applicable_mutations(m: &Module, report: &ExitReport) -> Vec<Mutation> {
    let stmts = m.statements();
    let infos = stmt_infos(m);
    let events = &report.events;
    let mut by_stmt: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        by_stmt.entry(e.stmt).or_default().push(i);
    }
    // The first later event touching the same cell.
    let next_touch = |i: usize| {
        let cell = events[i].cell?;
        events[i + 1..].iter().find(|e| e.cell == Some(cell) && e.kind != EventKind::Alloc)
    };
    let initializing = |evs: &[usize]| evs.iter().all(|&i| events[i].kind == EventKind::Store { was_junk: true });

    let mut out = vec![];
    for (idx, stmt) in stmts.iter().enumerate() {
        let Some(evs) = by_stmt.get(&idx) else { continue };
        let info = infos[idx];
        let mut add = |kind| out.push(Mutation { kind, target: idx });
        match &stmt.instr {
            Instruction::Store { target, .. } => {
                let own_cell = evs.iter().all(|&i| {
                    let e = events[i];
                    e.cell.is_some_and(|c| report.cells[c].activation == e.activation)
                });
                let read_next = evs.iter().all(|&i| next_touch(i).is_some_and(|n| n.kind == EventKind::Load));
                if info.top_level && initializing(evs) && own_cell && read_next {
                    add(MutationKind::DeleteStore);
                }
                let next_is_load = info.next_sibling.is_some_and(|n| {
                    matches!(&stmts[n].instr, Instruction::Load { source, .. } if source == target)
                });
                if next_is_load && initializing(evs) {
                    add(MutationKind::SwapStoreBeforeAfterLoad);
                }
                let f = &m.functions[info.func];
                let read_by_caller = evs.iter().all(|&i| {
                    next_touch(i).is_some_and(|n| n.kind == EventKind::Load && n.activation != events[i].activation)
                });
                if info.top_level && initializing(evs) && establishes_post_cap(f, target) && read_by_caller {
                    add(MutationKind::RemovePostCapRestore);
                }
            }
            Instruction::Free { .. } => {
                if info.top_level {
                    add(MutationKind::DeleteFree);
                }
                add(MutationKind::DuplicateFree);
            }
            Instruction::Alloc { region: Region::Stack, .. } => add(MutationKind::FreeStackCell),
            Instruction::Assuming { target, body, .. } => {
                let first_use = body.iter().find(|s| !matches!(s.instr, Instruction::Alloc { .. }));
                let guarded = Operand::Reg(target.clone());
                let touches_guarded = first_use.is_some_and(|s| match &s.instr {
                    Instruction::Store { target, .. } | Instruction::Free { target } => *target == guarded,
                    Instruction::Load { source, .. } => *source == guarded,
                    _ => false,
                });
                if touches_guarded {
                    add(MutationKind::DropAssumingGuard);
                }
            }
            _ => {}
        }
    }
    out
}

/// Whether a store through `target` turns a junk precondition of `f` into
/// the initialized postcondition.
fn establishes_post_cap(f: &Function, target: &Operand) -> bool {
    let Some(reg) = target.as_reg() else { return false };
    let Some(i) = f.params.iter().position(|p| p == reg) else { return false };
    let Some(Type::Addr(var)) = f.sig.param_types.get(i).map(Type::normalize) else { return false };
    match (f.sig.pre_cap(&var), f.sig.post_cap(&var)) {
        (Some(pre), Some(post)) => {
            pre.qual.is_linear() && post.qual.is_linear() && pre.ty.is_junk() && !post.ty.is_junk()
        }
        _ => false,
    }
}
