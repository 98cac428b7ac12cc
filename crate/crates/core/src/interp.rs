//! Instrumented interpreter.
//!
//! Every cell carries its runtime state (junk, initialized, freed). Cells
//! handed to a dynamic precondition enter a registry; an `assuming` guard
//! claims a registered cell for the duration of its body. Memory errors
//! surface as faults instead of undefined behavior.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::check::{check_module, TypeDiagnostic};
use crate::diag::SourceSpan;
use crate::il::*;
use crate::intrinsics::Intrinsic;

pub type CellId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RuntimeValue {
    Bool(bool),
    I32(i32),
    F32(f32),
    Addr(CellId),
    Unit,
}

impl RuntimeValue {
    pub fn from_literal(l: Literal) -> Self {
        match l {
            Literal::Bool(b) => RuntimeValue::Bool(b),
            Literal::I32(i) => RuntimeValue::I32(i),
            Literal::F32(x) => RuntimeValue::F32(x),
        }
    }

    pub fn layout(self) -> Option<Layout> {
        match self {
            RuntimeValue::Bool(_) => Some(Layout::Bool),
            RuntimeValue::I32(_) => Some(Layout::Int32),
            RuntimeValue::F32(_) => Some(Layout::Float32),
            RuntimeValue::Addr(_) => Some(Layout::Address),
            RuntimeValue::Unit => None,
        }
    }
}

impl fmt::Display for RuntimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeValue::Bool(b) => write!(f, "{b}"),
            RuntimeValue::I32(i) => write!(f, "{i}"),
            RuntimeValue::F32(x) => write!(f, "{x:?}f"),
            RuntimeValue::Addr(id) => write!(f, "&#{id}"),
            RuntimeValue::Unit => f.write_str("()"),
        }
    }
}

/// `None` when the operands are not a matching `I32` or `F32` pair.
pub fn eval_intrinsic(op: Intrinsic, a: RuntimeValue, b: RuntimeValue) -> Option<RuntimeValue> {
    use RuntimeValue::*;
    Some(match (op, a, b) {
        (Intrinsic::Add, I32(x), I32(y)) => I32(x.wrapping_add(y)),
        (Intrinsic::Sub, I32(x), I32(y)) => I32(x.wrapping_sub(y)),
        (Intrinsic::Mul, I32(x), I32(y)) => I32(x.wrapping_mul(y)),
        (Intrinsic::Eq, I32(x), I32(y)) => Bool(x == y),
        (Intrinsic::Lt, I32(x), I32(y)) => Bool(x < y),
        (Intrinsic::Add, F32(x), F32(y)) => F32(x + y),
        (Intrinsic::Sub, F32(x), F32(y)) => F32(x - y),
        (Intrinsic::Mul, F32(x), F32(y)) => F32(x * y),
        (Intrinsic::Eq, F32(x), F32(y)) => Bool(x == y),
        (Intrinsic::Lt, F32(x), F32(y)) => Bool(x < y),
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CellState {
    Junk,
    Init(RuntimeValue),
    /// `last` keeps the contents at the time of release.
    Freed { last: Option<RuntimeValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeCell {
    pub id: CellId,
    pub name: CellName,
    /// Activation of the function that allocated the cell.
    pub activation: usize,
    pub region: Region,
    pub layout: Layout,
    pub state: CellState,
    pub claimed: bool,
    /// Whether the cell was ever placed under dynamic governance.
    pub ever_dynamic: bool,
}

impl RuntimeCell {
    pub fn is_freed(&self) -> bool {
        matches!(self.state, CellState::Freed { .. })
    }

    /// Current contents, or the contents at release for a freed cell.
    pub fn contents(&self) -> Option<RuntimeValue> {
        match self.state {
            CellState::Junk => None,
            CellState::Init(v) => Some(v),
            CellState::Freed { last } => last,
        }
    }

    fn set_state(&mut self, next: CellState) {
        debug_assert!(!self.is_freed(), "cell #{} left the freed state", self.id);
        debug_assert!(
            !(matches!(self.state, CellState::Init(_)) && next == CellState::Junk),
            "cell #{} went from initialized back to junk",
            self.id
        );
        self.state = next;
    }
}

impl fmt::Display for RuntimeCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}=", self.name, self.id)?;
        match self.state {
            CellState::Junk => f.write_str("junk")?,
            CellState::Init(v) => write!(f, "init({v})")?,
            CellState::Freed { .. } => f.write_str("freed")?,
        }
        if self.claimed {
            f.write_str("[claimed]")?;
        }
        Ok(())
    }
}

/// Cells currently governed by dynamic capabilities.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DynamicRegistry {
    cells: BTreeMap<CellId, Layout>,
}

impl DynamicRegistry {
    pub fn contains(&self, id: CellId) -> bool {
        self.cells.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cells.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FaultKind {
    JunkRead,
    UseAfterFree,
    DoubleFree,
    FreeOfStack,
    TypeTagMismatch,
    MissingBody,
    StackOverflowGuard,
    /// Access to a dynamically governed cell outside a successful guard.
    UnguardedDynamicAccess,
}

impl FaultKind {
    /// Faults the checker is meant to rule out.
    pub fn is_memory_fault(self) -> bool {
        matches!(
            self,
            FaultKind::JunkRead
                | FaultKind::UseAfterFree
                | FaultKind::DoubleFree
                | FaultKind::FreeOfStack
                | FaultKind::UnguardedDynamicAccess
        )
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fault {
    pub kind: FaultKind,
    pub span: SourceSpan,
    pub cell: Option<CellId>,
    pub detail: String,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: fault[{}]: {}", self.span, self.kind, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ExitStatus {
    Completed,
    Faulted(Fault),
    StepLimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakedCell {
    pub id: CellId,
    pub name: CellName,
    pub region: Region,
    pub layout: Layout,
    pub ever_dynamic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Alloc,
    Store { was_junk: bool },
    Load,
    Free,
    Guard { passed: bool },
    Other,
}

/// One executed statement. `stmt` is the statement's pre-order index in the
/// module (see [`Module::statements`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Event {
    pub stmt: usize,
    pub activation: usize,
    pub kind: EventKind,
    pub cell: Option<CellId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitReport {
    pub status: ExitStatus,
    pub steps: u64,
    pub leaked_cells: Vec<LeakedCell>,
    /// Every cell allocated during the run, by id.
    pub cells: Vec<RuntimeCell>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

impl ExitReport {
    pub fn completed(&self) -> bool {
        self.status == ExitStatus::Completed
    }

    pub fn fault(&self) -> Option<&Fault> {
        match &self.status {
            ExitStatus::Faulted(f) => Some(f),
            _ => None,
        }
    }

    /// The cell named `name` allocated by the entry function's activation.
    pub fn entry_cell(&self, name: &str) -> Option<&RuntimeCell> {
        self.cells.iter().find(|c| c.activation == 0 && c.name.as_str() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
    pub unchecked: bool,
    pub max_steps: u64,
    pub max_depth: usize,
    /// Record one [`Event`] per executed statement.
    pub record_events: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { trace: false, unchecked: false, max_steps: 10_000_000, max_depth: 10_000, record_events: false }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("module is ill-typed ({} error(s))", .0.len())]
    IllTyped(Vec<TypeDiagnostic>),
    #[error("no function named `{0}`")]
    NoEntry(FuncName),
    #[error("entry `{0}` must have a body and signature `() -> ()`")]
    BadEntry(FuncName),
}

/// Runs `entry`, writing a trace to standard error when requested.
pub fn run_module(m: &Module, entry: &FuncName, opts: RunOptions) -> Result<ExitReport, RunError> {
    let stderr = std::io::stderr();
    let mut lock = stderr.lock();
    run_module_with_trace(m, entry, opts, &mut lock)
}

pub fn run_module_with_trace(
    m: &Module,
    entry: &FuncName,
    opts: RunOptions,
    trace: &mut dyn Write,
) -> Result<ExitReport, RunError> {
    if !opts.unchecked {
        check_module(m).map_err(RunError::IllTyped)?;
    }
    let f = m.function(entry).ok_or_else(|| RunError::NoEntry(entry.clone()))?;
    if f.body.is_none() || !f.sig.is_entry_point() || !f.params.is_empty() {
        return Err(RunError::BadEntry(entry.clone()));
    }
    let mut machine = Machine::new(m, opts, trace);
    let status = machine.run(f);
    Ok(machine.finish(status))
}

enum ScopeKind {
    Body,
    Branch,
    Guard(CellId),
}

struct Scope<'m> {
    stmts: &'m [Stmt],
    pc: usize,
    kind: ScopeKind,
    stack_cells: Vec<CellId>,
}

struct Frame<'m> {
    activation: usize,
    regs: HashMap<&'m str, RuntimeValue>,
    cells: HashMap<&'m str, CellId>,
    scopes: Vec<Scope<'m>>,
    /// Register of the caller receiving the return value.
    ret_dst: Option<&'m RegName>,
}

struct Machine<'m, 'w> {
    module: &'m Module,
    opts: RunOptions,
    trace: &'w mut dyn Write,
    cells: Vec<RuntimeCell>,
    registry: DynamicRegistry,
    frames: Vec<Frame<'m>>,
    activations: usize,
    steps: u64,
    events: Vec<Event>,
    stmt_index: HashMap<*const Stmt, usize>,
}

type Exec<T> = Result<T, Fault>;

impl<'m, 'w> Machine<'m, 'w> {
    fn new(module: &'m Module, opts: RunOptions, trace: &'w mut dyn Write) -> Self {
        let stmt_index = if opts.record_events {
            module.statements().into_iter().enumerate().map(|(i, s)| (s as *const Stmt, i)).collect()
        } else {
            HashMap::new()
        };
        Machine {
            module,
            opts,
            trace,
            cells: vec![],
            registry: DynamicRegistry::default(),
            frames: vec![],
            activations: 0,
            steps: 0,
            events: vec![],
            stmt_index,
        }
    }

    fn fault(&self, kind: FaultKind, span: Span, cell: Option<CellId>, detail: impl Into<String>) -> Fault {
        Fault { kind, span: SourceSpan::new(&self.module.file, span), cell, detail: detail.into() }
    }

    fn push_frame(&mut self, func: &'m Function, ret_dst: Option<&'m RegName>) {
        let body = func.body.as_deref().unwrap_or_default();
        self.frames.push(Frame {
            activation: self.activations,
            regs: HashMap::new(),
            cells: HashMap::new(),
            scopes: vec![Scope { stmts: body, pc: 0, kind: ScopeKind::Body, stack_cells: vec![] }],
            ret_dst,
        });
        self.activations += 1;
    }

    fn run(&mut self, entry: &'m Function) -> ExitStatus {
        self.push_frame(entry, None);
        loop {
            let frame = self.frames.last_mut().expect("a frame is active");
            let scope = frame.scopes.last_mut().expect("a scope is active");
            if scope.pc >= scope.stmts.len() {
                if frame.scopes.len() == 1 {
                    self.ret(RuntimeValue::Unit);
                    if self.frames.is_empty() {
                        return ExitStatus::Completed;
                    }
                } else {
                    self.pop_scope();
                }
                continue;
            }
            if self.steps >= self.opts.max_steps {
                return ExitStatus::StepLimitExceeded;
            }
            let stmts = scope.stmts;
            let stmt = &stmts[scope.pc];
            scope.pc += 1;
            self.steps += 1;
            let activation = frame.activation;
            let event = self.exec(stmt);
            match event {
                Err(f) => return ExitStatus::Faulted(f),
                Ok((kind, cell)) => {
                    if self.opts.record_events {
                        let idx = self.stmt_index[&(stmt as *const Stmt)];
                        self.events.push(Event { stmt: idx, activation, kind, cell });
                    }
                }
            }
            debug_assert!(self.registry.ids().all(|id| !self.cells[id].claimed && !self.cells[id].is_freed()));
            if self.opts.trace {
                self.write_trace(stmt);
            }
            if self.frames.is_empty() {
                return ExitStatus::Completed;
            }
        }
    }

    fn write_trace(&mut self, stmt: &Stmt) {
        let mut line = format!("step {}: {} ; cells:", self.steps, stmt.instr.header());
        for c in &self.cells {
            line.push(' ');
            line.push_str(&c.to_string());
        }
        let _ = writeln!(self.trace, "{line}");
    }

    fn pop_scope(&mut self) {
        let frame = self.frames.last_mut().expect("a frame is active");
        let scope = frame.scopes.pop().expect("a scope is active");
        for id in scope.stack_cells {
            let cell = &mut self.cells[id];
            if !cell.is_freed() {
                let last = cell.contents();
                cell.set_state(CellState::Freed { last });
            }
            self.registry.cells.remove(&id);
        }
        if let ScopeKind::Guard(id) = scope.kind {
            let cell = &mut self.cells[id];
            cell.claimed = false;
            if !cell.is_freed() {
                self.registry.cells.insert(id, cell.layout);
            }
        }
    }

    fn ret(&mut self, value: RuntimeValue) {
        while self.frames.last().is_some_and(|f| !f.scopes.is_empty()) {
            self.pop_scope();
        }
        let frame = self.frames.pop().expect("a frame is active");
        if let (Some(dst), Some(caller)) = (frame.ret_dst, self.frames.last_mut()) {
            caller.regs.insert(dst.as_str(), value);
        }
    }

    fn frame(&self) -> &Frame<'m> {
        self.frames.last().expect("a frame is active")
    }

    fn operand(&self, op: &Operand, span: Span) -> Exec<RuntimeValue> {
        match op {
            Operand::Lit(l) => Ok(RuntimeValue::from_literal(*l)),
            Operand::Reg(r) => self.frame().regs.get(r.as_str()).copied().ok_or_else(|| {
                self.fault(FaultKind::TypeTagMismatch, span, None, format!("register `{r}` holds no value"))
            }),
        }
    }

    fn address(&self, op: &Operand, span: Span) -> Exec<CellId> {
        match self.operand(op, span)? {
            RuntimeValue::Addr(id) => Ok(id),
            v => Err(self.fault(FaultKind::TypeTagMismatch, span, None, format!("`{op}` holds `{v}`, not an address"))),
        }
    }

    /// Common checks for a memory access to `id`.
    fn access(&self, id: CellId, span: Span, what: &str) -> Exec<()> {
        let cell = &self.cells[id];
        if self.registry.contains(id) {
            return Err(self.fault(
                FaultKind::UnguardedDynamicAccess,
                span,
                Some(id),
                format!("{what} of dynamically governed cell {}#{id} outside a guard", cell.name),
            ));
        }
        Ok(())
    }

    fn exec(&mut self, stmt: &'m Stmt) -> Exec<(EventKind, Option<CellId>)> {
        let span = stmt.span;
        match &stmt.instr {
            Instruction::Alloc { dst, ty, cell, region } => {
                let layout = ty
                    .layout()
                    .map_err(|e| self.fault(FaultKind::TypeTagMismatch, span, None, e.to_string()))?;
                let id = self.cells.len();
                let frame = self.frames.last_mut().expect("a frame is active");
                self.cells.push(RuntimeCell {
                    id,
                    name: cell.clone(),
                    activation: frame.activation,
                    region: *region,
                    layout,
                    state: CellState::Junk,
                    claimed: false,
                    ever_dynamic: false,
                });
                frame.cells.insert(cell.as_str(), id);
                frame.regs.insert(dst.as_str(), RuntimeValue::Addr(id));
                if *region == Region::Stack {
                    frame.scopes.last_mut().expect("a scope is active").stack_cells.push(id);
                }
                Ok((EventKind::Alloc, Some(id)))
            }
            Instruction::Store { value, target } => {
                let id = self.address(target, span)?;
                let v = self.operand(value, span)?;
                let cell = &self.cells[id];
                if cell.is_freed() {
                    return Err(self.fault(FaultKind::UseAfterFree, span, Some(id), format!("store to freed cell {}#{id}", cell.name)));
                }
                self.access(id, span, "store")?;
                if v.layout() != Some(cell.layout) {
                    return Err(self.fault(
                        FaultKind::TypeTagMismatch,
                        span,
                        Some(id),
                        format!("cannot store `{v}` into {}#{id} of layout {:?}", cell.name, cell.layout),
                    ));
                }
                let was_junk = cell.state == CellState::Junk;
                self.cells[id].set_state(CellState::Init(v));
                Ok((EventKind::Store { was_junk }, Some(id)))
            }
            Instruction::Load { dst, source } => {
                let id = self.address(source, span)?;
                let cell = &self.cells[id];
                if cell.is_freed() {
                    return Err(self.fault(FaultKind::UseAfterFree, span, Some(id), format!("load from freed cell {}#{id}", cell.name)));
                }
                self.access(id, span, "load")?;
                let CellState::Init(v) = cell.state else {
                    return Err(self.fault(FaultKind::JunkRead, span, Some(id), format!("load from uninitialized cell {}#{id}", cell.name)));
                };
                self.frames.last_mut().expect("a frame is active").regs.insert(dst.as_str(), v);
                Ok((EventKind::Load, Some(id)))
            }
            Instruction::Free { target } => {
                let id = self.address(target, span)?;
                self.access(id, span, "free")?;
                let cell = &self.cells[id];
                if cell.region == Region::Stack {
                    return Err(self.fault(FaultKind::FreeOfStack, span, Some(id), format!("free of stack cell {}#{id}", cell.name)));
                }
                if cell.is_freed() {
                    return Err(self.fault(FaultKind::DoubleFree, span, Some(id), format!("cell {}#{id} is already freed", cell.name)));
                }
                let last = cell.contents();
                self.cells[id].set_state(CellState::Freed { last });
                Ok((EventKind::Free, Some(id)))
            }
            Instruction::Call { dst, callee, args } => {
                self.call(dst.as_ref(), callee, args, span)?;
                Ok((EventKind::Other, None))
            }
            Instruction::If { cond, then_block, else_block } => {
                let b = match self.operand(cond, span)? {
                    RuntimeValue::Bool(b) => b,
                    v => return Err(self.fault(FaultKind::TypeTagMismatch, span, None, format!("condition holds `{v}`, not a boolean"))),
                };
                let stmts = if b { then_block } else { else_block };
                let frame = self.frames.last_mut().expect("a frame is active");
                frame.scopes.push(Scope { stmts, pc: 0, kind: ScopeKind::Branch, stack_cells: vec![] });
                Ok((EventKind::Other, None))
            }
            Instruction::Assuming { target, ty, body } => {
                let id = self.address(&Operand::Reg(target.clone()), span)?;
                let passed = self.guard(id, ty);
                if passed {
                    self.cells[id].claimed = true;
                    self.registry.cells.remove(&id);
                    let frame = self.frames.last_mut().expect("a frame is active");
                    frame.scopes.push(Scope { stmts: body, pc: 0, kind: ScopeKind::Guard(id), stack_cells: vec![] });
                }
                Ok((EventKind::Guard { passed }, Some(id)))
            }
            Instruction::Return { value } => {
                let v = match value {
                    Some(op) => self.operand(op, span)?,
                    None => RuntimeValue::Unit,
                };
                self.ret(v);
                Ok((EventKind::Other, None))
            }
        }
    }

    /// Whether the dynamic capability for `id` can be traded for `ty`.
    fn guard(&self, id: CellId, ty: &Type) -> bool {
        let cell = &self.cells[id];
        if !self.registry.contains(id) || cell.claimed {
            return false;
        }
        let CellState::Init(v) = cell.state else { return false };
        match (ty.normalize(), v) {
            (Type::Bool, RuntimeValue::Bool(_)) | (Type::I32, RuntimeValue::I32(_)) | (Type::F32, RuntimeValue::F32(_)) => true,
            (Type::ExistsAddr(_), RuntimeValue::Addr(_)) => true,
            (Type::Addr(c), RuntimeValue::Addr(target)) => self.frame().cells.get(c.as_str()) == Some(&target),
            _ => false,
        }
    }

    fn call(&mut self, dst: Option<&'m RegName>, callee: &'m FuncName, args: &'m [Operand], span: Span) -> Exec<()> {
        let values: Vec<RuntimeValue> = args.iter().map(|a| self.operand(a, span)).collect::<Exec<_>>()?;
        let def = self.module.function(callee);
        if let Some(f) = def {
            if f.params.len() != values.len() {
                return Err(self.fault(
                    FaultKind::TypeTagMismatch,
                    span,
                    None,
                    format!("`{callee}` takes {} argument(s), got {}", f.params.len(), values.len()),
                ));
            }
            let mut bound: HashMap<&'m str, CellId> = HashMap::new();
            for (t, v) in f.sig.param_types.iter().zip(&values) {
                if let (Type::Addr(var), RuntimeValue::Addr(id)) = (t.normalize(), v) {
                    let var = f.sig.cell_vars.iter().find(|c| **c == var).map(|c| c.as_str());
                    if let Some(var) = var {
                        bound.insert(var, *id);
                    }
                }
            }
            for pre in f.sig.pre_caps.iter().filter(|p| p.qual == Qualifier::Dynamic) {
                if let Some(&id) = bound.get(pre.cell.as_str()) {
                    let cell = &mut self.cells[id];
                    cell.ever_dynamic = true;
                    if !cell.claimed && !cell.is_freed() {
                        self.registry.cells.insert(id, cell.layout);
                    }
                }
            }
            if f.body.is_some() {
                if self.frames.len() >= self.opts.max_depth {
                    return Err(self.fault(
                        FaultKind::StackOverflowGuard,
                        span,
                        None,
                        format!("call depth limit of {} reached", self.opts.max_depth),
                    ));
                }
                self.push_frame(f, dst);
                let frame = self.frames.last_mut().expect("a frame is active");
                for (p, v) in f.params.iter().zip(values) {
                    frame.regs.insert(p.as_str(), v);
                }
                frame.cells = bound;
                return Ok(());
            }
        }
        let Some(op) = Intrinsic::from_name(callee.as_str()) else {
            let why = if def.is_some() { "has no body" } else { "is not defined" };
            return Err(self.fault(FaultKind::MissingBody, span, None, format!("`{callee}` {why} and is not an intrinsic")));
        };
        let result = match values[..] {
            [a, b] => eval_intrinsic(op, a, b),
            _ => None,
        };
        let v = result.ok_or_else(|| {
            let shown: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            self.fault(FaultKind::TypeTagMismatch, span, None, format!("`{callee}` applied to ({})", shown.join(", ")))
        })?;
        if let Some(d) = dst {
            self.frames.last_mut().expect("a frame is active").regs.insert(d.as_str(), v);
        }
        Ok(())
    }

    fn finish(self, status: ExitStatus) -> ExitReport {
        let leaked_cells = if status == ExitStatus::Completed {
            self.cells
                .iter()
                .filter(|c| c.region == Region::Heap && !c.is_freed())
                .map(|c| LeakedCell {
                    id: c.id,
                    name: c.name.clone(),
                    region: c.region,
                    layout: c.layout,
                    ever_dynamic: c.ever_dynamic,
                })
                .collect()
        } else {
            vec![]
        };
        ExitReport { status, steps: self.steps, leaked_cells, cells: self.cells, events: self.events }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_module;

    fn run_src(src: &str, unchecked: bool) -> ExitReport {
        let m = parse_module(src, "t.fuel").unwrap();
        let opts = RunOptions { unchecked, ..RunOptions::default() };
        run_module_with_trace(&m, &"main".into(), opts, &mut std::io::sink()).unwrap()
    }

    fn main(body: &str) -> String {
        format!("func main(): () -> () {{\n{body}\n}}\n")
    }

    fn fault_kind(r: &ExitReport) -> Option<FaultKind> {
        r.fault().map(|f| f.kind)
    }

    #[test]
    fn intrinsic_arithmetic() {
        use RuntimeValue::*;
        assert_eq!(eval_intrinsic(Intrinsic::Add, I32(i32::MAX), I32(1)), Some(I32(i32::MIN)));
        assert_eq!(eval_intrinsic(Intrinsic::Lt, I32(2), I32(4)), Some(Bool(true)));
        assert_eq!(eval_intrinsic(Intrinsic::Mul, I32(-3), I32(7)), Some(I32(-21)));
        assert_eq!(eval_intrinsic(Intrinsic::Add, F32(1.0), F32(13.37)), Some(F32(1.0f32 + 13.37f32)));
        assert_eq!(eval_intrinsic(Intrinsic::Add, I32(1), F32(1.0)), None);
        assert_eq!(eval_intrinsic(Intrinsic::Eq, Bool(true), Bool(true)), None);
    }

    #[test]
    fn store_load_round_trip() {
        let r = run_src(&main("x = salloc F32 at m0\nstore -0.1f, x\ny = load x\nz = salloc F32 at m1\nstore y, z"), false);
        assert!(r.completed());
        let v = r.entry_cell("m1").unwrap().contents();
        assert_eq!(v.map(|v| match v { RuntimeValue::F32(x) => x.to_bits(), _ => 0 }), Some((-0.1f32).to_bits()));
        // Stack cells are released when main returns.
        assert!(r.cells.iter().all(RuntimeCell::is_freed));
        assert!(r.leaked_cells.is_empty());
    }

    #[test]
    fn memory_faults_in_unchecked_mode() {
        let r = run_src(&main("x = salloc Bool at m0\ny = load x"), true);
        assert_eq!(fault_kind(&r), Some(FaultKind::JunkRead));
        let r = run_src(&main("x = halloc Bool at m0\nfree x\nfree x"), true);
        assert_eq!(fault_kind(&r), Some(FaultKind::DoubleFree));
        let r = run_src(&main("x = halloc Bool at m0\nstore true, x\nfree x\ny = load x"), true);
        assert_eq!(fault_kind(&r), Some(FaultKind::UseAfterFree));
        let r = run_src(&main("x = salloc Bool at m0\nfree x"), true);
        assert_eq!(fault_kind(&r), Some(FaultKind::FreeOfStack));
        let r = run_src(&main("x = salloc Bool at m0\nstore 1, x"), true);
        assert_eq!(fault_kind(&r), Some(FaultKind::TypeTagMismatch));
        let r = run_src(&main("x = call add, 1, true"), true);
        assert_eq!(fault_kind(&r), Some(FaultKind::TypeTagMismatch));
        let r = run_src(&main("x = call frob, 1"), true);
        assert_eq!(fault_kind(&r), Some(FaultKind::MissingBody));
    }

    #[test]
    fn checked_mode_rejects_ill_typed() {
        let m = parse_module(&main("x = salloc Bool at m0\ny = load x"), "t").unwrap();
        let e = run_module_with_trace(&m, &"main".into(), RunOptions::default(), &mut std::io::sink());
        assert!(matches!(e, Err(RunError::IllTyped(_))));
    }

    #[test]
    fn leaks_are_reported() {
        let r = run_src(&main("x = halloc I32 at m0"), true);
        assert!(r.completed());
        assert_eq!(r.leaked_cells.len(), 1);
        assert_eq!(r.leaked_cells[0].name.as_str(), "m0");
    }

    const FIG5: &str = "func free_one(x, y): forall a,b.(!a,!b)+[a:@dyn(I32), b:@dyn(I32)] -> Void {
  assuming x: I32 { free x }
}
func main(): () -> () {
  i = halloc I32 at m0
  j = halloc I32 at m1
  store 42, i
  store 24, j
  _ = call free_one, i, j
  assuming i: i32 { free i }
  assuming j: i32 { free j }
}";

    #[test]
    fn guards_fail_on_freed_cells() {
        let m = parse_module(FIG5, "t").unwrap();
        let opts = RunOptions { record_events: true, ..RunOptions::default() };
        let r = run_module_with_trace(&m, &"main".into(), opts, &mut std::io::sink()).unwrap();
        assert!(r.completed(), "{:?}", r.status);
        assert!(r.leaked_cells.is_empty());
        let guards: Vec<bool> = r
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Guard { passed } => Some(passed),
                _ => None,
            })
            .collect();
        assert_eq!(guards, vec![true, false, true]);
    }

    #[test]
    fn nested_guard_on_claimed_cell_fails() {
        let src = FIG5.replace("assuming j: i32 { free j }", "assuming j: i32 { assuming j: I32 { store 1, j }\nfree j }");
        let m = parse_module(&src, "t").unwrap();
        let opts = RunOptions { record_events: true, unchecked: true, ..RunOptions::default() };
        let r = run_module_with_trace(&m, &"main".into(), opts, &mut std::io::sink()).unwrap();
        assert!(r.completed());
        let m1 = r.entry_cell("m1").unwrap();
        assert_eq!(m1.contents(), Some(RuntimeValue::I32(24)));
        assert!(m1.is_freed());
    }

    #[test]
    fn unguarded_dynamic_access_faults() {
        let src = FIG5.replace("assuming x: I32 { free x }", "free x");
        let r = run_src(&src, true);
        assert_eq!(fault_kind(&r), Some(FaultKind::UnguardedDynamicAccess));
    }

    #[test]
    fn deep_recursion_hits_the_guard_not_the_host_stack() {
        let src = "func f(): () -> () { _ = call f }\nfunc main(): () -> () { _ = call f }";
        let r = run_src(src, false);
        assert_eq!(fault_kind(&r), Some(FaultKind::StackOverflowGuard));
        let m = parse_module(src, "t").unwrap();
        let opts = RunOptions { max_steps: 50, ..RunOptions::default() };
        let r = run_module_with_trace(&m, &"main".into(), opts, &mut std::io::sink()).unwrap();
        assert_eq!(r.status, ExitStatus::StepLimitExceeded);
        assert_eq!(r.steps, 50);
    }

    #[test]
    fn recursive_activations_get_fresh_cells() {
        let src = "func f(): () -> () {\n x = salloc I32 at m0\n store 1, x\n}\nfunc main(): () -> () {\n _ = call f\n _ = call f\n}";
        let r = run_src(src, false);
        assert!(r.completed());
        let ids: Vec<(usize, usize)> = r.cells.iter().map(|c| (c.id, c.activation)).collect();
        assert_eq!(ids, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn trace_lines() {
        let m = parse_module(&main("x = salloc Bool at m0\nstore true, x"), "t").unwrap();
        let opts = RunOptions { trace: true, ..RunOptions::default() };
        let mut out = Vec::new();
        run_module_with_trace(&m, &"main".into(), opts, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "step 1: x = salloc Bool at m0 ; cells: m0#0=junk\nstep 2: store true, x ; cells: m0#0=init(true)\n"
        );
    }

    #[test]
    fn entry_must_be_unit() {
        let m = parse_module("func main(x): (I32) -> () { }", "t").unwrap();
        let e = run_module_with_trace(&m, &"main".into(), RunOptions::default(), &mut std::io::sink());
        assert_eq!(e, Err(RunError::BadEntry("main".into())));
        let e = run_module_with_trace(&m, &"nope".into(), RunOptions::default(), &mut std::io::sink());
        assert_eq!(e, Err(RunError::NoEntry("nope".into())));
    }
}
