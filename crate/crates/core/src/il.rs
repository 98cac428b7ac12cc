//! Abstract syntax of the Fuel intermediate language.
//!
//! Programs are lists of functions whose bodies are blocks of
//! single-assignment instructions. Types describe register values and cell
//! contents; capabilities describe what the type checker currently knows
//! about a register or a memory cell.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

macro_rules! name_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }
    };
}

name_type!(
    /// A single-assignment register.
    RegName
);
name_type!(
    /// A memory cell name, either introduced by `at` or quantified in a
    /// signature. Cell variables share this namespace.
    CellName
);
name_type!(
    /// A function name.
    FuncName
);

/// Cell variables are cell names bound by a signature's quantifier.
pub type CellVar = CellName;

/// A position in source text, 1-based.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

/// A source range within one file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn new(start: Pos, end: Pos) -> Self {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end }
    }
}

/// Memory layout of a value. All addresses share one layout regardless of
/// the cell they designate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Layout {
    Bool,
    Int32,
    Float32,
    Address,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("type `{0}` has no memory layout")]
    NoLayout(Type),
    #[error("cell variable `{0}` has no substitution")]
    UnboundCellVar(CellVar),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Bool,
    I32,
    F32,
    Unit,
    /// `!c`: the singleton type whose only inhabitant is the address of `c`.
    Addr(CellName),
    /// `exists a.!a`: the address of some cell.
    ExistsAddr(CellVar),
    /// Allocated but uninitialized storage laid out like the inner type.
    Junk(Box<Type>),
    Tuple(Vec<Type>),
}

impl Type {
    pub fn addr(cell: impl Into<String>) -> Type {
        Type::Addr(CellName::new(cell))
    }

    /// Wraps `t` in `Junk`, collapsing nested junk.
    pub fn junk(t: Type) -> Type {
        match t {
            Type::Junk(_) => t,
            other => Type::Junk(Box::new(other)),
        }
    }

    pub fn is_junk(&self) -> bool {
        matches!(self, Type::Junk(_))
    }

    /// Strips one `Junk` wrapper, if present.
    pub fn unjunk(&self) -> &Type {
        match self {
            Type::Junk(inner) => inner,
            other => other,
        }
    }

    pub fn normalize(&self) -> Type {
        match self {
            Type::Junk(inner) => Type::junk(inner.normalize()),
            Type::Tuple(elems) => Type::Tuple(elems.iter().map(Type::normalize).collect()),
            other => other.clone(),
        }
    }

    pub fn layout(&self) -> Result<Layout, TypeError> {
        match self {
            Type::Bool => Ok(Layout::Bool),
            Type::I32 => Ok(Layout::Int32),
            Type::F32 => Ok(Layout::Float32),
            Type::Addr(_) | Type::ExistsAddr(_) => Ok(Layout::Address),
            Type::Junk(inner) => inner.layout(),
            Type::Unit | Type::Tuple(_) => Err(TypeError::NoLayout(self.clone())),
        }
    }

    /// Replaces free cell names according to `subst`. Existential binders
    /// are not substituted under.
    pub fn substitute(&self, subst: &BTreeMap<CellVar, CellName>) -> Result<Type, TypeError> {
        Ok(match self {
            Type::Addr(c) => match subst.get(c) {
                Some(m) => Type::Addr(m.clone()),
                None => return Err(TypeError::UnboundCellVar(c.clone())),
            },
            Type::Junk(inner) => Type::junk(inner.substitute(subst)?),
            Type::Tuple(elems) => Type::Tuple(
                elems.iter().map(|e| e.substitute(subst)).collect::<Result<_, _>>()?,
            ),
            other => other.clone(),
        })
    }

    /// Cell names occurring free in the type.
    pub fn free_cells(&self, out: &mut BTreeSet<CellName>) {
        match self {
            Type::Addr(c) => {
                out.insert(c.clone());
            }
            Type::Junk(inner) => inner.free_cells(out),
            Type::Tuple(elems) => elems.iter().for_each(|e| e.free_cells(out)),
            _ => {}
        }
    }

    /// The type-equality relation used by the checker: structural equality
    /// on normalized types, up to renaming of existential binders.
    pub fn same(&self, other: &Type) -> bool {
        fn go(a: &Type, b: &Type) -> bool {
            match (a, b) {
                (Type::ExistsAddr(_), Type::ExistsAddr(_)) => true,
                (Type::Junk(x), Type::Junk(y)) => go(x, y),
                (Type::Tuple(xs), Type::Tuple(ys)) => {
                    xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| go(x, y))
                }
                _ => a == b,
            }
        }
        go(&self.normalize(), &other.normalize())
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => f.write_str("Bool"),
            Type::I32 => f.write_str("I32"),
            Type::F32 => f.write_str("F32"),
            Type::Unit => f.write_str("()"),
            Type::Addr(c) => write!(f, "!{c}"),
            Type::ExistsAddr(a) => write!(f, "exists {a}.!{a}"),
            Type::Junk(inner) => write!(f, "Junk<{inner}>"),
            Type::Tuple(elems) => {
                f.write_str("(")?;
                for (i, e) in elems.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Normalizes a type. Free function form of [`Type::normalize`].
pub fn normalize_type(t: &Type) -> Type {
    t.normalize()
}

pub fn layout_of(t: &Type) -> Result<Layout, TypeError> {
    t.layout()
}

pub fn substitute_cells(t: &Type, subst: &BTreeMap<CellVar, CellName>) -> Result<Type, TypeError> {
    t.substitute(subst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Qualifier {
    Linear,
    /// `@brw`: read-only, duplicable, lasts for one call.
    Borrowed,
    /// `@dyn`: duplicable; every use must be guarded by `assuming`.
    Dynamic,
}

impl Qualifier {
    pub fn is_linear(self) -> bool {
        self == Qualifier::Linear
    }
}

impl fmt::Display for Qualifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Qualifier::Linear => "linear",
            Qualifier::Borrowed => "@brw",
            Qualifier::Dynamic => "@dyn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    Stack,
    Heap,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Stack => "stack",
            Region::Heap => "heap",
        })
    }
}

/// A capability on a cell as written in a signature. Signatures do not
/// mention regions; the caller's cell keeps its own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCap {
    pub cell: CellName,
    pub ty: Type,
    pub qual: Qualifier,
}

impl fmt::Display for CellCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qual {
            Qualifier::Linear => write!(f, "{}: {}", self.cell, self.ty),
            q => write!(f, "{q}({}: {})", self.cell, self.ty),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Capability {
    Register { reg: RegName, ty: Type },
    Cell { cap: CellCap, region: Region },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub cell_vars: Vec<CellVar>,
    pub param_types: Vec<Type>,
    pub pre_caps: Vec<CellCap>,
    pub return_type: Type,
    pub post_caps: Vec<CellCap>,
}

impl Signature {
    /// `() -> ()` with no capabilities.
    pub fn unit() -> Self {
        Signature {
            cell_vars: vec![],
            param_types: vec![],
            pre_caps: vec![],
            return_type: Type::Unit,
            post_caps: vec![],
        }
    }

    pub fn pre_cap(&self, cell: &CellName) -> Option<&CellCap> {
        self.pre_caps.iter().find(|c| &c.cell == cell)
    }

    pub fn post_cap(&self, cell: &CellName) -> Option<&CellCap> {
        self.post_caps.iter().find(|c| &c.cell == cell)
    }

    /// A linear precondition is handed back to the caller when a linear
    /// postcondition names the same cell. Every other linear or dynamic
    /// precondition moves ownership of the cell into the callee.
    pub fn restores(&self, cell: &CellName) -> bool {
        matches!(
            (self.pre_cap(cell), self.post_cap(cell)),
            (Some(pre), Some(post)) if pre.qual.is_linear() && post.qual.is_linear()
        )
    }

    pub fn is_entry_point(&self) -> bool {
        self.cell_vars.is_empty()
            && self.param_types.is_empty()
            && self.pre_caps.is_empty()
            && self.post_caps.is_empty()
            && self.return_type == Type::Unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Literal {
    Bool(bool),
    I32(i32),
    F32(f32),
}

impl Literal {
    pub fn ty(self) -> Type {
        match self {
            Literal::Bool(_) => Type::Bool,
            Literal::I32(_) => Type::I32,
            Literal::F32(_) => Type::F32,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::I32(i) => write!(f, "{i}"),
            Literal::F32(x) => write!(f, "{x:?}f"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Reg(RegName),
    Lit(Literal),
}

impl Operand {
    pub fn reg(name: &str) -> Operand {
        Operand::Reg(RegName::new(name))
    }

    pub fn as_reg(&self) -> Option<&RegName> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Lit(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Lit(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Alloc { dst: RegName, ty: Type, cell: CellName, region: Region },
    Store { value: Operand, target: Operand },
    Load { dst: RegName, source: Operand },
    /// `dst` is `None` for `_ = call ...`.
    Call { dst: Option<RegName>, callee: FuncName, args: Vec<Operand> },
    Free { target: Operand },
    If { cond: Operand, then_block: Block, else_block: Block },
    Assuming { target: RegName, ty: Type, body: Block },
    Return { value: Option<Operand> },
}

impl Instruction {
    /// The register this instruction defines, if any.
    pub fn defines(&self) -> Option<&RegName> {
        match self {
            Instruction::Alloc { dst, .. } | Instruction::Load { dst, .. } => Some(dst),
            Instruction::Call { dst, .. } => dst.as_ref(),
            _ => None,
        }
    }

    /// One-line rendering; nested blocks are elided.
    pub fn header(&self) -> String {
        match self {
            Instruction::Alloc { dst, ty, cell, region } => {
                let op = match region {
                    Region::Stack => "salloc",
                    Region::Heap => "halloc",
                };
                format!("{dst} = {op} {ty} at {cell}")
            }
            Instruction::Store { value, target } => format!("store {value}, {target}"),
            Instruction::Load { dst, source } => format!("{dst} = load {source}"),
            Instruction::Call { dst, callee, args } => {
                let mut s = match dst {
                    Some(d) => format!("{d} = call {callee}"),
                    None => format!("_ = call {callee}"),
                };
                for a in args {
                    s.push_str(", ");
                    s.push_str(&a.to_string());
                }
                s
            }
            Instruction::Free { target } => format!("free {target}"),
            Instruction::If { cond, .. } => format!("if {cond}"),
            Instruction::Assuming { target, ty, .. } => format!("assuming {target}: {ty}"),
            Instruction::Return { value: Some(v) } => format!("return {v}"),
            Instruction::Return { value: None } => "return".to_owned(),
        }
    }
}

/// An instruction with its source location. Equality ignores the span.
#[derive(Debug, Clone)]
pub struct Stmt {
    pub instr: Instruction,
    pub span: Span,
}

impl Stmt {
    pub fn new(instr: Instruction) -> Self {
        Stmt { instr, span: Span::default() }
    }

    pub fn at(instr: Instruction, span: Span) -> Self {
        Stmt { instr, span }
    }
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.instr == other.instr
    }
}

pub type Block = Vec<Stmt>;

#[derive(Debug, Clone)]
pub struct Function {
    pub name: FuncName,
    pub params: Vec<RegName>,
    pub sig: Signature,
    /// `None` for external declarations.
    pub body: Option<Block>,
    pub span: Span,
}

impl PartialEq for Function {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.params == other.params
            && self.sig == other.sig
            && self.body == other.body
    }
}

#[derive(Debug, Clone, Default)]
pub struct Module {
    /// Name of the source file, used in diagnostics only.
    pub file: String,
    pub functions: Vec<Function>,
}

impl PartialEq for Module {
    fn eq(&self, other: &Self) -> bool {
        self.functions == other.functions
    }
}

impl Module {
    pub fn function(&self, name: &FuncName) -> Option<&Function> {
        self.functions.iter().find(|f| &f.name == name)
    }

    /// Every statement of the module in pre-order, functions in declaration
    /// order. The position in this sequence is the statement's index.
    pub fn statements(&self) -> Vec<&Stmt> {
        fn walk<'a>(block: &'a [Stmt], out: &mut Vec<&'a Stmt>) {
            for s in block {
                out.push(s);
                match &s.instr {
                    Instruction::If { then_block, else_block, .. } => {
                        walk(then_block, out);
                        walk(else_block, out);
                    }
                    Instruction::Assuming { body, .. } => walk(body, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        for f in &self.functions {
            if let Some(body) = &f.body {
                walk(body, &mut out);
            }
        }
        out
    }
}
