//! Flow-sensitive capability checking.
//!
//! Each function is checked on its own against its signature. Quantified
//! cell variables of a definition are used directly as cell names. Within a
//! function, checking stops at the first error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::capenv::{instantiate_cap, join_envs, unify_params, CapError, CellEntry, TypingEnv, UnifyError};
use crate::diag::SourceSpan;
use crate::il::*;
use crate::intrinsics::Intrinsic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DiagCode {
    UseOfJunk,
    UseAfterConsume,
    NoCapability,
    LayoutMismatch,
    TypeMismatch,
    NotLinear,
    UnguardedDynamicUse,
    BranchCapabilityMismatch,
    MissingPostCapability,
    MemoryLeak,
    FreeOfStackCell,
    SignatureError,
    ReturnTypeMismatch,
    UnknownCallee,
    ArityMismatch,
    UnboundRegister,
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeDiagnostic {
    pub span: SourceSpan,
    pub code: DiagCode,
    pub function: FuncName,
    pub detail: String,
}

impl fmt::Display for TypeDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: error[{}]: {}", self.span, self.code, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("cell variable `{0}` is quantified twice")]
    DuplicateVar(CellVar),
    #[error("cell `{0}` is not quantified by the signature")]
    UnboundCell(CellName),
    #[error("cell variable `{0}` does not occur in the parameter types")]
    UnboundVar(CellVar),
    #[error("cell `{0}` has more than one {1}condition")]
    DuplicateCap(CellName, &'static str),
    #[error("postcondition on `{0}` has no matching precondition")]
    PostWithoutPre(CellName),
    #[error("borrowed capability on `{0}` cannot be returned")]
    BorrowReturned(CellName),
    #[error("capability on `{0}` is dynamic on entry and can only be returned as dynamic")]
    DynamicReturnedLinear(CellName),
    #[error("parameter or return type `{0}` cannot be junk")]
    JunkValue(Type),
    #[error("{regs} parameter registers for {types} parameter types")]
    ParamCount { regs: usize, types: usize },
}

/// Well-formedness of a signature on its own.
pub fn check_signature(sig: &Signature) -> Result<(), SignatureError> {
    let mut vars = BTreeSet::new();
    for v in &sig.cell_vars {
        if !vars.insert(v) {
            return Err(SignatureError::DuplicateVar(v.clone()));
        }
    }
    let mut named = BTreeSet::new();
    for t in sig.param_types.iter().chain([&sig.return_type]) {
        fn has_junk(t: &Type) -> bool {
            match t {
                Type::Junk(_) => true,
                Type::Tuple(es) => es.iter().any(has_junk),
                _ => false,
            }
        }
        if has_junk(t) {
            return Err(SignatureError::JunkValue(t.clone()));
        }
        t.free_cells(&mut named);
    }
    for cap in sig.pre_caps.iter().chain(&sig.post_caps) {
        named.insert(cap.cell.clone());
        cap.ty.free_cells(&mut named);
    }
    if let Some(c) = named.iter().find(|c| !vars.contains(c)) {
        return Err(SignatureError::UnboundCell(c.clone()));
    }
    let mut in_params = BTreeSet::new();
    sig.param_types.iter().for_each(|t| t.free_cells(&mut in_params));
    if let Some(v) = sig.cell_vars.iter().find(|v| !in_params.contains(*v)) {
        return Err(SignatureError::UnboundVar(v.clone()));
    }
    for (caps, which) in [(&sig.pre_caps, "pre"), (&sig.post_caps, "post")] {
        let mut seen = BTreeSet::new();
        for cap in caps {
            if !seen.insert(&cap.cell) {
                return Err(SignatureError::DuplicateCap(cap.cell.clone(), which));
            }
        }
    }
    for post in &sig.post_caps {
        let pre = sig.pre_cap(&post.cell).ok_or_else(|| SignatureError::PostWithoutPre(post.cell.clone()))?;
        if pre.qual == Qualifier::Borrowed || post.qual == Qualifier::Borrowed {
            return Err(SignatureError::BorrowReturned(post.cell.clone()));
        }
        if pre.qual == Qualifier::Dynamic && post.qual != Qualifier::Dynamic {
            return Err(SignatureError::DynamicReturnedLinear(post.cell.clone()));
        }
    }
    Ok(())
}

struct Diag {
    code: DiagCode,
    detail: String,
    span: Span,
}

type CResult<T> = Result<T, Diag>;

fn diag<T>(code: DiagCode, span: Span, detail: impl Into<String>) -> CResult<T> {
    Err(Diag { code, detail: detail.into(), span })
}

fn cap_diag(e: CapError, span: Span) -> Diag {
    let code = match &e {
        CapError::NoCap(_) => DiagCode::NoCapability,
        CapError::Consumed(_) => DiagCode::UseAfterConsume,
        CapError::NotLinear(_, Qualifier::Dynamic) => DiagCode::UnguardedDynamicUse,
        CapError::NotLinear(..) => DiagCode::NotLinear,
        CapError::Rebind(_) | CapError::CellExists(_) => DiagCode::TypeMismatch,
    };
    Diag { code, detail: e.to_string(), span }
}

/// Result of checking a statement or block.
#[derive(Debug, Clone, PartialEq)]
pub enum Flow {
    Continue,
    /// Control left the function through `return`.
    Returned,
}

/// Per-function checking context.
struct FnCtx<'m> {
    func: &'m Function,
    /// Cells whose dynamic capability is currently traded by an enclosing
    /// `assuming`.
    guards: Vec<CellName>,
}

pub struct Checker<'m> {
    module: &'m Module,
}

enum Callee<'m> {
    Defined(&'m Function),
    Intrinsic(Intrinsic),
}

impl<'m> Checker<'m> {
    pub fn new(module: &'m Module) -> Self {
        Checker { module }
    }

    fn to_diag(&self, func: &Function, d: Diag) -> TypeDiagnostic {
        TypeDiagnostic {
            span: SourceSpan::new(&self.module.file, d.span),
            code: d.code,
            function: func.name.clone(),
            detail: d.detail,
        }
    }

    pub fn check_module(&self) -> Result<(), Vec<TypeDiagnostic>> {
        let diags: Vec<TypeDiagnostic> =
            self.module.functions.iter().filter_map(|f| self.check_function(f).err()).collect();
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }

    fn signature_of(&self, f: &Function) -> CResult<()> {
        if f.params.len() != f.sig.param_types.len() {
            let e = SignatureError::ParamCount { regs: f.params.len(), types: f.sig.param_types.len() };
            return diag(DiagCode::SignatureError, f.span, e.to_string());
        }
        check_signature(&f.sig).or_else(|e| diag(DiagCode::SignatureError, f.span, e.to_string()))
    }

    /// The environment a function body starts in: parameters bound and
    /// preconditions installed, cell variables standing for themselves.
    pub fn entry_env(func: &Function) -> TypingEnv {
        let mut env = TypingEnv::new();
        for (r, t) in func.params.iter().zip(&func.sig.param_types) {
            let _ = env.bind_register(r.clone(), t.normalize());
        }
        for pre in &func.sig.pre_caps {
            let region = match pre.qual {
                Qualifier::Linear if func.sig.restores(&pre.cell) => Region::Stack,
                Qualifier::Borrowed => Region::Stack,
                _ => Region::Heap,
            };
            let entry = CellEntry { ty: pre.ty.normalize(), qual: pre.qual, region, scope: None };
            let _ = env.insert_cell(pre.cell.clone(), entry);
        }
        env
    }

    /// Checks one function. Declarations without a body only have their
    /// signature validated.
    pub fn check_function(&self, func: &Function) -> Result<(), TypeDiagnostic> {
        self.check_function_inner(func).map_err(|d| self.to_diag(func, d))
    }

    fn check_function_inner(&self, func: &'m Function) -> CResult<()> {
        self.signature_of(func)?;
        let Some(body) = &func.body else { return Ok(()) };
        let mut ctx = FnCtx { func, guards: vec![] };
        let mut env = Self::entry_env(func);
        if self.block(&mut ctx, &mut env, body)? == Flow::Continue {
            let end = func.span.end;
            let span = Span::new(Pos { line: end.line, col: end.col.saturating_sub(1).max(1) }, end);
            self.check_return(&ctx, &env, None, span)?;
        }
        Ok(())
    }

    /// Checks a single statement of `func` in `env`. Exposed for tests that
    /// step through straight-line code.
    pub fn step(&self, func: &'m Function, env: &mut TypingEnv, stmt: &'m Stmt) -> Result<Flow, TypeDiagnostic> {
        let mut ctx = FnCtx { func, guards: vec![] };
        self.stmt(&mut ctx, env, stmt).map_err(|d| self.to_diag(func, d))
    }

    fn block(&self, ctx: &mut FnCtx<'m>, env: &mut TypingEnv, block: &'m [Stmt]) -> CResult<Flow> {
        for s in block {
            if self.stmt(ctx, env, s)? == Flow::Returned {
                return Ok(Flow::Returned);
            }
        }
        Ok(Flow::Continue)
    }

    fn operand_type(&self, env: &TypingEnv, op: &Operand, span: Span) -> CResult<Type> {
        match op {
            Operand::Lit(l) => Ok(l.ty()),
            Operand::Reg(r) => match env.lookup(r) {
                Some(t) => Ok(t.clone()),
                None => diag(DiagCode::UnboundRegister, span, format!("register `{r}` is not bound")),
            },
        }
    }

    /// The cell an address operand designates.
    fn pointee(&self, env: &TypingEnv, op: &Operand, span: Span) -> CResult<CellName> {
        match self.operand_type(env, op, span)? {
            Type::Addr(c) => Ok(c),
            Type::ExistsAddr(_) => diag(
                DiagCode::NoCapability,
                span,
                format!("`{op}` is the address of an unknown cell and cannot be dereferenced"),
            ),
            t => diag(DiagCode::TypeMismatch, span, format!("`{op}` has type `{t}`, expected an address")),
        }
    }

    fn stmt(&self, ctx: &mut FnCtx<'m>, env: &mut TypingEnv, stmt: &'m Stmt) -> CResult<Flow> {
        let span = stmt.span;
        let cap = |e| cap_diag(e, span);
        match &stmt.instr {
            Instruction::Alloc { dst, ty, cell, region } => {
                if let Err(e) = ty.layout() {
                    return diag(DiagCode::LayoutMismatch, span, e.to_string());
                }
                env.produce_cell(cell.clone(), ty.normalize(), *region).map_err(cap)?;
                env.bind_register(dst.clone(), Type::Addr(cell.clone())).map_err(cap)?;
            }
            Instruction::Store { value, target } => {
                let c = self.pointee(env, target, span)?;
                let vt = self.operand_type(env, value, span)?;
                let entry = env.require(&c).map_err(cap)?;
                match entry.qual {
                    Qualifier::Linear => {}
                    Qualifier::Borrowed => {
                        return diag(DiagCode::NotLinear, span, format!("cannot store through the borrowed capability for `{c}`"))
                    }
                    Qualifier::Dynamic => {
                        return diag(
                            DiagCode::UnguardedDynamicUse,
                            span,
                            format!("store to `{c}` needs an `assuming` guard on its dynamic capability"),
                        )
                    }
                }
                let cell_layout = entry.ty.layout().ok();
                match vt.layout() {
                    Ok(l) if Some(l) == cell_layout => {}
                    _ => {
                        return diag(
                            DiagCode::LayoutMismatch,
                            span,
                            format!("cannot store a value of type `{vt}` into `{c}: {}`", entry.ty),
                        )
                    }
                }
                env.strong_update(&c, vt).map_err(cap)?;
            }
            Instruction::Load { dst, source } => {
                let c = self.pointee(env, source, span)?;
                let entry = env.require(&c).map_err(cap)?;
                if entry.qual == Qualifier::Dynamic {
                    return diag(
                        DiagCode::UnguardedDynamicUse,
                        span,
                        format!("load from `{c}` needs an `assuming` guard on its dynamic capability"),
                    );
                }
                if entry.ty.is_junk() {
                    return diag(
                        DiagCode::UseOfJunk,
                        span,
                        format!("cell `{c}` holds uninitialized `{}`", entry.ty),
                    );
                }
                let t = entry.ty.clone();
                env.bind_register(dst.clone(), t).map_err(cap)?;
            }
            Instruction::Free { target } => {
                let c = self.pointee(env, target, span)?;
                let entry = env.require(&c).map_err(cap)?;
                match entry.qual {
                    Qualifier::Linear => {}
                    Qualifier::Borrowed => {
                        return diag(DiagCode::NotLinear, span, format!("cannot free `{c}` through a borrowed capability"))
                    }
                    Qualifier::Dynamic => {
                        return diag(
                            DiagCode::UnguardedDynamicUse,
                            span,
                            format!("free of `{c}` needs an `assuming` guard on its dynamic capability"),
                        )
                    }
                }
                if entry.region == Region::Stack {
                    return diag(DiagCode::FreeOfStackCell, span, format!("cell `{c}` is not heap-allocated"));
                }
                env.consume_cell(&c).map_err(cap)?;
            }
            Instruction::Call { dst, callee, args } => {
                let ret = self.call(env, callee, args, span)?;
                if let Some(d) = dst {
                    env.bind_register(d.clone(), ret).map_err(cap)?;
                }
            }
            Instruction::If { cond, then_block, else_block } => {
                let ct = self.operand_type(env, cond, span)?;
                if ct != Type::Bool {
                    return diag(DiagCode::TypeMismatch, span, format!("condition has type `{ct}`, expected `Bool`"));
                }
                let mut arms = Vec::with_capacity(2);
                for b in [then_block, else_block] {
                    let mut arm = env.clone();
                    arm.push_scope();
                    if self.block(ctx, &mut arm, b)? == Flow::Continue {
                        arm.pop_scope();
                        arms.push(arm);
                    }
                }
                match arms.len() {
                    0 => return Ok(Flow::Returned),
                    1 => *env = arms.pop().unwrap(),
                    _ => {
                        *env = join_envs(&arms[0], &arms[1])
                            .or_else(|e| diag(DiagCode::BranchCapabilityMismatch, span, e.to_string()))?;
                    }
                }
            }
            Instruction::Assuming { target, ty, body } => self.assuming(ctx, env, target, ty, body, span)?,
            Instruction::Return { value } => {
                self.check_return(ctx, env, value.as_ref(), span)?;
                return Ok(Flow::Returned);
            }
        }
        Ok(Flow::Continue)
    }

    fn assuming(
        &self,
        ctx: &mut FnCtx<'m>,
        env: &mut TypingEnv,
        target: &RegName,
        ty: &Type,
        body: &'m [Stmt],
        span: Span,
    ) -> CResult<()> {
        let c = match self.operand_type(env, &Operand::Reg(target.clone()), span)? {
            Type::Addr(c) => c,
            t => {
                return diag(
                    DiagCode::TypeMismatch,
                    span,
                    format!("`assuming` needs the address of a known cell, `{target}` has type `{t}`"),
                )
            }
        };
        let entry = env.require(&c).map_err(|e| cap_diag(e, span))?.clone();
        if entry.qual != Qualifier::Dynamic {
            return diag(DiagCode::NoCapability, span, format!("no dynamic capability for `{c}` to trade"));
        }
        let ty = ty.normalize();
        if !entry.ty.same(&ty) {
            return diag(
                DiagCode::TypeMismatch,
                span,
                format!("dynamic capability for `{c}` has type `{}`, not `{ty}`", entry.ty),
            );
        }
        let mut inner = env.clone();
        inner.set_qualifier(&c, Qualifier::Linear).map_err(|e| cap_diag(e, span))?;
        inner.push_scope();
        ctx.guards.push(c.clone());
        let flow = self.block(ctx, &mut inner, body);
        ctx.guards.pop();
        if flow? == Flow::Returned {
            // Only the skip path continues.
            return Ok(());
        }
        inner.pop_scope();
        match inner.cell(&c).map(|e| e.qual) {
            Some(Qualifier::Linear) => inner.set_qualifier(&c, Qualifier::Dynamic).map_err(|e| cap_diag(e, span))?,
            Some(_) => {}
            None => inner
                .insert_cell(c.clone(), CellEntry { ty: ty.clone(), ..entry })
                .map_err(|e| cap_diag(e, span))?,
        }
        let names: BTreeSet<&CellName> =
            env.cells().map(|(n, _)| n).chain(inner.cells().map(|(n, _)| n)).collect();
        for n in names.into_iter().filter(|n| **n != c) {
            if env.cell(n) != inner.cell(n) {
                return diag(
                    DiagCode::BranchCapabilityMismatch,
                    span,
                    format!("`assuming` body changes the capability for `{n}`"),
                );
            }
        }
        *env = inner;
        Ok(())
    }

    fn resolve_callee(&self, name: &FuncName) -> Option<Callee<'m>> {
        match self.module.function(name) {
            Some(f) => Some(Callee::Defined(f)),
            None => Intrinsic::from_name(name.as_str()).map(Callee::Intrinsic),
        }
    }

    fn call(&self, env: &mut TypingEnv, callee: &FuncName, args: &[Operand], span: Span) -> CResult<Type> {
        let arg_types: Vec<Type> =
            args.iter().map(|a| self.operand_type(env, a, span)).collect::<CResult<_>>()?;
        let f = match self.resolve_callee(callee) {
            None => return diag(DiagCode::UnknownCallee, span, format!("no function named `{callee}`")),
            Some(Callee::Intrinsic(i)) => {
                if arg_types.len() != 2 {
                    return diag(
                        DiagCode::ArityMismatch,
                        span,
                        format!("`{}` takes 2 arguments, found {}", i.name(), arg_types.len()),
                    );
                }
                return match i.result_type(&arg_types[0]) {
                    Some(t) if arg_types[0] == arg_types[1] => Ok(t),
                    _ => diag(
                        DiagCode::TypeMismatch,
                        span,
                        format!(
                            "`{}` expects two `I32` or two `F32` operands, found `{}` and `{}`",
                            i.name(),
                            arg_types[0],
                            arg_types[1]
                        ),
                    ),
                };
            }
            Some(Callee::Defined(f)) => f,
        };
        let sig = &f.sig;
        let subst = unify_params(sig, &arg_types).or_else(|e| {
            let code = match e {
                UnifyError::ArityMismatch { .. } => DiagCode::ArityMismatch,
                UnifyError::TypeMismatch { .. } | UnifyError::Conflict(..) => DiagCode::TypeMismatch,
                UnifyError::UnboundVar(_) => DiagCode::SignatureError,
            };
            diag(code, span, format!("call to `{callee}`: {e}"))
        })?;
        let inst = |cap: &CellCap| {
            instantiate_cap(cap, &subst).or_else(|e| diag(DiagCode::SignatureError, span, e.to_string()))
        };

        let mut saved: BTreeMap<CellName, CellEntry> = BTreeMap::new();
        for pre in &sig.pre_caps {
            let want = inst(pre)?;
            let c = &want.cell;
            let have = env.require(c).map_err(|e| cap_diag(e, span))?.clone();
            match (pre.qual, have.qual) {
                (_, Qualifier::Dynamic) if pre.qual != Qualifier::Dynamic => {
                    return diag(
                        DiagCode::UnguardedDynamicUse,
                        span,
                        format!("`{callee}` needs a static capability for `{c}`, which is dynamic"),
                    )
                }
                (Qualifier::Linear | Qualifier::Dynamic, Qualifier::Borrowed) => {
                    return diag(
                        DiagCode::NotLinear,
                        span,
                        format!("`{callee}` needs an owned capability for `{c}`, which is borrowed"),
                    )
                }
                _ => {}
            }
            if !have.ty.same(&want.ty) {
                let code = if have.ty.is_junk() && !want.ty.is_junk() {
                    DiagCode::UseOfJunk
                } else {
                    DiagCode::TypeMismatch
                };
                return diag(
                    code,
                    span,
                    format!("`{callee}` expects `{c}: {}`, found `{c}: {}`", want.ty, have.ty),
                );
            }
            let transfers = match pre.qual {
                Qualifier::Linear => !sig.restores(&pre.cell),
                Qualifier::Dynamic => have.qual == Qualifier::Linear,
                Qualifier::Borrowed => false,
            };
            if transfers && have.region == Region::Stack {
                return diag(
                    DiagCode::FreeOfStackCell,
                    span,
                    format!("`{callee}` takes ownership of `{c}`, which is a stack cell"),
                );
            }
            match pre.qual {
                Qualifier::Linear => {
                    let e = env.consume_cell(c).map_err(|e| cap_diag(e, span))?;
                    saved.insert(c.clone(), e);
                }
                Qualifier::Dynamic if have.qual == Qualifier::Linear => {
                    env.weaken_to_dynamic(c).map_err(|e| cap_diag(e, span))?;
                }
                _ => {}
            }
        }
        for post in &sig.post_caps {
            let cap = inst(post)?;
            if post.qual == Qualifier::Dynamic && env.cell(&cap.cell).is_some() {
                continue;
            }
            let Some(prev) = saved.get(&cap.cell) else {
                return diag(
                    DiagCode::MissingPostCapability,
                    span,
                    format!("`{callee}` returns a capability for `{}` it was not given", cap.cell),
                );
            };
            let entry = CellEntry { ty: cap.ty.normalize(), qual: cap.qual, ..prev.clone() };
            env.insert_cell(cap.cell.clone(), entry).map_err(|e| cap_diag(e, span))?;
        }
        sig.return_type
            .substitute(&subst)
            .map(|t| t.normalize())
            .or_else(|e| diag(DiagCode::SignatureError, span, e.to_string()))
    }

    fn check_return(&self, ctx: &FnCtx<'m>, env: &TypingEnv, value: Option<&Operand>, span: Span) -> CResult<()> {
        let sig = &ctx.func.sig;
        let mut env = env.clone();
        for g in &ctx.guards {
            if env.cell(g).is_some_and(|e| e.qual.is_linear()) {
                env.set_qualifier(g, Qualifier::Dynamic).map_err(|e| cap_diag(e, span))?;
            }
        }
        let vt = match value {
            Some(v) => self.operand_type(&env, v, span)?,
            None => Type::Unit,
        };
        if !vt.same(&sig.return_type) {
            return diag(
                DiagCode::ReturnTypeMismatch,
                span,
                format!("returns `{vt}`, but the signature promises `{}`", sig.return_type),
            );
        }
        for post in &sig.post_caps {
            let missing = |why: String| diag(DiagCode::MissingPostCapability, span, why);
            let Some(e) = env.cell(&post.cell) else {
                return missing(format!("capability `{post}` is not available at return"));
            };
            if !e.ty.same(&post.ty) {
                return missing(format!("`{}` has type `{}` at return, expected `{}`", post.cell, e.ty, post.ty));
            }
            let ok = match post.qual {
                Qualifier::Linear => e.qual == Qualifier::Linear,
                Qualifier::Dynamic => matches!(e.qual, Qualifier::Linear | Qualifier::Dynamic),
                Qualifier::Borrowed => false,
            };
            if !ok {
                return missing(format!("capability for `{}` is {} at return, expected `{post}`", post.cell, e.qual));
            }
            env.take_cell(&post.cell);
        }
        if let Some((c, _)) = env.cells().find(|(_, e)| e.qual.is_linear() && e.region == Region::Heap) {
            return diag(DiagCode::MemoryLeak, span, format!("heap cell `{c}` is still owned when `{}` returns", ctx.func.name));
        }
        Ok(())
    }
}

/// Checks every function of `m` and returns all diagnostics.
pub fn check_module(m: &Module) -> Result<(), Vec<TypeDiagnostic>> {
    Checker::new(m).check_module()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_module;

    fn check(src: &str) -> Result<(), Vec<TypeDiagnostic>> {
        let m = parse_module(src, "t.fuel").unwrap_or_else(|e| panic!("{e:#?}"));
        check_module(&m)
    }

    fn code(src: &str) -> DiagCode {
        let d = check(src).expect_err("expected a type error");
        d[0].code
    }

    fn main(body: &str) -> String {
        format!("func main(): () -> () {{\n{body}\n}}\n")
    }

    #[test]
    fn initialization_tracking() {
        let ok = main("breg = salloc Bool at m0\nstore true, breg\nb = load breg");
        assert_eq!(check(&ok), Ok(()));
        assert_eq!(code(&main("breg = salloc Bool at m0\nb = load breg")), DiagCode::UseOfJunk);
    }

    #[test]
    fn layout_must_match() {
        assert_eq!(code(&main("x = salloc Bool at m0\nstore 1, x")), DiagCode::LayoutMismatch);
        assert_eq!(code(&main("x = salloc I32 at m0\nstore 1.0f, x")), DiagCode::LayoutMismatch);
        let addr = main("x = salloc I32 at m0\np = salloc exists a.!a at m1\nstore x, p\nstore p, p");
        assert_eq!(check(&addr), Ok(()));
        assert_eq!(code(&main("x = salloc I32 at m0\np = salloc exists a.!a at m1\nstore 1, p")), DiagCode::LayoutMismatch);
    }

    #[test]
    fn heap_lifecycle() {
        assert_eq!(check(&main("x = halloc I32 at m0\nfree x")), Ok(()));
        assert_eq!(code(&main("x = halloc I32 at m0")), DiagCode::MemoryLeak);
        assert_eq!(code(&main("x = halloc I32 at m0\nfree x\nfree x")), DiagCode::UseAfterConsume);
        assert_eq!(code(&main("x = halloc I32 at m0\nfree x\ny = load x")), DiagCode::UseAfterConsume);
        assert_eq!(code(&main("x = salloc I32 at m0\nfree x")), DiagCode::FreeOfStackCell);
    }

    #[test]
    fn dereferencing_non_addresses() {
        assert_eq!(code(&main("y = load 3")), DiagCode::TypeMismatch);
        assert_eq!(code(&main("x = salloc I32 at m0\nstore 1, x\ny = load x\nz = load y")), DiagCode::TypeMismatch);
    }

    #[test]
    fn branches_must_agree() {
        let ok = main("x = salloc I32 at m0\nif true { store 1, x } else { store 2, x }\ny = load x");
        assert_eq!(check(&ok), Ok(()));
        let bad = main("x = salloc I32 at m0\nif true { store 1, x }\ny = load x");
        assert_eq!(code(&bad), DiagCode::BranchCapabilityMismatch);
        let cond = main("if 1 { }");
        assert_eq!(code(&cond), DiagCode::TypeMismatch);
        // Branch-local stack cells die with the branch.
        let local = main("if true { x = salloc I32 at m0\nstore 1, x }");
        assert_eq!(check(&local), Ok(()));
        // A branch that returns does not constrain the join.
        let early = main("x = halloc I32 at m0\nif true { free x\nreturn } else { }\nfree x");
        assert_eq!(check(&early), Ok(()));
    }

    const FIG4: &str = "func libfoo_f(_0, _1):
  forall a,b.(!a,!b)+[a: I32, @brw(b: I32)]
  -> I32+[a: I32]

func main(): () -> () {
  a = salloc I32 at m0
  store 1, a
  b = salloc I32 at m1
  store 42, b
  v = call libfoo_f, a, b
  store v, a
}
";

    #[test]
    fn borrowing_across_calls() {
        assert_eq!(check(FIG4), Ok(()));
        // Aliased arguments: the linear precondition consumes the borrow's cell.
        let alias = FIG4.replace("call libfoo_f, a, b", "call libfoo_f, a, a");
        assert_eq!(code(&alias), DiagCode::UseAfterConsume);
        let junk = FIG4.replace("  store 42, b\n", "");
        assert_eq!(code(&junk), DiagCode::UseOfJunk);
        let arity = FIG4.replace("call libfoo_f, a, b", "call libfoo_f, a");
        assert_eq!(code(&arity), DiagCode::ArityMismatch);
        let unknown = FIG4.replace("call libfoo_f, a, b", "call nope, a");
        assert_eq!(code(&unknown), DiagCode::UnknownCallee);
        let lit = FIG4.replace("call libfoo_f, a, b", "call libfoo_f, 1, b");
        assert_eq!(code(&lit), DiagCode::TypeMismatch);
    }

    #[test]
    fn callee_bodies_are_checked_against_signature() {
        let ok = "func f(p, q): forall a,b.(!a,!b)+[a: I32, @brw(b: I32)] -> I32+[a: I32] {
  x = load q
  store x, p
  return x
}";
        assert_eq!(check(ok), Ok(()));
        let write_borrow = ok.replace("store x, p", "store x, q");
        assert_eq!(code(&write_borrow), DiagCode::NotLinear);
        let bad_ret = ok.replace("return x", "return p");
        assert_eq!(code(&bad_ret), DiagCode::ReturnTypeMismatch);
        let out_param = "func init(p): forall a.(!a)+[a: Junk<I32>] -> ()+[a: I32] {\n}";
        assert_eq!(code(out_param), DiagCode::MissingPostCapability);
        let out_param = "func init(p): forall a.(!a)+[a: Junk<I32>] -> ()+[a: I32] {\n store 3, p\n}";
        assert_eq!(check(out_param), Ok(()));
        // Restored cells cannot be freed or handed over for good.
        let free_restored = "func f(p): forall a.(!a)+[a: I32] -> ()+[a: I32] { free p }";
        assert_eq!(code(free_restored), DiagCode::FreeOfStackCell);
    }

    #[test]
    fn ownership_transfer_needs_heap() {
        let consume = "func sink(p): forall a.(!a)+[a: I32] -> () { free p }\n";
        let ok = format!("{consume}{}", main("x = halloc I32 at m0\nstore 1, x\n_ = call sink, x"));
        assert_eq!(check(&ok), Ok(()));
        let stack = format!("{consume}{}", main("x = salloc I32 at m0\nstore 1, x\n_ = call sink, x"));
        assert_eq!(code(&stack), DiagCode::FreeOfStackCell);
        let leaky_sink = "func sink(p): forall a.(!a)+[a: I32] -> () { }";
        assert_eq!(code(leaky_sink), DiagCode::MemoryLeak);
    }

    const FIG5: &str = "func free_one(x, y):
  forall a,b.(!a,!b)+[a:@dyn(I32), b:@dyn(I32)] -> Void {
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
}
";

    #[test]
    fn dynamic_capabilities() {
        assert_eq!(check(FIG5), Ok(()));
        let no_guards = FIG5
            .replace("  assuming i: i32 { free i }\n", "")
            .replace("  assuming j: i32 { free j }\n", "");
        assert_eq!(check(&no_guards), Ok(()));
        let unguarded = FIG5.replace("assuming i: i32 { free i }", "free i");
        assert_eq!(code(&unguarded), DiagCode::UnguardedDynamicUse);
        let load = FIG5.replace("assuming i: i32 { free i }", "v = load i");
        assert_eq!(code(&load), DiagCode::UnguardedDynamicUse);
        let wrong_ty = FIG5.replace("assuming i: i32", "assuming i: F32");
        assert_eq!(code(&wrong_ty), DiagCode::TypeMismatch);
        let double = FIG5.replace("{ free i }", "{ free i\nfree i }");
        assert_eq!(code(&double), DiagCode::UseAfterConsume);
        let stack = FIG5.replace("i = halloc I32 at m0", "i = salloc I32 at m0");
        assert_eq!(code(&stack), DiagCode::FreeOfStackCell);
        let linear = "func main(): () -> () {\n i = halloc I32 at m0\n store 1, i\n assuming i: I32 { }\n free i\n}";
        assert_eq!(code(linear), DiagCode::NoCapability);
    }

    #[test]
    fn assuming_keeps_dynamic_capability() {
        let m = parse_module(FIG5, "t.fuel").unwrap();
        let main_fn = m.function(&"main".into()).unwrap();
        let checker = Checker::new(&m);
        let mut env = Checker::entry_env(main_fn);
        let body = main_fn.body.as_ref().unwrap();
        for s in &body[..6] {
            checker.step(main_fn, &mut env, s).unwrap();
        }
        let e = env.cell(&"m0".into()).unwrap();
        assert_eq!((&e.ty, e.qual), (&Type::I32, Qualifier::Dynamic));
        assert!(env.cell(&"m1".into()).is_some_and(|e| e.qual == Qualifier::Dynamic));
    }

    #[test]
    fn assuming_body_must_not_disturb_other_cells() {
        let src = FIG5.replace("assuming i: i32 { free i }", "k = salloc I32 at m2\nassuming i: i32 { store 5, k\nfree i }");
        assert_eq!(code(&src), DiagCode::BranchCapabilityMismatch);
        let local = FIG5.replace("{ free i }", "{ k = salloc I32 at m2\nstore 5, k\nfree i }");
        assert_eq!(check(&local), Ok(()));
    }

    #[test]
    fn existential_addresses_are_opaque() {
        let src = "func f(p): (exists a.!a) -> () { x = load p }";
        assert_eq!(code(src), DiagCode::NoCapability);
        let src = "func f(p): (exists a.!a) -> () { assuming p: I32 { } }";
        assert_eq!(code(src), DiagCode::TypeMismatch);
    }

    #[test]
    fn signatures() {
        let bad_post = "func f(p): forall a.(!a) -> ()+[a: I32]";
        assert_eq!(code(bad_post), DiagCode::SignatureError);
        let unused = "func f(): forall a.() -> ()";
        assert_eq!(code(unused), DiagCode::SignatureError);
        let brw = "func f(p): forall a.(!a)+[@brw(a: I32)] -> ()+[a: I32]";
        assert_eq!(code(brw), DiagCode::SignatureError);
        let regs = "func f(p, q): forall a.(!a) -> ()";
        assert_eq!(code(regs), DiagCode::SignatureError);
        let fig4 = "func libfoo_f(_0, _1): forall a,b.(!a,!b)+[a: I32, @brw(b: I32)] -> I32+[a: I32]";
        assert_eq!(check(fig4), Ok(()));
    }

    #[test]
    fn intrinsics() {
        let ok = main("x = call add, 1, 2\ny = call lt, 1.0f, 2.0f\nif y { }");
        assert_eq!(check(&ok), Ok(()));
        assert_eq!(code(&main("x = call add, 1, 2.0f")), DiagCode::TypeMismatch);
        assert_eq!(code(&main("x = call add, true, true")), DiagCode::TypeMismatch);
        assert_eq!(code(&main("x = call mul, 1")), DiagCode::ArityMismatch);
    }

    #[test]
    fn return_inside_assuming_restores_dynamic() {
        let src = "func g(x): forall a.(!a)+[a: @dyn(I32)] -> () {\n assuming x: I32 { return }\n}";
        assert_eq!(check(src), Ok(()));
        let src = "func g(x): forall a.(!a)+[a: @dyn(I32)] -> () {\n assuming x: I32 { free x\nreturn }\n}";
        assert_eq!(check(src), Ok(()));
    }

    #[test]
    fn diagnostics_from_every_function() {
        let src = "func f(): () -> () { x = halloc I32 at m0 }\nfunc g(): () -> () { y = halloc I32 at m1 }";
        let d = check(src).unwrap_err();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].function, FuncName::from("f"));
        assert_eq!(d[1].function, FuncName::from("g"));
    }
}
