//! The flow-sensitive typing environment threaded through checking.
//!
//! Registers live in lexical scopes and never change type. Cells carry a
//! capability that is produced by allocation, strongly updated by stores,
//! consumed by frees and calls, and weakened to `@dyn` at call boundaries.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::il::{CellCap, CellName, CellVar, Qualifier, RegName, Region, Signature, Type};

/// What the environment knows about one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEntry {
    pub ty: Type,
    pub qual: Qualifier,
    pub region: Region,
    /// Block depth at which a local stack cell was allocated. `None` for
    /// heap cells and for cells that belong to a caller.
    pub scope: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CapError {
    #[error("register `{0}` is already bound")]
    Rebind(RegName),
    #[error("cell `{0}` already has a capability")]
    CellExists(CellName),
    #[error("no capability for cell `{0}`")]
    NoCap(CellName),
    #[error("the capability for cell `{0}` was already consumed")]
    Consumed(CellName),
    #[error("the capability for cell `{0}` is {1}, not linear")]
    NotLinear(CellName, Qualifier),
}

/// Branch environments disagree on a cell.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("branches disagree on the capability for cell `{cell}`")]
pub struct JoinError {
    pub cell: CellName,
}

/// The cells touched by one transition: capabilities removed and
/// capabilities (re)created.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CapDelta {
    pub consumed: Vec<CellName>,
    pub produced: Vec<(CellName, CellEntry)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypingEnv {
    reg_scopes: Vec<BTreeMap<RegName, Type>>,
    cells: BTreeMap<CellName, CellEntry>,
    /// Cells whose capability has been consumed at some point; used to
    /// tell use-after-consume apart from never-had-a-capability.
    retired: BTreeSet<CellName>,
}

impl Default for TypingEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl TypingEnv {
    pub fn new() -> Self {
        TypingEnv { reg_scopes: vec![BTreeMap::new()], cells: BTreeMap::new(), retired: BTreeSet::new() }
    }

    pub fn depth(&self) -> usize {
        self.reg_scopes.len() - 1
    }

    pub fn lookup(&self, r: &RegName) -> Option<&Type> {
        self.reg_scopes.iter().rev().find_map(|s| s.get(r))
    }

    pub fn bind_register(&mut self, r: RegName, t: Type) -> Result<(), CapError> {
        debug_assert!(!t.is_junk(), "registers never hold junk");
        if self.lookup(&r).is_some() {
            return Err(CapError::Rebind(r));
        }
        self.reg_scopes.last_mut().unwrap().insert(r, t);
        Ok(())
    }

    pub fn cell(&self, c: &CellName) -> Option<&CellEntry> {
        self.cells.get(c)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellName, &CellEntry)> {
        self.cells.iter()
    }

    pub fn was_consumed(&self, c: &CellName) -> bool {
        self.retired.contains(c)
    }

    /// The entry for `c`, or the reason it is missing.
    pub fn require(&self, c: &CellName) -> Result<&CellEntry, CapError> {
        match self.cells.get(c) {
            Some(e) => Ok(e),
            None if self.retired.contains(c) => Err(CapError::Consumed(c.clone())),
            None => Err(CapError::NoCap(c.clone())),
        }
    }

    fn require_linear(&self, c: &CellName) -> Result<&CellEntry, CapError> {
        let e = self.require(c)?;
        if !e.qual.is_linear() {
            return Err(CapError::NotLinear(c.clone(), e.qual));
        }
        Ok(e)
    }

    /// Allocates a fresh linear capability holding junk of type `t`.
    pub fn produce_cell(&mut self, c: CellName, t: Type, region: Region) -> Result<(), CapError> {
        let scope = match region {
            Region::Stack => Some(self.depth()),
            Region::Heap => None,
        };
        self.insert_cell(c, CellEntry { ty: Type::junk(t), qual: Qualifier::Linear, region, scope })
    }

    /// Installs an entry verbatim: capabilities handed over by a caller or
    /// restored by a callee.
    pub fn insert_cell(&mut self, c: CellName, entry: CellEntry) -> Result<(), CapError> {
        if self.cells.contains_key(&c) {
            return Err(CapError::CellExists(c));
        }
        self.retired.remove(&c);
        self.cells.insert(c, entry);
        Ok(())
    }

    pub fn strong_update(&mut self, c: &CellName, new_ty: Type) -> Result<(), CapError> {
        self.require_linear(c)?;
        self.cells.get_mut(c).unwrap().ty = new_ty.normalize();
        Ok(())
    }

    /// Removes a linear capability and returns what it was.
    pub fn consume_cell(&mut self, c: &CellName) -> Result<CellEntry, CapError> {
        self.require_linear(c)?;
        self.retired.insert(c.clone());
        Ok(self.cells.remove(c).unwrap())
    }

    pub fn weaken_to_dynamic(&mut self, c: &CellName) -> Result<(), CapError> {
        self.require_linear(c)?;
        self.cells.get_mut(c).unwrap().qual = Qualifier::Dynamic;
        Ok(())
    }

    /// Replaces an entry's qualifier regardless of its current one. Used by
    /// `assuming` to trade a dynamic capability back and forth.
    pub fn set_qualifier(&mut self, c: &CellName, qual: Qualifier) -> Result<(), CapError> {
        self.require(c)?;
        self.cells.get_mut(c).unwrap().qual = qual;
        Ok(())
    }

    pub fn set_type(&mut self, c: &CellName, ty: Type) -> Result<(), CapError> {
        self.require(c)?;
        self.cells.get_mut(c).unwrap().ty = ty.normalize();
        Ok(())
    }

    /// Removes an entry without the linearity check (postconditions hand
    /// back dynamic capabilities too).
    pub fn take_cell(&mut self, c: &CellName) -> Option<CellEntry> {
        let e = self.cells.remove(c)?;
        self.retired.insert(c.clone());
        Some(e)
    }

    pub fn push_scope(&mut self) {
        self.reg_scopes.push(BTreeMap::new());
    }

    /// Drops the innermost register scope and auto-consumes the stack cells
    /// allocated in it.
    pub fn pop_scope(&mut self) {
        let depth = self.depth();
        assert!(depth > 0, "cannot pop the function scope");
        self.reg_scopes.pop();
        let local: Vec<CellName> = self
            .cells
            .iter()
            .filter(|(_, e)| e.region == Region::Stack && e.scope == Some(depth))
            .map(|(c, _)| c.clone())
            .collect();
        for c in local {
            self.cells.remove(&c);
            self.retired.insert(c);
        }
    }

    /// Applies a transition summary. Consumption is checked; production
    /// requires the cell to be absent.
    pub fn apply(&mut self, delta: CapDelta) -> Result<(), CapError> {
        for c in &delta.consumed {
            self.consume_cell(c)?;
        }
        for (c, e) in delta.produced {
            self.insert_cell(c, e)?;
        }
        Ok(())
    }
}

/// Merges the environments at the end of the two arms of a conditional.
/// Both must descend from the same pre-branch environment, with their
/// branch scopes already popped. Cell capabilities must agree exactly.
pub fn join_envs(a: &TypingEnv, b: &TypingEnv) -> Result<TypingEnv, JoinError> {
    debug_assert_eq!(a.reg_scopes.len(), b.reg_scopes.len());
    let names: BTreeSet<&CellName> = a.cells.keys().chain(b.cells.keys()).collect();
    for c in names {
        match (a.cells.get(c), b.cells.get(c)) {
            (Some(x), Some(y)) if x.ty.same(&y.ty) && x.qual == y.qual && x.region == y.region && x.scope == y.scope => {}
            _ => return Err(JoinError { cell: c.clone() }),
        }
    }
    let mut out = a.clone();
    out.retired.extend(b.retired.iter().cloned());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnifyError {
    #[error("expected {expected} arguments, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("argument {index}: expected `{expected}`, found `{found}`")]
    TypeMismatch { index: usize, expected: Type, found: Type },
    #[error("cell variable `{0}` is not determined by the arguments")]
    UnboundVar(CellVar),
    #[error("cell variable `{0}` is bound to both `{1}` and `{2}`")]
    Conflict(CellVar, CellName, CellName),
}

/// Matches declared parameter types against argument types, binding the
/// signature's cell variables to concrete cells.
pub fn unify_params(
    sig: &Signature,
    arg_types: &[Type],
) -> Result<BTreeMap<CellVar, CellName>, UnifyError> {
    if sig.param_types.len() != arg_types.len() {
        return Err(UnifyError::ArityMismatch {
            expected: sig.param_types.len(),
            found: arg_types.len(),
        });
    }
    let vars: BTreeSet<&CellVar> = sig.cell_vars.iter().collect();
    let mut subst = BTreeMap::new();

    fn go(
        vars: &BTreeSet<&CellVar>,
        subst: &mut BTreeMap<CellVar, CellName>,
        param: &Type,
        arg: &Type,
    ) -> Result<bool, UnifyError> {
        Ok(match (param, arg) {
            (Type::Addr(v), Type::Addr(m)) if vars.contains(v) => match subst.get(v) {
                Some(prev) if prev != m => {
                    return Err(UnifyError::Conflict(v.clone(), prev.clone(), m.clone()))
                }
                _ => {
                    subst.insert(v.clone(), m.clone());
                    true
                }
            },
            (Type::Tuple(ps), Type::Tuple(as_)) if ps.len() == as_.len() => {
                for (p, a) in ps.iter().zip(as_) {
                    if !go(vars, subst, p, a)? {
                        return Ok(false);
                    }
                }
                true
            }
            (Type::Junk(p), Type::Junk(a)) => go(vars, subst, p, a)?,
            (p, a) => p.same(a),
        })
    }

    for (index, (p, a)) in sig.param_types.iter().zip(arg_types).enumerate() {
        if !go(&vars, &mut subst, p, a)? {
            return Err(UnifyError::TypeMismatch { index, expected: p.clone(), found: a.clone() });
        }
    }
    if let Some(v) = sig.cell_vars.iter().find(|v| !subst.contains_key(*v)) {
        return Err(UnifyError::UnboundVar(v.clone()));
    }
    Ok(subst)
}

/// Substitutes a signature capability into caller terms.
pub fn instantiate_cap(
    cap: &CellCap,
    subst: &BTreeMap<CellVar, CellName>,
) -> Result<CellCap, crate::il::TypeError> {
    let cell = subst
        .get(&cap.cell)
        .cloned()
        .ok_or_else(|| crate::il::TypeError::UnboundCellVar(cap.cell.clone()))?;
    Ok(CellCap { cell, ty: cap.ty.substitute(subst)?, qual: cap.qual })
}
