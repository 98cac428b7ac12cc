//! Random well-typed program generation.
//!
//! Programs are built forward, one typing rule at a time, against a model
//! of the capabilities each rule needs. Callees come from a fixed set of
//! helper templates; `main` is random.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::il::*;
use crate::parser::parse_module;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Heap,
    Branches,
    Calls,
    Borrows,
    Dynamics,
    Assuming,
}

impl Feature {
    pub const ALL: [Feature; 6] =
        [Feature::Heap, Feature::Branches, Feature::Calls, Feature::Borrows, Feature::Dynamics, Feature::Assuming];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Heap => "heap",
            Feature::Branches => "branches",
            Feature::Calls => "calls",
            Feature::Borrows => "borrows",
            Feature::Dynamics => "dynamics",
            Feature::Assuming => "assuming",
        }
    }

    /// Parses a comma-separated list; `all` and `none` are accepted.
    pub fn parse_list(s: &str) -> Result<BTreeSet<Feature>, String> {
        let mut out = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "all" => out.extend(Feature::ALL),
                "none" => {}
                p => {
                    out.insert(p.parse()?);
                }
            }
        }
        Ok(out)
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature `{s}` (expected one of heap, branches, calls, borrows, dynamics, assuming)"))
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Generation parameters. `dynamics` only takes effect together with
/// `heap`, and `assuming` only together with `dynamics`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    pub seed: u64,
    pub max_instrs: usize,
    pub max_cells: usize,
    pub max_call_depth: usize,
    pub max_branch_depth: usize,
    pub features: BTreeSet<Feature>,
}

impl GenConfig {
    pub fn new(seed: u64, features: impl IntoIterator<Item = Feature>) -> Self {
        GenConfig {
            seed,
            max_instrs: 40,
            max_cells: 6,
            max_call_depth: 2,
            max_branch_depth: 2,
            features: features.into_iter().collect(),
        }
    }

    pub fn all_features(seed: u64) -> Self {
        GenConfig::new(seed, Feature::ALL)
    }

    fn enabled(&self, f: Feature) -> bool {
        let has = |f| self.features.contains(&f);
        match f {
            Feature::Dynamics => has(Feature::Dynamics) && has(Feature::Heap),
            Feature::Assuming => has(Feature::Assuming) && has(Feature::Dynamics) && has(Feature::Heap),
            f => has(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Scalar {
    Bool,
    I32,
    F32,
}

impl Scalar {
    const ALL: [Scalar; 3] = [Scalar::Bool, Scalar::I32, Scalar::F32];

    fn ty(self) -> Type {
        match self {
            Scalar::Bool => Type::Bool,
            Scalar::I32 => Type::I32,
            Scalar::F32 => Type::F32,
        }
    }

    fn of(t: &Type) -> Option<Scalar> {
        match t {
            Type::Bool => Some(Scalar::Bool),
            Type::I32 => Some(Scalar::I32),
            Type::F32 => Some(Scalar::F32),
            _ => None,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Scalar::Bool => "bool",
            Scalar::I32 => "i32",
            Scalar::F32 => "f32",
        }
    }

    fn sample_literal(self) -> &'static str {
        match self {
            Scalar::Bool => "true",
            Scalar::I32 => "7",
            Scalar::F32 => "2.5f",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Helper {
    Read(Scalar),
    ReadVia(Scalar),
    AddInto,
    Bump,
    Init(Scalar),
    Sink(Scalar),
    Square,
    SquareTwice,
    DynFreeFirst,
    DynFreeSecond,
    DynBump,
}

impl Helper {
    fn name(self) -> String {
        match self {
            Helper::Read(s) => format!("read_{}", s.suffix()),
            Helper::ReadVia(s) => format!("read_via_{}", s.suffix()),
            Helper::AddInto => "add_into".into(),
            Helper::Bump => "bump".into(),
            Helper::Init(s) => format!("init_{}", s.suffix()),
            Helper::Sink(s) => format!("sink_{}", s.suffix()),
            Helper::Square => "square".into(),
            Helper::SquareTwice => "square_twice".into(),
            Helper::DynFreeFirst => "dyn_free_first".into(),
            Helper::DynFreeSecond => "dyn_free_second".into(),
            Helper::DynBump => "dyn_bump".into(),
        }
    }

    /// Helpers this one calls.
    fn deps(self) -> Vec<Helper> {
        match self {
            Helper::ReadVia(s) => vec![Helper::Read(s)],
            Helper::SquareTwice => vec![Helper::Square],
            _ => vec![],
        }
    }

    fn source(self) -> String {
        let name = self.name();
        match self {
            Helper::Read(s) => {
                let t = s.ty();
                format!("func {name}(p): forall a.(!a)+[@brw(a: {t})] -> {t} {{\n  v = load p\n  return v\n}}")
            }
            Helper::ReadVia(s) => {
                let t = s.ty();
                let inner = Helper::Read(s).name();
                format!("func {name}(p): forall a.(!a)+[@brw(a: {t})] -> {t} {{\n  v = call {inner}, p\n  return v\n}}")
            }
            Helper::AddInto => format!(
                "func {name}(p, q): forall a, b.(!a, !b)+[a: I32, @brw(b: I32)] -> I32+[a: I32] {{\n  x = load p\n  y = load q\n  s = call add, x, y\n  store s, p\n  return s\n}}"
            ),
            Helper::Bump => format!(
                "func {name}(p): forall a.(!a)+[a: I32] -> I32+[a: I32] {{\n  v = load p\n  w = call add, v, 1\n  store w, p\n  return w\n}}"
            ),
            Helper::Init(s) => {
                let t = s.ty();
                let lit = s.sample_literal();
                format!("func {name}(p): forall a.(!a)+[a: Junk<{t}>] -> ()+[a: {t}] {{\n  store {lit}, p\n}}")
            }
            Helper::Sink(s) => {
                let t = s.ty();
                format!("func {name}(p): forall a.(!a)+[a: {t}] -> () {{\n  v = load p\n  free p\n}}")
            }
            Helper::Square => format!("func {name}(x): (I32) -> I32 {{\n  y = call mul, x, x\n  return y\n}}"),
            Helper::SquareTwice => format!(
                "func {name}(x): (I32) -> I32 {{\n  y = call square, x\n  z = call square, y\n  return z\n}}"
            ),
            Helper::DynFreeFirst | Helper::DynFreeSecond => {
                let target = if self == Helper::DynFreeFirst { "x" } else { "y" };
                format!(
                    "func {name}(x, y): forall a, b.(!a, !b)+[@dyn(a: I32), @dyn(b: I32)] -> () {{\n  assuming {target}: I32 {{\n    free {target}\n  }}\n}}"
                )
            }
            Helper::DynBump => format!(
                "func {name}(x): forall a.(!a)+[@dyn(a: I32)] -> () {{\n  assuming x: I32 {{\n    v = load x\n    w = call add, v, 1\n    store w, x\n  }}\n}}"
            ),
        }
    }

    fn function(self) -> Function {
        let mut m = parse_module(&self.source(), "helper").expect("helper templates parse");
        m.functions.remove(0)
    }
}

#[derive(Debug, Clone)]
struct GCell {
    reg: RegName,
    /// Declared type without `Junk`.
    decl: Type,
    ty: Type,
    region: Region,
    dynamic: bool,
    depth: usize,
}

impl GCell {
    fn linear(&self) -> bool {
        !self.dynamic
    }

    fn initialized(&self) -> bool {
        !self.ty.is_junk()
    }

    fn scalar(&self) -> Option<Scalar> {
        Scalar::of(&self.decl)
    }
}

#[derive(Debug, Clone, Default)]
struct State {
    cells: BTreeMap<CellName, GCell>,
    vals: Vec<(RegName, Type, usize)>,
}

impl State {
    fn regs_of(&self, t: &Type) -> Vec<RegName> {
        self.vals.iter().filter(|(_, ty, _)| ty == t).map(|(r, ..)| r.clone()).collect()
    }

    fn pick_cells(&self, pred: impl Fn(&GCell) -> bool) -> Vec<CellName> {
        self.cells.iter().filter(|(_, c)| pred(c)).map(|(n, _)| n.clone()).collect()
    }

    fn leave_scope(&mut self, depth: usize) {
        self.vals.retain(|(_, _, d)| *d <= depth);
        self.cells.retain(|_, c| c.depth <= depth);
    }
}

struct Gen<'c> {
    cfg: &'c GenConfig,
    rng: ChaCha8Rng,
    next_reg: usize,
    next_cell: usize,
    emitted: usize,
    helpers: BTreeSet<Helper>,
}

fn st(i: Instruction) -> Stmt {
    Stmt::new(i)
}

impl<'c> Gen<'c> {
    fn fresh_reg(&mut self) -> RegName {
        self.next_reg += 1;
        RegName::new(format!("r{}", self.next_reg - 1))
    }

    fn fresh_cell(&mut self) -> CellName {
        self.next_cell += 1;
        CellName::new(format!("m{}", self.next_cell - 1))
    }

    fn on(&self, f: Feature) -> bool {
        self.cfg.enabled(f)
    }

    fn use_helper(&mut self, h: Helper) -> FuncName {
        for d in h.deps() {
            self.helpers.insert(d);
        }
        self.helpers.insert(h);
        FuncName::new(h.name())
    }

    fn budget_left(&self) -> bool {
        self.emitted < self.cfg.max_instrs
    }

    fn scalar_literal(&mut self, s: Scalar) -> Literal {
        match s {
            Scalar::Bool => Literal::Bool(self.rng.gen()),
            Scalar::I32 => Literal::I32(self.rng.gen_range(-100..=100)),
            Scalar::F32 => Literal::F32(self.rng.gen_range(-800..=800) as f32 / 8.0),
        }
    }

    /// A literal or an in-scope register of scalar type `s`.
    fn scalar_operand(&mut self, state: &State, s: Scalar) -> Operand {
        let regs = state.regs_of(&s.ty());
        if !regs.is_empty() && self.rng.gen_bool(0.5) {
            Operand::Reg(regs.choose(&mut self.rng).unwrap().clone())
        } else {
            Operand::Lit(self.scalar_literal(s))
        }
    }

    /// An operand to store into a cell declared with type `decl`, with its type.
    fn value_for(&mut self, state: &State, decl: &Type) -> Option<(Operand, Type)> {
        match Scalar::of(decl) {
            Some(s) => Some((self.scalar_operand(state, s), s.ty())),
            None => {
                let addrs: Vec<(RegName, Type)> = state
                    .vals
                    .iter()
                    .filter(|(_, t, _)| matches!(t, Type::Addr(_)))
                    .map(|(r, t, _)| (r.clone(), t.clone()))
                    .collect();
                let (r, t) = addrs.choose(&mut self.rng)?.clone();
                Some((Operand::Reg(r), t))
            }
        }
    }

    /// A register holding the address of `c`.
    fn addr_operand(&mut self, state: &State, c: &CellName) -> Operand {
        let mut regs = state.regs_of(&Type::Addr(c.clone()));
        if regs.is_empty() {
            regs.push(state.cells[c].reg.clone());
        }
        Operand::Reg(regs.choose(&mut self.rng).unwrap().clone())
    }

    fn alloc(&mut self, state: &mut State, depth: usize, decl: Type, region: Region) -> (Stmt, CellName) {
        let reg = self.fresh_reg();
        let cell = self.fresh_cell();
        state.cells.insert(
            cell.clone(),
            GCell { reg: reg.clone(), decl: decl.clone(), ty: Type::junk(decl.clone()), region, dynamic: false, depth },
        );
        state.vals.push((reg.clone(), Type::Addr(cell.clone()), depth));
        (st(Instruction::Alloc { dst: reg, ty: decl, cell: cell.clone(), region }), cell)
    }

    fn random_region(&mut self) -> Region {
        if self.on(Feature::Heap) && self.rng.gen_bool(0.4) {
            Region::Heap
        } else {
            Region::Stack
        }
    }

    fn act_alloc(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        if state.cells.len() >= self.cfg.max_cells {
            return None;
        }
        let decl = match self.rng.gen_range(0..4) {
            0 => Type::Bool,
            1 => Type::I32,
            2 => Type::F32,
            _ => Type::ExistsAddr(CellVar::new("a")),
        };
        let region = self.random_region();
        Some(vec![self.alloc(state, depth, decl, region).0])
    }

    /// Allocates and initializes a scalar cell.
    fn fresh_init_cell(&mut self, state: &mut State, depth: usize, s: Scalar, region: Region) -> Option<(Vec<Stmt>, CellName)> {
        if state.cells.len() >= self.cfg.max_cells {
            return None;
        }
        let (a, c) = self.alloc(state, depth, s.ty(), region);
        let lit = self.scalar_literal(s);
        let store = st(Instruction::Store { value: Operand::Lit(lit), target: Operand::Reg(state.cells[&c].reg.clone()) });
        state.cells.get_mut(&c).unwrap().ty = s.ty();
        Some((vec![a, store], c))
    }

    fn act_store(&mut self, state: &mut State) -> Option<Vec<Stmt>> {
        let cands = state.pick_cells(GCell::linear);
        let c = cands.choose(&mut self.rng)?.clone();
        let decl = state.cells[&c].decl.clone();
        let (value, ty) = self.value_for(state, &decl)?;
        let target = self.addr_operand(state, &c);
        state.cells.get_mut(&c).unwrap().ty = ty;
        Some(vec![st(Instruction::Store { value, target })])
    }

    fn act_load(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        let cands = state.pick_cells(|c| c.linear() && c.initialized());
        let c = cands.choose(&mut self.rng)?.clone();
        let source = self.addr_operand(state, &c);
        let dst = self.fresh_reg();
        state.vals.push((dst.clone(), state.cells[&c].ty.clone(), depth));
        Some(vec![st(Instruction::Load { dst, source })])
    }

    fn act_arith(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        let ops = ["add", "sub", "mul", "eq", "lt"];
        let op = *ops.choose(&mut self.rng).unwrap();
        let s = if self.rng.gen_bool(0.7) { Scalar::I32 } else { Scalar::F32 };
        let args = vec![self.scalar_operand(state, s), self.scalar_operand(state, s)];
        let dst = self.fresh_reg();
        let ty = if matches!(op, "eq" | "lt") { Type::Bool } else { s.ty() };
        state.vals.push((dst.clone(), ty, depth));
        Some(vec![st(Instruction::Call { dst: Some(dst), callee: FuncName::new(op), args })])
    }

    fn act_free(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        let cands = state.pick_cells(|c| c.linear() && c.region == Region::Heap && c.depth == depth);
        let c = cands.choose(&mut self.rng)?.clone();
        let target = self.addr_operand(state, &c);
        state.cells.remove(&c);
        Some(vec![st(Instruction::Free { target })])
    }

    fn call(&mut self, state: &mut State, depth: usize, h: Helper, args: Vec<Operand>, ret: Option<Type>) -> Stmt {
        let callee = self.use_helper(h);
        let dst = ret.map(|t| {
            let r = self.fresh_reg();
            state.vals.push((r.clone(), t, depth));
            r
        });
        st(Instruction::Call { dst, callee, args })
    }

    fn act_borrow(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        if self.rng.gen_bool(0.3) {
            let cands = state.pick_cells(|c| c.linear() && c.ty == Type::I32);
            if cands.len() >= 2 {
                let pick: Vec<CellName> = cands.choose_multiple(&mut self.rng, 2).cloned().collect();
                let args = vec![self.addr_operand(state, &pick[0]), self.addr_operand(state, &pick[1])];
                return Some(vec![self.call(state, depth, Helper::AddInto, args, Some(Type::I32))]);
            }
        }
        let cands = state.pick_cells(|c| c.linear() && c.initialized() && Scalar::of(&c.ty).is_some());
        let c = cands.choose(&mut self.rng)?.clone();
        let s = Scalar::of(&state.cells[&c].ty).unwrap();
        let h = if self.cfg.max_call_depth >= 2 && self.rng.gen_bool(0.3) { Helper::ReadVia(s) } else { Helper::Read(s) };
        let arg = self.addr_operand(state, &c);
        Some(vec![self.call(state, depth, h, vec![arg], Some(s.ty()))])
    }

    fn act_call(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        match self.rng.gen_range(0..4) {
            0 => {
                let cands = state.pick_cells(|c| c.linear() && c.ty == Type::I32);
                let c = cands.choose(&mut self.rng)?.clone();
                let arg = self.addr_operand(state, &c);
                Some(vec![self.call(state, depth, Helper::Bump, vec![arg], Some(Type::I32))])
            }
            1 => {
                let cands = state.pick_cells(|c| c.linear() && !c.initialized() && c.scalar().is_some());
                let c = cands.choose(&mut self.rng)?.clone();
                let s = state.cells[&c].scalar().unwrap();
                let arg = self.addr_operand(state, &c);
                state.cells.get_mut(&c).unwrap().ty = s.ty();
                Some(vec![self.call(state, depth, Helper::Init(s), vec![arg], None)])
            }
            2 if self.on(Feature::Heap) => {
                let cands = state.pick_cells(|c| {
                    c.linear() && c.region == Region::Heap && c.depth == depth && Scalar::of(&c.ty).is_some()
                });
                let c = cands.choose(&mut self.rng)?.clone();
                let s = Scalar::of(&state.cells[&c].ty).unwrap();
                let arg = self.addr_operand(state, &c);
                state.cells.remove(&c);
                Some(vec![self.call(state, depth, Helper::Sink(s), vec![arg], None)])
            }
            _ => {
                let arg = self.scalar_operand(state, Scalar::I32);
                let h = if self.cfg.max_call_depth >= 2 && self.rng.gen_bool(0.5) { Helper::SquareTwice } else { Helper::Square };
                Some(vec![self.call(state, depth, h, vec![arg], Some(Type::I32))])
            }
        }
    }

    /// Hands one or two heap `I32` cells to a helper taking dynamic
    /// capabilities, allocating them when none are available.
    fn act_dynamic(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        if depth != 0 {
            return None;
        }
        let h = *[Helper::DynFreeFirst, Helper::DynFreeSecond, Helper::DynBump].choose(&mut self.rng).unwrap();
        let arity = if h == Helper::DynBump { 1 } else { 2 };
        let mut out = vec![];
        let mut cands = state.pick_cells(|c| c.region == Region::Heap && c.ty == Type::I32 && c.depth == 0);
        cands.shuffle(&mut self.rng);
        cands.truncate(arity);
        while cands.len() < arity {
            let (stmts, c) = self.fresh_init_cell(state, depth, Scalar::I32, Region::Heap)?;
            out.extend(stmts);
            cands.push(c);
        }
        let args = cands.iter().map(|c| self.addr_operand(state, c)).collect();
        for c in &cands {
            state.cells.get_mut(c).unwrap().dynamic = true;
        }
        out.push(self.call(state, depth, h, args, None));
        Some(out)
    }

    fn act_assuming(&mut self, state: &mut State) -> Option<Vec<Stmt>> {
        let cands = state.pick_cells(|c| c.dynamic);
        let c = cands.choose(&mut self.rng)?.clone();
        let target = state.cells[&c].reg.clone();
        let r = Operand::Reg(target.clone());
        let body = match self.rng.gen_range(0..4) {
            0 => vec![st(Instruction::Free { target: r })],
            1 => {
                let v = self.fresh_reg();
                let w = self.fresh_reg();
                vec![
                    st(Instruction::Load { dst: v.clone(), source: r.clone() }),
                    st(Instruction::Call {
                        dst: Some(w.clone()),
                        callee: FuncName::new("mul"),
                        args: vec![Operand::Reg(v), Operand::Lit(Literal::I32(2))],
                    }),
                    st(Instruction::Store { value: Operand::Reg(w), target: r }),
                ]
            }
            2 => {
                let v = self.fresh_reg();
                vec![st(Instruction::Load { dst: v, source: r.clone() }), st(Instruction::Free { target: r })]
            }
            _ => vec![],
        };
        self.emitted += body.len();
        Some(vec![st(Instruction::Assuming { target, ty: Type::I32, body })])
    }

    fn act_if(&mut self, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        if depth >= self.cfg.max_branch_depth {
            return None;
        }
        let cond = self.scalar_operand(state, Scalar::Bool);
        let entry = state.clone();
        let (mut then_block, mut then_state) = self.branch(&entry, depth + 1);
        let (mut else_block, mut else_state) = self.branch(&entry, depth + 1);
        // Outer cells must end both arms with identical types.
        for (name, cell) in &entry.cells {
            let (a, b) = (&then_state.cells[name].ty, &else_state.cells[name].ty);
            if a == b {
                continue;
            }
            let (value, ty) = match cell.scalar() {
                Some(s) => {
                    let lit = self.scalar_literal(s);
                    (Operand::Lit(lit), s.ty())
                }
                None => (Operand::Reg(cell.reg.clone()), Type::Addr(name.clone())),
            };
            for (block, arm) in [(&mut then_block, &mut then_state), (&mut else_block, &mut else_state)] {
                block.push(st(Instruction::Store { value: value.clone(), target: Operand::Reg(cell.reg.clone()) }));
                arm.cells.get_mut(name).unwrap().ty = ty.clone();
                self.emitted += 1;
            }
        }
        for (block, arm) in [(&mut then_block, &mut then_state), (&mut else_block, &mut else_state)] {
            let local: Vec<CellName> = arm.pick_cells(|c| c.depth > depth && c.region == Region::Heap && c.linear());
            for c in local {
                block.push(st(Instruction::Free { target: Operand::Reg(arm.cells[&c].reg.clone()) }));
                self.emitted += 1;
            }
        }
        then_state.leave_scope(depth);
        *state = then_state;
        Some(vec![st(Instruction::If { cond, then_block, else_block })])
    }

    fn branch(&mut self, entry: &State, depth: usize) -> (Block, State) {
        let mut state = entry.clone();
        let mut block = vec![];
        let n = self.rng.gen_range(0..=4);
        for _ in 0..n {
            if !self.budget_left() {
                break;
            }
            let stmts = self.random_action(&mut state, depth);
            block.extend(stmts);
        }
        (block, state)
    }

    fn run_action(&mut self, which: u32, state: &mut State, depth: usize) -> Option<Vec<Stmt>> {
        let out = match which {
            0 => self.act_alloc(state, depth),
            1 => self.act_store(state),
            2 => self.act_load(state, depth),
            3 => self.act_arith(state, depth),
            4 if self.on(Feature::Heap) => self.act_free(state, depth),
            5 if self.on(Feature::Branches) => self.act_if(state, depth),
            6 if self.on(Feature::Calls) => self.act_call(state, depth),
            7 if self.on(Feature::Borrows) => self.act_borrow(state, depth),
            8 if self.on(Feature::Dynamics) => self.act_dynamic(state, depth),
            9 if self.on(Feature::Assuming) => self.act_assuming(state),
            _ => None,
        }?;
        // Nested statements were counted by the action itself.
        self.emitted += out.len();
        Some(out)
    }

    fn random_action(&mut self, state: &mut State, depth: usize) -> Vec<Stmt> {
        const WEIGHTS: [(u32, u32); 10] =
            [(0, 5), (1, 6), (2, 6), (3, 2), (4, 2), (5, 2), (6, 3), (7, 3), (8, 1), (9, 2)];
        for _ in 0..8 {
            let which = WEIGHTS.choose_weighted(&mut self.rng, |w| w.1).unwrap().0;
            if let Some(s) = self.run_action(which, state, depth) {
                return s;
            }
        }
        // Every state admits a fresh allocation or an arithmetic call.
        self.run_action(0, state, depth).or_else(|| self.run_action(3, state, depth)).unwrap_or_default()
    }

    /// One action per enabled feature, setting up what it needs.
    fn tour(&mut self, state: &mut State) -> Vec<Stmt> {
        let mut out = vec![];
        let mut push = |g: &mut Self, s: Option<Vec<Stmt>>| {
            if let Some(s) = s {
                g.emitted += s.len();
                out.extend(s);
            }
        };
        if self.on(Feature::Heap) {
            let s = self.fresh_init_cell(state, 0, Scalar::I32, Region::Heap).map(|(s, _)| s);
            push(self, s);
        }
        if self.on(Feature::Borrows) {
            if state.pick_cells(|c| c.linear() && c.initialized()).is_empty() {
                let s = self.fresh_init_cell(state, 0, Scalar::F32, Region::Stack).map(|(s, _)| s);
                push(self, s);
            }
            let s = self.act_borrow(state, 0);
            push(self, s);
        }
        if self.on(Feature::Calls) {
            let s = self.act_alloc_scalar_junk(state);
            push(self, s);
            if let Some(c) = state.pick_cells(|c| !c.initialized() && c.scalar().is_some()).first().cloned() {
                let s = state.cells[&c].scalar().unwrap();
                let arg = Operand::Reg(state.cells[&c].reg.clone());
                state.cells.get_mut(&c).unwrap().ty = s.ty();
                let call = self.call(state, 0, Helper::Init(s), vec![arg], None);
                push(self, Some(vec![call]));
            }
        }
        if self.on(Feature::Branches) {
            let s = self.act_if(state, 0);
            push(self, s);
        }
        if self.on(Feature::Dynamics) {
            let s = self.act_dynamic(state, 0);
            push(self, s);
        }
        if self.on(Feature::Assuming) {
            let s = self.act_assuming(state);
            push(self, s);
        }
        out
    }

    fn act_alloc_scalar_junk(&mut self, state: &mut State) -> Option<Vec<Stmt>> {
        if state.cells.len() >= self.cfg.max_cells {
            return None;
        }
        let s = *Scalar::ALL.choose(&mut self.rng).unwrap();
        let region = self.random_region();
        Some(vec![self.alloc(state, 0, s.ty(), region).0])
    }

    fn main(&mut self) -> Function {
        let mut state = State::default();
        let mut body = self.tour(&mut state);
        while self.budget_left() {
            let s = self.random_action(&mut state, 0);
            if s.is_empty() {
                break;
            }
            body.extend(s);
        }
        // Release what is still owned.
        for (_, c) in state.cells.iter().filter(|(_, c)| c.dynamic) {
            if self.rng.gen_bool(0.5) {
                let r = Operand::Reg(c.reg.clone());
                body.push(st(Instruction::Assuming {
                    target: c.reg.clone(),
                    ty: Type::I32,
                    body: vec![st(Instruction::Free { target: r })],
                }));
            }
        }
        for (_, c) in state.cells.iter().filter(|(_, c)| c.linear() && c.region == Region::Heap) {
            body.push(st(Instruction::Free { target: Operand::Reg(c.reg.clone()) }));
        }
        Function { name: FuncName::new("main"), params: vec![], sig: Signature::unit(), body: Some(body), span: Span::default() }
    }
}

/// Generates a module that the checker accepts. The result depends only on
/// `cfg`.
pub fn generate_program(cfg: &GenConfig) -> Module {
    let mut g = Gen {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        next_reg: 0,
        next_cell: 0,
        emitted: 0,
        helpers: BTreeSet::new(),
    };
    let main = g.main();
    let mut functions: Vec<Function> = g.helpers.iter().map(|h| h.function()).collect();
    functions.push(main);
    Module { file: format!("gen-{}.fuel", cfg.seed), functions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::check_module;
    use crate::parser::print_module;

    #[test]
    fn helper_templates_are_well_typed() {
        let all = [
            Helper::Read(Scalar::F32),
            Helper::ReadVia(Scalar::Bool),
            Helper::Read(Scalar::Bool),
            Helper::AddInto,
            Helper::Bump,
            Helper::Init(Scalar::I32),
            Helper::Sink(Scalar::F32),
            Helper::Square,
            Helper::SquareTwice,
            Helper::DynFreeFirst,
            Helper::DynFreeSecond,
            Helper::DynBump,
        ];
        let m = Module { file: "h".into(), functions: all.iter().map(|h| h.function()).collect() };
        assert_eq!(check_module(&m), Ok(()));
    }

    #[test]
    fn feature_lists() {
        assert_eq!(Feature::parse_list("heap, calls").unwrap(), BTreeSet::from([Feature::Heap, Feature::Calls]));
        assert_eq!(Feature::parse_list("all").unwrap().len(), 6);
        assert!(Feature::parse_list("none").unwrap().is_empty());
        assert!(Feature::parse_list("heap,loops").is_err());
    }

    #[test]
    fn straight_line_without_features() {
        let m = generate_program(&GenConfig::new(1, []));
        assert_eq!(m.functions.len(), 1);
        for s in m.statements() {
            match &s.instr {
                Instruction::Alloc { region, .. } => assert_eq!(*region, Region::Stack),
                Instruction::If { .. } | Instruction::Free { .. } | Instruction::Assuming { .. } => panic!("{:?}", s.instr),
                Instruction::Call { callee, .. } => assert!(crate::intrinsics::Intrinsic::from_name(callee.as_str()).is_some()),
                _ => {}
            }
        }
        assert_eq!(check_module(&m), Ok(()));
    }

    #[test]
    fn heap_programs_free_every_allocation() {
        let m = generate_program(&GenConfig::new(2, [Feature::Heap]));
        let halloc = m.statements().iter().filter(|s| matches!(s.instr, Instruction::Alloc { region: Region::Heap, .. })).count();
        let frees = m.statements().iter().filter(|s| matches!(s.instr, Instruction::Free { .. })).count();
        assert!(halloc > 0);
        assert_eq!(halloc, frees);
        assert_eq!(check_module(&m), Ok(()));
    }

    #[test]
    fn deterministic() {
        for seed in 0..20 {
            let cfg = GenConfig::all_features(seed);
            assert_eq!(print_module(&generate_program(&cfg)), print_module(&generate_program(&cfg)));
        }
    }

    #[test]
    fn generated_programs_check() {
        for seed in 0..300 {
            let m = generate_program(&GenConfig::all_features(seed));
            if let Err(d) = check_module(&m) {
                panic!("seed {seed}: {}\n{}", d[0], print_module(&m));
            }
        }
    }

    #[test]
    fn tour_covers_all_features() {
        let m = generate_program(&GenConfig::all_features(5));
        let text = print_module(&m);
        for needle in ["halloc", "if ", "call init_", "call read_", "@dyn", "assuming"] {
            assert!(text.contains(needle), "missing {needle}:\n{text}");
        }
    }
}
