//! Text format for Fuel IL (`.fuel` files): lexer, recursive-descent
//! parser, name resolution and a canonical pretty-printer.

mod lexer;
mod print;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use crate::diag::SourceSpan;
use crate::il::*;
use lexer::{lex, Tok, Token};

pub use print::{print_module, print_signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParseCode {
    LexError,
    SyntaxError,
    DuplicateName,
    UnboundName,
}

impl fmt::Display for ParseCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseDiagnostic {
    pub span: SourceSpan,
    pub message: String,
    pub code: ParseCode,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: error[{}]: {}", self.span, self.code, self.message)
    }
}

const KEYWORDS: &[&str] = &[
    "func", "forall", "exists", "store", "free", "if", "else", "assuming", "return", "salloc",
    "halloc", "at", "load", "call", "true", "false", "Bool", "I32", "F32", "Void", "Junk",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

struct Error {
    span: Span,
    code: ParseCode,
    message: String,
}

type PResult<T> = Result<T, Error>;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    errors: Vec<Error>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(Error { span: self.span(), code: ParseCode::SyntaxError, message: message.into() })
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            self.err(format!("expected {}, found {}", tok.describe(), self.peek().describe()))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<Span> {
        if self.is_word(w) {
            Ok(self.bump().span)
        } else {
            self.err(format!("expected `{w}`, found {}", self.peek().describe()))
        }
    }

    fn name(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            Tok::Ident(s) => self.err(format!("`{s}` is a keyword and cannot name a {what}")),
            other => self.err(format!("expected {what} name, found {}", other.describe())),
        }
    }

    fn module(&mut self) -> Vec<Function> {
        let mut functions = Vec::new();
        while *self.peek() != Tok::Eof {
            match self.function() {
                Ok(f) => functions.push(f),
                Err(e) => {
                    self.errors.push(e);
                    // Resynchronize at the next declaration.
                    self.bump();
                    while *self.peek() != Tok::Eof && !self.is_word("func") {
                        self.bump();
                    }
                }
            }
        }
        functions
    }

    fn function(&mut self) -> PResult<Function> {
        let start = self.expect_word("func")?;
        let name = FuncName(self.name("function")?);
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(RegName(self.name("parameter")?));
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Colon)?;
        let sig = self.signature()?;
        let mut end = self.prev_span();
        let body = if *self.peek() == Tok::LBrace {
            let b = self.block()?;
            end = self.prev_span();
            Some(b)
        } else {
            None
        };
        Ok(Function { name, params, sig, body, span: start.to(end) })
    }

    fn signature(&mut self) -> PResult<Signature> {
        let mut cell_vars = Vec::new();
        if self.is_word("forall") {
            self.bump();
            loop {
                cell_vars.push(CellName(self.name("cell variable")?));
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
            self.expect(Tok::Dot)?;
        }
        self.expect(Tok::LParen)?;
        let param_types = if *self.peek() == Tok::RParen { vec![] } else { self.types()? };
        self.expect(Tok::RParen)?;
        let pre_caps = self.opt_capset()?;
        self.expect(Tok::Arrow)?;
        let return_type = self.ty()?;
        let post_caps = self.opt_capset()?;
        Ok(Signature { cell_vars, param_types, pre_caps, return_type, post_caps })
    }

    fn opt_capset(&mut self) -> PResult<Vec<CellCap>> {
        if *self.peek() != Tok::Plus {
            return Ok(vec![]);
        }
        self.bump();
        self.expect(Tok::LBracket)?;
        let mut caps = vec![self.cap()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            caps.push(self.cap()?);
        }
        self.expect(Tok::RBracket)?;
        Ok(caps)
    }

    fn qualifier(&mut self) -> Option<Qualifier> {
        let q = match self.peek() {
            Tok::AtBrw => Qualifier::Borrowed,
            Tok::AtDyn => Qualifier::Dynamic,
            _ => return None,
        };
        self.bump();
        Some(q)
    }

    fn cap(&mut self) -> PResult<CellCap> {
        if let Some(qual) = self.qualifier() {
            // @q(name: type)
            self.expect(Tok::LParen)?;
            let cell = CellName(self.name("cell")?);
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            self.expect(Tok::RParen)?;
            return Ok(CellCap { cell, ty, qual });
        }
        let cell = CellName(self.name("cell")?);
        self.expect(Tok::Colon)?;
        if let Some(qual) = self.qualifier() {
            // name: @q(type)
            self.expect(Tok::LParen)?;
            let ty = self.ty()?;
            self.expect(Tok::RParen)?;
            return Ok(CellCap { cell, ty, qual });
        }
        let ty = self.ty()?;
        Ok(CellCap { cell, ty, qual: Qualifier::Linear })
    }

    fn types(&mut self) -> PResult<Vec<Type>> {
        let mut tys = vec![self.ty()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            tys.push(self.ty()?);
        }
        Ok(tys)
    }

    fn ty(&mut self) -> PResult<Type> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(Type::Addr(CellName(self.name("cell")?)))
            }
            Tok::LParen => {
                self.bump();
                if *self.peek() == Tok::RParen {
                    self.bump();
                    return Ok(Type::Unit);
                }
                let mut tys = self.types()?;
                self.expect(Tok::RParen)?;
                Ok(if tys.len() == 1 { tys.pop().unwrap() } else { Type::Tuple(tys) })
            }
            Tok::Ident(w) if w == "exists" => {
                self.bump();
                let binder = CellName(self.name("cell variable")?);
                self.expect(Tok::Dot)?;
                let body_span = self.span();
                let body = self.ty()?;
                if body != Type::Addr(binder.clone()) {
                    return Err(Error {
                        span: body_span.to(self.prev_span()),
                        code: ParseCode::SyntaxError,
                        message: format!(
                            "existential body must be `!{binder}`, found `{body}`"
                        ),
                    });
                }
                Ok(Type::ExistsAddr(binder))
            }
            Tok::Ident(w) if w == "Junk" => {
                self.bump();
                self.expect(Tok::Lt)?;
                let inner = self.ty()?;
                self.expect(Tok::Gt)?;
                Ok(Type::junk(inner))
            }
            Tok::Ident(w) => {
                let t = match w.to_ascii_lowercase().as_str() {
                    "bool" => Type::Bool,
                    "i32" => Type::I32,
                    "f32" => Type::F32,
                    "void" => Type::Unit,
                    _ => return self.err(format!("unknown type `{w}`")),
                };
                self.bump();
                Ok(t)
            }
            other => self.err(format!("expected a type, found {}", other.describe())),
        }
    }

    fn block(&mut self) -> PResult<Block> {
        self.expect(Tok::LBrace)?;
        let mut stmts: Block = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => return self.err("unclosed block, expected `}`"),
                _ => {}
            }
            if let Some(last) = stmts.last() {
                if matches!(last.instr, Instruction::Return { .. }) {
                    return self.err("unreachable statement after `return`");
                }
            }
            match self.stmt() {
                Ok(s) => stmts.push(s),
                Err(e) => {
                    let line = e.span.start.line;
                    self.errors.push(e);
                    self.resync(line);
                }
            }
        }
        Ok(stmts)
    }

    /// Skips to the first token on a later line than `line`, or to the `}`
    /// closing the current block.
    fn resync(&mut self, line: u32) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::RBrace if depth == 0 => return,
                Tok::RBrace => depth -= 1,
                Tok::LBrace => depth += 1,
                _ if depth == 0 && self.span().start.line > line => return,
                _ => {}
            }
            self.bump();
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        let op = match self.peek().clone() {
            Tok::Int(i) => Operand::Lit(Literal::I32(i)),
            Tok::Float(x) => Operand::Lit(Literal::F32(x)),
            Tok::Ident(w) if w == "true" => Operand::Lit(Literal::Bool(true)),
            Tok::Ident(w) if w == "false" => Operand::Lit(Literal::Bool(false)),
            Tok::Ident(w) if !is_keyword(&w) => Operand::Reg(RegName(w)),
            other => return self.err(format!("expected an operand, found {}", other.describe())),
        };
        self.bump();
        Ok(op)
    }

    fn starts_operand(&self) -> bool {
        match self.peek() {
            Tok::Int(_) | Tok::Float(_) => true,
            Tok::Ident(w) => w == "true" || w == "false" || !is_keyword(w),
            _ => false,
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let instr = match self.peek().clone() {
            Tok::Ident(w) if w == "store" => {
                self.bump();
                let value = self.operand()?;
                self.expect(Tok::Comma)?;
                let target = self.operand()?;
                Instruction::Store { value, target }
            }
            Tok::Ident(w) if w == "free" => {
                self.bump();
                Instruction::Free { target: self.operand()? }
            }
            Tok::Ident(w) if w == "if" => {
                self.bump();
                let cond = self.operand()?;
                let then_block = self.block()?;
                let else_block = if self.is_word("else") {
                    self.bump();
                    self.block()?
                } else {
                    vec![]
                };
                Instruction::If { cond, then_block, else_block }
            }
            Tok::Ident(w) if w == "assuming" => {
                self.bump();
                let target = RegName(self.name("register")?);
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                let body = self.block()?;
                Instruction::Assuming { target, ty, body }
            }
            Tok::Ident(w) if w == "return" => {
                self.bump();
                let value = if self.starts_operand() { Some(self.operand()?) } else { None };
                Instruction::Return { value }
            }
            Tok::Underscore => {
                self.bump();
                self.expect(Tok::Eq)?;
                if !self.is_word("call") {
                    return self.err("`_` can only discard the result of a `call`");
                }
                self.call(None)?
            }
            Tok::Ident(_) if *self.peek_at(1) == Tok::Eq => {
                let dst = RegName(self.name("register")?);
                self.expect(Tok::Eq)?;
                self.rhs(dst)?
            }
            other => return self.err(format!("expected a statement, found {}", other.describe())),
        };
        let span = match &instr {
            // Blocks end on a later line; the header alone locates the statement.
            Instruction::If { .. } | Instruction::Assuming { .. } => {
                Span::new(start.start, Pos { line: start.start.line, col: start.end.col })
            }
            _ => start.to(self.prev_span()),
        };
        Ok(Stmt::at(instr, span))
    }

    fn rhs(&mut self, dst: RegName) -> PResult<Instruction> {
        match self.peek().clone() {
            Tok::Ident(w) if w == "salloc" || w == "halloc" => {
                self.bump();
                let ty = self.ty()?;
                self.expect_word("at")?;
                let cell = CellName(self.name("cell")?);
                let region = if w == "salloc" { Region::Stack } else { Region::Heap };
                Ok(Instruction::Alloc { dst, ty, cell, region })
            }
            Tok::Ident(w) if w == "load" => {
                self.bump();
                Ok(Instruction::Load { dst, source: self.operand()? })
            }
            Tok::Ident(w) if w == "call" => self.call(Some(dst)),
            other => self.err(format!(
                "expected `salloc`, `halloc`, `load` or `call`, found {}",
                other.describe()
            )),
        }
    }

    fn call(&mut self, dst: Option<RegName>) -> PResult<Instruction> {
        self.expect_word("call")?;
        let callee = FuncName(self.name("function")?);
        let mut args = Vec::new();
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.operand()?);
        }
        Ok(Instruction::Call { dst, callee, args })
    }
}

/// Checks single assignment, unique cell names, and lexical scoping of
/// register uses.
struct Resolver<'a> {
    errors: &'a mut Vec<Error>,
    defined: HashSet<RegName>,
    cells: HashSet<CellName>,
    scopes: Vec<Vec<RegName>>,
}

impl Resolver<'_> {
    fn dup(&mut self, span: Span, message: String) {
        self.errors.push(Error { span, code: ParseCode::DuplicateName, message });
    }

    fn define(&mut self, r: &RegName, span: Span) {
        if !self.defined.insert(r.clone()) {
            self.dup(span, format!("register `{r}` is assigned more than once"));
        }
        self.scopes.last_mut().unwrap().push(r.clone());
    }

    fn use_reg(&mut self, r: &RegName, span: Span) {
        if !self.scopes.iter().any(|s| s.contains(r)) {
            self.errors.push(Error {
                span,
                code: ParseCode::UnboundName,
                message: format!("register `{r}` is not defined in this scope"),
            });
        }
    }

    fn use_op(&mut self, op: &Operand, span: Span) {
        if let Operand::Reg(r) = op {
            self.use_reg(r, span);
        }
    }

    fn block(&mut self, block: &[Stmt]) {
        self.scopes.push(vec![]);
        for s in block {
            let span = s.span;
            match &s.instr {
                Instruction::Alloc { dst, cell, .. } => {
                    if !self.cells.insert(cell.clone()) {
                        self.dup(span, format!("cell name `{cell}` is already in use"));
                    }
                    self.define(dst, span);
                }
                Instruction::Store { value, target } => {
                    self.use_op(value, span);
                    self.use_op(target, span);
                }
                Instruction::Load { dst, source } => {
                    self.use_op(source, span);
                    self.define(dst, span);
                }
                Instruction::Call { dst, args, .. } => {
                    for a in args {
                        self.use_op(a, span);
                    }
                    if let Some(d) = dst {
                        self.define(d, span);
                    }
                }
                Instruction::Free { target } => self.use_op(target, span),
                Instruction::If { cond, then_block, else_block } => {
                    self.use_op(cond, span);
                    self.block(then_block);
                    self.block(else_block);
                }
                Instruction::Assuming { target, body, .. } => {
                    self.use_reg(target, span);
                    self.block(body);
                }
                Instruction::Return { value } => {
                    if let Some(v) = value {
                        self.use_op(v, span);
                    }
                }
            }
        }
        self.scopes.pop();
    }
}

fn resolve(functions: &[Function], errors: &mut Vec<Error>) {
    let mut names = HashSet::new();
    for f in functions {
        if !names.insert(f.name.clone()) {
            errors.push(Error {
                span: f.span,
                code: ParseCode::DuplicateName,
                message: format!("function `{}` is declared more than once", f.name),
            });
        }
        let mut vars = BTreeSet::new();
        for v in &f.sig.cell_vars {
            if !vars.insert(v.clone()) {
                errors.push(Error {
                    span: f.span,
                    code: ParseCode::DuplicateName,
                    message: format!("cell variable `{v}` is quantified more than once"),
                });
            }
        }
        let mut r = Resolver {
            errors: &mut *errors,
            defined: HashSet::new(),
            cells: vars.into_iter().collect(),
            scopes: vec![vec![]],
        };
        for p in &f.params {
            r.define(p, f.span);
        }
        if let Some(body) = &f.body {
            r.block(body);
        }
    }
}

/// Parses a whole module. On failure every diagnostic found is returned,
/// ordered by position.
pub fn parse_module(text: &str, filename: &str) -> Result<Module, Vec<ParseDiagnostic>> {
    let (tokens, lex_errors) = lex(text);
    let mut errors: Vec<Error> = lex_errors
        .into_iter()
        .map(|e| Error { span: e.span, code: ParseCode::LexError, message: e.message })
        .collect();
    let mut p = Parser { tokens, pos: 0, errors: vec![] };
    let functions = p.module();
    errors.append(&mut p.errors);
    if errors.is_empty() {
        resolve(&functions, &mut errors);
    }
    if errors.is_empty() {
        return Ok(Module { file: filename.to_owned(), functions });
    }
    errors.sort_by_key(|e| e.span.start);
    Err(errors
        .into_iter()
        .map(|e| ParseDiagnostic {
            span: SourceSpan::new(filename, e.span),
            message: e.message,
            code: e.code,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1B: &str = "func main(): () -> () {
  breg = salloc Bool at m0
  ireg = salloc I32 at m1
  store true, breg
  bval = load breg
  if bval { store 2, ireg }
  else    { store 4, ireg }
}
";

    fn parse(s: &str) -> Module {
        parse_module(s, "t.fuel").unwrap_or_else(|e| panic!("{e:#?}"))
    }

    fn codes(s: &str) -> Vec<ParseCode> {
        parse_module(s, "t.fuel").unwrap_err().into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn branching_main_body() {
        let m = parse(FIG1B);
        let body = m.functions[0].body.as_ref().unwrap();
        assert_eq!(body.len(), 5);
        assert_eq!(m.statements().len(), 7);
        assert_eq!(
            body[0].instr,
            Instruction::Alloc {
                dst: "breg".into(),
                ty: Type::Bool,
                cell: "m0".into(),
                region: Region::Stack
            }
        );
        assert_eq!(body[0].span.start, Pos { line: 2, col: 3 });
    }

    #[test]
    fn minimal_module() {
        let m = parse("func main(): () -> () { return }");
        assert_eq!(m.functions.len(), 1);
        assert_eq!(m.functions[0].sig, Signature::unit());
        assert_eq!(m.functions[0].body, Some(vec![Stmt::new(Instruction::Return { value: None })]));
    }

    #[test]
    fn reassignment_is_duplicate() {
        let src = "func main(): () -> () {\nx = salloc Bool at m0\nx = load x\n}";
        assert_eq!(codes(src), vec![ParseCode::DuplicateName]);
        let err = parse_module(src, "t.fuel").unwrap_err();
        assert_eq!(err[0].span.start_line, 3);
    }

    #[test]
    fn duplicate_cell_and_function_names() {
        assert_eq!(
            codes("func main(): () -> () { x = salloc I32 at m0 y = salloc I32 at m0 }"),
            vec![ParseCode::DuplicateName]
        );
        assert_eq!(
            codes("func f(): () -> ()\nfunc f(): () -> ()"),
            vec![ParseCode::DuplicateName]
        );
        assert_eq!(
            codes("func f(x): forall a.(!a) -> () { y = salloc I32 at a }"),
            vec![ParseCode::DuplicateName]
        );
    }

    #[test]
    fn branch_registers_do_not_escape() {
        let src = "func main(): () -> () { if true { x = salloc I32 at m0 } store 1, x }";
        assert_eq!(codes(src), vec![ParseCode::UnboundName]);
        let src = "func main(): () -> () { if true { x = salloc I32 at m0 } else { x = salloc I32 at m1 } }";
        assert_eq!(codes(src), vec![ParseCode::DuplicateName]);
    }

    #[test]
    fn extern_signature_with_borrow() {
        let m = parse(
            "func libfoo_f(_0, _1):\n  ∀a,b.(!a,!b)+[a: I32, @brw(b: I32)]\n  -> I32+[a: I32]",
        );
        let f = &m.functions[0];
        assert!(f.body.is_none());
        assert_eq!(f.sig.cell_vars, vec![CellName::from("a"), CellName::from("b")]);
        assert_eq!(f.sig.pre_caps[1].qual, Qualifier::Borrowed);
        assert_eq!(f.sig.post_caps.len(), 1);
    }

    #[test]
    fn qualifier_spellings_agree() {
        let a = parse("func f(x, y): forall a,b.(!a,!b)+[a:@dyn(I32), b:@dyn(I32)] -> Void");
        let b = parse("func f(x, y): forall a,b.(!a,!b)+[@dyn(a: I32), @dyn(b: i32)] -> ()");
        assert_eq!(a, b);
    }

    #[test]
    fn lowercase_type_aliases() {
        let m = parse("func f(x): forall a.(!a)+[a: @dyn(I32)] -> () { assuming x: i32 { free x } }");
        let body = m.functions[0].body.as_ref().unwrap();
        assert!(matches!(&body[0].instr, Instruction::Assuming { ty: Type::I32, .. }));
    }

    #[test]
    fn existential_types() {
        let m = parse("func main(): () -> () { bar = salloc exists a.!a at m1 }");
        let body = m.functions[0].body.as_ref().unwrap();
        assert!(matches!(&body[0].instr, Instruction::Alloc { ty: Type::ExistsAddr(_), .. }));
        assert_eq!(
            codes("func main(): () -> () { bar = salloc exists a.I32 at m1 }"),
            vec![ParseCode::SyntaxError]
        );
    }

    #[test]
    fn missing_else_is_empty_block() {
        let m = parse("func main(): () -> () { if true { } }");
        let body = m.functions[0].body.as_ref().unwrap();
        assert!(matches!(&body[0].instr, Instruction::If { else_block, .. } if else_block.is_empty()));
    }

    #[test]
    fn discard_only_for_calls() {
        assert_eq!(
            codes("func main(): () -> () { _ = load x }"),
            vec![ParseCode::SyntaxError]
        );
    }

    #[test]
    fn statement_level_recovery_reports_each_error() {
        let src = "func main(): () -> () {\n  x = salloc Nope at m0\n  store , x\n  y = salloc I32 at m1\n}";
        let errs = parse_module(src, "t.fuel").unwrap_err();
        assert_eq!(errs.len(), 2);
        assert_eq!(errs[0].span.start_line, 2);
        assert_eq!(errs[1].span.start_line, 3);
    }

    #[test]
    fn return_must_end_block() {
        assert_eq!(
            codes("func main(): () -> () { return x = salloc I32 at m0 }"),
            vec![ParseCode::SyntaxError]
        );
    }

    #[test]
    fn lex_errors_are_reported() {
        assert_eq!(codes("func main(): () -> () { store 99999999999, x }")[0], ParseCode::LexError);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse("").functions.len(), 0);
        assert_eq!(parse("// just a comment\n").functions.len(), 0);
    }
}
