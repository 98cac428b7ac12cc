use fuel_core::il::{Instruction, Operand, RegName, Stmt};
use fuel_core::interp::{run_module, FaultKind, RunOptions, RuntimeValue};
use fuel_core::{check_module, parse_module, DiagCode, Module};

fn parse(src: &str) -> Module {
    parse_module(src, "t.fuel").unwrap_or_else(|d| panic!("{}", d[0]))
}

fn code(src: &str) -> Option<DiagCode> {
    check_module(&parse(src)).err().map(|d| d[0].code)
}

fn unchecked(src: &str) -> Option<FaultKind> {
    let opts = RunOptions { unchecked: true, ..RunOptions::default() };
    run_module(&parse(src), &"main".into(), opts).unwrap().fault().map(|f| f.kind)
}

fn main_body(body: &str) -> String {
    format!("func main(): () -> () {{\n{body}\n}}\n")
}

#[test]
fn every_diagnostic_code_is_reachable() {
    let cases: &[(&str, DiagCode)] = &[
        (&main_body("x = salloc I32 at m0\ny = load x"), DiagCode::UseOfJunk),
        (&main_body("x = halloc I32 at m0\nfree x\nfree x"), DiagCode::UseAfterConsume),
        (&main_body("x = salloc Bool at m0\nstore 1, x"), DiagCode::LayoutMismatch),
        (&main_body("x = salloc I32 at m0\nstore 1, x\ny = load x\nz = load y"), DiagCode::TypeMismatch),
        (&main_body("x = halloc I32 at m0"), DiagCode::MemoryLeak),
        (&main_body("x = salloc I32 at m0\nfree x"), DiagCode::FreeOfStackCell),
        (&main_body("_ = call nowhere"), DiagCode::UnknownCallee),
        (&main_body("_ = call add, 1"), DiagCode::ArityMismatch),
        (&main_body("return 1"), DiagCode::ReturnTypeMismatch),
        (
            &main_body("x = salloc I32 at m0\nif true { store 1, x }\nelse { }"),
            DiagCode::BranchCapabilityMismatch,
        ),
        ("func f(p): forall a.(!a)+[a: Junk<I32>] -> ()+[a: I32] { }\n", DiagCode::MissingPostCapability),
        ("func f(p): forall a.(!a)+[a: @dyn(I32)] -> () { free p }\n", DiagCode::UnguardedDynamicUse),
        ("func f(p): forall a.(!a)+[@brw(a: I32)] -> () { store 1, p }\n", DiagCode::NotLinear),
        ("func f(p): forall a.(!a)+[a: I32] -> () { free p }\nfunc main(): () -> () {\n  x = halloc I32 at m0\n  _ = call f, x\n}\n", DiagCode::UseOfJunk),
        ("func f(p): forall a.(!a)+[a: I32, a: I32] -> ()\n", DiagCode::SignatureError),
        ("func f(p): forall a.(!a) -> () { v = load p }\n", DiagCode::NoCapability),
    ];
    let mut seen = vec![DiagCode::UnboundRegister];
    for (src, expected) in cases {
        assert_eq!(code(src), Some(*expected), "{src}");
        seen.push(*expected);
    }
    seen.sort_by_key(|c| c.to_string());
    seen.dedup();
    assert_eq!(seen.len(), 16);
}

#[test]
fn hand_built_modules_can_reference_unbound_registers() {
    let mut m = parse(&main_body("x = salloc I32 at m0"));
    let body = m.functions[0].body.as_mut().unwrap();
    body.push(Stmt::new(Instruction::Load { dst: RegName::new("y"), source: Operand::reg("nope") }));
    assert_eq!(check_module(&m).unwrap_err()[0].code, DiagCode::UnboundRegister);
}

#[test]
fn runtime_detects_what_the_checker_rules_out() {
    assert_eq!(unchecked(&main_body("x = salloc I32 at m0\ny = load x")), Some(FaultKind::JunkRead));
    assert_eq!(unchecked(&main_body("x = halloc I32 at m0\nfree x\nfree x")), Some(FaultKind::DoubleFree));
    assert_eq!(
        unchecked(&main_body("x = halloc I32 at m0\nstore 1, x\nfree x\ny = load x")),
        Some(FaultKind::UseAfterFree)
    );
    assert_eq!(unchecked(&main_body("x = salloc I32 at m0\nfree x")), Some(FaultKind::FreeOfStack));
    assert_eq!(unchecked(&main_body("x = salloc Bool at m0\nstore 1, x")), Some(FaultKind::TypeTagMismatch));
}

#[test]
fn well_typed_recursion_runs() {
    let src = "\
func count(n, acc): forall a.(I32, !a)+[a: I32] -> ()+[a: I32] {
  done = call lt, n, 1
  if done { return } else {
    v = load acc
    w = call add, v, n
    store w, acc
    m = call sub, n, 1
    _ = call count, m, acc
  }
}

func main(): () -> () {
  s = salloc I32 at m0
  store 0, s
  _ = call count, 10, s
}
";
    let m = parse(src);
    check_module(&m).unwrap_or_else(|d| panic!("{}", d[0]));
    let r = run_module(&m, &"main".into(), RunOptions::default()).unwrap();
    assert!(r.completed(), "{:?}", r.status);
    assert_eq!(r.entry_cell("m0").unwrap().contents(), Some(RuntimeValue::I32(55)));
}

#[test]
fn unbounded_recursion_hits_the_depth_guard() {
    let src = "func f(): () -> () { _ = call f }\nfunc main(): () -> () { _ = call f }\n";
    let m = parse(src);
    assert!(check_module(&m).is_ok());
    let r = run_module(&m, &"main".into(), RunOptions::default()).unwrap();
    assert_eq!(r.fault().map(|f| f.kind), Some(FaultKind::StackOverflowGuard));
}
