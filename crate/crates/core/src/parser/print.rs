use std::fmt::Write;

use crate::il::*;

fn capset(out: &mut String, caps: &[CellCap]) {
    if caps.is_empty() {
        return;
    }
    out.push_str("+[");
    for (i, c) in caps.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{c}");
    }
    out.push(']');
}

pub fn print_signature(sig: &Signature) -> String {
    let mut out = String::new();
    if !sig.cell_vars.is_empty() {
        out.push_str("forall ");
        for (i, v) in sig.cell_vars.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(v.as_str());
        }
        out.push('.');
    }
    out.push('(');
    for (i, t) in sig.param_types.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{t}");
    }
    out.push(')');
    capset(&mut out, &sig.pre_caps);
    let _ = write!(out, " -> {}", sig.return_type);
    capset(&mut out, &sig.post_caps);
    out
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        let pad = "  ".repeat(depth);
        match &s.instr {
            Instruction::If { cond, then_block, else_block } => {
                let _ = writeln!(out, "{pad}if {cond} {{");
                block(out, then_block, depth + 1);
                if else_block.is_empty() {
                    let _ = writeln!(out, "{pad}}}");
                } else {
                    let _ = writeln!(out, "{pad}}} else {{");
                    block(out, else_block, depth + 1);
                    let _ = writeln!(out, "{pad}}}");
                }
            }
            Instruction::Assuming { target, ty, body } => {
                let _ = writeln!(out, "{pad}assuming {target}: {ty} {{");
                block(out, body, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
            other => {
                let _ = writeln!(out, "{pad}{}", other.header());
            }
        }
    }
}

/// Canonical text of a module: one instruction per line, two spaces of
/// indentation per block level, functions separated by a blank line.
pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    for (i, f) in m.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let params: Vec<&str> = f.params.iter().map(RegName::as_str).collect();
        let _ = write!(out, "func {}({}): {}", f.name, params.join(", "), print_signature(&f.sig));
        match &f.body {
            None => out.push('\n'),
            Some(body) => {
                out.push_str(" {\n");
                block(&mut out, body, 1);
                out.push_str("}\n");
            }
        }
    }
    out
}
