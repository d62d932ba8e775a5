//! Canonical text form of a [`Program`]. Output is stable across runs and
//! parses back to a structurally equal program.

use std::fmt::Write;

use crate::ir::{
    AdtDef, AdtKind, BasicBlock, ExternDecl, FunctionBody, Literal, Mutability, Program,
    RValueExpr, Statement, Terminator, TypeExpr,
};

pub fn type_to_string(ty: &TypeExpr) -> String {
    match ty {
        TypeExpr::Bool => "bool".into(),
        TypeExpr::Char => "char".into(),
        TypeExpr::Int => "isize".into(),
        TypeExpr::UInt => "usize".into(),
        TypeExpr::Float => "f64".into(),
        TypeExpr::RawPtr(t, Mutability::Mut) => format!("*mut {}", type_to_string(t)),
        TypeExpr::RawPtr(t, Mutability::Not) => format!("*const {}", type_to_string(t)),
        TypeExpr::Ref(t, Mutability::Mut) => format!("&mut {}", type_to_string(t)),
        TypeExpr::Ref(t, Mutability::Not) => format!("&{}", type_to_string(t)),
        TypeExpr::Slice(t) => format!("[{}]", type_to_string(t)),
        TypeExpr::Array(t, n) => format!("[{}; {}]", type_to_string(t), n),
        TypeExpr::Tuple(elems) if elems.len() == 1 => format!("({},)", type_to_string(&elems[0])),
        TypeExpr::Tuple(elems) => {
            let inner: Vec<String> = elems.iter().map(type_to_string).collect();
            format!("({})", inner.join(", "))
        }
        TypeExpr::Adt(name) => name.clone(),
    }
}

fn rvalue_to_string(rv: &RValueExpr) -> String {
    match rv {
        RValueExpr::UseCopy(p) => format!("copy {p}"),
        RValueExpr::UseMove(p) => format!("move {p}"),
        RValueExpr::CastCopy(p, t) => format!("copy {p} as {}", type_to_string(t)),
        RValueExpr::CastMove(p, t) => format!("move {p} as {}", type_to_string(t)),
        RValueExpr::Ref(p, Mutability::Not) => format!("&{p}"),
        RValueExpr::Ref(p, Mutability::Mut) => format!("&mut {p}"),
        RValueExpr::AddressOf(p, Mutability::Not) => format!("&raw const {p}"),
        RValueExpr::AddressOf(p, Mutability::Mut) => format!("&raw mut {p}"),
        RValueExpr::Constant(lit) => match lit {
            Literal::Int(v) => format!("const {v}"),
            Literal::Bool(b) => format!("const {b}"),
            Literal::Unit => "const ()".into(),
        },
    }
}

pub fn statement_to_string(stmt: &Statement) -> String {
    match stmt {
        Statement::Assign(lhs, rv) => format!("{lhs} = {};", rvalue_to_string(rv)),
        Statement::StorageLive(l) => format!("StorageLive(_{l});"),
        Statement::StorageDead(l) => format!("StorageDead(_{l});"),
    }
}

fn targets(ok: usize, unwind: Option<usize>) -> String {
    match unwind {
        Some(u) => format!("[ok: bb{ok}, unwind: bb{u}]"),
        None => format!("bb{ok}"),
    }
}

pub fn terminator_to_string(term: &Terminator) -> String {
    match term {
        Terminator::Goto(t) => format!("goto -> bb{t};"),
        Terminator::Return => "return;".into(),
        Terminator::Resume => "resume;".into(),
        Terminator::Abort => "abort;".into(),
        Terminator::Panic(t) => format!("panic -> bb{t};"),
        Terminator::Call { callee, args, destination, ok, unwind } => {
            let args: Vec<String> = args.iter().map(rvalue_to_string).collect();
            format!("{destination} = call {callee}({}) -> {};", args.join(", "), targets(*ok, *unwind))
        }
        Terminator::Drop { place, ok, unwind } => {
            format!("drop({place}) -> {};", targets(*ok, *unwind))
        }
        Terminator::SwitchInt { discriminant, arms, otherwise } => {
            let mut parts: Vec<String> = arms.iter().map(|(l, t)| format!("{l}: bb{t}")).collect();
            if let Some(o) = otherwise {
                parts.push(format!("otherwise: bb{o}"));
            }
            format!("switchInt({discriminant}) -> [{}];", parts.join(", "))
        }
    }
}

fn write_adt(out: &mut String, def: &AdtDef) {
    if def.copy_trait {
        out.push_str("#[copy]\n");
    }
    let keyword = match def.kind {
        AdtKind::Struct => "struct",
        AdtKind::Enum => "enum",
        AdtKind::Union => "union",
    };
    let body: Vec<String> = match def.kind {
        AdtKind::Enum => def
            .variants
            .iter()
            .map(|v| {
                if v.fields.is_empty() {
                    v.name.clone()
                } else {
                    let f: Vec<String> = v.fields.iter().map(type_to_string).collect();
                    format!("{}({})", v.name, f.join(", "))
                }
            })
            .collect(),
        _ => def.fields.iter().map(|(n, t)| format!("{n}: {}", type_to_string(t))).collect(),
    };
    let _ = writeln!(out, "{keyword} {} {{ {} }}", def.name, body.join(", "));
}

fn write_extern(out: &mut String, decl: &ExternDecl) {
    let params: Vec<String> = decl.params.iter().map(type_to_string).collect();
    let _ = writeln!(
        out,
        "extern fn {}({}) -> {} @intrinsic({});",
        decl.name,
        params.join(", "),
        type_to_string(&decl.ret),
        decl.kind.as_str()
    );
}

fn write_block(out: &mut String, id: usize, block: &BasicBlock) {
    let _ = writeln!(out, "    bb{id}: {{");
    for stmt in &block.statements {
        let _ = writeln!(out, "        {}", statement_to_string(stmt));
    }
    let _ = writeln!(out, "        {}", terminator_to_string(&block.terminator));
    out.push_str("    }\n");
}

pub fn function_to_string(f: &FunctionBody) -> String {
    let mut out = String::new();
    let params: Vec<String> =
        f.params().map(|l| format!("_{l}: {}", type_to_string(&f.locals[l]))).collect();
    let _ = writeln!(
        out,
        "fn {}({}) -> {} {{",
        f.name,
        params.join(", "),
        type_to_string(f.return_type())
    );
    for (l, ty) in f.locals.iter().enumerate().skip(f.arity + 1) {
        let _ = writeln!(out, "    let _{l}: {};", type_to_string(ty));
    }
    for (id, block) in f.blocks.iter().enumerate() {
        write_block(&mut out, id, block);
    }
    out.push_str("}\n");
    out
}

/// Canonical text of a whole program: ADTs, externs, then functions, each
/// group in name order.
pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for def in p.adts.iter() {
        write_adt(&mut out, def);
    }
    if !p.adts.is_empty() && !p.externs.is_empty() {
        out.push('\n');
    }
    for decl in p.externs.values() {
        write_extern(&mut out, decl);
    }
    for f in p.functions.values() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&function_to_string(f));
    }
    out
}
