//! Semantic checks run once every file has been parsed: declarations,
//! local tables, block targets, callee resolution and assignment typing.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{Loaded, ParseDiagnostic, RawFunction, RawItems, MAX_ERRORS};
use crate::ir::{
    AdtKind, AdtTable, BasicBlock, BlockSpans, ExternDecl, FunctionBody, Literal, Place, Program,
    RValueExpr, SourceSpan, Statement, Terminator, TypeExpr,
};
use crate::printer::type_to_string;

struct Errors(Vec<ParseDiagnostic>);

impl Errors {
    fn push(&mut self, span: &SourceSpan, msg: impl Into<String>) {
        self.0.push(ParseDiagnostic::error(span.clone(), msg));
    }
}

fn check_type(adts: &AdtTable, ty: &TypeExpr, span: &SourceSpan, errs: &mut Errors) {
    match ty {
        TypeExpr::RawPtr(t, _) | TypeExpr::Ref(t, _) | TypeExpr::Slice(t) | TypeExpr::Array(t, _) => {
            check_type(adts, t, span, errs)
        }
        TypeExpr::Tuple(elems) => elems.iter().for_each(|t| check_type(adts, t, span, errs)),
        TypeExpr::Adt(name) if adts.get(name).is_none() => errs.push(span, format!("unknown type `{name}`")),
        _ => {}
    }
}

/// ADTs a type contains by value (not behind a pointer).
fn by_value_adts<'t>(ty: &'t TypeExpr, out: &mut Vec<&'t str>) {
    match ty {
        TypeExpr::Array(t, _) => by_value_adts(t, out),
        TypeExpr::Tuple(elems) => elems.iter().for_each(|t| by_value_adts(t, out)),
        TypeExpr::Adt(name) => out.push(name),
        _ => {}
    }
}

fn check_adts(adts: &AdtTable, spans: &BTreeMap<String, SourceSpan>, errs: &mut Errors) {
    for def in adts.iter() {
        let span = &spans[&def.name];
        for ty in def.field_types() {
            check_type(adts, ty, span, errs);
        }
        if def.kind == AdtKind::Enum && def.variants.iter().map(|v| &v.name).collect::<BTreeSet<_>>().len() != def.variants.len() {
            errs.push(span, format!("enum `{}` has duplicate variant names", def.name));
        }
        if def.copy_trait && !def.field_types().into_iter().all(|t| adts.is_copy(t)) {
            errs.push(span, format!("`{}` is marked #[copy] but has a field that is not copy-eligible", def.name));
        }
    }
    // Reject types of infinite size.
    for def in adts.iter() {
        let mut stack: Vec<&str> = Vec::new();
        let mut seen = BTreeSet::new();
        for ty in def.field_types() {
            by_value_adts(ty, &mut stack);
        }
        while let Some(name) = stack.pop() {
            if name == def.name {
                errs.push(&spans[&def.name], format!("type `{}` contains itself by value", def.name));
                break;
            }
            if !seen.insert(name) {
                continue;
            }
            if let Some(inner) = adts.get(name) {
                for ty in inner.field_types() {
                    by_value_adts(ty, &mut stack);
                }
            }
        }
    }
}

fn literal_fits(lit: &Literal, ty: &TypeExpr) -> bool {
    match lit {
        Literal::Int(_) => matches!(ty, TypeExpr::Int | TypeExpr::UInt | TypeExpr::Float | TypeExpr::Char),
        Literal::Bool(_) => *ty == TypeExpr::Bool,
        Literal::Unit => *ty == TypeExpr::unit(),
    }
}

struct FnCheck<'a> {
    body: &'a FunctionBody,
    program_fns: &'a BTreeMap<String, (Vec<TypeExpr>, TypeExpr)>,
    externs: &'a BTreeMap<String, ExternDecl>,
}

impl FnCheck<'_> {
    fn place(&self, p: &Place, span: &SourceSpan, errs: &mut Errors) -> Option<TypeExpr> {
        match self.body.place_type(p) {
            Ok(t) => Some(t),
            Err(e) => {
                errs.push(span, e.to_string());
                None
            }
        }
    }

    /// Result type of an rvalue, given the expected destination type.
    fn rvalue(&self, rv: &RValueExpr, dest: Option<&TypeExpr>, span: &SourceSpan, errs: &mut Errors) -> Option<TypeExpr> {
        let adts = &self.body.adts;
        match rv {
            RValueExpr::UseCopy(p) => {
                let t = self.place(p, span, errs)?;
                if !adts.is_copy(&t) {
                    errs.push(span, format!("`copy {p}` of non-copy type `{}`", type_to_string(&t)));
                }
                Some(t)
            }
            RValueExpr::UseMove(p) => self.place(p, span, errs),
            RValueExpr::CastCopy(p, ty) | RValueExpr::CastMove(p, ty) => {
                let t = self.place(p, span, errs)?;
                if matches!(rv, RValueExpr::CastCopy(..)) && !adts.is_copy(&t) {
                    errs.push(span, format!("`copy {p}` of non-copy type `{}`", type_to_string(&t)));
                }
                Some(ty.clone())
            }
            RValueExpr::Ref(p, m) => Some(TypeExpr::Ref(Box::new(self.place(p, span, errs)?), *m)),
            RValueExpr::AddressOf(p, m) => Some(TypeExpr::RawPtr(Box::new(self.place(p, span, errs)?), *m)),
            RValueExpr::Constant(lit) => {
                let dest = dest?;
                if literal_fits(lit, dest) {
                    Some(dest.clone())
                } else {
                    errs.push(span, format!("constant does not fit type `{}`", type_to_string(dest)));
                    None
                }
            }
        }
    }

    fn expect_same(&self, want: &TypeExpr, got: &TypeExpr, what: &str, span: &SourceSpan, errs: &mut Errors) {
        if want != got {
            errs.push(
                span,
                format!("type mismatch in {what}: expected `{}`, found `{}`", type_to_string(want), type_to_string(got)),
            );
        }
    }

    fn local(&self, l: usize, span: &SourceSpan, errs: &mut Errors) {
        if l >= self.body.locals.len() {
            errs.push(span, format!("undeclared local _{l}"));
        }
    }

    fn target(&self, t: usize, span: &SourceSpan, errs: &mut Errors) {
        if t >= self.body.blocks.len() {
            errs.push(span, format!("jump target bb{t} does not exist"));
        }
    }

    fn block(&self, block: &BasicBlock, spans: &BlockSpans, errs: &mut Errors) {
        for (stmt, span) in block.statements.iter().zip(&spans.statements) {
            match stmt {
                Statement::Assign(lhs, rv) => {
                    if let Some(lt) = self.place(lhs, span, errs) {
                        if let Some(rt) = self.rvalue(rv, Some(&lt), span, errs) {
                            self.expect_same(&lt, &rt, "assignment", span, errs);
                        }
                    }
                }
                Statement::StorageLive(l) | Statement::StorageDead(l) => self.local(*l, span, errs),
            }
        }
        let span = &spans.terminator;
        let term = &block.terminator;
        for t in term.successors() {
            self.target(t, span, errs);
        }
        match term {
            Terminator::Call { callee, args, destination, .. } => {
                let sig = self
                    .program_fns
                    .get(callee)
                    .map(|(p, r)| (p.clone(), r.clone()))
                    .or_else(|| self.externs.get(callee).map(|d| (d.params.clone(), d.ret.clone())));
                let Some((params, ret)) = sig else {
                    errs.push(span, format!("unresolved callee `{callee}`"));
                    return;
                };
                if params.len() != args.len() {
                    errs.push(span, format!("`{callee}` takes {} arguments, {} given", params.len(), args.len()));
                }
                for (arg, want) in args.iter().zip(&params) {
                    if matches!(arg, RValueExpr::Ref(..) | RValueExpr::AddressOf(..)) {
                        errs.push(span, "call arguments must be operands (`copy`, `move` or `const`)");
                        continue;
                    }
                    if let Some(got) = self.rvalue(arg, Some(want), span, errs) {
                        self.expect_same(want, &got, &format!("argument to `{callee}`"), span, errs);
                    }
                }
                if let Some(dt) = self.place(destination, span, errs) {
                    self.expect_same(&ret, &dt, &format!("destination of `{callee}`"), span, errs);
                }
            }
            Terminator::Drop { place, .. } => {
                self.place(place, span, errs);
            }
            Terminator::SwitchInt { discriminant, arms, .. } => {
                self.place(discriminant, span, errs);
                let labels: BTreeSet<&String> = arms.iter().map(|(l, _)| l).collect();
                if labels.len() != arms.len() {
                    errs.push(span, "switchInt arm labels must be distinct");
                }
            }
            _ => {}
        }
    }
}

fn locals_of(f: &RawFunction, errs: &mut Errors) -> Option<Vec<TypeExpr>> {
    let mut table: BTreeMap<usize, (TypeExpr, SourceSpan)> = BTreeMap::new();
    let before = errs.0.len();
    for (i, (l, t, span)) in f.params.iter().enumerate() {
        if *l != i + 1 {
            errs.push(span, format!("parameter {} must be named _{}", i + 1, i + 1));
        }
        table.insert(*l, (t.clone(), span.clone()));
    }
    if let Some(ret) = &f.ret {
        table.insert(0, (ret.clone(), f.span.clone()));
    }
    for (l, t, span) in &f.lets {
        match table.get(l) {
            Some((prev, _)) if *l == 0 && f.ret.is_some() => {
                if prev != t {
                    errs.push(span, "declared type of _0 differs from the return type");
                }
            }
            Some(_) => errs.push(span, format!("local _{l} declared twice")),
            None => {
                table.insert(*l, (t.clone(), span.clone()));
            }
        }
    }
    if !table.contains_key(&0) {
        errs.push(&f.span, format!("function `{}` has no return type (declare `-> T` or `let _0: T;`)", f.name));
    }
    let max = table.keys().next_back().copied().unwrap_or(0);
    for l in 0..=max {
        if !table.contains_key(&l) {
            errs.push(&f.span, format!("local _{l} of `{}` is not declared", f.name));
        }
    }
    if errs.0.len() > before {
        return None;
    }
    Some(table.into_values().map(|(t, _)| t).collect())
}

pub(crate) fn assemble(items: RawItems) -> Result<Loaded, Vec<ParseDiagnostic>> {
    let mut errs = Errors(Vec::new());
    let mut adts = AdtTable::new();
    let mut adt_spans = BTreeMap::new();
    for (def, span) in items.adts {
        if adts.get(&def.name).is_some() {
            errs.push(&span, format!("type `{}` defined twice", def.name));
            continue;
        }
        adt_spans.insert(def.name.clone(), span);
        adts.insert(def);
    }
    check_adts(&adts, &adt_spans, &mut errs);

    let mut externs = BTreeMap::new();
    for (decl, span) in items.externs {
        decl.params.iter().chain([&decl.ret]).for_each(|t| check_type(&adts, t, &span, &mut errs));
        if externs.contains_key(&decl.name) {
            errs.push(&span, format!("extern `{}` declared twice", decl.name));
        }
        externs.insert(decl.name.clone(), decl);
    }

    let adts = Arc::new(adts);
    let mut bodies: BTreeMap<String, FunctionBody> = BTreeMap::new();
    for raw in items.functions {
        if bodies.contains_key(&raw.name) || externs.contains_key(&raw.name) {
            errs.push(&raw.span, format!("function `{}` defined twice", raw.name));
            continue;
        }
        for (_, t, span) in raw.params.iter().chain(&raw.lets) {
            check_type(&adts, t, span, &mut errs);
        }
        if let Some(t) = &raw.ret {
            check_type(&adts, t, &raw.span, &mut errs);
        }
        let Some(locals) = locals_of(&raw, &mut errs) else { continue };
        let mut blocks: BTreeMap<usize, (BasicBlock, BlockSpans)> = BTreeMap::new();
        for b in raw.blocks {
            if blocks.contains_key(&b.id) {
                errs.push(&b.span, format!("block bb{} defined twice", b.id));
                continue;
            }
            blocks.insert(b.id, (b.block, b.spans));
        }
        if let Some(max) = blocks.keys().next_back() {
            for id in 0..=*max {
                if !blocks.contains_key(&id) {
                    errs.push(&raw.span, format!("block bb{id} of `{}` is missing", raw.name));
                }
            }
        }
        let (blocks, spans): (Vec<_>, Vec<_>) = blocks.into_values().unzip();
        bodies.insert(
            raw.name.clone(),
            FunctionBody {
                name: raw.name,
                arity: raw.params.len(),
                locals,
                blocks,
                spans,
                span: raw.span,
                comments: raw.comments,
                adts: Arc::clone(&adts),
            },
        );
    }
    if !errs.0.is_empty() {
        errs.0.truncate(MAX_ERRORS);
        return Err(errs.0);
    }

    let signatures: BTreeMap<String, (Vec<TypeExpr>, TypeExpr)> = bodies
        .iter()
        .map(|(n, f)| (n.clone(), (f.params().map(|l| f.locals[l].clone()).collect(), f.return_type().clone())))
        .collect();
    let mut warnings = Vec::new();
    for body in bodies.values() {
        let check = FnCheck { body, program_fns: &signatures, externs: &externs };
        let before = errs.0.len();
        for (block, spans) in body.blocks.iter().zip(&body.spans) {
            check.block(block, spans, &mut errs);
            if errs.0.len() >= MAX_ERRORS {
                break;
            }
        }
        if errs.0.len() > before {
            continue;
        }
        for (id, reachable) in body.reachable().into_iter().enumerate() {
            if !reachable {
                warnings.push(ParseDiagnostic::warning(
                    body.spans[id].terminator.clone(),
                    format!("block bb{id} of `{}` is unreachable and will not be analyzed", body.name),
                ));
            }
        }
    }
    if !errs.0.is_empty() {
        errs.0.truncate(MAX_ERRORS);
        return Err(errs.0);
    }
    Ok(Loaded { program: Program { adts, functions: bodies, externs }, warnings })
}
