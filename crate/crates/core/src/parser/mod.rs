//! Parser for `.smir` files.
//!
//! The grammar is line oriented and mirrors textual MIR dumps:
//!
//! ```text
//! struct String { buf: *mut u8, len: usize }
//! extern fn as_mut_ptr(&mut String) -> *mut u8 @intrinsic(get_ptr);
//!
//! fn main(_1: String) -> () {
//!     let _2: *mut u8;
//!     bb0: {
//!         _3 = &mut _1;
//!         _2 = call as_mut_ptr(move _3) -> [ok: bb1, unwind: bb2];
//!     }
//!     ...
//! }
//! ```

mod lexer;
mod validate;

use std::fmt;

use serde::Serialize;

use crate::ir::{
    AdtDef, AdtKind, BasicBlock, BlockSpans, ExternDecl, IntrinsicKind, Literal, Mutability, Place,
    Program, Projection, RValueExpr, SourceSpan, Statement, Terminator, TypeExpr, Variant,
};
use lexer::{Comment, Tok, Token};

/// Loading stops after this many errors.
pub const MAX_ERRORS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub span: SourceSpan,
    pub message: String,
    pub severity: Severity,
}

impl ParseDiagnostic {
    pub fn error(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseDiagnostic { span, message: message.into(), severity: Severity::Error }
    }

    pub fn warning(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseDiagnostic { span, message: message.into(), severity: Severity::Warning }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {sev}: {}", self.span, self.message)
    }
}

/// A source file handed to [`parse_program`].
#[derive(Clone, Debug)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile { path: path.into(), text: text.into() }
    }
}

/// A successfully loaded program plus any non-fatal warnings.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub program: Program,
    pub warnings: Vec<ParseDiagnostic>,
}

pub fn parse_program(sources: &[SourceFile]) -> Result<Program, Vec<ParseDiagnostic>> {
    parse_program_with_warnings(sources).map(|l| l.program)
}

/// Convenience wrapper for a single in-memory source.
pub fn parse_str(text: &str) -> Result<Program, Vec<ParseDiagnostic>> {
    parse_program(&[SourceFile::new("<input>", text)])
}

pub fn parse_program_with_warnings(sources: &[SourceFile]) -> Result<Loaded, Vec<ParseDiagnostic>> {
    let mut errors = Vec::new();
    let mut items = RawItems::default();
    for src in sources {
        let lexed = lexer::lex(&src.path, &src.text, &mut errors);
        let mut parser = Parser {
            toks: lexed.tokens,
            pos: 0,
            file: src.path.clone(),
            comments: lexed.comments,
            errors: &mut errors,
        };
        parser.items(&mut items);
        if errors.len() >= MAX_ERRORS {
            break;
        }
    }
    if !errors.is_empty() {
        errors.truncate(MAX_ERRORS);
        return Err(errors);
    }
    validate::assemble(items)
}

#[derive(Default)]
pub(crate) struct RawItems {
    pub adts: Vec<(AdtDef, SourceSpan)>,
    pub externs: Vec<(ExternDecl, SourceSpan)>,
    pub functions: Vec<RawFunction>,
}

pub(crate) struct RawFunction {
    pub name: String,
    pub span: SourceSpan,
    pub params: Vec<(usize, TypeExpr, SourceSpan)>,
    pub ret: Option<TypeExpr>,
    pub lets: Vec<(usize, TypeExpr, SourceSpan)>,
    pub blocks: Vec<RawBlock>,
    pub comments: Vec<String>,
}

pub(crate) struct RawBlock {
    pub id: usize,
    pub span: SourceSpan,
    pub block: BasicBlock,
    pub spans: BlockSpans,
}

struct Parser<'e> {
    toks: Vec<Token>,
    pos: usize,
    file: String,
    comments: Vec<Comment>,
    errors: &'e mut Vec<ParseDiagnostic>,
}

type PResult<T> = Result<T, ParseDiagnostic>;

const ITEM_KEYWORDS: [&str; 5] = ["fn", "extern", "struct", "enum", "union"];

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn token(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn span_of(&self, t: &Token) -> SourceSpan {
        SourceSpan { file: self.file.clone(), line: t.line, column: t.column, length: t.len.max(1) }
    }

    /// Span from token `start` through the previously consumed token.
    fn span_from(&self, start: usize) -> SourceSpan {
        let first = &self.toks[start];
        let last = &self.toks[self.pos.saturating_sub(1).max(start)];
        let length = if last.line == first.line { last.column + last.len - first.column } else { first.len };
        SourceSpan { file: self.file.clone(), line: first.line, column: first.column, length: length.max(1) }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseDiagnostic::error(self.span_of(self.token()), msg))
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of file".into(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", Self::describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", Self::describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", Self::describe(&other))),
        }
    }

    fn int(&mut self) -> PResult<i128> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            other => self.err(format!("expected integer, found {}", Self::describe(&other))),
        }
    }

    fn numbered(&mut self, prefix: &str, what: &str) -> PResult<usize> {
        if let Tok::Ident(s) = self.peek() {
            if let Some(digits) = s.strip_prefix(prefix) {
                if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                    if let Ok(n) = digits.parse::<usize>() {
                        self.bump();
                        return Ok(n);
                    }
                }
            }
        }
        self.err(format!("expected {what}, found {}", Self::describe(self.peek())))
    }

    fn local(&mut self) -> PResult<usize> {
        self.numbered("_", "local (`_N`)")
    }

    fn block_id(&mut self) -> PResult<usize> {
        self.numbered("bb", "block label (`bbN`)")
    }

    fn at_item_start(&self) -> bool {
        let t = self.token();
        match &t.tok {
            Tok::Eof => true,
            Tok::Ident(s) => t.column == 1 && ITEM_KEYWORDS.contains(&s.as_str()),
            Tok::Sym("#") => t.column == 1,
            _ => false,
        }
    }

    fn recover(&mut self) {
        self.bump();
        while !self.at_item_start() {
            self.bump();
        }
    }

    fn items(&mut self, out: &mut RawItems) {
        while *self.peek() != Tok::Eof {
            if self.errors.len() >= MAX_ERRORS {
                return;
            }
            if let Err(e) = self.item(out) {
                self.errors.push(e);
                self.recover();
            }
        }
    }

    fn item(&mut self, out: &mut RawItems) -> PResult<()> {
        let start = self.pos;
        let mut copy_trait = false;
        if self.eat_sym("#") {
            self.expect_sym("[")?;
            self.expect_kw("copy")?;
            self.expect_sym("]")?;
            copy_trait = true;
        }
        match self.peek() {
            Tok::Ident(kw) if kw == "struct" || kw == "union" || kw == "enum" => {
                let def = self.adt(copy_trait)?;
                out.adts.push((def, self.span_from(start)));
                Ok(())
            }
            _ if copy_trait => self.err("`#[copy]` must precede a struct, enum or union"),
            Tok::Ident(kw) if kw == "extern" => {
                let decl = self.extern_decl()?;
                out.externs.push((decl, self.span_from(start)));
                Ok(())
            }
            Tok::Ident(kw) if kw == "fn" => {
                let f = self.function()?;
                out.functions.push(f);
                Ok(())
            }
            other => self.err(format!("expected item, found {}", Self::describe(other))),
        }
    }

    fn adt(&mut self, copy_trait: bool) -> PResult<AdtDef> {
        let kind = match self.ident()?.as_str() {
            "struct" => AdtKind::Struct,
            "union" => AdtKind::Union,
            _ => AdtKind::Enum,
        };
        let name = self.ident()?;
        self.expect_sym("{")?;
        let mut fields = Vec::new();
        let mut variants = Vec::new();
        while !self.eat_sym("}") {
            if kind == AdtKind::Enum {
                let vname = self.ident()?;
                let mut vfields = Vec::new();
                if self.eat_sym("(") {
                    while !self.eat_sym(")") {
                        vfields.push(self.ty()?);
                        if !self.eat_sym(",") {
                            self.expect_sym(")")?;
                            break;
                        }
                    }
                }
                variants.push(Variant { name: vname, fields: vfields });
            } else {
                let fname = self.ident()?;
                self.expect_sym(":")?;
                fields.push((fname, self.ty()?));
            }
            if !self.eat_sym(",") {
                self.expect_sym("}")?;
                break;
            }
        }
        Ok(AdtDef { name, kind, copy_trait, fields, variants })
    }

    fn extern_decl(&mut self) -> PResult<ExternDecl> {
        self.expect_kw("extern")?;
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        while !self.eat_sym(")") {
            if matches!(self.peek_at(1), Tok::Sym(":")) {
                self.local()?;
                self.expect_sym(":")?;
            }
            params.push(self.ty()?);
            if !self.eat_sym(",") {
                self.expect_sym(")")?;
                break;
            }
        }
        let ret = if self.eat_sym("->") { self.ty()? } else { TypeExpr::unit() };
        self.expect_sym("@")?;
        self.expect_kw("intrinsic")?;
        self.expect_sym("(")?;
        let kind_tok = self.token().clone();
        let kind_name = self.ident()?;
        let kind = IntrinsicKind::parse(&kind_name).ok_or_else(|| {
            ParseDiagnostic::error(self.span_of(&kind_tok), format!("unknown intrinsic kind `{kind_name}`"))
        })?;
        self.expect_sym(")")?;
        self.expect_sym(";")?;
        Ok(ExternDecl { name, params, ret, kind })
    }

    fn function(&mut self) -> PResult<RawFunction> {
        let start = self.pos;
        let start_line = self.token().line;
        self.expect_kw("fn")?;
        let name = self.ident()?;
        let span = self.span_from(start);
        self.expect_sym("(")?;
        let mut params = Vec::new();
        while !self.eat_sym(")") {
            let pstart = self.pos;
            self.eat_kw("mut");
            let l = self.local()?;
            self.expect_sym(":")?;
            let t = self.ty()?;
            params.push((l, t, self.span_from(pstart)));
            if !self.eat_sym(",") {
                self.expect_sym(")")?;
                break;
            }
        }
        let ret = if self.eat_sym("->") { Some(self.ty()?) } else { None };
        self.expect_sym("{")?;
        let mut lets = Vec::new();
        while self.is_kw("let") {
            let lstart = self.pos;
            self.bump();
            self.eat_kw("mut");
            let l = self.local()?;
            self.expect_sym(":")?;
            let t = self.ty()?;
            self.expect_sym(";")?;
            lets.push((l, t, self.span_from(lstart)));
        }
        let mut blocks = Vec::new();
        while !self.is_sym("}") {
            blocks.push(self.block()?);
        }
        let end_line = self.token().line;
        self.bump();
        let comments = self
            .comments
            .iter()
            .filter(|c| c.line >= start_line && c.line <= end_line)
            .map(|c| c.text.clone())
            .collect();
        Ok(RawFunction { name, span, params, ret, lets, blocks, comments })
    }

    fn block(&mut self) -> PResult<RawBlock> {
        let start = self.pos;
        let id = self.block_id()?;
        self.expect_sym(":")?;
        let span = self.span_from(start);
        self.expect_sym("{")?;
        let mut statements = Vec::new();
        let mut stmt_spans = Vec::new();
        loop {
            let sstart = self.pos;
            match self.statement_or_terminator()? {
                Line::Statement(s) => {
                    statements.push(s);
                    stmt_spans.push(self.span_from(sstart));
                }
                Line::Terminator(t) => {
                    let tspan = self.span_from(sstart);
                    if !self.is_sym("}") {
                        return self.err(format!(
                            "block bb{id} continues after its terminator; each block has exactly one terminator"
                        ));
                    }
                    self.bump();
                    return Ok(RawBlock {
                        id,
                        span,
                        block: BasicBlock { statements, terminator: t },
                        spans: BlockSpans { statements: stmt_spans, terminator: tspan },
                    });
                }
            }
        }
    }

    fn statement_or_terminator(&mut self) -> PResult<Line> {
        if self.is_sym("}") {
            return self.err("block has no terminator");
        }
        if let Tok::Ident(kw) = self.peek().clone() {
            match kw.as_str() {
                "StorageLive" | "StorageDead" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let l = self.local()?;
                    self.expect_sym(")")?;
                    self.expect_sym(";")?;
                    return Ok(Line::Statement(if kw == "StorageLive" {
                        Statement::StorageLive(l)
                    } else {
                        Statement::StorageDead(l)
                    }));
                }
                "goto" => {
                    self.bump();
                    self.expect_sym("->")?;
                    let t = self.block_id()?;
                    self.expect_sym(";")?;
                    return Ok(Line::Terminator(Terminator::Goto(t)));
                }
                "panic" => {
                    self.bump();
                    self.expect_sym("->")?;
                    let t = self.block_id()?;
                    self.expect_sym(";")?;
                    return Ok(Line::Terminator(Terminator::Panic(t)));
                }
                "return" | "resume" | "abort" => {
                    self.bump();
                    self.expect_sym(";")?;
                    return Ok(Line::Terminator(match kw.as_str() {
                        "return" => Terminator::Return,
                        "resume" => Terminator::Resume,
                        _ => Terminator::Abort,
                    }));
                }
                "drop" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let place = self.place()?;
                    self.expect_sym(")")?;
                    self.expect_sym("->")?;
                    let (ok, unwind) = self.targets()?;
                    self.expect_sym(";")?;
                    return Ok(Line::Terminator(Terminator::Drop { place, ok, unwind }));
                }
                "switchInt" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let discriminant = self.place()?;
                    self.expect_sym(")")?;
                    self.expect_sym("->")?;
                    self.expect_sym("[")?;
                    let mut arms = Vec::new();
                    let mut otherwise = None;
                    while !self.eat_sym("]") {
                        let label = match self.peek().clone() {
                            Tok::Ident(s) => {
                                self.bump();
                                s
                            }
                            Tok::Int(v) => {
                                self.bump();
                                v.to_string()
                            }
                            other => return self.err(format!("expected arm label, found {}", Self::describe(&other))),
                        };
                        self.expect_sym(":")?;
                        let target = self.block_id()?;
                        if label == "otherwise" {
                            if otherwise.is_some() {
                                return self.err("duplicate `otherwise` arm");
                            }
                            otherwise = Some(target);
                        } else {
                            arms.push((label, target));
                        }
                        if !self.eat_sym(",") {
                            self.expect_sym("]")?;
                            break;
                        }
                    }
                    self.expect_sym(";")?;
                    return Ok(Line::Terminator(Terminator::SwitchInt { discriminant, arms, otherwise }));
                }
                _ => {}
            }
        }
        let lhs = self.place()?;
        self.expect_sym("=")?;
        if self.eat_kw("call") {
            let callee = self.ident()?;
            self.expect_sym("(")?;
            let mut args = Vec::new();
            while !self.eat_sym(")") {
                args.push(self.rvalue()?);
                if !self.eat_sym(",") {
                    self.expect_sym(")")?;
                    break;
                }
            }
            self.expect_sym("->")?;
            let (ok, unwind) = self.targets()?;
            self.expect_sym(";")?;
            return Ok(Line::Terminator(Terminator::Call { callee, args, destination: lhs, ok, unwind }));
        }
        let rv = self.rvalue()?;
        self.expect_sym(";")?;
        Ok(Line::Statement(Statement::Assign(lhs, rv)))
    }

    fn targets(&mut self) -> PResult<(usize, Option<usize>)> {
        if self.eat_sym("[") {
            self.expect_kw("ok")?;
            self.expect_sym(":")?;
            let ok = self.block_id()?;
            let mut unwind = None;
            if self.eat_sym(",") {
                self.expect_kw("unwind")?;
                self.expect_sym(":")?;
                unwind = Some(self.block_id()?);
            }
            self.expect_sym("]")?;
            Ok((ok, unwind))
        } else {
            Ok((self.block_id()?, None))
        }
    }

    fn place(&mut self) -> PResult<Place> {
        let mut place = if self.eat_sym("(") {
            self.expect_sym("*")?;
            let inner = self.place()?;
            self.expect_sym(")")?;
            inner.deref()
        } else if self.eat_sym("*") {
            return Ok(self.place()?.deref());
        } else {
            Place::local(self.local()?)
        };
        while self.eat_sym(".") {
            let idx = self.int()?;
            let idx = u32::try_from(idx).map_err(|_| {
                ParseDiagnostic::error(self.span_of(&self.toks[self.pos - 1]), "field index out of range")
            })?;
            place.projections.push(Projection::Field(idx));
        }
        Ok(place)
    }

    fn rvalue(&mut self) -> PResult<RValueExpr> {
        if self.eat_sym("&") {
            if self.eat_kw("raw") {
                let m = if self.eat_kw("mut") {
                    Mutability::Mut
                } else {
                    self.expect_kw("const")?;
                    Mutability::Not
                };
                return Ok(RValueExpr::AddressOf(self.place()?, m));
            }
            let m = if self.eat_kw("mut") { Mutability::Mut } else { Mutability::Not };
            return Ok(RValueExpr::Ref(self.place()?, m));
        }
        if self.eat_kw("const") {
            return Ok(RValueExpr::Constant(self.literal()?));
        }
        if matches!(self.peek(), Tok::Int(_)) || self.is_kw("true") || self.is_kw("false") {
            return Ok(RValueExpr::Constant(self.literal()?));
        }
        if self.is_sym("(") && matches!(self.peek_at(1), Tok::Sym(")")) {
            return Ok(RValueExpr::Constant(self.literal()?));
        }
        let is_move = if self.eat_kw("move") {
            true
        } else {
            self.eat_kw("copy");
            false
        };
        let place = self.place()?;
        if self.eat_kw("as") {
            let ty = self.ty()?;
            return Ok(if is_move { RValueExpr::CastMove(place, ty) } else { RValueExpr::CastCopy(place, ty) });
        }
        Ok(if is_move { RValueExpr::UseMove(place) } else { RValueExpr::UseCopy(place) })
    }

    fn literal(&mut self) -> PResult<Literal> {
        if self.eat_kw("true") {
            return Ok(Literal::Bool(true));
        }
        if self.eat_kw("false") {
            return Ok(Literal::Bool(false));
        }
        if self.eat_sym("(") {
            self.expect_sym(")")?;
            return Ok(Literal::Unit);
        }
        Ok(Literal::Int(self.int()?))
    }

    fn ty(&mut self) -> PResult<TypeExpr> {
        if self.eat_sym("*") {
            let m = if self.eat_kw("mut") {
                Mutability::Mut
            } else {
                self.expect_kw("const")?;
                Mutability::Not
            };
            return Ok(TypeExpr::RawPtr(Box::new(self.ty()?), m));
        }
        if self.eat_sym("&") {
            let m = if self.eat_kw("mut") { Mutability::Mut } else { Mutability::Not };
            return Ok(TypeExpr::Ref(Box::new(self.ty()?), m));
        }
        if self.eat_sym("[") {
            let elem = self.ty()?;
            if self.eat_sym(";") {
                let n = self.int()?;
                let n = u64::try_from(n).map_err(|_| {
                    ParseDiagnostic::error(self.span_of(&self.toks[self.pos - 1]), "array length must be non-negative")
                })?;
                self.expect_sym("]")?;
                return Ok(TypeExpr::Array(Box::new(elem), n));
            }
            self.expect_sym("]")?;
            return Ok(TypeExpr::Slice(Box::new(elem)));
        }
        if self.eat_sym("(") {
            let mut elems = Vec::new();
            while !self.eat_sym(")") {
                elems.push(self.ty()?);
                if !self.eat_sym(",") {
                    self.expect_sym(")")?;
                    break;
                }
            }
            return Ok(TypeExpr::Tuple(elems));
        }
        let name = self.ident()?;
        Ok(match name.as_str() {
            "bool" => TypeExpr::Bool,
            "char" => TypeExpr::Char,
            "i8" | "i16" | "i32" | "i64" | "i128" | "isize" => TypeExpr::Int,
            "u8" | "u16" | "u32" | "u64" | "u128" | "usize" => TypeExpr::UInt,
            "f32" | "f64" => TypeExpr::Float,
            _ => TypeExpr::Adt(name),
        })
    }
}

enum Line {
    Statement(Statement),
    Terminator(Terminator),
}
