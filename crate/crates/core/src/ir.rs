//! In-memory model of the mini-MIR dialect.
//!
//! A [`Program`] is a set of function bodies, extern (intrinsic) declarations
//! and algebraic data type declarations. Values are immutable once the parser
//! has validated them, so analysis workers share them freely.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub type Local = usize;
pub type BlockId = usize;

/// Index of the return local in every function body.
pub const RETURN_LOCAL: Local = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mutability {
    Not,
    Mut,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeExpr {
    Bool,
    Char,
    Int,
    UInt,
    Float,
    RawPtr(Box<TypeExpr>, Mutability),
    Ref(Box<TypeExpr>, Mutability),
    Slice(Box<TypeExpr>),
    Array(Box<TypeExpr>, u64),
    Tuple(Vec<TypeExpr>),
    /// Named reference into the program's [`AdtTable`].
    Adt(String),
}

impl TypeExpr {
    pub fn unit() -> Self {
        TypeExpr::Tuple(Vec::new())
    }

    /// Pointee of a reference or raw pointer.
    pub fn pointee(&self) -> Option<&TypeExpr> {
        match self {
            TypeExpr::Ref(t, _) | TypeExpr::RawPtr(t, _) => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdtKind {
    Struct,
    Enum,
    Union,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: String,
    pub fields: Vec<TypeExpr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdtDef {
    pub name: String,
    pub kind: AdtKind,
    pub copy_trait: bool,
    /// Named fields of structs and unions. Empty for enumerations.
    pub fields: Vec<(String, TypeExpr)>,
    /// Per-variant field lists. Empty unless `kind` is `Enum`.
    pub variants: Vec<Variant>,
}

impl AdtDef {
    /// Field types addressable by `Field(i)` projections. Enumeration
    /// variant fields are flattened in declaration order.
    pub fn field_types(&self) -> Vec<&TypeExpr> {
        match self.kind {
            AdtKind::Enum => self.variants.iter().flat_map(|v| v.fields.iter()).collect(),
            _ => self.fields.iter().map(|(_, t)| t).collect(),
        }
    }

    pub fn field_type(&self, index: usize) -> Option<&TypeExpr> {
        self.field_types().get(index).copied()
    }
}

/// All ADT declarations of a program, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdtTable {
    defs: BTreeMap<String, AdtDef>,
}

impl AdtTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, def: AdtDef) -> Option<AdtDef> {
        self.defs.insert(def.name.clone(), def)
    }

    pub fn get(&self, name: &str) -> Option<&AdtDef> {
        self.defs.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AdtDef> {
        self.defs.values()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// Copy eligibility: stack-only data that is duplicated on assignment.
    /// References and raw pointers are copy-eligible by the dialect's
    /// convention (they never drop their pointee).
    pub fn is_copy(&self, ty: &TypeExpr) -> bool {
        match ty {
            TypeExpr::Bool
            | TypeExpr::Char
            | TypeExpr::Int
            | TypeExpr::UInt
            | TypeExpr::Float
            | TypeExpr::RawPtr(..)
            | TypeExpr::Ref(..) => true,
            TypeExpr::Slice(_) => false,
            TypeExpr::Array(elem, _) => self.is_copy(elem),
            TypeExpr::Tuple(elems) => elems.iter().all(|t| self.is_copy(t)),
            TypeExpr::Adt(name) => self.get(name).is_some_and(|d| d.copy_trait),
        }
    }

    /// The alias-analysis type filter. Filtered types never take part in
    /// alias sets.
    pub fn is_filtered(&self, ty: &TypeExpr) -> bool {
        match ty {
            TypeExpr::Bool | TypeExpr::Char | TypeExpr::Int | TypeExpr::UInt | TypeExpr::Float => {
                true
            }
            TypeExpr::RawPtr(..) | TypeExpr::Ref(..) | TypeExpr::Slice(_) => false,
            TypeExpr::Array(elem, _) => self.is_filtered(elem) && self.is_copy(ty),
            TypeExpr::Tuple(elems) => elems.iter().all(|t| self.is_filtered(t)) && self.is_copy(ty),
            TypeExpr::Adt(name) => match self.get(name) {
                Some(def) => {
                    def.copy_trait && def.field_types().into_iter().all(|t| self.is_filtered(t))
                }
                None => false,
            },
        }
    }

    /// A type owns resources released by a destructor iff it is not
    /// copy-eligible.
    pub fn needs_drop(&self, ty: &TypeExpr) -> bool {
        !self.is_copy(ty)
    }

    /// Component types reachable through one `Field` projection.
    pub fn field_of(&self, ty: &TypeExpr, index: usize) -> Option<TypeExpr> {
        match ty {
            TypeExpr::Tuple(elems) => elems.get(index).cloned(),
            TypeExpr::Array(elem, len) => ((index as u64) < *len).then(|| (**elem).clone()),
            TypeExpr::Adt(name) => self.get(name)?.field_type(index).cloned(),
            _ => None,
        }
    }

    /// Number of `Field` indices valid on `ty`.
    pub fn field_count(&self, ty: &TypeExpr) -> usize {
        match ty {
            TypeExpr::Tuple(elems) => elems.len(),
            TypeExpr::Array(_, len) => *len as usize,
            TypeExpr::Adt(name) => self.get(name).map_or(0, |d| d.field_types().len()),
            _ => 0,
        }
    }
}

/// Free-function form of [`AdtTable::is_filtered`].
pub fn type_is_filtered(ty: &TypeExpr, adts: &AdtTable) -> bool {
    adts.is_filtered(ty)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Projection {
    Field(u32),
    Deref,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Place {
    pub local: Local,
    pub projections: Vec<Projection>,
}

impl Place {
    pub fn local(local: Local) -> Self {
        Place { local, projections: Vec::new() }
    }

    pub fn field(mut self, index: u32) -> Self {
        self.projections.push(Projection::Field(index));
        self
    }

    pub fn deref(mut self) -> Self {
        self.projections.push(Projection::Deref);
        self
    }

    pub fn is_local(&self) -> bool {
        self.projections.is_empty()
    }

    pub fn has_deref(&self) -> bool {
        self.projections.contains(&Projection::Deref)
    }

    /// True if `self` equals `other` or is one of its prefixes.
    pub fn is_prefix_of(&self, other: &Place) -> bool {
        self.local == other.local && other.projections.starts_with(&self.projections)
    }

    /// The place before the last `Deref`, i.e. the pointer that is read to
    /// reach this place.
    pub fn deref_base(&self) -> Option<Place> {
        let pos = self.projections.iter().rposition(|p| *p == Projection::Deref)?;
        Some(Place { local: self.local, projections: self.projections[..pos].to_vec() })
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut text = format!("_{}", self.local);
        for proj in &self.projections {
            text = match proj {
                Projection::Field(i) => format!("{text}.{i}"),
                Projection::Deref => format!("(*{text})"),
            };
        }
        f.write_str(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i128),
    Bool(bool),
    Unit,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RValueExpr {
    UseCopy(Place),
    UseMove(Place),
    CastCopy(Place, TypeExpr),
    CastMove(Place, TypeExpr),
    Ref(Place, Mutability),
    AddressOf(Place, Mutability),
    Constant(Literal),
}

impl RValueExpr {
    /// The place read by value, if any. Borrows and address-of only name a
    /// place, they do not read it.
    pub fn read_place(&self) -> Option<&Place> {
        match self {
            RValueExpr::UseCopy(p)
            | RValueExpr::UseMove(p)
            | RValueExpr::CastCopy(p, _)
            | RValueExpr::CastMove(p, _) => Some(p),
            _ => None,
        }
    }

    pub fn place(&self) -> Option<&Place> {
        match self {
            RValueExpr::UseCopy(p)
            | RValueExpr::UseMove(p)
            | RValueExpr::CastCopy(p, _)
            | RValueExpr::CastMove(p, _)
            | RValueExpr::Ref(p, _)
            | RValueExpr::AddressOf(p, _) => Some(p),
            RValueExpr::Constant(_) => None,
        }
    }

    pub fn is_move(&self) -> bool {
        matches!(self, RValueExpr::UseMove(_) | RValueExpr::CastMove(..))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Statement {
    Assign(Place, RValueExpr),
    StorageLive(Local),
    StorageDead(Local),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Terminator {
    Goto(BlockId),
    Return,
    Resume,
    Abort,
    Panic(BlockId),
    Call {
        callee: String,
        args: Vec<RValueExpr>,
        destination: Place,
        ok: BlockId,
        unwind: Option<BlockId>,
    },
    Drop {
        place: Place,
        ok: BlockId,
        unwind: Option<BlockId>,
    },
    SwitchInt {
        discriminant: Place,
        arms: Vec<(String, BlockId)>,
        otherwise: Option<BlockId>,
    },
}

impl Terminator {
    /// Successor blocks in a fixed order. Unwind edges are ordinary
    /// successors.
    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Terminator::Goto(t) | Terminator::Panic(t) => vec![*t],
            Terminator::Return | Terminator::Resume | Terminator::Abort => Vec::new(),
            Terminator::Call { ok, unwind, .. } | Terminator::Drop { ok, unwind, .. } => {
                let mut out = vec![*ok];
                if let Some(u) = unwind {
                    out.push(*u);
                }
                out
            }
            Terminator::SwitchInt { arms, otherwise, .. } => {
                let mut out: Vec<BlockId> = arms.iter().map(|(_, t)| *t).collect();
                if let Some(o) = otherwise {
                    out.push(*o);
                }
                out
            }
        }
    }

    pub fn is_exit(&self) -> bool {
        matches!(self, Terminator::Return | Terminator::Resume | Terminator::Abort)
    }

    /// Target taken when this terminator unwinds.
    pub fn unwind_target(&self) -> Option<BlockId> {
        match self {
            Terminator::Call { unwind, .. } | Terminator::Drop { unwind, .. } => *unwind,
            Terminator::Panic(t) => Some(*t),
            _ => None,
        }
    }

    /// True if moving from this terminator to `next` follows an unwind edge.
    pub fn is_unwind_edge(&self, next: BlockId) -> bool {
        match self {
            Terminator::Panic(t) => *t == next,
            Terminator::Call { ok, unwind, .. } | Terminator::Drop { ok, unwind, .. } => {
                *unwind == Some(next) && *ok != next
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub statements: Vec<Statement>,
    pub terminator: Terminator,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SourceSpan {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Clone, Debug, Default)]
pub struct BlockSpans {
    pub statements: Vec<SourceSpan>,
    pub terminator: SourceSpan,
}

/// Position inside a block: a statement index or the terminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StmtRef {
    Stmt(usize),
    Terminator,
}

impl fmt::Display for StmtRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StmtRef::Stmt(i) => write!(f, "{i}"),
            StmtRef::Terminator => f.write_str("term"),
        }
    }
}

impl Serialize for StmtRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StmtRef::Stmt(i) => s.serialize_u64(*i as u64),
            StmtRef::Terminator => s.serialize_str("term"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FunctionBody {
    pub name: String,
    /// Parameters are locals `1..=arity`.
    pub arity: usize,
    /// Local types, indexed by local. Local 0 is the return place.
    pub locals: Vec<TypeExpr>,
    pub blocks: Vec<BasicBlock>,
    pub spans: Vec<BlockSpans>,
    pub span: SourceSpan,
    /// `//` comment texts found inside the body, in source order.
    pub comments: Vec<String>,
    pub adts: Arc<AdtTable>,
}

/// Structural equality: spans and comments are ignored.
impl PartialEq for FunctionBody {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.arity == other.arity
            && self.locals == other.locals
            && self.blocks == other.blocks
    }
}

impl Eq for FunctionBody {}

impl FunctionBody {
    pub fn params(&self) -> std::ops::RangeInclusive<Local> {
        1..=self.arity
    }

    pub fn return_type(&self) -> &TypeExpr {
        &self.locals[RETURN_LOCAL]
    }

    pub fn successors(&self, block: BlockId) -> Vec<BlockId> {
        self.blocks[block].terminator.successors()
    }

    /// Blocks reachable from the entry block.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.blocks.len()];
        if self.blocks.is_empty() {
            return seen;
        }
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for s in self.successors(b) {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    }

    pub fn stmt_span(&self, block: BlockId, at: StmtRef) -> SourceSpan {
        let Some(spans) = self.spans.get(block) else {
            return self.span.clone();
        };
        match at {
            StmtRef::Stmt(i) => spans.statements.get(i).cloned().unwrap_or_default(),
            StmtRef::Terminator => spans.terminator.clone(),
        }
    }

    pub fn place_type(&self, place: &Place) -> Result<TypeExpr, IrError> {
        place_type(place, self)
    }

    pub fn place_needs_drop(&self, place: &Place) -> bool {
        place_needs_drop(place, self)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("place `{place}` names undeclared local _{local}")]
    UnknownLocal { place: String, local: Local },
    #[error("place `{place}`: projection {step} does not apply to type `{ty}`")]
    BadProjection { place: String, step: usize, ty: String },
}

/// Type of a place after applying all of its projections.
pub fn place_type(place: &Place, f: &FunctionBody) -> Result<TypeExpr, IrError> {
    let mut ty = f
        .locals
        .get(place.local)
        .cloned()
        .ok_or_else(|| IrError::UnknownLocal { place: place.to_string(), local: place.local })?;
    for (step, proj) in place.projections.iter().enumerate() {
        let next = match proj {
            Projection::Deref => ty.pointee().cloned(),
            Projection::Field(i) => f.adts.field_of(&ty, *i as usize),
        };
        ty = next.ok_or_else(|| IrError::BadProjection {
            place: place.to_string(),
            step,
            ty: crate::printer::type_to_string(&ty),
        })?;
    }
    Ok(ty)
}

/// True iff the place's type is not copy-eligible. Invalid places never
/// need drop.
pub fn place_needs_drop(place: &Place, f: &FunctionBody) -> bool {
    place_type(place, f).is_ok_and(|t| f.adts.needs_drop(&t))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicKind {
    GetPtr,
    UnsafeConstruct,
    Forget,
    Uninitialized,
    Clone,
    BoxFromRaw,
    BoxIntoRaw,
    Opaque,
}

impl IntrinsicKind {
    pub const ALL: [IntrinsicKind; 8] = [
        IntrinsicKind::GetPtr,
        IntrinsicKind::UnsafeConstruct,
        IntrinsicKind::Forget,
        IntrinsicKind::Uninitialized,
        IntrinsicKind::Clone,
        IntrinsicKind::BoxFromRaw,
        IntrinsicKind::BoxIntoRaw,
        IntrinsicKind::Opaque,
    ];

    /// Kinds that build or drop pointers without reading through them.
    pub fn is_pointer_plumbing(self) -> bool {
        matches!(
            self,
            IntrinsicKind::GetPtr
                | IntrinsicKind::UnsafeConstruct
                | IntrinsicKind::BoxFromRaw
                | IntrinsicKind::BoxIntoRaw
                | IntrinsicKind::Forget
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntrinsicKind::GetPtr => "get_ptr",
            IntrinsicKind::UnsafeConstruct => "unsafe_construct",
            IntrinsicKind::Forget => "forget",
            IntrinsicKind::Uninitialized => "uninitialized",
            IntrinsicKind::Clone => "clone",
            IntrinsicKind::BoxFromRaw => "box_from_raw",
            IntrinsicKind::BoxIntoRaw => "box_into_raw",
            IntrinsicKind::Opaque => "opaque",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternDecl {
    pub name: String,
    pub params: Vec<TypeExpr>,
    pub ret: TypeExpr,
    pub kind: IntrinsicKind,
}

pub enum Callee<'a> {
    Body(&'a FunctionBody),
    Intrinsic(&'a ExternDecl),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub adts: Arc<AdtTable>,
    pub functions: BTreeMap<String, FunctionBody>,
    pub externs: BTreeMap<String, ExternDecl>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionBody> {
        self.functions.get(name)
    }

    pub fn callee(&self, name: &str) -> Option<Callee<'_>> {
        if let Some(body) = self.functions.get(name) {
            return Some(Callee::Body(body));
        }
        self.externs.get(name).map(Callee::Intrinsic)
    }

    /// Defined callees of each function, from reachable call terminators.
    pub fn call_graph(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut graph = BTreeMap::new();
        for (name, body) in &self.functions {
            let reachable = body.reachable();
            let mut callees: Vec<&str> = Vec::new();
            for (b, block) in body.blocks.iter().enumerate() {
                if !reachable[b] {
                    continue;
                }
                if let Terminator::Call { callee, .. } = &block.terminator {
                    if let Some((key, _)) = self.functions.get_key_value(callee.as_str()) {
                        if !callees.contains(&key.as_str()) {
                            callees.push(key.as_str());
                        }
                    }
                }
            }
            graph.insert(name.as_str(), callees);
        }
        graph
    }
}
