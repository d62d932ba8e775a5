//! Concrete interpreter with a shadow heap, used to confirm diagnostics.
//!
//! Values are symbolic handles: the interpreter tracks which allocation a
//! value owns or points into and the state of each allocation, nothing more.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::detect::{BugKind, Diagnostic};
use crate::ir::{
    BlockId, Callee, FunctionBody, IntrinsicKind, Literal, Place, Program, Projection, RValueExpr, Statement,
    StmtRef, Terminator, TypeExpr,
};

pub const DEFAULT_STEP_LIMIT: usize = 100_000;
pub const DEFAULT_MAX_DECISIONS: usize = 16;
const DEFAULT_MAX_RUNS: usize = 20_000;
/// How far references are followed when building or checking values.
const MAX_DEPTH: usize = 3;
/// Arrays are modelled by at most this many elements.
const MAX_ARRAY_ELEMS: u64 = 8;

pub type AllocId = usize;
pub type SlotId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pointer {
    /// Into interpreter-managed storage (a local or a hidden pointee).
    Slot(SlotId, Vec<u32>),
    Heap(AllocId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Uninit,
    /// A scalar whose value is unknown.
    Opaque,
    Scalar(i128),
    /// A discriminant pinned to a branch label.
    Tag(String),
    Ptr(Pointer),
    Agg { alloc: Option<AllocId>, fields: Vec<Value> },
    Moved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellState {
    Uninitialized,
    Allocated,
    Freed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShadowCell {
    pub id: AllocId,
    pub state: CellState,
    /// Site of the last state change.
    pub note: String,
}

/// Where to inject a panic. `function: None` means the entry function.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PanicSite {
    pub function: Option<String>,
    pub block: BlockId,
    pub at: StmtRef,
}

impl fmt::Display for PanicSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(func) = &self.function {
            write!(f, "{func}:")?;
        }
        write!(f, "bb{}:{}", self.block, self.at)
    }
}

impl FromStr for PanicSite {
    type Err = String;

    /// `bbN:S` or `FUNC:bbN:S`, where `S` is a statement index or `term`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let (function, block, at) = match parts.as_slice() {
            [b, a] => (None, *b, *a),
            [f, b, a] => (Some(f.to_string()), *b, *a),
            _ => return Err(format!("bad panic site `{s}` (expected bbN:S)")),
        };
        let block = block
            .strip_prefix("bb")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("bad block `{block}` in panic site `{s}`"))?;
        let at = match at {
            "term" | "t" => StmtRef::Terminator,
            n => StmtRef::Stmt(n.parse().map_err(|_| format!("bad statement `{n}` in panic site `{s}`"))?),
        };
        Ok(PanicSite { function, block, at })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionScript {
    /// Labels consumed, in order, by `switchInt`s on unknown values.
    pub branches: Vec<String>,
    pub panic_at: Option<PanicSite>,
    pub step_limit: usize,
}

impl Default for ExecutionScript {
    fn default() -> Self {
        ExecutionScript { branches: Vec::new(), panic_at: None, step_limit: DEFAULT_STEP_LIMIT }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExecEvent {
    pub kind: BugKind,
    pub function: String,
    pub block: BlockId,
    pub statement: StmtRef,
    pub place: String,
    pub alloc: AllocId,
    pub on_unwind_path: bool,
}

impl fmt::Display for ExecEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} in `{}` at bb{}[{}] on `{}` (alloc #{})",
            self.kind, self.function, self.block, self.statement, self.place, self.alloc
        )?;
        if self.on_unwind_path {
            f.write_str(" (unwinding)")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Returned,
    Panicked,
    Aborted,
    Timeout,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExecutionReport {
    pub events: Vec<ExecEvent>,
    pub outcome: Outcome,
    pub steps: usize,
    pub branches_used: usize,
    pub heap: Vec<ShadowCell>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("entry function `{0}` is not defined")]
    UnknownEntry(String),
    #[error("branch script exhausted at `{function}` bb{block} (choices: {})", choices.join(", "))]
    ScriptExhausted { function: String, block: BlockId, choices: Vec<String> },
    #[error("no arm of `{function}` bb{block} matches label `{label}`")]
    NoArm { function: String, block: BlockId, label: String },
}

struct Return {
    dest: Place,
    ok: BlockId,
    unwind: Option<BlockId>,
}

struct Frame<'p> {
    f: &'p FunctionBody,
    locals: Vec<SlotId>,
    block: BlockId,
    stmt: usize,
    ret: Option<Return>,
}

enum Loc {
    Slot(SlotId, Vec<u32>),
    Heap(AllocId),
    Nowhere,
}

enum Step {
    Continue,
    Done(Outcome),
}

struct Machine<'p, 's> {
    program: &'p Program,
    script: &'s ExecutionScript,
    entry: String,
    slots: Vec<Value>,
    heap: Vec<ShadowCell>,
    frames: Vec<Frame<'p>>,
    cursor: usize,
    panic_fired: bool,
    unwinding: bool,
    events: Vec<ExecEvent>,
}

fn label_matches(label: &str, n: i128) -> bool {
    match label {
        "false" => n == 0,
        "true" => n == 1,
        _ => label.parse::<i128>() == Ok(n),
    }
}

impl<'p> Machine<'p, '_> {
    fn new_alloc(&mut self, state: CellState, note: String) -> AllocId {
        let id = self.heap.len();
        self.heap.push(ShadowCell { id, state, note });
        id
    }

    fn new_slot(&mut self, v: Value) -> SlotId {
        self.slots.push(v);
        self.slots.len() - 1
    }

    fn frame(&self) -> &Frame<'p> {
        self.frames.last().expect("active frame")
    }

    fn fresh_value(&mut self, ty: &TypeExpr, owner: Option<AllocId>, depth: usize, adts: &crate::ir::AdtTable) -> Value {
        match ty {
            TypeExpr::Bool | TypeExpr::Char | TypeExpr::Int | TypeExpr::UInt | TypeExpr::Float => Value::Opaque,
            TypeExpr::RawPtr(..) => {
                let a = match owner {
                    Some(a) => a,
                    None => self.new_alloc(CellState::Allocated, "fresh".into()),
                };
                Value::Ptr(Pointer::Heap(a))
            }
            TypeExpr::Ref(inner, _) => {
                let pointee = if depth < MAX_DEPTH { self.fresh_value(inner, None, depth + 1, adts) } else { Value::Opaque };
                let s = self.new_slot(pointee);
                Value::Ptr(Pointer::Slot(s, Vec::new()))
            }
            TypeExpr::Slice(_) => Value::Agg { alloc: None, fields: Vec::new() },
            TypeExpr::Array(t, n) => {
                let fields = (0..(*n).min(MAX_ARRAY_ELEMS)).map(|_| self.fresh_value(t, owner, depth, adts)).collect();
                Value::Agg { alloc: None, fields }
            }
            TypeExpr::Tuple(ts) => {
                let fields = ts.iter().map(|t| self.fresh_value(t, owner, depth, adts)).collect();
                Value::Agg { alloc: None, fields }
            }
            TypeExpr::Adt(_) => {
                let alloc = if adts.is_copy(ty) { None } else { Some(self.new_alloc(CellState::Allocated, "fresh".into())) };
                let field_owner = alloc.or(owner);
                let n = adts.field_count(ty);
                let fields = (0..n)
                    .map(|i| match adts.field_of(ty, i) {
                        Some(ft) => self.fresh_value(&ft, field_owner, depth, adts),
                        None => Value::Opaque,
                    })
                    .collect();
                Value::Agg { alloc, fields }
            }
        }
    }

    /// A value of type `ty` that lives in allocation `alloc`.
    fn sharing_value(&mut self, ty: &TypeExpr, alloc: AllocId, adts: &crate::ir::AdtTable) -> Value {
        match ty {
            TypeExpr::RawPtr(..) | TypeExpr::Ref(..) => Value::Ptr(Pointer::Heap(alloc)),
            TypeExpr::Adt(_) => {
                let n = adts.field_count(ty);
                let fields = (0..n)
                    .map(|i| match adts.field_of(ty, i) {
                        Some(ft) => self.fresh_value(&ft, Some(alloc), 1, adts),
                        None => Value::Opaque,
                    })
                    .collect();
                Value::Agg { alloc: Some(alloc), fields }
            }
            _ => self.fresh_value(ty, Some(alloc), 1, adts),
        }
    }

    fn get(&self, slot: SlotId, proj: &[u32]) -> Option<&Value> {
        let mut v = &self.slots[slot];
        for &i in proj {
            match v {
                Value::Agg { fields, .. } => v = fields.get(i as usize)?,
                _ => return None,
            }
        }
        Some(v)
    }

    fn get_mut(&mut self, slot: SlotId, proj: &[u32]) -> &mut Value {
        let mut v = &mut self.slots[slot];
        for &i in proj {
            if !matches!(v, Value::Agg { .. }) {
                *v = Value::Agg { alloc: None, fields: Vec::new() };
            }
            let Value::Agg { fields, .. } = v else { unreachable!() };
            if fields.len() <= i as usize {
                fields.resize(i as usize + 1, Value::Uninit);
            }
            v = &mut fields[i as usize];
        }
        v
    }

    fn locate(&self, place: &Place) -> Loc {
        let frame = self.frame();
        let mut loc = Loc::Slot(frame.locals[place.local], Vec::new());
        for proj in &place.projections {
            loc = match (loc, proj) {
                (Loc::Slot(s, mut p), Projection::Field(i)) => {
                    p.push(*i);
                    Loc::Slot(s, p)
                }
                (Loc::Slot(s, p), Projection::Deref) => match self.get(s, &p) {
                    Some(Value::Ptr(Pointer::Slot(t, q))) => Loc::Slot(*t, q.clone()),
                    Some(Value::Ptr(Pointer::Heap(a))) => Loc::Heap(*a),
                    _ => Loc::Nowhere,
                },
                (Loc::Heap(a), _) => Loc::Heap(a),
                (Loc::Nowhere, _) => Loc::Nowhere,
            };
        }
        loc
    }

    fn read(&self, loc: &Loc) -> Value {
        match loc {
            Loc::Slot(s, p) => self.get(*s, p).cloned().unwrap_or(Value::Uninit),
            Loc::Heap(_) | Loc::Nowhere => Value::Opaque,
        }
    }

    fn write(&mut self, loc: &Loc, v: Value) {
        if let Loc::Slot(s, p) = loc {
            *self.get_mut(*s, p) = v;
        }
    }

    fn read_place(&self, place: &Place) -> Value {
        self.read(&self.locate(place))
    }

    fn operand(&mut self, rv: &RValueExpr) -> Value {
        let f = self.frame().f;
        match rv {
            RValueExpr::UseCopy(p) | RValueExpr::CastCopy(p, _) => self.read_place(p),
            RValueExpr::UseMove(p) | RValueExpr::CastMove(p, _) => {
                let loc = self.locate(p);
                let v = self.read(&loc);
                if f.place_needs_drop(p) {
                    self.write(&loc, Value::Moved);
                }
                v
            }
            RValueExpr::Ref(p, _) | RValueExpr::AddressOf(p, _) => match self.locate(p) {
                Loc::Slot(s, q) => Value::Ptr(Pointer::Slot(s, q)),
                Loc::Heap(a) => Value::Ptr(Pointer::Heap(a)),
                Loc::Nowhere => Value::Opaque,
            },
            RValueExpr::Constant(Literal::Int(n)) => Value::Scalar(*n),
            RValueExpr::Constant(Literal::Bool(b)) => Value::Scalar(*b as i128),
            RValueExpr::Constant(Literal::Unit) => Value::Agg { alloc: None, fields: Vec::new() },
        }
    }

    /// Allocation a pointer-like value leads to.
    fn target_alloc(&self, v: &Value, depth: usize) -> Option<AllocId> {
        match v {
            Value::Ptr(Pointer::Heap(a)) => Some(*a),
            Value::Ptr(Pointer::Slot(s, p)) if depth < MAX_DEPTH => {
                self.get(*s, p).and_then(|pv| self.target_alloc(pv, depth + 1))
            }
            Value::Agg { alloc: Some(a), .. } => Some(*a),
            Value::Agg { alloc: None, fields } => fields.iter().find_map(|f| self.target_alloc(f, depth)),
            _ => None,
        }
    }

    /// Invalid allocations reachable from `v`. Through a pointer only freed
    /// memory counts: pointing at uninitialized memory is allowed.
    fn find_invalid(&self, v: &Value, depth: usize, via_ptr: bool, out: &mut Vec<(CellState, AllocId)>) {
        let mut note = |a: AllocId, via_ptr: bool| {
            let st = self.heap[a].state;
            if st == CellState::Freed || (st == CellState::Uninitialized && !via_ptr) {
                out.push((st, a));
            }
        };
        match v {
            Value::Ptr(Pointer::Heap(a)) => note(*a, true),
            Value::Ptr(Pointer::Slot(s, p)) => {
                if depth < 2 {
                    if let Some(pv) = self.get(*s, p) {
                        self.find_invalid(pv, depth + 1, true, out);
                    }
                }
            }
            Value::Agg { alloc, fields } => {
                if let Some(a) = alloc {
                    note(*a, via_ptr);
                }
                for f in fields {
                    self.find_invalid(f, depth, via_ptr, out);
                }
            }
            _ => {}
        }
    }

    /// Uninitialized allocation owning an enclosing value of `loc`.
    fn uninit_container(&self, loc: &Loc) -> Option<AllocId> {
        let Loc::Slot(s, p) = loc else { return None };
        (0..p.len()).find_map(|n| match self.get(*s, &p[..n]) {
            Some(Value::Agg { alloc: Some(a), .. }) if self.heap[*a].state == CellState::Uninitialized => Some(*a),
            _ => None,
        })
    }

    fn event(&mut self, kind: BugKind, block: BlockId, at: StmtRef, place: &Place, alloc: AllocId) {
        let function = self.frame().f.name.clone();
        self.events.push(ExecEvent {
            kind,
            function,
            block,
            statement: at,
            place: place.to_string(),
            alloc,
            on_unwind_path: self.unwinding,
        });
    }

    fn check_use(&mut self, place: &Place, block: BlockId, at: StmtRef) -> bool {
        let loc = self.locate(place);
        let v = self.read(&loc);
        let mut bad = Vec::new();
        if let Some(a) = self.uninit_container(&loc) {
            bad.push((CellState::Uninitialized, a));
        }
        self.find_invalid(&v, 0, false, &mut bad);
        let pick = bad.iter().find(|(s, _)| *s == CellState::Uninitialized).or(bad.first());
        match pick {
            Some(&(state, a)) => {
                let kind = if state == CellState::Uninitialized { BugKind::Ima } else { BugKind::Uaf };
                self.event(kind, block, at, place, a);
                true
            }
            None => false,
        }
    }

    fn check_uses(&mut self, place: &Place, block: BlockId, at: StmtRef) {
        if let Some(base) = place.deref_base() {
            if self.check_use(&base, block, at) {
                return;
            }
        }
        self.check_use(place, block, at);
    }

    fn drop_value(&mut self, v: &Value, ty: &TypeExpr, block: BlockId, place: &Place) {
        let adts = self.frame().f.adts.clone();
        let fields = match v {
            Value::Agg { alloc: Some(a), fields } => {
                match self.heap[*a].state {
                    CellState::Freed => return self.event(BugKind::Df, block, StmtRef::Terminator, place, *a),
                    CellState::Uninitialized => return self.event(BugKind::Ima, block, StmtRef::Terminator, place, *a),
                    CellState::Allocated => {
                        let note = format!("{}:bb{block}", self.frame().f.name);
                        self.heap[*a].state = CellState::Freed;
                        self.heap[*a].note = note;
                    }
                }
                fields
            }
            Value::Agg { alloc: None, fields } => fields,
            _ => return,
        };
        for (i, fv) in fields.iter().enumerate() {
            if let Some(ft) = adts.field_of(ty, i) {
                if adts.needs_drop(&ft) {
                    self.drop_value(fv, &ft, block, &place.clone().field(i as u32));
                }
            }
        }
    }

    fn jump(&mut self, block: BlockId) {
        let frame = self.frames.last_mut().expect("active frame");
        frame.block = block;
        frame.stmt = 0;
    }

    /// Leave the current frame by unwinding until a frame has a cleanup
    /// target.
    fn resume(&mut self) -> Step {
        loop {
            let frame = self.frames.pop().expect("active frame");
            let Some(ret) = frame.ret else {
                return Step::Done(Outcome::Panicked);
            };
            if let Some(u) = ret.unwind {
                self.jump(u);
                return Step::Continue;
            }
        }
    }

    fn start_panic(&mut self) -> Step {
        self.panic_fired = true;
        self.unwinding = true;
        let frame = self.frame();
        match frame.f.blocks[frame.block].terminator.unwind_target() {
            Some(u) => {
                self.jump(u);
                Step::Continue
            }
            None => self.resume(),
        }
    }

    fn panic_here(&self, at: StmtRef) -> bool {
        if self.panic_fired {
            return false;
        }
        let Some(site) = &self.script.panic_at else {
            return false;
        };
        let frame = self.frame();
        let func = site.function.as_deref().unwrap_or(&self.entry);
        func == frame.f.name && site.block == frame.block && site.at == at
    }

    fn push_frame(&mut self, f: &'p FunctionBody, args: Vec<Value>, ret: Option<Return>) {
        let mut locals = Vec::with_capacity(f.locals.len());
        for i in 0..f.locals.len() {
            let v = if i >= 1 && i <= args.len() { args[i - 1].clone() } else { Value::Uninit };
            locals.push(self.new_slot(v));
        }
        self.frames.push(Frame { f, locals, block: 0, stmt: 0, ret });
    }

    fn statement(&mut self, stmt: &Statement, block: BlockId, at: StmtRef) {
        let Statement::Assign(lhs, rv) = stmt else {
            return;
        };
        let reported = lhs.deref_base().is_some_and(|b| self.check_use(&b, block, at));
        if !reported {
            if let Some(p) = rv.read_place() {
                self.check_uses(p, block, at);
            }
        }
        let v = self.operand(rv);
        let loc = self.locate(lhs);
        self.write(&loc, v);
    }

    fn call(
        &mut self,
        block: BlockId,
        callee: &str,
        args: &[RValueExpr],
        dest: &Place,
        ok: BlockId,
        unwind: Option<BlockId>,
    ) -> Step {
        let at = StmtRef::Terminator;
        let plumbing = matches!(self.program.callee(callee), Some(Callee::Intrinsic(d)) if d.kind.is_pointer_plumbing());
        if !plumbing {
            for a in args {
                if let Some(p) = a.place() {
                    self.check_uses(p, block, at);
                }
            }
        }
        let values: Vec<Value> = args.iter().map(|a| self.operand(a)).collect();
        match self.program.callee(callee) {
            Some(Callee::Body(body)) => {
                self.push_frame(body, values, Some(Return { dest: dest.clone(), ok, unwind }));
                Step::Continue
            }
            Some(Callee::Intrinsic(decl)) => {
                let adts = self.frame().f.adts.clone();
                let first = values.first().and_then(|v| self.target_alloc(v, 0));
                let result = match decl.kind {
                    IntrinsicKind::GetPtr | IntrinsicKind::BoxIntoRaw => match first {
                        Some(a) => Value::Ptr(Pointer::Heap(a)),
                        None => Value::Opaque,
                    },
                    IntrinsicKind::UnsafeConstruct | IntrinsicKind::BoxFromRaw => {
                        let a = match first {
                            Some(a) => a,
                            None => self.new_alloc(CellState::Allocated, callee.to_string()),
                        };
                        self.sharing_value(&decl.ret, a, &adts)
                    }
                    IntrinsicKind::Uninitialized => {
                        let a = self.new_alloc(CellState::Uninitialized, callee.to_string());
                        let n = adts.field_count(&decl.ret);
                        Value::Agg { alloc: Some(a), fields: vec![Value::Uninit; n] }
                    }
                    IntrinsicKind::Forget => Value::Agg { alloc: None, fields: Vec::new() },
                    IntrinsicKind::Clone | IntrinsicKind::Opaque => self.fresh_value(&decl.ret, None, 0, &adts),
                };
                let loc = self.locate(dest);
                self.write(&loc, result);
                self.jump(ok);
                Step::Continue
            }
            None => {
                self.jump(ok);
                Step::Continue
            }
        }
    }

    fn terminator(&mut self, block: BlockId) -> Result<Step, ExecError> {
        let f = self.frame().f;
        let at = StmtRef::Terminator;
        match &f.blocks[block].terminator {
            Terminator::Goto(t) => self.jump(*t),
            Terminator::Panic(t) => {
                self.unwinding = true;
                self.jump(*t);
            }
            Terminator::Abort => return Ok(Step::Done(Outcome::Aborted)),
            Terminator::Resume => return Ok(self.resume()),
            Terminator::Return => {
                let ret_place = Place::local(crate::ir::RETURN_LOCAL);
                let v = self.read_place(&ret_place);
                let mut bad = Vec::new();
                self.find_invalid(&v, 0, false, &mut bad);
                if let Some(&(_, a)) = bad.iter().find(|(s, _)| *s == CellState::Freed) {
                    self.event(BugKind::Dp, block, at, &ret_place, a);
                }
                let frame = self.frames.pop().expect("active frame");
                let Some(ret) = frame.ret else {
                    return Ok(Step::Done(Outcome::Returned));
                };
                let loc = self.locate(&ret.dest);
                self.write(&loc, v);
                self.jump(ret.ok);
            }
            Terminator::Call { callee, args, destination, ok, unwind } => {
                return Ok(self.call(block, callee, args, destination, *ok, *unwind));
            }
            Terminator::Drop { place, ok, .. } => {
                if let Some(base) = place.deref_base() {
                    self.check_use(&base, block, at);
                }
                let v = self.read_place(place);
                if let Ok(ty) = f.place_type(place) {
                    if f.adts.needs_drop(&ty) {
                        self.drop_value(&v, &ty, block, place);
                    }
                }
                self.jump(*ok);
            }
            Terminator::SwitchInt { discriminant, arms, otherwise } => {
                self.check_uses(discriminant, block, at);
                let target = match self.read_place(discriminant) {
                    Value::Scalar(n) => arms.iter().find(|(l, _)| label_matches(l, n)).map(|(_, t)| *t).or(*otherwise),
                    Value::Tag(l) => arms.iter().find(|(a, _)| *a == l).map(|(_, t)| *t).or(*otherwise),
                    _ => {
                        let Some(label) = self.script.branches.get(self.cursor).cloned() else {
                            let mut choices: Vec<String> = arms.iter().map(|(l, _)| l.clone()).collect();
                            if otherwise.is_some() {
                                choices.push("otherwise".into());
                            }
                            return Err(ExecError::ScriptExhausted { function: f.name.clone(), block, choices });
                        };
                        self.cursor += 1;
                        let loc = self.locate(discriminant);
                        self.write(&loc, Value::Tag(label.clone()));
                        let t = arms.iter().find(|(a, _)| *a == label).map(|(_, t)| *t).or(*otherwise);
                        if t.is_none() {
                            return Err(ExecError::NoArm { function: f.name.clone(), block, label });
                        }
                        t
                    }
                };
                match target {
                    Some(t) => self.jump(t),
                    None => {
                        return Err(ExecError::NoArm { function: f.name.clone(), block, label: "<value>".into() });
                    }
                }
            }
        }
        Ok(Step::Continue)
    }

    fn run(&mut self) -> Result<(Outcome, usize), ExecError> {
        let mut steps = 0;
        loop {
            steps += 1;
            if steps > self.script.step_limit {
                return Ok((Outcome::Timeout, steps - 1));
            }
            let (f, block, stmt) = {
                let fr = self.frame();
                (fr.f, fr.block, fr.stmt)
            };
            let bb = &f.blocks[block];
            if stmt < bb.statements.len() {
                let at = StmtRef::Stmt(stmt);
                if self.panic_here(at) {
                    if let Step::Done(o) = self.start_panic() {
                        return Ok((o, steps));
                    }
                    continue;
                }
                self.statement(&bb.statements[stmt], block, at);
                self.frames.last_mut().expect("active frame").stmt += 1;
                continue;
            }
            if self.panic_here(StmtRef::Terminator) {
                if let Step::Done(o) = self.start_panic() {
                    return Ok((o, steps));
                }
                continue;
            }
            if let Step::Done(o) = self.terminator(block)? {
                return Ok((o, steps));
            }
        }
    }
}

/// Run `entry` with fresh arguments under `script`.
pub fn execute(program: &Program, entry: &str, script: &ExecutionScript) -> Result<ExecutionReport, ExecError> {
    let f = program.function(entry).ok_or_else(|| ExecError::UnknownEntry(entry.to_string()))?;
    let mut m = Machine {
        program,
        script,
        entry: entry.to_string(),
        slots: Vec::new(),
        heap: Vec::new(),
        frames: Vec::new(),
        cursor: 0,
        panic_fired: false,
        unwinding: false,
        events: Vec::new(),
    };
    let adts = f.adts.clone();
    let args: Vec<Value> = f.params().map(|l| m.fresh_value(&f.locals[l], None, 0, &adts)).collect();
    m.push_frame(f, args, None);
    let (outcome, steps) = m.run()?;
    Ok(ExecutionReport { events: m.events, outcome, steps, branches_used: m.cursor, heap: m.heap })
}

/// Bounds on the search for a confirming execution.
#[derive(Clone, Copy, Debug)]
pub struct ConfirmBudget {
    pub max_decisions: usize,
    pub max_runs: usize,
    pub step_limit: usize,
}

impl Default for ConfirmBudget {
    fn default() -> Self {
        ConfirmBudget { max_decisions: DEFAULT_MAX_DECISIONS, max_runs: DEFAULT_MAX_RUNS, step_limit: DEFAULT_STEP_LIMIT }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Confirmation {
    Confirmed { entry: String, script: ExecutionScript },
    /// No execution within the budget reproduced the diagnostic. This is not
    /// a refutation.
    Unconfirmed { runs: usize },
}

impl Confirmation {
    pub fn is_confirmed(&self) -> bool {
        matches!(self, Confirmation::Confirmed { .. })
    }
}

/// Execute every branch script up to the decision budget. `visit` returns
/// true to stop early. Returns the number of executions.
pub fn explore(
    program: &Program,
    entry: &str,
    panic_at: Option<PanicSite>,
    budget: &ConfirmBudget,
    mut visit: impl FnMut(&ExecutionScript, &ExecutionReport) -> bool,
) -> usize {
    let mut runs = 0;
    let mut stack: Vec<Vec<String>> = vec![Vec::new()];
    while let Some(branches) = stack.pop() {
        if runs >= budget.max_runs {
            break;
        }
        runs += 1;
        let script = ExecutionScript { branches, panic_at: panic_at.clone(), step_limit: budget.step_limit };
        match execute(program, entry, &script) {
            Ok(report) => {
                if visit(&script, &report) {
                    break;
                }
            }
            Err(ExecError::ScriptExhausted { choices, .. }) if script.branches.len() < budget.max_decisions => {
                for c in choices.into_iter().rev() {
                    let mut next = script.branches.clone();
                    next.push(c);
                    stack.push(next);
                }
            }
            Err(_) => {}
        }
    }
    runs
}

/// `@panic-at` directives written in comments inside function bodies.
pub fn panic_directives(program: &Program) -> Vec<PanicSite> {
    let mut out = Vec::new();
    for f in program.functions.values() {
        for c in &f.comments {
            if let Some(rest) = c.trim().strip_prefix("@panic-at") {
                if let Ok(mut site) = rest.trim().parse::<PanicSite>() {
                    site.function.get_or_insert_with(|| f.name.clone());
                    out.push(site);
                }
            }
        }
    }
    out
}

/// Panic sites worth trying in `function`: every terminator of the given
/// blocks that has an unwind edge.
fn unwind_sites(f: &FunctionBody, blocks: &[BlockId]) -> Vec<PanicSite> {
    let mut seen = std::collections::BTreeSet::new();
    blocks
        .iter()
        .filter(|&&b| seen.insert(b))
        .filter(|&&b| matches!(f.blocks[b].terminator, Terminator::Call { unwind: Some(_), .. } | Terminator::Drop { unwind: Some(_), .. }))
        .map(|&b| PanicSite { function: Some(f.name.clone()), block: b, at: StmtRef::Terminator })
        .collect()
}

/// Search for an execution that reproduces `diag`: same kind at the same
/// function, block and statement.
pub fn confirm(diag: &Diagnostic, program: &Program, budget: &ConfirmBudget) -> Confirmation {
    let Some(f) = program.function(&diag.function) else {
        return Confirmation::Unconfirmed { runs: 0 };
    };
    let mut panics: Vec<Option<PanicSite>> = vec![None];
    panics.extend(unwind_sites(f, &diag.witness_path).into_iter().map(Some));
    panics.extend(panic_directives(program).into_iter().map(Some));
    let entries = std::iter::once(diag.function.clone())
        .chain(program.functions.keys().filter(|n| **n != diag.function).cloned())
        .collect::<Vec<_>>();
    let mut total = 0;
    for entry in &entries {
        for panic in &panics {
            let mut found = None;
            total += explore(program, entry, panic.clone(), budget, |script, report| {
                let hit = report.events.iter().any(|e| {
                    e.kind == diag.kind && e.function == diag.function && e.block == diag.block && e.statement == diag.statement
                });
                if hit {
                    found = Some(script.clone());
                }
                hit
            });
            if let Some(script) = found {
                return Confirmation::Confirmed { entry: entry.clone(), script };
            }
        }
    }
    Confirmation::Unconfirmed { runs: total }
}

/// Every event any function can produce under exhaustive scripts and
/// every panic site with an unwind edge.
pub fn all_events(program: &Program, budget: &ConfirmBudget) -> Vec<ExecEvent> {
    let directives = panic_directives(program);
    let mut events = Vec::new();
    for name in program.functions.keys() {
        let mut panics: Vec<Option<PanicSite>> = vec![None];
        for g in program.functions.values() {
            let blocks: Vec<BlockId> = (0..g.blocks.len()).collect();
            panics.extend(unwind_sites(g, &blocks).into_iter().map(Some));
        }
        panics.extend(directives.iter().cloned().map(Some));
        for panic in panics {
            explore(program, name, panic, budget, |_, report| {
                for e in &report.events {
                    if !events.contains(e) {
                        events.push(e.clone());
                    }
                }
                false
            });
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_str;

    const VEC: &str = "struct Vec { ptr: *mut u8, cap: usize, len: usize }
        extern fn get_ptr(_1: &mut Vec) -> *mut u8 @intrinsic(get_ptr);
        extern fn construct(_1: *mut u8) -> Vec @intrinsic(unsafe_construct);
        extern fn cond() -> bool @intrinsic(opaque);\n";

    fn prog(body: &str) -> Program {
        parse_str(&format!("{VEC}{body}")).unwrap_or_else(|e| panic!("{e:?}"))
    }

    #[test]
    fn double_free_through_construct() {
        let p = prog(
            "fn f(_1: Vec) -> () {
                let _2: &mut Vec; let _3: *mut u8; let _4: Vec;
                bb0: { _2 = &mut _1; _3 = call get_ptr(move _2) -> bb1; }
                bb1: { _4 = call construct(copy _3) -> bb2; }
                bb2: { drop(_1) -> bb3; }
                bb3: { drop(_4) -> bb4; }
                bb4: { return; }
            }",
        );
        let r = execute(&p, "f", &ExecutionScript::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Returned);
        assert_eq!(r.events.len(), 1);
        assert_eq!((r.events[0].kind, r.events[0].block), (BugKind::Df, 3));
    }

    #[test]
    fn clean_program_has_no_events() {
        let p = prog(
            "fn f(_1: Vec) -> () {
                let _2: Vec;
                bb0: { _2 = move _1; drop(_2) -> bb1; }
                bb1: { drop(_1) -> bb2; }
                bb2: { return; }
            }",
        );
        let r = execute(&p, "f", &ExecutionScript::default()).unwrap();
        assert!(r.events.is_empty());
    }

    #[test]
    fn script_drives_branches_and_exhaustion_is_an_error() {
        let p = prog(
            "fn f(_1: Vec) -> () {
                let _2: bool;
                bb0: { _2 = call cond() -> bb1; }
                bb1: { switchInt(_2) -> [0: bb2, otherwise: bb3]; }
                bb2: { drop(_1) -> bb3; }
                bb3: { drop(_1) -> bb4; }
                bb4: { return; }
            }",
        );
        let err = execute(&p, "f", &ExecutionScript::default()).unwrap_err();
        assert!(matches!(err, ExecError::ScriptExhausted { ref choices, .. } if choices.len() == 2));
        let s = |b: &str| ExecutionScript { branches: vec![b.into()], ..Default::default() };
        assert_eq!(execute(&p, "f", &s("0")).unwrap().events.len(), 1);
        assert!(execute(&p, "f", &s("otherwise")).unwrap().events.is_empty());
    }

    #[test]
    fn panic_injection_follows_unwind_edge() {
        let p = prog(
            "fn f(_1: Vec) -> () {
                let _2: bool;
                bb0: { _2 = call cond() -> [ok: bb1, unwind: bb2]; }
                bb1: { drop(_1) -> bb3; }
                bb2: { drop(_1) -> bb4; }
                bb3: { return; }
                bb4: { resume; }
            }",
        );
        let script = ExecutionScript { panic_at: Some("bb0:term".parse().unwrap()), ..Default::default() };
        let r = execute(&p, "f", &script).unwrap();
        assert_eq!(r.outcome, Outcome::Panicked);
        assert_eq!(r.heap.iter().filter(|c| c.state == CellState::Freed).count(), 1);
    }

    #[test]
    fn step_limit_times_out() {
        let p = prog("fn f() -> () { bb0: { goto -> bb0; } }");
        let script = ExecutionScript { step_limit: 50, ..Default::default() };
        assert_eq!(execute(&p, "f", &script).unwrap().outcome, Outcome::Timeout);
    }

    #[test]
    fn panic_site_parsing() {
        let s: PanicSite = "g:bb3:2".parse().unwrap();
        assert_eq!(s, PanicSite { function: Some("g".into()), block: 3, at: StmtRef::Stmt(2) });
        assert!("bb3".parse::<PanicSite>().is_err());
        assert_eq!(s.to_string(), "g:bb3:2");
    }
}
