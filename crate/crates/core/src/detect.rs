//! Taint tracking and the four invalid-drop rules along one path.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::alias::{
    apply_call, apply_statement, entry_state, key_filtered, key_type, ret_arg_matrix, AliasState, CallEffect,
    FunctionSummary, NodeId, ParamNodes, PlaceKey,
};
use crate::ir::{
    BlockId, FunctionBody, IntrinsicKind, Local, Place, RValueExpr, SourceSpan, Statement, StmtRef, Terminator,
    TypeExpr, RETURN_LOCAL,
};
use crate::paths::{internal_order, SccGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BugKind {
    /// Use after free.
    Uaf,
    /// Double free.
    Df,
    /// Invalid memory access: use or drop of uninitialized memory.
    Ima,
    /// Dangling pointer returned to the caller.
    Dp,
}

impl BugKind {
    pub const ALL: [BugKind; 4] = [BugKind::Uaf, BugKind::Df, BugKind::Ima, BugKind::Dp];

    pub fn as_str(self) -> &'static str {
        match self {
            BugKind::Uaf => "UAF",
            BugKind::Df => "DF",
            BugKind::Ima => "IMA",
            BugKind::Dp => "DP",
        }
    }
}

impl fmt::Display for BugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BugKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BugKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown bug kind `{s}` (expected UAF, DF, IMA or DP)"))
    }
}

impl Serialize for BugKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct BugFlags {
    pub uaf: bool,
    pub df: bool,
    pub ima: bool,
    pub dp: bool,
}

impl BugFlags {
    pub fn set(&mut self, kind: BugKind) {
        match kind {
            BugKind::Uaf => self.uaf = true,
            BugKind::Df => self.df = true,
            BugKind::Ima => self.ima = true,
            BugKind::Dp => self.dp = true,
        }
    }

    pub fn get(self, kind: BugKind) -> bool {
        match kind {
            BugKind::Uaf => self.uaf,
            BugKind::Df => self.df,
            BugKind::Ima => self.ima,
            BugKind::Dp => self.dp,
        }
    }

    pub fn union(self, other: BugFlags) -> BugFlags {
        BugFlags {
            uaf: self.uaf || other.uaf,
            df: self.df || other.df,
            ima: self.ima || other.ima,
            dp: self.dp || other.dp,
        }
    }

    pub fn any(self) -> bool {
        self.uaf || self.df || self.ima || self.dp
    }
}

fn display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: BugKind,
    pub function: String,
    pub block: BlockId,
    pub statement: StmtRef,
    #[serde(serialize_with = "display")]
    pub place: Place,
    pub witness_path: Vec<BlockId>,
    pub span: SourceSpan,
    pub on_unwind_path: bool,
}

pub type DiagnosticKey = (BugKind, String, BlockId, StmtRef, String);

impl Diagnostic {
    pub fn key(&self) -> DiagnosticKey {
        (self.kind, self.function.clone(), self.block, self.statement, self.place.to_string())
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} in `{}` at bb{}[{}] on `{}`",
            self.span, self.kind, self.function, self.block, self.statement, self.place
        )?;
        if self.on_unwind_path {
            f.write_str(" (unwind path)")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaintOrigin {
    Dropped,
    Uninit,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Taint {
    pub node: NodeId,
    pub origin: TaintOrigin,
    pub block: BlockId,
    pub statement: StmtRef,
}

/// Deallocated or uninitialized alias nodes. Membership is by set, so a
/// taint reaches every alias of the tainted node.
#[derive(Clone, Debug, Default)]
pub struct TaintSet {
    entries: Vec<Taint>,
}

impl TaintSet {
    pub fn insert(&mut self, taint: Taint) {
        self.entries.push(taint);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Taints reaching `key`: through its own node, a prefix, or a field
    /// node already in use.
    pub fn matching(&self, alias: &AliasState, key: &PlaceKey) -> Vec<&Taint> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        let mut roots = BTreeSet::new();
        for k in key.ancestors().chain(alias.keys_under(key)) {
            if let Some(n) = alias.lookup(&k) {
                roots.insert(alias.find(n));
            }
        }
        if let Some(n) = alias.lookup(key) {
            roots.insert(alias.find(n));
        }
        self.entries.iter().filter(|t| roots.contains(&alias.find(t.node))).collect()
    }

    /// Forget uninitialized taints that alias `node`.
    pub fn clear_uninit(&mut self, alias: &AliasState, node: NodeId) {
        let root = alias.find(node);
        self.entries.retain(|t| t.origin != TaintOrigin::Uninit || alias.find(t.node) != root);
    }
}

/// Blocks where each local is (re)assigned.
#[derive(Clone, Debug, Default)]
pub struct DefinitionRecord {
    defs: BTreeMap<Local, Vec<BlockId>>,
}

impl DefinitionRecord {
    pub fn build(f: &FunctionBody) -> Self {
        let mut defs: BTreeMap<Local, Vec<BlockId>> = BTreeMap::new();
        for (b, block) in f.blocks.iter().enumerate() {
            let mut add = |p: &Place| {
                if !p.has_deref() {
                    let v = defs.entry(p.local).or_default();
                    if v.last() != Some(&b) {
                        v.push(b);
                    }
                }
            };
            for stmt in &block.statements {
                if let Statement::Assign(lhs, _) = stmt {
                    add(lhs);
                }
            }
            if let Terminator::Call { destination, .. } = &block.terminator {
                add(destination);
            }
        }
        DefinitionRecord { defs }
    }

    pub fn blocks(&self, local: Local) -> &[BlockId] {
        self.defs.get(&local).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// True if a double drop of `local` at path position `drop_at`, whose earlier
/// drop happened in block `taint_block`, is a loop artifact: the taint sits
/// in a cycle the drop lies outside of, and on every way out of the cycle the
/// local is redefined after the taint.
pub fn renewal_refinement(
    f: &FunctionBody,
    graph: &SccGraph,
    path: &[BlockId],
    drop_at: usize,
    taint_block: BlockId,
    local: Local,
    defs: &DefinitionRecord,
) -> bool {
    let Some(scc) = graph.cycle_of(taint_block) else {
        return false;
    };
    if scc.contains(path[drop_at]) {
        return false;
    }
    let Some(t_at) = path[..drop_at].iter().rposition(|&b| b == taint_block) else {
        return false;
    };
    let mut start = t_at;
    while start > 0 && scc.contains(path[start - 1]) {
        start -= 1;
    }
    let mut end = t_at;
    while end + 1 < path.len() && scc.contains(path[end + 1]) {
        end += 1;
    }
    let Some(&after) = path.get(end + 1) else {
        return false;
    };
    let order = internal_order(f, scc, path[start]);
    let pos = |b: BlockId| order.iter().position(|&x| x == b);
    let Some(t_pos) = pos(taint_block) else {
        return false;
    };
    let exits: Vec<BlockId> = scc.blocks.iter().copied().filter(|&x| f.successors(x).contains(&after)).collect();
    if exits.is_empty() {
        return false;
    }
    let redefined_on = |route: &[BlockId]| defs.blocks(local).iter().any(|r| *r != taint_block && route.contains(r));
    exits.iter().all(|&x| {
        let Some(x_pos) = pos(x) else {
            return false;
        };
        if x_pos == t_pos {
            return false;
        }
        let route: Vec<BlockId> = if x_pos > t_pos {
            order[t_pos + 1..=x_pos].to_vec()
        } else {
            order[t_pos + 1..].iter().chain(&order[..=x_pos]).copied().collect()
        };
        redefined_on(&route)
    })
}

/// How a call site behaves for this scan.
#[derive(Clone, Copy, Debug)]
pub struct CallSite<'a> {
    pub effect: CallEffect<'a>,
    /// The callee may return a dangling pointer.
    pub taints_dest: bool,
}

pub struct ScanContext<'a> {
    pub f: &'a FunctionBody,
    pub graph: &'a SccGraph,
    pub defs: &'a DefinitionRecord,
    pub calls: &'a BTreeMap<BlockId, CallSite<'a>>,
    pub template: &'a FunctionSummary,
}

#[derive(Clone, Debug, Default)]
pub struct PathOutcome {
    pub diagnostics: Vec<Diagnostic>,
    pub flags: BugFlags,
    /// Return/argument aliasing if the path returns normally.
    pub ret_arg: Option<Vec<Vec<bool>>>,
    pub partition: Vec<Vec<PlaceKey>>,
}

struct Scan<'c, 'a> {
    ctx: &'c ScanContext<'a>,
    path: &'c [BlockId],
    alias: AliasState,
    taints: TaintSet,
    on_unwind: bool,
    out: PathOutcome,
}

impl Scan<'_, '_> {
    fn report(&mut self, kind: BugKind, block: BlockId, statement: StmtRef, place: Place) {
        let f = self.ctx.f;
        let span = f.stmt_span(block, statement);
        self.out.flags.set(kind);
        self.out.diagnostics.push(Diagnostic {
            kind,
            function: f.name.clone(),
            block,
            statement,
            place,
            witness_path: self.path.to_vec(),
            span,
            on_unwind_path: self.on_unwind,
        });
    }

    /// Check a use of `place`. Returns true if something was reported.
    fn check_use(&mut self, place: &Place, block: BlockId, at: StmtRef) -> bool {
        let key = PlaceKey::of(place);
        if key_filtered(&key, self.ctx.f) {
            return false;
        }
        let mut hits = self.taints.matching(&self.alias, &key);
        // Holding a pointer to uninitialized memory is fine; reading the
        // memory itself is not.
        if key_type(&key, self.ctx.f).is_some_and(|t| t.pointee().is_some()) {
            hits.retain(|t| t.origin != TaintOrigin::Uninit);
        }
        if hits.is_empty() {
            return false;
        }
        let kind = if hits.iter().any(|t| t.origin == TaintOrigin::Uninit) { BugKind::Ima } else { BugKind::Uaf };
        self.report(kind, block, at, place.clone());
        true
    }

    fn check_uses<'p>(&mut self, places: impl IntoIterator<Item = &'p Place>, block: BlockId, at: StmtRef) {
        for p in places {
            if let Some(base) = p.deref_base() {
                if self.check_use(&base, block, at) {
                    return;
                }
            }
            if self.check_use(p, block, at) {
                return;
            }
        }
    }

    fn taint(&mut self, key: &PlaceKey, origin: TaintOrigin, block: BlockId, statement: StmtRef) {
        let f = self.ctx.f;
        let node = self.alias.node(key, key_filtered(key, f));
        self.taints.insert(Taint { node, origin, block, statement });
    }

    /// Taint a dropped value: the value itself when it owns a resource, the
    /// pointer fields already tracked, and every field that owns a resource.
    fn taint_dropped(&mut self, key: &PlaceKey, ty: &TypeExpr, block: BlockId) {
        let f = self.ctx.f;
        let at = StmtRef::Terminator;
        if matches!(ty, TypeExpr::Adt(_)) && f.adts.needs_drop(ty) {
            self.taint(key, TaintOrigin::Dropped, block, at);
        }
        for k in self.alias.keys_under(key) {
            if k != *key && !key_filtered(&k, f) {
                self.taint(&k, TaintOrigin::Dropped, block, at);
            }
        }
        if key.fields.len() >= crate::alias::PROJECTION_DEPTH_CAP {
            return;
        }
        for i in 0..f.adts.field_count(ty) {
            if let Some(ft) = f.adts.field_of(ty, i) {
                if f.adts.needs_drop(&ft) {
                    self.taint_dropped(&key.with_suffix(&[i as u32]), &ft, block);
                }
            }
        }
    }

    fn on_drop(&mut self, place: &Place, block: BlockId, path_at: Option<usize>) {
        let f = self.ctx.f;
        let key = PlaceKey::of(place);
        if self.alias.is_moved(&key) {
            return;
        }
        let Some(ty) = key_type(&key, f) else {
            return;
        };
        if !f.adts.needs_drop(&ty) {
            return;
        }
        let hits: Vec<Taint> = self.taints.matching(&self.alias, &key).into_iter().cloned().collect();
        if hits.iter().any(|t| t.origin == TaintOrigin::Uninit) {
            self.report(BugKind::Ima, block, StmtRef::Terminator, place.clone());
        } else if !hits.is_empty() {
            let suppressed = path_at.is_some_and(|at| {
                hits.iter().all(|t| {
                    renewal_refinement(f, self.ctx.graph, self.path, at, t.block, place.local, self.ctx.defs)
                })
            });
            if !suppressed {
                self.report(BugKind::Df, block, StmtRef::Terminator, place.clone());
            }
        }
        self.taint_dropped(&key, &ty, block);
    }

    fn on_return(&mut self, block: BlockId, params: &ParamNodes) {
        let f = self.ctx.f;
        let ret = Place::local(RETURN_LOCAL);
        let key = PlaceKey::of(&ret);
        if !key_filtered(&key, f) {
            let hits = self.taints.matching(&self.alias, &key);
            if hits.iter().any(|t| t.origin == TaintOrigin::Dropped) {
                self.report(BugKind::Dp, block, StmtRef::Terminator, ret);
            }
        }
        let m = ret_arg_matrix(&mut self.alias, f, self.ctx.template, params);
        match &mut self.out.ret_arg {
            Some(acc) => {
                for (row, new) in acc.iter_mut().zip(m) {
                    for (v, n) in row.iter_mut().zip(new) {
                        *v |= n;
                    }
                }
            }
            None => self.out.ret_arg = Some(m),
        }
    }

    fn block(&mut self, b: BlockId, path_at: Option<usize>, next: Option<BlockId>, params: &ParamNodes) {
        let f = self.ctx.f;
        let block = &f.blocks[b];
        for (s, stmt) in block.statements.iter().enumerate() {
            let at = StmtRef::Stmt(s);
            if let Statement::Assign(lhs, rv) = stmt {
                let reported = lhs.deref_base().is_some_and(|base| self.check_use(&base, b, at));
                if !reported {
                    if let Some(p) = rv.read_place() {
                        self.check_uses([p], b, at);
                    }
                }
                if lhs.projections.is_empty() {
                    let key = PlaceKey::of(lhs);
                    if let Some(n) = self.alias.lookup(&key) {
                        self.taints.clear_uninit(&self.alias, n);
                    }
                }
            }
            apply_statement(&mut self.alias, stmt, f);
        }
        let at = StmtRef::Terminator;
        match &block.terminator {
            Terminator::Call { args, destination, .. } => {
                let site = self.ctx.calls.get(&b).copied().unwrap_or(CallSite { effect: CallEffect::Nothing, taints_dest: false });
                if !site.effect.is_pointer_plumbing() {
                    let arg_places: Vec<&Place> = args.iter().filter_map(RValueExpr::place).collect();
                    self.check_uses(arg_places, b, at);
                }
                if let Some(base) = destination.deref_base() {
                    self.check_use(&base, b, at);
                }
                let dest_written = match next {
                    Some(n) if path_at.is_some() => !block.terminator.is_unwind_edge(n),
                    _ => true,
                };
                if dest_written && destination.projections.is_empty() {
                    let key = PlaceKey::of(destination);
                    if let Some(n) = self.alias.lookup(&key) {
                        self.taints.clear_uninit(&self.alias, n);
                    }
                }
                apply_call(&mut self.alias, f, args, destination, site.effect, dest_written);
                if dest_written {
                    let key = PlaceKey::of(destination);
                    if matches!(site.effect, CallEffect::Intrinsic(IntrinsicKind::Uninitialized)) {
                        self.taint(&key, TaintOrigin::Uninit, b, at);
                    }
                    if site.taints_dest && !key_filtered(&key, f) {
                        self.taint(&key, TaintOrigin::Dropped, b, at);
                    }
                }
            }
            Terminator::Drop { place, .. } => {
                if let Some(base) = place.deref_base() {
                    self.check_use(&base, b, at);
                }
                self.on_drop(place, b, path_at);
            }
            Terminator::SwitchInt { discriminant, .. } => {
                self.check_uses([discriminant], b, at);
            }
            Terminator::Return => self.on_return(b, params),
            Terminator::Goto(_) | Terminator::Resume | Terminator::Abort | Terminator::Panic(_) => {}
        }
    }
}

/// Run alias analysis and the detection rules along `path`.
pub fn scan_path(ctx: &ScanContext<'_>, path: &[BlockId]) -> PathOutcome {
    let (alias, params) = entry_state(ctx.f, ctx.template);
    let mut scan = Scan { ctx, path, alias, taints: TaintSet::default(), on_unwind: false, out: PathOutcome::default() };
    for (i, &b) in path.iter().enumerate() {
        let next = path.get(i + 1).copied();
        scan.block(b, Some(i), next, &params);
        if let Some(n) = next {
            if ctx.f.blocks[b].terminator.is_unwind_edge(n) {
                scan.on_unwind = true;
            }
        }
    }
    scan.out.partition = scan.alias.partition();
    scan.out
}

/// Flow-insensitive stand-in for functions with too many paths: one pass in
/// reverse postorder over a single state that only ever merges.
pub fn scan_semi_lattice(ctx: &ScanContext<'_>, order: &[BlockId]) -> PathOutcome {
    let (mut alias, params) = entry_state(ctx.f, ctx.template);
    alias.set_weak(true);
    let cleanup: BTreeSet<BlockId> = order.iter().filter_map(|&b| ctx.f.blocks[b].terminator.unwind_target()).collect();
    let mut scan = Scan { ctx, path: order, alias, taints: TaintSet::default(), on_unwind: false, out: PathOutcome::default() };
    for &b in order {
        scan.on_unwind = cleanup.contains(&b);
        scan.block(b, None, None, &params);
    }
    scan.out.partition = scan.alias.partition();
    scan.out
}

/// Union of per-path results: diagnostics deduplicated (keeping the shortest,
/// then lexicographically first, witness), flags and ret-arg matrices joined.
pub fn merge_path_results(per_path: Vec<PathOutcome>) -> (Vec<Diagnostic>, BugFlags) {
    let mut best: BTreeMap<DiagnosticKey, Diagnostic> = BTreeMap::new();
    let mut flags = BugFlags::default();
    for outcome in per_path {
        flags = flags.union(outcome.flags);
        for d in outcome.diagnostics {
            match best.get_mut(&d.key()) {
                Some(cur) => {
                    let better = (d.witness_path.len(), &d.witness_path) < (cur.witness_path.len(), &cur.witness_path);
                    if better {
                        *cur = d;
                    } else if d.witness_path == cur.witness_path {
                        cur.on_unwind_path &= d.on_unwind_path;
                    }
                }
                None => {
                    best.insert(d.key(), d);
                }
            }
        }
    }
    (best.into_values().collect(), flags)
}
