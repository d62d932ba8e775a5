//! Flow-sensitive, field-sensitive alias sets over one path.
//!
//! Every place (with `Deref` projections stripped and field projections
//! capped at [`PROJECTION_DEPTH_CAP`]) maps to a union-find node. Strong
//! updates and moves re-point a place to a fresh node; the old node stays in
//! its set, so anything that aliased the old value keeps aliasing it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::detect::BugFlags;
use crate::ir::{FunctionBody, IntrinsicKind, Local, Place, Projection, RValueExpr, Statement, TypeExpr, RETURN_LOCAL};

/// Field projections deeper than this are truncated for analysis.
pub const PROJECTION_DEPTH_CAP: usize = 4;

/// Cap on field nodes enumerated per parameter or return value.
const MAX_SUMMARY_NODES_PER_LOCAL: usize = 32;

/// Alias-tracking identity of a place: its local plus field indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaceKey {
    pub local: Local,
    pub fields: Vec<u32>,
}

impl PlaceKey {
    pub fn local(local: Local) -> Self {
        PlaceKey { local, fields: Vec::new() }
    }

    pub fn of(place: &Place) -> Self {
        let fields = place
            .projections
            .iter()
            .filter_map(|p| match p {
                Projection::Field(i) => Some(*i),
                Projection::Deref => None,
            })
            .take(PROJECTION_DEPTH_CAP)
            .collect();
        PlaceKey { local: place.local, fields }
    }

    pub fn with_suffix(&self, suffix: &[u32]) -> Self {
        let mut fields = self.fields.clone();
        fields.extend_from_slice(suffix);
        fields.truncate(PROJECTION_DEPTH_CAP);
        PlaceKey { local: self.local, fields }
    }

    pub fn is_prefix_of(&self, other: &PlaceKey) -> bool {
        self.local == other.local && other.fields.starts_with(&self.fields)
    }

    /// Strict prefixes, shortest first.
    pub fn ancestors(&self) -> impl Iterator<Item = PlaceKey> + '_ {
        (0..self.fields.len()).map(|n| PlaceKey { local: self.local, fields: self.fields[..n].to_vec() })
    }
}

impl fmt::Display for PlaceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "_{}", self.local)?;
        for i in &self.fields {
            write!(f, ".{i}")?;
        }
        Ok(())
    }
}

/// Type reached by a key, looking through references and raw pointers
/// wherever a field is selected.
pub fn key_type(key: &PlaceKey, f: &FunctionBody) -> Option<TypeExpr> {
    let mut ty = f.locals.get(key.local)?.clone();
    for &i in &key.fields {
        while let Some(p) = ty.pointee() {
            ty = p.clone();
        }
        ty = f.adts.field_of(&ty, i as usize)?;
    }
    Some(ty)
}

pub fn key_filtered(key: &PlaceKey, f: &FunctionBody) -> bool {
    key_type(key, f).is_some_and(|t| f.adts.is_filtered(&t))
}

/// Field suffixes of `ty` (including the empty suffix) up to the depth cap.
pub fn field_suffixes(ty: &TypeExpr, f: &FunctionBody) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut stack = vec![(ty.clone(), Vec::new())];
    while let Some((ty, suffix)) = stack.pop() {
        if out.len() >= MAX_SUMMARY_NODES_PER_LOCAL {
            break;
        }
        out.push(suffix.clone());
        if suffix.len() >= PROJECTION_DEPTH_CAP {
            continue;
        }
        let mut base = ty;
        while let Some(p) = base.pointee() {
            base = p.clone();
        }
        let n = f.adts.field_count(&base).min(MAX_SUMMARY_NODES_PER_LOCAL);
        for i in (0..n).rev() {
            if let Some(ft) = f.adts.field_of(&base, i) {
                let mut s = suffix.clone();
                s.push(i as u32);
                stack.push((ft, s));
            }
        }
    }
    out.sort();
    out
}

pub type NodeId = usize;

/// Union-find partition over alias nodes plus the place → node map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AliasState {
    parent: Vec<NodeId>,
    rank: Vec<u8>,
    filtered: Vec<bool>,
    keys: BTreeMap<PlaceKey, NodeId>,
    moved: BTreeSet<PlaceKey>,
    generation: u64,
    /// Merge-only mode: strong updates and moves never sever.
    weak: bool,
}

/// Saved partition for backtracking at branch points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AliasSnapshot(AliasState);

impl AliasState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_weak(&mut self, weak: bool) {
        self.weak = weak;
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn fresh(&mut self, filtered: bool) -> NodeId {
        let id = self.parent.len();
        self.parent.push(id);
        self.rank.push(0);
        self.filtered.push(filtered);
        id
    }

    pub fn is_filtered(&self, id: NodeId) -> bool {
        self.filtered[id]
    }

    /// Current node of `key`, creating a singleton on first use.
    pub fn node(&mut self, key: &PlaceKey, filtered: bool) -> NodeId {
        if let Some(&id) = self.keys.get(key) {
            return id;
        }
        let id = self.fresh(filtered);
        self.keys.insert(key.clone(), id);
        id
    }

    pub fn lookup(&self, key: &PlaceKey) -> Option<NodeId> {
        self.keys.get(key).copied()
    }

    /// Re-point `key` at a fresh singleton. The previous node keeps its set.
    pub fn sever(&mut self, key: &PlaceKey, filtered: bool) -> NodeId {
        let id = self.fresh(filtered);
        self.keys.insert(key.clone(), id);
        id
    }

    pub fn find(&self, mut id: NodeId) -> NodeId {
        while self.parent[id] != id {
            id = self.parent[id];
        }
        id
    }

    fn find_compress(&mut self, mut id: NodeId) -> NodeId {
        while self.parent[id] != id {
            let grand = self.parent[self.parent[id]];
            self.parent[id] = grand;
            id = grand;
        }
        id
    }

    /// Merge the sets of `a` and `b`. Filtered nodes never merge. Returns
    /// true if two distinct sets were joined.
    pub fn union(&mut self, a: NodeId, b: NodeId) -> bool {
        if self.filtered[a] || self.filtered[b] {
            return false;
        }
        let (ra, rb) = (self.find_compress(a), self.find_compress(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }

    pub fn same_set(&self, a: NodeId, b: NodeId) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn keys(&self) -> impl Iterator<Item = (&PlaceKey, NodeId)> {
        self.keys.iter().map(|(k, v)| (k, *v))
    }

    /// Existing keys equal to or below `key`.
    pub fn keys_under(&self, key: &PlaceKey) -> Vec<PlaceKey> {
        self.keys.range(key.clone()..).take_while(|(k, _)| k.local == key.local).filter(|(k, _)| key.is_prefix_of(k)).map(|(k, _)| k.clone()).collect()
    }

    pub fn mark_moved(&mut self, key: &PlaceKey) {
        self.moved.insert(key.clone());
    }

    /// A place is moved-out if it or one of its prefixes was moved.
    pub fn is_moved(&self, key: &PlaceKey) -> bool {
        self.moved.contains(key) || key.ancestors().any(|a| self.moved.contains(&a))
    }

    fn clear_moved_under(&mut self, key: &PlaceKey) {
        self.moved.retain(|m| !key.is_prefix_of(m));
    }

    pub fn snapshot(&mut self) -> AliasSnapshot {
        self.generation += 1;
        AliasSnapshot(self.clone())
    }

    pub fn restore(&mut self, snap: &AliasSnapshot) {
        let generation = self.generation;
        *self = snap.0.clone();
        self.generation = generation + 1;
    }

    /// Current partition of the named places, each class sorted, classes
    /// sorted by first member.
    pub fn partition(&self) -> Vec<Vec<PlaceKey>> {
        let mut classes: BTreeMap<NodeId, Vec<PlaceKey>> = BTreeMap::new();
        for (k, id) in &self.keys {
            classes.entry(self.find(*id)).or_default().push(k.clone());
        }
        let mut out: Vec<Vec<PlaceKey>> = classes.into_values().collect();
        out.sort();
        out
    }

    /// Strong update: `key` and the fields below it get fresh identities.
    fn kill(&mut self, key: &PlaceKey, f: &FunctionBody) {
        if self.weak {
            self.node(key, key_filtered(key, f));
            self.clear_moved_under(key);
            return;
        }
        for k in self.keys_under(key) {
            let filtered = key_filtered(&k, f);
            self.sever(&k, filtered);
        }
        if !self.keys.contains_key(key) {
            self.node(key, key_filtered(key, f));
        }
        self.clear_moved_under(key);
    }

    fn merge_keys(&mut self, a: &PlaceKey, b: &PlaceKey, f: &FunctionBody) -> bool {
        let na = self.node(a, key_filtered(a, f));
        let nb = self.node(b, key_filtered(b, f));
        self.union(na, nb)
    }

    /// Pairs (lhs field, rhs field) for a whole-value transfer.
    fn field_pairs(&self, lhs: &PlaceKey, rhs: &PlaceKey) -> Vec<(PlaceKey, PlaceKey)> {
        self.keys_under(rhs)
            .into_iter()
            .map(|rk| {
                let suffix = &rk.fields[rhs.fields.len()..];
                (lhs.with_suffix(suffix), rk)
            })
            .collect()
    }

    fn move_out(&mut self, key: &PlaceKey, f: &FunctionBody) {
        if self.weak {
            self.mark_moved(key);
            return;
        }
        for k in self.keys_under(key) {
            let filtered = key_filtered(&k, f);
            self.sever(&k, filtered);
        }
        self.mark_moved(key);
    }
}

/// Alias effect of one statement.
pub fn apply_statement(state: &mut AliasState, stmt: &Statement, f: &FunctionBody) {
    let Statement::Assign(lhs, rv) = stmt else {
        // StorageLive/StorageDead are inert.
        return;
    };
    let lkey = PlaceKey::of(lhs);
    if key_filtered(&lkey, f) {
        return;
    }
    let strong = !lhs.has_deref();
    match rv {
        RValueExpr::Constant(_) => {
            if strong {
                state.kill(&lkey, f);
            }
        }
        RValueExpr::Ref(p, _) | RValueExpr::AddressOf(p, _) => {
            let rkey = PlaceKey::of(p);
            if strong {
                state.kill(&lkey, f);
            }
            state.merge_keys(&lkey, &rkey, f);
        }
        RValueExpr::UseCopy(p) | RValueExpr::UseMove(p) | RValueExpr::CastCopy(p, _) | RValueExpr::CastMove(p, _) => {
            let rkey = PlaceKey::of(p);
            let is_cast = matches!(rv, RValueExpr::CastCopy(..) | RValueExpr::CastMove(..));
            let pairs = if is_cast {
                vec![(lkey.clone(), rkey.clone())]
            } else {
                let mut v = state.field_pairs(&lkey, &rkey);
                if !v.iter().any(|(_, r)| *r == rkey) {
                    v.insert(0, (lkey.clone(), rkey.clone()));
                }
                v
            };
            // Resolve rhs nodes before the lhs is killed, so `_1 = copy _1.0`
            // style assignments see the old value.
            let resolved: Vec<(PlaceKey, NodeId)> =
                pairs.into_iter().map(|(l, r)| (l, state.node(&r, key_filtered(&r, f)))).collect();
            if strong {
                state.kill(&lkey, f);
            }
            for (l, rn) in resolved {
                let ln = state.node(&l, key_filtered(&l, f));
                state.union(ln, rn);
            }
            if rv.is_move() && !(rkey.is_prefix_of(&lkey) || lkey.is_prefix_of(&rkey)) {
                state.move_out(&rkey, f);
            }
        }
    }
}

/// Alias facts a callee contributes at a call site.
#[derive(Clone, Copy, Debug)]
pub enum CallEffect<'a> {
    Summary(&'a FunctionSummary),
    Intrinsic(IntrinsicKind),
    /// Unknown body: alias the destination with every unfiltered argument.
    AliasAll,
    Nothing,
}

impl CallEffect<'_> {
    /// Intrinsics that only move pointers around; passing a dangling
    /// pointer to them is not a use.
    pub fn is_pointer_plumbing(&self) -> bool {
        matches!(self, CallEffect::Intrinsic(k) if k.is_pointer_plumbing())
    }
}

/// Alias effect of a call terminator. `dest_written` is false when the path
/// leaves the call through its unwind edge.
pub fn apply_call(
    state: &mut AliasState,
    f: &FunctionBody,
    args: &[RValueExpr],
    dest: &Place,
    effect: CallEffect<'_>,
    dest_written: bool,
) {
    let dkey = PlaceKey::of(dest);
    let arg_keys: Vec<Option<PlaceKey>> = args.iter().map(|a| a.place().map(PlaceKey::of)).collect();
    // Argument nodes as of the call, before anything is severed.
    let mut merges: Vec<(PlaceKey, NodeId)> = Vec::new();
    if dest_written {
        let mut want: Vec<(PlaceKey, PlaceKey)> = Vec::new();
        match effect {
            CallEffect::Summary(s) => {
                for (r, a) in s.alias_pairs() {
                    if let Some(Some(ak)) = arg_keys.get(a.0) {
                        want.push((dkey.with_suffix(r), ak.with_suffix(&a.1)));
                    }
                }
            }
            CallEffect::Intrinsic(kind) => match kind {
                IntrinsicKind::GetPtr
                | IntrinsicKind::UnsafeConstruct
                | IntrinsicKind::BoxFromRaw
                | IntrinsicKind::BoxIntoRaw => {
                    if let Some(Some(ak)) = arg_keys.first() {
                        want.push((dkey.clone(), ak.clone()));
                    }
                }
                IntrinsicKind::Forget | IntrinsicKind::Uninitialized | IntrinsicKind::Clone | IntrinsicKind::Opaque => {}
            },
            CallEffect::AliasAll => {
                for ak in arg_keys.iter().flatten() {
                    if !key_filtered(ak, f) {
                        want.push((dkey.clone(), ak.clone()));
                    }
                }
            }
            CallEffect::Nothing => {}
        }
        for (d, a) in want {
            let an = state.node(&a, key_filtered(&a, f));
            merges.push((d, an));
        }
        if !dest.has_deref() && !key_filtered(&dkey, f) {
            state.kill(&dkey, f);
        }
        for (d, an) in merges {
            let dn = state.node(&d, key_filtered(&d, f));
            state.union(dn, an);
        }
    }
    for (arg, key) in args.iter().zip(&arg_keys) {
        if let (true, Some(k)) = (arg.is_move(), key) {
            if !key_filtered(k, f) {
                state.move_out(k, f);
            }
        }
    }
}

/// Cached per-function result: which return-value nodes may alias which
/// argument nodes, plus the bug flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionSummary {
    /// Field suffixes of the return local (rows).
    pub ret_nodes: Vec<Vec<u32>>,
    /// (zero-based parameter position, field suffix) (columns).
    pub arg_nodes: Vec<(usize, Vec<u32>)>,
    pub ret_arg_alias: Vec<Vec<bool>>,
    pub flags: BugFlags,
    pub stable: bool,
}

impl FunctionSummary {
    /// All-false summary shaped for `f`.
    pub fn empty(f: &FunctionBody) -> Self {
        let ret_nodes = field_suffixes(f.return_type(), f);
        let arg_nodes: Vec<(usize, Vec<u32>)> = f
            .params()
            .enumerate()
            .flat_map(|(pos, l)| field_suffixes(&f.locals[l], f).into_iter().map(move |s| (pos, s)))
            .collect();
        let ret_arg_alias = vec![vec![false; arg_nodes.len()]; ret_nodes.len()];
        FunctionSummary { ret_nodes, arg_nodes, ret_arg_alias, flags: BugFlags::default(), stable: false }
    }

    /// `(return suffix, (parameter position, parameter suffix))` pairs that
    /// alias.
    pub fn alias_pairs(&self) -> impl Iterator<Item = (&Vec<u32>, &(usize, Vec<u32>))> {
        self.ret_arg_alias.iter().enumerate().flat_map(move |(r, row)| {
            row.iter().enumerate().filter(|(_, v)| **v).map(move |(a, _)| (&self.ret_nodes[r], &self.arg_nodes[a]))
        })
    }

    pub fn aliases(&self, ret: &[u32], param: usize, suffix: &[u32]) -> bool {
        let r = self.ret_nodes.iter().position(|s| s == ret);
        let a = self.arg_nodes.iter().position(|(p, s)| *p == param && s == suffix);
        matches!((r, a), (Some(r), Some(a)) if self.ret_arg_alias[r][a])
    }

    /// Pointwise disjunction with another summary of the same function.
    pub fn join(&mut self, other: &FunctionSummary) {
        for (row, orow) in self.ret_arg_alias.iter_mut().zip(&other.ret_arg_alias) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v |= *o;
            }
        }
        self.flags = self.flags.union(other.flags);
    }

    /// Monotone growth check used by the fixed-point loop.
    pub fn includes(&self, other: &FunctionSummary) -> bool {
        self.ret_arg_alias
            .iter()
            .zip(&other.ret_arg_alias)
            .all(|(r, o)| r.iter().zip(o).all(|(a, b)| *a || !*b))
            && self.flags.union(other.flags) == self.flags
    }
}

/// Initial node of every parameter field, captured at function entry.
#[derive(Clone, Debug)]
pub struct ParamNodes {
    nodes: Vec<NodeId>,
}

/// Fresh state for analysing `f`, with nodes for every summary column.
pub fn entry_state(f: &FunctionBody, template: &FunctionSummary) -> (AliasState, ParamNodes) {
    let mut state = AliasState::new();
    let nodes = template
        .arg_nodes
        .iter()
        .map(|(pos, suffix)| {
            let key = PlaceKey::local(pos + 1).with_suffix(suffix);
            state.node(&key, key_filtered(&key, f))
        })
        .collect();
    (state, ParamNodes { nodes })
}

/// Return/argument alias matrix at a return point.
pub fn ret_arg_matrix(state: &mut AliasState, f: &FunctionBody, template: &FunctionSummary, params: &ParamNodes) -> Vec<Vec<bool>> {
    template
        .ret_nodes
        .iter()
        .map(|suffix| {
            let key = PlaceKey::local(RETURN_LOCAL).with_suffix(suffix);
            let rn = state.node(&key, key_filtered(&key, f));
            params.nodes.iter().map(|&an| !state.is_filtered(rn) && !state.is_filtered(an) && state.same_set(rn, an)).collect()
        })
        .collect()
}
