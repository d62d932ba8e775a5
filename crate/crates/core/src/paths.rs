//! Valuable-path extraction.
//!
//! Cycles are shrunk with Tarjan's algorithm, the condensation DAG is
//! unfolded into a spanning tree (pruning `switchInt` arms that contradict an
//! already pinned variant of the same discriminant), and root-to-leaf walks
//! of the tree become paths. Paths whose block set is contained in another
//! path's block set are dropped.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{BlockId, FunctionBody, Place, Statement, Terminator};

/// Default cap on the number of walks enumerated per function.
pub const DEFAULT_PATH_THRESHOLD: usize = 10_000;

/// Strongly connected components of the graph over `0..n` reachable from
/// `roots`, in reverse topological order of the condensation (sinks first).
/// Member lists are sorted.
pub fn tarjan<F>(n: usize, roots: &[usize], mut succ: F) -> Vec<Vec<usize>>
where
    F: FnMut(usize) -> Vec<usize>,
{
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;

    for &root in roots {
        if index[root] != UNVISITED {
            continue;
        }
        // Explicit call stack of (node, successors, next successor).
        let mut frames: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        frames.push((root, succ(root), 0));
        while let Some(frame) = frames.last_mut() {
            let v = frame.0;
            if frame.2 < frame.1.len() {
                let w = frame.1[frame.2];
                frame.2 += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    let ws = succ(w);
                    frames.push((w, ws, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(parent) = frames.last() {
                low[parent.0] = low[parent.0].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                out.push(comp);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scc {
    pub id: usize,
    /// Sorted member blocks.
    pub blocks: Vec<BlockId>,
    /// Members entered from outside the component (or the function entry).
    pub entry_blocks: Vec<BlockId>,
    /// True for components with more than one block or a self loop.
    pub cyclic: bool,
}

impl Scc {
    pub fn contains(&self, b: BlockId) -> bool {
        self.blocks.binary_search(&b).is_ok()
    }
}

/// SCC decomposition of a function's reachable CFG.
#[derive(Clone, Debug)]
pub struct SccGraph {
    pub sccs: Vec<Scc>,
    /// Component of each block; `None` for unreachable blocks.
    pub scc_of: Vec<Option<usize>>,
}

impl SccGraph {
    pub fn of(&self, b: BlockId) -> Option<&Scc> {
        self.scc_of.get(b).copied().flatten().map(|i| &self.sccs[i])
    }

    /// The nontrivial component containing `b`, if any.
    pub fn cycle_of(&self, b: BlockId) -> Option<&Scc> {
        self.of(b).filter(|s| s.cyclic)
    }
}

/// Tarjan decomposition of the reachable blocks, in reverse topological
/// order of the condensation.
pub fn tarjan_scc(f: &FunctionBody) -> Vec<Scc> {
    scc_graph(f).sccs
}

pub fn scc_graph(f: &FunctionBody) -> SccGraph {
    let n = f.blocks.len();
    if n == 0 {
        return SccGraph { sccs: Vec::new(), scc_of: Vec::new() };
    }
    let comps = tarjan(n, &[0], |b| f.successors(b));
    let mut scc_of = vec![None; n];
    for (i, comp) in comps.iter().enumerate() {
        for &b in comp {
            scc_of[b] = Some(i);
        }
    }
    let mut entries: Vec<BTreeSet<BlockId>> = vec![BTreeSet::new(); comps.len()];
    entries[scc_of[0].expect("entry is reachable")].insert(0);
    for (b, comp) in scc_of.iter().enumerate() {
        let Some(c) = comp else { continue };
        for s in f.successors(b) {
            if scc_of[s] != Some(*c) {
                entries[scc_of[s].expect("successor of reachable block")].insert(s);
            }
        }
    }
    let sccs = comps
        .into_iter()
        .enumerate()
        .map(|(id, blocks)| {
            let cyclic = blocks.len() > 1 || f.successors(blocks[0]).contains(&blocks[0]);
            Scc { id, blocks, entry_blocks: entries[id].iter().copied().collect(), cyclic }
        })
        .collect();
    SccGraph { sccs, scc_of }
}

/// Reverse postorder of the members of `scc` reachable from `entry` without
/// leaving the component. Each member appears exactly once.
pub fn internal_order(f: &FunctionBody, scc: &Scc, entry: BlockId) -> Vec<BlockId> {
    let mut visited = BTreeSet::new();
    let mut post = Vec::new();
    let mut frames: Vec<(BlockId, Vec<BlockId>, usize)> = vec![(entry, f.successors(entry), 0)];
    visited.insert(entry);
    while let Some(frame) = frames.last_mut() {
        if frame.2 < frame.1.len() {
            let s = frame.1[frame.2];
            frame.2 += 1;
            if scc.contains(s) && visited.insert(s) {
                frames.push((s, f.successors(s), 0));
            }
            continue;
        }
        post.push(frame.0);
        frames.pop();
    }
    post.reverse();
    post
}

/// Reverse postorder of all reachable blocks.
pub fn reverse_postorder(f: &FunctionBody) -> Vec<BlockId> {
    if f.blocks.is_empty() {
        return Vec::new();
    }
    let all = Scc { id: 0, blocks: (0..f.blocks.len()).collect(), entry_blocks: vec![0], cyclic: false };
    internal_order(f, &all, 0)
}

/// Knowledge about a discriminant along one branch of the tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pin {
    Is(String),
    /// Took the `otherwise` arm: none of these labels.
    Not(BTreeSet<String>),
}

pub type VariantContext = BTreeMap<Place, Pin>;

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub scc: usize,
    pub entry: BlockId,
    /// Member blocks in visit order.
    pub order: Vec<BlockId>,
    /// Pins in force when entering this node.
    pub context: VariantContext,
    pub children: Vec<usize>,
    /// True if the component is a single block ending in return/resume/abort.
    pub exit: bool,
}

#[derive(Clone, Debug)]
pub struct SpanningTree {
    pub nodes: Vec<TreeNode>,
    pub root: Option<usize>,
    /// Construction stopped early because the tree grew past its node cap.
    pub truncated: bool,
}

fn assigned_places(f: &FunctionBody, blocks: &[BlockId]) -> Vec<Place> {
    let mut out = Vec::new();
    for &b in blocks {
        let block = &f.blocks[b];
        for stmt in &block.statements {
            if let Statement::Assign(lhs, _) = stmt {
                out.push(lhs.clone());
            }
        }
        if let Terminator::Call { destination, .. } = &block.terminator {
            out.push(destination.clone());
        }
    }
    out
}

/// Edges leaving `block` under `ctx`, each with the context its target
/// inherits. Infeasible `switchInt` arms are dropped.
fn feasible_edges(f: &FunctionBody, block: BlockId, ctx: &VariantContext) -> Vec<(BlockId, VariantContext)> {
    let term = &f.blocks[block].terminator;
    let Terminator::SwitchInt { discriminant, arms, otherwise } = term else {
        return term.successors().into_iter().map(|s| (s, ctx.clone())).collect();
    };
    let labels: BTreeSet<String> = arms.iter().map(|(l, _)| l.clone()).collect();
    let mut out = Vec::new();
    match ctx.get(discriminant) {
        Some(Pin::Is(v)) => {
            if let Some((_, t)) = arms.iter().find(|(l, _)| l == v) {
                out.push((*t, ctx.clone()));
            } else if let Some(o) = otherwise {
                out.push((*o, ctx.clone()));
            }
        }
        pin => {
            let excluded = match pin {
                Some(Pin::Not(set)) => set.clone(),
                _ => BTreeSet::new(),
            };
            for (label, t) in arms {
                if excluded.contains(label) {
                    continue;
                }
                let mut c = ctx.clone();
                c.insert(discriminant.clone(), Pin::Is(label.clone()));
                out.push((*t, c));
            }
            if let Some(o) = otherwise {
                let mut c = ctx.clone();
                c.insert(discriminant.clone(), Pin::Not(excluded.union(&labels).cloned().collect()));
                out.push((*o, c));
            }
        }
    }
    out
}

/// Unfold the condensation DAG into a tree, resolving `switchInt` mutex
/// conflicts on the way. Stops once more than `node_cap` nodes exist.
pub fn build_spanning_tree(f: &FunctionBody, graph: &SccGraph, node_cap: usize) -> SpanningTree {
    let mut tree = SpanningTree { nodes: Vec::new(), root: None, truncated: false };
    if f.blocks.is_empty() {
        return tree;
    }
    let make = |scc: usize, entry: BlockId, context: VariantContext| {
        let comp = &graph.sccs[scc];
        let order = if comp.blocks.len() == 1 { comp.blocks.clone() } else { internal_order(f, comp, entry) };
        let exit = comp.blocks.len() == 1 && f.blocks[comp.blocks[0]].terminator.is_exit();
        TreeNode { scc, entry, order, context, children: Vec::new(), exit }
    };
    let root_scc = graph.scc_of[0].expect("entry block is reachable");
    tree.nodes.push(make(root_scc, 0, VariantContext::new()));
    tree.root = Some(0);
    let mut work = vec![0];
    while let Some(id) = work.pop() {
        let node = &tree.nodes[id];
        let mut ctx = node.context.clone();
        let kills = assigned_places(f, &node.order);
        ctx.retain(|d, _| !kills.iter().any(|k| k.is_prefix_of(d)));
        let mut seen = BTreeSet::new();
        let mut children = Vec::new();
        for &b in &node.order {
            for (s, c) in feasible_edges(f, b, &ctx) {
                let target = graph.scc_of[s].expect("successor is reachable");
                if target == node.scc {
                    continue;
                }
                if seen.insert((target, s, c.clone())) {
                    children.push((target, s, c));
                }
            }
        }
        let mut ids = Vec::with_capacity(children.len());
        for (target, s, c) in children {
            if tree.nodes.len() >= node_cap {
                tree.truncated = true;
                return tree;
            }
            ids.push(tree.nodes.len());
            tree.nodes.push(make(target, s, c));
        }
        // Depth-first order of later enumeration follows `children`.
        work.extend(ids.iter().rev());
        tree.nodes[id].children = ids;
    }
    tree
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValuablePath {
    pub blocks: Vec<BlockId>,
    pub context: VariantContext,
}

#[derive(Clone, Debug, Default)]
pub struct PathSet {
    pub paths: Vec<ValuablePath>,
    /// Too many walks: the caller should fall back to the merged
    /// (semi-lattice) mode.
    pub fallback: bool,
    /// Number of root-to-leaf walks seen before filtering.
    pub walks: usize,
}

struct BitSet(Vec<u64>);

impl BitSet {
    fn of(blocks: &[BlockId], n: usize) -> Self {
        let mut words = vec![0u64; n.div_ceil(64).max(1)];
        for &b in blocks {
            words[b / 64] |= 1 << (b % 64);
        }
        BitSet(words)
    }

    fn subset_of(&self, other: &BitSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
}

/// Drop paths whose block set is a subset of another path's. Of paths with
/// identical sets the first one is kept.
pub fn remove_dominated(paths: Vec<ValuablePath>, n_blocks: usize) -> Vec<ValuablePath> {
    let sets: Vec<BitSet> = paths.iter().map(|p| BitSet::of(&p.blocks, n_blocks)).collect();
    let keep: Vec<bool> = (0..paths.len())
        .map(|i| {
            !(0..paths.len()).any(|j| {
                j != i && sets[i].subset_of(&sets[j]) && (!sets[j].subset_of(&sets[i]) || j < i)
            })
        })
        .collect();
    paths.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

/// Depth-first root-to-leaf walks of the tree. Walks that end in a
/// return/resume/abort block become paths.
pub fn enumerate_paths(tree: &SpanningTree, n_blocks: usize, threshold: usize) -> PathSet {
    let threshold = threshold.max(1);
    let Some(root) = tree.root else {
        return PathSet::default();
    };
    if tree.truncated {
        return PathSet { paths: Vec::new(), fallback: true, walks: 0 };
    }
    let mut raw = Vec::new();
    let mut walks = 0usize;
    // (node, length of the prefix before this node)
    let mut stack = vec![(root, 0usize)];
    let mut prefix: Vec<BlockId> = Vec::new();
    while let Some((id, depth)) = stack.pop() {
        let node = &tree.nodes[id];
        prefix.truncate(depth);
        prefix.extend(&node.order);
        if node.children.is_empty() {
            walks += 1;
            if walks > threshold {
                return PathSet { paths: Vec::new(), fallback: true, walks };
            }
            if node.exit {
                raw.push(ValuablePath { blocks: prefix.clone(), context: node.context.clone() });
            }
            continue;
        }
        let len = prefix.len();
        for &c in node.children.iter().rev() {
            stack.push((c, len));
        }
    }
    PathSet { paths: remove_dominated(raw, n_blocks), fallback: false, walks }
}

/// All three steps for one function.
pub fn extract_paths(f: &FunctionBody, threshold: usize) -> (SccGraph, PathSet) {
    let graph = scc_graph(f);
    let cap = threshold.max(1).saturating_mul(graph.sccs.len() + 1);
    let tree = build_spanning_tree(f, &graph, cap);
    let paths = enumerate_paths(&tree, f.blocks.len(), threshold);
    (graph, paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_str;

    fn body(src: &str) -> FunctionBody {
        let p = parse_str(src).unwrap_or_else(|e| panic!("{e:?}"));
        p.functions.into_values().next().unwrap()
    }

    fn blocks(ps: &PathSet) -> Vec<Vec<BlockId>> {
        ps.paths.iter().map(|p| p.blocks.clone()).collect()
    }

    const DIAMOND: &str = "
        fn f(_1: bool) -> () {
            bb0: { switchInt(_1) -> [0: bb1, otherwise: bb2]; }
            bb1: { goto -> bb3; }
            bb2: { goto -> bb3; }
            bb3: { return; }
        }";

    #[test]
    fn straight_line_has_singleton_sccs() {
        let f = body("fn f() -> () { bb0: { goto -> bb1; } bb1: { goto -> bb2; } bb2: { return; } }");
        let sccs = tarjan_scc(&f);
        assert_eq!(sccs.len(), 3);
        assert!(sccs.iter().all(|s| s.blocks.len() == 1 && !s.cyclic));
        // Reverse topological: sink first.
        assert_eq!(sccs[0].blocks, vec![2]);
    }

    #[test]
    fn diamond_has_two_paths() {
        let f = body(DIAMOND);
        let (_, ps) = extract_paths(&f, DEFAULT_PATH_THRESHOLD);
        assert!(!ps.fallback);
        assert_eq!(blocks(&ps), vec![vec![0, 1, 3], vec![0, 2, 3]]);
    }

    #[test]
    fn threshold_triggers_fallback() {
        let f = body(DIAMOND);
        let (_, ps) = extract_paths(&f, 1);
        assert!(ps.fallback);
        assert!(ps.paths.is_empty());
    }

    #[test]
    fn loop_is_traversed_once() {
        let f = body(
            "fn f(_1: bool) -> () {
                bb0: { goto -> bb1; }
                bb1: { switchInt(_1) -> [0: bb2, otherwise: bb3]; }
                bb2: { goto -> bb1; }
                bb3: { return; }
            }",
        );
        let sccs = tarjan_scc(&f);
        let cyc: Vec<_> = sccs.iter().filter(|s| s.cyclic).collect();
        assert_eq!(cyc.len(), 1);
        assert_eq!(cyc[0].blocks, vec![1, 2]);
        assert_eq!(cyc[0].entry_blocks, vec![1]);
        let (_, ps) = extract_paths(&f, 100);
        assert_eq!(blocks(&ps), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn mutex_switches_prune_contradicting_arms() {
        // Two switches over _1 with variants A and B: 2 paths, not 4.
        let f = body(
            "enum E { A, B }
            fn f(_1: E) -> () {
                bb0: { switchInt(_1) -> [A: bb1, B: bb2]; }
                bb1: { goto -> bb3; }
                bb2: { goto -> bb3; }
                bb3: { switchInt(_1) -> [A: bb4, B: bb5]; }
                bb4: { goto -> bb6; }
                bb5: { goto -> bb6; }
                bb6: { return; }
            }",
        );
        let (_, ps) = extract_paths(&f, 100);
        assert_eq!(blocks(&ps), vec![vec![0, 1, 3, 4, 6], vec![0, 2, 3, 5, 6]]);
        for p in &ps.paths {
            assert_eq!(p.context.len(), 1);
        }
    }

    #[test]
    fn reassignment_between_switches_unpins() {
        let f = body(
            "enum E { A, B }
            extern fn make() -> E @intrinsic(opaque);
            fn f(_1: E) -> () {
                bb0: { switchInt(_1) -> [A: bb1, B: bb2]; }
                bb1: { goto -> bb3; }
                bb2: { goto -> bb3; }
                bb3: { _1 = call make() -> bb7; }
                bb7: { switchInt(_1) -> [A: bb4, B: bb5]; }
                bb4: { goto -> bb6; }
                bb5: { goto -> bb6; }
                bb6: { return; }
            }",
        );
        let (_, ps) = extract_paths(&f, 100);
        assert_eq!(ps.walks, 4);
        assert_eq!(ps.paths.len(), 4);
    }

    #[test]
    fn otherwise_arm_excludes_listed_labels() {
        let f = body(
            "enum E { A, B, C }
            fn f(_1: E) -> () {
                bb0: { switchInt(_1) -> [A: bb1, otherwise: bb2]; }
                bb1: { goto -> bb3; }
                bb2: { goto -> bb3; }
                bb3: { switchInt(_1) -> [A: bb4, B: bb5, C: bb8]; }
                bb4: { goto -> bb6; }
                bb5: { goto -> bb6; }
                bb8: { goto -> bb6; }
                bb6: { return; }
                bb7: { return; }
            }",
        );
        let (_, ps) = extract_paths(&f, 100);
        // A goes 1 then 4; not-A goes 2 then either 5 or 8.
        assert_eq!(blocks(&ps), vec![vec![0, 1, 3, 4, 6], vec![0, 2, 3, 5, 6], vec![0, 2, 3, 8, 6]]);
    }

    #[test]
    fn subset_paths_are_removed() {
        let ps = vec![
            ValuablePath { blocks: vec![0, 2], context: Default::default() },
            ValuablePath { blocks: vec![0, 1, 2], context: Default::default() },
            ValuablePath { blocks: vec![0, 1, 2], context: Default::default() },
        ];
        let kept = remove_dominated(ps, 3);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].blocks, vec![0, 1, 2]);
    }

    #[test]
    fn generic_tarjan_handles_deep_chains() {
        let n = 100_000;
        let comps = tarjan(n, &[0], |v| if v + 1 < n { vec![v + 1] } else { vec![] });
        assert_eq!(comps.len(), n);
    }
}
