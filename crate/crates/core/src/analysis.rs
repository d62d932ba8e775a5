//! Per-function pipeline and the inter-procedural summary cache.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::alias::{CallEffect, FunctionSummary, PlaceKey};
use crate::detect::{
    merge_path_results, scan_path, scan_semi_lattice, BugFlags, CallSite, DefinitionRecord, Diagnostic, ScanContext,
};
use crate::ir::{BlockId, Callee, FunctionBody, IntrinsicKind, Program, Terminator};
use crate::paths::{extract_paths, reverse_postorder, DEFAULT_PATH_THRESHOLD};

/// Re-analysis rounds allowed for one recursive cycle.
pub const RECURSION_ITERATION_CAP: usize = 10;

/// Treatment of `opaque` externs, whose bodies are unknown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum OpaqueCalleeMode {
    /// The result may alias every unfiltered argument.
    #[default]
    AliasAll,
    /// The result aliases nothing.
    AliasNone,
}

impl OpaqueCalleeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OpaqueCalleeMode::AliasAll => "alias-all",
            OpaqueCalleeMode::AliasNone => "alias-none",
        }
    }
}

impl fmt::Display for OpaqueCalleeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpaqueCalleeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alias-all" => Ok(OpaqueCalleeMode::AliasAll),
            "alias-none" => Ok(OpaqueCalleeMode::AliasNone),
            _ => Err(format!("unknown opaque-callee mode `{s}` (expected alias-all or alias-none)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub path_threshold: usize,
    pub opaque_mode: OpaqueCalleeMode,
    /// Keep the final alias partition of every path of this function.
    pub dump_aliases: Option<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { path_threshold: DEFAULT_PATH_THRESHOLD, opaque_mode: OpaqueCalleeMode::AliasAll, dump_aliases: None }
    }
}

/// Everything learned about one function.
#[derive(Clone, Debug)]
pub struct FunctionReport {
    pub name: String,
    pub diagnostics: Vec<Diagnostic>,
    pub summary: FunctionSummary,
    /// Valuable paths, or the single pseudo-path in fallback mode.
    pub paths: Vec<Vec<BlockId>>,
    pub fallback: bool,
    /// Times the body was analysed (more than one inside recursion).
    pub iterations: usize,
    pub partitions: Vec<(Vec<BlockId>, Vec<Vec<PlaceKey>>)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    /// Summary queries made from call sites.
    pub queries: usize,
}

struct Frame {
    name: String,
    /// Lowest stack index this frame's analysis reached through recursion.
    low: usize,
    /// Functions computed under this frame that depend on it.
    members: Vec<String>,
}

/// Summaries keyed by function name, plus the in-progress stack used to
/// detect recursion.
#[derive(Default)]
pub struct SummaryCache {
    stable: BTreeMap<String, FunctionSummary>,
    provisional: BTreeMap<String, FunctionSummary>,
    stack: Vec<Frame>,
    pub stats: CacheStats,
}

impl SummaryCache {
    pub fn get(&self, name: &str) -> Option<&FunctionSummary> {
        self.stable.get(name)
    }

    pub fn in_progress(&self) -> Vec<&str> {
        self.stack.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.stable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stable.is_empty()
    }
}

enum Resolved {
    Summary(FunctionSummary),
    Intrinsic(IntrinsicKind),
    AliasAll,
    Nothing,
}

pub struct Analyzer<'p> {
    program: &'p Program,
    config: AnalysisConfig,
    pub cache: SummaryCache,
    reports: BTreeMap<String, FunctionReport>,
    notes: Vec<String>,
}

impl<'p> Analyzer<'p> {
    pub fn new(program: &'p Program, config: AnalysisConfig) -> Self {
        Analyzer { program, config, cache: SummaryCache::default(), reports: BTreeMap::new(), notes: Vec::new() }
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn report(&self, name: &str) -> Option<&FunctionReport> {
        self.reports.get(name)
    }

    /// Summary of `name` for a call site: cached, provisional while its
    /// recursion is unresolved, or computed now.
    pub fn summarize(&mut self, name: &str) -> FunctionSummary {
        self.cache.stats.queries += 1;
        if let Some(s) = self.cache.stable.get(name) {
            self.cache.stats.hits += 1;
            return s.clone();
        }
        if let Some(i) = self.cache.stack.iter().position(|f| f.name == name) {
            let top = self.cache.stack.last_mut().expect("stack is non-empty");
            top.low = top.low.min(i);
            if let Some(s) = self.cache.provisional.get(name) {
                return s.clone();
            }
            return FunctionSummary::empty(self.program.function(name).expect("defined function"));
        }
        self.compute(name)
    }

    /// Make sure `name` has a final summary without counting a call-site query.
    pub fn ensure(&mut self, name: &str) -> FunctionSummary {
        if let Some(s) = self.cache.stable.get(name) {
            return s.clone();
        }
        self.compute(name)
    }

    fn compute(&mut self, name: &str) -> FunctionSummary {
        self.cache.stats.misses += 1;
        let f = self.program.function(name).expect("defined function");
        let idx = self.cache.stack.len();
        self.cache.stack.push(Frame { name: name.to_string(), low: usize::MAX, members: Vec::new() });
        let mut previous: Option<BTreeMap<String, FunctionSummary>> = None;
        let mut iteration = 0;
        loop {
            iteration += 1;
            let (mut report, summary) = self.analyze_body(f);
            report.iterations = iteration;
            self.cache.provisional.insert(name.to_string(), summary.clone());
            self.reports.insert(name.to_string(), report);
            let frame = self.cache.stack.last_mut().expect("own frame");
            if frame.low == usize::MAX {
                self.finish(true);
                return self.cache.stable[name].clone();
            }
            if frame.low < idx {
                // Part of a cycle headed further down the stack.
                let frame = self.cache.stack.pop().expect("own frame");
                let parent = self.cache.stack.last_mut().expect("cycle head below");
                parent.low = parent.low.min(frame.low);
                parent.members.push(frame.name);
                parent.members.extend(frame.members);
                return summary;
            }
            let mut snapshot: BTreeMap<String, FunctionSummary> = BTreeMap::new();
            snapshot.insert(name.to_string(), summary.clone());
            for m in &frame.members {
                if let Some(s) = self.cache.provisional.get(m) {
                    snapshot.insert(m.clone(), s.clone());
                }
            }
            if previous.as_ref() == Some(&snapshot) {
                self.finish(true);
                return self.cache.stable[name].clone();
            }
            if iteration >= RECURSION_ITERATION_CAP {
                self.notes.push(format!(
                    "warning: recursion through `{name}` did not reach a fixed point in {RECURSION_ITERATION_CAP} iterations"
                ));
                self.finish(false);
                return self.cache.stable[name].clone();
            }
            // Grow monotonically: the next round starts from the join.
            if let Some(prev) = &previous {
                for (n, s) in prev {
                    if let Some(cur) = self.cache.provisional.get_mut(n) {
                        cur.join(s);
                    }
                }
            }
            previous = Some(
                snapshot.keys().filter_map(|n| self.cache.provisional.get(n).map(|s| (n.clone(), s.clone()))).collect(),
            );
            let frame = self.cache.stack.last_mut().expect("own frame");
            frame.low = usize::MAX;
            frame.members.clear();
        }
    }

    fn finish(&mut self, stable: bool) {
        let frame = self.cache.stack.pop().expect("own frame");
        for n in std::iter::once(&frame.name).chain(&frame.members) {
            if let Some(mut s) = self.cache.provisional.remove(n) {
                s.stable = stable;
                if let Some(r) = self.reports.get_mut(n) {
                    r.summary = s.clone();
                }
                self.cache.stable.insert(n.clone(), s);
            }
        }
    }

    fn resolve_calls(&mut self, f: &FunctionBody) -> BTreeMap<BlockId, Resolved> {
        let reachable = f.reachable();
        let mut out = BTreeMap::new();
        for (b, block) in f.blocks.iter().enumerate() {
            let Terminator::Call { callee, .. } = &block.terminator else {
                continue;
            };
            if !reachable[b] {
                continue;
            }
            let resolved = match self.program.callee(callee) {
                Some(Callee::Body(_)) => Resolved::Summary(self.summarize(callee)),
                Some(Callee::Intrinsic(decl)) => match (decl.kind, self.config.opaque_mode) {
                    (IntrinsicKind::Opaque, OpaqueCalleeMode::AliasAll) => Resolved::AliasAll,
                    (IntrinsicKind::Opaque, OpaqueCalleeMode::AliasNone) => Resolved::Nothing,
                    (kind, _) => Resolved::Intrinsic(kind),
                },
                None => Resolved::Nothing,
            };
            out.insert(b, resolved);
        }
        out
    }

    /// One full pass over `f`: paths, alias analysis and detection.
    fn analyze_body(&mut self, f: &FunctionBody) -> (FunctionReport, FunctionSummary) {
        let resolved = self.resolve_calls(f);
        let calls: BTreeMap<BlockId, CallSite<'_>> = resolved
            .iter()
            .map(|(b, r)| {
                let site = match r {
                    Resolved::Summary(s) => CallSite { effect: CallEffect::Summary(s), taints_dest: s.flags.dp },
                    Resolved::Intrinsic(k) => CallSite { effect: CallEffect::Intrinsic(*k), taints_dest: false },
                    Resolved::AliasAll => CallSite { effect: CallEffect::AliasAll, taints_dest: false },
                    Resolved::Nothing => CallSite { effect: CallEffect::Nothing, taints_dest: false },
                };
                (*b, site)
            })
            .collect();
        let template = FunctionSummary::empty(f);
        let (graph, pathset) = extract_paths(f, self.config.path_threshold);
        let defs = DefinitionRecord::build(f);
        let ctx = ScanContext { f, graph: &graph, defs: &defs, calls: &calls, template: &template };
        let (paths, outcomes) = if pathset.fallback {
            let order = reverse_postorder(f);
            let outcome = scan_semi_lattice(&ctx, &order);
            (vec![order], vec![outcome])
        } else {
            let paths: Vec<Vec<BlockId>> = pathset.paths.into_iter().map(|p| p.blocks).collect();
            let outcomes = paths.iter().map(|p| scan_path(&ctx, p)).collect();
            (paths, outcomes)
        };
        let mut summary = template.clone();
        let keep = self.config.dump_aliases.as_deref() == Some(f.name.as_str());
        let mut partitions = Vec::new();
        for (path, o) in paths.iter().zip(&outcomes) {
            if let Some(m) = &o.ret_arg {
                for (row, new) in summary.ret_arg_alias.iter_mut().zip(m) {
                    for (v, n) in row.iter_mut().zip(new) {
                        *v |= *n;
                    }
                }
            }
            if keep {
                partitions.push((path.clone(), o.partition.clone()));
            }
        }
        let (diagnostics, flags) = merge_path_results(outcomes);
        summary.flags = flags;
        let report = FunctionReport {
            name: f.name.clone(),
            diagnostics,
            summary: summary.clone(),
            paths,
            fallback: pathset.fallback,
            iterations: 1,
            partitions,
        };
        (report, summary)
    }
}

/// Result of analysing a whole program.
#[derive(Clone, Debug)]
pub struct ProgramAnalysis {
    /// Reports in function-name order.
    pub functions: Vec<FunctionReport>,
    pub stats: CacheStats,
    pub notes: Vec<String>,
}

impl ProgramAnalysis {
    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.functions.iter().flat_map(|r| r.diagnostics.iter())
    }

    pub fn function(&self, name: &str) -> Option<&FunctionReport> {
        self.functions.iter().find(|r| r.name == name)
    }

    pub fn flags(&self) -> BugFlags {
        self.functions.iter().fold(BugFlags::default(), |acc, r| acc.union(r.summary.flags))
    }
}

/// Analyse every function. Callers are visited before callees so each
/// callee is first summarised on demand from a call site.
pub fn analyze_program(program: &Program, config: &AnalysisConfig) -> ProgramAnalysis {
    let mut analyzer = Analyzer::new(program, config.clone());
    let graph = program.call_graph();
    let called: BTreeSet<&str> = graph.values().flatten().copied().collect();
    let roots = program.functions.keys().filter(|n| !called.contains(n.as_str()));
    for name in roots.chain(program.functions.keys()) {
        analyzer.ensure(name);
    }
    let functions = program.functions.keys().filter_map(|n| analyzer.reports.remove(n)).collect();
    ProgramAnalysis { functions, stats: analyzer.cache.stats, notes: analyzer.notes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::BugKind;
    use crate::parser::parse_str;

    fn analyze(src: &str) -> ProgramAnalysis {
        let p = parse_str(src).unwrap_or_else(|e| panic!("{e:?}"));
        analyze_program(&p, &AnalysisConfig::default())
    }

    #[test]
    fn identity_summary() {
        let a = analyze("struct T { p: *mut u8 } fn id(_1: &mut T) -> &mut T { bb0: { _0 = move _1; return; } }");
        let s = &a.function("id").unwrap().summary;
        assert!(s.aliases(&[], 0, &[]));
        assert!(s.stable);
    }

    #[test]
    fn constant_function_is_all_false() {
        let a = analyze("fn k() -> i32 { bb0: { _0 = const 3; return; } }");
        let s = &a.function("k").unwrap().summary;
        assert!(s.ret_arg_alias.iter().flatten().all(|v| !v));
    }

    #[test]
    fn self_recursion_converges_in_two_rounds() {
        let src = "struct T { p: *mut u8 }
            fn r(_1: &mut T, _2: bool) -> &mut T {
                let _3: &mut T;
                bb0: { switchInt(_2) -> [0: bb1, otherwise: bb2]; }
                bb1: { _0 = move _1; return; }
                bb2: { _3 = call r(move _1, const false) -> bb3; }
                bb3: { _0 = move _3; return; }
            }";
        let a = analyze(src);
        let r = a.function("r").unwrap();
        assert!(r.summary.stable);
        assert!(r.summary.aliases(&[], 0, &[]));
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn callee_dp_taints_destination() {
        let src = "struct Vec { ptr: *mut u8, cap: usize, len: usize }
            fn bad(_1: Vec) -> *mut u8 {
                bb0: { _0 = copy _1.0; drop(_1) -> bb1; }
                bb1: { return; }
            }
            fn user(_1: Vec) -> () {
                let _2: *mut u8; let _3: *mut u8;
                bb0: { _2 = call bad(move _1) -> bb1; }
                bb1: { _3 = copy _2; return; }
            }";
        let a = analyze(src);
        let kinds: Vec<(String, BugKind)> = a.diagnostics().map(|d| (d.function.clone(), d.kind)).collect();
        assert_eq!(kinds, vec![("bad".into(), BugKind::Dp), ("user".into(), BugKind::Uaf)]);
    }

    #[test]
    fn cache_hits_once_per_repeat_call() {
        let src = "fn leaf() -> () { bb0: { return; } }
            fn a() -> () { let _1: (); bb0: { _1 = call leaf() -> bb1; } bb1: { _1 = call leaf() -> bb2; } bb2: { return; } }
            fn b() -> () { let _1: (); bb0: { _1 = call leaf() -> bb1; } bb1: { return; } }";
        let a = analyze(src);
        assert_eq!(a.stats.queries, 3);
        assert_eq!(a.stats.hits, 2);
        assert_eq!(a.stats.misses, 3);
    }

    #[test]
    fn opaque_mode_parses() {
        assert_eq!("alias-none".parse::<OpaqueCalleeMode>().unwrap(), OpaqueCalleeMode::AliasNone);
        assert!("maybe".parse::<OpaqueCalleeMode>().is_err());
    }
}
