//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use dropguard::alias::{apply_statement, AliasState, PlaceKey};
use dropguard::analysis::RECURSION_ITERATION_CAP;
use dropguard::corpus::{parse_annotations, run_corpus, FixtureStatus};
use dropguard::interp::{confirm, ConfirmBudget};
use dropguard::ir::{FunctionBody, Terminator};
use dropguard::paths::{extract_paths, scc_graph};
use dropguard::{analyze_program, parse_str, AnalysisConfig, BugKind, Program, ProgramAnalysis};

const PROPTEST_CASES: u32 = 1000;
const RANDOM_CFGS: usize = 500;
const RANDOM_CFG_MAX_BLOCKS: usize = 8;
const RANDOM_CFG_MAX_CYCLES: usize = 2;
const THROUGHPUT_FUNCTIONS: usize = 1000;
const THROUGHPUT_MAX_BLOCKS: usize = 20;

const PATTERN_BUDGET: Duration = Duration::from_secs(1);
const PATH_ORACLE_BUDGET: Duration = Duration::from_secs(30);
const THROUGHPUT_BUDGET: Duration = Duration::from_secs(10);

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn fixture(name: &str) -> (String, Program, ProgramAnalysis) {
    let text = std::fs::read_to_string(corpus_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let program = parse_str(&text).unwrap_or_else(|e| panic!("{name}: {e:?}"));
    let analysis = analyze_program(&program, &AnalysisConfig::default());
    (text, program, analysis)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pattern_recall() -> Verdict {
    let expected = [BugKind::Uaf, BugKind::Df, BugKind::Uaf, BugKind::Df, BugKind::Uaf, BugKind::Ima, BugKind::Ima];
    let start = Instant::now();
    for (i, kind) in expected.iter().enumerate() {
        let name = format!("pattern{}.smir", i + 1);
        let (text, _, analysis) = fixture(&name);
        let ann = parse_annotations(&text)?;
        let diags: Vec<_> = analysis.diagnostics().collect();
        ensure(diags.len() == 1, || format!("{name}: {} diagnostics", diags.len()))?;
        let d = diags[0];
        let site = &ann.expects[0];
        ensure(d.kind == *kind && d.block == site.block && d.function == site.function, || {
            format!("{name}: got {} in {} @ bb{}, expected {kind} @ bb{}", d.kind, d.function, d.block, site.block)
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < PATTERN_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("7/7 patterns exact in {:.0} ms", elapsed.as_secs_f64() * 1000.0))
}

fn has(a: &ProgramAnalysis, kind: BugKind, function: &str) -> bool {
    a.diagnostics().any(|d| d.kind == kind && d.function == function)
}

fn motivating_examples() -> Verdict {
    let (_, _, genvec) = fixture("genvec.smir");
    ensure(has(&genvec, BugKind::Dp, "genvec"), || "no DP in genvec".into())?;
    ensure(has(&genvec, BugKind::Uaf, "main"), || "no UAF in main".into())?;
    ensure(has(&genvec, BugKind::Df, "main"), || "no DF in main".into())?;

    let (_, _, read_from) = fixture("read_from.smir");
    ensure(read_from.diagnostics().any(|d| d.kind == BugKind::Ima && d.on_unwind_path), || {
        "no IMA on an unwind path in read_from".into()
    })?;

    let (_, _, forget) = fixture("genvec_forget.smir");
    let dfs: Vec<_> = forget.diagnostics().filter(|d| d.kind == BugKind::Df).collect();
    ensure(!dfs.is_empty(), || "no DF in forget variant".into())?;
    ensure(dfs.iter().all(|d| d.on_unwind_path), || "DF on a normal path in forget variant".into())?;
    ensure(forget.diagnostics().count() == dfs.len(), || "extra diagnostics in forget variant".into())?;
    Ok(format!("genvec DP+UAF+DF, read_from unwind IMA, forget variant {} unwind-only DF", dfs.len()))
}

fn loop_renewal() -> Verdict {
    let (_, _, renew) = fixture("loop_renewal.smir");
    let df = renew.diagnostics().filter(|d| d.kind == BugKind::Df).count();
    ensure(df == 0, || format!("{df} DF with renewal"))?;
    let (_, program, plain) = fixture("loop_no_renewal.smir");
    let dfs: Vec<_> = plain.diagnostics().filter(|d| d.kind == BugKind::Df).collect();
    ensure(dfs.len() == 1, || format!("{} DF without renewal", dfs.len()))?;
    let c = confirm(dfs[0], &program, &ConfirmBudget::default());
    ensure(c.is_confirmed(), || "oracle did not confirm".into())?;
    Ok("0 DF with renewal, 1 confirmed DF without".into())
}

fn switch_pruning() -> Verdict {
    let (_, _, a) = fixture("switch_chain.smir");
    let n = a.function("chain").map(|r| r.paths.len()).unwrap_or(0);
    ensure(n == 3, || format!("{n} paths"))?;
    Ok("k=5, n=3: 3 paths (243 walks unpruned)".into())
}

// ---------------------------------------------------------------------------
// Path oracle

/// Deterministic sampling source for generated inputs.
fn sampler() -> TestRunner {
    TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn pick<S: Strategy<Value = usize>>(rng: &mut TestRunner, range: S) -> usize {
    range.new_tree(rng).expect("sample").current()
}

fn random_cfg(rng: &mut TestRunner) -> String {
    let n = pick(rng, 1..=RANDOM_CFG_MAX_BLOCKS);
    let params: Vec<String> = (1..=n).map(|i| format!("_{i}: isize")).collect();
    let mut src = format!("fn f({}) -> () {{\n", params.join(", "));
    for b in 0..n {
        let term = match pick(rng, 0usize..4) {
            0 => "return;".to_string(),
            1 => format!("goto -> bb{};", pick(rng, 0..n)),
            _ => format!(
                "switchInt(_{}) -> [0: bb{}, otherwise: bb{}];",
                b + 1,
                pick(rng, 0..n),
                pick(rng, 0..n)
            ),
        };
        src.push_str(&format!("    bb{b}: {{ {term} }}\n"));
    }
    src.push('}');
    src
}

/// Exhaustive reference: mutual reachability gives the components, every
/// walk of the condensation from the entry to a sink holding an exit block
/// gives a block set, and sets contained in another set are dropped.
fn oracle_paths(f: &FunctionBody) -> BTreeSet<BTreeSet<usize>> {
    let n = f.blocks.len();
    let succ: Vec<Vec<usize>> = f.blocks.iter().map(|b| b.terminator.successors()).collect();
    let mut reach = vec![vec![false; n]; n];
    for (u, row) in reach.iter_mut().enumerate() {
        let mut stack = succ[u].clone();
        while let Some(v) = stack.pop() {
            if !row[v] {
                row[v] = true;
                stack.extend(&succ[v]);
            }
        }
    }
    let reachable: Vec<usize> = (0..n).filter(|&v| v == 0 || reach[0][v]).collect();
    let same = |u: usize, v: usize| u == v || (reach[u][v] && reach[v][u]);
    let mut comp = vec![usize::MAX; n];
    let mut members: Vec<BTreeSet<usize>> = Vec::new();
    for &u in &reachable {
        if comp[u] == usize::MAX {
            let set: BTreeSet<usize> = reachable.iter().copied().filter(|&v| same(u, v)).collect();
            for &v in &set {
                comp[v] = members.len();
            }
            members.push(set);
        }
    }
    let mut next: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); members.len()];
    for &u in &reachable {
        for &v in &succ[u] {
            if comp[u] != comp[v] {
                next[comp[u]].insert(comp[v]);
            }
        }
    }
    let is_exit = |c: usize| {
        members[c].iter().any(|&b| matches!(f.blocks[b].terminator, Terminator::Return | Terminator::Resume | Terminator::Abort))
    };
    let mut found = BTreeSet::new();
    let mut stack = vec![(comp[0], members[comp[0]].clone())];
    while let Some((c, acc)) = stack.pop() {
        if next[c].is_empty() {
            if is_exit(c) {
                found.insert(acc);
            }
            continue;
        }
        for &d in &next[c] {
            let mut a = acc.clone();
            a.extend(&members[d]);
            stack.push((d, a));
        }
    }
    found.iter().filter(|s| !found.iter().any(|t| t != *s && s.is_subset(t))).cloned().collect()
}

fn path_oracle() -> Verdict {
    let mut rng = sampler();
    let start = Instant::now();
    let mut checked = 0;
    let mut with_cycles = 0;
    while checked < RANDOM_CFGS {
        let src = random_cfg(&mut rng);
        let program = parse_str(&src).map_err(|e| format!("generated CFG rejected: {e:?}\n{src}"))?;
        let f = program.function("f").ok_or("no function")?;
        let cycles = scc_graph(f).sccs.iter().filter(|s| s.cyclic).count();
        if cycles > RANDOM_CFG_MAX_CYCLES {
            continue;
        }
        with_cycles += usize::from(cycles > 0);
        let (_, set) = extract_paths(f, usize::MAX);
        ensure(!set.fallback, || format!("fallback on\n{src}"))?;
        let got: Vec<BTreeSet<usize>> = set.paths.iter().map(|p| p.blocks.iter().copied().collect()).collect();
        let got_set: BTreeSet<_> = got.iter().cloned().collect();
        ensure(got_set.len() == got.len(), || format!("duplicate block sets on\n{src}"))?;
        let want = oracle_paths(f);
        ensure(got_set == want, || format!("mismatch on\n{src}\n got {got_set:?}\nwant {want:?}"))?;
        checked += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < PATH_ORACLE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} CFGs ({with_cycles} cyclic) equal to oracle in {:.1} s", elapsed.as_secs_f64()))
}

fn oracle_agreement() -> Verdict {
    let summary = run_corpus(&corpus_dir(), &AnalysisConfig::default(), true).map_err(|e| e.to_string())?;
    let bad: Vec<String> = summary
        .results
        .iter()
        .filter(|r| r.status != FixtureStatus::Pass)
        .map(|r| format!("{}: {:?}", r.path.display(), r.status))
        .collect();
    ensure(bad.is_empty(), || bad.join("\n"))?;
    let confirmed: usize = summary.results.iter().map(|r| r.confirmed).sum();
    Ok(format!("{} fixtures, {confirmed} true positives confirmed", summary.results.len()))
}

// ---------------------------------------------------------------------------
// Alias laws

fn runner() -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases: PROPTEST_CASES, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run_law<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

/// Naive reference: a label per node, relabelled on every union.
fn union_find_law(filtered: Vec<bool>, ops: Vec<(usize, usize)>) -> Result<(), TestCaseError> {
    let n = filtered.len();
    let mut st = AliasState::new();
    let ids: Vec<_> = filtered.iter().map(|&f| st.fresh(f)).collect();
    let mut label: Vec<usize> = (0..n).collect();
    for (a, b) in ops {
        let (a, b) = (a % n, b % n);
        st.union(ids[a], ids[b]);
        if !filtered[a] && !filtered[b] {
            let (from, to) = (label[b], label[a]);
            for l in label.iter_mut() {
                if *l == from {
                    *l = to;
                }
            }
        }
    }
    for i in 0..n {
        let r = st.find(ids[i]);
        prop_assert_eq!(st.find(r), r);
        for j in 0..n {
            prop_assert_eq!(st.same_set(ids[i], ids[j]), label[i] == label[j]);
            prop_assert_eq!(st.same_set(ids[i], ids[j]), st.same_set(ids[j], ids[i]));
        }
    }
    Ok(())
}

fn filter_gate_law(filtered: Vec<bool>, ops: Vec<(usize, usize)>) -> Result<(), TestCaseError> {
    let n = filtered.len();
    let mut st = AliasState::new();
    let ids: Vec<_> = filtered.iter().map(|&f| st.fresh(f)).collect();
    for (a, b) in ops {
        st.union(ids[a % n], ids[b % n]);
    }
    for i in (0..n).filter(|&i| filtered[i]) {
        for j in (0..n).filter(|&j| j != i) {
            prop_assert!(!st.same_set(ids[i], ids[j]));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Ref(usize),
    Copy(usize, usize),
    Move(usize, usize),
}

const MOVE_LOCALS: usize = 5;

/// Statements over `&mut S` locals `_2..` that borrow `_1` or pass borrows
/// around. The reference model tracks one class label per local.
fn move_law(ops: Vec<Op>) -> Result<(), TestCaseError> {
    let local = |i: usize| i + 2;
    let mut body = String::new();
    let mut label: Vec<usize> = (0..MOVE_LOCALS).map(|i| 100 + i).collect();
    let mut moved = [false; MOVE_LOCALS];
    let mut fresh = 200;
    for op in &ops {
        match *op {
            Op::Ref(a) => {
                body.push_str(&format!("_{} = &mut _1; ", local(a)));
                label[a] = 0;
                moved[a] = false;
            }
            Op::Copy(a, b) if a != b => {
                body.push_str(&format!("_{} = copy _{}; ", local(a), local(b)));
                label[a] = label[b];
                moved[a] = false;
            }
            Op::Move(a, b) if a != b => {
                body.push_str(&format!("_{} = move _{}; ", local(a), local(b)));
                label[a] = label[b];
                label[b] = fresh;
                fresh += 1;
                moved[a] = false;
                moved[b] = true;
            }
            _ => {}
        }
    }
    let locals: String = (0..MOVE_LOCALS).map(|i| format!("let _{}: &mut S; ", local(i))).collect();
    let src = format!("struct S {{ p: *mut u8 }}\nfn f(_1: S) -> () {{ {locals} bb0: {{ {body} return; }} }}");
    let program = parse_str(&src).map_err(|e| TestCaseError::fail(format!("{e:?}")))?;
    let f = program.function("f").expect("generated function");
    let mut st = AliasState::new();
    for s in &f.blocks[0].statements {
        apply_statement(&mut st, s, f);
    }
    let owner = st.node(&PlaceKey::local(1), false);
    for a in 0..MOVE_LOCALS {
        let na = st.node(&PlaceKey::local(local(a)), false);
        prop_assert_eq!(st.same_set(na, owner), label[a] == 0, "_{} vs _1 in {}", local(a), body);
        prop_assert_eq!(st.is_moved(&PlaceKey::local(local(a))), moved[a], "moved _{} in {}", local(a), body);
        for b in 0..MOVE_LOCALS {
            let nb = st.node(&PlaceKey::local(local(b)), false);
            prop_assert_eq!(st.same_set(na, nb), label[a] == label[b], "_{} vs _{} in {}", local(a), local(b), body);
        }
    }
    Ok(())
}

fn snapshot_law(n: usize, before: Vec<(usize, usize)>, after: Vec<(usize, usize)>) -> Result<(), TestCaseError> {
    let mut st = AliasState::new();
    let keys: Vec<PlaceKey> = (1..=n).map(PlaceKey::local).collect();
    let ids: Vec<_> = keys.iter().map(|k| st.node(k, false)).collect();
    for (a, b) in before {
        st.union(ids[a % n], ids[b % n]);
    }
    let partition = st.partition();
    let snap = st.snapshot();
    for (i, (a, b)) in after.into_iter().enumerate() {
        if i % 3 == 0 {
            st.sever(&keys[a % n], false);
            st.mark_moved(&keys[b % n]);
        } else {
            let (x, y) = (st.node(&keys[a % n], false), st.node(&keys[b % n], false));
            st.union(x, y);
        }
    }
    st.restore(&snap);
    prop_assert_eq!(st.partition(), partition);
    for k in &keys {
        prop_assert!(!st.is_moved(k));
    }
    Ok(())
}

fn alias_laws() -> Verdict {
    let nodes = || prop::collection::vec(any::<bool>(), 1..24);
    let ops = || prop::collection::vec((0usize..64, 0usize..64), 0..48);
    run_law("find/union", (nodes(), ops()), |(f, o)| union_find_law(f, o))?;
    run_law("filter gate", (nodes(), ops()), |(f, o)| filter_gate_law(f, o))?;
    let op = prop_oneof![
        (0..MOVE_LOCALS).prop_map(Op::Ref),
        (0..MOVE_LOCALS, 0..MOVE_LOCALS).prop_map(|(a, b)| Op::Copy(a, b)),
        (0..MOVE_LOCALS, 0..MOVE_LOCALS).prop_map(|(a, b)| Op::Move(a, b)),
    ];
    run_law("move transfer", prop::collection::vec(op, 0..16), move_law)?;
    run_law("snapshot/restore", (1usize..16, ops(), ops()), |(n, b, a)| snapshot_law(n, b, a))?;
    Ok(format!("4 laws x {PROPTEST_CASES} cases"))
}

fn recursion_fixed_point() -> Verdict {
    let (_, _, a) = fixture("recursion.smir");
    // Expected ret-arg matrices, rows are return suffixes and columns are
    // (parameter, suffix) pairs.
    let mut want: BTreeMap<&str, Vec<Vec<bool>>> = BTreeMap::new();
    for name in ["walk", "ping", "pong"] {
        let s = &a.function(name).ok_or("missing function")?.summary;
        let diag = s
            .ret_nodes
            .iter()
            .map(|r| s.arg_nodes.iter().map(|(p, suffix)| *p == 0 && suffix == r).collect())
            .collect();
        want.insert(name, diag);
    }
    for name in ["even", "odd"] {
        let s = &a.function(name).ok_or("missing function")?.summary;
        want.insert(name, vec![vec![false; s.arg_nodes.len()]; s.ret_nodes.len()]);
    }
    let mut rounds = Vec::new();
    for (name, matrix) in &want {
        let r = a.function(name).ok_or("missing function")?;
        ensure(r.summary.stable, || format!("{name} unstable"))?;
        ensure(r.iterations <= RECURSION_ITERATION_CAP, || format!("{name}: {} iterations", r.iterations))?;
        ensure(&r.summary.ret_arg_alias == matrix, || {
            format!("{name}: matrix {:?}, expected {matrix:?}", r.summary.ret_arg_alias)
        })?;
        ensure(r.summary.ret_arg_alias.iter().flatten().any(|v| *v) == (*name != "even" && *name != "odd"), || {
            format!("{name}: unexpected flow")
        })?;
        if r.iterations > 0 {
            rounds.push(format!("{name} {}", r.iterations));
        }
    }
    ensure(a.notes.is_empty(), || a.notes.join("; "))?;
    Ok(format!("stable; rounds: {}", rounds.join(", ")))
}

// ---------------------------------------------------------------------------
// Throughput

/// Functions that call lower-numbered functions. Returns the source, the
/// number of call sites and the number of distinct callees.
fn generated_corpus(rng: &mut TestRunner) -> (String, usize, usize) {
    let mut src = String::from("struct S { p: *mut u8, n: usize }\n");
    let mut sites = 0;
    let mut callees = BTreeSet::new();
    for i in 0..THROUGHPUT_FUNCTIONS {
        let blocks = pick(rng, 3..=THROUGHPUT_MAX_BLOCKS);
        let mut locals = String::new();
        let mut body = String::new();
        let mut next_local = 3;
        for b in 0..blocks - 1 {
            let after = b + 1;
            let term = match pick(rng, 0usize..4) {
                0 if i > 0 => {
                    let callee = pick(rng, 0..i);
                    callees.insert(callee);
                    sites += 1;
                    let (t, r) = (next_local, next_local + 1);
                    next_local += 2;
                    locals.push_str(&format!("let _{t}: &mut S; let _{r}: &mut S; "));
                    format!("_{t} = copy _1; _{r} = call f{callee}(move _{t}, copy _2) -> bb{after};")
                }
                1 => {
                    let other = (b + 2).min(blocks - 1);
                    format!("switchInt(_2) -> [0: bb{after}, otherwise: bb{other}];")
                }
                _ => format!("goto -> bb{after};"),
            };
            body.push_str(&format!("    bb{b}: {{ {term} }}\n"));
        }
        body.push_str(&format!("    bb{}: {{ _0 = copy _1; return; }}\n", blocks - 1));
        src.push_str(&format!("fn f{i}(_1: &mut S, _2: isize) -> &mut S {{\n    {locals}\n{body}}}\n"));
    }
    (src, sites, callees.len())
}

fn throughput() -> Verdict {
    let mut rng = sampler();
    let (src, sites, callees) = generated_corpus(&mut rng);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("generated.smir");
    std::fs::write(&path, &src).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_dropguard"))
        .args(["check", "--format", "structured"])
        .arg(&path)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(out.status.code() == Some(0), || {
        format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    ensure(elapsed < THROUGHPUT_BUDGET, || format!("took {elapsed:?}"))?;

    let program = parse_str(&src).map_err(|e| format!("{e:?}"))?;
    let a = analyze_program(&program, &AnalysisConfig::default());
    ensure(a.stats.misses == THROUGHPUT_FUNCTIONS, || format!("{} summaries computed", a.stats.misses))?;
    ensure(a.stats.hits == sites - callees, || {
        format!("{} cache hits, expected {sites} - {callees} = {}", a.stats.hits, sites - callees)
    })?;
    Ok(format!(
        "{THROUGHPUT_FUNCTIONS} functions in {:.2} s, {} hits = {sites} sites - {callees} callees",
        elapsed.as_secs_f64(),
        a.stats.hits
    ))
}

fn determinism() -> Verdict {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "smir"))
        .collect();
    files.sort();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_dropguard"))
            .args(["check", "--format", "structured"])
            .args(&files)
            .output()
            .map(|o| o.stdout)
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    ensure(!a.is_empty() && a == b, || "structured reports differ".into())?;
    Ok(format!("{} files, {} identical bytes", files.len(), a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("pattern recall", pattern_recall),
        ("motivating examples", motivating_examples),
        ("drop renewed inside a cycle", loop_renewal),
        ("switchInt pruning", switch_pruning),
        ("path oracle equivalence", path_oracle),
        ("oracle agreement", oracle_agreement),
        ("union-find and snapshot laws", alias_laws),
        ("recursion fixed point", recursion_fixed_point),
        ("throughput and cache", throughput),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
