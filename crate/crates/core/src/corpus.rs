//! Fixture harness: compares analyzer output with `// EXPECT` annotations.
//!
//! ```text
//! fn main() -> () {
//!     ...
//!     bb3: { drop(_1) -> bb4; } // EXPECT DF @ bb3
//! }
//! // EXPECT-NONE
//! ```
//!
//! An annotation belongs to the function it appears in (or, outside any
//! function, to the most recent one). A trailing `fp` marks an expected
//! false positive: the analyzer must report it and the oracle must not
//! confirm it.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{analyze_program, AnalysisConfig};
use crate::detect::BugKind;
use crate::interp::{all_events, confirm, ConfirmBudget};
use crate::ir::BlockId;
use crate::parser::{parse_program, SourceFile};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Expectation {
    pub kind: BugKind,
    pub function: String,
    pub block: BlockId,
    pub false_positive: bool,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in `{}` @ bb{}", self.kind, self.function, self.block)?;
        if self.false_positive {
            f.write_str(" (fp)")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotations {
    pub none: bool,
    pub expects: Vec<Expectation>,
}

fn fn_name(line: &str) -> Option<&str> {
    let rest = line.trim_start().strip_prefix("fn ")?;
    let end = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))?;
    Some(&rest[..end])
}

pub fn parse_annotations(text: &str) -> Result<Annotations, String> {
    let mut out = Annotations::default();
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(name) = fn_name(line) {
            current = Some(name.to_string());
        }
        let Some(pos) = line.find("//") else {
            continue;
        };
        let comment = line[pos + 2..].trim();
        if comment == "EXPECT-NONE" {
            out.none = true;
            continue;
        }
        let Some(rest) = comment.strip_prefix("EXPECT ") else {
            if comment.starts_with("EXPECT") {
                return Err(format!("line {line_no}: malformed annotation `{comment}`"));
            }
            continue;
        };
        let bad = || format!("line {line_no}: malformed annotation `{comment}` (expected `EXPECT KIND @ bbN [fp]`)");
        let words: Vec<&str> = rest.split_whitespace().collect();
        let (kind, block, fp) = match words.as_slice() {
            [k, "@", b] => (*k, *b, false),
            [k, "@", b, "fp"] => (*k, *b, true),
            _ => return Err(bad()),
        };
        let kind: BugKind = kind.parse().map_err(|e| format!("line {line_no}: {e}"))?;
        let block = block.strip_prefix("bb").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        let function = current.clone().ok_or_else(|| format!("line {line_no}: annotation outside any function"))?;
        out.expects.push(Expectation { kind, function, block, false_positive: fp });
    }
    if out.none && !out.expects.is_empty() {
        return Err("EXPECT-NONE combined with EXPECT annotations".into());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FixtureStatus {
    Pass,
    Fail(Vec<String>),
    Error(String),
}

#[derive(Clone, Debug)]
pub struct FixtureResult {
    pub path: PathBuf,
    pub status: FixtureStatus,
    pub expected: usize,
    pub found: usize,
    pub confirmed: usize,
    pub confirmable: usize,
}

/// Check one fixture. With `oracle`, expected true positives must be
/// confirmed, expected false positives must not be, and `EXPECT-NONE`
/// fixtures must produce no runtime events.
pub fn run_fixture(path: &Path, config: &AnalysisConfig, oracle: bool, budget: &ConfirmBudget) -> FixtureResult {
    let mut result =
        FixtureResult { path: path.to_path_buf(), status: FixtureStatus::Pass, expected: 0, found: 0, confirmed: 0, confirmable: 0 };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            result.status = FixtureStatus::Error(format!("cannot read: {e}"));
            return result;
        }
    };
    let ann = match parse_annotations(&text) {
        Ok(a) => a,
        Err(e) => {
            result.status = FixtureStatus::Error(e);
            return result;
        }
    };
    let program = match parse_program(&[SourceFile::new(path.display().to_string(), text)]) {
        Ok(p) => p,
        Err(errs) => {
            let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
            result.status = FixtureStatus::Error(msgs.join("; "));
            return result;
        }
    };
    let analysis = analyze_program(&program, config);
    let mut expected: Vec<(BugKind, String, BlockId)> =
        ann.expects.iter().map(|e| (e.kind, e.function.clone(), e.block)).collect();
    let mut found: Vec<(BugKind, String, BlockId)> =
        analysis.diagnostics().map(|d| (d.kind, d.function.clone(), d.block)).collect();
    expected.sort();
    found.sort();
    result.expected = expected.len();
    result.found = found.len();
    let mut problems = Vec::new();
    let mut missing = expected.clone();
    let mut extra = Vec::new();
    for f in &found {
        match missing.iter().position(|e| e == f) {
            Some(i) => {
                missing.remove(i);
            }
            None => extra.push(f.clone()),
        }
    }
    for (k, f, b) in &missing {
        problems.push(format!("- missing {k} in `{f}` @ bb{b}"));
    }
    for (k, f, b) in &extra {
        problems.push(format!("+ unexpected {k} in `{f}` @ bb{b}"));
    }
    if oracle {
        for e in &ann.expects {
            let diag = analysis.diagnostics().find(|d| d.kind == e.kind && d.function == e.function && d.block == e.block);
            let Some(diag) = diag else { continue };
            let confirmed = confirm(diag, &program, budget).is_confirmed();
            if e.false_positive {
                if confirmed {
                    problems.push(format!("! oracle confirmed expected false positive {e}"));
                }
            } else {
                result.confirmable += 1;
                if confirmed {
                    result.confirmed += 1;
                } else {
                    problems.push(format!("! oracle could not confirm {e}"));
                }
            }
        }
        if ann.none {
            for ev in all_events(&program, budget) {
                problems.push(format!("! oracle event in EXPECT-NONE fixture: {ev}"));
            }
        }
    }
    if !problems.is_empty() {
        result.status = FixtureStatus::Fail(problems);
    }
    result
}

#[derive(Clone, Debug, Default)]
pub struct CorpusSummary {
    pub results: Vec<FixtureResult>,
    pub warnings: Vec<String>,
}

impl CorpusSummary {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.status == FixtureStatus::Pass)
    }

    pub fn has_errors(&self) -> bool {
        self.results.iter().any(|r| matches!(r.status, FixtureStatus::Error(_)))
    }

    /// One line per fixture, followed by failure details and a tally.
    pub fn matrix(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let tag = match &r.status {
                FixtureStatus::Pass => "PASS ",
                FixtureStatus::Fail(_) => "FAIL ",
                FixtureStatus::Error(_) => "ERROR",
            };
            let name = r.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            out.push_str(&format!(
                "{tag} {name:<32} expected {:>2}  found {:>2}  confirmed {}/{}\n",
                r.expected, r.found, r.confirmed, r.confirmable
            ));
            match &r.status {
                FixtureStatus::Fail(lines) => {
                    for l in lines {
                        out.push_str(&format!("      {l}\n"));
                    }
                }
                FixtureStatus::Error(e) => out.push_str(&format!("      {e}\n")),
                FixtureStatus::Pass => {}
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        let pass = self.results.iter().filter(|r| r.status == FixtureStatus::Pass).count();
        out.push_str(&format!("{pass}/{} fixtures passed\n", self.results.len()));
        out
    }
}

/// Run every `.smir` file in `dir` (non-recursive, sorted by name).
pub fn run_corpus(dir: &Path, config: &AnalysisConfig, oracle: bool) -> std::io::Result<CorpusSummary> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "smir"))
        .collect();
    files.sort();
    let mut summary = CorpusSummary::default();
    if files.is_empty() {
        summary.warnings.push(format!("no .smir fixtures in {}", dir.display()));
    }
    let budget = ConfirmBudget::default();
    for f in files {
        summary.results.push(run_fixture(&f, config, oracle, &budget));
    }
    Ok(summary)
}
