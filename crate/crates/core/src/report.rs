//! Text and JSON rendering of analysis results.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::alias::PlaceKey;
use crate::analysis::ProgramAnalysis;
use crate::detect::{BugFlags, BugKind, Diagnostic};
use crate::ir::BlockId;

pub const TOOL_NAME: &str = "dropguard";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct FunctionRecord {
    pub file: String,
    pub name: String,
    pub flags: BugFlags,
    pub path_count: usize,
    pub fallback: bool,
    pub stable: bool,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<BlockId>>>,
    #[serde(skip)]
    pub partitions: Vec<(Vec<BlockId>, Vec<Vec<PlaceKey>>)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timing {
    pub parse_ms: f64,
    pub analysis_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub files: Vec<String>,
    pub functions: Vec<FunctionRecord>,
    /// Diagnostic counts per kind; kinds with no diagnostics are omitted.
    pub totals: BTreeMap<String, usize>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

fn describe(kind: BugKind) -> &'static str {
    match kind {
        BugKind::Uaf => "use after free",
        BugKind::Df => "double free",
        BugKind::Ima => "invalid memory access",
        BugKind::Dp => "dangling pointer returned",
    }
}

impl Report {
    /// Build a report from per-file analyses. `keep_paths` includes each
    /// function's paths in the output.
    pub fn new(analyses: &[(String, ProgramAnalysis)], keep_paths: bool) -> Self {
        let mut functions = Vec::new();
        let mut notes = Vec::new();
        for (file, a) in analyses {
            for r in &a.functions {
                functions.push(FunctionRecord {
                    file: file.clone(),
                    name: r.name.clone(),
                    flags: r.summary.flags,
                    path_count: r.paths.len(),
                    fallback: r.fallback,
                    stable: r.summary.stable,
                    diagnostics: r.diagnostics.clone(),
                    paths: keep_paths.then(|| r.paths.clone()),
                    partitions: r.partitions.clone(),
                });
            }
            notes.extend(a.notes.iter().map(|n| format!("{file}: {n}")));
        }
        let mut totals = BTreeMap::new();
        for d in functions.iter().flat_map(|f| &f.diagnostics) {
            *totals.entry(d.kind.as_str().to_string()).or_insert(0) += 1;
        }
        Report {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            files: analyses.iter().map(|(f, _)| f.clone()).collect(),
            functions,
            totals,
            notes,
            timing: None,
        }
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.functions.iter().flat_map(|f| f.diagnostics.iter())
    }

    pub fn diagnostic_count(&self) -> usize {
        self.totals.values().sum()
    }

    pub fn has_kind(&self, kind: BugKind) -> bool {
        self.totals.contains_key(kind.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self, dump_paths: bool) -> String {
        let mut out = String::new();
        for f in &self.functions {
            for d in &f.diagnostics {
                let at = match d.statement {
                    crate::ir::StmtRef::Stmt(i) => format!("statement {i}"),
                    crate::ir::StmtRef::Terminator => "terminator".to_string(),
                };
                let _ = writeln!(
                    out,
                    "{}: error[{}]: {} on `{}` in `{}` (bb{}, {at})",
                    d.span,
                    d.kind,
                    describe(d.kind),
                    d.place,
                    d.function,
                    d.block
                );
                let path: Vec<String> = d.witness_path.iter().map(|b| format!("bb{b}")).collect();
                let unwind = if d.on_unwind_path { " (unwind path)" } else { "" };
                let _ = writeln!(out, "  witness: {}{unwind}", path.join(" -> "));
            }
            if dump_paths {
                let mode = if f.fallback { " (merged-state fallback)" } else { "" };
                let _ = writeln!(out, "paths of `{}`{mode}:", f.name);
                for p in f.paths.iter().flatten() {
                    let blocks: Vec<String> = p.iter().map(|b| b.to_string()).collect();
                    let _ = writeln!(out, "  [{}]", blocks.join(", "));
                }
            }
            if !f.partitions.is_empty() {
                let _ = writeln!(out, "aliases of `{}`:", f.name);
                for (path, classes) in &f.partitions {
                    let blocks: Vec<String> = path.iter().map(|b| b.to_string()).collect();
                    let sets: Vec<String> = classes
                        .iter()
                        .filter(|c| c.len() > 1)
                        .map(|c| format!("{{{}}}", c.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")))
                        .collect();
                    let _ = writeln!(out, "  [{}]: {}", blocks.join(", "), if sets.is_empty() { "-".into() } else { sets.join(" ") });
                }
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let counts: Vec<String> = self.totals.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        let n = self.diagnostic_count();
        let _ = write!(out, "{n} diagnostic{} in {} function{}", if n == 1 { "" } else { "s" }, self.functions.len(), if self.functions.len() == 1 { "" } else { "s" });
        if !counts.is_empty() {
            let _ = write!(out, " ({})", counts.join(", "));
        }
        out.push('\n');
        if let Some(t) = &self.timing {
            let _ = writeln!(out, "timing: parse {:.1} ms, analysis {:.1} ms, total {:.1} ms", t.parse_ms, t.analysis_ms, t.total_ms);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze_program, AnalysisConfig};
    use crate::parser::parse_str;

    fn report(src: &str) -> Report {
        let p = parse_str(src).unwrap();
        let a = analyze_program(&p, &AnalysisConfig::default());
        Report::new(&[("t.smir".into(), a)], false)
    }

    const SRC: &str = "struct Vec { ptr: *mut u8, cap: usize, len: usize }
        fn f(_1: Vec) -> () {
            let _2: &Vec; let _3: &Vec;
            bb0: { _2 = &_1; drop(_1) -> bb1; }
            bb1: { _3 = copy _2; return; }
        }";

    #[test]
    fn totals_match_diagnostics() {
        let r = report(SRC);
        assert_eq!(r.totals.get("UAF"), Some(&1));
        assert_eq!(r.diagnostic_count(), r.diagnostics().count());
    }

    #[test]
    fn clean_report_has_empty_totals() {
        let r = report("fn f() -> () { bb0: { return; } }");
        assert!(r.totals.is_empty());
        assert!(r.to_text(false).starts_with("0 diagnostics in 1 function"));
    }

    #[test]
    fn text_and_json_agree() {
        let r = report(SRC);
        let text = r.to_text(false);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let d = &json["functions"][0]["diagnostics"][0];
        assert_eq!(d["kind"], "UAF");
        assert_eq!(d["statement"], 0);
        assert!(text.contains("error[UAF]"));
        assert!(json.get("timing").is_none());
    }
}
