//! Python bindings: parse, print, analyse and execute mini-MIR programs.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dropguard_core::analysis::{analyze_program, AnalysisConfig, OpaqueCalleeMode};
use dropguard_core::interp::{self, ConfirmBudget, ExecutionScript, PanicSite, DEFAULT_STEP_LIMIT};
use dropguard_core::ir::StmtRef;
use dropguard_core::parser::{parse_program, SourceFile};
use dropguard_core::printer::pretty_print;
use dropguard_core::report::Report;

fn statement_label(at: StmtRef) -> String {
    match at {
        StmtRef::Stmt(i) => i.to_string(),
        StmtRef::Terminator => "term".to_string(),
    }
}

/// A parsed and validated program.
#[pyclass(frozen, module = "dropguard")]
struct Program {
    inner: dropguard_core::Program,
}

#[pymethods]
impl Program {
    /// Parse `text`; raises `ValueError` listing every parse error.
    #[staticmethod]
    #[pyo3(signature = (text, path = "<input>"))]
    fn parse(text: &str, path: &str) -> PyResult<Self> {
        parse_program(&[SourceFile::new(path, text)])
            .map(|inner| Program { inner })
            .map_err(|errs| PyValueError::new_err(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")))
    }

    /// Canonical text form.
    fn pretty(&self) -> String {
        pretty_print(&self.inner)
    }

    #[getter]
    fn functions(&self) -> Vec<String> {
        self.inner.functions.keys().cloned().collect()
    }

    /// Analyse every function.
    #[pyo3(signature = (path_threshold = dropguard_core::paths::DEFAULT_PATH_THRESHOLD, opaque_callee = "alias-all"))]
    fn analyze(&self, path_threshold: usize, opaque_callee: &str) -> PyResult<Analysis> {
        if path_threshold == 0 {
            return Err(PyValueError::new_err("path_threshold must be at least 1"));
        }
        let opaque_mode: OpaqueCalleeMode = opaque_callee.parse().map_err(|e: String| PyValueError::new_err(e))?;
        let config = AnalysisConfig { path_threshold, opaque_mode, dump_aliases: None };
        let analysis = analyze_program(&self.inner, &config);
        let report = Report::new(&[("<input>".to_string(), analysis)], false);
        Ok(Analysis { report })
    }

    fn __repr__(&self) -> String {
        format!("Program(functions={:?})", self.functions())
    }
}

/// One reported bug.
#[pyclass(frozen, get_all, skip_from_py_object, module = "dropguard")]
#[derive(Clone)]
struct Diagnostic {
    kind: String,
    function: String,
    block: usize,
    /// Statement index, or `"term"` for the block terminator.
    statement: String,
    place: String,
    witness_path: Vec<usize>,
    line: u32,
    column: u32,
    on_unwind_path: bool,
}

#[pymethods]
impl Diagnostic {
    fn __repr__(&self) -> String {
        format!(
            "Diagnostic({} in {} at bb{}:{} on {}{})",
            self.kind,
            self.function,
            self.block,
            self.statement,
            self.place,
            if self.on_unwind_path { ", unwind" } else { "" }
        )
    }
}

impl From<&dropguard_core::Diagnostic> for Diagnostic {
    fn from(d: &dropguard_core::Diagnostic) -> Self {
        Diagnostic {
            kind: d.kind.to_string(),
            function: d.function.clone(),
            block: d.block,
            statement: statement_label(d.statement),
            place: d.place.to_string(),
            witness_path: d.witness_path.clone(),
            line: d.span.line,
            column: d.span.column,
            on_unwind_path: d.on_unwind_path,
        }
    }
}

/// Result of `Program.analyze`.
#[pyclass(frozen, module = "dropguard")]
struct Analysis {
    report: Report,
}

#[pymethods]
impl Analysis {
    #[getter]
    fn diagnostics(&self) -> Vec<Diagnostic> {
        self.report.diagnostics().map(Diagnostic::from).collect()
    }

    /// Diagnostic counts per kind; kinds with none are absent.
    #[getter]
    fn totals(&self) -> BTreeMap<String, usize> {
        self.report.totals.clone()
    }

    /// Bug flags of one function's summary.
    fn flags(&self, function: &str) -> PyResult<BTreeMap<String, bool>> {
        let f = self
            .report
            .functions
            .iter()
            .find(|f| f.name == function)
            .ok_or_else(|| PyValueError::new_err(format!("no function `{function}`")))?;
        Ok([("UAF", f.flags.uaf), ("DF", f.flags.df), ("IMA", f.flags.ima), ("DP", f.flags.dp)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect())
    }

    fn to_json(&self) -> String {
        self.report.to_json()
    }

    fn to_text(&self) -> String {
        self.report.to_text(false)
    }
}

/// Runtime event seen by the interpreter.
#[pyclass(frozen, get_all, module = "dropguard")]
struct Event {
    kind: String,
    function: String,
    block: usize,
    statement: String,
    place: String,
    on_unwind_path: bool,
}

#[pymethods]
impl Event {
    fn __repr__(&self) -> String {
        format!("Event({} in {} at bb{}:{} on {})", self.kind, self.function, self.block, self.statement, self.place)
    }
}

/// Result of `execute`.
#[pyclass(frozen, get_all, module = "dropguard")]
struct Execution {
    events: Vec<Py<Event>>,
    outcome: String,
    steps: usize,
}

/// Run `entry` in the interpreter. `panic_at` is `"bbN:S"` or `"F:bbN:S"`.
#[pyfunction]
#[pyo3(signature = (program, entry, branches = Vec::new(), panic_at = None, step_limit = DEFAULT_STEP_LIMIT))]
fn execute(
    py: Python<'_>,
    program: &Program,
    entry: &str,
    branches: Vec<String>,
    panic_at: Option<&str>,
    step_limit: usize,
) -> PyResult<Execution> {
    let panic_at = panic_at.map(|s| s.parse::<PanicSite>()).transpose().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let script = ExecutionScript { branches, panic_at, step_limit: step_limit.max(1) };
    let report = interp::execute(&program.inner, entry, &script).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let events = report
        .events
        .iter()
        .map(|e| {
            Py::new(
                py,
                Event {
                    kind: e.kind.to_string(),
                    function: e.function.clone(),
                    block: e.block,
                    statement: statement_label(e.statement),
                    place: e.place.clone(),
                    on_unwind_path: e.on_unwind_path,
                },
            )
        })
        .collect::<PyResult<_>>()?;
    let outcome = serde_json::to_value(report.outcome).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    Ok(Execution { events, outcome, steps: report.steps })
}

/// Search for an execution that reproduces `diagnostic`.
#[pyfunction]
fn confirm(program: &Program, diagnostic: &Diagnostic) -> PyResult<bool> {
    let analysis = analyze_program(&program.inner, &AnalysisConfig::default());
    let d = analysis
        .diagnostics()
        .find(|d| {
            d.kind.to_string() == diagnostic.kind
                && d.function == diagnostic.function
                && d.block == diagnostic.block
                && statement_label(d.statement) == diagnostic.statement
        })
        .ok_or_else(|| PyValueError::new_err("diagnostic does not belong to this program"))?;
    Ok(interp::confirm(d, &program.inner, &ConfirmBudget::default()).is_confirmed())
}

#[pymodule]
fn dropguard(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Program>()?;
    m.add_class::<Analysis>()?;
    m.add_class::<Diagnostic>()?;
    m.add_class::<Event>()?;
    m.add_class::<Execution>()?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(confirm, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
