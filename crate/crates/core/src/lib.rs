//! Static detection of invalid automatic deallocation (use-after-free,
//! double free, invalid memory access, dangling returns) in programs written
//! in a small MIR-like dialect.
//!
//! Pipeline per function: [`paths`] enumerates valuable paths over the SCC
//! condensation of the CFG, [`alias`] tracks alias sets along each path,
//! [`detect`] applies the taint rules, and [`analysis`] stitches functions
//! together with cached summaries. [`interp`] is an independent concrete
//! interpreter used to confirm reported bugs.

pub mod alias;
pub mod analysis;
pub mod corpus;
pub mod detect;
pub mod interp;
pub mod ir;
pub mod parser;
pub mod paths;
pub mod printer;
pub mod report;



pub use ir::Program;
pub use analysis::{analyze_program, AnalysisConfig, Analyzer, OpaqueCalleeMode, ProgramAnalysis};
pub use detect::{BugFlags, BugKind, Diagnostic};
pub use parser::{parse_program, parse_str, ParseDiagnostic, SourceFile};
