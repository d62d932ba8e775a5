use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use dropguard::analysis::{analyze_program, AnalysisConfig, OpaqueCalleeMode};
use dropguard::corpus::run_corpus;
use dropguard::detect::BugKind;
use dropguard::interp::{execute, ExecutionScript, PanicSite, DEFAULT_STEP_LIMIT};
use dropguard::parser::{parse_program, SourceFile};
use dropguard::paths::DEFAULT_PATH_THRESHOLD;
use dropguard::report::{Report, Timing};
use dropguard::Program;

#[derive(Parser)]
#[command(name = "dropguard", version, about = "Find invalid automatic deallocation in mini-MIR programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Clone, Copy, ValueEnum)]
enum Opaque {
    AliasAll,
    AliasNone,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse files and report diagnostics.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long, default_value_t = DEFAULT_PATH_THRESHOLD as u64, value_parser = clap::value_parser!(u64).range(1..))]
        path_threshold: u64,
        #[arg(long, value_enum, default_value = "alias-all")]
        opaque_callee: Opaque,
        /// Kinds that make the run fail, e.g. `DF,UAF`.
        #[arg(long, value_delimiter = ',')]
        deny: Vec<BugKind>,
        /// Print the valuable paths of every function.
        #[arg(long)]
        dump_paths: bool,
        /// Print the final alias partition of every path of FUNC.
        #[arg(long, value_name = "FUNC")]
        dump_aliases: Option<String>,
        /// Include wall-clock timings.
        #[arg(long)]
        timing: bool,
    },
    /// Run one function in the interpreter and print its events.
    Exec {
        file: PathBuf,
        #[arg(long)]
        entry: String,
        /// Branch labels consumed by `switchInt`s on unknown values.
        #[arg(long, value_delimiter = ',')]
        branches: Vec<String>,
        /// Inject a panic at `bbN:S` (statement index or `term`).
        #[arg(long)]
        panic_at: Option<PanicSite>,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Check every fixture in a directory against its annotations.
    Corpus {
        dir: PathBuf,
        /// Skip dynamic confirmation by the interpreter.
        #[arg(long)]
        no_confirm: bool,
    },
}

fn thread_count() -> usize {
    let default = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    std::env::var("DROPGUARD_THREADS").ok().and_then(|v| v.parse().ok()).filter(|n| *n >= 1).unwrap_or(default)
}

/// Read and parse each file on its own, in parallel.
fn load(files: &[PathBuf]) -> Vec<Result<Program, Vec<String>>> {
    let threads = thread_count().min(files.len()).max(1);
    let chunk = files.len().div_ceil(threads).max(1);
    let load_one = |path: &PathBuf| -> Result<Program, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: error: {e}", path.display())])?;
        parse_program(&[SourceFile::new(path.display().to_string(), text)])
            .map_err(|errs| errs.iter().map(|e| e.to_string()).collect())
    };
    std::thread::scope(|s| {
        let handles: Vec<_> =
            files.chunks(chunk).map(|c| s.spawn(move || c.iter().map(load_one).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("loader thread")).collect()
    })
}

/// Write to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

#[allow(clippy::too_many_arguments)]
fn check(
    files: Vec<PathBuf>,
    format: Format,
    path_threshold: u64,
    opaque: Opaque,
    deny: Vec<BugKind>,
    dump_paths: bool,
    dump_aliases: Option<String>,
    timing: bool,
) -> ExitCode {
    let start = Instant::now();
    let loaded = load(&files);
    let parse_ms = ms(start);
    let mut programs = Vec::new();
    let mut failed = false;
    for (path, r) in files.iter().zip(loaded) {
        match r {
            Ok(p) => programs.push((path.display().to_string(), p)),
            Err(errs) => {
                failed = true;
                for e in errs {
                    eprintln!("{e}");
                }
            }
        }
    }
    if failed {
        return ExitCode::from(2);
    }
    let config = AnalysisConfig {
        path_threshold: path_threshold as usize,
        opaque_mode: match opaque {
            Opaque::AliasAll => OpaqueCalleeMode::AliasAll,
            Opaque::AliasNone => OpaqueCalleeMode::AliasNone,
        },
        dump_aliases,
    };
    let analysis_start = Instant::now();
    let analyses: Vec<(String, _)> = programs.iter().map(|(f, p)| (f.clone(), analyze_program(p, &config))).collect();
    let analysis_ms = ms(analysis_start);
    let mut report = Report::new(&analyses, dump_paths);
    if timing {
        report.timing = Some(Timing { parse_ms, analysis_ms, total_ms: ms(start) });
    }
    match format {
        Format::Text => emit(&report.to_text(dump_paths)),
        Format::Structured => emit(&format!("{}\n", report.to_json())),
    }
    if report.diagnostic_count() > 0 || deny.iter().any(|k| report.has_kind(*k)) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { files, format, path_threshold, opaque_callee, deny, dump_paths, dump_aliases, timing } => {
            check(files, format, path_threshold, opaque_callee, deny, dump_paths, dump_aliases, timing)
        }
        Command::Exec { file, entry, branches, panic_at, step_limit, format } => {
            let program = match load(std::slice::from_ref(&file)).pop().expect("one result") {
                Ok(p) => p,
                Err(errs) => {
                    for e in errs {
                        eprintln!("{e}");
                    }
                    return ExitCode::from(2);
                }
            };
            let branches = branches.into_iter().filter(|b| !b.is_empty()).collect();
            let script = ExecutionScript { branches, panic_at, step_limit: step_limit.max(1) };
            match execute(&program, &entry, &script) {
                Ok(report) => {
                    match format {
                        Format::Structured => {
                            emit(&format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")))
                        }
                        Format::Text => {
                            let mut text: String = report.events.iter().map(|e| format!("event: {e}\n")).collect();
                            text.push_str(&format!(
                                "outcome: {} after {} steps, {} branch labels used, {} events\n",
                                serde_json::to_value(report.outcome).expect("outcome").as_str().unwrap_or("?"),
                                report.steps,
                                report.branches_used,
                                report.events.len()
                            ));
                            emit(&text);
                        }
                    }
                    if report.events.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Corpus { dir, no_confirm } => match run_corpus(&dir, &AnalysisConfig::default(), !no_confirm) {
            Ok(summary) => {
                emit(&summary.matrix());
                if summary.has_errors() {
                    ExitCode::from(2)
                } else if summary.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", dir.display());
                ExitCode::from(2)
            }
        },
    }
}
