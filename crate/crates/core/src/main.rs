use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vexplore::corpus::{compute_coverset, load_corpus, read_manifest, write_manifest, FuzzCorpus, ManifestRecord};
use vexplore::explore::{explore, render_json, render_text, ExploreOptions};
use vexplore::frontend::{dump_ast, load_program, TranslationUnit};
use vexplore::interp::{execute_program, render_report, write_report, write_trace, RunResult};
use vexplore::localize::localize_failure;
use vexplore::rank::rank_matches;
use vexplore::semantic::DEFAULT_SINKS;
use vexplore::templates::{derive_syntactic_template, match_template, parse_matcher, render_matches, TemplateRule};

const CRASH_EXIT: u8 = 77;

#[derive(Parser)]
#[command(name = "vexplore", version, about = "Crash-driven vulnerability exploration for MiniC")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct Program {
    /// MiniC source files.
    #[arg(long, num_args = 1.., required = true)]
    sources: Vec<PathBuf>,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the entry function on one input.
    Run {
        #[command(flatten)]
        program: Program,
        #[arg(long, default_value = "main")]
        entry: String,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<input>.trace`.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Defaults to `<input>.report`; written only on a crash.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Re-run every manifest entry and rewrite traces, reports and crash flags.
    Replay {
        #[command(flatten)]
        program: Program,
        #[arg(long, default_value = "main")]
        entry: String,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Print the fault locus of one crash entry.
    Localize {
        #[command(flatten)]
        program: Program,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: String,
        #[command(flatten)]
        output: Output,
    },
    /// Print the syntactic template derived for one crash entry.
    Derive {
        #[command(flatten)]
        program: Program,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, value_enum, default_value = "auto")]
        template_rule: TemplateRule,
    },
    /// Match a template over the program.
    Match {
        #[command(flatten)]
        program: Program,
        #[arg(long)]
        matcher: String,
        #[command(flatten)]
        output: Output,
    },
    /// Match a template and rank the matches by fuzz coverage.
    Rank {
        #[command(flatten)]
        program: Program,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        matcher: String,
        #[command(flatten)]
        output: Output,
    },
    /// Localize, template, match and rank every distinct crash.
    Explore {
        #[command(flatten)]
        program: Program,
        #[arg(long)]
        manifest: PathBuf,
        /// Accepted for symmetry with `run`; traces already name the executed code.
        #[arg(long)]
        entry: Option<String>,
        #[command(flatten)]
        output: Output,
        /// Add call-site and taint templates.
        #[arg(long)]
        semantic: bool,
        #[arg(long, value_delimiter = ',')]
        sinks: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "auto")]
        template_rule: TemplateRule,
    },
    /// Print the typed AST of each source.
    DumpAst {
        #[command(flatten)]
        program: Program,
    },
}

struct Failure {
    module: &'static str,
    message: String,
}

fn fail(module: &'static str) -> impl FnOnce(&dyn Display) -> Failure {
    move |e| Failure {
        module,
        message: e.to_string(),
    }
}

trait Ctx<T> {
    fn ctx(self, module: &'static str) -> Result<T, Failure>;
}

impl<T, E: Display> Ctx<T> for Result<T, E> {
    fn ctx(self, module: &'static str) -> Result<T, Failure> {
        self.map_err(|e| fail(module)(&e))
    }
}

fn load(program: &Program) -> Result<Vec<TranslationUnit>, Failure> {
    load_program(&program.sources).ctx("frontend")
}

fn corpus(manifest: &Path) -> Result<FuzzCorpus, Failure> {
    load_corpus(manifest).ctx("corpus")
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).ctx("cli")?;
    out.flush().ctx("cli")
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_one(tus: &[TranslationUnit], entry: &str, input: &Path) -> Result<RunResult, Failure> {
    let bytes = std::fs::read(input).map_err(|e| Failure {
        module: "interp",
        message: format!("cannot read {}: {e}", input.display()),
    })?;
    execute_program(tus, &bytes, entry).ctx("interp")
}

fn replay(tus: &[TranslationUnit], entry: &str, manifest: &Path) -> Result<bool, Failure> {
    let mut records = read_manifest(manifest).ctx("corpus")?;
    if records.is_empty() {
        return Err(fail("corpus")(&"manifest has no entries"));
    }
    let base = manifest.parent().unwrap_or(Path::new(""));
    let mut ok = true;
    for r in &mut records {
        match replay_entry(tus, entry, base, r) {
            Ok(()) => {}
            Err(f) => {
                eprintln!("error: {}: entry `{}`: {}", f.module, r.id, f.message);
                ok = false;
            }
        }
    }
    FuzzCorpus::from_records(&records, base).ctx("corpus")?;
    write_manifest(manifest, &records).ctx("corpus")?;
    Ok(ok)
}

fn replay_entry(
    tus: &[TranslationUnit],
    entry: &str,
    base: &Path,
    r: &mut ManifestRecord,
) -> Result<(), Failure> {
    let result = run_one(tus, entry, &base.join(&r.input_path))?;
    write_trace(&result, &base.join(&r.trace_path)).ctx("corpus")?;
    match result.crash() {
        Some(report) => {
            let rel = r
                .report_path
                .clone()
                .unwrap_or_else(|| format!("{}.report", r.id));
            write_report(report, &base.join(&rel)).ctx("corpus")?;
            r.crash = true;
            r.report_path = Some(rel);
        }
        None => {
            r.crash = false;
            r.report_path = None;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Run {
            program,
            entry,
            input,
            trace,
            report,
        } => {
            let tus = load(&program)?;
            let result = run_one(&tus, &entry, &input)?;
            let trace = trace.unwrap_or_else(|| with_suffix(&input, ".trace"));
            write_trace(&result, &trace).ctx("interp")?;
            match result.crash() {
                Some(r) => {
                    let report = report.unwrap_or_else(|| with_suffix(&input, ".report"));
                    write_report(r, &report).ctx("interp")?;
                    eprint!("{}", render_report(r));
                    Ok(ExitCode::from(CRASH_EXIT))
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Replay {
            program,
            entry,
            manifest,
        } => {
            let tus = load(&program)?;
            Ok(if replay(&tus, &entry, &manifest)? {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Localize {
            program,
            manifest,
            id,
            output,
        } => {
            let tus = load(&program)?;
            let corpus = corpus(&manifest)?;
            let entry = corpus
                .get(&id)
                .ok_or_else(|| fail("corpus")(&format!("no entry `{id}`")))?;
            let locus = localize_failure(entry, &corpus, &tus).ctx("localize")?;
            let text = match output.format {
                Format::Json => serde_json::to_string_pretty(&locus).ctx("cli")? + "\n",
                Format::Text => {
                    let mut s = String::new();
                    for (f, l) in &locus.lines {
                        s.push_str(&format!("line {f}:{l}\n"));
                    }
                    s.push_str(&format!("focus {}\n", locus.focus_function));
                    if let Some((r, f)) = &locus.faulty_member {
                        s.push_str(&format!("member {r}.{f}\n"));
                    }
                    s
                }
            };
            emit(&text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Derive {
            program,
            manifest,
            id,
            template_rule,
        } => {
            let tus = load(&program)?;
            let corpus = corpus(&manifest)?;
            let entry = corpus
                .get(&id)
                .ok_or_else(|| fail("corpus")(&format!("no entry `{id}`")))?;
            let locus = localize_failure(entry, &corpus, &tus).ctx("localize")?;
            let m = derive_syntactic_template(&tus, &locus, template_rule).ctx("templates")?;
            emit(&format!("{m}\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Match {
            program,
            matcher,
            output,
        } => {
            let tus = load(&program)?;
            let m = parse_matcher(&matcher).ctx("templates")?;
            let set = match_template(&tus, &m);
            emit(&match output.format {
                Format::Text => render_matches(&set),
                Format::Json => serde_json::to_string_pretty(&set).ctx("cli")? + "\n",
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Rank {
            program,
            manifest,
            matcher,
            output,
        } => {
            let tus = load(&program)?;
            let m = parse_matcher(&matcher).ctx("templates")?;
            let coverset = compute_coverset(&corpus(&manifest)?).ctx("corpus")?;
            let ranked = rank_matches(&match_template(&tus, &m), &coverset);
            emit(&match output.format {
                Format::Json => serde_json::to_string_pretty(&ranked).ctx("cli")? + "\n",
                Format::Text => {
                    let mut s = String::new();
                    for (tag, list) in [("high", &ranked.high), ("low", &ranked.low)] {
                        for x in list {
                            s.push_str(&format!("{tag} {} {}\n", x.loc, x.enclosing_function));
                        }
                    }
                    s
                }
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Explore {
            program,
            manifest,
            entry: _,
            output,
            semantic,
            sinks,
            template_rule,
        } => {
            let tus = load(&program)?;
            let corpus = corpus(&manifest)?;
            let opts = ExploreOptions {
                template_rule,
                sinks: sinks.unwrap_or_else(|| DEFAULT_SINKS.iter().map(|s| s.to_string()).collect()),
                semantic,
            };
            let report = explore(&tus, &corpus, &opts).ctx("explore")?;
            emit(&match output.format {
                Format::Text => render_text(&report),
                Format::Json => render_json(&report),
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpAst { program } => {
            let tus = load(&program)?;
            for tu in &tus {
                emit(&dump_ast(tu))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cli: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}: {}", f.module, f.message);
            ExitCode::FAILURE
        }
    }
}
