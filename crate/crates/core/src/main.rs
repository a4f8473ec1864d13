use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tandem::context::{self, ContextModel};
use tandem::interface::corpus;
use tandem::interface::render::{self, Format};
use tandem::interface::trace::to_jsonl;
use tandem::knowledge::{load_knowledge_base_file, KbError, KnowledgeBase};
use tandem::{parse_sentence, tokenize, ParseConfig, PreferencePolicy};

#[derive(Parser)]
#[command(name = "tandem", version, about = "Incremental parser with garden-path recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse one sentence.
    Parse {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        sentence: String,
        /// Prior discourse, one sentence per line.
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        capacity: usize,
        #[arg(long, value_enum, default_value_t = PolicyArg::Lexicographic)]
        policy: PolicyArg,
        /// Write the decision trace here as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Tree)]
        format: Format,
    },
    /// Corpus operations.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Knowledge-base operations.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Run every item and compare with its expectations.
    Run {
        file: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for one `<id>.jsonl` trace per item.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Check a knowledge base and list diagnostics.
    Validate { file: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PolicyArg {
    Lexicographic,
    SyntaxFirst,
}

impl From<PolicyArg> for PreferencePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Lexicographic => PreferencePolicy::Lexicographic,
            PolicyArg::SyntaxFirst => PreferencePolicy::SyntaxFirst,
        }
    }
}

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn load_kb(path: &PathBuf) -> Result<KnowledgeBase, ExitCode> {
    load_knowledge_base_file(path).map_err(|e| {
        report_kb_error(&e);
        ExitCode::from(EXIT_USAGE)
    })
}

fn report_kb_error(e: &KbError) {
    match e {
        KbError::Invalid(diags) => {
            for d in diags {
                eprintln!("{d}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), ExitCode> {
    fs::write(path, text).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        ExitCode::from(EXIT_USAGE)
    })
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.command {
        Command::Parse {
            kb,
            sentence,
            context,
            capacity,
            policy,
            trace,
            format,
        } => {
            let kb = load_kb(&kb)?;
            let config = ParseConfig {
                capacity,
                policy: policy.into(),
                ..ParseConfig::default()
            };
            let model = match context {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        eprintln!("error: cannot read {}: {e}", path.display());
                        ExitCode::from(EXIT_USAGE)
                    })?;
                    context::ingest(&kb, &context::read_context(&text), config.context)
                }
                None => ContextModel::null(),
            };
            for w in &model.warnings {
                eprintln!("warning: {w}");
            }
            let result = parse_sentence(&kb, &tokenize(&sentence), &model, config);
            if let Some(path) = trace {
                write_file(&path, &to_jsonl(&result.trace))?;
            }
            let text = render::render(&result, format);
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(if result.is_complete() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            })
        }
        Command::Corpus {
            command: CorpusCommand::Run {
                file,
                kb,
                report,
                trace_dir,
            },
        } => {
            let kb = load_kb(&kb)?;
            let items = corpus::load_corpus(&file).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            })?;
            let outcomes = corpus::run_corpus(&kb, &items, ParseConfig::default());
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&corpus::report(&outcomes)).expect("report serializes");
                write_file(&path, &(json + "\n"))?;
            }
            if let Some(dir) = trace_dir {
                corpus::write_traces(&dir, &outcomes).map_err(|e| {
                    eprintln!("error: cannot write traces to {}: {e}", dir.display());
                    ExitCode::from(EXIT_USAGE)
                })?;
            }
            print!("{}", corpus::human_summary(&outcomes));
            Ok(if outcomes.iter().all(|o| o.pass()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            })
        }
        Command::Kb {
            command: KbCommand::Validate { file },
        } => {
            load_kb(&file)?;
            println!("ok: {}", file.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    run(cli).unwrap_or_else(|code| code)
}
