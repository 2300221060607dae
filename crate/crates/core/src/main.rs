use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use avr_core::config::Config;
use avr_core::localizer::{localize, DEFAULT_K};
use avr_core::memory::{self, MemoryStore, Tier};
use avr_core::ops::{self, HeaderMap, InspectFilter, RepairOptions, PRUNE_NEVER};

const EXIT_OK: u8 = 0;
const EXIT_EXHAUSTED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "avr", version, about = "Memory-augmented vulnerability repair")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Memory file (JSON lines).
    #[arg(long, global = true, default_value = "memory.jsonl")]
    memory: PathBuf,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for `repair --tasks`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add corpus rows (CSV or JSON lines) to L1.
    Ingest {
        corpus: PathBuf,
        /// Column mapping `field=column`, e.g. `project=repo_name`.
        #[arg(long = "map", value_parser = parse_mapping)]
        map: Vec<(String, String)>,
    },
    /// Run repair sessions.
    Repair(RepairArgs),
    /// Rank code locations for a symbol, guided by a crash report.
    Localize {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        symbol: String,
        /// Sanitizer report to guide the ranking.
        #[arg(long)]
        crash: Option<PathBuf>,
        #[arg(short, long, default_value_t = DEFAULT_K)]
        k: usize,
    },
    /// Inspect or prune the memory file.
    #[command(subcommand)]
    Memory(MemoryCommand),
}

#[derive(Args)]
struct RepairArgs {
    /// A task.json file.
    task: Option<PathBuf>,
    /// Directory of tasks (each `*/task.json`), run in parallel.
    #[arg(long, conflicts_with = "task")]
    tasks: Option<PathBuf>,
    #[arg(long, default_value = "avr-out")]
    out: PathBuf,
    /// Scripted transcript (overrides config and task directory).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Edit the task repository directly instead of a copy.
    #[arg(long)]
    in_place: bool,
}

#[derive(Subcommand)]
enum MemoryCommand {
    Inspect {
        #[arg(long)]
        tier: Option<Tier>,
        #[arg(long)]
        project: Option<String>,
        #[arg(long)]
        cwe: Option<String>,
        #[arg(long)]
        language: Option<String>,
        #[arg(long)]
        instance: Option<String>,
    },
    Prune {
        /// Task-count window; `inf` never prunes.
        #[arg(long, value_parser = parse_window)]
        window: Option<u64>,
    },
}

fn parse_mapping(s: &str) -> Result<(String, String), String> {
    let (f, c) = s.split_once('=').ok_or("expected field=column")?;
    if !ops::CORPUS_FIELDS.contains(&f) {
        return Err(format!("unknown field `{f}`; expected one of {}", ops::CORPUS_FIELDS.join(", ")));
    }
    Ok((f.to_string(), c.trim().to_ascii_lowercase()))
}

fn parse_window(s: &str) -> Result<u64, String> {
    match s {
        "inf" | "infinity" | "never" => Ok(PRUNE_NEVER),
        n => match n.parse::<u64>() {
            Ok(0) => Err("window must be >= 1".into()),
            Ok(w) => Ok(w),
            Err(e) => Err(e.to_string()),
        },
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn save(store: &MemoryStore, path: &Path) -> Result<(), u8> {
    memory::save(store, path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn run(cli: Cli) -> Result<u8, u8> {
    let fail = |e: &dyn std::fmt::Display| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    };
    let config = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| fail(&e))?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest { corpus, map } => {
            let mut store = ops::open_memory(&cli.memory, &config).map_err(|e| fail(&e))?;
            let embedder = config.embedder().map_err(|e| fail(&e))?;
            let headers = HeaderMap {
                overrides: map.into_iter().collect(),
            };
            let counts = ops::ingest(&corpus, &mut store, &*embedder, &headers).map_err(|e| fail(&e))?;
            save(&store, &cli.memory)?;
            if cli.json {
                print_json(&counts);
            } else {
                println!("inserted {} merged {} rejected {}", counts.inserted, counts.merged, counts.rejected);
            }
            Ok(EXIT_OK)
        }
        Command::Repair(args) => repair(&cli.memory, cli.json, cli.jobs, &config, args),
        Command::Localize { repo, symbol, crash, k } => {
            let report = match crash {
                Some(p) => Some(std::fs::read_to_string(&p).map_err(|e| fail(&format!("{}: {e}", p.display())))?),
                None => None,
            };
            let locs = localize(&repo, &symbol, report.as_deref(), k).map_err(|e| fail(&e))?;
            if cli.json {
                print_json(&locs);
            } else {
                for l in &locs {
                    println!("{}. {}:{}-{}  {}", l.rank, l.file, l.line_start, l.line_end, l.reason);
                }
            }
            Ok(EXIT_OK)
        }
        Command::Memory(MemoryCommand::Inspect { tier, project, cwe, language, instance }) => {
            let store = memory::load_or_default(&cli.memory).map_err(|e| fail(&e))?;
            let report = ops::inspect(&store, &InspectFilter { tier, project, cwe, language, instance });
            if cli.json {
                print_json(&report);
            } else {
                print!("{}", report.render_table());
            }
            Ok(EXIT_OK)
        }
        Command::Memory(MemoryCommand::Prune { window }) => {
            let window = window
                .or(config.retrieval.prune_window)
                .ok_or_else(|| fail(&"no window given and retrieval.prune_window is unset"))?;
            let mut store = memory::load_or_default(&cli.memory).map_err(|e| fail(&e))?;
            let removed = ops::prune(&mut store, window);
            save(&store, &cli.memory)?;
            if cli.json {
                print_json(&serde_json::json!({ "removed": removed }));
            } else {
                println!("removed {removed}");
            }
            Ok(EXIT_OK)
        }
    }
}

fn repair(memory_path: &Path, json: bool, jobs: usize, config: &Config, args: RepairArgs) -> Result<u8, u8> {
    let fail = |e: &dyn std::fmt::Display| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    };
    let tasks = match (&args.task, &args.tasks) {
        (Some(t), None) => vec![t.clone()],
        (None, Some(dir)) => ops::discover_tasks(dir).map_err(|e| fail(&e))?,
        _ => return Err(fail(&"give a task file or --tasks <dir>")),
    };
    if tasks.is_empty() {
        return Err(fail(&"no task.json files found"));
    }
    let store = ops::open_memory(memory_path, config).map_err(|e| fail(&e))?.into_shared();
    let embedder = config.embedder().map_err(|e| fail(&e))?;

    let results = if args.task.is_some() {
        let opts = RepairOptions {
            out_dir: args.out.clone(),
            transcript: args.transcript.clone(),
            in_place: args.in_place,
        };
        vec![(tasks[0].clone(), ops::repair_task(&tasks[0], config, &store, &*embedder, &opts))]
    } else {
        ops::repair_many(&tasks, config, &store, &*embedder, &args.out, jobs, args.transcript.as_deref())
    };

    let mut code = EXIT_OK;
    let mut summary = Vec::new();
    for (task, r) in &results {
        match r {
            Ok(run) => {
                let c = if run.report.succeeded() { EXIT_OK } else { EXIT_EXHAUSTED };
                code = code.max(c);
                if !json {
                    eprintln!(
                        "{}: {:?} after {} failed attempt(s); report {}",
                        task.display(),
                        run.report.outcome,
                        run.report.failed_attempts,
                        run.report_path.display()
                    );
                }
                summary.push(serde_json::json!({
                    "task": task,
                    "exit_code": c,
                    "outcome": run.report.outcome,
                    "failed_attempts": run.report.failed_attempts,
                    "report": run.report_path,
                    "trajectory": run.trajectory_path,
                }));
            }
            Err(e) => {
                eprintln!("error: {}: {e}", task.display());
                code = EXIT_CONFIG;
                summary.push(serde_json::json!({"task": task, "exit_code": EXIT_CONFIG, "error": e.to_string()}));
            }
        }
    }
    let mut st = store.write().expect("memory lock poisoned");
    if let Some(w) = config.retrieval.prune_window {
        st.prune(w);
    }
    save(&st, memory_path)?;
    if json {
        print_json(&summary);
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) | Err(c) => ExitCode::from(c),
    }
}
