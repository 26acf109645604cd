use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use streamgraft_core::scenario::{load_live_scenario, program_at};
use streamgraft_core::{load_scenario, run_scenario, to_dot, to_json, RunOptions, Scenario, ScenarioError};
use streamgraft_service::ServerConfig;

const OK: u8 = 0;
const SCENARIO_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "streamgraft", version, about = "Run, check and serve dataflow scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headlessly, writing frames, snapshots and manifest.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's tick count.
        #[arg(long)]
        ticks: Option<u64>,
        /// Only record hashes; no PGM frames or traces.
        #[arg(long)]
        hash_only: bool,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: PathBuf },
    /// Print the program as it stands after T ticks.
    ExportGraph {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        at_tick: u64,
        #[arg(long, value_enum, default_value_t = Format::Dot)]
        format: Format,
    },
    /// Serve a live session over websocket until interrupted.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value_t = 30.0)]
        tps: f64,
        /// Interaction log, replayable with `run`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Start paused.
        #[arg(long)]
        paused: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

fn load(path: &Path) -> Result<Scenario, u8> {
    report(path, load_scenario(path))
}

fn report(path: &Path, loaded: Result<Scenario, ScenarioError>) -> Result<Scenario, u8> {
    loaded.map_err(|e| {
        eprintln!("{}: {e}", path.display());
        SCENARIO_ERROR
    })
}

fn exit_for(e: &ScenarioError) -> u8 {
    if e.is_scenario_error() {
        SCENARIO_ERROR
    } else {
        RUNTIME_ERROR
    }
}

fn run(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            ticks,
            hash_only,
        } => {
            let s = load(&scenario)?;
            let opts = RunOptions { ticks, hash_only };
            match run_scenario(&s, Some(&out), &opts) {
                Ok(m) => {
                    println!(
                        "{} ticks, {} snapshots, manifest at {}",
                        m.ticks_run,
                        m.snapshots.len(),
                        out.join("manifest.json").display()
                    );
                    Ok(())
                }
                Err(e) => {
                    eprintln!("{e}");
                    if let ScenarioError::Runtime { .. } = e {
                        eprintln!("partial manifest at {}", out.join("manifest.json").display());
                    }
                    Err(exit_for(&e))
                }
            }
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!(
                "ok: {} templates, {} scheduled edits, {} control events, {} outputs, {} ticks",
                s.doc.templates.len(),
                s.doc.schedule.len(),
                s.doc.control_script.len(),
                s.doc.outputs.len(),
                s.doc.ticks
            );
            Ok(())
        }
        Command::ExportGraph {
            scenario,
            at_tick,
            format,
        } => {
            let s = load(&scenario)?;
            let p = program_at(&s, at_tick).map_err(|e| {
                eprintln!("{e}");
                exit_for(&e)
            })?;
            match format {
                Format::Dot => print!("{}", to_dot(&p)),
                Format::Json => println!("{}", to_json(&p)),
            }
            Ok(())
        }
        Command::Serve {
            scenario,
            bind,
            tps,
            log,
            paused,
        } => {
            let s = report(&scenario, load_live_scenario(&scenario))?;
            if !(tps > 0.0 && tps <= 1000.0) {
                eprintln!("--tps must be in (0, 1000]");
                return Err(SCENARIO_ERROR);
            }
            let config = ServerConfig {
                bind,
                tps,
                log_path: log,
                start_paused: paused,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| {
                eprintln!("{e}");
                RUNTIME_ERROR
            })?;
            rt.block_on(streamgraft_service::serve(&s, config)).map_err(|e| {
                eprintln!("serve: {e}");
                RUNTIME_ERROR
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { SCENARIO_ERROR } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(OK),
        Err(code) => ExitCode::from(code),
    }
}
