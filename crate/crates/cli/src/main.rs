use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use farel::experiment::output::fmt5;
use farel::experiment::{run_grid, ExperimentConfig};
use farel::fairness::FairnessEngine;
use farel::mdp::{read_trace, Objective};

const CONFIG_ERROR: u8 = 2;
const CELL_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "farel", version, about = "Fairness-aware multi-objective reinforcement learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment file.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the file's `output` key, then `runs/<file stem>`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Scenario information.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
    /// Recompute every fairness notion of a trace, one CSV row per interaction.
    Replay { trace: PathBuf },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Print a scenario's defaults and feature schema.
    Describe { scenario: String },
}

fn run(config: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Err(e) = cfg.apply_env_overrides() {
        eprintln!("config error: {e}");
        return ExitCode::from(CONFIG_ERROR);
    }
    let root = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
        let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        PathBuf::from("runs").join(stem)
    });
    match run_grid(&cfg, &root) {
        Ok(report) => {
            for c in &report.cells {
                match &c.result {
                    Ok(points) => println!("ok     {} ({} policies)", c.dir.display(), points.len()),
                    Err(e) => println!("FAILED {}: {e}", c.dir.display()),
                }
            }
            if report.failures() > 0 {
                ExitCode::from(CELL_FAILURE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}

fn replay(path: PathBuf) -> anyhow::Result<()> {
    let file = std::fs::File::open(&path)?;
    let (header, interactions) = read_trace(BufReader::new(file))?;
    let mut config = header.fairness;
    config.objectives = Objective::ALL.to_vec();
    let mut engine = FairnessEngine::new(config, header.schema)?;
    let stdout = std::io::stdout();
    let mut w = std::io::BufWriter::new(stdout.lock());
    let labels: Vec<&str> = Objective::NOTIONS.iter().map(|o| o.label()).collect();
    writeln!(w, "t,action,{}", labels.join(","))?;
    for x in &interactions {
        x.validate(header.action_count)?;
        let values = engine.push(x)?;
        let cells: Vec<String> = Objective::NOTIONS
            .iter()
            .map(|&o| match values.get(o) {
                Some(v) if v.defined => fmt5(v.value),
                _ => String::new(),
            })
            .collect();
        writeln!(w, "{},{},{}", x.t, x.action, cells.join(","))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Env { command: EnvCommand::Describe { scenario } } => match farel::env::describe(&scenario) {
            Some(text) => {
                println!("{text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("unknown scenario {scenario:?}; expected hiring or fraud");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Replay { trace } => match replay(trace) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("replay failed: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
