//! `embedlab`: runs scenario files against the embedded-eigenvalue toolkit.

mod error;
mod runner;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use embedlab_core::export::write_json;
use serde_json::json;

use crate::error::CliError;
use crate::scenario::{find_bundled, suggestions, Scenario, BUNDLED};

/// Caps the rayon worker pool.
const THREADS_ENV: &str = "EMBEDLAB_THREADS";

#[derive(Parser)]
#[command(name = "embedlab", version, about = "Embedded eigenvalue scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        /// Output directory; `embedlab-out/<name>` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the bundled scenarios.
    List,
    /// Parse and check a scenario without running it.
    Validate { scenario: String },
}

struct Loaded {
    scenario: Scenario,
    /// Directory relative basis files are resolved against.
    base: Option<PathBuf>,
}

fn load(arg: &str) -> Result<Loaded, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut scenario = Scenario::parse(&text)?;
        if scenario.name.is_empty() {
            scenario.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        let base = path.parent().map(Path::to_path_buf);
        return Ok(Loaded { scenario, base });
    }
    if let Some(b) = find_bundled(arg) {
        let mut scenario = Scenario::parse(b.text)?;
        scenario.name = b.name.to_string();
        return Ok(Loaded { scenario, base: None });
    }
    Err(CliError::Config(format!(
        "no scenario file or bundled scenario named '{arg}'; did you mean: {}",
        suggestions(arg).join(", ")
    )))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(arg: &str, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), CliError> {
    let Loaded { mut scenario, base } = load(arg)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate(base.as_deref())?;
    configure_threads()?;
    let outcome = runner::run(&scenario, base.as_deref())?;
    let dir = out
        .or_else(|| scenario.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("embedlab-out").join(&scenario.name));
    std::fs::create_dir_all(&dir)?;
    let mut artifacts = Vec::new();
    for (name, table) in &outcome.tables {
        let file = format!("{name}.csv");
        table.write_csv(&dir.join(&file))?;
        artifacts.push(file);
    }
    let report = json!({
        "name": scenario.name,
        "description": scenario.description,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": scenario.seed,
        "task": scenario.task.name(),
        "inputs": scenario,
        "results": outcome.results,
        "artifacts": artifacts,
    });
    write_json(&report, &dir.join("report.json"))?;
    println!("{}: {} -> {}", scenario.name, scenario.task.name(), dir.display());
    Ok(())
}

fn validate(arg: &str) -> Result<(), CliError> {
    let Loaded { scenario, base } = load(arg)?;
    scenario.validate(base.as_deref())?;
    println!("ok: {} ({})", scenario.name, scenario.task.name());
    Ok(())
}

fn list() {
    let width = BUNDLED.iter().map(|b| b.name.len()).max().unwrap_or(0);
    for b in BUNDLED {
        println!("{:width$}  {}", b.name, b.description);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, seed } => run(&scenario, out, seed),
        Command::List => {
            list();
            Ok(())
        }
        Command::Validate { scenario } => validate(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
