use clap::{Parser, Subcommand};
use mkolmo_cli::{config, experiments, output};
use mkolmo_core::calculus::registry::{EXTRA_NAMES, NAMES, TEST_FUNCTIONS};
use mkolmo_core::filtering::MODEL_NAMES;
use mkolmo_core::measure::PRESET_NAMES;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "mkolmo",
    version,
    about = "Particle Zakai/Kushner-Stratonovich flows and measure-valued Kolmogorov equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Output directory (default: `output.dir`, then `results/<id>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print `summary.json` to stdout instead of the check table.
        #[arg(long)]
        json: bool,
        /// Overrides as `--key value` pairs with dotted keys, e.g. `--seed 7 --mc.replicas 100`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// List the builtin models, functionals, test functions and measures.
    ListPresets,
    /// Print the version.
    Version,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(k) = it.next() {
        let key = k.strip_prefix("--").ok_or_else(|| format!("expected --key, found {k:?}"))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let v = it.next().ok_or_else(|| format!("override --{key} has no value"))?;
            out.push((key.to_string(), v.clone()));
        }
    }
    Ok(out)
}

fn run(config_path: PathBuf, out: Option<PathBuf>, as_json: bool, raw: &[String]) -> ExitCode {
    let overrides = match parse_overrides(raw) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let loaded = match config::load(&config_path, &overrides) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let outcome = match experiments::run(&loaded.config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", loaded.config.id);
            return ExitCode::from(2);
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let dir = out.unwrap_or_else(|| output::default_dir(&loaded));
    if let Err(e) = output::write_all(&dir, &loaded, &outcome, seconds) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&output::summary(&loaded, &outcome)).expect("summary serialises"));
    } else {
        println!("{} ({:?}) in {seconds:.1} s -> {}", loaded.config.id, loaded.config.kind, dir.display());
        for c in &outcome.checks {
            println!("  [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if !loaded.config.assertions.enabled || outcome.passed() {
        return ExitCode::SUCCESS;
    }
    let criterion = loaded.config.assertions.criterion.as_deref().unwrap_or(&loaded.config.id);
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("assertion failed: criterion {criterion}: {}: {}", c.name, c.detail);
    }
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, json, overrides } => run(config, out, json, &overrides),
        Command::ListPresets => {
            println!("models: {}", MODEL_NAMES.join(", "));
            let functionals: Vec<&str> = NAMES.iter().chain(EXTRA_NAMES.iter()).copied().collect();
            println!("functionals: {}", functionals.join(", "));
            println!("test functions: {}", TEST_FUNCTIONS.join(", "));
            println!("measures: {}", PRESET_NAMES.join(", "));
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("mkolmo {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
