use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hframe::experiment::{configure_threads, error_exit_code, preset, run_experiment, ExperimentConfig, PRESETS};
use hframe::matrix_io::MatrixFile;
use hframe::{Error, FrameSystem};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "hframe", version, about = "Verification runs for Hermite-localized frames")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print or save a preset config.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a frame matrix file.
    Inspect { matrix: PathBuf },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    exit(error_exit_code(err))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    match cli.command {
        Command::Run { config, out_dir } => run(&config, out_dir, cli.seed),
        Command::Preset { name, out } => emit_preset(&name, out.as_deref(), cli.seed),
        Command::Inspect { matrix } => match inspect(&matrix) {
            Ok(text) => {
                say!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}

fn run(path: &Path, out_dir: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let mut config = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(d) = out_dir {
        config.output_dir = d;
    }
    let outcome = match run_experiment(&config) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    for g in &outcome.report.gates {
        let status = match (g.passed, g.informational) {
            (true, _) => "PASS",
            (false, true) => "INFO",
            (false, false) => "FAIL",
        };
        say!("{status} {}: {}", g.name, g.detail);
    }
    if let Some(p) = &outcome.report_path {
        say!("report: {}", p.display());
    }
    if let Some(p) = &outcome.csv_path {
        say!("summary: {}", p.display());
    }
    for g in outcome.report.failing_gates() {
        eprintln!("failing gate: {}", g.name);
    }
    exit(outcome.exit_code())
}

fn emit_preset(name: &str, out: Option<&Path>, seed: Option<u64>) -> ExitCode {
    let mut config = match preset(name) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let text = match config.to_json() {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, text + "\n") {
                return fail(&e.into());
            }
        }
        None => say!("{text}"),
    }
    ExitCode::SUCCESS
}

fn inspect(path: &Path) -> hframe::Result<String> {
    let (file, format) = MatrixFile::read(path)?;
    let frame: FrameSystem = file.into_frame()?;
    let riesz = frame.is_riesz_basis();
    let bounds = frame.frame_bounds()?;
    let summary = serde_json::json!({
        "format": format,
        "elements": frame.elements(),
        "dimension": frame.dimension(),
        "bounds": bounds,
        "riesz": riesz,
    });
    Ok(serde_json::to_string_pretty(&summary)?)
}
