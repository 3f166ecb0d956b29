use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcompat::compat::DecideOptions;
use qcompat::Tolerances;
use qcompat_cli::commands::{self, CliError, Output, Settings};
use qcompat_cli::devfile::{self, DeviceFile};

/// Decide compatibility relations between quantum devices.
#[derive(Parser)]
#[command(name = "qcompat", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Device file (JSON); the built-in qubit fixture when omitted.
    #[arg(long, short, global = true)]
    file: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_eq: f64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_psd: f64,
    #[arg(long, global = true, default_value_t = 1e-7)]
    tol_feas: f64,
    #[arg(long, global = true, default_value_t = 50_000)]
    max_iter: usize,
    /// Skip closed-form shortcuts and always run the solver.
    #[arg(long, global = true)]
    no_fast_paths: bool,
    /// Include the solver log.
    #[arg(long, global = true)]
    trace: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load and validate every device in the file.
    Validate,
    /// Classify a pair as compatible, weakly compatible only, or strongly incompatible.
    Classify { first: String, second: String },
    /// Classify a pair and print the re-validated witness with its Kraus form.
    Witness { first: String, second: String },
    /// Minimal Stinespring dilation of an operation, channel or instrument total.
    Dilate { name: String },
    /// Measurement model of an instrument (or a model from the file).
    Model { name: String },
    /// Outcome probability and post-state of a model or instrument.
    Simulate {
        name: String,
        /// Named qubit state (px, pmx, py, pmy, pz, pmz, mixed) or a JSON matrix.
        #[arg(long)]
        state: String,
        /// Comma-separated outcome subset; all outcomes when omitted.
        #[arg(long, value_delimiter = ',')]
        outcomes: Vec<String>,
    },
    /// Relations table for operation and effect pairs on the built-in fixture.
    Table1,
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    let g = &cli.global;
    let tol = Tolerances::new(g.tol_eq, g.tol_psd, g.tol_feas)
        .map_err(|e| CliError::Invalid(format!("tolerances: {e}")))?;
    let settings = Settings {
        opts: DecideOptions {
            tol,
            max_iter: g.max_iter,
            fast_paths: !g.no_fast_paths,
            trace: g.trace,
        },
        json: g.format == Format::Json,
    };
    let file: DeviceFile = match (&g.file, &cli.cmd) {
        (_, Cmd::Table1) | (None, _) => devfile::parse_str(devfile::FIXTURE, &tol)?,
        (Some(p), _) => devfile::load_file(p, &tol)?,
    };
    let s = &settings;
    match &cli.cmd {
        Cmd::Validate => Ok(commands::validate(&file, s)),
        Cmd::Classify { first, second } => commands::classify_cmd(&file, first, second, s),
        Cmd::Witness { first, second } => commands::witness_cmd(&file, first, second, s),
        Cmd::Dilate { name } => commands::dilate_cmd(&file, name, s),
        Cmd::Model { name } => commands::model_cmd(&file, name, s),
        Cmd::Simulate {
            name,
            state,
            outcomes,
        } => commands::simulate_cmd(&file, name, state, outcomes, s),
        Cmd::Table1 => commands::table1_cmd(&file, s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(&cli);
    // Timing goes to stderr so stdout stays byte-for-byte reproducible.
    eprintln!("elapsed: {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
    match result {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
