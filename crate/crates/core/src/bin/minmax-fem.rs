use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use minmax_fem::cli::{parse_config, run, Command, Format};

#[derive(Parser)]
#[command(name = "minmax-fem", version, about = "Two-center Dirac ground states by minmax finite elements")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One energy on the last configured grid.
    Solve(Opts),
    /// Grid ladder with fits and extrapolation.
    Ladder(Opts),
    /// Paired relativistic and nonrelativistic solves per rung.
    Shift(Opts),
    /// Rungs across the `D_list` values at the last configured grid.
    DmaxScan(Opts),
}

#[derive(Args)]
struct Opts {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Solve(o) => (Command::Solve, o),
        Cmd::Ladder(o) => (Command::Ladder, o),
        Cmd::Shift(o) => (Command::Shift, o),
        Cmd::DmaxScan(o) => (Command::DmaxScan, o),
    };
    match execute(command, opts) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("minmax-fem: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command, opts: Opts) -> minmax_fem::Result<bool> {
    let text = std::fs::read_to_string(&opts.config)?;
    let mut cfg = parse_config(&text)?;
    cfg.command = command;
    if let Some(f) = opts.format {
        cfg.format = match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        };
    }
    if let Some(w) = opts.workers {
        cfg.workers = w;
    }
    if opts.out.is_some() {
        cfg.out = opts.out;
    }
    cfg.validate()?;
    let report = run(&cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &report.text)?,
        None => print!("{}", report.text),
    }
    if !report.ok {
        eprintln!("minmax-fem: some solves failed; see the report");
    }
    Ok(report.ok)
}
