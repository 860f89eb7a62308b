use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lumen3d_cli::{commands, configure_threads, CliResult, Job};

#[derive(Parser)]
#[command(
    name = "lumen3d",
    version,
    about = "Photometric stereo and RTI processing for fixed-viewpoint captures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct JobArgs {
    /// Job file (JSON).
    #[arg(long)]
    job: PathBuf,
    /// Replace an existing output directory for this command.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate light directions and intensities.
    Calibrate(JobArgs),
    /// Recover normals and albedo.
    Solve(JobArgs),
    /// Integrate solved normals into depth and a PLY mesh.
    Integrate(JobArgs),
    /// Render the solved surface under the job's light.
    Relight(JobArgs),
    /// Render a raking-light sweep.
    Sweep(JobArgs),
    /// Fit a polynomial texture map.
    FitPtm(JobArgs),
    /// Write a viewer bundle.
    ExportViewer(JobArgs),
}

type CommandFn = fn(&Job, bool) -> CliResult<()>;

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let (args, f): (&JobArgs, CommandFn) = match &cli.command {
        Command::Calibrate(a) => (a, commands::calibrate),
        Command::Solve(a) => (a, commands::solve),
        Command::Integrate(a) => (a, commands::integrate),
        Command::Relight(a) => (a, commands::relight),
        Command::Sweep(a) => (a, commands::sweep),
        Command::FitPtm(a) => (a, commands::fit_ptm_cmd),
        Command::ExportViewer(a) => (a, commands::export_viewer),
    };
    let job = Job::load(&args.job)?;
    f(&job, args.force)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lumen3d: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
