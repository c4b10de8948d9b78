use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nar_cli::commands::{self, ConvergenceArgs, RunOverrides};
use nar_cli::config::load_config;
use nar_cli::CliResult;

#[derive(Parser)]
#[command(name = "nar", version, about = "Nuclear architecture reorganization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write diagnostics, snapshots and images.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// A, B, C, A-then-B or A-then-C.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Temporal convergence study against a small-step reference run.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated time steps, largest first.
        #[arg(long, value_delimiter = ',', required = true)]
        dts: Vec<f64>,
        #[arg(long)]
        ref_dt: f64,
        #[arg(long = "T")]
        t_end: f64,
        #[arg(long, default_value = "B")]
        scheme: String,
        #[arg(long, default_value = "B")]
        ref_scheme: String,
        #[arg(long, default_value_t = 0)]
        max_halvings: usize,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Render a snapshot to a .png or .ppm image.
    Render {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run {
            config,
            output_dir,
            scheme,
            dt,
            tmax,
        } => {
            let overrides = RunOverrides {
                output_dir,
                scheme,
                dt,
                t_max: tmax,
            };
            let summary = commands::run_config_file(&config, &overrides)?;
            println!(
                "ok: {} steps, {} halvings, output in {}",
                summary.steps,
                summary.halvings,
                summary.output_dir.display()
            );
        }
        Command::Convergence {
            config,
            dts,
            ref_dt,
            t_end,
            scheme,
            ref_scheme,
            max_halvings,
            output_dir,
        } => {
            let cfg = load_config(&config)?;
            let args = ConvergenceArgs {
                dts,
                reference_dt: ref_dt,
                t_end,
                scheme: commands::parse_scheme(&scheme)?,
                reference_scheme: commands::parse_scheme(&ref_scheme)?,
                max_halvings,
                output_dir,
            };
            commands::convergence(&cfg, &args)?;
        }
        Command::Render { snapshot, out } => commands::render_snapshot(&snapshot, &out)?,
        Command::Validate { config } => {
            let cfg = commands::validate(&config)?;
            println!("ok: {} ({} chromosomes)", cfg.name, cfg.n_chromosomes());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
