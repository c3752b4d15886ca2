use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use edgeswarm::cli;
use edgeswarm::SimMode;

#[derive(Parser)]
#[command(name = "edgeswarm", version, about = "Edge-swarm video offloading simulator")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    StrictBarrier,
    PerNodeOverlap,
}

impl From<Mode> for SimMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::StrictBarrier => SimMode::StrictBarrier,
            Mode::PerNodeOverlap => SimMode::PerNodeOverlap,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every violation.
    Validate { scenario: PathBuf },
    /// Simulate one scenario and print its delay breakdown.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the event log here, one event per line.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare cooperative and leader-only offloading over per-link capacities.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated capacities in kb/s.
        #[arg(long, value_delimiter = ',')]
        capacities: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the packaged two-node sweep from 100 to 1000 kb/s.
    Fig5 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    let code = match args.command {
        Command::Validate { scenario } => cli::cmd_validate(&scenario, &mut err),
        Command::Run { scenario, mode, seed, trace } => {
            cli::cmd_run(&scenario, mode.map(Into::into), seed, trace.as_deref(), &mut out, &mut err)
        }
        Command::Sweep { scenario, capacities, out: dest } => {
            cli::cmd_sweep(&scenario, &capacities, dest.as_deref(), &mut out, &mut err)
        }
        Command::Fig5 { out: dest } => cli::cmd_fig5(dest.as_deref(), &mut out, &mut err),
    };
    ExitCode::from(code)
}
