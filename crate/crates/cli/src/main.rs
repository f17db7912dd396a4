//! `oec`: encode, verify, profile, run the pipeline and simulate downlink
//! passes from the command line.
//!
//! Exit codes: 0 success, 1 operational failure, 2 configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oec_core::SizeClass;

#[derive(Parser)]
#[command(name = "oec", version, about = "Orbital edge computing compression toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Seed for weights and synthetic inputs
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with default values for any command option
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving every output file
    #[arg(long, global = true, default_value = "oec-out")]
    pub out_dir: PathBuf,
    /// Print the machine-readable result on stdout
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tile, transform and entropy-code images into .lat and .fenc files
    Encode(commands::EncodeArgs),
    /// Decode .fenc streams and compare them with their .lat artifacts
    Verify(commands::VerifyArgs),
    /// Sweep tile size x batch size x model class and pick the best TCR/s
    Profile(commands::ProfileArgs),
    /// Pipeline execution
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Simulate downlink passes for a mission file
    Simulate(commands::SimulateArgs),
    /// Bundled reference data
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
    /// Convert a JSON report into its CSV table
    Report(commands::ReportArgs),
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run the tiling -> transform -> entropy pipeline
    Run(commands::PipelineArgs),
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// List bundled links, devices, codecs and selection rows
    List {
        #[arg(long, value_enum, default_value = "all")]
        kind: commands::FixtureKind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassArg {
    S,
    M,
    L,
}

impl From<ClassArg> for SizeClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::S => SizeClass::S,
            ClassArg::M => SizeClass::M,
            ClassArg::L => SizeClass::L,
        }
    }
}

/// Error carrying the exit code it maps to.
pub enum Failure {
    Config(anyhow::Error),
    Operational(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Operational(_) => 1,
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let config = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<oec_core::Error>(),
                Some(oec_core::Error::InvalidParameter { .. } | oec_core::Error::Config(_))
            )
        });
        if config {
            Failure::Config(e)
        } else {
            Failure::Operational(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = cli.global;
    let result = config::FileConfig::load(g.config.as_deref()).map_err(Failure::Config).and_then(|cfg| match cli.command {
        Command::Encode(a) => commands::encode(&g, &cfg, a),
        Command::Verify(a) => commands::verify(&g, a),
        Command::Profile(a) => commands::profile(&g, &cfg, a),
        Command::Pipeline { command: PipelineCommand::Run(a) } => commands::pipeline(&g, &cfg, a),
        Command::Simulate(a) => commands::simulate(&g, a),
        Command::Fixtures { command: FixturesCommand::List { kind } } => commands::fixtures_list(&g, kind),
        Command::Report(a) => commands::report(&g, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Operational(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
