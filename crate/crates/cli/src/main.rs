//! `dnlab`: batch driver for DN map experiments.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, Settings};
use error::{CliError, CliResult};
use manifest::{load_manifest, summarize, MANIFEST_NAME};

#[derive(Parser, Debug)]
#[command(name = "dnlab", version, about = "Dirichlet-to-Neumann map experiments on triangulated surfaces")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    /// Taken from the config's `command` key when omitted.
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Build or load a mesh and write it with a summary.
    Mesh,
    /// Boundary DN matrix and its spectrum.
    Dn,
    /// Exact identity suite and the spectral gap ladder.
    VerifyIdentities,
    /// Rayleigh quotient trace along a shrinking family.
    Evolve,
    /// Fit constants and run the approximation scheme.
    Runge,
    /// Probe ratio along a frequency ladder.
    Probe,
    /// Contrast sweep and logarithmic stability fit.
    Stability,
    /// Scalar recurrence against its logarithmic-integral bounds.
    Recurrence,
    /// Summarise a manifest.
    Report {
        /// Defaults to `<out>/manifest.json`.
        manifest: Option<PathBuf>,
    },
}

impl Command {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "mesh" => Command::Mesh,
            "dn" => Command::Dn,
            "verify-identities" => Command::VerifyIdentities,
            "evolve" => Command::Evolve,
            "runge" => Command::Runge,
            "probe" => Command::Probe,
            "stability" => Command::Stability,
            "recurrence" => Command::Recurrence,
            "report" => Command::Report { manifest: None },
            _ => return None,
        })
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let settings = Settings::new(cli.common)?;
    let command = match cli.command {
        Some(c) => c,
        None => {
            let name = settings.file.command.clone().ok_or_else(|| CliError::Usage("no command given on the line or in the config".into()))?;
            Command::from_name(&name).ok_or_else(|| CliError::Usage(format!("unknown command {name:?}")))?
        }
    };
    if let Some(n) = settings.parallel() {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let manifest = match command {
        Command::Report { manifest } => {
            let path = manifest.unwrap_or_else(|| settings.out().join(MANIFEST_NAME));
            let m = load_manifest(&path)?;
            let dir = path.parent().map(PathBuf::from).unwrap_or_default();
            let (text, ok) = summarize(&m, &dir);
            print!("{text}");
            return if ok { Ok(()) } else { Err(CliError::SuiteFailed { suite: m.command, report: path }) };
        }
        Command::Mesh => commands::mesh(&settings),
        Command::Dn => commands::dn(&settings),
        Command::VerifyIdentities => commands::verify_identities(&settings),
        Command::Evolve => commands::evolve(&settings),
        Command::Runge => commands::runge(&settings),
        Command::Probe => commands::probe(&settings),
        Command::Stability => commands::stability(&settings),
        Command::Recurrence => commands::recurrence(&settings),
    }
    .map_err(commands::classify)?;
    let (text, _) = summarize(&manifest, &settings.out());
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dnlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
