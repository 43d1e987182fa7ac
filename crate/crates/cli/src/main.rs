use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dgpe_cli::catalog::Catalog;
use dgpe_cli::config::{ExperimentConfig, Kind};
use dgpe_cli::runner::{default_root, run};
use dgpe_cli::RunError;
use serde_json::json;

/// Exit status for a catalog miss.
const EXIT_MISS: u8 = 1;

#[derive(Parser)]
#[command(name = "dgpe", version, about = "Dipolar Gross-Pitaevskii experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment config.
    Run { config: PathBuf },
    /// Spectral consistency checks.
    SpectralCheck { config: PathBuf },
    /// Growth lemma along the scaling fiber.
    Fiber { config: PathBuf },
    Evolve { config: PathBuf },
    VirialScan { config: PathBuf },
    ProfilesAudit { config: PathBuf },
    CheckConditions { config: PathBuf },
    AnisoScan { config: PathBuf },
    DecayProbe { config: PathBuf },
    /// Ground-state catalog.
    GroundState {
        #[command(subcommand)]
        action: GroundStateAction,
    },
}

#[derive(Subcommand)]
enum GroundStateAction {
    /// Minimize and store the result in the catalog.
    Compute { config: PathBuf },
    /// Look up gamma(c); exits with status 1 when the pair has not been computed.
    Query {
        #[arg(long, allow_hyphen_values = true)]
        lambda1: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda2: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Catalog directory, relative to the output root.
        #[arg(long, default_value = "catalog")]
        catalog: PathBuf,
    },
}

fn run_config(path: &Path, expect: Option<Kind>) -> Result<(), RunError> {
    let cfg = ExperimentConfig::load(path)?;
    if let Some(k) = expect {
        if cfg.kind != k {
            return Err(RunError::Config(format!(
                "{} has kind {}, expected {}",
                path.display(),
                cfg.kind.name(),
                k.name()
            )));
        }
    }
    let root = default_root();
    run(&cfg, &root)?;
    println!("{}", root.join(&cfg.output_dir).join("summary.json").display());
    Ok(())
}

fn query(lambda1: f64, lambda2: f64, c: f64, catalog: &Path) -> Result<bool, RunError> {
    let cat = Catalog::new(default_root().join(catalog));
    match cat.query(lambda1, lambda2, c)? {
        Some(hit) => {
            let out = json!({ "status": "hit", "c": hit.c, "gamma": hit.gamma, "record": hit.record });
            println!("{}", serde_json::to_string_pretty(&out).map_err(|e| RunError::Output(e.to_string()))?);
            Ok(true)
        }
        None => {
            println!("{}", json!({ "status": "miss", "lambda1": lambda1, "lambda2": lambda2, "hint": "compute first" }));
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run_config(config, None),
        Command::SpectralCheck { config } => run_config(config, Some(Kind::SpectralCheck)),
        Command::Fiber { config } => run_config(config, Some(Kind::Fiber)),
        Command::Evolve { config } => run_config(config, Some(Kind::Evolve)),
        Command::VirialScan { config } => run_config(config, Some(Kind::VirialScan)),
        Command::ProfilesAudit { config } => run_config(config, Some(Kind::ProfilesAudit)),
        Command::CheckConditions { config } => run_config(config, Some(Kind::CheckConditions)),
        Command::AnisoScan { config } => run_config(config, Some(Kind::AnisoScan)),
        Command::DecayProbe { config } => run_config(config, Some(Kind::DecayProbe)),
        Command::GroundState { action } => match action {
            GroundStateAction::Compute { config } => run_config(config, Some(Kind::GroundState)),
            GroundStateAction::Query {
                lambda1,
                lambda2,
                c,
                catalog,
            } => match query(*lambda1, *lambda2, *c, catalog) {
                Ok(true) => Ok(()),
                Ok(false) => return ExitCode::from(EXIT_MISS),
                Err(e) => Err(e),
            },
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
