//! Command-line surface.

use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use teamforge_core::bandit::{select_arms, BanditParams};
use teamforge_core::exhaustive::exhaustive_front;
use teamforge_core::io::{self as tio, ArchiveMeta};
use teamforge_core::{evolve, EvolveConfig, MemberId, SessionStore};
use thiserror::Error;

use crate::simulate::{simulate, SimulationConfig};
use crate::{interactive, server};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] teamforge_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("terminal i/o failed: {0}")]
    Terminal(#[from] io::Error),
}

impl CliError {
    /// 1 for bad input, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(e) if e.is_validation() => 1,
            CliError::Usage(_) | CliError::Read { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "teamforge",
    version,
    about = "Multi-objective team formation with interactive preference elicitation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a Pareto archive of teams.
    Evolve(EvolveArgs),
    /// Run elicitation sessions against a simulated user.
    Simulate(SimulateArgs),
    /// Pick a team interactively in the terminal.
    Recommend(RecommendArgs),
    /// Serve the session API over HTTP.
    Serve(ServeArgs),
    /// Compute the exact Pareto front by enumerating every team.
    Oracle(OracleArgs),
}

/// `auto` (one over the team size) or an explicit per-slot probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutationRate(pub Option<f64>);

impl FromStr for MutationRate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(MutationRate(None));
        }
        s.parse::<f64>()
            .map(|r| MutationRate(Some(r)))
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

/// Three comma-separated utility weights: diversity, cohesion, coverage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights(pub [f64; 3]);

impl FromStr for Weights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [d, c, v] = parts.as_slice() else {
            return Err(format!("expected three comma-separated weights, got `{s}`"));
        };
        let num = |x: &str| {
            x.parse::<f64>()
                .map_err(|_| format!("`{x}` is not a number"))
        };
        Ok(Weights([num(d)?, num(c)?, num(v)?]))
    }
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub pop: usize,
    #[arg(long, default_value_t = 100)]
    pub gens: usize,
    #[arg(long, default_value_t = 0.9)]
    pub cx: f64,
    #[arg(long = "mut", default_value = "auto")]
    pub mutation: MutationRate,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    #[arg(long, default_value_t = 8)]
    pub max_arms: usize,
    #[arg(long, default_value_t = 3)]
    pub slate: usize,
    #[arg(long, default_value_t = 500)]
    pub budget: u64,
}

impl ElicitArgs {
    fn params(&self) -> BanditParams {
        BanditParams {
            max_arms: self.max_arms,
            presentation_size: self.slate,
            round_budget: self.budget,
            ..BanditParams::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub user_weights: Weights,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub user_seed: u64,
    #[command(flatten)]
    pub elicit: ElicitArgs,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    /// Comma-separated member ids of the team the user should end up with.
    #[arg(long)]
    pub true_best: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[command(flatten)]
    pub elicit: ElicitArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Session log directory; defaults to $TEAMFORGE_DATA_DIR or ./data.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

fn load_inputs(
    roster: &Path,
    spec: &Path,
) -> Result<(teamforge_core::Roster, teamforge_core::ProjectSpec), CliError> {
    let roster = tio::parse_roster(&read(roster)?)?;
    let spec = tio::parse_spec(&read(spec)?)?;
    spec.check_against(&roster)?;
    Ok((roster, spec))
}

/// Runs one command. `input` and `output` back the interactive mode and
/// the short status lines other commands print.
pub fn run<R: BufRead, W: Write>(cli: Cli, input: R, mut output: W) -> Result<(), CliError> {
    match cli.command {
        Command::Evolve(args) => {
            let (roster, spec) = load_inputs(&args.roster, &args.spec)?;
            let config = EvolveConfig {
                population_size: args.pop,
                generations: args.gens,
                crossover_prob: args.cx,
                mutation_rate: args.mutation.0,
                rng_seed: args.seed,
            };
            let archive = evolve(&roster, &spec, &config)?;
            let meta = ArchiveMeta::new(&roster, &spec, args.seed);
            write(&args.out, &tio::write_archive(&archive, &meta))?;
            writeln!(
                output,
                "{} non-dominated teams written to {}",
                archive.len(),
                args.out.display()
            )?;
        }
        Command::Oracle(args) => {
            let (roster, spec) = load_inputs(&args.roster, &args.spec)?;
            let front = exhaustive_front(&roster, &spec)?;
            let meta = ArchiveMeta::new(&roster, &spec, 0);
            write(&args.out, &tio::write_archive(&front, &meta))?;
            writeln!(
                output,
                "true front of {} teams written to {}",
                front.len(),
                args.out.display()
            )?;
        }
        Command::Simulate(args) => {
            let (archive, _) = tio::read_archive(&read(&args.archive)?)?;
            let true_best = args.true_best.as_deref().map(|s| {
                let mut ids: Vec<MemberId> =
                    s.split(',').map(|x| MemberId::from(x.trim())).collect();
                ids.sort();
                ids
            });
            let config = SimulationConfig {
                user_weights: args.user_weights.0,
                tau: args.tau,
                user_seed: args.user_seed,
                trials: args.trials,
                params: args.elicit.params(),
                true_best,
            };
            let report = simulate(&archive, &config)?;
            let mut bytes = serde_json::to_vec_pretty(&report).expect("reports always serialize");
            bytes.push(b'\n');
            write(&args.out, &bytes)?;
            match report.identification_rate {
                Some(rate) => writeln!(
                    output,
                    "{} trials, identification rate {rate:.3}",
                    report.trials.len()
                )?,
                None => writeln!(
                    output,
                    "{} trials written to {}",
                    report.trials.len(),
                    args.out.display()
                )?,
            }
        }
        Command::Recommend(args) => {
            let (archive, _) = tio::read_archive(&read(&args.archive)?)?;
            let params = args.elicit.params();
            params.validate()?;
            let arms = select_arms(archive.entries(), params.max_arms)?;
            interactive::run(arms, params, input, output)?;
        }
        Command::Serve(args) => {
            let dir = args.data_dir.unwrap_or_else(SessionStore::default_data_dir);
            let store = Arc::new(SessionStore::with_data_dir(&dir)?);
            let addr: SocketAddr = format!("{}:{}", args.host, args.port)
                .parse()
                .map_err(|e| CliError::Usage(format!("bad listen address: {e}")))?;
            info!("session logs in {}", dir.display());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(addr, store))?;
        }
    }
    Ok(())
}
