use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hilbertian_ap::commands::{cmd_ap, cmd_build, cmd_moduli, cmd_split, cmd_verify, CliError, Outcome};
use hilbertian_ap::config::{parse_dimension, RunConfig};
use hilbertian_ap::space::PSchedule;
use hilbertian_ap::store::ArtifactStore;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleKind {
    Power,
    Log,
    Explicit,
}

#[derive(Debug, Parser)]
#[command(name = "hap", version, about = "Finite-level construction and checks for an asymptotically Hilbertian space")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Exponent schedule.
    #[arg(long, value_enum, default_value = "power", global = true)]
    schedule: ScheduleKind,

    /// Rate exponent of the power schedule, in (0, 1).
    #[arg(long, default_value_t = 0.5, global = true)]
    alpha: f64,

    /// Exponents p_0, p_1, ... of the explicit schedule.
    #[arg(long, value_delimiter = ',', global = true)]
    p: Vec<f64>,

    /// Highest certified level N; data is searched up to N + 1.
    #[arg(long, default_value_t = 6, global = true)]
    max_level: u32,

    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,

    /// Search budget per level.
    #[arg(long, default_value_t = 64, global = true)]
    budget: u64,

    /// Tolerance for exact identities.
    #[arg(long, default_value_t = 1e-9, global = true)]
    tol: f64,

    /// Output directory.
    #[arg(long, env = "HAP_OUT_DIR", default_value = "out", global = true)]
    out: PathBuf,

    /// Type-2 constant bound.
    #[arg(long, default_value_t = 1.0, global = true)]
    c1: f64,

    /// Cotype constant bound.
    #[arg(long, default_value_t = 1.0, global = true)]
    c2: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search enumerations and signs, certify constants, store artifacts.
    Build,
    /// Recheck the stored data.
    Verify,
    /// Trace experiment on truncated operators.
    Ap {
        /// Operator truncation level (capped by the max level).
        #[arg(long, default_value_t = 6)]
        truncation: u32,
        /// Highest level used by the finite-rank operators.
        #[arg(long, default_value_t = 2)]
        support_level: u32,
        /// Number of finite-rank operators.
        #[arg(long, default_value_t = 8)]
        finite_rank: usize,
    },
    /// Witness curve, distance bounds and growth envelope.
    Moduli {
        /// Dimensions, decimal or 2^k.
        #[arg(long, value_delimiter = ',', default_value = "2^10,2^20,2^40,2^64")]
        m: Vec<String>,
    },
    /// Split the level set into two families.
    Split {
        #[arg(long, default_value_t = 2)]
        depth: usize,
    },
}

fn config_from(cli: &Cli) -> Result<RunConfig, CliError> {
    let schedule = match cli.schedule {
        ScheduleKind::Power => PSchedule::Power { alpha: cli.alpha },
        ScheduleKind::Log => PSchedule::Log,
        ScheduleKind::Explicit => PSchedule::Explicit { p: cli.p.clone() },
    };
    let mut config = RunConfig {
        schedule,
        max_level: cli.max_level,
        seed: cli.seed,
        budget: cli.budget,
        tol: cli.tol,
        c1: cli.c1,
        c2: cli.c2,
        ..RunConfig::default()
    };
    match &cli.command {
        Command::Ap {
            truncation,
            support_level,
            finite_rank,
        } => {
            config.ap_truncation = *truncation;
            config.ap_support_level = *support_level;
            config.ap_finite_rank = *finite_rank;
        }
        Command::Moduli { m } => {
            config.m_samples = m
                .iter()
                .map(|s| parse_dimension(s))
                .collect::<Result<_, _>>()
                .map_err(CliError::Config)?;
        }
        Command::Split { depth } => config.split_depth = *depth,
        _ => {}
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let config = config_from(cli)?;
    let store = ArtifactStore::new(&cli.out);
    match cli.command {
        Command::Build => cmd_build(&config, &store),
        Command::Verify => cmd_verify(&config, &store),
        Command::Ap { .. } => cmd_ap(&config, &store),
        Command::Moduli { .. } => cmd_moduli(&config, &store),
        Command::Split { .. } => cmd_split(&config, &store),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.render());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
