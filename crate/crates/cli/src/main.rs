use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::{BigInt, BigUint};

use cra::builders::Strategy;
use cra_cli::commands::{
    self, cmd_bench, cmd_det, cmd_matvec, cmd_reconstruct, load_sms_file, random_sms, stats_json,
    CliError, RunSettings,
};

#[derive(Parser)]
#[command(name = "cra", version, about = "Chinese remaindering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Deterministic,
    Earliest,
    Multi,
    Balanced,
    Amortized,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Deterministic => Strategy::Deterministic,
            StrategyArg::Earliest => Strategy::Earliest,
            StrategyArg::Multi => Strategy::Multi,
            StrategyArg::Balanced => Strategy::Balanced,
            StrategyArg::Amortized => Strategy::Amortized,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Termination strategy
    #[arg(long, value_enum, default_value = "earliest")]
    strategy: StrategyArg,

    /// Early-termination threshold: consecutive confirmations required
    #[arg(long, default_value_t = 2)]
    et: usize,

    /// Amortized checkpoint growth factor, strictly between 1 and 2
    #[arg(long, default_value_t = 1.5)]
    rho: f64,

    /// Magnitude bound for the deterministic strategy (decimal integer);
    /// derived from the input when omitted
    #[arg(long)]
    bound: Option<BigUint>,

    /// Seed for all randomness (primes, combination coefficients)
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Bit size of the generated primes
    #[arg(long, default_value_t = 31)]
    prime_bits: u32,

    /// Artificial delay per black-box apply, in milliseconds
    #[arg(long, default_value_t = 0)]
    apply_delay_ms: u64,

    /// Print run statistics as one JSON object
    #[arg(long)]
    stats: bool,
}

#[derive(Args, Clone)]
struct ThreadArgs {
    /// Worker threads; 0 runs sequentially (default: hardware parallelism)
    #[arg(long)]
    threads: Option<usize>,

    /// Primes per dispatched work packet and per victim round
    #[arg(long, default_value_t = 4)]
    batch: usize,

    /// Synchronize (preempt and fold) every this many victim rounds
    #[arg(long, default_value_t = 1)]
    sync_every: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a known integer through the full machinery (demo oracle)
    Reconstruct {
        /// Target value (decimal, may be negative)
        #[arg(long, allow_hyphen_values = true)]
        value: BigInt,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        par: ThreadArgs,
    },
    /// Exact signed determinant of a square SMS matrix
    Det {
        /// Path to the matrix in SMS triplet format
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        par: ThreadArgs,
    },
    /// Exact matrix-vector product over a square SMS matrix
    Matvec {
        /// Path to the matrix in SMS triplet format
        file: PathBuf,
        /// Path to the right-hand side: whitespace-separated integers
        #[arg(long)]
        rhs: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        par: ThreadArgs,
    },
    /// Time strategies against each other on one determinant
    Bench {
        /// Path to the matrix in SMS triplet format
        file: Option<PathBuf>,
        /// Generate a random dense matrix instead: <N> <BITS>
        #[arg(long, num_args = 2, value_names = ["N", "BITS"], conflicts_with = "file")]
        random: Option<Vec<u64>>,
        /// Strategies to compare (comma separated)
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        strategies: Vec<StrategyArg>,
        /// Worker-thread counts to compare (comma separated)
        #[arg(long, value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1)]
        sync_every: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn settings_from(run: &RunArgs, par: &ThreadArgs) -> RunSettings {
    RunSettings {
        strategy: run.strategy.into(),
        et: run.et.max(1),
        rho: run.rho,
        bound: run.bound.clone(),
        seed: run.seed,
        prime_bits: run.prime_bits,
        threads: par
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        batch: par.batch.max(1),
        sync_every: par.sync_every.max(1),
        apply_delay: (run.apply_delay_ms > 0)
            .then(|| Duration::from_millis(run.apply_delay_ms)),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Reconstruct { value, run, par } => {
            let settings = settings_from(&run, &par);
            let (reconstructed, stats) = cmd_reconstruct(&value, &settings)?;
            println!("{reconstructed}");
            if run.stats {
                println!("{}", stats_json(&stats));
            }
            Ok(())
        }
        Command::Det { file, run, par } => {
            let settings = settings_from(&run, &par);
            let sms = load_sms_file(&file)?;
            let report = cmd_det(&sms, &settings)?;
            println!("{}", report.determinant);
            if run.stats {
                println!("{}", stats_json(&report.stats));
            }
            Ok(())
        }
        Command::Matvec {
            file,
            rhs,
            run,
            par,
        } => {
            let settings = settings_from(&run, &par);
            let sms = load_sms_file(&file)?;
            let rhs_text = std::fs::read_to_string(&rhs)?;
            let rhs = commands::parse_int_list(&rhs_text)?;
            let report = cmd_matvec(&sms, &rhs, &settings)?;
            for entry in &report.product {
                println!("{entry}");
            }
            if run.stats {
                println!("{}", stats_json(&report.stats));
            }
            Ok(())
        }
        Command::Bench {
            file,
            random,
            strategies,
            threads,
            batch,
            sync_every,
            run,
        } => {
            let mut settings = settings_from(
                &run,
                &ThreadArgs {
                    threads: Some(0),
                    batch,
                    sync_every,
                },
            );
            settings.bound = run.bound.clone();
            let sms = match (&file, &random) {
                (Some(path), None) => load_sms_file(path)?,
                (None, Some(shape)) => {
                    let n = usize::try_from(shape[0])
                        .ok()
                        .filter(|&n| (1..=4096).contains(&n))
                        .ok_or_else(|| {
                            CliError::Usage("--random dimension must be in 1..=4096".into())
                        })?;
                    let bits = u32::try_from(shape[1])
                        .ok()
                        .filter(|&b| (1..=4096).contains(&b))
                        .ok_or_else(|| {
                            CliError::Usage("--random bits must be in 1..=4096".into())
                        })?;
                    random_sms(n, bits, run.seed)
                }
                _ => {
                    return Err(CliError::Usage(
                        "bench needs a matrix file or --random <N> <BITS>".into(),
                    ))
                }
            };
            let strategies: Vec<Strategy> = strategies.iter().map(|&s| s.into()).collect();
            let report = cmd_bench(&sms, &strategies, &threads, &settings)?;
            println!(
                "{:<14} {:>7} {:>10} {:>8} {:>6}  digest",
                "strategy", "threads", "wall_s", "applies", "k",
            );
            for row in &report.rows {
                println!(
                    "{:<14} {:>7} {:>10.4} {:>8} {:>6}  {}",
                    row.strategy.name(),
                    row.threads,
                    row.wall_s,
                    row.applies,
                    row.primes_used,
                    row.digest
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
