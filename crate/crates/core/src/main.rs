use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use morphevo::exp::{
    endpoint_mean_fitness, replay_metrics, replicate_dirs, run_experiment, ExpError,
    ExperimentConfig,
};
use morphevo::exp::persist::RunReader;
use morphevo::metrics::mann_whitney_u;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "morphevo",
    version,
    about = "Joint body and controller evolution over a tile-exploration arena"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment, writing one directory per replicate.
    Run(RunArgs),
    /// Recompute a finished run's metrics tables and verify the stored copies.
    Metrics(MetricsArgs),
    /// Compare the endpoint fitness of two runs with a rank-sum test.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Variant code: sync S|A, objective G|N, removal O|W (e.g. AGW).
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Robots created per replicate.
    #[arg(long, default_value_t = 500)]
    robots: usize,
    /// Capacity of the parents' and learning pools.
    #[arg(long, default_value_t = 25)]
    pop: usize,
    /// Controller evaluations per robot.
    #[arg(long, default_value_t = 200)]
    budget: usize,
    /// Worker threads per replicate.
    #[arg(long, default_value_t = 1)]
    cores: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Arena layout file; the built-in arena when omitted.
    #[arg(long)]
    arena: Option<PathBuf>,
    /// Output directory for the replicate run directories.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Experiment root or a single replicate directory.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Exactly two experiment roots.
    #[arg(long, num_args = 2)]
    runs: Vec<PathBuf>,
    /// Statistical test; only "ranksum" is supported.
    #[arg(long, default_value = "ranksum")]
    test: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), ExpError> {
    let config = ExperimentConfig {
        variant: args.variant,
        replicates: args.replicates,
        robot_budget: args.robots,
        pool_size: args.pop,
        learner_budget: args.budget,
        cores: args.cores,
        master_seed: args.seed,
        arena_path: args.arena,
        out_dir: args.out,
    };
    for report in run_experiment(&config)? {
        println!(
            "{}: {} robots, {} episodes",
            report.dir.display(),
            report.stats.robots,
            report.stats.episodes
        );
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), ExpError> {
    for dir in replicate_dirs(&args.run)? {
        let tables = replay_metrics(&dir)?;
        let reader = RunReader::open(&dir)?;
        for (name, fresh) in tables.entries() {
            let stored = reader.metric(name)?;
            if stored != fresh {
                return Err(ExpError::Corrupt(format!(
                    "{}: stored {name} differs from the replayed table",
                    dir.display()
                )));
            }
        }
        let endpoint = endpoint_mean_fitness(&dir)?;
        println!("{}: verified, endpoint mean fitness {endpoint}", dir.display());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), ExpError> {
    if args.test != "ranksum" {
        return Err(ExpError::Config(format!("unknown test \"{}\"", args.test)));
    }
    let mut groups = Vec::with_capacity(2);
    for root in &args.runs {
        let mut endpoints = Vec::new();
        for dir in replicate_dirs(root)? {
            endpoints.push(endpoint_mean_fitness(&dir)?);
        }
        groups.push(endpoints);
    }
    let (a, b) = (&groups[0], &groups[1]);
    let result = mann_whitney_u(a, b)
        .ok_or_else(|| ExpError::Config("both runs need at least one replicate".into()))?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "{}: n={} mean endpoint fitness {}",
        args.runs[0].display(),
        a.len(),
        mean(a)
    );
    println!(
        "{}: n={} mean endpoint fitness {}",
        args.runs[1].display(),
        b.len(),
        mean(b)
    );
    println!("ranksum: U={} z={} p={}", result.u, result.z, result.p_two_sided);
    Ok(())
}
