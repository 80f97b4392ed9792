use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evcap_cli::{execute, Command, Format, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "evcap", version, about = "Battery capacity analyses and charging simulations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Closed-form inconvenience time and sensitivity sweeps
    Analyze(Common),
    /// Mobility and charging simulation or scenario sweep
    Simulate(Common),
    /// Cost-optimal battery capacity for one driver or a population
    Optimize(Common),
    /// Optimal capacity over a grid of density, power and policy
    Whatif(Common),
    /// Quadratic price regression on a price list
    FitPrices(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVCAP_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Analyze(a) => (Command::Analyze, a),
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Optimize(a) => (Command::Optimize, a),
        Sub::Whatif(a) => (Command::Whatif, a),
        Sub::FitPrices(a) => (Command::FitPrices, a),
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out,
        format: args.format,
    };
    let result = RunConfig::load(&args.config).and_then(|mut config| {
        overrides.apply(&mut config);
        execute(command, &config)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
