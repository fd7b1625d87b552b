use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pricing_lab::curves::Objective;
use pricing_lab::sim::threads_from_env;
use pricing_lab_cli::commands::{
    cmd_closeness, cmd_curve, cmd_demo_anonymous_welfare, cmd_demo_unbounded_gap, cmd_reproduce,
    cmd_simulate, Figure, Mechanism,
};
use pricing_lab_cli::{CliError, ExperimentConfig, Outcome, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Revenue,
    Welfare,
}

#[derive(Debug, Parser)]
#[command(name = "pricing-lab", version, about = "Pricing experiments for budgeted agents")]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's `output`, then `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Override the quantile grid size.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Override the objective.
    #[arg(long, global = true, value_enum)]
    objective: Option<ObjectiveArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price-posting curve, its hull and the ex ante curve as CSV.
    Curve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Closeness report; exits 1 when a guaranteed bound is exceeded.
    Closeness {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate a mechanism and compare it with the ex ante relaxation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mechanism: Mechanism,
    },
    /// Regenerate the data behind a figure.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
    /// Counterexample demonstrations.
    Demo {
        #[command(subcommand)]
        demo: Demo,
    },
}

#[derive(Debug, Subcommand)]
enum Demo {
    /// Price posting against a mechanism with unbounded revenue.
    UnboundedGap {
        /// Truncation of the divergent sum.
        #[arg(long, default_value_t = 1_000_000)]
        m: u64,
    },
    /// Anonymous pricing losing welfare on a two-agent instance.
    AnonymousWelfare {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        samples: cli.samples,
        grid: cli.grid,
        objective: cli.objective.map(|o| match o {
            ObjectiveArg::Revenue => Objective::Revenue,
            ObjectiveArg::Welfare => Objective::Welfare,
        }),
    };
    let mut config_out = None;
    let outcome = match &cli.command {
        Command::Curve { config } => {
            let loaded = ExperimentConfig::load(config)?;
            config_out = loaded.config.output.clone();
            cmd_curve(&loaded, &overrides)?
        }
        Command::Closeness { config } => {
            let loaded = ExperimentConfig::load(config)?;
            config_out = loaded.config.output.clone();
            cmd_closeness(&loaded, &overrides)?
        }
        Command::Simulate { config, mechanism } => {
            let loaded = ExperimentConfig::load(config)?;
            config_out = loaded.config.output.clone();
            cmd_simulate(&loaded, &overrides, *mechanism)?
        }
        Command::Reproduce { figure } => cmd_reproduce(*figure, &overrides)?.0,
        Command::Demo { demo } => match demo {
            Demo::UnboundedGap { m } => cmd_demo_unbounded_gap(*m)?.0,
            Demo::AnonymousWelfare { eps } => cmd_demo_anonymous_welfare(*eps)?.0,
        },
    };
    let dir = cli
        .out
        .clone()
        .or(config_out)
        .unwrap_or_else(|| PathBuf::from("out"));
    outcome.write_to(&dir)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = threads_from_env() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if let Some(msg) = outcome.regression {
                eprintln!("bound regression: {msg}");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
