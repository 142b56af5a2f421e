use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbcv_cli::{commands, CliError, Config, Output};

#[derive(Parser)]
#[command(name = "rbcv", version, about = "Reduced-basis control-variate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Train the surrogate and the variate basis over the parameter grid.
    Propagate,
    /// Evaluate a trained basis at random parameters outside the grid.
    Holdout,
    /// Conjugate Gaussian MMSE sweep.
    BayesToy,
    /// Posterior expectations of the fin compliance.
    BayesPde,
    /// Cost model report.
    Breakeven,
    /// Train and store the reduced basis only.
    RbTrain,
    /// KL eigenvalues and retained modes.
    KlSpectrum,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Propagate => "propagate",
            Command::Holdout => "holdout",
            Command::BayesToy => "bayes-toy",
            Command::BayesPde => "bayes-pde",
            Command::Breakeven => "breakeven",
            Command::RbTrain => "rb-train",
            Command::KlSpectrum => "kl-spectrum",
        }
    }
}

fn load(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Config::parse(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let cfg = load(cli)?;
    let out = Output::new(&cli.out, &cfg, cli.command.name())?;
    match cli.command {
        Command::Propagate => commands::propagate(&cfg, &out).map(drop),
        Command::Holdout => commands::holdout(&cfg, &out).map(drop),
        Command::BayesToy => commands::bayes_toy(&cfg, &out).map(drop),
        Command::BayesPde => commands::bayes_pde(&cfg, &out).map(drop),
        Command::Breakeven => commands::breakeven(&cfg, &out).map(drop),
        Command::RbTrain => commands::rb_train(&cfg, &out).map(drop),
        Command::KlSpectrum => commands::kl_spectrum(&cfg, &out).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rbcv {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
