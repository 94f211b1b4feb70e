use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retel_harness::{run, Experiment, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "retel", version, about = "Simulation studies for regularized exponentially tilted empirical likelihood")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibration of posteriors via the Monahan–Boos H statistic.
    Uniformity(Common),
    /// Coverage and length of central credible intervals.
    Coverage(Common),
    /// Expected KL divergence in the two-group hierarchical model.
    Kl(Common),
    /// WETEL multipliers converging to the RETEL multiplier.
    #[command(name = "lambda_convergence")]
    LambdaConvergence(Common),
    /// Log-ratio curves of both regularized variants for one observation.
    #[command(name = "logratio_curve")]
    LogratioCurve(Common),
    /// Chi-square limit of the log-ratio statistic.
    Wilks(Common),
    /// Hierarchical small-area estimation.
    #[command(name = "small_area")]
    SmallArea {
        #[command(flatten)]
        common: Common,
        /// Input CSV with columns y, x1, x2; synthetic data when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build(command: Command) -> Result<ExperimentConfig, HarnessError> {
    let (experiment, common, csv) = match command {
        Command::Uniformity(c) => (Experiment::Uniformity, c, None),
        Command::Coverage(c) => (Experiment::Coverage, c, None),
        Command::Kl(c) => (Experiment::Kl, c, None),
        Command::LambdaConvergence(c) => (Experiment::LambdaConvergence, c, None),
        Command::LogratioCurve(c) => (Experiment::LogratioCurve, c, None),
        Command::Wilks(c) => (Experiment::Wilks, c, None),
        Command::SmallArea { common, csv } => (Experiment::SmallArea, common, csv),
    };
    let mut cfg = ExperimentConfig::defaults(experiment);
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.threads {
        cfg.threads = v;
    }
    if let Some(v) = common.reps {
        cfg.reps = v;
    }
    if common.out.is_some() {
        cfg.out = common.out;
    }
    if csv.is_some() {
        cfg.input = csv;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build(cli.command).and_then(|cfg| {
        let table = run(&cfg)?;
        match &cfg.out {
            Some(path) => table.write_csv(std::fs::File::create(path)?),
            None => table.write_csv(std::io::stdout().lock()),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
