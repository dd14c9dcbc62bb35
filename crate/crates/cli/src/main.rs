use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use confiderai::data::{self, BlobsConfig};
use confiderai::toy::{grid_scores, toy_ruleset, write_grid_csv, ToyVariant};
use confiderai::{Error, Pipeline, PipelineConfig, Ruleset, Scorer};

#[derive(Parser)]
#[command(
    name = "confiderai",
    version,
    about = "Conformal prediction sets for rule-based binary classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the data and induce a ruleset from the training part.
    Induce(PipelineArgs),
    /// Calibrate one predictor per significance level.
    Calibrate(PipelineArgs),
    /// Write prediction sets for the test split.
    Predict {
        #[command(flatten)]
        args: PipelineArgs,
        /// Also write per-rule score breakdowns.
        #[arg(long)]
        explain: bool,
    },
    /// Relabel by critical-set membership and retrain.
    Ccs(PipelineArgs),
    /// Write report.json and report.txt.
    Eval(PipelineArgs),
    /// Run every stage in order.
    Run {
        #[command(flatten)]
        args: PipelineArgs,
        #[arg(long)]
        explain: bool,
    },
    /// Write a synthetic dataset as CSV.
    Generate {
        #[arg(long, value_enum, default_value_t = Generator::Blobs)]
        kind: Generator,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Destination file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a two-feature fixture ruleset as JSON.
    Toy {
        #[arg(value_parser = parse_variant)]
        variant: ToyVariant,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dump s(x, label) over a uniform grid as CSV (x1, x2, s).
    Grid {
        /// Ruleset JSON with exactly two features.
        #[arg(long)]
        ruleset: PathBuf,
        /// Label in the ruleset's encoding.
        #[arg(long, allow_hyphen_values = true)]
        label: i64,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// Pipeline config supplying the score settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Blobs,
    Xor,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML pipeline config; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Significance levels, replacing `epsilon_list`.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl PipelineArgs {
    fn pipeline(&self) -> Result<Pipeline> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if !self.epsilon.is_empty() {
            config.epsilon_list = self.epsilon.clone();
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        Ok(Pipeline::new(config)?)
    }
}

fn parse_variant(s: &str) -> Result<ToyVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn emit(output: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => Ok(io::stdout().lock().write_all(bytes)?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Induce(args) => {
            let pipeline = args.pipeline()?;
            let ruleset = pipeline.induce()?;
            println!(
                "{} rules written to {}",
                ruleset.len(),
                pipeline.path(confiderai::pipeline::RULESET_JSON).display()
            );
        }
        Command::Calibrate(args) => {
            for p in args.pipeline()?.calibrate()? {
                println!(
                    "epsilon {}: threshold {} from {} calibration scores",
                    p.epsilon(),
                    p.s_eps(),
                    p.n_c()
                );
            }
        }
        Command::Predict { args, explain } => args.pipeline()?.predict(explain)?,
        Command::Ccs(args) => {
            let retrained = args.pipeline()?.ccs()?;
            println!("{} rules retrained on critical-set labels", retrained.len());
        }
        Command::Eval(args) => print!("{}", args.pipeline()?.evaluate()?.to_table()),
        Command::Run { args, explain } => print!("{}", args.pipeline()?.run(explain)?.to_table()),
        Command::Generate {
            kind,
            samples,
            dim,
            seed,
            output,
        } => {
            let data = match kind {
                Generator::Blobs => data::two_blobs(&BlobsConfig {
                    n_samples: samples,
                    dim,
                    seed,
                    ..Default::default()
                })?,
                Generator::Xor => data::xor(samples, seed)?,
            };
            let mut buf = Vec::new();
            data.write_csv_to(&mut buf)?;
            emit(output.as_ref(), &buf)?;
        }
        Command::Toy { variant, output } => {
            emit(output.as_ref(), toy_ruleset(variant).to_json()?.as_bytes())?;
        }
        Command::Grid {
            ruleset,
            label,
            resolution,
            config,
            output,
        } => {
            let text = fs::read_to_string(&ruleset)
                .with_context(|| format!("reading ruleset {}", ruleset.display()))?;
            let ruleset = Ruleset::from_json(&text)?;
            let score = match config {
                Some(path) => PipelineConfig::load(&path)?.score,
                None => Default::default(),
            };
            let label = ruleset.label_space().decode(label)?;
            let scorer = Scorer::new(ruleset, score)?;
            let grid = grid_scores(&scorer, label, resolution)?;
            let mut buf = Vec::new();
            write_grid_csv(&grid, &mut buf)?;
            emit(output.as_ref(), &buf)?;
        }
    }
    Ok(())
}

/// 2 for bad input, 3 for schema violations, 4 for an empty critical set.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Schema(_)) => 3,
        Some(Error::EmptyCcs) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::debug!("{err:?}");
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
