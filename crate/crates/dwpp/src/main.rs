use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dwpp::commands::{self, Common};

#[derive(Parser)]
#[command(name = "dwpp", version, about = "Double-weighted pseudo-posterior estimation under informative sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print progress to stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Exit with an error when a study or fit raises a warning.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Args)]
struct Source {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled preset: table1, fig2_G1250, fig2_G500, fig3_pairwise, fig_indirect, g50_collapse, jolts.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a population (or the synthetic establishment sample).
    Generate {
        #[command(flatten)]
        source: Source,
        /// Replicate whose population to write.
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Draw the informative sample (and SRS control) of one replicate.
    Sample {
        #[command(flatten)]
        source: Source,
        /// Read the population from this directory instead of generating it.
        #[arg(long)]
        population: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Fit the weighted model to a CSV and write posterior summaries and draws.
    Fit {
        #[command(flatten)]
        source: Source,
        /// Data CSV; overrides the config's data path.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run Monte Carlo studies and write report files.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Number of replicates, overriding the config.
        #[arg(long = "b")]
        replicates: Option<usize>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Re-emit report CSVs and the summary table from report JSON files.
    Report {
        /// Directory holding *_report.json files.
        #[arg(long)]
        input: PathBuf,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn common(s: Source, verbose: u8) -> Common {
    Common { config: s.config, preset: s.preset, seed: s.seed, out: s.out, verbose }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let v = cli.verbose;
    let result = match cli.command {
        Command::Generate { source, replicate } => commands::generate(&common(source, v), replicate),
        Command::Sample { source, population, replicate } => commands::sample(&common(source, v), population.as_deref(), replicate),
        Command::Fit { source, data } => commands::fit(&common(source, v), data.as_deref()),
        Command::Simulate { source, replicates, workers } => commands::simulate(&common(source, v), replicates, workers),
        Command::Report { input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            commands::report(&input, &out)
        }
    };
    match result {
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if cli.strict && !warnings.is_empty() {
                eprintln!("error: {} warning(s) with --strict", warnings.len());
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
