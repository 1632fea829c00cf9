use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ppl_cli::bench::{bench, BenchOptions, Suite};
use ppl_cli::model::load;
use ppl_cli::run::{run, Algorithm, RunOptions};
use ppl_cli::{commands, CliError, CliResult};

#[derive(Parser)]
#[command(name = "ppl", version, about = "Factorised analysis and inference for a small probabilistic language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Lmh,
    LmhFast,
    Bbvi,
    BbviRb,
    Smc,
    SmcIter,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Lmh,
    Bbvi,
    Smc,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form of a program.
    Parse { model: String },
    /// Print the control-flow graph.
    Cfg {
        model: String,
        #[arg(long)]
        dot: bool,
    },
    /// Factor sets and graphical-model exports.
    Analyze {
        model: String,
        #[arg(long)]
        json: bool,
        /// Write the Bayesian network as DOT.
        #[arg(long, value_name = "FILE")]
        bayes_net: Option<PathBuf>,
        /// Write the Markov network as DOT.
        #[arg(long, value_name = "FILE")]
        markov_net: Option<PathBuf>,
    },
    /// Sub-program for the factor of one sample statement.
    Slice {
        model: String,
        /// Address (or address pattern) of the sample statement.
        #[arg(long)]
        at: String,
        #[arg(long)]
        dot: bool,
    },
    /// Run inference, streaming one JSON record per step.
    Run {
        model: String,
        #[arg(value_enum)]
        algorithm: AlgoArg,
        /// Steps (lmh) or optimisation iterations (bbvi).
        #[arg(short = 'n', long, default_value_t = 1000)]
        iterations: u64,
        #[arg(short = 'p', long, default_value_t = 100)]
        particles: usize,
        /// Draws per gradient estimate (bbvi).
        #[arg(long, default_value_t = 10)]
        samples: u64,
        #[arg(long, env = "PPL_SEED", default_value_t = 0)]
        seed: u64,
        /// Number of data points, for models with a size parameter.
        #[arg(long)]
        size: Option<i64>,
        /// Observations as a JSON object of address: value.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Write the record stream here instead of stdout.
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write the summary here instead of stderr.
        #[arg(long, value_name = "FILE")]
        summary: Option<PathBuf>,
    },
    /// Compare baseline and factored variants across the corpus.
    Bench {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 3)]
        reps: u64,
        #[arg(long, env = "PPL_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(short = 'n', long, default_value_t = 10_000)]
        iterations: u64,
        #[arg(short = 'p', long, default_value_t = 100)]
        particles: usize,
        #[arg(long, default_value_t = 1000)]
        estimates: u64,
        /// Comma-separated corpus model names.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn sink(path: &Option<PathBuf>, default: Box<dyn Write>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => default,
    })
}

fn execute(cli: Cli) -> CliResult<()> {
    let stdout = || -> Box<dyn Write> { Box::new(BufWriter::new(io::stdout().lock())) };
    match cli.command {
        Command::Parse { model } => commands::parse(&load(&model, None, None)?, &mut stdout()),
        Command::Cfg { model, dot } => commands::cfg(&load(&model, None, None)?, dot, &mut stdout()),
        Command::Analyze { model, json, bayes_net, markov_net } => commands::analyze(
            &load(&model, None, None)?,
            json,
            bayes_net.as_deref(),
            markov_net.as_deref(),
            &mut stdout(),
        ),
        Command::Slice { model, at, dot } => commands::slice(&load(&model, None, None)?, &at, dot, &mut stdout()),
        Command::Run { model, algorithm, iterations, particles, samples, seed, size, data, out, summary } => {
            let algo = match algorithm {
                AlgoArg::Lmh => Algorithm::Lmh,
                AlgoArg::LmhFast => Algorithm::LmhFast,
                AlgoArg::Bbvi => Algorithm::Bbvi,
                AlgoArg::BbviRb => Algorithm::BbviRb,
                AlgoArg::Smc => Algorithm::Smc,
                AlgoArg::SmcIter => Algorithm::SmcIter,
            };
            let m = load(&model, size, data.as_deref())?;
            let mut out = sink(&out, stdout())?;
            let mut summary = sink(&summary, Box::new(io::stderr()))?;
            run(&m, algo, &RunOptions { iterations, particles, samples, seed }, &mut out, &mut summary)?;
            out.flush()?;
            summary.flush()?;
            Ok(())
        }
        Command::Bench { suite, reps, seed, iterations, particles, estimates, models, out } => {
            let suite = match suite {
                SuiteArg::Lmh => Suite::Lmh,
                SuiteArg::Bbvi => Suite::Bbvi,
                SuiteArg::Smc => Suite::Smc,
            };
            for name in &models {
                if ppl_core::corpus::get(name).is_none() {
                    return Err(CliError::Usage(format!("{name}: not a corpus model")));
                }
            }
            let opts = BenchOptions { reps, seed, iterations, particles, estimates, models };
            let report = bench(suite, &opts);
            let mut out = sink(&out, stdout())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serialisable"))?;
            out.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
