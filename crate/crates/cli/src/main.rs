//! `dualot`: sparse optimal transport, shape morphing, domain adaptation and
//! the memory benchmark from the command line.
//!
//! Exit status is 0 on success, 2 for bad input or flags and 3 when a solver fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "dualot",
    version,
    about = "Sparse discrete optimal transport by stochastic dual ascent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dual,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Solve transport between two point-cloud CSV files and write the solution as JSON.
    Solve {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Dual)]
        method: Method,
        /// Solver settings, one `key = value` per line.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Morph one shape into another and write one `t,x,y,mass` CSV per frame.
    Morph {
        /// Shape as `kind[:points]`, kind one of circle, square, two-circles.
        #[arg(long, default_value = "circle:64")]
        source: String,
        #[arg(long, default_value = "square:64")]
        target: String,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the rotated-Gaussian adaptation benchmark and write one summary row per mode and seed.
    Adapt {
        /// Comma-separated modes: plain, labels, full.
        #[arg(long, default_value = "plain,labels,full")]
        mode: String,
        /// Seeds as a list `1,2,5` or an inclusive range `1..10`.
        #[arg(long, default_value = "1..10")]
        seed: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare dense and dual memory accounting and time on circle-to-square instances.
    Bench {
        /// Comma-separated problem sizes.
        #[arg(long, default_value = "10,100,1000")]
        sizes: String,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Comma-separated methods: dense, dual.
        #[arg(long, default_value = "dense,dual")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            source,
            target,
            method,
            config,
            seed,
            out,
        } => commands::solve(&source, &target, method, config.as_deref(), seed, &out),
        Command::Morph {
            source,
            target,
            frames,
            config,
            seed,
            out,
        } => commands::morph(&source, &target, frames, config.as_deref(), seed, &out),
        Command::Adapt { mode, seed, out } => commands::adapt(&mode, &seed, &out),
        Command::Bench {
            sizes,
            repeats,
            method,
            seed,
            out,
        } => commands::bench(&sizes, repeats, &method, seed, &out),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
