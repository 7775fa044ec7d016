use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use layercl::commands::{self, ExportArgs, Global, PrepareArgs, SynthArgs};
use layercl::embeddings::{ExportFormat, ExportWhat};
use layercl::report::to_csv;
use layercl_core::data::Delimiter;

#[derive(Parser)]
#[command(name = "layercl", version, about = "Layer-wise contrastive training for graph collaborative filtering")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both seeds in the configuration (init = seed, sampling = seed + 1)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation threads
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Embedding storage: 32 or 64
    #[arg(long, global = true)]
    precision: Option<u32>,
    /// Output directory (or file, for export)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clustered synthetic ratings file
    Synth {
        #[arg(long, default_value_t = 2000)]
        users: usize,
        #[arg(long, default_value_t = 1500)]
        items: usize,
        #[arg(long, default_value_t = 40000)]
        interactions: usize,
        #[arg(long, default_value_t = 12)]
        clusters: usize,
    },
    /// Filter, remap and split a raw interaction file into a data directory
    Prepare {
        input: PathBuf,
        #[arg(long, default_value = "tab", value_parser = parse_delimiter)]
        delimiter: Delimiter,
        #[arg(long, default_value_t = 0)]
        user_col: usize,
        #[arg(long, default_value_t = 1)]
        item_col: usize,
        /// Rating column; omit for implicit data
        #[arg(long)]
        rating_col: Option<usize>,
        #[arg(long)]
        skip_header: bool,
        /// Keep ratings at or above this value
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 10)]
        k_user: usize,
        #[arg(long, default_value_t = 10)]
        k_item: usize,
        #[arg(long, default_value_t = 0.1)]
        valid: f64,
        #[arg(long, default_value_t = 0.2)]
        test: f64,
    },
    /// Train one configuration
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Continue from the checkpoint in --out
        #[arg(long)]
        resume: bool,
    },
    /// Re-evaluate the best embeddings of a finished run
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the baseline and every contrast scheme
    Grid {
        #[arg(long)]
        data: PathBuf,
        /// Seeds to average over
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Vary one hyperparameter of the configured scheme
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// tau, alpha or lambda1
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Time training epochs of several variants
    Bench {
        #[arg(long)]
        data: PathBuf,
        /// Scheme tags or lightgcn:<layers>
        #[arg(long, value_delimiter = ',', default_value = "lightgcn:1,lightgcn:3,U0_I1")]
        variants: Vec<String>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Also train each variant to convergence
        #[arg(long)]
        full: bool,
    },
    /// Write embeddings of a finished run to --out
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "text")]
        format: ExportFormat,
        #[arg(long, default_value = "readout")]
        what: ExportWhat,
        /// Export only this many sampled users (text format)
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
    },
}

fn parse_delimiter(s: &str) -> Result<Delimiter, String> {
    match s {
        "tab" | "\t" => Ok(Delimiter::Tab),
        "comma" | "," => Ok(Delimiter::Comma),
        _ => Err(format!("unknown delimiter {s:?} (expected tab or comma)")),
    }
}

fn print_csv<S: serde::Serialize>(rows: &[S]) -> Result<()> {
    print!("{}", to_csv(rows)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = Global { config: cli.config, seed: cli.seed, workers: cli.workers, precision: cli.precision, out: cli.out };
    match cli.command {
        Command::Synth { users, items, interactions, clusters } => {
            let path = commands::synth(&g, &SynthArgs { users, items, interactions, clusters })?;
            println!("wrote {}", path.display());
        }
        Command::Prepare {
            input,
            delimiter,
            user_col,
            item_col,
            rating_col,
            skip_header,
            threshold,
            k_user,
            k_item,
            valid,
            test,
        } => {
            let args = PrepareArgs {
                input,
                delimiter,
                user_col,
                item_col,
                rating_col,
                skip_header,
                threshold,
                k_user,
                k_item,
                valid,
                test,
            };
            let p = commands::prepare(&g, &args)?;
            let m = &p.meta;
            println!(
                "{} users, {} items, {} interactions (train {}, valid {}, test {}), density {:.6}",
                m.num_users, m.num_items, m.interactions, m.train, m.valid, m.test, m.density
            );
        }
        Command::Train { data, resume } => {
            let s = commands::train(&g, &data, resume)?;
            eprintln!("{} epochs, best epoch {:?}", s.epochs, s.best_epoch);
            print_csv(&s.records)?;
        }
        Command::Eval { run, data } => print_csv(&commands::eval(&g, &run, &data)?)?,
        Command::Grid { data, seeds } => print_csv(&commands::grid(&g, &data, &seeds)?.rows)?,
        Command::Sweep { data, param, values } => print_csv(&commands::sweep(&g, &data, &param, &values)?.rows)?,
        Command::Bench { data, variants, repetitions, full } => {
            print_csv(&commands::bench(&g, &data, &variants, repetitions, full)?)?
        }
        Command::Export { run, data, format, what, sample, sample_seed } => {
            let path = commands::export(&g, &run, &data, &ExportArgs { format, what, sample, sample_seed })?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
