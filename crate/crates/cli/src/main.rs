//! Command-line pipeline: prep -> fit -> transform -> classify -> diagnose
//! -> bench over the documented file formats.

mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tmpca_core::Error;

#[derive(Parser)]
#[command(
    name = "tmpca",
    version,
    about = "Tree-structured multi-stage PCA for sequence-to-vector text features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare a labeled text dataset: tokenize, embed, normalize length,
    /// center, and write a binary prepared-dataset file.
    Prep {
        /// Dataset text file, one `label<TAB>text` sample per line.
        #[arg(long)]
        data: PathBuf,
        /// Embedding table text file.
        #[arg(long)]
        embeddings: PathBuf,
        /// Optional stopword list, one token per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Append adjacent-pair join tokens before embedding.
        #[arg(long)]
        bigram: bool,
        /// Target sequence length N.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Output path for the prepared dataset.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a TMPCA model on a dataset (labels are ignored).
    Fit {
        /// Dataset: text file or prepared binary.
        #[arg(long)]
        data: PathBuf,
        /// Embedding table (required for text input).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        bigram: bool,
        /// Target sequence length N (text input; prepared files carry their own).
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Fan-in P: adjacent elements merged per stage.
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Output path for the model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Transform a dataset through a trained model into labeled features.
    Transform {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        bigram: bool,
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        /// Output path for the feature file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the closed-form transform matrix of a fan-in-2 model as CSV.
    Expand {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the dense softmax classifier on a feature file.
    ClassifyTrain {
        /// Feature file produced by `transform`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a trained classifier on a feature file.
    ClassifyEval {
        #[arg(long)]
        data: PathBuf,
        /// Classifier parameter file.
        #[arg(long)]
        model: PathBuf,
        /// Optional metrics CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the diagnostics report (energy, mutual information, cost) for a
    /// model/dataset pair into a directory.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        bigram: bool,
        #[arg(long)]
        model: PathBuf,
        /// Assumed isotropic noise level for the mutual-information proxies.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time tree fitting against single-stage PCA on synthetic fixtures and
    /// write the timing tables into a directory.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_)
        | Error::UnsupportedConfiguration(_)
        | Error::InsufficientData(_) => 2,
        Error::Format(_) | Error::Validation(_) | Error::Io(_) => 3,
        Error::Convergence(_) | Error::DegenerateInput(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match pipeline::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
