//! The `hrcenternet` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (unknown flag),
//! 3 missing or corrupt input file, 4 unreadable config file.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{read_config, resolve, FileConfig, Overrides, Settings, DEFAULT_HOLDOUT};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hrcenternet", version, about = "Center-keypoint character detection for document pages")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Toy,
    #[value(name = "paper-w32")]
    PaperW32,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::PaperW32 => "paper-w32",
        }
    }
}

/// Flags every subcommand accepts.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with [train], [decode], [loss] and [synth] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeFlags {
    /// Minimum heatmap score for a detection.
    #[arg(long)]
    pub conf: Option<f64>,
    /// IoU above which lower-scored boxes are suppressed.
    #[arg(long)]
    pub nms_iou: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic pages with annotations.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        pages: usize,
        /// Square page side in pixels (overrides the config file).
        #[arg(long)]
        page_size: Option<u32>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Write target maps for every annotated page as tensor files.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Annotation file (JSON lines).
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Train a model on a dataset directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding annotations.jsonl and the page images.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        input_size: Option<usize>,
        #[command(flatten)]
        decode: DecodeFlags,
    },
    /// Detect characters on page images.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        #[command(flatten)]
        decode: DecodeFlags,
    },
    /// Score a model against an annotated dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate only the held-out tail of the dataset.
        #[arg(long)]
        holdout_only: bool,
        #[command(flatten)]
        decode: DecodeFlags,
    },
    /// Time inference end to end.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to time; without it a freshly initialized preset model is used.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input_size: Option<usize>,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[command(flatten)]
        decode: DecodeFlags,
    },
    /// Draw detections over a page.
    Viz {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        /// Detections file from `infer`; the record for `--image` is drawn.
        #[arg(long, conflicts_with = "model")]
        detections: Option<PathBuf>,
        /// Run this checkpoint on the image instead of reading detections.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeFlags,
    },
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Input(Error),
    Config(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "input error: {e}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Run(other),
        }
    }
}

/// Parses `argv` (program name first), runs the command, and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("hrcenternet: {e}");
            e.exit_code()
        }
    }
}
