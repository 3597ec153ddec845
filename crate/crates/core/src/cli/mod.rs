mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;

/// Why a command did not succeed, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, missing or unreadable inputs: exit 2.
    Usage(String),
    /// A check or computation failed: exit 1.
    Check(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn check(msg: impl Into<String>) -> Self {
        Failure::Check(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Check(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Check(m) => m,
        }
    }
}

impl From<tp_transformer::Error> for Failure {
    fn from(e: tp_transformer::Error) -> Self {
        use tp_transformer::Error;
        match e {
            Error::Io { .. } | Error::Config(_) | Error::Parse { .. } | Error::Format(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Check(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tpt", version, about = "TP-Transformer toy experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a toy dataset file.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus metrics.
    Train(TrainArgs),
    /// Exact-match accuracy of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Greedy answer to one question.
    Decode(DecodeArgs),
    /// Analyses of trained models and of the binding mechanism.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Finite-difference gradient check of the full model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// add_sub, multiply, compare or nested_fraction.
    #[arg(long)]
    pub module: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Never emit a question that occurs in this dataset file.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Output directory for the checkpoint, metrics and resolved config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub role_binding: Option<bool>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub question: String,
    #[arg(long, default_value_t = 32)]
    pub max_steps: usize,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Layer to inspect; defaults to the last encoder layer.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub head: usize,
    /// Number of samples to trace.
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Cluster the role vectors of one head with k-means.
    Roles {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export attention maps of one head, annotated with role clusters.
    Attention {
        #[command(flatten)]
        trace: TraceArgs,
        /// Clusters for the annotation; 0 disables it.
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct encoder states from each head's value vectors.
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Swapped-pairing collisions with and without role binding.
    Binding {
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hadamard product versus the diagonal of the tensor product.
    Appendix {
        #[arg(long, default_value_t = 64)]
        d_model: usize,
        #[arg(long, default_value_t = 16)]
        d_head: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Use the tiny configuration (the only one supported).
    #[arg(long)]
    pub tiny: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check the model without role binding.
    #[arg(long)]
    pub no_role_binding: bool,
}
