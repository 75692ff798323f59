use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "curate", version, about = "Score, select and combine image-text embedding pools")]
pub struct Cli {
    /// Worker threads (default: hardware count). Never changes any output byte.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-sample scores for a pool.
    Score(ScoreArgs),
    /// Pick indices from a score file.
    Select(SelectArgs),
    /// Intersect two selections or concatenate them with oversampling.
    Combine(CombineArgs),
    /// Greedy target-free selection on a vision pool.
    Dynamic(DynamicArgs),
    /// Run a synthetic linear-model experiment.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Clipscore,
    Negcliploss,
    Vas,
    Normsim,
    Nnrank,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Clipscore => "clipscore",
            Metric::Negcliploss => "negcliploss",
            Metric::Vas => "vas",
            Metric::Normsim => "normsim",
            Metric::Nnrank => "nnrank",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VasModality {
    /// Image rows on both sides, image target covariance.
    Vision,
    /// Image x text, with the image-text target cross-covariance.
    Cross,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Image embeddings (EMB1, or CSV by extension).
    #[arg(long)]
    pub image: PathBuf,
    /// Text embeddings; required by clipscore, negcliploss and cross VAS.
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Target image embeddings; repeat to concatenate files row-wise.
    #[arg(long, num_args = 1..)]
    pub target: Vec<PathBuf>,
    /// Target text embeddings for cross VAS, aligned with --target.
    #[arg(long = "target-text", num_args = 1..)]
    pub target_text: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = VasModality::Vision)]
    pub modality: VasModality,
    /// NormSim order: 2, inf, or any real >= 1.
    #[arg(long, default_value = "inf")]
    pub p: String,
    /// Take |dot| instead of the signed dot for p = inf.
    #[arg(long = "abs-inf")]
    pub abs_inf: bool,
    #[arg(long, default_value_t = curate::quality::DEFAULT_TEMPERATURE)]
    pub tau: f64,
    #[arg(long = "batch-size", default_value_t = curate::quality::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = curate::quality::DEFAULT_ROUNDS)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// L2-normalize every input row after loading.
    #[arg(long)]
    pub normalize: bool,
    /// Output score file; a `.scr1` extension writes the binary format.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeepArg {
    Ge,
    Le,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["top_frac", "top_n", "threshold"]))]
pub struct SelectArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long = "top-frac")]
    pub top_frac: Option<f64>,
    #[arg(long = "top-n")]
    pub top_n: Option<usize>,
    #[arg(long, requires = "keep", allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub keep: Option<KeepArg>,
    /// Restrict the choice to an earlier selection of the same pool.
    #[arg(long)]
    pub within: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CombineOp {
    Intersect,
    Union,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    #[arg(long, value_enum)]
    pub op: CombineOp,
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DynamicArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long = "target-n")]
    pub target_n: usize,
    #[arg(long, default_value_t = curate::dynamic::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Lemma1,
    Eym,
    Testloss,
    TheoremMain,
    NoiseDecomp,
}

/// Overrides for experiment parameters; each applies only to the experiments
/// that have it.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "subset-size")]
    pub subset_size: Option<usize>,
    #[arg(long)]
    pub subsets: Option<usize>,
    #[arg(long = "test-n")]
    pub test_n: Option<usize>,
    #[arg(long = "max-tilt")]
    pub max_tilt: Option<f64>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub competitors: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated test-set sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub select: Option<usize>,
    #[arg(long = "teacher-noise-l")]
    pub teacher_noise_l: Option<f64>,
    #[arg(long = "noise-l")]
    pub noise_l: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}
