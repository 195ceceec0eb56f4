use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const ALPHA_NOTE: &str = "\
Confidence level: --alpha is the one-sided Clopper-Pearson level of the lower \
bound on attack success (default 0.005). At k = 2 and T = 10000 this puts the \
all-success ceiling at 7.5427, the commonly reported \"about 7.54\" reference \
value for the efficient estimator.";

const AUDIT_DEFAULTS: &str = "\
Defaults: --k 2, --trials 10000, --lambda -10000 (diverse candidate sets), \
--alpha 0.005, --delta 0 (delta-mech for gaussian noise), --attack embedding, \
--seed 42, --estimator efficient, --g <corpus size>, --clip 1, --noise laplace, \
--embedding-dim 64, --workers <available parallelism>, --out ldp-audit-out.

Every flag except --config can also be set in the TOML file given by --config, \
using the flag name as key (for example `trials = 20000` or \
`epsilons = [0.5, 1.0]`). Flags on the command line take precedence.";

#[derive(Debug, Parser)]
#[command(name = "ldp-audit", version, about = "Empirical privacy auditing for local-DP text mechanisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one audit and report the empirical privacy loss.
    #[command(allow_negative_numbers = true, after_long_help = format!("{AUDIT_DEFAULTS}\n\n{ALPHA_NOTE}"))]
    Audit(RunFlags),
    /// Audit the same configuration at several nominal epsilons.
    #[command(allow_negative_numbers = true, after_long_help = format!("{AUDIT_DEFAULTS}\n\n{ALPHA_NOTE}"))]
    Sweep(RunFlags),
    /// Print the largest eps_emp attainable when every trial succeeds.
    #[command(after_long_help = ALPHA_NOTE)]
    Ceiling(CeilingFlags),
    /// Tabulate the signal-to-noise ratio of clipped vector noise.
    Snr(SnrFlags),
    /// Convert a per-token budget to a sentence-level one by basic composition.
    Convert(ConvertFlags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MechanismKind {
    Grr,
    TokenEm,
    VectorNoise,
    Identity,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum AttackKind {
    Embedding,
    Surface,
    Judge,
    Internal,
    ValueMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum EstimatorKind {
    Efficient,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum FormatKind {
    Jsonl,
    PlainText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Laplace,
    Gaussian,
}

/// Flags shared by `audit` and `sweep`. Every field is optional so that values
/// from a config file can fill the gaps.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunFlags {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Mechanism to audit.
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismKind>,
    /// Nominal privacy budget (per token for token_em).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Corpus file, one record per line.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Corpus format [default: jsonl for .jsonl/.json files, else plain_text].
    #[arg(long, value_enum)]
    pub format: Option<FormatKind>,
    /// Embedding table (binary, or CSV with a .csv extension). Without it,
    /// seeded random unit vectors are used.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Dimension of generated embeddings when --embeddings is absent [default: 64].
    #[arg(long)]
    pub embedding_dim: Option<usize>,

    /// Candidate set size [default: 2].
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of trials T [default: 10000].
    #[arg(long)]
    pub trials: Option<u64>,
    /// Sampling temperature; negative favors diverse sets, 0 is uniform [default: -10000].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// One-sided confidence level [default: 0.005].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Slack delta in the estimator [default: 0, or --delta-mech for gaussian noise].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Attribution attack [default: embedding].
    #[arg(long, value_enum)]
    pub attack: Option<AttackKind>,
    /// Base seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Estimator [default: efficient]. `symmetric` requires k = 2.
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,

    /// GRR domain size; must be at least the corpus size [default: corpus size].
    #[arg(long)]
    pub g: Option<u64>,
    /// Clip radius of sentence embeddings for vector_noise [default: 1].
    #[arg(long)]
    pub clip: Option<f64>,
    /// Noise family for vector_noise [default: laplace].
    #[arg(long, value_enum)]
    pub noise: Option<NoiseKind>,
    /// Delta of the gaussian noise family [default: 1e-5].
    #[arg(long)]
    pub delta_mech: Option<f64>,
    /// Sensitivity used to calibrate token_em [default: 2].
    #[arg(long)]
    pub sensitivity: Option<f64>,
    /// Restrict token_em replacements to this many nearest tokens [default: full vocabulary].
    #[arg(long)]
    pub pool_size: Option<usize>,

    /// Base URL of a chat-completions API for --attack judge.
    #[arg(long)]
    pub judge_url: Option<String>,
    /// Model name sent to the judge.
    #[arg(long)]
    pub judge_model: Option<String>,
    /// Environment variable holding the judge API key [default: JUDGE_API_KEY].
    #[arg(long)]
    pub judge_key_env: Option<String>,
    /// Per-request timeout in seconds [default: 60].
    #[arg(long)]
    pub judge_timeout: Option<f64>,
    /// Retries per request [default: 3].
    #[arg(long)]
    pub judge_retries: Option<u32>,
    /// Maximum concurrent judge requests [default: 8].
    #[arg(long)]
    pub judge_max_in_flight: Option<usize>,
    /// Trials allowed to fail before the audit aborts [default: 0, or 0.5% of T with --attack judge].
    #[arg(long)]
    pub failure_budget: Option<u64>,

    /// Worker threads [default: available parallelism].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory [default: ldp-audit-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every trial outcome to trials.jsonl.
    #[arg(long)]
    #[serde(default)]
    pub trial_log: bool,

    /// Comma-separated nominal epsilons (sweep only).
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Add an eps_sentence column: epsilon times --mean-tokens (sweep only).
    #[arg(long)]
    #[serde(default)]
    pub convert_sentence: bool,
    /// Tokens per sentence for --convert-sentence [default: corpus mean].
    #[arg(long)]
    pub mean_tokens: Option<f64>,
}

impl RunFlags {
    /// Fills every unset field from `file`.
    pub fn or(self, file: RunFlags) -> RunFlags {
        RunFlags {
            config: self.config,
            mechanism: self.mechanism.or(file.mechanism),
            epsilon: self.epsilon.or(file.epsilon),
            dataset: self.dataset.or(file.dataset),
            format: self.format.or(file.format),
            embeddings: self.embeddings.or(file.embeddings),
            embedding_dim: self.embedding_dim.or(file.embedding_dim),
            k: self.k.or(file.k),
            trials: self.trials.or(file.trials),
            lambda: self.lambda.or(file.lambda),
            alpha: self.alpha.or(file.alpha),
            delta: self.delta.or(file.delta),
            attack: self.attack.or(file.attack),
            seed: self.seed.or(file.seed),
            estimator: self.estimator.or(file.estimator),
            g: self.g.or(file.g),
            clip: self.clip.or(file.clip),
            noise: self.noise.or(file.noise),
            delta_mech: self.delta_mech.or(file.delta_mech),
            sensitivity: self.sensitivity.or(file.sensitivity),
            pool_size: self.pool_size.or(file.pool_size),
            judge_url: self.judge_url.or(file.judge_url),
            judge_model: self.judge_model.or(file.judge_model),
            judge_key_env: self.judge_key_env.or(file.judge_key_env),
            judge_timeout: self.judge_timeout.or(file.judge_timeout),
            judge_retries: self.judge_retries.or(file.judge_retries),
            judge_max_in_flight: self.judge_max_in_flight.or(file.judge_max_in_flight),
            failure_budget: self.failure_budget.or(file.failure_budget),
            workers: self.workers.or(file.workers),
            out: self.out.or(file.out),
            trial_log: self.trial_log || file.trial_log,
            epsilons: self.epsilons.or(file.epsilons),
            convert_sentence: self.convert_sentence || file.convert_sentence,
            mean_tokens: self.mean_tokens.or(file.mean_tokens),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CeilingFlags {
    /// Candidate set size.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Number of trials T.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// One-sided confidence level.
    #[arg(long, default_value_t = 0.005)]
    pub alpha: f64,
    /// Slack delta.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SnrFlags {
    /// Clip radius C.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Comma-separated epsilons.
    #[arg(long, value_delimiter = ',', required = true)]
    pub epsilons: Vec<f64>,
    /// Noise family.
    #[arg(long, value_enum, default_value_t = NoiseKind::Laplace)]
    pub noise: NoiseKind,
    /// Embedding dimension.
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    /// Delta of the gaussian family.
    #[arg(long, default_value_t = 1e-5)]
    pub delta_mech: f64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertFlags {
    /// Per-token epsilon.
    #[arg(long)]
    pub epsilon_token: f64,
    /// Tokens per sentence.
    #[arg(long)]
    pub mean_tokens: f64,
}
