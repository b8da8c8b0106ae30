use std::path::PathBuf;

use clap::{Args, ValueEnum};
use space_core::{DecodeConfig, Sampling, TokenId, Verification};

/// A token-id list given as one flag value. The alias keeps clap from treating
/// the field as a repeated argument.
pub type TokenList = Vec<TokenId>;

/// Parses `2,3,4` or `2 3 4`.
pub fn parse_tokens(s: &str) -> Result<TokenList, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<TokenId>().map_err(|e| format!("bad token id {t:?}: {e}")))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Ar,
    Space,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplingKind {
    Greedy,
    Stochastic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VerificationArg {
    LosslessResidual,
    PaperLiteral,
    GreedyMatch,
}

impl From<VerificationArg> for Verification {
    fn from(v: VerificationArg) -> Self {
        match v {
            VerificationArg::LosslessResidual => Verification::LosslessResidual,
            VerificationArg::PaperLiteral => Verification::PaperLiteral,
            VerificationArg::GreedyMatch => Verification::GreedyMatch,
        }
    }
}

/// Decoding overrides shared by generate, bench and sweep.
#[derive(Args, Debug, Clone, Default)]
pub struct DecodeFlags {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingKind>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    /// 0 disables top-k truncation.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, value_enum)]
    pub verification: Option<VerificationArg>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl DecodeFlags {
    /// Applies the flags over `base`. Without an explicit `--verification`,
    /// greedy sampling pairs with greedy-match and stochastic sampling keeps
    /// the configured rejection mode (lossless-residual if it was greedy-match).
    pub fn apply(&self, base: &DecodeConfig) -> DecodeConfig {
        let mut c = base.clone();
        if let Some(k) = self.k {
            c.k = k;
        }
        let (mut t, mut p, mut tk) = match base.sampling {
            Sampling::Stochastic {
                temperature,
                top_p,
                top_k,
            } => (temperature, top_p, top_k),
            Sampling::Greedy => {
                let Sampling::Stochastic {
                    temperature,
                    top_p,
                    top_k,
                } = Sampling::default()
                else {
                    unreachable!()
                };
                (temperature, top_p, top_k)
            }
        };
        t = self.temperature.unwrap_or(t);
        p = self.top_p.unwrap_or(p);
        tk = self.top_k.unwrap_or(tk);
        let greedy = match self.sampling {
            Some(SamplingKind::Greedy) => true,
            Some(SamplingKind::Stochastic) => false,
            None => base.sampling.is_greedy(),
        };
        c.sampling = if greedy {
            Sampling::Greedy
        } else {
            Sampling::Stochastic {
                temperature: t,
                top_p: p,
                top_k: tk,
            }
        };
        c.verification = match self.verification {
            Some(v) => v.into(),
            None if greedy => Verification::GreedyMatch,
            None if c.verification == Verification::GreedyMatch => Verification::LosslessResidual,
            None => c.verification,
        };
        if let Some(n) = self.max_new_tokens {
            c.max_new_tokens = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

/// SAR-SFT overrides shared by train and sweep.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    #[arg(long = "p-ar")]
    pub p_ar: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training seed (masking draws and shuffling).
    #[arg(long = "train-seed")]
    pub train_seed: Option<u64>,
    /// Model initialisation seed.
    #[arg(long)]
    pub model_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory for checkpoints and the loss curve.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Alias of --train-seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub model_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_parser = parse_tokens)]
    pub prompt_tokens: TokenList,
    #[arg(long, value_enum, default_value = "space")]
    pub mode: Mode,
    /// Per-step trace as JSON lines (space mode).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Checkpoint to test; a random model is built when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub vocab: usize,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 0.5)]
    pub init_std: f64,
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    #[arg(long, value_parser = parse_tokens, default_value = "2,3,4")]
    pub prompt_tokens: TokenList,
    #[arg(long, default_value_t = 2)]
    pub horizon: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// paper-literal runs as a diagnostic: the report is printed and the exit code is 0.
    #[arg(long, value_enum, default_value = "lossless-residual")]
    pub verification: VerificationArg,
    /// Skip the paper-literal estimate in lossless-residual mode.
    #[arg(long)]
    pub no_literal: bool,
    /// Report JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-sequence probabilities as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON lines: token arrays or corpus records.
    #[arg(long)]
    pub prompts_file: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub k_list: Vec<usize>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Prompts to decode; defaults to the first --num-prompts corpus prompts.
    #[arg(long)]
    pub prompts_file: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub num_prompts: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    RepeatPattern,
    Counting,
    TemplatedPhrases,
}

#[derive(Args, Debug)]
pub struct PrepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "repeat-pattern")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 200)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary size; defaults to the model config.
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub period: usize,
    #[arg(long, default_value_t = 8)]
    pub patterns: usize,
    #[arg(long, default_value_t = 16)]
    pub answer_len: usize,
    #[arg(long, default_value_t = 4)]
    pub prompt_len: usize,
    #[arg(long, default_value_t = 4)]
    pub templates: usize,
}

#[derive(Args, Debug)]
pub struct PreviewArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "p-ar")]
    pub p_ar: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of samples to show.
    #[arg(short, long, default_value_t = 5)]
    pub n: usize,
}

#[derive(Args, Debug)]
pub struct LayoutArgs {
    #[arg(long, default_value_t = 3)]
    pub prompt_len: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Also list cells where a position-distance reading of the mask rule disagrees.
    #[arg(long)]
    pub literal: bool,
}
