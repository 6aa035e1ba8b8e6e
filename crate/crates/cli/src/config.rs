use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lattice_fusion::decoder::FusionConfig;
use lattice_fusion::scorer::{CompositionMode, OovPolicy, ScorerConfig};
use lattice_fusion::wfsa::Semiring;

#[derive(Debug, Clone, Parser, PartialEq)]
#[command(name = "lattice-fusion", version, about = "Word-level N-gram fusion over segmentation lattices")]
pub struct RunConfig {
    /// Utterances processed in parallel. Output order never depends on it.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: u32,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, PartialEq)]
pub enum Command {
    /// Score each input line: batch score, incremental score, per-character posteriors.
    Score(ScoreArgs),
    /// Print the segmentation lattice of one sequence.
    LatticeDump(DumpArgs),
    /// Beam-search decode posterior matrices with shallow fusion.
    Decode(DecodeArgs),
    /// Rerank an N-best list with the LM.
    Rescore(RescoreArgs),
    /// Estimate a small backoff N-gram model from a segmented corpus.
    TrainLm(TrainArgs),
    /// Greedy longest-match segmentation of raw text.
    Segment(SegmentArgs),
    /// Throughput, latency and scaling report.
    Bench(BenchArgs),
    /// Write a seeded synthetic posterior matrix for a reference.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SemiringArg {
    Log,
    Tropical,
}

impl From<SemiringArg> for Semiring {
    fn from(s: SemiringArg) -> Self {
        match s {
            SemiringArg::Log => Semiring::Log,
            SemiringArg::Tropical => Semiring::Tropical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OovArg {
    /// Map unlisted words to `<unk>`.
    Unk,
    /// Fail on unlisted words.
    HardError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LmKind {
    /// Word N-gram over segmentation lattices.
    Word,
    /// Character N-gram.
    Char,
    /// No external LM.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeMode {
    /// Label-synchronous: one output token per step.
    Label,
    /// Frame-synchronous with a blank symbol.
    Frame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmoothingArg {
    WittenBell,
    AddK,
}

/// LM settings shared by every command that scores text.
#[derive(Debug, Clone, Args, PartialEq)]
pub struct LmArgs {
    /// ARPA language model.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Word vocabulary, one word per line.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Path aggregation over segmentations.
    #[arg(long, value_enum, default_value_t = SemiringArg::Log)]
    pub semiring: SemiringArg,
    /// Condition the first word on `<s>`.
    #[arg(long)]
    pub bos: bool,
    /// Add the `</s>` probability at the end of a sequence.
    #[arg(long)]
    pub eos: bool,
    /// Handling of vocabulary words the LM does not list.
    #[arg(long, value_enum, default_value_t = OovArg::Unk)]
    pub oov: OovArg,
    /// Compose with an LM acceptor carrying epsilon backoff arcs.
    #[arg(long)]
    pub explicit_backoff_fsa: bool,
    /// Drop frontier entries far below the best one in very wide maps.
    #[arg(long)]
    pub prune: bool,
}

impl LmArgs {
    pub fn scorer_config(&self) -> ScorerConfig {
        ScorerConfig {
            semiring: self.semiring.into(),
            bos: self.bos,
            eos: self.eos,
            oov: match self.oov {
                OovArg::Unk => OovPolicy::Unk,
                OovArg::HardError => OovPolicy::HardError,
            },
            mode: if self.explicit_backoff_fsa {
                CompositionMode::ExplicitBackoff
            } else {
                CompositionMode::Lazy
            },
            prune: self.prune,
        }
    }
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct FusionArgs {
    /// LM weight in the fused score.
    #[arg(long, default_value_t = 0.4)]
    pub lm_weight: f64,
    /// Hypotheses kept per step.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub beam: u32,
    /// Frame mode: most non-blank tokens per utterance (default: frame count).
    #[arg(long)]
    pub max_symbols: Option<usize>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub lm: LmArgs,
    /// Text to score, one character sequence per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct DumpArgs {
    /// Word vocabulary, one word per line.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Sequence to expand.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub text: Option<String>,
    /// File whose first non-empty line is the sequence.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub lm: LmArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Search strategy.
    #[arg(long, value_enum, default_value_t = DecodeMode::Label)]
    pub mode: DecodeMode,
    /// External LM used for fusion.
    #[arg(long, value_enum, default_value_t = LmKind::Word)]
    pub lm_kind: LmKind,
    /// Token table, one token per line. Ends with `</s>` in label mode and
    /// `<blank>` in frame mode.
    #[arg(long)]
    pub tokens: PathBuf,
    /// Score matrices (`T N` header, then T rows); the utterance id is the
    /// file stem.
    #[arg(long, required = true, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    /// Hypotheses printed per utterance (default: beam).
    #[arg(long)]
    pub nbest: Option<usize>,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct RescoreArgs {
    #[command(flatten)]
    pub lm: LmArgs,
    /// LM weight in the reranking score.
    #[arg(long, default_value_t = 0.4)]
    pub lm_weight: f64,
    /// LM used for reranking.
    #[arg(long, value_enum, default_value_t = LmKind::Word)]
    pub lm_kind: LmKind,
    /// N-best list: `utt_id<TAB>rank<TAB>acoustic<TAB>space-separated tokens`.
    #[arg(long)]
    pub nbest: PathBuf,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct TrainArgs {
    /// Whitespace-segmented sentences, one per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// N-gram order.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Estimator.
    #[arg(long, value_enum, default_value_t = SmoothingArg::WittenBell)]
    pub smoothing: SmoothingArg,
    /// Additive constant for `add-k`.
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Train on characters instead of words.
    #[arg(long)]
    pub chars: bool,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct SegmentArgs {
    /// Word vocabulary, one word per line.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Raw text, one sequence per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct BenchArgs {
    #[command(flatten)]
    pub lm: LmArgs,
    /// Text corpus, one sequence per line. Without it a seeded synthetic
    /// corpus, vocabulary and LM are generated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Seed of the synthetic corpus.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sequence lengths for the scaling report.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 400])]
    pub lengths: Vec<usize>,
    /// Timing repetitions; the minimum is reported.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct SynthArgs {
    /// Matrix layout to produce.
    #[arg(long, value_enum, default_value_t = DecodeMode::Label)]
    pub mode: DecodeMode,
    /// Token table; see `decode --tokens`.
    #[arg(long)]
    pub tokens: PathBuf,
    /// Space-separated reference tokens.
    #[arg(long)]
    pub reference: String,
    /// Noise seed.
    #[arg(long)]
    pub seed: u64,
    /// Frame mode: frames per reference token.
    #[arg(long, default_value_t = 2)]
    pub frames_per_token: usize,
    /// Logit bonus of the reference token.
    #[arg(long, default_value_t = 4.0)]
    pub peak: f64,
    /// Uniform logit noise amplitude.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl FusionArgs {
    pub fn fusion_config(&self, semiring: Semiring) -> FusionConfig {
        FusionConfig {
            lm_weight: self.lm_weight,
            beam: self.beam as usize,
            semiring,
            max_symbols: self.max_symbols,
        }
    }
}

/// Effective defaults of the scoring and decoding commands, one `key = value`
/// per line.
pub fn defaults_snapshot() -> String {
    let decode = RunConfig::try_parse_from([
        "lattice-fusion", "decode", "--tokens", "t", "--scores", "s",
    ])
    .expect("decode parses with required flags only");
    let train = RunConfig::try_parse_from(["lattice-fusion", "train-lm", "--corpus", "c"])
        .expect("train-lm parses with required flags only");
    let rescore = RunConfig::try_parse_from(["lattice-fusion", "rescore", "--nbest", "n"])
        .expect("rescore parses with required flags only");
    let (Command::Decode(d), Command::TrainLm(t), Command::Rescore(r)) =
        (&decode.command, &train.command, &rescore.command)
    else {
        unreachable!()
    };
    let fusion = d.fusion.fusion_config(d.lm.semiring.into());
    let scorer = d.lm.scorer_config();
    format!(
        "lm_weight = {}\nbeam = {}\nsemiring = {:?}\norder = {}\nsmoothing = {:?}\n\
         rescore_lm_weight = {}\nlm_kind = {:?}\nmode = {:?}\nbos = {}\neos = {}\n\
         oov = {:?}\ncomposition = {:?}\nprune = {}\nworkers = {}\n",
        fusion.lm_weight,
        fusion.beam,
        fusion.semiring,
        t.order,
        t.smoothing,
        r.lm_weight,
        d.lm_kind,
        d.mode,
        scorer.bos,
        scorer.eos,
        scorer.oov,
        scorer.mode,
        scorer.prune,
        decode.workers,
    )
}
