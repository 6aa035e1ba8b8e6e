//! Command-line front end: scoring, lattice dumps, decoding, rescoring, toy
//! LM training, segmentation and benchmarks.

pub mod bench;
pub mod config;
pub mod error;
pub mod io;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use lattice_fusion::decoder::{
    decode_frame_sync, decode_label_sync, parse_token_table, rescore_nbest, synthetic_frame_matrix,
    synthetic_label_matrix, FrameOracle, FusionConfig, MatrixLabelOracle, NBestEntry,
    PosteriorMatrix, BLANK_SYMBOL, END_SYMBOL,
};
use lattice_fusion::lattice::{segment_longest_match, SegmentationLattice, Vocabulary};
use lattice_fusion::ngram::{parse_arpa_str, train_toy_lm, write_arpa, Smoothing};
use lattice_fusion::scorer::{CharLmScorer, FusionLm, NoLm, WordLatticeScorer};
use lattice_fusion::wfsa::write_text;
use lattice_fusion::NGramModel;
use rayon::prelude::*;

pub use config::{Command, RunConfig};
pub use error::CliError;

/// Largest allowed gap between batch and incremental scores.
pub const SCORE_AGREEMENT: f64 = 1e-9;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers as usize)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let (out, path) = match &cfg.command {
        Command::Score(a) => (pool.install(|| cmd_score(a))?, a.output.as_deref()),
        Command::LatticeDump(a) => (cmd_lattice_dump(a)?, a.output.as_deref()),
        Command::Decode(a) => (pool.install(|| cmd_decode(a))?, a.output.as_deref()),
        Command::Rescore(a) => (pool.install(|| cmd_rescore(a))?, a.output.as_deref()),
        Command::TrainLm(a) => (cmd_train_lm(a)?, a.output.as_deref()),
        Command::Segment(a) => (cmd_segment(a)?, a.output.as_deref()),
        Command::Bench(a) => (bench::cmd_bench(a)?, a.output.as_deref()),
        Command::Synth(a) => (cmd_synth(a)?, a.output.as_deref()),
    };
    io::write_output(path, &out)
}

pub fn load_model(path: &Path) -> Result<NGramModel, CliError> {
    let text = io::read_text(path)?;
    let model = parse_arpa_str(&text).map_err(|e| CliError::parse(path.display().to_string(), e))?;
    log::info!("{}: order {}, {} n-grams", path.display(), model.order(), model.num_entries());
    Ok(model)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    let text = io::read_text(path)?;
    Vocabulary::parse(&text).map_err(|e| CliError::from_lattice(path.display().to_string(), e))
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Other(format!("{flag} is required")))
}

pub fn load_word_scorer(args: &config::LmArgs) -> Result<WordLatticeScorer, CliError> {
    let model = load_model(required(&args.lm, "--lm")?)?;
    let vocab = load_vocab(required(&args.vocab, "--vocab")?)?;
    WordLatticeScorer::new(Arc::new(model), Arc::new(vocab), args.scorer_config())
        .map_err(|e| CliError::from_score("scorer", e))
}

pub fn load_char_scorer(args: &config::LmArgs) -> Result<CharLmScorer, CliError> {
    let model = load_model(required(&args.lm, "--lm")?)?;
    let c = args.scorer_config();
    CharLmScorer::new(Arc::new(model), c.bos, c.eos, c.oov)
        .map_err(|e| CliError::from_score("scorer", e))
}

fn fmt_score(v: f64) -> String {
    format!("{v:.6}")
}

/// One report line: `line<TAB>batch<TAB>incremental<TAB>posteriors`.
pub fn score_line(scorer: &WordLatticeScorer, line_no: usize, text: &str) -> Result<String, CliError> {
    let context = format!("line {line_no}");
    let chars: Vec<char> = text.chars().collect();
    SegmentationLattice::build(&chars, scorer.vocab().clone())
        .map_err(|e| CliError::from_lattice(&context, e))?;
    let batch = scorer
        .score_sequence(&chars)
        .map_err(|e| CliError::from_score(&context, e))?;
    let (state, posteriors) = scorer.score_incremental(&chars);
    let incremental = scorer.finalize(&state);
    let agree = (batch == incremental) || (batch - incremental).abs() <= SCORE_AGREEMENT;
    if !agree {
        return Err(CliError::Other(format!(
            "{context}: batch {batch} and incremental {incremental} disagree"
        )));
    }
    let posts: Vec<String> = posteriors.iter().map(|p| p.to_string()).collect();
    Ok(format!("{line_no}\t{batch}\t{incremental}\t{}\n", posts.join(" ")))
}

/// Scores every non-blank line; blank lines are skipped.
pub fn cmd_score(args: &config::ScoreArgs) -> Result<String, CliError> {
    let scorer = load_word_scorer(&args.lm)?;
    let text = io::read_text(&args.input)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let results: Vec<Result<String, CliError>> = lines
        .par_iter()
        .map(|&(n, l)| score_line(&scorer, n, l))
        .collect();
    results.into_iter().collect::<Result<Vec<_>, _>>().map(|v| v.concat())
}

pub fn cmd_lattice_dump(args: &config::DumpArgs) -> Result<String, CliError> {
    let vocab = Arc::new(load_vocab(&args.vocab)?);
    let text = match (&args.text, &args.input) {
        (Some(t), _) => t.trim().to_owned(),
        (None, Some(p)) => io::read_text(p)?
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or_default()
            .to_owned(),
        (None, None) => return Err(CliError::Other("--text or --input is required".into())),
    };
    let lattice = SegmentationLattice::build_str(&text, vocab.clone())
        .map_err(|e| CliError::from_lattice("input", e))?;
    Ok(write_text(lattice.fsa(), vocab.symbols()))
}

fn utt_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn decode_one<L: FusionLm>(
    lm: &L,
    mode: config::DecodeMode,
    table: &[String],
    matrix: PosteriorMatrix,
    cfg: &FusionConfig,
) -> Result<Vec<(Vec<String>, f64)>, lattice_fusion::decoder::DecodeError> {
    let hyps = match mode {
        config::DecodeMode::Label => {
            let oracle = MatrixLabelOracle::new(table.to_vec(), matrix)?;
            decode_label_sync(&oracle, lm, cfg)?
                .into_iter()
                .map(|h| (h.text(table), h.delta))
                .collect()
        }
        config::DecodeMode::Frame => {
            let oracle = FrameOracle::new(table.to_vec(), matrix)?;
            decode_frame_sync(&oracle, lm, cfg)?
                .into_iter()
                .map(|h| (h.text(table), h.delta))
                .collect()
        }
    };
    Ok(hyps)
}

fn decode_all<L: FusionLm>(
    lm: &L,
    args: &config::DecodeArgs,
    table: &[String],
    matrices: Vec<(String, PosteriorMatrix)>,
) -> Result<String, CliError> {
    let cfg = args.fusion.fusion_config(args.lm.semiring.into());
    let nbest = args.nbest.unwrap_or(cfg.beam);
    let results: Vec<Result<String, CliError>> = matrices
        .into_par_iter()
        .map(|(id, m)| {
            let hyps = decode_one(lm, args.mode, table, m, &cfg)
                .map_err(|e| CliError::from_decode(&id, e))?;
            let mut out = String::new();
            for (rank, (tokens, delta)) in hyps.iter().take(nbest).enumerate() {
                writeln!(out, "{id}\t{}\t{}\t{}", rank + 1, fmt_score(*delta), tokens.join(" ")).unwrap();
            }
            Ok(out)
        })
        .collect();
    results.into_iter().collect::<Result<Vec<_>, _>>().map(|v| v.concat())
}

/// N-best TSV: `utt_id<TAB>rank<TAB>delta<TAB>tokens`.
pub fn cmd_decode(args: &config::DecodeArgs) -> Result<String, CliError> {
    let table = parse_token_table(&io::read_text(&args.tokens)?)
        .map_err(|e| CliError::from_decode(args.tokens.display().to_string(), e))?;
    let matrices = args
        .scores
        .iter()
        .map(|p| {
            let m = PosteriorMatrix::parse(&io::read_text(p)?)
                .map_err(|e| CliError::from_decode(p.display().to_string(), e))?;
            if m.cols() != table.len() {
                return Err(CliError::Dimension {
                    context: p.display().to_string(),
                    message: format!("{} columns but {} tokens", m.cols(), table.len()),
                });
            }
            Ok((utt_id(p), m))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match args.lm_kind {
        config::LmKind::Word => decode_all(&load_word_scorer(&args.lm)?, args, &table, matrices),
        config::LmKind::Char => decode_all(&load_char_scorer(&args.lm)?, args, &table, matrices),
        config::LmKind::None => decode_all(&NoLm, args, &table, matrices),
    }
}

/// Groups `utt_id<TAB>rank<TAB>acoustic<TAB>tokens` lines by utterance in
/// order of first appearance; each group is ordered by its rank column.
pub fn parse_nbest(text: &str) -> Result<Vec<(String, Vec<NBestEntry>)>, CliError> {
    if text.starts_with('\u{feff}') {
        return Err(CliError::parse("n-best", "byte-order mark is not accepted"));
    }
    let mut groups: Vec<(String, Vec<(usize, NBestEntry)>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let context = format!("n-best line {}", i + 1);
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let [id, rank, acoustic, tokens] = fields[..] else {
            return Err(CliError::parse(context, "expected 4 tab-separated fields"));
        };
        let rank: usize = rank
            .trim()
            .parse()
            .map_err(|_| CliError::parse(&context, format!("bad rank `{rank}`")))?;
        let acoustic: f64 = acoustic
            .trim()
            .parse()
            .map_err(|_| CliError::parse(&context, format!("bad score `{acoustic}`")))?;
        if acoustic.is_nan() {
            return Err(CliError::parse(context, "score is NaN"));
        }
        let entry = NBestEntry {
            tokens: tokens.split_whitespace().map(str::to_owned).collect(),
            acoustic,
        };
        match groups.iter_mut().find(|(g, _)| g == id) {
            Some((_, v)) => v.push((rank, entry)),
            None => groups.push((id.to_owned(), vec![(rank, entry)])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(id, mut v)| {
            v.sort_by_key(|(r, _)| *r);
            (id, v.into_iter().map(|(_, e)| e).collect())
        })
        .collect())
}

fn rescore_all<L: FusionLm>(
    lm: &L,
    lm_weight: f64,
    groups: &[(String, Vec<NBestEntry>)],
) -> Result<String, CliError> {
    let results: Vec<Result<String, CliError>> = groups
        .par_iter()
        .map(|(id, entries)| {
            let ranked = rescore_nbest(entries, lm, lm_weight).map_err(|e| CliError::from_decode(id, e))?;
            let mut out = String::new();
            for (rank, r) in ranked.iter().enumerate() {
                writeln!(out, "{id}\t{}\t{}\t{}", rank + 1, fmt_score(r.score), r.tokens.join(" ")).unwrap();
            }
            Ok(out)
        })
        .collect();
    results.into_iter().collect::<Result<Vec<_>, _>>().map(|v| v.concat())
}

/// Reranked TSV: `utt_id<TAB>rank<TAB>score<TAB>tokens`.
pub fn cmd_rescore(args: &config::RescoreArgs) -> Result<String, CliError> {
    let groups = parse_nbest(&io::read_text(&args.nbest)?)?;
    match args.lm_kind {
        config::LmKind::Word => rescore_all(&load_word_scorer(&args.lm)?, args.lm_weight, &groups),
        config::LmKind::Char => rescore_all(&load_char_scorer(&args.lm)?, args.lm_weight, &groups),
        config::LmKind::None => rescore_all(&NoLm, args.lm_weight, &groups),
    }
}

pub fn cmd_train_lm(args: &config::TrainArgs) -> Result<String, CliError> {
    let mut corpus = io::read_text(&args.corpus)?;
    if args.chars {
        corpus = corpus
            .lines()
            .map(|l| {
                let chars: Vec<String> = l.chars().filter(|c| !c.is_whitespace()).map(String::from).collect();
                chars.join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n");
    }
    let smoothing = match args.smoothing {
        config::SmoothingArg::WittenBell => Smoothing::WittenBell,
        config::SmoothingArg::AddK => Smoothing::AddK(args.k),
    };
    let model = train_toy_lm(&corpus, args.order, smoothing)?;
    let mut out = Vec::new();
    write_arpa(&model, &mut out).map_err(|e| CliError::io("<arpa>", e))?;
    String::from_utf8(out).map_err(|e| CliError::Other(e.to_string()))
}

/// Space-joined longest-match words per line; blank lines stay blank.
pub fn cmd_segment(args: &config::SegmentArgs) -> Result<String, CliError> {
    let vocab = load_vocab(&args.vocab)?;
    let mut out = String::new();
    for (i, line) in io::read_text(&args.input)?.lines().enumerate() {
        let words = segment_longest_match(line.trim(), &vocab)
            .map_err(|e| CliError::from_lattice(format!("line {}", i + 1), e))?;
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_synth(args: &config::SynthArgs) -> Result<String, CliError> {
    let table = parse_token_table(&io::read_text(&args.tokens)?)
        .map_err(|e| CliError::from_decode(args.tokens.display().to_string(), e))?;
    let last = match args.mode {
        config::DecodeMode::Label => END_SYMBOL,
        config::DecodeMode::Frame => BLANK_SYMBOL,
    };
    if table.last().map(String::as_str) != Some(last) {
        return Err(CliError::parse("token table", format!("last token must be `{last}`")));
    }
    let n = table.len() - 1;
    let reference = args
        .reference
        .split_whitespace()
        .map(|t| {
            table[..n]
                .iter()
                .position(|x| x == t)
                .ok_or_else(|| CliError::parse("reference", format!("token `{t}` is not in the table")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let m = match args.mode {
        config::DecodeMode::Label => synthetic_label_matrix(&reference, n, args.peak, args.noise, args.seed),
        config::DecodeMode::Frame => {
            if args.frames_per_token == 0 {
                return Err(CliError::Other("--frames-per-token must be positive".into()));
            }
            synthetic_frame_matrix(&reference, n, args.frames_per_token, args.peak, args.noise, args.seed)
        }
    };
    Ok(m.write())
}
