//! Throughput, decode latency and length scaling of incremental scoring.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lattice_fusion::decoder::{decode_frame_sync, synthetic_frame_matrix, FrameOracle, FusionConfig, BLANK_SYMBOL};
use lattice_fusion::lattice::Vocabulary;
use lattice_fusion::ngram::{train_toy_lm, Smoothing};
use lattice_fusion::scorer::{ScorerConfig, WordLatticeScorer};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::BenchArgs;
use crate::error::CliError;
use crate::{io, load_word_scorer};

const ALPHABET_SIZE: u32 = 40;
const MULTI_CHAR_WORDS: usize = 200;
const TRAIN_SENTENCES: usize = 400;
const CORPUS_LINES: usize = 200;
const SEQUENCES_PER_LENGTH: usize = 20;
const LATENCY_UTTERANCES: usize = 20;
const LATENCY_CHARS: usize = 12;

/// Seeded vocabulary over CJK ideographs: every single character plus random
/// 2-4 character words.
pub fn synthetic_words(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet: Vec<char> = (0..ALPHABET_SIZE).map(|i| char::from_u32(0x4E00 + i).unwrap()).collect();
    let mut words: Vec<String> = alphabet.iter().map(|c| c.to_string()).collect();
    while words.len() < alphabet.len() + MULTI_CHAR_WORDS {
        let len = rng.gen_range(2..=4);
        let w: String = (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

/// Vocabulary and a Witten-Bell 3-gram trained on random word sentences.
pub fn synthetic_setup(seed: u64) -> Result<WordLatticeScorer, CliError> {
    let words = synthetic_words(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let corpus: Vec<String> = (0..TRAIN_SENTENCES)
        .map(|_| {
            let n = rng.gen_range(3..=12);
            let s: Vec<&str> = (0..n).map(|_| words.choose(&mut rng).unwrap().as_str()).collect();
            s.join(" ")
        })
        .collect();
    let model = train_toy_lm(&corpus.join("\n"), 3, Smoothing::WittenBell)?;
    let vocab = Vocabulary::new(&words).map_err(|e| CliError::from_lattice("vocabulary", e))?;
    WordLatticeScorer::new(Arc::new(model), Arc::new(vocab), ScorerConfig::default())
        .map_err(|e| CliError::from_score("scorer", e))
}

/// A random concatenation of vocabulary words cut to exactly `len` chars.
pub fn random_text(vocab: &Vocabulary, len: usize, rng: &mut ChaCha8Rng) -> Vec<char> {
    let words: Vec<&str> = vocab.words().map(|(_, w)| w).collect();
    let mut out = Vec::with_capacity(len + 4);
    while out.len() < len {
        out.extend(words.choose(rng).unwrap().chars());
    }
    out.truncate(len);
    out
}

pub fn score_all(scorer: &WordLatticeScorer, texts: &[Vec<char>]) -> f64 {
    let mut total = 0.0;
    for t in texts {
        let mut state = scorer.init_state();
        for &c in t {
            state = scorer.advance(&state, c).0;
        }
        total += state.score();
    }
    total
}

/// Minimum over `reps` of the time to score `SEQUENCES_PER_LENGTH` seeded
/// texts of each length incrementally.
pub fn measure_scaling(
    scorer: &WordLatticeScorer,
    lengths: &[usize],
    reps: usize,
    seed: u64,
) -> Vec<(usize, Duration)> {
    lengths
        .iter()
        .map(|&len| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(len as u64));
            let texts: Vec<Vec<char>> = (0..SEQUENCES_PER_LENGTH)
                .map(|_| random_text(scorer.vocab(), len, &mut rng))
                .collect();
            let best = (0..reps.max(1))
                .map(|_| {
                    let start = Instant::now();
                    std::hint::black_box(score_all(scorer, &texts));
                    start.elapsed()
                })
                .min()
                .unwrap();
            (len, best)
        })
        .collect()
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn decode_latencies(scorer: &WordLatticeScorer, lines: &[Vec<char>], seed: u64) -> Vec<Duration> {
    let utterances: Vec<&[char]> = lines
        .iter()
        .filter(|l| !l.is_empty())
        .take(LATENCY_UTTERANCES)
        .map(|l| &l[..l.len().min(LATENCY_CHARS)])
        .collect();
    let mut table: Vec<String> = utterances.iter().flat_map(|u| u.iter().map(|c| c.to_string())).collect();
    table.sort();
    table.dedup();
    table.push(BLANK_SYMBOL.to_owned());
    let n = table.len() - 1;
    let cfg = FusionConfig::default();
    utterances
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let reference: Vec<usize> = u
                .iter()
                .map(|c| table.iter().position(|t| t.chars().eq(std::iter::once(*c))).unwrap())
                .collect();
            let m = synthetic_frame_matrix(&reference, n, 2, 4.0, 1.0, seed.wrapping_add(i as u64));
            let oracle = FrameOracle::new(table.clone(), m).expect("table ends with blank");
            let start = Instant::now();
            let _ = std::hint::black_box(decode_frame_sync(&oracle, scorer, &cfg));
            start.elapsed()
        })
        .collect()
}

pub fn cmd_bench(args: &BenchArgs) -> Result<String, CliError> {
    let scorer = match (&args.lm.lm, &args.lm.vocab) {
        (None, None) => synthetic_setup(args.seed)?,
        _ => load_word_scorer(&args.lm)?,
    };
    let lines: Vec<Vec<char>> = match &args.input {
        Some(p) => io::read_text(p)?
            .lines()
            .map(|l| l.trim().chars().collect::<Vec<char>>())
            .filter(|l| !l.is_empty())
            .collect(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            (0..CORPUS_LINES)
                .map(|_| {
                    let len = rng.gen_range(10..=30);
                    random_text(scorer.vocab(), len, &mut rng)
                })
                .collect()
        }
    };
    if lines.is_empty() {
        return Ok(String::new());
    }
    let mut out = String::new();
    let processed: usize = lines.iter().map(Vec::len).sum();
    let start = Instant::now();
    std::hint::black_box(score_all(&scorer, &lines));
    let elapsed = start.elapsed().as_secs_f64();
    writeln!(out, "processed_chars\t{processed}").unwrap();
    writeln!(out, "chars_per_second\t{:.1}", processed as f64 / elapsed.max(1e-9)).unwrap();

    let mut lat = decode_latencies(&scorer, &lines, args.seed);
    lat.sort();
    if !lat.is_empty() {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        writeln!(
            out,
            "decode_latency_ms\tp50\t{:.3}\tp90\t{:.3}\tp99\t{:.3}",
            ms(percentile(&lat, 50.0)),
            ms(percentile(&lat, 90.0)),
            ms(percentile(&lat, 99.0))
        )
        .unwrap();
    }

    let scaling = measure_scaling(&scorer, &args.lengths, args.reps, args.seed);
    let mut prev: Option<Duration> = None;
    for (len, t) in scaling {
        let ratio = prev.map(|p| t.as_secs_f64() / p.as_secs_f64());
        match ratio {
            Some(r) => writeln!(out, "scaling\t{len}\t{:.6}\t{r:.3}", t.as_secs_f64()).unwrap(),
            None => writeln!(out, "scaling\t{len}\t{:.6}", t.as_secs_f64()).unwrap(),
        }
        prev = Some(t);
    }
    Ok(out)
}
