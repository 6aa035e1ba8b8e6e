//! Shallow-fusion beam search.
//!
//! Every expansion adds the acoustic score of the new token plus
//! `lm_weight` times the LM log-posterior of its characters. Label mode
//! expands one output token per step; frame mode consumes one frame per
//! step, where blank leaves the output and the LM untouched.
//! Hypotheses are ranked by accumulated score, ties going to the smaller
//! token-index sequence.

mod metrics;
mod oracle;

use std::cmp::Ordering;

use rustc_hash::FxHashMap;
use thiserror::Error;

pub use metrics::{edit_distance_cer, EditStats};
pub use oracle::{
    parse_token_table, synthetic_frame_matrix, synthetic_label_matrix, FrameOracle, LabelOracle,
    LabelScores, MatrixLabelOracle, PosteriorMatrix, TableLabelOracle, BLANK_SYMBOL, END_SYMBOL,
};

use crate::scorer::FusionLm;
use crate::wfsa::Semiring;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("no hypothesis survived the search")]
    NoHypothesis,
    #[error("nothing to rescore")]
    EmptyNBest,
    #[error("empty reference")]
    EmptyReference,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl DecodeError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        DecodeError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub lm_weight: f64,
    pub beam: usize,
    /// Combines frame-mode hypotheses with equal output.
    pub semiring: Semiring,
    /// Frame mode: most non-blank tokens per utterance (default: frames).
    pub max_symbols: Option<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            lm_weight: 0.4,
            beam: 10,
            semiring: Semiring::Log,
            max_symbols: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<S> {
    /// Token indices into the oracle's token table.
    pub tokens: Vec<usize>,
    pub delta: f64,
    pub lm_state: S,
    /// Frame mode: current frame.
    pub frame: usize,
}

impl<S> Hypothesis<S> {
    pub fn text(&self, table: &[String]) -> Vec<String> {
        self.tokens.iter().map(|&t| table[t].clone()).collect()
    }
}

/// One fused increment. A zero weight drops the LM term entirely, so an
/// impossible LM posterior cannot poison the score.
#[inline]
pub fn fuse(acoustic: f64, lm_weight: f64, lm: f64) -> f64 {
    if lm_weight == 0.0 {
        acoustic
    } else {
        acoustic + lm_weight * lm
    }
}

fn rank_order<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    b.delta
        .total_cmp(&a.delta)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn prune<S>(hyps: &mut Vec<Hypothesis<S>>, beam: usize) {
    hyps.sort_by(rank_order);
    hyps.truncate(beam);
}

/// Combines hypotheses with equal tokens and frame, first occurrence kept.
fn merge<S>(hyps: Vec<Hypothesis<S>>, semiring: Semiring) -> Vec<Hypothesis<S>> {
    let mut index: FxHashMap<(Vec<usize>, usize), usize> = FxHashMap::default();
    let mut out: Vec<Hypothesis<S>> = Vec::with_capacity(hyps.len());
    for h in hyps {
        match index.get(&(h.tokens.clone(), h.frame)) {
            Some(&i) => out[i].delta = semiring.plus(out[i].delta, h.delta),
            None => {
                index.insert((h.tokens.clone(), h.frame), out.len());
                out.push(h);
            }
        }
    }
    out
}

fn finish<L: FusionLm>(h: &Hypothesis<L::State>, extra: f64, lm: &L, cfg: &FusionConfig) -> f64 {
    let eos = if cfg.lm_weight == 0.0 {
        0.0
    } else {
        lm.eos_increment(&h.lm_state)
    };
    h.delta + fuse(extra, cfg.lm_weight, eos)
}

/// Label-synchronous beam search.
pub fn decode_label_sync<O, L>(
    oracle: &O,
    lm: &L,
    cfg: &FusionConfig,
) -> Result<Vec<Hypothesis<L::State>>, DecodeError>
where
    O: LabelOracle + ?Sized,
    L: FusionLm,
{
    let tokens = oracle.tokens();
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        delta: 0.0,
        lm_state: lm.init(),
        frame: 0,
    }];
    let mut finished = Vec::new();
    for _ in 0..=oracle.max_len() {
        let mut candidates = Vec::new();
        for h in &beam {
            let scores = oracle.scores(&h.tokens);
            if scores.end > f64::NEG_INFINITY {
                let delta = finish(h, scores.end, lm, cfg);
                if delta > f64::NEG_INFINITY {
                    finished.push(Hypothesis {
                        delta,
                        ..h.clone()
                    });
                }
            }
            for (k, &s) in scores.tokens.iter().enumerate() {
                if s == f64::NEG_INFINITY {
                    continue;
                }
                let (state, post) = lm.advance_token(&h.lm_state, &tokens[k]);
                let delta = h.delta + fuse(s, cfg.lm_weight, post);
                if delta == f64::NEG_INFINITY {
                    continue;
                }
                let mut t = h.tokens.clone();
                t.push(k);
                candidates.push(Hypothesis {
                    tokens: t,
                    delta,
                    lm_state: state,
                    frame: 0,
                });
            }
        }
        prune(&mut candidates, cfg.beam);
        beam = candidates;
        if beam.is_empty() {
            break;
        }
    }
    prune(&mut finished, cfg.beam);
    if finished.is_empty() {
        return Err(DecodeError::NoHypothesis);
    }
    Ok(finished)
}

/// Frame-synchronous beam search. Every frame consumes one symbol: blank
/// keeps the output, any other token appends to it.
pub fn decode_frame_sync<L: FusionLm>(
    oracle: &FrameOracle,
    lm: &L,
    cfg: &FusionConfig,
) -> Result<Vec<Hypothesis<L::State>>, DecodeError> {
    let frames = oracle.frames();
    let max_symbols = cfg.max_symbols.unwrap_or(frames);
    let blank = oracle.blank();
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        delta: 0.0,
        lm_state: lm.init(),
        frame: 0,
    }];
    for t in 0..frames {
        let mut next = Vec::new();
        for h in &beam {
            let sb = oracle.score(t, blank);
            if sb > f64::NEG_INFINITY {
                next.push(Hypothesis {
                    delta: h.delta + sb,
                    frame: t + 1,
                    ..h.clone()
                });
            }
            if h.tokens.len() >= max_symbols {
                continue;
            }
            for (k, token) in oracle.tokens().iter().enumerate() {
                let s = oracle.score(t, k);
                if s == f64::NEG_INFINITY {
                    continue;
                }
                let (state, post) = lm.advance_token(&h.lm_state, token);
                let delta = h.delta + fuse(s, cfg.lm_weight, post);
                if delta == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(k);
                next.push(Hypothesis {
                    tokens,
                    delta,
                    lm_state: state,
                    frame: t + 1,
                });
            }
        }
        beam = merge(next, cfg.semiring);
        prune(&mut beam, cfg.beam);
        if beam.is_empty() {
            return Err(DecodeError::NoHypothesis);
        }
    }
    let mut finished: Vec<_> = beam
        .into_iter()
        .map(|h| Hypothesis {
            delta: finish(&h, 0.0, lm, cfg),
            ..h
        })
        .filter(|h| h.delta > f64::NEG_INFINITY)
        .collect();
    prune(&mut finished, cfg.beam);
    if finished.is_empty() {
        return Err(DecodeError::NoHypothesis);
    }
    Ok(finished)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub tokens: Vec<String>,
    pub acoustic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rescored {
    pub tokens: Vec<String>,
    pub acoustic: f64,
    pub lm: f64,
    pub score: f64,
    /// Position in the input list.
    pub input_rank: usize,
}

/// Re-ranks by `acoustic + lm_weight * LM score`; ties keep input order.
pub fn rescore_nbest<L: FusionLm>(
    entries: &[NBestEntry],
    lm: &L,
    lm_weight: f64,
) -> Result<Vec<Rescored>, DecodeError> {
    if entries.is_empty() {
        return Err(DecodeError::EmptyNBest);
    }
    let mut out: Vec<Rescored> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let lm_score = if lm_weight == 0.0 {
                0.0
            } else {
                lm.sequence_score(&e.tokens)
            };
            Rescored {
                tokens: e.tokens.clone(),
                acoustic: e.acoustic,
                lm: lm_score,
                score: fuse(e.acoustic, lm_weight, lm_score),
                input_rank: i,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}
