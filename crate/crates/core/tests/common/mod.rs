#![allow(dead_code)]

use std::collections::BTreeSet;

use lattice_fusion::ngram::{NGramModel, Smoothing};
use lattice_fusion::symbols::TokenId;
use lattice_fusion::wfsa::log_add;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const ALPHABET: [char; 5] = ['a', 'b', 'c', 'd', 'e'];

/// All ways to split `chars` into words of `vocab`, by recursion on the
/// first word.
pub fn segmentations(chars: &[char], vocab: &BTreeSet<String>) -> Vec<Vec<String>> {
    if chars.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for r in 1..=chars.len() {
        let head: String = chars[..r].iter().collect();
        if !vocab.contains(&head) {
            continue;
        }
        for mut rest in segmentations(&chars[r..], vocab) {
            rest.insert(0, head.clone());
            out.push(rest);
        }
    }
    out
}

/// Backoff probability straight from the listed entries.
pub fn direct_log_prob(model: &NGramModel, context: &[TokenId], w: TokenId) -> f64 {
    let keep = context.len().min(model.order() - 1);
    let ctx = &context[context.len() - keep..];
    let mut key = ctx.to_vec();
    key.push(w);
    if let Some(e) = model.entry(&key) {
        return e.log_prob;
    }
    if ctx.is_empty() {
        return f64::NEG_INFINITY;
    }
    let backoff = model.entry(ctx).map(|e| e.backoff).unwrap_or(0.0);
    backoff + direct_log_prob(model, &ctx[1..], w)
}

/// Chain score of a word sequence under the direct recursion.
pub fn chain_score(model: &NGramModel, words: &[String], bos: bool, eos: bool) -> f64 {
    let mut history = Vec::new();
    if bos {
        history.push(model.bos());
    }
    let mut total = 0.0;
    for w in words {
        let t = model.resolve(w, true).expect("word or <unk> listed");
        total += direct_log_prob(model, &history, t);
        history.push(t);
    }
    if eos {
        total += direct_log_prob(model, &history, model.eos());
    }
    total
}

pub fn log_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, log_add)
}

pub fn max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn random_word(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn random_string(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<char> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

/// Random vocabulary; with `compatible` every alphabet character is a word.
pub fn random_vocab(rng: &mut ChaCha8Rng, size: usize, max_len: usize, compatible: bool) -> BTreeSet<String> {
    let mut v = BTreeSet::new();
    if compatible {
        v.extend(ALPHABET.iter().map(|c| c.to_string()));
    }
    while v.len() < size {
        v.insert(random_word(rng, max_len));
    }
    v
}

/// Corpus of random sentences over `vocab`, one per line.
pub fn random_corpus(rng: &mut ChaCha8Rng, vocab: &BTreeSet<String>, lines: usize) -> String {
    let words: Vec<&String> = vocab.iter().collect();
    let mut out = String::new();
    for _ in 0..lines {
        let n = rng.gen_range(1..=6);
        let sent: Vec<&str> = (0..n).map(|_| words.choose(rng).unwrap().as_str()).collect();
        out.push_str(&sent.join(" "));
        out.push('\n');
    }
    out
}

pub fn random_smoothing(rng: &mut ChaCha8Rng) -> Smoothing {
    if rng.gen_bool(0.5) {
        Smoothing::WittenBell
    } else {
        Smoothing::AddK(0.5)
    }
}
