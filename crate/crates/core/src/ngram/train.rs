//! Small-corpus N-gram estimation for fixtures and examples.
//!
//! Both estimators are emitted in backoff form with exact normalization, so
//! for every listed context the listed successors plus the backed-off rest
//! sum to one over the predictable vocabulary.

use std::collections::BTreeMap;
use std::f64::consts::LN_10;

use super::{arpa_representable, NGramEntry, NGramError, NGramModel, NGramModelBuilder};
use crate::symbols::{SymbolTable, BOS_SYMBOL, EOS_SYMBOL, UNK_SYMBOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Interpolated Witten-Bell.
    WittenBell,
    /// Additive smoothing with constant `k`, Katz-style backoff to lower orders.
    AddK(f64),
}

/// ARPA convention for the never-predicted `<s>` unigram.
const BOS_LOG10: f64 = -99.0;

type Key = Vec<u32>;

struct Counts {
    /// counts[k-1][(history, word)] for k-grams
    ngrams: Vec<BTreeMap<Key, u64>>,
    /// history -> (total count, distinct successors), by history length
    contexts: BTreeMap<Key, (u64, u64)>,
}

impl Counts {
    fn ngram(&self, key: &[u32]) -> u64 {
        self.ngrams[key.len() - 1].get(key).copied().unwrap_or(0)
    }
}

struct Estimator<'a> {
    counts: &'a Counts,
    vocab_size: f64,
    smoothing: Smoothing,
    /// backoff multiplier (linear) per seen context, filled order by order
    alpha: BTreeMap<Key, f64>,
}

impl Estimator<'_> {
    /// Probability of `word` after `history` for a listed (seen) N-gram.
    fn listed(&self, history: &[u32], word: u32) -> f64 {
        let mut key = history.to_vec();
        key.push(word);
        let c = self.counts.ngram(&key) as f64;
        match self.smoothing {
            Smoothing::AddK(k) => {
                let total = self.context_total(history) as f64;
                (c + k) / (total + k * self.vocab_size)
            }
            Smoothing::WittenBell => {
                if history.is_empty() {
                    let (n, t) = self.counts.contexts[&Vec::new()];
                    let (n, t) = (n as f64, t as f64);
                    return (c + t / self.vocab_size) / (n + t);
                }
                let lower = self.prob(&history[1..], word);
                let (n, t) = self.counts.contexts[history];
                let (n, t) = (n as f64, t as f64);
                (c + t * lower) / (n + t)
            }
        }
    }

    fn context_total(&self, history: &[u32]) -> u64 {
        self.counts.contexts.get(history).map(|c| c.0).unwrap_or(0)
    }

    /// Full backoff probability of `word` after `history`.
    fn prob(&self, history: &[u32], word: u32) -> f64 {
        let mut key = history.to_vec();
        key.push(word);
        if history.is_empty() {
            return self.listed(history, word);
        }
        if self.counts.ngram(&key) > 0 {
            return self.listed(history, word);
        }
        let alpha = self.alpha.get(history).copied().unwrap_or(1.0);
        alpha * self.prob(&history[1..], word)
    }
}

fn count(sentences: &[Vec<u32>], order: usize) -> Counts {
    let mut ngrams = vec![BTreeMap::new(); order];
    let mut contexts: BTreeMap<Key, (u64, u64)> = BTreeMap::new();
    for sent in sentences {
        // sent is <s> w1 .. wn </s>; position 0 is never predicted
        for end in 1..sent.len() {
            for k in 1..=order.min(end + 1) {
                let key = sent[end + 1 - k..=end].to_vec();
                let slot = ngrams[k - 1].entry(key.clone()).or_insert(0u64);
                *slot += 1;
                let ctx = contexts.entry(key[..k - 1].to_vec()).or_insert((0, 0));
                ctx.0 += 1;
                if *slot == 1 {
                    ctx.1 += 1;
                }
            }
        }
    }
    Counts { ngrams, contexts }
}

/// Estimates an N-gram model from whitespace-segmented sentences, one per line.
pub fn train_toy_lm(
    corpus: &str,
    order: usize,
    smoothing: Smoothing,
) -> Result<NGramModel, NGramError> {
    if order == 0 {
        return Err(NGramError::InvalidSmoothing("order must be at least 1".into()));
    }
    match smoothing {
        Smoothing::AddK(k) if !(k >= 0.0 && k.is_finite()) => {
            return Err(NGramError::InvalidSmoothing(format!("k = {k}")));
        }
        Smoothing::AddK(k) if k == 0.0 && order > 1 => {
            return Err(NGramError::InvalidSmoothing(
                "k = 0 leaves no mass for backoff above order 1".into(),
            ));
        }
        _ => {}
    }

    let mut symbols = SymbolTable::with_reserved();
    let bos = symbols.get(BOS_SYMBOL).unwrap().0;
    let eos = symbols.get(EOS_SYMBOL).unwrap().0;
    let unk = symbols.get(UNK_SYMBOL).unwrap().0;
    let mut words_in_order = Vec::new();
    let mut sentences = Vec::new();
    for line in corpus.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let mut sent = vec![bos];
        for w in words {
            let before = symbols.len();
            let id = symbols.intern(w).0;
            if symbols.len() > before {
                words_in_order.push(id);
            }
            sent.push(id);
        }
        sent.push(eos);
        sentences.push(sent);
    }
    if sentences.is_empty() {
        return Err(NGramError::EmptyCorpus);
    }

    let counts = count(&sentences, order);
    // predictable vocabulary: every word except <s>
    let mut predictable = words_in_order.clone();
    for special in [eos, unk] {
        if !predictable.contains(&special) {
            predictable.push(special);
        }
    }
    let mut est = Estimator {
        counts: &counts,
        vocab_size: predictable.len() as f64,
        smoothing,
        alpha: BTreeMap::new(),
    };

    // Backoff multipliers, shortest contexts first.
    for k in 2..=order {
        let histories: Vec<Key> = counts
            .contexts
            .keys()
            .filter(|h| h.len() == k - 1)
            .cloned()
            .collect();
        for h in histories {
            let alpha = match smoothing {
                Smoothing::WittenBell => {
                    let (n, t) = counts.contexts[&h];
                    t as f64 / (n + t) as f64
                }
                Smoothing::AddK(_) => {
                    let (mut listed, mut lower) = (0.0, 0.0);
                    for (key, _) in counts.ngrams[k - 1].range(h.clone()..) {
                        if key[..k - 1] != h[..] {
                            break;
                        }
                        let w = key[k - 1];
                        listed += est.listed(&h, w);
                        lower += est.prob(&h[1..], w);
                    }
                    let (num, den) = (1.0 - listed, 1.0 - lower);
                    if num <= 1e-15 || den <= 1e-15 {
                        1.0
                    } else {
                        num / den
                    }
                }
            };
            est.alpha.insert(h, alpha);
        }
    }

    let name = |id: u32| symbols.symbol(crate::symbols::TokenId(id)).unwrap();
    let backoff_of = |key: &[u32]| {
        if key.len() < order {
            est.alpha
                .get(key)
                .map(|a| arpa_representable(a.ln()))
                .unwrap_or(0.0)
        } else {
            0.0
        }
    };

    let mut builder = NGramModelBuilder::new();
    if order > 1 {
        builder.add(
            &[BOS_SYMBOL],
            NGramEntry {
                log_prob: BOS_LOG10 * LN_10,
                backoff: backoff_of(&[bos]),
            },
        )?;
    }
    for &w in &predictable {
        let p = est.listed(&[], w);
        if p <= 0.0 {
            continue;
        }
        builder.add(
            &[name(w)],
            NGramEntry {
                log_prob: arpa_representable(p.ln()),
                backoff: backoff_of(&[w]),
            },
        )?;
    }
    for k in 2..=order {
        for key in counts.ngrams[k - 1].keys() {
            let p = est.listed(&key[..k - 1], key[k - 1]);
            let words: Vec<&str> = key.iter().map(|&t| name(t)).collect();
            builder.add(
                &words,
                NGramEntry {
                    log_prob: arpa_representable(p.ln()),
                    backoff: backoff_of(key),
                },
            )?;
        }
    }
    let model = builder.build();
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{parse_arpa, write_arpa, LmStateId};

    const CORPUS: &str = "孙悟空 来 了\n孙 悟空 来 了\n猪八戒 也 来 了\n孙悟空 打 妖怪\n";

    fn full_vocab_mass(model: &NGramModel, state: LmStateId) -> f64 {
        model
            .symbols()
            .iter()
            .filter(|(t, _)| model.contains(*t))
            .map(|(t, _)| model.lm_advance(state, t).unwrap().1.exp())
            .sum()
    }

    fn all_states(model: &NGramModel) -> Vec<LmStateId> {
        let mut states = vec![LmStateId::ROOT];
        for (key, _) in model.entries() {
            if key.len() < model.order() {
                states.push(model.state_for(&key));
            }
        }
        states
    }

    #[test]
    fn single_word_corpus_add_zero() {
        let m = train_toy_lm("a a a a a a a a a\n", 1, Smoothing::AddK(0.0)).unwrap();
        let a = m.token("a").unwrap();
        let lp = m.cond_log_prob(&[], a).unwrap();
        // nine `a` tokens and one </s>
        assert!((lp - 0.9f64.ln()).abs() < 1e-12);
        assert!(m.unk().is_none());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(
            train_toy_lm("\n  \n", 2, Smoothing::WittenBell),
            Err(NGramError::EmptyCorpus)
        );
    }

    #[test]
    fn add_zero_above_unigram_is_rejected() {
        assert!(matches!(
            train_toy_lm("a b\n", 2, Smoothing::AddK(0.0)),
            Err(NGramError::InvalidSmoothing(_))
        ));
    }

    #[test]
    fn trained_models_are_normalized() {
        for smoothing in [Smoothing::WittenBell, Smoothing::AddK(0.5), Smoothing::AddK(1.0)] {
            for order in 1..=4 {
                let m = train_toy_lm(CORPUS, order, smoothing).unwrap();
                m.validate().unwrap();
                for s in all_states(&m) {
                    let mass = full_vocab_mass(&m, s);
                    assert!(
                        (mass - 1.0).abs() < 1e-6,
                        "{smoothing:?} order {order} state {s:?} mass {mass}"
                    );
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let a = train_toy_lm(CORPUS, 3, Smoothing::WittenBell).unwrap();
        let b = train_toy_lm(CORPUS, 3, Smoothing::WittenBell).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_arpa(&a, &mut buf).unwrap();
        let parsed = parse_arpa(&buf[..]).unwrap();
        assert_eq!(a, parsed);
        let mut buf2 = Vec::new();
        write_arpa(&parsed, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
