//! Sequence and prefix scoring with a word N-gram over segmentation lattices.
//!
//! [`WordLatticeScorer::score_sequence`] builds the lattice of a whole
//! sequence, intersects it with the LM and returns the forward score.
//! [`PrefixScorerState`] computes the same quantity one character at a time:
//! it keeps, for the last `l` lattice positions, the forward weight of every
//! reachable LM state, so appending a character only touches words ending at
//! the new position.

use std::collections::VecDeque;
use std::sync::Arc as Shared;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::lattice::{LatticeError, SegmentationLattice, Vocabulary};
use crate::ngram::{LmStateId, NGramError, NGramModel};
use crate::symbols::{TokenId, EOS_SYMBOL};
use crate::wfsa::{
    intersect_with_explicit_backoff, intersect_with_lm, CompositionOptions, Semiring, Wfsa,
    WfsaError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Lm(#[from] NGramError),
    #[error(transparent)]
    Wfsa(#[from] WfsaError),
}

/// What happens to lattice words the LM does not list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Score them as `<unk>`.
    #[default]
    Unk,
    /// Batch scoring fails; incremental scoring drops the arc.
    HardError,
}

/// How the lattice is combined with the LM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompositionMode {
    /// Each word sequence gets its backoff probability once.
    #[default]
    Lazy,
    /// LM as an acceptor with epsilon backoff arcs; backoff paths are summed
    /// alongside explicit ones.
    ExplicitBackoff,
}

/// Map entries below `best - PRUNE_BEAM` are dropped once a map holds more
/// than `PRUNE_THRESHOLD` entries.
pub const PRUNE_BEAM: f64 = 30.0;
pub const PRUNE_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScorerConfig {
    pub semiring: Semiring,
    pub bos: bool,
    pub eos: bool,
    pub oov: OovPolicy,
    pub mode: CompositionMode,
    pub prune: bool,
}

/// Word-level LM scorer over segmentation lattices.
#[derive(Debug, Clone)]
pub struct WordLatticeScorer {
    model: Shared<NGramModel>,
    vocab: Shared<Vocabulary>,
    config: ScorerConfig,
    /// LM token per vocabulary label
    tokens: Vec<Result<TokenId, NGramError>>,
}

type Frontier = Shared<Vec<(LmStateId, f64)>>;

/// Scoring state after a character prefix. Cloning is cheap; advancing
/// returns a new value and leaves the old one intact.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixScorerState {
    len: usize,
    /// last `l - 1` characters
    tail: Vec<char>,
    /// maps for positions `len + 1 - frontier.len() ..= len`
    frontier: VecDeque<Frontier>,
    score: f64,
    dead: bool,
}

impl PrefixScorerState {
    /// Number of characters consumed.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Forward score of the prefix, without end-of-sentence.
    pub fn score(&self) -> f64 {
        self.score
    }

    /// No future extension can reach a covered segmentation.
    pub fn is_dead(&self) -> bool {
        self.dead
    }

    /// LM states and weights at the current position, sorted by state.
    pub fn current(&self) -> &[(LmStateId, f64)] {
        self.frontier.back().map(|f| f.as_slice()).unwrap_or(&[])
    }

    /// Map at lattice position `p`, if it is still inside the window.
    pub fn frontier_at(&self, p: usize) -> Option<&[(LmStateId, f64)]> {
        let first = self.len + 1 - self.frontier.len();
        if p < first || p > self.len {
            return None;
        }
        Some(self.frontier[p - first].as_slice())
    }

    /// Total number of (position, LM state) entries held.
    pub fn width(&self) -> usize {
        self.frontier.iter().map(|f| f.len()).sum()
    }
}

fn merge(map: &mut FxHashMap<LmStateId, f64>, semiring: Semiring, key: LmStateId, w: f64) {
    map.entry(key)
        .and_modify(|x| *x = semiring.plus(*x, w))
        .or_insert(w);
}

impl WordLatticeScorer {
    /// Fails when end-of-sentence is requested but `</s>` is not a listed
    /// unigram.
    pub fn new(
        model: Shared<NGramModel>,
        vocab: Shared<Vocabulary>,
        config: ScorerConfig,
    ) -> Result<Self, ScoreError> {
        if config.eos {
            model.resolve(EOS_SYMBOL, false)?;
        }
        let map_to_unk = config.oov == OovPolicy::Unk;
        let mut tokens = vec![Err(NGramError::OutOfVocabulary("<eps>".into()))];
        for (_, word) in vocab.words() {
            tokens.push(model.resolve(word, map_to_unk));
        }
        Ok(WordLatticeScorer {
            model,
            vocab,
            config,
            tokens,
        })
    }

    pub fn model(&self) -> &Shared<NGramModel> {
        &self.model
    }

    pub fn vocab(&self) -> &Shared<Vocabulary> {
        &self.vocab
    }

    pub fn config(&self) -> ScorerConfig {
        self.config
    }

    fn options(&self, eos: bool) -> CompositionOptions {
        CompositionOptions {
            bos: self.config.bos,
            eos,
        }
    }

    /// The lattice-LM product for `chars`.
    pub fn product(&self, chars: &[char], eos: bool) -> Result<Wfsa, ScoreError> {
        let lattice = SegmentationLattice::from_chars(chars, self.vocab.clone());
        let resolve = |label: u32| self.tokens[label as usize].clone();
        let q = lattice.fsa();
        let qg = match self.config.mode {
            CompositionMode::Lazy => intersect_with_lm(q, &self.model, self.options(eos), resolve)?,
            CompositionMode::ExplicitBackoff => {
                intersect_with_explicit_backoff(q, &self.model, self.options(eos), resolve)?
            }
        };
        Ok(qg)
    }

    /// Natural-log probability of the whole sequence, including `</s>` when
    /// configured. `-inf` when no segmentation covers it.
    pub fn score_sequence(&self, chars: &[char]) -> Result<f64, ScoreError> {
        if chars.is_empty() {
            return Err(LatticeError::EmptyInput.into());
        }
        Ok(self
            .product(chars, self.config.eos)?
            .forward_score(self.config.semiring)?)
    }

    /// Batch score of a prefix, never including `</s>`.
    pub fn score_prefix(&self, chars: &[char]) -> Result<f64, ScoreError> {
        Ok(self.product(chars, false)?.forward_score(self.config.semiring)?)
    }

    /// [`WordLatticeScorer::score_sequence`] minus the log of the number of
    /// segmentations.
    pub fn score_normalized(&self, chars: &[char]) -> Result<f64, ScoreError> {
        let score = self.score_sequence(chars)?;
        let paths = SegmentationLattice::from_chars(chars, self.vocab.clone())
            .fsa()
            .count_paths()?;
        if paths == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(score - (paths as f64).ln())
    }

    /// In explicit mode, adds every backoff chain out of each entry.
    fn close(&self, map: &mut FxHashMap<LmStateId, f64>) {
        if self.config.mode != CompositionMode::ExplicitBackoff {
            return;
        }
        for len in (1..self.model.order()).rev() {
            let mut at_len: Vec<(LmStateId, f64)> = map
                .iter()
                .filter(|(s, _)| self.model.context_len(**s) == len)
                .map(|(&s, &w)| (s, w))
                .collect();
            at_len.sort_by_key(|e| e.0);
            for (s, w) in at_len {
                if let Some((to, bo)) = self.model.backoff_transition(s) {
                    merge(map, self.config.semiring, to, w + bo);
                }
            }
        }
    }

    fn advance_lm(&self, state: LmStateId, token: TokenId) -> Option<(LmStateId, f64)> {
        match self.config.mode {
            CompositionMode::Lazy => self.model.lm_advance(state, token).ok(),
            CompositionMode::ExplicitBackoff => self.model.listed_advance(state, token),
        }
    }

    fn seal(&self, mut map: FxHashMap<LmStateId, f64>) -> Vec<(LmStateId, f64)> {
        self.close(&mut map);
        if self.config.prune && map.len() > PRUNE_THRESHOLD {
            let best = map.values().copied().fold(f64::NEG_INFINITY, f64::max);
            map.retain(|_, w| *w >= best - PRUNE_BEAM);
        }
        let mut v: Vec<_> = map.into_iter().collect();
        v.sort_unstable_by_key(|e| e.0);
        v
    }

    /// State of the empty prefix.
    pub fn init_state(&self) -> PrefixScorerState {
        let mut map = FxHashMap::default();
        map.insert(self.model.start_state(self.config.bos), Semiring::ONE);
        let start = self.seal(map);
        let score = self.config.semiring.sum(start.iter().map(|e| e.1));
        PrefixScorerState {
            len: 0,
            tail: Vec::new(),
            frontier: VecDeque::from([Shared::new(start)]),
            score,
            dead: false,
        }
    }

    /// Appends `c`; returns the new state and the log-posterior of `c`
    /// (difference of prefix scores).
    ///
    /// A prefix with no covering segmentation scores `-inf`; the posterior
    /// of a character leading out of such a prefix is the new prefix score.
    pub fn advance(&self, state: &PrefixScorerState, c: char) -> (PrefixScorerState, f64) {
        let l = self.vocab.max_word_len();
        let mut window = state.tail.clone();
        window.push(c);
        let k = window.len();
        let semiring = self.config.semiring;

        let mut map = FxHashMap::default();
        if !state.dead {
            for r in 1..=k {
                let Some(label) = self.vocab.lookup(&window[k - r..]) else {
                    continue;
                };
                let Ok(token) = self.tokens[label as usize] else {
                    continue;
                };
                let source = &state.frontier[state.frontier.len() - r];
                for &(lm, w) in source.iter() {
                    if let Some((next, lp)) = self.advance_lm(lm, token) {
                        merge(&mut map, semiring, next, w + lp);
                    }
                }
            }
        }
        let current = self.seal(map);
        let score = semiring.sum(current.iter().map(|e| e.1));

        let mut frontier = state.frontier.clone();
        frontier.push_back(Shared::new(current));
        if frontier.len() > l {
            frontier.pop_front();
        }
        if window.len() >= l {
            window.drain(..window.len() + 1 - l);
        }
        let dead = frontier.iter().all(|f| f.is_empty());
        let posterior = if score == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else if state.score == f64::NEG_INFINITY {
            score
        } else {
            score - state.score
        };
        let next = PrefixScorerState {
            len: state.len + 1,
            tail: window,
            frontier,
            score,
            dead,
        };
        (next, posterior)
    }

    /// Prefix score plus, when configured, the `</s>` term.
    pub fn finalize(&self, state: &PrefixScorerState) -> f64 {
        if state.dead {
            return f64::NEG_INFINITY;
        }
        if !self.config.eos {
            return state.score;
        }
        let eos = self.model.eos();
        let semiring = self.config.semiring;
        let mut map = FxHashMap::default();
        for &(lm, w) in state.current() {
            if let Some((next, lp)) = self.advance_lm(lm, eos) {
                merge(&mut map, semiring, next, w + lp);
            }
        }
        let closed = self.seal(map);
        semiring.sum(closed.iter().map(|e| e.1))
    }

    /// Incremental score of `chars`: final state and per-character
    /// posteriors.
    pub fn score_incremental(&self, chars: &[char]) -> (PrefixScorerState, Vec<f64>) {
        let mut state = self.init_state();
        let mut posteriors = Vec::with_capacity(chars.len());
        for &c in chars {
            let (next, p) = self.advance(&state, c);
            posteriors.push(p);
            state = next;
        }
        (state, posteriors)
    }
}

/// Character-level N-gram scorer.
#[derive(Debug, Clone)]
pub struct CharLmScorer {
    model: Shared<NGramModel>,
    bos: bool,
    eos: bool,
    map_to_unk: bool,
}

/// Context of a [`CharLmScorer`]; `None` after an unscorable character.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharLmState(Option<LmStateId>);

impl CharLmScorer {
    pub fn new(
        model: Shared<NGramModel>,
        bos: bool,
        eos: bool,
        oov: OovPolicy,
    ) -> Result<Self, ScoreError> {
        if eos {
            model.resolve(EOS_SYMBOL, false)?;
        }
        Ok(CharLmScorer {
            model,
            bos,
            eos,
            map_to_unk: oov == OovPolicy::Unk,
        })
    }

    pub fn model(&self) -> &Shared<NGramModel> {
        &self.model
    }

    pub fn init_state(&self) -> CharLmState {
        CharLmState(Some(self.model.start_state(self.bos)))
    }

    pub fn char_advance(&self, state: CharLmState, c: char) -> (CharLmState, f64) {
        let Some(lm) = state.0 else {
            return (state, f64::NEG_INFINITY);
        };
        let mut buf = [0u8; 4];
        let step = self
            .model
            .resolve(c.encode_utf8(&mut buf), self.map_to_unk)
            .and_then(|t| self.model.lm_advance(lm, t));
        match step {
            Ok((next, lp)) => (CharLmState(Some(next)), lp),
            Err(_) => (CharLmState(None), f64::NEG_INFINITY),
        }
    }

    /// `log P(</s> | context)` when configured, else 0.
    pub fn eos_increment(&self, state: CharLmState) -> f64 {
        match state.0 {
            None => f64::NEG_INFINITY,
            Some(_) if !self.eos => 0.0,
            Some(lm) => self
                .model
                .lm_advance(lm, self.model.eos())
                .map(|(_, lp)| lp)
                .unwrap_or(f64::NEG_INFINITY),
        }
    }

    pub fn score_sequence(&self, chars: &[char]) -> f64 {
        let mut state = self.init_state();
        let mut total = 0.0;
        for &c in chars {
            let (next, lp) = self.char_advance(state, c);
            total += lp;
            state = next;
        }
        total + self.eos_increment(state)
    }
}

/// An LM usable for shallow fusion in the decoders.
pub trait FusionLm: Send + Sync {
    type State: Clone + Send + Sync;

    fn init(&self) -> Self::State;

    /// Appends one character; returns the new state and its log-posterior.
    fn advance(&self, state: &Self::State, c: char) -> (Self::State, f64);

    /// End-of-sentence increment for a finished hypothesis.
    fn eos_increment(&self, state: &Self::State) -> f64;

    /// Score of a complete token sequence, end-of-sentence included.
    fn sequence_score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let mut state = self.init();
        let mut total = 0.0;
        for t in tokens {
            let (next, p) = self.advance_token(&state, t.as_ref());
            total += p;
            state = next;
        }
        total + self.eos_increment(&state)
    }

    /// Appends every character of a token; the posterior is the sum.
    fn advance_token(&self, state: &Self::State, token: &str) -> (Self::State, f64) {
        let mut state = state.clone();
        let mut total = 0.0;
        for c in token.chars() {
            let (next, p) = self.advance(&state, c);
            total += p;
            state = next;
        }
        (state, total)
    }
}

impl FusionLm for WordLatticeScorer {
    type State = PrefixScorerState;

    fn init(&self) -> PrefixScorerState {
        self.init_state()
    }

    fn advance(&self, state: &PrefixScorerState, c: char) -> (PrefixScorerState, f64) {
        WordLatticeScorer::advance(self, state, c)
    }

    fn eos_increment(&self, state: &PrefixScorerState) -> f64 {
        if state.score == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.finalize(state) - state.score
    }

    fn sequence_score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let mut state = self.init_state();
        let start = state.score;
        for c in tokens.iter().flat_map(|t| t.as_ref().chars()) {
            state = WordLatticeScorer::advance(self, &state, c).0;
        }
        self.finalize(&state) - start
    }
}

impl FusionLm for CharLmScorer {
    type State = CharLmState;

    fn init(&self) -> CharLmState {
        self.init_state()
    }

    fn advance(&self, state: &CharLmState, c: char) -> (CharLmState, f64) {
        self.char_advance(*state, c)
    }

    fn eos_increment(&self, state: &CharLmState) -> f64 {
        CharLmScorer::eos_increment(self, *state)
    }
}

/// No external LM: every posterior is 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoLm;

impl FusionLm for NoLm {
    type State = ();

    fn init(&self) {}

    fn advance(&self, _: &(), _: char) -> ((), f64) {
        ((), 0.0)
    }

    fn eos_increment(&self, _: &()) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{NGramEntry, NGramModelBuilder};

    fn unigram(words: &[(&str, f64)]) -> Shared<NGramModel> {
        let mut b = NGramModelBuilder::new();
        for &(w, p) in words {
            b.add(
                &[w],
                NGramEntry {
                    log_prob: p.ln(),
                    backoff: 0.0,
                },
            )
            .unwrap();
        }
        Shared::new(b.build())
    }

    fn scorer(model: Shared<NGramModel>, words: &[&str], config: ScorerConfig) -> WordLatticeScorer {
        let vocab = Shared::new(Vocabulary::new(words.iter().copied()).unwrap());
        WordLatticeScorer::new(model, vocab, config).unwrap()
    }

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn two_segmentations() {
        let m = unigram(&[("a", 0.5), ("b", 0.3), ("ab", 0.2)]);
        for (semiring, expected) in [(Semiring::Log, 0.35f64.ln()), (Semiring::Tropical, 0.2f64.ln())] {
            let cfg = ScorerConfig {
                semiring,
                ..Default::default()
            };
            let sc = scorer(m.clone(), &["a", "b", "ab"], cfg);
            let batch = sc.score_sequence(&chars("ab")).unwrap();
            assert!((batch - expected).abs() < 1e-12);
            let (state, post) = sc.score_incremental(&chars("ab"));
            assert!((state.score() - expected).abs() < 1e-12);
            assert_eq!(post[0] + post[1], post.iter().sum::<f64>());
            assert!((post[0] - 0.5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_can_be_positive() {
        // completing "ab" adds mass the prefix "a" did not have
        let m = unigram(&[("a", 0.1), ("b", 0.1), ("ab", 0.7)]);
        let sc = scorer(m, &["a", "b", "ab"], ScorerConfig::default());
        let (_, post) = sc.score_incremental(&chars("ab"));
        assert!(post[1] > 0.0);
    }

    #[test]
    fn uncovered_prefix_recovers_inside_window() {
        let m = unigram(&[("ab", 0.5), ("c", 0.5)]);
        let sc = scorer(m, &["ab", "c"], ScorerConfig::default());
        let s0 = sc.init_state();
        let (s1, p1) = sc.advance(&s0, 'a');
        assert_eq!(p1, f64::NEG_INFINITY);
        assert!(!s1.is_dead());
        let (s2, p2) = sc.advance(&s1, 'b');
        assert!((s2.score() - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(p2, s2.score());
        let (s3, _) = sc.advance(&s2, 'x');
        let (s4, p4) = sc.advance(&s3, 'x');
        assert!(s4.is_dead());
        assert_eq!(p4, f64::NEG_INFINITY);
        assert_eq!(sc.finalize(&s4), f64::NEG_INFINITY);
        assert_eq!(sc.score_sequence(&chars("abxx")).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn branching_leaves_parent_alone() {
        let m = unigram(&[("a", 0.5), ("b", 0.3), ("ab", 0.2)]);
        let sc = scorer(m, &["a", "b", "ab"], ScorerConfig::default());
        let (parent, _) = sc.advance(&sc.init_state(), 'a');
        let snapshot = parent.clone();
        let (x, _) = sc.advance(&parent, 'a');
        let (y, _) = sc.advance(&parent, 'b');
        assert_eq!(parent, snapshot);
        assert_ne!(x.score(), y.score());
    }

    #[test]
    fn hard_error_policy() {
        let m = unigram(&[("a", 0.5), ("b", 0.3), ("<unk>", 0.2)]);
        let unk = scorer(m.clone(), &["a", "b", "ab"], ScorerConfig::default());
        assert!((unk.score_sequence(&chars("ab")).unwrap() - 0.35f64.ln()).abs() < 1e-12);
        let strict = scorer(
            m,
            &["a", "b", "ab"],
            ScorerConfig {
                oov: OovPolicy::HardError,
                ..Default::default()
            },
        );
        assert!(matches!(
            strict.score_sequence(&chars("ab")),
            Err(ScoreError::Lm(NGramError::OutOfVocabulary(_)))
        ));
        let (s, _) = strict.score_incremental(&chars("ab"));
        assert!((s.score() - 0.15f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn eos_requires_listed_end() {
        let m = unigram(&[("a", 1.0)]);
        let vocab = Shared::new(Vocabulary::new(["a"]).unwrap());
        let cfg = ScorerConfig {
            eos: true,
            ..Default::default()
        };
        assert!(WordLatticeScorer::new(m, vocab, cfg).is_err());
    }

    #[test]
    fn normalized_diagnostic() {
        let m = unigram(&[("a", 0.5), ("b", 0.3), ("ab", 0.2)]);
        let sc = scorer(m, &["a", "b", "ab"], ScorerConfig::default());
        let n = sc.score_normalized(&chars("ab")).unwrap();
        assert!((n - (0.35f64 / 2.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn char_lm_uniform() {
        let alphabet = "0123456789";
        let entries: Vec<(String, f64)> = alphabet.chars().map(|c| (c.to_string(), 0.1)).collect();
        let refs: Vec<(&str, f64)> = entries.iter().map(|(s, p)| (s.as_str(), *p)).collect();
        let sc = CharLmScorer::new(unigram(&refs), false, false, OovPolicy::Unk).unwrap();
        let mut st = sc.init_state();
        for c in "31415".chars() {
            let (next, lp) = sc.char_advance(st, c);
            assert!((lp - 0.1f64.ln()).abs() < 1e-12);
            st = next;
        }
        let (dead, lp) = sc.char_advance(st, 'x');
        assert_eq!(lp, f64::NEG_INFINITY);
        assert_eq!(sc.char_advance(dead, '1').1, f64::NEG_INFINITY);
    }

    #[test]
    fn no_lm_is_neutral() {
        let (s, p) = NoLm.advance_token(&NoLm.init(), "abc");
        assert_eq!(p, 0.0);
        assert_eq!(NoLm.eos_increment(&s), 0.0);
    }
}
