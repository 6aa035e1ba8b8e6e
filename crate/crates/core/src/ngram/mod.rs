//! Backoff N-gram language models.
//!
//! Entries are stored as a context trie: every listed N-gram is a node whose
//! parent is its (N-1)-word prefix. Nodes shorter than the model order double
//! as LM states, so a state id is just the node id of the longest listed
//! suffix of the history. All weights are natural-log.

mod arpa;
mod train;

pub use arpa::{arpa_representable, parse_arpa, parse_arpa_str, write_arpa, ArpaError, ArpaErrorKind};
pub use train::{train_toy_lm, Smoothing};

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::symbols::{SymbolTable, TokenId, BOS_SYMBOL, EOS_SYMBOL, UNK_SYMBOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NGramError {
    #[error("token `{0}` is not in the LM vocabulary and the model has no <unk>")]
    OutOfVocabulary(String),
    #[error("n-gram `{0}` is listed but its prefix is not")]
    MissingPrefix(String),
    #[error("n-gram `{0}` is listed twice")]
    DuplicateEntry(String),
    #[error("word `{0}` appears in a higher-order n-gram but not as a unigram")]
    UnknownWord(String),
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("invalid smoothing configuration: {0}")]
    InvalidSmoothing(String),
    #[error("invalid model: {0}")]
    Invariant(String),
}

/// Opaque LM state: the longest listed suffix of a history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LmStateId(pub u32);

impl LmStateId {
    /// The empty context.
    pub const ROOT: LmStateId = LmStateId(0);
}

/// Probability and backoff of one listed N-gram (natural log).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramEntry {
    pub log_prob: f64,
    /// Zero for highest-order entries.
    pub backoff: f64,
}

#[derive(Debug, Clone)]
struct Node {
    token: TokenId,
    parent: u32,
    len: u32,
    entry: NGramEntry,
    /// Longest listed proper suffix of this node's key.
    suffix: u32,
}

const ROOT: u32 = 0;

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    symbols: SymbolTable,
    nodes: Vec<Node>,
    children: FxHashMap<(u32, TokenId), u32>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    /// Number of listed N-grams of all orders.
    pub fn num_entries(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Declared counts per order, index 0 holding unigrams.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.order];
        for node in &self.nodes[1..] {
            counts[node.len as usize - 1] += 1;
        }
        counts
    }

    pub fn token(&self, word: &str) -> Option<TokenId> {
        self.symbols.get(word)
    }

    /// True when `token` is listed as a unigram.
    pub fn contains(&self, token: TokenId) -> bool {
        self.children.contains_key(&(ROOT, token))
    }

    pub fn bos(&self) -> TokenId {
        self.symbols.get(BOS_SYMBOL).expect("reserved symbol")
    }

    pub fn eos(&self) -> TokenId {
        self.symbols.get(EOS_SYMBOL).expect("reserved symbol")
    }

    pub fn unk(&self) -> Option<TokenId> {
        self.symbols.get(UNK_SYMBOL).filter(|&t| self.contains(t))
    }

    /// Maps a word to an LM token, falling back to `<unk>` when allowed.
    pub fn resolve(&self, word: &str, map_to_unk: bool) -> Result<TokenId, NGramError> {
        match self.symbols.get(word) {
            Some(t) if self.contains(t) => Ok(t),
            _ if map_to_unk => self
                .unk()
                .ok_or_else(|| NGramError::OutOfVocabulary(word.to_owned())),
            _ => Err(NGramError::OutOfVocabulary(word.to_owned())),
        }
    }

    /// Looks up a listed N-gram by its token sequence.
    pub fn entry(&self, key: &[TokenId]) -> Option<NGramEntry> {
        self.find_node(key).map(|n| self.nodes[n as usize].entry)
    }

    fn find_node(&self, key: &[TokenId]) -> Option<u32> {
        key.iter()
            .try_fold(ROOT, |node, &t| self.children.get(&(node, t)).copied())
    }

    fn key_of(&self, mut node: u32) -> Vec<TokenId> {
        let mut key = Vec::with_capacity(self.nodes[node as usize].len as usize);
        while node != ROOT {
            let n = &self.nodes[node as usize];
            key.push(n.token);
            node = n.parent;
        }
        key.reverse();
        key
    }

    fn describe(&self, key: &[TokenId]) -> String {
        key.iter()
            .map(|&t| self.symbols.symbol(t).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// All listed entries in storage order (ascending order, then insertion).
    pub fn entries(&self) -> impl Iterator<Item = (Vec<TokenId>, NGramEntry)> + '_ {
        (1..self.nodes.len() as u32).map(|n| (self.key_of(n), self.nodes[n as usize].entry))
    }

    /// Entries keyed by their word strings, for comparisons across symbol tables.
    pub fn entry_map(&self) -> BTreeMap<Vec<String>, NGramEntry> {
        self.entries()
            .map(|(key, e)| {
                let words = key
                    .iter()
                    .map(|&t| self.symbols.symbol(t).unwrap_or("?").to_owned())
                    .collect();
                (words, e)
            })
            .collect()
    }

    /// Start state: the `<s>` context when requested and listed, else empty.
    pub fn start_state(&self, with_bos: bool) -> LmStateId {
        if with_bos && self.order > 1 {
            if let Some(&n) = self.children.get(&(ROOT, self.bos())) {
                return LmStateId(n);
            }
        }
        LmStateId::ROOT
    }

    /// The context (token sequence) a state stands for.
    pub fn state_context(&self, state: LmStateId) -> Vec<TokenId> {
        self.key_of(state.0)
    }

    /// State for an arbitrary history: its longest listed suffix of at most
    /// `order - 1` tokens.
    pub fn state_for(&self, context: &[TokenId]) -> LmStateId {
        let max_len = self.order - 1;
        let start = context.len().saturating_sub(max_len);
        (start..=context.len())
            .find_map(|s| self.find_node(&context[s..]))
            .map(LmStateId)
            .unwrap_or(LmStateId::ROOT)
    }

    pub fn num_states(&self) -> usize {
        1 + self.nodes[1..]
            .iter()
            .filter(|n| (n.len as usize) < self.order)
            .count()
    }

    /// All LM states: the empty context plus every listed entry shorter than
    /// the model order.
    pub fn state_ids(&self) -> impl Iterator<Item = LmStateId> + '_ {
        std::iter::once(LmStateId::ROOT).chain(
            (1..self.nodes.len() as u32)
                .filter(|&n| (self.nodes[n as usize].len as usize) < self.order)
                .map(LmStateId),
        )
    }

    /// Explicit word arcs of the LM automaton: one per listed N-gram, from its
    /// context state to the state reached after it.
    pub fn listed_transitions(
        &self,
    ) -> impl Iterator<Item = (LmStateId, TokenId, LmStateId, f64)> + '_ {
        (1..self.nodes.len() as u32).map(|id| {
            let n = &self.nodes[id as usize];
            let next = if (n.len as usize) < self.order {
                id
            } else {
                n.suffix
            };
            (LmStateId(n.parent), n.token, LmStateId(next), n.entry.log_prob)
        })
    }

    /// Number of tokens in the context a state stands for.
    pub fn context_len(&self, state: LmStateId) -> usize {
        self.nodes[state.0 as usize].len as usize
    }

    /// Follows only an explicit arc for `token` out of `state`, without
    /// backing off.
    pub fn listed_advance(&self, state: LmStateId, token: TokenId) -> Option<(LmStateId, f64)> {
        let &hit = self.children.get(&(state.0, token))?;
        let n = &self.nodes[hit as usize];
        let next = if (n.len as usize) < self.order {
            hit
        } else {
            n.suffix
        };
        Some((LmStateId(next), n.entry.log_prob))
    }

    /// Backoff arc of a non-empty context: its longest listed proper suffix
    /// and the backoff weight.
    pub fn backoff_transition(&self, state: LmStateId) -> Option<(LmStateId, f64)> {
        if state == LmStateId::ROOT {
            return None;
        }
        let n = &self.nodes[state.0 as usize];
        Some((LmStateId(n.suffix), n.entry.backoff))
    }

    /// Transition function of the LM automaton: conditional log-probability
    /// of `token` after `state` and the successor state.
    pub fn lm_advance(
        &self,
        state: LmStateId,
        token: TokenId,
    ) -> Result<(LmStateId, f64), NGramError> {
        let mut backoff = 0.0;
        let mut node = state.0;
        loop {
            if let Some(&hit) = self.children.get(&(node, token)) {
                let n = &self.nodes[hit as usize];
                let next = if (n.len as usize) < self.order {
                    hit
                } else {
                    n.suffix
                };
                return Ok((LmStateId(next), backoff + n.entry.log_prob));
            }
            if node == ROOT {
                let word = self.symbols.symbol(token).unwrap_or("?").to_owned();
                return Err(NGramError::OutOfVocabulary(word));
            }
            let n = &self.nodes[node as usize];
            backoff += n.entry.backoff;
            node = n.suffix;
        }
    }

    /// Backoff-smoothed log P(token | context); the context is truncated to
    /// its last `order - 1` tokens.
    pub fn cond_log_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64, NGramError> {
        let state = self.state_for(context);
        self.lm_advance(state, token).map(|(_, lp)| lp)
    }

    /// Checks the structural and probabilistic invariants of a backoff model.
    pub fn validate(&self) -> Result<(), NGramError> {
        let mut mass: FxHashMap<u32, f64> = FxHashMap::default();
        for (id, n) in self.nodes.iter().enumerate().skip(1) {
            let key = self.key_of(id as u32);
            if n.entry.log_prob > 0.0 || n.entry.log_prob.is_nan() {
                return Err(NGramError::Invariant(format!(
                    "log_prob {} > 0 for `{}`",
                    n.entry.log_prob,
                    self.describe(&key)
                )));
            }
            if !n.entry.backoff.is_finite() {
                return Err(NGramError::Invariant(format!(
                    "non-finite backoff for `{}`",
                    self.describe(&key)
                )));
            }
            if n.parent != ROOT && self.nodes[n.parent as usize].len + 1 != n.len {
                return Err(NGramError::MissingPrefix(self.describe(&key)));
            }
            *mass.entry(n.parent).or_insert(0.0) += n.entry.log_prob.exp();
        }
        for (ctx, total) in mass {
            if total > 1.0 + 1e-6 {
                return Err(NGramError::Invariant(format!(
                    "successor mass {total} exceeds 1 for context `{}`",
                    self.describe(&self.key_of(ctx))
                )));
            }
        }
        Ok(())
    }
}

/// Equality of order and string-keyed entries; symbol ids may differ.
impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.entry_map() == other.entry_map()
    }
}

/// Incremental construction with ARPA well-formedness checks.
#[derive(Debug, Clone)]
pub struct NGramModelBuilder {
    symbols: SymbolTable,
    nodes: Vec<Node>,
    children: FxHashMap<(u32, TokenId), u32>,
}

impl Default for NGramModelBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl NGramModelBuilder {
    pub fn new() -> Self {
        NGramModelBuilder {
            symbols: SymbolTable::with_reserved(),
            nodes: vec![Node {
                token: TokenId::EPSILON,
                parent: ROOT,
                len: 0,
                entry: NGramEntry {
                    log_prob: 0.0,
                    backoff: 0.0,
                },
                suffix: ROOT,
            }],
            children: FxHashMap::default(),
        }
    }

    /// Adds an N-gram. Unigrams intern new words; longer N-grams must use
    /// known words and have their prefix already listed.
    pub fn add<S: AsRef<str>>(&mut self, words: &[S], entry: NGramEntry) -> Result<(), NGramError> {
        let describe = || {
            words
                .iter()
                .map(|w| w.as_ref())
                .collect::<Vec<_>>()
                .join(" ")
        };
        assert!(!words.is_empty(), "n-gram must have at least one word");
        let mut parent = ROOT;
        for w in &words[..words.len() - 1] {
            let t = self
                .symbols
                .get(w.as_ref())
                .ok_or_else(|| NGramError::UnknownWord(w.as_ref().to_owned()))?;
            parent = *self
                .children
                .get(&(parent, t))
                .ok_or_else(|| NGramError::MissingPrefix(describe()))?;
        }
        let last = words[words.len() - 1].as_ref();
        let token = if words.len() == 1 {
            self.symbols.intern(last)
        } else {
            let t = self
                .symbols
                .get(last)
                .ok_or_else(|| NGramError::UnknownWord(last.to_owned()))?;
            if !self.children.contains_key(&(ROOT, t)) {
                return Err(NGramError::UnknownWord(last.to_owned()));
            }
            t
        };
        if self.children.contains_key(&(parent, token)) {
            return Err(NGramError::DuplicateEntry(describe()));
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            token,
            parent,
            len: words.len() as u32,
            entry,
            suffix: ROOT,
        });
        self.children.insert((parent, token), id);
        Ok(())
    }

    pub fn build(mut self) -> NGramModel {
        let order = self.nodes.iter().map(|n| n.len as usize).max().unwrap_or(0).max(1);
        let mut model = NGramModel {
            order,
            symbols: std::mem::take(&mut self.symbols),
            nodes: Vec::new(),
            children: std::mem::take(&mut self.children),
        };
        let mut nodes = std::mem::take(&mut self.nodes);
        model.nodes = nodes.clone();
        for (id, node) in nodes.iter_mut().enumerate().skip(1) {
            let key = model.key_of(id as u32);
            node.suffix = (1..key.len())
                .find_map(|s| model.find_node(&key[s..]))
                .unwrap_or(ROOT);
            if node.len as usize == order {
                node.entry.backoff = 0.0;
            }
        }
        model.nodes = nodes;
        model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(log10: f64, bo10: f64) -> NGramEntry {
        NGramEntry {
            log_prob: log10 * std::f64::consts::LN_10,
            backoff: bo10 * std::f64::consts::LN_10,
        }
    }

    /// Bigram fixture over {a, b, c}: every bigram listed except (a, c).
    fn bigram_fixture() -> NGramModel {
        let mut b = NGramModelBuilder::new();
        b.add(&["a"], e(-0.5, -0.3)).unwrap();
        b.add(&["b"], e(-0.6, -0.2)).unwrap();
        b.add(&["c"], e(-0.4, -0.1)).unwrap();
        for (x, y, p) in [
            ("a", "a", -0.9),
            ("a", "b", -0.2),
            ("b", "a", -0.5),
            ("b", "b", -0.6),
            ("b", "c", -0.7),
            ("c", "a", -0.5),
            ("c", "b", -0.5),
            ("c", "c", -0.8),
        ] {
            b.add(&[x, y], e(p, 0.0)).unwrap();
        }
        b.build()
    }

    #[test]
    fn listed_bigram_is_returned_verbatim() {
        let m = bigram_fixture();
        let (a, b) = (m.token("a").unwrap(), m.token("b").unwrap());
        let lp = m.cond_log_prob(&[a], b).unwrap();
        assert!((lp - (-0.2 * std::f64::consts::LN_10)).abs() < 1e-12);
    }

    #[test]
    fn missing_bigram_backs_off() {
        let m = bigram_fixture();
        let (a, c) = (m.token("a").unwrap(), m.token("c").unwrap());
        let lp = m.cond_log_prob(&[a], c).unwrap();
        let expected = (-0.3 + -0.4) * std::f64::consts::LN_10;
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_context_uses_unigram() {
        let m = bigram_fixture();
        let c = m.token("c").unwrap();
        let lp = m.cond_log_prob(&[], c).unwrap();
        assert_eq!(lp, -0.4 * std::f64::consts::LN_10);
    }

    #[test]
    fn oov_without_unk_is_an_error() {
        let m = bigram_fixture();
        assert_eq!(
            m.resolve("zzz", true),
            Err(NGramError::OutOfVocabulary("zzz".into()))
        );
        let bos = m.bos();
        assert!(matches!(
            m.lm_advance(LmStateId::ROOT, bos),
            Err(NGramError::OutOfVocabulary(_))
        ));
    }

    #[test]
    fn advance_moves_to_listed_context() {
        let m = bigram_fixture();
        let a = m.token("a").unwrap();
        let (s, _) = m.lm_advance(LmStateId::ROOT, a).unwrap();
        assert_eq!(m.state_context(s), vec![a]);
    }

    #[test]
    fn order_one_model_always_returns_root() {
        let mut b = NGramModelBuilder::new();
        for w in ["w", "x", "y", "z"] {
            b.add(&[w], e(0.25f64.log10(), 0.0)).unwrap();
        }
        let m = b.build();
        assert_eq!(m.order(), 1);
        for w in ["w", "x", "y", "z"] {
            let t = m.token(w).unwrap();
            let (s, lp) = m.lm_advance(LmStateId::ROOT, t).unwrap();
            assert_eq!(s, LmStateId::ROOT);
            assert!((lp - 0.25f64.ln()).abs() < 1e-12);
            assert!((m.cond_log_prob(&[t, t, t], t).unwrap() - 0.25f64.ln()).abs() < 1e-12);
        }
        assert_eq!(m.start_state(true), LmStateId::ROOT);
    }

    #[test]
    fn start_state_rules() {
        let m = bigram_fixture();
        assert_eq!(m.start_state(false), LmStateId::ROOT);
        // no <s> listed
        assert_eq!(m.start_state(true), LmStateId::ROOT);

        let mut b = NGramModelBuilder::new();
        b.add(&["<s>"], e(-99.0, -0.1)).unwrap();
        b.add(&["a"], e(-0.1, 0.0)).unwrap();
        b.add(&["<s>", "a"], e(-0.1, 0.0)).unwrap();
        let m = b.build();
        let s = m.start_state(true);
        assert_eq!(m.state_context(s), vec![m.bos()]);
    }

    #[test]
    fn builder_rejects_missing_prefix() {
        let mut b = NGramModelBuilder::new();
        b.add(&["a"], e(-0.1, 0.0)).unwrap();
        b.add(&["b"], e(-0.1, 0.0)).unwrap();
        assert_eq!(
            b.add(&["a", "b", "a"], e(-0.1, 0.0)),
            Err(NGramError::MissingPrefix("a b a".into()))
        );
        assert_eq!(
            b.add(&["a", "q"], e(-0.1, 0.0)),
            Err(NGramError::UnknownWord("q".into()))
        );
    }

    #[test]
    fn state_count_is_bounded_by_entries() {
        let m = bigram_fixture();
        assert!(m.num_states() <= m.num_entries() + 1);
        assert_eq!(m.num_states(), 4);
    }

    #[test]
    fn validate_flags_excess_mass() {
        let mut b = NGramModelBuilder::new();
        b.add(&["a"], e(-0.1, 0.0)).unwrap();
        b.add(&["b"], e(-0.1, 0.0)).unwrap();
        assert!(matches!(b.build().validate(), Err(NGramError::Invariant(_))));
        assert!(bigram_fixture().validate().is_ok());
    }
}
