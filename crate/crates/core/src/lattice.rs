//! Segmentation lattices over a word vocabulary.
//!
//! For a character sequence of length m the lattice has states 0..=m, where
//! state i sits after i characters. Every substring that is a vocabulary word
//! becomes a weight-0 arc from its start position to its end position, so the
//! accepting paths are exactly the segmentations of the sequence into words.
//!
//! Characters are Unicode scalar values; positions never count bytes.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc as Shared;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::symbols::{SymbolTable, TokenId};
use crate::wfsa::{Arc, Label, Wfsa};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("empty character sequence")]
    EmptyInput,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("no segmentation covers character `{ch}` at position {position}")]
    Uncovered { ch: char, position: usize },
    #[error("vocabulary line {line}: word `{word}` contains whitespace")]
    InvalidWord { line: usize, word: String },
    #[error("byte-order mark is not accepted")]
    ByteOrderMark,
}

/// Word vocabulary with interned labels (label 0 is epsilon).
#[derive(Debug, Clone)]
pub struct Vocabulary {
    symbols: SymbolTable,
    index: FxHashMap<Vec<char>, Label>,
    max_word_len: usize,
    char_cover: HashSet<char>,
}

impl Vocabulary {
    /// Builds a vocabulary; duplicates are dropped, first occurrence wins.
    pub fn new<I, S>(words: I) -> Result<Self, LatticeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut symbols = SymbolTable::new();
        let mut index = FxHashMap::default();
        let mut max_word_len = 0;
        let mut char_cover = HashSet::new();
        for (i, w) in words.into_iter().enumerate() {
            let w = w.as_ref();
            if w.is_empty() {
                continue;
            }
            if w.chars().any(char::is_whitespace) {
                return Err(LatticeError::InvalidWord {
                    line: i + 1,
                    word: w.to_owned(),
                });
            }
            let chars: Vec<char> = w.chars().collect();
            if index.contains_key(&chars) {
                continue;
            }
            max_word_len = max_word_len.max(chars.len());
            if chars.len() == 1 {
                char_cover.insert(chars[0]);
            }
            index.insert(chars, symbols.intern(w).0);
        }
        if index.is_empty() {
            return Err(LatticeError::EmptyVocabulary);
        }
        Ok(Vocabulary {
            symbols,
            index,
            max_word_len,
            char_cover,
        })
    }

    /// Parses the one-word-per-line format; `#` lines and blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, LatticeError> {
        if text.starts_with('\u{feff}') {
            return Err(LatticeError::ByteOrderMark);
        }
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let w = line.trim();
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            if w.chars().any(char::is_whitespace) {
                return Err(LatticeError::InvalidWord {
                    line: i + 1,
                    word: w.to_owned(),
                });
            }
            words.push(w);
        }
        Vocabulary::new(words)
    }

    pub fn lookup(&self, chars: &[char]) -> Option<Label> {
        self.index.get(chars).copied()
    }

    pub fn word(&self, label: Label) -> Option<&str> {
        self.symbols.symbol(TokenId(label))
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn max_word_len(&self) -> usize {
        self.max_word_len
    }

    pub fn covers(&self, c: char) -> bool {
        self.char_cover.contains(&c)
    }

    /// True when every character of `chars` is a single-character word.
    pub fn is_decoder_compatible<I: IntoIterator<Item = char>>(&self, chars: I) -> bool {
        chars.into_iter().all(|c| self.covers(c))
    }

    pub fn words(&self) -> impl Iterator<Item = (Label, &str)> {
        self.symbols.iter().skip(1).map(|(t, s)| (t.0, s))
    }
}

/// Lattice of all segmentations of one character sequence.
#[derive(Debug, Clone)]
pub struct SegmentationLattice {
    vocab: Shared<Vocabulary>,
    chars: Vec<char>,
    arcs: Vec<Arc>,
    fsa: Wfsa,
}

impl PartialEq for SegmentationLattice {
    fn eq(&self, other: &Self) -> bool {
        self.chars == other.chars && self.fsa == other.fsa
    }
}

/// Word arcs ending after `chars[..end]`, shortest word first.
fn arcs_ending_at<'a>(
    vocab: &'a Vocabulary,
    chars: &'a [char],
    end: usize,
) -> impl Iterator<Item = Arc> + 'a {
    (1..=vocab.max_word_len().min(end)).filter_map(move |r| {
        let start = end - r;
        vocab
            .lookup(&chars[start..end])
            .map(|label| Arc::new(start as u32, end as u32, label, 0.0))
    })
}

impl SegmentationLattice {
    /// The lattice of the empty sequence: one state, final.
    pub fn empty(vocab: Shared<Vocabulary>) -> Self {
        Self::from_arcs(vocab, Vec::new(), Vec::new())
    }

    fn from_arcs(vocab: Shared<Vocabulary>, chars: Vec<char>, arcs: Vec<Arc>) -> Self {
        let m = chars.len() as u32;
        let fsa = Wfsa::from_parts(m + 1, 0, arcs.clone(), BTreeMap::from([(m, 0.0)]))
            .expect("lattice arcs stay within 0..=m");
        SegmentationLattice {
            vocab,
            chars,
            arcs,
            fsa,
        }
    }

    /// Builds the lattice of `chars`. Arcs are ordered by end position, then
    /// by word length.
    pub fn build(chars: &[char], vocab: Shared<Vocabulary>) -> Result<Self, LatticeError> {
        if chars.is_empty() {
            return Err(LatticeError::EmptyInput);
        }
        let lattice = Self::from_chars(chars, vocab);
        lattice.check_coverage()?;
        Ok(lattice)
    }

    /// Like [`SegmentationLattice::build`] without the input and coverage
    /// checks; the final state may be unreachable.
    pub fn from_chars(chars: &[char], vocab: Shared<Vocabulary>) -> Self {
        let arcs: Vec<Arc> = (1..=chars.len())
            .flat_map(|end| arcs_ending_at(&vocab, chars, end))
            .collect();
        Self::from_arcs(vocab, chars.to_vec(), arcs)
    }

    /// Convenience wrapper over [`SegmentationLattice::build`] for strings.
    pub fn build_str(text: &str, vocab: Shared<Vocabulary>) -> Result<Self, LatticeError> {
        let chars: Vec<char> = text.chars().collect();
        Self::build(&chars, vocab)
    }

    /// A new lattice for `chars + c`; only arcs ending at the new state are
    /// added. Coverage is not checked.
    pub fn extend(&self, c: char) -> Self {
        let mut chars = self.chars.clone();
        chars.push(c);
        let mut arcs = self.arcs.clone();
        arcs.extend(arcs_ending_at(&self.vocab, &chars, chars.len()));
        Self::from_arcs(self.vocab.clone(), chars, arcs)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn vocab(&self) -> &Shared<Vocabulary> {
        &self.vocab
    }

    pub fn fsa(&self) -> &Wfsa {
        &self.fsa
    }

    /// Errors when the final state is unreachable, naming the character at
    /// the furthest reachable position.
    pub fn check_coverage(&self) -> Result<(), LatticeError> {
        let m = self.chars.len();
        let mut reachable = vec![false; m + 1];
        reachable[0] = true;
        // arcs are sorted by end position, so sources are settled first
        for arc in &self.arcs {
            if reachable[arc.src as usize] {
                reachable[arc.dst as usize] = true;
            }
        }
        if reachable[m] {
            return Ok(());
        }
        let position = (0..m).rev().find(|&p| reachable[p]).unwrap_or(0);
        Err(LatticeError::Uncovered {
            ch: self.chars[position],
            position,
        })
    }

    /// Every segmentation as a word list, in label order.
    pub fn segmentations(&self, limit: usize) -> Result<Vec<Vec<String>>, crate::wfsa::WfsaError> {
        Ok(self
            .fsa
            .enumerate_paths(limit)?
            .into_iter()
            .map(|p| {
                p.labels
                    .iter()
                    .map(|&l| self.vocab.word(l).unwrap_or("?").to_owned())
                    .collect()
            })
            .collect())
    }
}

/// Greedy left-to-right longest-match segmentation.
pub fn segment_longest_match(text: &str, vocab: &Vocabulary) -> Result<Vec<String>, LatticeError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let longest = vocab.max_word_len().min(chars.len() - i);
        let r = (1..=longest)
            .rev()
            .find(|&r| vocab.lookup(&chars[i..i + r]).is_some())
            .ok_or(LatticeError::Uncovered {
                ch: chars[i],
                position: i,
            })?;
        out.push(chars[i..i + r].iter().collect());
        i += r;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sunwukong_vocab() -> Shared<Vocabulary> {
        Shared::new(Vocabulary::new(["孙", "悟", "空", "悟空", "孙悟空"]).unwrap())
    }

    fn arc_triples(l: &SegmentationLattice) -> Vec<(u32, u32, String)> {
        l.fsa()
            .arcs()
            .iter()
            .map(|a| (a.src, a.dst, l.vocab().word(a.label).unwrap().to_owned()))
            .collect()
    }

    #[test]
    fn sunwukong_lattice() {
        let l = SegmentationLattice::build_str("孙悟空", sunwukong_vocab()).unwrap();
        assert_eq!(
            arc_triples(&l),
            vec![
                (0, 1, "孙".into()),
                (1, 2, "悟".into()),
                (2, 3, "空".into()),
                (1, 3, "悟空".into()),
                (0, 3, "孙悟空".into()),
            ]
        );
        assert!(l.fsa().arcs().iter().all(|a| a.weight == 0.0));
        let segs = l.segmentations(10).unwrap();
        assert_eq!(
            segs,
            vec![
                vec!["孙", "悟", "空"],
                vec!["孙", "悟空"],
                vec!["孙悟空"],
            ]
        );
    }

    #[test]
    fn single_character() {
        let l = SegmentationLattice::build_str("空", sunwukong_vocab()).unwrap();
        assert_eq!(l.fsa().arcs().len(), 1);
        assert_eq!(l.fsa().count_paths().unwrap(), 1);
    }

    #[test]
    fn extend_matches_batch() {
        let v = sunwukong_vocab();
        let two = SegmentationLattice::build_str("孙悟", v.clone()).unwrap();
        let three = two.extend('空');
        assert_eq!(three, SegmentationLattice::build_str("孙悟空", v.clone()).unwrap());
        // parent untouched
        assert_eq!(two.chars().len(), 2);
        assert_eq!(two.fsa().arcs().len(), 2);

        let one = SegmentationLattice::empty(v).extend('孙');
        assert_eq!(one.fsa().arcs().len(), 1);
    }

    #[test]
    fn uncovered_character_is_named() {
        let e = SegmentationLattice::build_str("孙猴空", sunwukong_vocab()).unwrap_err();
        assert_eq!(e, LatticeError::Uncovered { ch: '猴', position: 1 });
        // extend defers the error
        let l = SegmentationLattice::empty(sunwukong_vocab()).extend('猴');
        assert!(l.check_coverage().is_err());
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(
            SegmentationLattice::build(&[], sunwukong_vocab()).unwrap_err(),
            LatticeError::EmptyInput
        );
        assert_eq!(
            Vocabulary::new(Vec::<String>::new()).unwrap_err(),
            LatticeError::EmptyVocabulary
        );
    }

    #[test]
    fn vocabulary_file_format() {
        let v = Vocabulary::parse("# comment\n孙\n\n悟空\n孙\n  空  \n").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.max_word_len(), 2);
        assert!(v.covers('孙') && v.covers('空') && !v.covers('悟'));
        assert!(!v.is_decoder_compatible("孙悟空".chars()));
        assert_eq!(Vocabulary::parse("\u{feff}孙\n").unwrap_err(), LatticeError::ByteOrderMark);
        assert!(matches!(
            Vocabulary::parse("孙\n悟 空\n"),
            Err(LatticeError::InvalidWord { line: 2, .. })
        ));
    }

    #[test]
    fn longest_match() {
        let v = sunwukong_vocab();
        assert_eq!(segment_longest_match("孙悟空", &v).unwrap(), vec!["孙悟空"]);
        assert_eq!(segment_longest_match("空孙", &v).unwrap(), vec!["空", "孙"]);
        assert_eq!(
            segment_longest_match("孙x", &v).unwrap_err(),
            LatticeError::Uncovered { ch: 'x', position: 1 }
        );
    }

    #[test]
    fn arcs_respect_window() {
        let v = Shared::new(Vocabulary::new(["a", "aa", "aaa"]).unwrap());
        let l = SegmentationLattice::build_str("aaaaaa", v).unwrap();
        assert!(l.fsa().arcs().iter().all(|a| a.dst > a.src && a.dst - a.src <= 3));
        assert!(l.fsa().arcs().len() <= 6 * 3);
    }
}
