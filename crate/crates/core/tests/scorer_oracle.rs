mod common;

use std::sync::Arc;

use common::*;
use lattice_fusion::lattice::Vocabulary;
use lattice_fusion::ngram::{train_toy_lm, NGramModel};
use lattice_fusion::scorer::{CompositionMode, ScorerConfig, WordLatticeScorer};
use lattice_fusion::wfsa::Semiring;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    model: Arc<NGramModel>,
    vocab: Arc<Vocabulary>,
    words: std::collections::BTreeSet<String>,
    chars: Vec<char>,
}

fn fixture(seed: u64, compatible: bool) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = random_vocab(&mut rng, 12, 3, compatible);
    // train on a subset so some lattice words fall back to <unk>
    let mut lm_words = words.clone();
    lm_words.retain(|w| w.len() == 1 || w.as_bytes()[0] != b'e');
    let corpus = random_corpus(&mut rng, &lm_words, 20);
    let order = 1 + (seed % 3) as usize + usize::from(seed.is_multiple_of(5));
    let model = train_toy_lm(&corpus, order, random_smoothing(&mut rng)).unwrap();
    let chars = random_string(&mut rng, 10);
    Fixture {
        model: Arc::new(model),
        vocab: Arc::new(Vocabulary::new(&words).unwrap()),
        words,
        chars,
    }
}

fn config(semiring: Semiring, bos: bool, eos: bool, mode: CompositionMode) -> ScorerConfig {
    ScorerConfig {
        semiring,
        bos,
        eos,
        mode,
        ..Default::default()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Batch score against segmentations scored one by one.
    #[test]
    fn batch_matches_enumeration(seed in any::<u64>(), bos: bool, eos: bool) {
        let f = fixture(seed, seed % 4 != 0);
        let scores: Vec<f64> = segmentations(&f.chars, &f.words)
            .iter()
            .map(|seg| chain_score(&f.model, seg, bos, eos))
            .collect();
        for (semiring, expected) in [(Semiring::Log, log_sum(scores.clone())), (Semiring::Tropical, max(scores.clone()))] {
            let sc = WordLatticeScorer::new(f.model.clone(), f.vocab.clone(), config(semiring, bos, eos, CompositionMode::Lazy)).unwrap();
            let got = sc.score_sequence(&f.chars).unwrap();
            prop_assert!(close(got, expected, 1e-9), "{semiring}: {got} vs {expected}");
        }
    }

    /// Every prefix: incremental cached score equals the batch score, and
    /// posteriors telescope.
    #[test]
    fn incremental_matches_batch(seed in any::<u64>(), bos: bool, eos: bool, explicit: bool) {
        let f = fixture(seed, seed % 4 != 0);
        let mode = if explicit { CompositionMode::ExplicitBackoff } else { CompositionMode::Lazy };
        for semiring in [Semiring::Log, Semiring::Tropical] {
            let sc = WordLatticeScorer::new(f.model.clone(), f.vocab.clone(), config(semiring, bos, eos, mode)).unwrap();
            let mut state = sc.init_state();
            prop_assert!(close(state.score(), sc.score_prefix(&[]).unwrap(), 1e-9));
            let mut posteriors = Vec::new();
            for m in 1..=f.chars.len() {
                let (next, p) = sc.advance(&state, f.chars[m - 1]);
                posteriors.push(p);
                state = next;
                let batch = sc.score_prefix(&f.chars[..m]).unwrap();
                prop_assert!(close(state.score(), batch, 1e-9), "{semiring} m={m}: {} vs {batch}", state.score());
            }
            let batch = sc.score_sequence(&f.chars).unwrap();
            prop_assert!(close(sc.finalize(&state), batch, 1e-9));
            if state.score().is_finite() && posteriors.iter().all(|p| p.is_finite()) {
                let start = sc.init_state().score();
                let sum = posteriors.iter().fold(start, |acc, p| acc + p);
                prop_assert!((sum - state.score()).abs() < 1e-9);
            }
        }
    }

    /// Log never scores below tropical.
    #[test]
    fn log_dominates_tropical(seed in any::<u64>()) {
        let f = fixture(seed, true);
        let log = WordLatticeScorer::new(f.model.clone(), f.vocab.clone(), config(Semiring::Log, true, true, CompositionMode::Lazy)).unwrap();
        let trop = WordLatticeScorer::new(f.model.clone(), f.vocab.clone(), config(Semiring::Tropical, true, true, CompositionMode::Lazy)).unwrap();
        prop_assert!(log.score_sequence(&f.chars).unwrap() >= trop.score_sequence(&f.chars).unwrap());
    }
}

#[test]
fn compatible_vocab_gives_finite_scores() {
    for seed in 0..50 {
        let f = fixture(seed, true);
        let sc = WordLatticeScorer::new(f.model, f.vocab, ScorerConfig::default()).unwrap();
        let (state, posteriors) = sc.score_incremental(&f.chars);
        assert!(state.score().is_finite());
        assert!(posteriors.iter().all(|p| p.is_finite()));
    }
}

#[test]
fn explicit_mode_never_scores_below_lazy() {
    // the backoff paths only add mass
    for seed in 0..50 {
        let f = fixture(seed, true);
        let lazy = WordLatticeScorer::new(f.model.clone(), f.vocab.clone(), ScorerConfig::default()).unwrap();
        let explicit = WordLatticeScorer::new(
            f.model,
            f.vocab,
            config(Semiring::Log, false, false, CompositionMode::ExplicitBackoff),
        )
        .unwrap();
        let a = lazy.score_sequence(&f.chars).unwrap();
        let b = explicit.score_sequence(&f.chars).unwrap();
        assert!(b >= a - 1e-12, "seed {seed}: {b} < {a}");
    }
}
