mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::{segmentations, ALPHABET};
use lattice_fusion::lattice::{SegmentationLattice, Vocabulary};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::collection::vec(0..ALPHABET.len(), 1..=4)
        .prop_map(|ix| ix.into_iter().map(|i| ALPHABET[i]).collect())
}

fn instance() -> impl Strategy<Value = (Vec<char>, BTreeSet<String>)> {
    (
        prop::collection::vec(0..ALPHABET.len(), 1..=12)
            .prop_map(|ix| ix.into_iter().map(|i| ALPHABET[i]).collect::<Vec<char>>()),
        prop::collection::btree_set(word(), 1..=50),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn paths_equal_brute_force((chars, words) in instance()) {
        let vocab = Arc::new(Vocabulary::new(&words).unwrap());
        let lattice = SegmentationLattice::from_chars(&chars, vocab);
        let mut got = lattice.segmentations(1 << 20).unwrap();
        let mut expected = segmentations(&chars, &words);
        got.sort();
        expected.sort();
        prop_assert_eq!(&got, &expected);
        prop_assert_eq!(lattice.fsa().count_paths().unwrap(), expected.len() as u128);
        prop_assert_eq!(lattice.check_coverage().is_ok(), !expected.is_empty());
    }

    #[test]
    fn labels_concatenate_to_input((chars, words) in instance()) {
        let vocab = Arc::new(Vocabulary::new(&words).unwrap());
        let lattice = SegmentationLattice::from_chars(&chars, vocab);
        let input: String = chars.iter().collect();
        for seg in lattice.segmentations(1 << 20).unwrap() {
            prop_assert_eq!(seg.concat(), input.clone());
        }
    }

    #[test]
    fn arcs_are_forward_and_bounded((chars, words) in instance()) {
        let vocab = Arc::new(Vocabulary::new(&words).unwrap());
        let l = vocab.max_word_len() as u32;
        let lattice = SegmentationLattice::from_chars(&chars, vocab);
        let arcs = lattice.fsa().arcs();
        prop_assert!(arcs.len() <= chars.len() * l as usize);
        for a in arcs {
            prop_assert!(a.dst > a.src && a.dst - a.src <= l);
            prop_assert_eq!(a.weight, 0.0);
        }
    }

    #[test]
    fn extend_fold_equals_batch((chars, words) in instance()) {
        let vocab = Arc::new(Vocabulary::new(&words).unwrap());
        let batch = SegmentationLattice::from_chars(&chars, vocab.clone());
        let folded = chars
            .iter()
            .fold(SegmentationLattice::empty(vocab), |lat, &c| lat.extend(c));
        prop_assert_eq!(folded.fsa().arcs(), batch.fsa().arcs());
        prop_assert_eq!(folded, batch);
    }
}

#[test]
fn sunwukong_extend_matches_batch() {
    let vocab = Arc::new(Vocabulary::new(["孙", "悟", "空", "悟空", "孙悟空"]).unwrap());
    let two = SegmentationLattice::build_str("孙悟", vocab.clone()).unwrap();
    assert_eq!(
        two.extend('空'),
        SegmentationLattice::build_str("孙悟空", vocab).unwrap()
    );
}
