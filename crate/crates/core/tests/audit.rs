mod common;

use common::{brute_audit, brute_sbc, random_document};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wlcoref::corpus::{Document, ROOT};
use wlcoref::metrics::{audit, AuditReport, OrderConvention};

fn random_corpus(seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_docs = rng.gen_range(0..=4);
    (0..n_docs)
        .map(|i| random_document(&mut rng, &format!("d{i}"), 50, 20))
        .collect()
}

pub fn fixture() -> Document {
    Document {
        doc_id: "fixture".into(),
        genre: "nw".into(),
        sentences: vec![
            vec!["a".into(), "b".into(), "c".into()],
            vec!["d".into(), "e".into(), "f".into(), "g".into()],
        ],
        speakers: vec![vec![String::new(); 3], vec![String::new(); 4]],
        dep_head: vec![vec![ROOT; 3], vec![ROOT; 4]],
        clusters: vec![],
    }
}

#[test]
fn two_sentence_fixture() {
    let r = audit(&[fixture()], OrderConvention::Lexicographic);
    assert_eq!(
        (r.wl_mentions, r.wl_pairs, r.sl_mentions, r.sl_pairs),
        (7, 21, 16, 120)
    );
    assert_eq!(r.span_boundary_candidates, 0);
}

#[test]
fn empty_corpus_is_all_zero() {
    let r = audit(&[], OrderConvention::Lexicographic);
    assert_eq!(
        r,
        AuditReport {
            convention: OrderConvention::Lexicographic,
            ..Default::default()
        }
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn counts_equal_enumeration(seed in any::<u64>()) {
        let docs = random_corpus(seed);
        prop_assume!(docs.iter().map(Document::num_words).sum::<usize>() <= 200);
        let brute = brute_audit(&docs);
        let lex = audit(&docs, OrderConvention::Lexicographic);
        let strict = audit(&docs, OrderConvention::StrictlyPrecedes);
        prop_assert_eq!(lex.wl_mentions, brute.wl_mentions);
        prop_assert_eq!(lex.wl_pairs, brute.wl_pairs);
        prop_assert_eq!(lex.sl_mentions, brute.sl_mentions);
        prop_assert_eq!(lex.sl_pairs, brute.sl_pairs_lexicographic);
        prop_assert_eq!(strict.sl_pairs, brute.sl_pairs_strict);
        prop_assert_eq!(lex.span_boundary_candidates, brute_sbc(&docs));
        prop_assert!(lex.wl_mentions <= lex.sl_mentions);
        if docs.iter().any(|d| d.sentences.iter().any(|s| s.len() >= 2)) {
            prop_assert!(lex.wl_pairs <= lex.sl_pairs);
        }
    }
}
