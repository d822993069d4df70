mod common;

use common::{bm25_oracle as oracle, close, random_corpus, random_query};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sciverify::data::{Corpus, Document};
use sciverify::retrieval::{search, Bm25Params, InvertedIndex};
use sciverify::text::analyze;

fn sc(index: &InvertedIndex, query: &str, doc: u64) -> f64 {
    index.score(&analyze(query), doc).unwrap()
}

#[test]
fn hand_evaluated_three_document_corpus() {
    // doc lengths 2, 4, 3; avg 3; query "zinc" appears once in docs 1 and 2.
    let corpus = Corpus::new([
        Document {
            doc_id: 1,
            title: "zinc".into(),
            sentences: vec!["trial".into()],
        },
        Document {
            doc_id: 2,
            title: "zinc zinc".into(),
            sentences: vec!["cold risk".into()],
        },
        Document {
            doc_id: 3,
            title: "placebo".into(),
            sentences: vec!["dose risk".into()],
        },
    ])
    .unwrap();
    let index = InvertedIndex::build(&corpus, Bm25Params::default()).unwrap();
    let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5)).ln();
    let s1 = idf * 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / 3.0));
    let s2 = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 4.0 / 3.0));
    assert!(close(sc(&index, "zinc", 1), s1));
    assert!(close(sc(&index, "Zinc!", 2), s2));
    assert_eq!(sc(&index, "zinc", 3), 0.0);
    let hits = search(&index, "zinc", 3);
    assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![2, 1, 3]);
}

#[test]
fn scores_match_closed_form() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus = random_corpus(&mut rng);
        let (k1, b) = (rng.gen_range(0.5..2.0), rng.gen_range(0.0..=1.0));
        let index = InvertedIndex::build(&corpus, Bm25Params::new(k1, b).unwrap()).unwrap();
        let query = random_query(&mut rng);
        for (doc, expected) in oracle(&corpus, &query, k1, b) {
            let got = sc(&index, &query, doc);
            assert!(
                close(got, expected),
                "seed {seed} doc {doc}: {got} vs {expected}"
            );
        }
    }
}

fn exhaustive(corpus: &Corpus, query: &str, k: usize) -> Vec<u64> {
    let mut all: Vec<(u64, f64)> = oracle(corpus, query, 1.2, 0.75).into_iter().collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter().take(k).map(|(d, _)| d).collect()
}

#[test]
fn search_matches_exhaustive_sort() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
        let corpus = random_corpus(&mut rng);
        let index = InvertedIndex::build(&corpus, Bm25Params::default()).unwrap();
        let query = random_query(&mut rng);
        let k = rng.gen_range(1..=60);
        let got: Vec<u64> = search(&index, &query, k)
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        assert_eq!(got, exhaustive(&corpus, &query, k), "seed {seed}");
    }
}

proptest! {
    #[test]
    fn results_are_sorted_and_bounded(seed in any::<u64>(), k in 0usize..70) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus = random_corpus(&mut rng);
        let index = InvertedIndex::build(&corpus, Bm25Params::default()).unwrap();
        let hits = search(&index, &random_query(&mut rng), k);
        prop_assert_eq!(hits.len(), k.min(corpus.len()));
        for w in hits.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn scores_are_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus = random_corpus(&mut rng);
        let index = InvertedIndex::build(&corpus, Bm25Params::default()).unwrap();
        let query = random_query(&mut rng);
        for doc in corpus.doc_ids() {
            prop_assert!(sc(&index, &query, doc) >= 0.0);
        }
    }
}
