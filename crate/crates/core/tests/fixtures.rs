//! The shipped fixtures must stay in sync with the generators
//! (`cargo run -p sciverify --example make_fixtures -- fixtures`).

use std::fs;
use std::path::{Path, PathBuf};

use sciverify::data::{save_claims, save_corpus, save_predictions, write_jsonl};
use sciverify::synthetic::{category_fixture, keyword_dataset, CategoryCounts, KeywordSpec};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn same(shipped: &str, write: impl FnOnce(&Path)) {
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("f");
    write(&fresh);
    assert_eq!(
        fs::read(fixtures().join(shipped)).unwrap(),
        fs::read(&fresh).unwrap(),
        "{shipped} is stale; rerun make_fixtures"
    );
}

#[test]
fn synthetic_fixture_matches_generator() {
    let data = keyword_dataset(&KeywordSpec::default());
    same("synthetic/corpus.jsonl", |p| {
        save_corpus(p, &data.corpus).unwrap()
    });
    same("synthetic/train.jsonl", |p| {
        save_claims(p, &data.train).unwrap()
    });
    same("synthetic/dev.jsonl", |p| {
        save_claims(p, &data.dev).unwrap()
    });
}

#[test]
fn category_fixture_matches_generator() {
    let fx = category_fixture(&CategoryCounts::default(), 5);
    same("category/gold.jsonl", |p| save_claims(p, &fx.gold).unwrap());
    same("category/predictions.jsonl", |p| {
        save_predictions(p, &fx.predictions).unwrap()
    });
    same("category/annotations.jsonl", |p| {
        write_jsonl(p, &fx.annotations).unwrap()
    });
}
