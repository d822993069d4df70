use std::collections::BTreeSet;
use std::path::Path;

use sciverify::data::{save_claims, save_corpus, Claim, DocEvidence, Provenance};
use sciverify::eval::Variant;
use sciverify::synthetic::{keyword_dataset, KeywordSpec};
use sciverify::training::{
    build_instances, run_stage, sample_few_shot, tune_lambda, BatchEvent, DatasetSpec, FewShotSpec,
    ModelShape, Schedule, StageConfig, Trainer,
};
use sciverify::verifier::{Checkpoint, EncoderConfig, LossConfig, Verifier, Vocab};

fn small_shape() -> ModelShape {
    ModelShape {
        hidden: 16,
        layers: 1,
        heads: 2,
        ffn: 24,
        window: 8,
        head_hidden: 12,
    }
}

fn strip_rationales(claim: &Claim) -> Claim {
    let mut c = claim.clone();
    for ev in c.evidence.values_mut() {
        *ev = DocEvidence::label_only(ev.label);
    }
    c.cited_doc_ids = c.evidence.keys().copied().collect();
    c.provenance = Provenance::WeakTitle;
    c
}

/// Writes claims/corpus files and returns a config training on them.
fn config_for(dir: &Path, sets: &[(&str, &[Claim])], dev: Option<&[Claim]>) -> StageConfig {
    let data = keyword_dataset(&KeywordSpec::default());
    let corpus = dir.join("corpus.jsonl");
    save_corpus(&corpus, &data.corpus).unwrap();
    let datasets = sets
        .iter()
        .map(|(name, claims)| {
            let path = dir.join(format!("{name}.jsonl"));
            save_claims(&path, claims).unwrap();
            DatasetSpec {
                claims: path,
                corpus: corpus.clone(),
                weight: 1.0,
                negatives: None,
            }
        })
        .collect();
    let dev = dev.map(|claims| {
        let path = dir.join("dev.jsonl");
        save_claims(&path, claims).unwrap();
        (path, corpus.clone())
    });
    StageConfig {
        datasets,
        dev,
        epochs: 2,
        batch_size: 4,
        learning_rate: 1e-3,
        max_length: 96,
        model: small_shape(),
        ..StageConfig::default()
    }
}

#[test]
fn rationale_head_moves_only_on_rationale_batches() {
    let data = keyword_dataset(&KeywordSpec::default());
    let bearing: Vec<Claim> = data.train[..15]
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.cited_doc_ids = c.evidence.keys().copied().collect();
            c
        })
        .collect();
    let absent: Vec<Claim> = data.train[15..30].iter().map(strip_rationales).collect();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_for(
        dir.path(),
        &[("bearing", &bearing), ("absent", &absent)],
        None,
    );
    cfg.batch_size = 1;
    let mut events: Vec<BatchEvent> = Vec::new();
    let mut record = |e: &BatchEvent| events.push(*e);
    run_stage(&cfg, Some(&mut record)).unwrap();
    let (with, without): (Vec<&BatchEvent>, Vec<&BatchEvent>) =
        events.iter().partition(|e| e.rationale_bearing > 0);
    assert!(!with.is_empty() && !without.is_empty());
    for e in &without {
        assert_eq!(e.rationale_head_delta, 0.0, "{e:?}");
    }
    for e in with.iter().filter(|e| e.learning_rate > 0.0) {
        assert!(e.rationale_head_delta > 0.0, "{e:?}");
    }
}

#[test]
fn resumed_training_is_bit_identical() {
    let data = keyword_dataset(&KeywordSpec::default());
    let vocab = Vocab::build(
        data.corpus
            .iter()
            .map(|d| d.title.as_str())
            .chain(data.train.iter().map(|c| c.text.as_str())),
        500,
    );
    let mut enc = EncoderConfig::toy(vocab.len());
    enc.hidden = 8;
    enc.ffn = 12;
    enc.head_hidden = 6;
    enc.max_length = 64;
    let verifier = Verifier::new(vocab, enc, 3).unwrap();
    let instances = build_instances(
        &data.train[..6],
        &data.corpus,
        &Default::default(),
        &verifier,
    )
    .unwrap();
    let batches: Vec<Vec<_>> = instances.chunks(3).map(|c| c.iter().collect()).collect();
    let schedule = Schedule::new(1e-3, batches.len() as u64, 0.25);

    let mut straight = Trainer::new(verifier, LossConfig::default(), schedule);
    for b in &batches[..batches.len() - 1] {
        straight.train_batch(b).unwrap();
    }
    let saved = Checkpoint::from_json(&straight.checkpoint(3, vec![]).to_json()).unwrap();
    let mut resumed = Trainer::resume(&saved, schedule);
    let last = batches.last().unwrap();
    straight.train_batch(last).unwrap();
    resumed.train_batch(last).unwrap();
    assert_eq!(
        resumed.verifier.model.params,
        straight.verifier.model.params
    );
    assert_eq!(resumed.adam.state, straight.adam.state);
}

#[test]
fn same_seed_same_model() {
    let data = keyword_dataset(&KeywordSpec::default());
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_for(
        dir.path(),
        &[("train", &data.train[..20])],
        Some(&data.dev[..10]),
    );
    let a = run_stage(&cfg, None).unwrap();
    let b = run_stage(&cfg, None).unwrap();
    assert_eq!(a.checkpoint.to_json(), b.checkpoint.to_json());
    assert_eq!(a.log, b.log);
    let other = StageConfig { seed: 9, ..cfg };
    assert_ne!(
        run_stage(&other, None)
            .unwrap()
            .checkpoint
            .verifier
            .model
            .params,
        a.checkpoint.verifier.model.params
    );
}

#[test]
fn learns_the_keyword_task() {
    let data = keyword_dataset(&KeywordSpec {
        n_claims: 250,
        n_dev: 50,
        ..KeywordSpec::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_for(dir.path(), &[("train", &data.train)], Some(&data.dev));
    cfg.epochs = 12;
    cfg.batch_size = 8;
    cfg.max_length = 128;
    cfg.model = ModelShape {
        hidden: 32,
        ffn: 64,
        head_hidden: 32,
        ..ModelShape::default()
    };
    // Claims here are generated from their own corpus, not the default one.
    let corpus = dir.path().join("corpus.jsonl");
    save_corpus(&corpus, &data.corpus).unwrap();
    let out = run_stage(&cfg, None).unwrap();
    let results = out.dev_results.unwrap();
    let f1 = |v| results.iter().find(|r| r.variant == v).unwrap().f1;
    assert!(f1(Variant::AbstractLabelOnly) >= 0.9, "{results:?}");
    assert!(f1(Variant::SentenceSelectionOnly) >= 0.85, "{results:?}");
}

#[test]
fn lambda_search_is_order_invariant() {
    let data = keyword_dataset(&KeywordSpec::default());
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_for(
        dir.path(),
        &[("train", &data.train[..12])],
        Some(&data.dev[..6]),
    );
    cfg.epochs = 1;
    let single = tune_lambda(&[4.0], &cfg).unwrap();
    assert_eq!(single.best_lambda, 4.0);
    assert_eq!(single.entries.len(), 1);
    let a = tune_lambda(&[1.0, 15.0, 4.0], &cfg).unwrap();
    let b = tune_lambda(&[15.0, 4.0, 1.0, 4.0], &cfg).unwrap();
    assert_eq!(a.best_lambda, b.best_lambda);
    assert_eq!(a.entries, b.entries);
    assert_eq!(
        a.entries.iter().map(|e| e.lambda).collect::<Vec<_>>(),
        vec![1.0, 4.0, 15.0]
    );
}

#[test]
fn few_shot_overlap_is_hypergeometric() {
    let data = keyword_dataset(&KeywordSpec::default());
    let claims = &data.train;
    let (big_n, n) = (claims.len() as f64, 45.0);
    let reps = 400;
    let mut total = 0.0;
    for r in 0..reps {
        let ids = |seed| -> BTreeSet<u64> {
            sample_few_shot(
                claims,
                &FewShotSpec {
                    n_examples: 45,
                    seed,
                },
            )
            .unwrap()
            .iter()
            .map(|c| c.id)
            .collect()
        };
        total += ids(2 * r).intersection(&ids(2 * r + 1)).count() as f64;
    }
    let mean = n * n / big_n;
    let var = n * (n / big_n) * ((big_n - n) / big_n) * ((big_n - n) / (big_n - 1.0));
    let observed = total / reps as f64;
    let tol = 3.0 * (var / reps as f64).sqrt();
    assert!(
        (observed - mean).abs() <= tol,
        "{observed} vs {mean} ± {tol}"
    );
}
