//! Regenerates the files under `fixtures/`. Usage: `cargo run -p sciverify
//! --example make_fixtures -- <fixtures-dir>`.

use std::fs;
use std::path::Path;

use sciverify::data::{
    save_claims, save_corpus, write_jsonl, Claim, Corpus, DocEvidence, Document, Provenance,
};
use sciverify::synthetic::{category_fixture, keyword_dataset, CategoryCounts, KeywordSpec};
use sciverify::weak::{Direction, IcoPrompt};

const SYNTHETIC_CONFIG: &str = "\
# Keyword task: learnable by the toy encoder in a few epochs.
name = synthetic
dataset = train.jsonl corpus.jsonl
dev = dev.jsonl corpus.jsonl
epochs = 20
batch_size = 8
learning_rate = 1e-3
max_length = 128
hidden = 32
ffn = 64
head_hidden = 32
";

const GATING_CONFIG: &str = "\
# Half the claims carry rationales, half are label-only.
name = gating
dataset = bearing.jsonl ../synthetic/corpus.jsonl
dataset = absent.jsonl ../synthetic/corpus.jsonl
epochs = 2
batch_size = 1
learning_rate = 1e-3
max_length = 96
hidden = 16
layers = 1
ffn = 24
head_hidden = 12
";

const PIPELINE_CONFIG: &str = "\
name = pipeline
dataset = ../synthetic/train.jsonl ../synthetic/corpus.jsonl
epochs = 8
batch_size = 8
learning_rate = 1e-3
max_length = 96
hidden = 16
layers = 1
ffn = 24
head_hidden = 12
";

fn doc(doc_id: u64, title: &str, sentences: &[&str]) -> Document {
    Document {
        doc_id,
        title: title.into(),
        sentences: sentences.iter().map(|s| s.to_string()).collect(),
    }
}

fn ico_corpus() -> Corpus {
    Corpus::new([
        doc(1, "Vitamin D supplementation reduces fracture risk in older adults", &[
            "Fractures are a major cause of disability in older adults.",
            "We randomised 2400 participants to vitamin D or placebo.",
            "Vitamin D significantly reduced hip fracture incidence compared with placebo.",
            "Adverse events were similar between groups.",
        ]),
        doc(2, "Metformin does not prevent gestational diabetes in obese women", &[
            "Obesity in pregnancy increases the risk of gestational diabetes.",
            "Women were assigned to metformin or placebo from 12 weeks.",
            "Metformin significantly increased gestational weight loss compared with placebo.",
            "Rates of gestational diabetes did not differ.",
        ]),
        doc(3, "Exercise training and cognitive decline: a randomised trial", &[
            "Physical activity may protect cognition.",
            "Aerobic exercise significantly decreased the rate of cognitive decline versus stretching.",
            "Effects persisted at two years.",
        ]),
        doc(4, "Does aspirin cause gastric bleeding?", &[
            "Aspirin is widely used for prevention.",
            "Low dose aspirin significantly increased gastric bleeding events.",
            "Absolute risk remained small.",
        ]),
        doc(5, "Statins are not associated with memory loss", &[
            "Concerns exist about statin cognitive effects.",
            "In 10000 patients, statin use showed no difference in memory scores.",
        ]),
        doc(6, "Sleep deprivation impairs glucose tolerance in healthy men", &[
            "Short sleep is common.",
            "Four nights of restricted sleep significantly decreased insulin sensitivity.",
            "Glucose tolerance recovered after recovery sleep.",
        ]),
        doc(7, "Probiotics do not shorten the duration of acute diarrhea in children", &[
            "Probiotics are often given for gastroenteritis.",
            "Duration of diarrhea did not differ between probiotic and placebo groups.",
        ]),
        doc(8, "Mindfulness training for anxiety", &[
            "Mindfulness programmes are increasingly popular.",
            "Anxiety scores significantly decreased after mindfulness training compared with waitlist.",
        ]),
    ])
    .unwrap()
}

fn ico_prompts() -> Vec<IcoPrompt> {
    let p = |doc_id, i: &str, c: &str, o: &str, direction, r: &[usize]| IcoPrompt {
        doc_id,
        intervention: i.into(),
        comparator: c.into(),
        outcome: o.into(),
        direction,
        rationale_indices: (!r.is_empty()).then(|| r.iter().copied().collect()),
    };
    vec![
        p(
            1,
            "vitamin D",
            "placebo",
            "hip fracture incidence",
            Direction::SigDecreased,
            &[2],
        ),
        p(
            2,
            "metformin",
            "placebo",
            "gestational weight loss",
            Direction::SigIncreased,
            &[2],
        ),
        p(
            3,
            "aerobic exercise",
            "stretching",
            "cognitive decline",
            Direction::SigDecreased,
            &[1],
        ),
        p(
            4,
            "low dose aspirin",
            "",
            "gastric bleeding",
            Direction::SigIncreased,
            &[1],
        ),
        p(
            6,
            "sleep restriction",
            "",
            "insulin sensitivity",
            Direction::SigDecreased,
            &[],
        ),
        p(
            8,
            "mindfulness training",
            "waitlist",
            "anxiety scores",
            Direction::SigDecreased,
            &[1],
        ),
    ]
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let out = Path::new(&out);
    let dir = |name: &str| {
        let d = out.join(name);
        fs::create_dir_all(&d).unwrap();
        d
    };

    let synthetic = dir("synthetic");
    let data = keyword_dataset(&KeywordSpec::default());
    save_corpus(&synthetic.join("corpus.jsonl"), &data.corpus).unwrap();
    save_claims(&synthetic.join("train.jsonl"), &data.train).unwrap();
    save_claims(&synthetic.join("dev.jsonl"), &data.dev).unwrap();
    fs::write(synthetic.join("train.config"), SYNTHETIC_CONFIG).unwrap();

    let gating = dir("gating");
    let only_evidence = |c: &Claim| {
        let mut c = c.clone();
        c.cited_doc_ids = c.evidence.keys().copied().collect();
        c
    };
    let bearing: Vec<Claim> = data.train[..15].iter().map(only_evidence).collect();
    let absent: Vec<Claim> = data.train[15..30]
        .iter()
        .map(|c| {
            let mut c = only_evidence(c);
            for ev in c.evidence.values_mut() {
                *ev = DocEvidence::label_only(ev.label);
            }
            c.provenance = Provenance::WeakTitle;
            c
        })
        .collect();
    save_claims(&gating.join("bearing.jsonl"), &bearing).unwrap();
    save_claims(&gating.join("absent.jsonl"), &absent).unwrap();
    fs::write(gating.join("gating.config"), GATING_CONFIG).unwrap();

    let pipeline = dir("pipeline");
    fs::write(pipeline.join("train.config"), PIPELINE_CONFIG).unwrap();
    save_claims(&pipeline.join("claims.jsonl"), &data.dev[..40]).unwrap();

    let category = dir("category");
    let fx = category_fixture(&CategoryCounts::default(), 5);
    save_corpus(&category.join("corpus.jsonl"), &fx.corpus).unwrap();
    save_claims(&category.join("gold.jsonl"), &fx.gold).unwrap();
    sciverify::data::save_predictions(&category.join("predictions.jsonl"), &fx.predictions)
        .unwrap();
    write_jsonl(&category.join("annotations.jsonl"), &fx.annotations).unwrap();

    let ico = dir("ico");
    save_corpus(&ico.join("corpus.jsonl"), &ico_corpus()).unwrap();
    write_jsonl(&ico.join("prompts.jsonl"), ico_prompts()).unwrap();
}
