//! Deterministic toy datasets.
//!
//! [`keyword_dataset`] plants the answer in single tokens: an abstract
//! supports every claim that cites it when some sentence ends in
//! `confirmed`, refutes it when some sentence ends in `refuted`, and says
//! nothing otherwise; those keyword sentences are the rationales. A model
//! that learns the two keywords can score perfectly.
//!
//! [`category_fixture`] builds gold pairs, predictions and category
//! annotations with fixed bucket sizes for exercising the category breakdown.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    Claim, ClaimId, Corpus, DocEvidence, DocId, Document, EvidenceLabel, Label, Prediction,
    Provenance,
};
use crate::eval::CategoryAnnotation;

pub const SUPPORT_KEYWORD: &str = "confirmed";
pub const REFUTE_KEYWORD: &str = "refuted";

const AGENTS: &[&str] = &[
    "aspirin",
    "metformin",
    "statins",
    "zinc",
    "caffeine",
    "melatonin",
    "lithium",
    "insulin",
    "ketamine",
    "curcumin",
    "folate",
    "iron",
];
const OUTCOMES: &[&str] = &[
    "mortality",
    "inflammation",
    "bone density",
    "blood pressure",
    "sleep quality",
    "memory",
    "tumor growth",
    "weight gain",
    "glucose levels",
    "fatigue",
];
const CLAIM_VERBS: &[&str] = &["alters", "affects", "changes", "modifies", "influences"];
const FILLER: &[&str] = &[
    "patients",
    "cohort",
    "trial",
    "baseline",
    "analysis",
    "measured",
    "randomized",
    "weeks",
    "participants",
    "dose",
    "group",
    "follow",
    "up",
    "adults",
    "clinical",
    "outcomes",
    "data",
    "collected",
    "study",
    "design",
    "control",
    "sample",
    "observed",
    "period",
    "hospital",
    "records",
    "assessed",
    "primary",
    "secondary",
    "endpoint",
    "years",
    "visits",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeywordSpec {
    pub n_docs: usize,
    pub n_claims: usize,
    pub n_dev: usize,
    pub seed: u64,
}

impl Default for KeywordSpec {
    fn default() -> Self {
        KeywordSpec {
            n_docs: 60,
            n_claims: 500,
            n_dev: 100,
            seed: 17,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeywordDataset {
    pub corpus: Corpus,
    pub train: Vec<Claim>,
    pub dev: Vec<Claim>,
}

fn filler_sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(4..=7);
    (0..n)
        .map(|_| FILLER[rng.gen_range(0..FILLER.len())].to_string())
        .collect()
}

/// Label and rationale sets of an evidence abstract.
type Verdict = (EvidenceLabel, Vec<BTreeSet<usize>>);

/// Builds the keyword-determined corpus and claims. Two fifths of the
/// abstracts support, two fifths refute, and the rest carry no evidence.
pub fn keyword_dataset(spec: &KeywordSpec) -> KeywordDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut topics: Vec<(usize, usize)> = (0..AGENTS.len())
        .flat_map(|a| (0..OUTCOMES.len()).map(move |o| (a, o)))
        .collect();
    topics.shuffle(&mut rng);
    topics.truncate(spec.n_docs);

    let mut docs = Vec::new();
    let mut verdicts: BTreeMap<DocId, Option<Verdict>> = BTreeMap::new();
    let mut topic_of = BTreeMap::new();
    for (d, &(a, o)) in topics.iter().enumerate() {
        let doc_id = d as DocId + 1;
        let verdict = match d % 5 {
            0 | 1 => Some(EvidenceLabel::Support),
            2 | 3 => Some(EvidenceLabel::Contradict),
            _ => None,
        };
        let n_sentences = rng.gen_range(4..=7);
        let n_keyword = if verdict.is_some() {
            rng.gen_range(1..=2)
        } else {
            0
        };
        let mut marked = index::sample(&mut rng, n_sentences, n_keyword).into_vec();
        marked.sort_unstable();
        let sentences = (0..n_sentences)
            .map(|i| {
                let mut words = filler_sentence(&mut rng);
                if marked.contains(&i) {
                    words.insert(rng.gen_range(0..words.len()), AGENTS[a].to_string());
                    words.push(match verdict {
                        Some(EvidenceLabel::Support) => SUPPORT_KEYWORD.into(),
                        _ => REFUTE_KEYWORD.into(),
                    });
                }
                words.join(" ")
            })
            .collect();
        docs.push(Document {
            doc_id,
            title: format!("effects of {} on {}", AGENTS[a], OUTCOMES[o]),
            sentences,
        });
        verdicts.insert(
            doc_id,
            verdict.map(|label| (label, marked.iter().map(|&i| BTreeSet::from([i])).collect())),
        );
        topic_of.insert(doc_id, (a, o));
    }
    let nei_docs: Vec<DocId> = verdicts
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(&d, _)| d)
        .collect();

    let mut claims = Vec::new();
    for c in 0..spec.n_claims {
        let doc_id = rng.gen_range(1..=spec.n_docs as DocId);
        let (a, o) = topic_of[&doc_id];
        let verb = CLAIM_VERBS[rng.gen_range(0..CLAIM_VERBS.len())];
        let mut cited = vec![doc_id];
        if rng.gen_bool(0.3) {
            let extra = nei_docs[rng.gen_range(0..nei_docs.len())];
            if extra != doc_id {
                cited.push(extra);
            }
        }
        let mut evidence = BTreeMap::new();
        if let Some((label, rationales)) = &verdicts[&doc_id] {
            evidence.insert(
                doc_id,
                DocEvidence::with_rationales(*label, rationales.clone()),
            );
        }
        claims.push(Claim {
            id: c as ClaimId + 1,
            text: format!("{} {verb} {}", AGENTS[a], OUTCOMES[o]),
            evidence,
            cited_doc_ids: cited,
            provenance: Provenance::Human,
        });
    }
    let dev = claims.split_off(spec.n_claims - spec.n_dev);
    KeywordDataset {
        corpus: Corpus::new(docs).expect("distinct doc ids"),
        train: claims,
        dev,
    }
}

/// Gold claims, predictions and annotations for a category breakdown.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryFixture {
    pub corpus: Corpus,
    pub gold: Vec<Claim>,
    pub predictions: Vec<Prediction>,
    pub annotations: Vec<CategoryAnnotation>,
}

/// Bucket sizes per category: exactly `yes` annotated pairs get `true`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CategoryCounts {
    pub pairs: usize,
    pub context_yes: usize,
    pub background_yes: usize,
    pub numerical_yes: usize,
}

impl Default for CategoryCounts {
    fn default() -> Self {
        CategoryCounts {
            pairs: 128,
            context_yes: 85,
            background_yes: 22,
            numerical_yes: 22,
        }
    }
}

/// One evidence pair per claim, every pair annotated, plus a few claims
/// whose predicted-but-unannotated pairs land in the remainder.
pub fn category_fixture(counts: &CategoryCounts, seed: u64) -> CategoryFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_docs = counts.pairs / 2 + 4;
    let docs: Vec<Document> = (0..n_docs)
        .map(|d| Document {
            doc_id: 100 + d as DocId,
            title: format!("report {d}"),
            sentences: (0..6)
                .map(|_| filler_sentence(&mut rng).join(" "))
                .collect(),
        })
        .collect();
    let flags = |yes: usize, rng: &mut ChaCha8Rng| {
        let mut v: Vec<bool> = (0..counts.pairs).map(|i| i < yes).collect();
        v.shuffle(rng);
        v
    };
    let context = flags(counts.context_yes, &mut rng);
    let background = flags(counts.background_yes, &mut rng);
    let numerical = flags(counts.numerical_yes, &mut rng);

    let mut gold = Vec::new();
    let mut predictions = Vec::new();
    let mut annotations = Vec::new();
    for i in 0..counts.pairs {
        let claim_id = i as ClaimId + 1;
        let doc_id = docs[rng.gen_range(0..n_docs - 4)].doc_id;
        let label = if rng.gen_bool(0.5) {
            EvidenceLabel::Support
        } else {
            EvidenceLabel::Contradict
        };
        let rationale: BTreeSet<usize> = {
            let k = rng.gen_range(1..=2);
            index::sample(&mut rng, 6, k).into_iter().collect()
        };
        gold.push(Claim {
            id: claim_id,
            text: format!("claim {claim_id}"),
            evidence: BTreeMap::from([(
                doc_id,
                DocEvidence::with_rationales(label, vec![rationale.clone()]),
            )]),
            cited_doc_ids: vec![doc_id],
            provenance: Provenance::Human,
        });
        annotations.push(CategoryAnnotation {
            claim_id,
            doc_id,
            context: context[i],
            background: background[i],
            numerical: numerical[i],
        });
        // Harder categories get noisier predictions.
        let hard = [context[i], background[i], numerical[i]]
            .iter()
            .filter(|&&b| b)
            .count();
        let p_right = 0.85 - 0.15 * hard as f64;
        let roll: f64 = rng.gen();
        let pred_label = if roll < p_right {
            Label::from(label)
        } else if roll < p_right + 0.1 {
            Label::Nei
        } else if label == EvidenceLabel::Support {
            Label::Refutes
        } else {
            Label::Supports
        };
        if pred_label == Label::Nei {
            predictions.push(Prediction::nei(claim_id, doc_id));
            continue;
        }
        let mut sentences = rationale.clone();
        if rng.gen_bool(0.3) {
            sentences.insert(rng.gen_range(0..6));
        }
        if rng.gen_bool(0.2) && sentences.len() > 1 {
            let first = *sentences.iter().next().expect("non-empty");
            sentences.remove(&first);
        }
        predictions.push(Prediction {
            claim_id,
            doc_id,
            label: pred_label,
            rationale: sentences,
        });
        // Occasional false positive on an unannotated abstract.
        if rng.gen_bool(0.05) {
            let other = docs[n_docs - 1 - rng.gen_range(0..4)].doc_id;
            gold.last_mut()
                .expect("just pushed")
                .cited_doc_ids
                .push(other);
            predictions.push(Prediction {
                claim_id,
                doc_id: other,
                label: Label::Supports,
                rationale: BTreeSet::from([0]),
            });
        }
    }
    CategoryFixture {
        corpus: Corpus::new(docs).expect("distinct doc ids"),
        gold,
        predictions,
        annotations,
    }
}
