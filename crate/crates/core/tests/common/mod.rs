//! Test-only helpers: a brute-force scorer written straight from the metric
//! definitions, and random small instances to compare it against.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sciverify::data::{
    Claim, Corpus, DocEvidence, Document, EvidenceLabel, Label, Prediction, Provenance,
};
use sciverify::verifier::{
    AssembledInput, EncoderConfig, LossConfig, Target, ToyModel, Vocab, CLS_ID, SEP_ID,
};

/// (true positives, predicted, gold)
pub type Triple = (usize, usize, usize);

fn same_label(pred: Label, gold: EvidenceLabel) -> bool {
    matches!(
        (pred, gold),
        (Label::Supports, EvidenceLabel::Support) | (Label::Refutes, EvidenceLabel::Contradict)
    )
}

fn find_evidence(gold: &[Claim], claim: u64, doc: u64) -> Option<&DocEvidence> {
    for c in gold {
        if c.id == claim {
            for (d, ev) in &c.evidence {
                if *d == doc {
                    return Some(ev);
                }
            }
        }
    }
    None
}

fn capped(p: &Prediction, cap: Option<usize>) -> Vec<usize> {
    let mut v: Vec<usize> = p.rationale.iter().copied().collect();
    v.sort();
    if let Some(c) = cap {
        v.truncate(c);
    }
    v
}

fn contains_all(haystack: &[usize], needles: &BTreeSet<usize>) -> bool {
    needles.iter().all(|n| haystack.iter().any(|h| h == n))
}

pub fn brute_abstract(
    preds: &[Prediction],
    gold: &[Claim],
    rationale: bool,
    cap: Option<usize>,
) -> Triple {
    let mut gold_count = 0;
    for c in gold {
        gold_count += c.evidence.len();
    }
    let mut predicted = 0;
    let mut correct = 0;
    for p in preds {
        if p.label == Label::Nei {
            continue;
        }
        predicted += 1;
        let Some(ev) = find_evidence(gold, p.claim_id, p.doc_id) else {
            continue;
        };
        if !same_label(p.label, ev.label) {
            continue;
        }
        if !rationale {
            correct += 1;
            continue;
        }
        let chosen = capped(p, cap);
        let mut ok = false;
        if let Some(rs) = &ev.rationales {
            for r in rs {
                if contains_all(&chosen, r) {
                    ok = true;
                }
            }
        }
        if ok {
            correct += 1;
        }
    }
    (correct, predicted, gold_count)
}

pub fn brute_sentence(
    preds: &[Prediction],
    gold: &[Claim],
    label: bool,
    cap: Option<usize>,
) -> Triple {
    let mut gold_count = 0;
    for c in gold {
        for ev in c.evidence.values() {
            let mut seen: Vec<usize> = Vec::new();
            for r in ev.rationales.iter().flatten() {
                for &s in r {
                    if !seen.contains(&s) {
                        seen.push(s);
                    }
                }
            }
            gold_count += seen.len();
        }
    }
    let mut predicted = 0;
    let mut correct = 0;
    for p in preds {
        if p.label == Label::Nei {
            continue;
        }
        let chosen = capped(p, cap);
        predicted += chosen.len();
        let Some(ev) = find_evidence(gold, p.claim_id, p.doc_id) else {
            continue;
        };
        if label && !same_label(p.label, ev.label) {
            continue;
        }
        for &s in &chosen {
            let mut hit = false;
            for r in ev.rationales.iter().flatten() {
                if r.contains(&s) && contains_all(&chosen, r) {
                    hit = true;
                }
            }
            if hit {
                correct += 1;
            }
        }
    }
    (correct, predicted, gold_count)
}

/// Oracle counts in table order: selection-only, selection+label,
/// label-only, label+rationale.
pub fn brute_all(preds: &[Prediction], gold: &[Claim], cap: Option<usize>) -> [Triple; 4] {
    [
        brute_sentence(preds, gold, false, cap),
        brute_sentence(preds, gold, true, cap),
        brute_abstract(preds, gold, false, cap),
        brute_abstract(preds, gold, true, cap),
    ]
}

pub fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, p: f64) -> BTreeSet<usize> {
    (0..n).filter(|_| rng.gen_bool(p)).collect()
}

/// Up to 10 claims x 5 docs x 8 sentences with random gold and predictions.
pub fn random_instance(seed: u64) -> (Vec<Claim>, Vec<Prediction>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_claims = rng.gen_range(1..=10);
    let n_docs = rng.gen_range(1..=5u64);
    let n_sent: Vec<usize> = (0..n_docs).map(|_| rng.gen_range(1..=8)).collect();
    let mut gold = Vec::new();
    let mut preds = Vec::new();
    for c in 0..n_claims {
        let mut evidence = BTreeMap::new();
        for d in 0..n_docs {
            if rng.gen_bool(0.4) {
                let label = if rng.gen_bool(0.5) {
                    EvidenceLabel::Support
                } else {
                    EvidenceLabel::Contradict
                };
                let k = rng.gen_range(1..=3);
                let mut rationales = Vec::new();
                for _ in 0..k {
                    let mut r = random_subset(&mut rng, n_sent[d as usize], 0.3);
                    if r.is_empty() {
                        r.insert(rng.gen_range(0..n_sent[d as usize]));
                    }
                    rationales.push(r);
                }
                evidence.insert(d, DocEvidence::with_rationales(label, rationales));
            }
            let roll: f64 = rng.gen();
            if roll < 0.45 {
                let label = if rng.gen_bool(0.5) {
                    Label::Supports
                } else {
                    Label::Refutes
                };
                let mut r = random_subset(&mut rng, n_sent[d as usize], 0.4);
                if r.is_empty() {
                    r.insert(rng.gen_range(0..n_sent[d as usize]));
                }
                preds.push(Prediction {
                    claim_id: c,
                    doc_id: d,
                    label,
                    rationale: r,
                });
            } else if roll < 0.6 {
                preds.push(Prediction::nei(c, d));
            }
        }
        gold.push(Claim {
            id: c,
            text: format!("claim {c}"),
            evidence,
            cited_doc_ids: (0..n_docs).collect(),
            provenance: Provenance::Human,
        });
    }
    (gold, preds)
}

const PAIR_WORDS: &[&str] = &[
    "zinc", "reduces", "cold", "duration", "in", "adults", "trial", "placebo", "risk", "dose",
    "vitamin", "fracture", "was", "lower", "group", "patients",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n)
        .map(|_| PAIR_WORDS[rng.gen_range(0..PAIR_WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random claim and abstract over a small shared vocabulary.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (String, Document, Vocab) {
    let claim = words(rng, 1, 8);
    let doc = Document {
        doc_id: rng.gen_range(0..1000),
        title: words(rng, 0, 6),
        sentences: (0..rng.gen_range(1..=10))
            .map(|_| words(rng, 1, 9))
            .collect(),
    };
    let vocab = Vocab::build(PAIR_WORDS.iter().copied(), 100);
    (claim, doc, vocab)
}

pub fn tiny_config(vocab_size: usize, max_length: usize, window: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size,
        hidden: 8,
        layers: 2,
        heads: 2,
        ffn: 12,
        window,
        max_length,
        head_hidden: 6,
    }
}

/// Worst relative disagreement between analytic and central-difference
/// gradients over every parameter, with relative floor 1e-6. Differences
/// below the resolution of the difference quotient itself (four ulps of the
/// loss over 2h) count as agreement: exactly-zero gradients, such as those of
/// attention key biases, otherwise show up as pure rounding noise.
pub fn worst_gradient_error(
    model: &ToyModel,
    x: &AssembledInput,
    target: &Target,
    cfg: &LossConfig,
) -> f64 {
    let analytic = model.loss_and_gradient(x, target, cfg).unwrap().gradient;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let n_tensors = model.params.tensors().len();
    for ti in 0..n_tensors {
        let (rows, cols) = model.params.tensors()[ti].1.dim();
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = model.clone();
                plus.params.tensors_mut()[ti].1[[r, c]] += h;
                let mut minus = model.clone();
                minus.params.tensors_mut()[ti].1[[r, c]] -= h;
                let (lp, lm) = (
                    plus.loss(x, target, cfg).unwrap(),
                    minus.loss(x, target, cfg).unwrap(),
                );
                let numeric = (lp - lm) / (2.0 * h);
                let exact = analytic.tensors()[ti].1[[r, c]];
                let resolution = 4.0 * f64::EPSILON * lp.abs().max(lm.abs()) / (2.0 * h);
                let diff = (numeric - exact).abs();
                let rel = if diff <= resolution {
                    0.0
                } else {
                    diff / numeric.abs().max(exact.abs()).max(1e-6)
                };
                worst = worst.max(rel);
            }
        }
    }
    worst
}

pub const WORDS: &[&str] = &[
    "zinc", "cold", "Colds", "trial", "risk", "fracture", "vitamin", "d", "placebo", "dose",
];

pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Okapi BM25 written out term by term.
pub fn bm25_oracle(corpus: &Corpus, query: &str, k1: f64, b: f64) -> BTreeMap<u64, f64> {
    let docs: Vec<(u64, Vec<String>)> = corpus
        .iter()
        .map(|d| {
            (
                d.doc_id,
                tokens(&format!("{} {}", d.title, d.sentences.join(" "))),
            )
        })
        .collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
    let terms: BTreeSet<String> = tokens(query).into_iter().collect();
    docs.iter()
        .map(|(id, toks)| {
            let mut s = 0.0;
            for t in &terms {
                let df = docs.iter().filter(|(_, d)| d.contains(t)).count() as f64;
                let tf = toks.iter().filter(|x| *x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * toks.len() as f64 / avg));
            }
            (*id, s)
        })
        .collect()
}

pub fn random_corpus(rng: &mut ChaCha8Rng) -> Corpus {
    let n = rng.gen_range(1..=50);
    let sentence = |rng: &mut ChaCha8Rng| {
        let k = rng.gen_range(1..=8);
        (0..k)
            .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    Corpus::new((0..n).map(|i| Document {
        doc_id: 1000 - i as u64 * 7,
        title: sentence(rng),
        sentences: (0..rng.gen_range(1..4)).map(|_| sentence(rng)).collect(),
    }))
    .unwrap()
}

pub fn random_query(rng: &mut ChaCha8Rng) -> String {
    let k = rng.gen_range(1..=5);
    (0..k)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(", ")
}

/// Equal within 1e-9 relative.
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300) || a == b
}

/// Checks the `<s> claim </s> title </s> (sentence </s>)*` grammar and the
/// global-attention set; returns the number of violations.
pub fn layout_violations(x: &AssembledInput, claim_tokens: usize, title_tokens: usize) -> usize {
    let mut bad = 0;
    let t = &x.token_ids;
    bad += usize::from(t[0] != CLS_ID);
    bad += t[1..=claim_tokens]
        .iter()
        .filter(|&&id| id == SEP_ID || id == CLS_ID)
        .count();
    bad += usize::from(t[claim_tokens + 1] != SEP_ID);
    let title_end = claim_tokens + 2 + title_tokens;
    bad += t[claim_tokens + 2..title_end]
        .iter()
        .filter(|&&id| id == SEP_ID)
        .count();
    bad += usize::from(t[title_end] != SEP_ID);
    let seps: Vec<usize> = (title_end + 1..t.len())
        .filter(|&i| t[i] == SEP_ID)
        .collect();
    bad += usize::from(seps != x.sentence_marker_positions);
    bad += usize::from(t.last() != Some(&SEP_ID));
    for (i, &g) in x.global_attention.iter().enumerate() {
        let expected = i <= claim_tokens || t[i] == SEP_ID;
        bad += usize::from(g != expected);
    }
    bad
}
