//! Abstract-level and sentence-level scoring.
//!
//! Abstract level counts (claim, abstract) pairs: a predicted non-NEI pair is
//! correct when its label matches the gold label and, for the rationale
//! variant, when the predicted sentences contain at least one complete gold
//! rationale. Sentence level counts predicted rationale sentences: a sentence
//! is correct when it belongs to a gold rationale that was selected in full
//! (and, for the label variant, when the pair's label is right).

mod category;
mod report;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use category::{
    by_category, Bucket, Category, CategoryAnnotation, CategoryBreakdown, CategoryBucket,
};
pub use report::{round_half_up, EvalReport, PairRecord, ReportFormat};

use crate::data::{Claim, ClaimId, Corpus, DocId, Label, Prediction};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SentenceSelectionOnly,
    SentenceSelectionLabel,
    AbstractLabelOnly,
    AbstractLabelRationale,
}

impl Variant {
    /// Column order of the results table.
    pub const ALL: [Variant; 4] = [
        Variant::SentenceSelectionOnly,
        Variant::SentenceSelectionLabel,
        Variant::AbstractLabelOnly,
        Variant::AbstractLabelRationale,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Variant::SentenceSelectionOnly => "Sentence Selection-Only",
            Variant::SentenceSelectionLabel => "Sentence Selection+Label",
            Variant::AbstractLabelOnly => "Abstract Label-Only",
            Variant::AbstractLabelRationale => "Abstract Label+Rationale",
        }
    }

    pub fn parse(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| {
            serde_json::to_value(v)
                .ok()
                .and_then(|j| j.as_str().map(str::to_owned))
                == Some(name.to_string())
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positive: usize,
    pub predicted: usize,
    pub gold: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub variant: Variant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

impl MetricResult {
    pub fn from_counts(variant: Variant, counts: Counts) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(counts.true_positive, counts.predicted);
        let recall = ratio(counts.true_positive, counts.gold);
        MetricResult {
            variant,
            precision,
            recall,
            f1: f1(precision, recall),
            counts,
        }
    }
}

/// Harmonic mean, defined as 0 when both inputs are 0. Works on either the
/// unit or the percent scale.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Only the first `n` predicted sentences (ascending index) of each pair
    /// are counted. `None` counts all of them.
    pub max_rationale_sentences: Option<usize>,
}

struct PredictedPair {
    label: Label,
    sentences: Vec<usize>,
}

fn predicted_pairs(
    preds: &[Prediction],
    opts: &ScoringOptions,
) -> Vec<(ClaimId, DocId, PredictedPair)> {
    preds
        .iter()
        .filter(|p| p.label != Label::Nei)
        .map(|p| {
            let cap = opts.max_rationale_sentences.unwrap_or(usize::MAX);
            let sentences = p.rationale.iter().copied().take(cap).collect();
            (
                p.claim_id,
                p.doc_id,
                PredictedPair {
                    label: p.label,
                    sentences,
                },
            )
        })
        .collect()
}

fn gold_index(gold: &[Claim]) -> HashMap<ClaimId, &Claim> {
    gold.iter().map(|c| (c.id, c)).collect()
}

/// Abstract-level precision/recall/F1; `require_rationale` selects the
/// label+rationale variant.
pub fn abstract_level(
    preds: &[Prediction],
    gold: &[Claim],
    require_rationale: bool,
    opts: &ScoringOptions,
) -> MetricResult {
    let claims = gold_index(gold);
    let mut counts = Counts {
        gold: gold.iter().map(|c| c.evidence.len()).sum(),
        ..Counts::default()
    };
    for (claim_id, doc_id, pred) in predicted_pairs(preds, opts) {
        counts.predicted += 1;
        let Some(ev) = claims.get(&claim_id).and_then(|c| c.evidence.get(&doc_id)) else {
            continue;
        };
        if pred.label != Label::from(ev.label) {
            continue;
        }
        let selected: BTreeSet<usize> = pred.sentences.iter().copied().collect();
        let rationale_ok = !require_rationale
            || ev
                .rationales
                .iter()
                .flatten()
                .any(|r| r.is_subset(&selected));
        if rationale_ok {
            counts.true_positive += 1;
        }
    }
    let variant = if require_rationale {
        Variant::AbstractLabelRationale
    } else {
        Variant::AbstractLabelOnly
    };
    MetricResult::from_counts(variant, counts)
}

/// Sentence-level precision/recall/F1; `require_label` selects the
/// selection+label variant. Gold sentences are the union of each pair's
/// rationales, so a sentence shared by two rationales counts once.
pub fn sentence_level(
    preds: &[Prediction],
    gold: &[Claim],
    require_label: bool,
    opts: &ScoringOptions,
) -> MetricResult {
    let claims = gold_index(gold);
    let mut counts = Counts {
        gold: gold
            .iter()
            .flat_map(|c| c.evidence.values())
            .map(|ev| ev.sentence_union().map_or(0, |u| u.len()))
            .sum(),
        ..Counts::default()
    };
    for (claim_id, doc_id, pred) in predicted_pairs(preds, opts) {
        counts.predicted += pred.sentences.len();
        let Some(ev) = claims.get(&claim_id).and_then(|c| c.evidence.get(&doc_id)) else {
            continue;
        };
        if require_label && pred.label != Label::from(ev.label) {
            continue;
        }
        let selected: BTreeSet<usize> = pred.sentences.iter().copied().collect();
        let complete: BTreeSet<usize> = ev
            .rationales
            .iter()
            .flatten()
            .filter(|r| r.is_subset(&selected))
            .flatten()
            .copied()
            .collect();
        counts.true_positive += selected.intersection(&complete).count();
    }
    let variant = if require_label {
        Variant::SentenceSelectionLabel
    } else {
        Variant::SentenceSelectionOnly
    };
    MetricResult::from_counts(variant, counts)
}

pub fn score(
    variant: Variant,
    preds: &[Prediction],
    gold: &[Claim],
    opts: &ScoringOptions,
) -> MetricResult {
    match variant {
        Variant::SentenceSelectionOnly => sentence_level(preds, gold, false, opts),
        Variant::SentenceSelectionLabel => sentence_level(preds, gold, true, opts),
        Variant::AbstractLabelOnly => abstract_level(preds, gold, false, opts),
        Variant::AbstractLabelRationale => abstract_level(preds, gold, true, opts),
    }
}

/// All four variants in table order.
pub fn score_all(preds: &[Prediction], gold: &[Claim], opts: &ScoringOptions) -> Vec<MetricResult> {
    Variant::ALL
        .into_iter()
        .map(|v| score(v, preds, gold, opts))
        .collect()
}

/// (claim, doc) pairs an annotation set covers: every cited or evidence doc.
fn annotated_pairs(claims: &[Claim]) -> BTreeSet<(ClaimId, DocId)> {
    claims
        .iter()
        .flat_map(|c| {
            c.cited_doc_ids
                .iter()
                .chain(c.evidence.keys())
                .map(move |&d| (c.id, d))
        })
        .collect()
}

/// Converts an annotation set into the predictions it implies: the gold
/// label of each pair and the union of its rationale sentences.
pub fn annotations_as_predictions(claims: &[Claim]) -> Vec<Prediction> {
    annotated_pairs(claims)
        .into_iter()
        .map(|(claim_id, doc_id)| {
            let claim = claims
                .iter()
                .find(|c| c.id == claim_id)
                .expect("pair from claims");
            match claim.evidence.get(&doc_id) {
                None => Prediction::nei(claim_id, doc_id),
                Some(ev) => Prediction {
                    claim_id,
                    doc_id,
                    label: ev.label.into(),
                    rationale: ev.sentence_union().unwrap_or_default(),
                },
            }
        })
        .collect()
}

/// Agreement between two annotators: `a` is scored as gold and `b` as
/// predictions under all four variants.
pub fn human_agreement(a: &[Claim], b: &[Claim], corpus: &Corpus) -> Result<Vec<MetricResult>> {
    let (pairs_a, pairs_b) = (annotated_pairs(a), annotated_pairs(b));
    if pairs_a != pairs_b {
        let diff: Vec<String> = pairs_a
            .symmetric_difference(&pairs_b)
            .map(|(c, d)| format!("({c}, {d})"))
            .collect();
        return Err(Error::Validation(format!(
            "annotation sets cover different pairs: {}",
            diff.join(", ")
        )));
    }
    for claim in a.iter().chain(b) {
        crate::data::validate_claim(claim, corpus).map_err(Error::Validation)?;
    }
    Ok(score_all(
        &annotations_as_predictions(b),
        a,
        &ScoringOptions::default(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DocEvidence, Document, EvidenceLabel, Provenance};
    use std::collections::BTreeMap;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    fn gold_claim(id: ClaimId, doc: DocId, label: EvidenceLabel, rationales: &[&[usize]]) -> Claim {
        let mut evidence = BTreeMap::new();
        evidence.insert(
            doc,
            DocEvidence::with_rationales(label, rationales.iter().map(|r| set(r)).collect()),
        );
        Claim {
            id,
            text: format!("claim {id}"),
            evidence,
            cited_doc_ids: vec![doc],
            provenance: Provenance::Human,
        }
    }

    fn pred(claim_id: ClaimId, doc_id: DocId, label: Label, s: &[usize]) -> Prediction {
        Prediction {
            claim_id,
            doc_id,
            label,
            rationale: set(s),
        }
    }

    #[test]
    fn f1_examples() {
        assert!((round_half_up(f1(87.9, 68.6), 1) - 77.1).abs() < 1e-9);
        assert!((round_half_up(f1(94.8, 84.1), 1) - 89.1).abs() < 1e-9);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let gold = vec![
            gold_claim(1, 10, EvidenceLabel::Support, &[&[0, 1]]),
            gold_claim(2, 11, EvidenceLabel::Contradict, &[&[2]]),
        ];
        let preds = vec![
            pred(1, 10, Label::Supports, &[0, 1]),
            pred(2, 11, Label::Refutes, &[2]),
        ];
        for r in score_all(&preds, &gold, &ScoringOptions::default()) {
            assert_eq!(
                (r.precision, r.recall, r.f1),
                (1.0, 1.0, 1.0),
                "{}",
                r.variant
            );
        }
    }

    #[test]
    fn correct_label_missing_rationale() {
        let gold = vec![gold_claim(1, 10, EvidenceLabel::Support, &[&[0, 1]])];
        let preds = vec![pred(1, 10, Label::Supports, &[2])];
        let r = abstract_level(&preds, &gold, true, &ScoringOptions::default());
        assert_eq!(
            r.counts,
            Counts {
                true_positive: 0,
                predicted: 1,
                gold: 1
            }
        );
        let r = abstract_level(&preds, &gold, false, &ScoringOptions::default());
        assert_eq!(r.counts.true_positive, 1);
    }

    #[test]
    fn incomplete_rationale_earns_no_sentence_credit() {
        let gold = vec![gold_claim(1, 10, EvidenceLabel::Support, &[&[2, 3]])];
        let preds = vec![pred(1, 10, Label::Supports, &[2])];
        let r = sentence_level(&preds, &gold, false, &ScoringOptions::default());
        assert_eq!(
            r.counts,
            Counts {
                true_positive: 0,
                predicted: 1,
                gold: 2
            }
        );
    }

    #[test]
    fn wrong_label_only_hurts_label_variant() {
        let gold = vec![gold_claim(1, 10, EvidenceLabel::Support, &[&[1]])];
        let preds = vec![pred(1, 10, Label::Refutes, &[1])];
        let opts = ScoringOptions::default();
        assert_eq!(
            sentence_level(&preds, &gold, false, &opts)
                .counts
                .true_positive,
            1
        );
        assert_eq!(
            sentence_level(&preds, &gold, true, &opts)
                .counts
                .true_positive,
            0
        );
    }

    #[test]
    fn overlapping_rationales_count_once_in_gold() {
        let gold = vec![gold_claim(
            1,
            10,
            EvidenceLabel::Support,
            &[&[1, 2], &[2, 3]],
        )];
        let preds = vec![pred(1, 10, Label::Supports, &[1, 2])];
        let r = sentence_level(&preds, &gold, false, &ScoringOptions::default());
        assert_eq!(
            r.counts,
            Counts {
                true_positive: 2,
                predicted: 2,
                gold: 3
            }
        );
    }

    #[test]
    fn sentence_cap_truncates_predictions() {
        let gold = vec![gold_claim(1, 10, EvidenceLabel::Support, &[&[4]])];
        let preds = vec![pred(1, 10, Label::Supports, &[0, 1, 2, 4])];
        let capped = ScoringOptions {
            max_rationale_sentences: Some(3),
        };
        assert_eq!(
            abstract_level(&preds, &gold, true, &capped)
                .counts
                .true_positive,
            0
        );
        assert_eq!(
            abstract_level(&preds, &gold, true, &ScoringOptions::default())
                .counts
                .true_positive,
            1
        );
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            let name = serde_json::to_value(v).unwrap();
            assert_eq!(Variant::parse(name.as_str().unwrap()), Some(v));
        }
        assert_eq!(Variant::parse("bogus"), None);
    }

    fn corpus() -> Corpus {
        Corpus::new((10..13).map(|i| Document {
            doc_id: i,
            title: String::new(),
            sentences: vec!["s".into(); 5],
        }))
        .unwrap()
    }

    #[test]
    fn self_agreement_is_perfect() {
        let a = vec![
            gold_claim(1, 10, EvidenceLabel::Support, &[&[0]]),
            gold_claim(2, 11, EvidenceLabel::Contradict, &[&[1, 2]]),
        ];
        for r in human_agreement(&a, &a, &corpus()).unwrap() {
            assert_eq!(r.f1, 1.0);
        }
    }

    #[test]
    fn mismatched_pair_sets_are_listed() {
        let a = vec![gold_claim(1, 10, EvidenceLabel::Support, &[&[0]])];
        let b = vec![gold_claim(1, 11, EvidenceLabel::Support, &[&[0]])];
        let err = human_agreement(&a, &b, &corpus()).unwrap_err().to_string();
        assert!(err.contains("(1, 10)") && err.contains("(1, 11)"), "{err}");
    }
}
