use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::{Claim, ClaimId, Corpus, DocId, Label, Prediction};

/// Checks that every evidence reference of `claim` resolves in `corpus`.
pub fn validate_claim(claim: &Claim, corpus: &Corpus) -> Result<(), String> {
    for (&doc_id, ev) in &claim.evidence {
        let doc = corpus
            .get(doc_id)
            .ok_or_else(|| format!("claim {}: evidence doc {doc_id} not in corpus", claim.id))?;
        for set in ev.rationales.iter().flatten() {
            if let Some(&bad) = set.iter().find(|&&i| i >= doc.sentences.len()) {
                return Err(format!(
                    "claim {}: sentence index {bad} out of range for doc {doc_id} ({} sentences)",
                    claim.id,
                    doc.sentences.len()
                ));
            }
        }
    }
    if let Some(missing) = claim.cited_doc_ids.iter().find(|d| !corpus.contains(**d)) {
        return Err(format!(
            "claim {}: cited doc {missing} not in corpus",
            claim.id
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    UnknownClaim {
        claim_id: ClaimId,
    },
    UnknownDoc {
        claim_id: ClaimId,
        doc_id: DocId,
    },
    SentenceOutOfRange {
        claim_id: ClaimId,
        doc_id: DocId,
        index: usize,
    },
    MissingRationale {
        claim_id: ClaimId,
        doc_id: DocId,
    },
    NeiWithRationale {
        claim_id: ClaimId,
        doc_id: DocId,
    },
    Duplicate {
        claim_id: ClaimId,
        doc_id: DocId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownClaim { claim_id } => write!(f, "unknown claim {claim_id}"),
            Violation::UnknownDoc { claim_id, doc_id } => {
                write!(f, "claim {claim_id}: unknown doc {doc_id}")
            }
            Violation::SentenceOutOfRange {
                claim_id,
                doc_id,
                index,
            } => write!(
                f,
                "claim {claim_id}, doc {doc_id}: sentence {index} out of range"
            ),
            Violation::MissingRationale { claim_id, doc_id } => write!(
                f,
                "claim {claim_id}, doc {doc_id}: non-NEI label without rationale sentences"
            ),
            Violation::NeiWithRationale { claim_id, doc_id } => write!(
                f,
                "claim {claim_id}, doc {doc_id}: NEI label with rationale sentences"
            ),
            Violation::Duplicate { claim_id, doc_id } => {
                write!(
                    f,
                    "claim {claim_id}, doc {doc_id}: predicted more than once"
                )
            }
        }
    }
}

/// Returns every way in which `preds` breaks the prediction invariants or
/// references ids unknown to `claims` / `corpus`. Empty means valid.
pub fn validate_predictions(
    preds: &[Prediction],
    corpus: &Corpus,
    claims: &[Claim],
) -> Vec<Violation> {
    let known: HashMap<ClaimId, &Claim> = claims.iter().map(|c| (c.id, c)).collect();
    let mut seen = BTreeSet::new();
    let mut violations = Vec::new();
    for p in preds {
        let (claim_id, doc_id) = (p.claim_id, p.doc_id);
        if !known.contains_key(&claim_id) {
            violations.push(Violation::UnknownClaim { claim_id });
        }
        if !seen.insert((claim_id, doc_id)) {
            violations.push(Violation::Duplicate { claim_id, doc_id });
        }
        match corpus.get(doc_id) {
            None => violations.push(Violation::UnknownDoc { claim_id, doc_id }),
            Some(doc) => {
                for &index in p.rationale.iter().filter(|&&i| i >= doc.sentences.len()) {
                    violations.push(Violation::SentenceOutOfRange {
                        claim_id,
                        doc_id,
                        index,
                    });
                }
            }
        }
        match (p.label, p.rationale.is_empty()) {
            (Label::Nei, false) => {
                violations.push(Violation::NeiWithRationale { claim_id, doc_id })
            }
            (Label::Supports | Label::Refutes, true) => {
                violations.push(Violation::MissingRationale { claim_id, doc_id })
            }
            _ => {}
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Document, Provenance};
    use std::collections::BTreeMap;

    fn fixture() -> (Corpus, Vec<Claim>) {
        let corpus = Corpus::new((0..3).map(|i| Document {
            doc_id: i,
            title: format!("title {i}"),
            sentences: vec!["a".into(), "b".into()],
        }))
        .unwrap();
        let claims = vec![Claim {
            id: 1,
            text: "c".into(),
            evidence: BTreeMap::new(),
            cited_doc_ids: vec![0],
            provenance: Provenance::Human,
        }];
        (corpus, claims)
    }

    #[test]
    fn nei_without_rationale_is_valid() {
        let (corpus, claims) = fixture();
        assert!(validate_predictions(&[Prediction::nei(1, 0)], &corpus, &claims).is_empty());
    }

    #[test]
    fn supports_without_rationale_is_one_violation() {
        let (corpus, claims) = fixture();
        let mut p = Prediction::nei(1, 0);
        p.label = Label::Supports;
        let v = validate_predictions(&[p], &corpus, &claims);
        assert_eq!(
            v,
            vec![Violation::MissingRationale {
                claim_id: 1,
                doc_id: 0
            }]
        );
    }

    #[test]
    fn unknown_ids_and_ranges() {
        let (corpus, claims) = fixture();
        let p = Prediction {
            claim_id: 2,
            doc_id: 0,
            label: Label::Refutes,
            rationale: [5].into_iter().collect(),
        };
        let q = Prediction::nei(1, 17);
        let v = validate_predictions(&[p, q], &corpus, &claims);
        assert_eq!(
            v,
            vec![
                Violation::UnknownClaim { claim_id: 2 },
                Violation::SentenceOutOfRange {
                    claim_id: 2,
                    doc_id: 0,
                    index: 5
                },
                Violation::UnknownDoc {
                    claim_id: 1,
                    doc_id: 17
                },
            ]
        );
    }
}
