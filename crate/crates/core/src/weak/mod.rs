//! Weakly labeled training data: claims templated from intervention /
//! comparator / outcome prompts, claim-like titles (with a negation flip),
//! and hard negatives mined from the retrieval index.

mod negatives;
mod title;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use negatives::{mine_hard_negatives, HardNegatives, DEFAULT_POOL_SIZE, DEFAULT_SAMPLE_SIZE};
pub use title::{is_claim_like, negation_rewrite, title_to_claims, NegationRule, NEGATION_RULES};

use crate::data::{
    read_jsonl, Claim, ClaimId, Corpus, DocEvidence, DocId, EvidenceLabel, Provenance,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    SigIncreased,
    SigDecreased,
    NoSigDiff,
}

/// An intervention / comparator / outcome finding reported by an abstract.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcoPrompt {
    pub doc_id: DocId,
    pub intervention: String,
    #[serde(default)]
    pub comparator: String,
    pub outcome: String,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_indices: Option<BTreeSet<usize>>,
}

impl IcoPrompt {
    pub fn validate(&self, corpus: &Corpus) -> std::result::Result<(), String> {
        if self.intervention.trim().is_empty() || self.outcome.trim().is_empty() {
            return Err(format!(
                "prompt for doc {} has an empty intervention or outcome",
                self.doc_id
            ));
        }
        let doc = corpus
            .get(self.doc_id)
            .ok_or_else(|| format!("prompt references unknown doc {}", self.doc_id))?;
        if let Some(&i) = self
            .rationale_indices
            .iter()
            .flatten()
            .find(|&&i| i >= doc.sentences.len())
        {
            return Err(format!(
                "prompt rationale sentence {i} out of range for doc {} ({} sentences)",
                self.doc_id,
                doc.sentences.len()
            ));
        }
        Ok(())
    }
}

pub fn load_prompts(path: &Path, corpus: &Corpus) -> Result<Vec<IcoPrompt>> {
    let prompts: Vec<IcoPrompt> = read_jsonl(path)?;
    for (i, p) in prompts.iter().enumerate() {
        p.validate(corpus)
            .map_err(|m| Error::parse(path, i + 1, m))?;
    }
    Ok(prompts)
}

/// How a generated claim was produced; enough, on its own, to regenerate
/// the claim text and label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GenerationTrace {
    Ico {
        doc_id: DocId,
        intervention: String,
        comparator: String,
        outcome: String,
        verb: String,
        label: EvidenceLabel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rationale: Option<BTreeSet<usize>>,
    },
    Title {
        doc_id: DocId,
        title: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        negation: Option<NegationRule>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedClaim {
    pub claim: Claim,
    pub trace: GenerationTrace,
}

/// Serialized sidecar line tying a claim id to its trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: ClaimId,
    pub trace: GenerationTrace,
}

const INCREASES: &str = "increases";
const DECREASES: &str = "decreases";

fn ico_text(intervention: &str, verb: &str, outcome: &str, comparator: &str) -> String {
    let mut text = format!("{} {verb} {}", intervention.trim(), outcome.trim());
    if !comparator.trim().is_empty() {
        text.push_str(" compared to ");
        text.push_str(comparator.trim());
    }
    text
}

impl GenerationTrace {
    /// Regenerates the claim this trace describes under `id`.
    pub fn replay(&self, id: ClaimId) -> Claim {
        match self {
            GenerationTrace::Ico {
                doc_id,
                intervention,
                comparator,
                outcome,
                verb,
                label,
                rationale,
            } => {
                let evidence = match rationale {
                    Some(r) => DocEvidence::with_rationales(*label, vec![r.clone()]),
                    None => DocEvidence::label_only(*label),
                };
                Claim {
                    id,
                    text: ico_text(intervention, verb, outcome, comparator),
                    evidence: BTreeMap::from([(*doc_id, evidence)]),
                    cited_doc_ids: vec![*doc_id],
                    provenance: Provenance::WeakIco,
                }
            }
            GenerationTrace::Title {
                doc_id,
                title,
                negation,
            } => {
                let (text, label) = match negation {
                    None => (title.trim().to_string(), EvidenceLabel::Support),
                    Some(rule) => (
                        rule.apply(title.trim())
                            .unwrap_or_else(|| title.trim().to_string()),
                        EvidenceLabel::Contradict,
                    ),
                };
                Claim {
                    id,
                    text,
                    evidence: BTreeMap::from([(*doc_id, DocEvidence::label_only(label))]),
                    cited_doc_ids: vec![*doc_id],
                    provenance: Provenance::WeakTitle,
                }
            }
        }
    }
}

fn generate(trace: GenerationTrace, next_id: &mut ClaimId) -> GeneratedClaim {
    let claim = trace.replay(*next_id);
    *next_id += 1;
    GeneratedClaim { claim, trace }
}

/// A SUPPORTS claim with the verb matching the prompt's direction and a
/// REFUTES claim with the opposite verb. Null-result prompts yield nothing.
pub fn ico_to_claims(prompt: &IcoPrompt, next_id: &mut ClaimId) -> Vec<GeneratedClaim> {
    let (matching, opposite) = match prompt.direction {
        Direction::SigIncreased => (INCREASES, DECREASES),
        Direction::SigDecreased => (DECREASES, INCREASES),
        Direction::NoSigDiff => {
            log::info!("skipping null-result prompt for doc {}", prompt.doc_id);
            return Vec::new();
        }
    };
    [
        (matching, EvidenceLabel::Support),
        (opposite, EvidenceLabel::Contradict),
    ]
    .into_iter()
    .map(|(verb, label)| {
        let trace = GenerationTrace::Ico {
            doc_id: prompt.doc_id,
            intervention: prompt.intervention.clone(),
            comparator: prompt.comparator.clone(),
            outcome: prompt.outcome.clone(),
            verb: verb.into(),
            label,
            rationale: prompt.rationale_indices.clone(),
        };
        generate(trace, next_id)
    })
    .collect()
}

pub fn traces(generated: &[GeneratedClaim]) -> Vec<TraceRecord> {
    generated
        .iter()
        .map(|g| TraceRecord {
            id: g.claim.id,
            trace: g.trace.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(comparator: &str, direction: Direction) -> IcoPrompt {
        IcoPrompt {
            doc_id: 7,
            intervention: "vitamin D".into(),
            comparator: comparator.into(),
            outcome: "fracture risk".into(),
            direction,
            rationale_indices: Some([2].into()),
        }
    }

    #[test]
    fn decreased_prompt_yields_pair() {
        let mut id = 100;
        let out = ico_to_claims(&prompt("placebo", Direction::SigDecreased), &mut id);
        assert_eq!(out.len(), 2);
        assert_eq!(
            out[0].claim.text,
            "vitamin D decreases fracture risk compared to placebo"
        );
        assert_eq!(out[0].claim.evidence[&7].label, EvidenceLabel::Support);
        assert_eq!(
            out[1].claim.text,
            "vitamin D increases fracture risk compared to placebo"
        );
        assert_eq!(out[1].claim.evidence[&7].label, EvidenceLabel::Contradict);
        assert_eq!(out[1].claim.evidence[&7].rationales, Some(vec![[2].into()]));
        assert_eq!((out[0].claim.id, out[1].claim.id, id), (100, 101, 102));
        assert!(out
            .iter()
            .all(|g| g.claim.provenance == Provenance::WeakIco));
    }

    #[test]
    fn empty_comparator_drops_clause() {
        let out = ico_to_claims(&prompt("", Direction::SigDecreased), &mut 0);
        assert_eq!(out[0].claim.text, "vitamin D decreases fracture risk");
    }

    #[test]
    fn null_result_is_skipped() {
        let mut id = 5;
        assert!(ico_to_claims(&prompt("placebo", Direction::NoSigDiff), &mut id).is_empty());
        assert_eq!(id, 5);
    }

    #[test]
    fn trace_round_trips_through_json() {
        let out = ico_to_claims(&prompt("placebo", Direction::SigIncreased), &mut 3);
        for g in &out {
            let json = serde_json::to_string(&g.trace).unwrap();
            let back: GenerationTrace = serde_json::from_str(&json).unwrap();
            assert_eq!(back.replay(g.claim.id), g.claim);
        }
    }
}
