//! Corpus, claim and prediction records.
//!
//! The on-disk layout follows the public SciFact JSONL convention so that
//! prediction files written by other systems can be scored unchanged:
//! evidence labels travel as `"SUPPORT"` / `"CONTRADICT"` and NEI is encoded
//! by leaving a document out of a claim's evidence map.

mod jsonl;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use jsonl::{
    load_claims, load_claims_unchecked, load_corpus, load_predictions, read_jsonl, save_claims,
    save_corpus, save_predictions, write_jsonl,
};
pub use validate::{validate_claim, validate_predictions, Violation};

pub type DocId = u64;
pub type ClaimId = u64;

/// Three-way veracity label of a (claim, abstract) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Supports,
    Refutes,
    Nei,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supports, Label::Refutes, Label::Nei];

    /// Position of the label in the classifier's output distribution.
    pub fn index(self) -> usize {
        match self {
            Label::Supports => 0,
            Label::Refutes => 1,
            Label::Nei => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn evidence(self) -> Option<EvidenceLabel> {
        match self {
            Label::Supports => Some(EvidenceLabel::Support),
            Label::Refutes => Some(EvidenceLabel::Contradict),
            Label::Nei => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Supports => "SUPPORTS",
            Label::Refutes => "REFUTES",
            Label::Nei => "NEI",
        })
    }
}

/// Label carried by evidence: only the two informative classes exist on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvidenceLabel {
    #[serde(rename = "SUPPORT", alias = "SUPPORTS")]
    Support,
    #[serde(rename = "CONTRADICT", alias = "CONTRADICTS", alias = "REFUTES")]
    Contradict,
}

impl From<EvidenceLabel> for Label {
    fn from(label: EvidenceLabel) -> Self {
        match label {
            EvidenceLabel::Support => Label::Supports,
            EvidenceLabel::Contradict => Label::Refutes,
        }
    }
}

/// A research abstract: title plus ordered sentences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    pub title: String,
    #[serde(rename = "abstract")]
    pub sentences: Vec<String>,
}

impl Document {
    /// Stub records with no abstract text. Accepted by the loaders but
    /// rejected wherever sentence-level semantics are needed.
    pub fn is_degenerate(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Title followed by every abstract sentence, space separated.
    pub fn full_text(&self) -> String {
        let mut text = self.title.clone();
        for sentence in &self.sentences {
            text.push(' ');
            text.push_str(sentence);
        }
        text
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: BTreeMap<DocId, Document>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate identifiers.
    pub fn new(documents: impl IntoIterator<Item = Document>) -> crate::Result<Self> {
        let mut map = BTreeMap::new();
        for doc in documents {
            let id = doc.doc_id;
            if map.insert(id, doc).is_some() {
                return Err(crate::Error::Validation(format!("duplicate doc_id {id}")));
            }
        }
        Ok(Corpus { documents: map })
    }

    pub fn get(&self, doc_id: DocId) -> Option<&Document> {
        self.documents.get(&doc_id)
    }

    pub fn contains(&self, doc_id: DocId) -> bool {
        self.documents.contains_key(&doc_id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Documents in ascending `doc_id` order.
    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.documents.keys().copied()
    }
}

/// One annotated rationale: a minimal sentence set justifying a label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rationale {
    pub label: EvidenceLabel,
    pub sentences: BTreeSet<usize>,
}

/// Everything known about one evidence abstract of a claim.
///
/// All rationales under one document share `label`. `rationales == None`
/// means the pair is labelled but has no rationale annotation at all (weakly
/// supervised title claims); the loss then skips the rationale term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocEvidence {
    pub label: EvidenceLabel,
    pub rationales: Option<Vec<BTreeSet<usize>>>,
}

impl DocEvidence {
    pub fn with_rationales(label: EvidenceLabel, rationales: Vec<BTreeSet<usize>>) -> Self {
        DocEvidence {
            label,
            rationales: Some(rationales),
        }
    }

    pub fn label_only(label: EvidenceLabel) -> Self {
        DocEvidence {
            label,
            rationales: None,
        }
    }

    /// Union of all rationale sentences; `None` when rationales are absent.
    pub fn sentence_union(&self) -> Option<BTreeSet<usize>> {
        self.rationales
            .as_ref()
            .map(|rs| rs.iter().flatten().copied().collect())
    }

    pub fn rationale_list(&self) -> Vec<Rationale> {
        self.rationales
            .iter()
            .flatten()
            .map(|sentences| Rationale {
                label: self.label,
                sentences: sentences.clone(),
            })
            .collect()
    }
}

/// Where a claim came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    #[default]
    Human,
    WeakIco,
    WeakTitle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Claim {
    pub id: ClaimId,
    pub text: String,
    pub evidence: BTreeMap<DocId, DocEvidence>,
    pub cited_doc_ids: Vec<DocId>,
    pub provenance: Provenance,
}

impl Claim {
    /// Gold label of `(self, doc_id)`: NEI iff the document carries no evidence.
    pub fn gold_label(&self, doc_id: DocId) -> Label {
        self.evidence
            .get(&doc_id)
            .map_or(Label::Nei, |ev| ev.label.into())
    }

    /// Candidate pool for the oracle-abstract setting.
    pub fn oracle_candidates(&self) -> Vec<DocId> {
        let mut ids = self.cited_doc_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Verdict for one (claim, abstract) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub claim_id: ClaimId,
    pub doc_id: DocId,
    pub label: Label,
    /// Empty iff `label == Label::Nei`.
    pub rationale: BTreeSet<usize>,
}

impl Prediction {
    pub fn nei(claim_id: ClaimId, doc_id: DocId) -> Self {
        Prediction {
            claim_id,
            doc_id,
            label: Label::Nei,
            rationale: BTreeSet::new(),
        }
    }
}
