use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    validate_claim, Claim, ClaimId, Corpus, DocEvidence, DocId, Document, EvidenceLabel, Label,
    Prediction, Provenance,
};
use crate::{Error, Result};

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut writer, &item)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let docs: Vec<Document> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for doc in &docs {
        if !seen.insert(doc.doc_id) {
            return Err(Error::Validation(format!(
                "{}: duplicate doc_id {}",
                path.display(),
                doc.doc_id
            )));
        }
    }
    Corpus::new(docs)
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_jsonl(path, corpus.iter())
}

#[derive(Serialize, Deserialize)]
struct RawRationale {
    sentences: Vec<usize>,
    label: EvidenceLabel,
}

#[derive(Serialize, Deserialize)]
struct RawClaim {
    id: ClaimId,
    claim: String,
    #[serde(default)]
    evidence: BTreeMap<DocId, Vec<RawRationale>>,
    #[serde(default)]
    cited_doc_ids: Vec<DocId>,
    #[serde(default, skip_serializing_if = "is_human")]
    provenance: Provenance,
}

fn is_human(p: &Provenance) -> bool {
    *p == Provenance::Human
}

fn claim_from_raw(raw: RawClaim) -> std::result::Result<Claim, String> {
    let mut evidence = BTreeMap::new();
    for (doc_id, rationales) in raw.evidence {
        let first = rationales
            .first()
            .ok_or_else(|| format!("claim {}: empty evidence list for doc {doc_id}", raw.id))?;
        let label = first.label;
        if rationales.iter().any(|r| r.label != label) {
            return Err(format!(
                "claim {}: doc {doc_id} mixes SUPPORT and CONTRADICT rationales",
                raw.id
            ));
        }
        let label_only = rationales.len() == 1 && first.sentences.is_empty();
        let entry = if label_only {
            if raw.provenance == Provenance::Human {
                return Err(format!(
                    "claim {}: doc {doc_id} has a rationale with no sentences",
                    raw.id
                ));
            }
            DocEvidence::label_only(label)
        } else {
            let mut sets = Vec::with_capacity(rationales.len());
            for r in &rationales {
                if r.sentences.is_empty() {
                    return Err(format!(
                        "claim {}: doc {doc_id} has a rationale with no sentences",
                        raw.id
                    ));
                }
                let set: BTreeSet<usize> = r.sentences.iter().copied().collect();
                if set.len() != r.sentences.len() {
                    return Err(format!(
                        "claim {}: doc {doc_id} repeats a sentence index within one rationale",
                        raw.id
                    ));
                }
                sets.push(set);
            }
            DocEvidence::with_rationales(label, sets)
        };
        evidence.insert(doc_id, entry);
    }
    Ok(Claim {
        id: raw.id,
        text: raw.claim,
        evidence,
        cited_doc_ids: raw.cited_doc_ids,
        provenance: raw.provenance,
    })
}

fn claim_to_raw(claim: &Claim) -> RawClaim {
    let evidence = claim
        .evidence
        .iter()
        .map(|(&doc_id, ev)| {
            let rationales = match &ev.rationales {
                None => vec![RawRationale {
                    sentences: Vec::new(),
                    label: ev.label,
                }],
                Some(sets) => sets
                    .iter()
                    .map(|s| RawRationale {
                        sentences: s.iter().copied().collect(),
                        label: ev.label,
                    })
                    .collect(),
            };
            (doc_id, rationales)
        })
        .collect();
    RawClaim {
        id: claim.id,
        claim: claim.text.clone(),
        evidence,
        cited_doc_ids: claim.cited_doc_ids.clone(),
        provenance: claim.provenance,
    }
}

/// Parses claims without cross-checking them against a corpus.
pub fn load_claims_unchecked(path: &Path) -> Result<Vec<Claim>> {
    let raws: Vec<RawClaim> = read_jsonl(path)?;
    let mut ids = BTreeSet::new();
    let mut claims = Vec::with_capacity(raws.len());
    for raw in raws {
        if !ids.insert(raw.id) {
            return Err(Error::Validation(format!(
                "{}: duplicate claim id {}",
                path.display(),
                raw.id
            )));
        }
        claims.push(claim_from_raw(raw).map_err(Error::Validation)?);
    }
    Ok(claims)
}

/// Parses claims and checks every evidence reference against `corpus`.
pub fn load_claims(path: &Path, corpus: &Corpus) -> Result<Vec<Claim>> {
    let claims = load_claims_unchecked(path)?;
    for claim in &claims {
        validate_claim(claim, corpus).map_err(Error::Validation)?;
    }
    Ok(claims)
}

pub fn save_claims(path: &Path, claims: &[Claim]) -> Result<()> {
    write_jsonl(path, claims.iter().map(claim_to_raw))
}

#[derive(Serialize, Deserialize)]
struct RawPredictedEvidence {
    label: String,
    #[serde(default)]
    sentences: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawPrediction {
    id: ClaimId,
    #[serde(default)]
    evidence: BTreeMap<DocId, RawPredictedEvidence>,
}

fn parse_predicted_label(label: &str) -> Option<Label> {
    match label.to_ascii_uppercase().as_str() {
        "SUPPORT" | "SUPPORTS" => Some(Label::Supports),
        "CONTRADICT" | "CONTRADICTS" | "REFUTES" | "REFUTE" => Some(Label::Refutes),
        "NEI" | "NOT_ENOUGH_INFO" | "NOTENOUGHINFO" => Some(Label::Nei),
        _ => None,
    }
}

/// Loads a predictions file. Documents absent from a claim's evidence map are
/// NEI and produce no record; explicit NEI entries are dropped the same way.
pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPrediction =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        for (doc_id, ev) in raw.evidence {
            let label = parse_predicted_label(&ev.label).ok_or_else(|| {
                Error::parse(path, i + 1, format!("unknown label {:?}", ev.label))
            })?;
            if label == Label::Nei {
                continue;
            }
            out.push(Prediction {
                claim_id: raw.id,
                doc_id,
                label,
                rationale: ev.sentences.into_iter().collect(),
            });
        }
    }
    Ok(out)
}

/// Writes one line per claim id appearing in `preds`, in ascending id order.
/// NEI predictions are encoded by omission.
pub fn save_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut by_claim: BTreeMap<ClaimId, BTreeMap<DocId, RawPredictedEvidence>> = BTreeMap::new();
    for p in preds {
        let entry = by_claim.entry(p.claim_id).or_default();
        if let Some(label) = p.label.evidence() {
            let label = match label {
                EvidenceLabel::Support => "SUPPORT",
                EvidenceLabel::Contradict => "CONTRADICT",
            };
            entry.insert(
                p.doc_id,
                RawPredictedEvidence {
                    label: label.to_string(),
                    sentences: p.rationale.iter().copied().collect(),
                },
            );
        }
    }
    write_jsonl(
        path,
        by_claim
            .into_iter()
            .map(|(id, evidence)| RawPrediction { id, evidence }),
    )
}
