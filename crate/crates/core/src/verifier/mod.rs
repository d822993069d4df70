//! Full-abstract verifier: input assembly, encoder, multitask heads, loss and
//! decoding.

mod assemble;
mod checkpoint;
mod model;
mod nn;
mod vocab;

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use assemble::{assemble_input, AssembledInput};
pub use checkpoint::{Checkpoint, DatasetDigest, OptimizerState, StageRecord};
pub use model::{
    apply_heads, attention_allowed, EncoderConfig, HeadParams, LayerParams, LossAndGradient,
    ModelParams, ToyModel,
};
pub use vocab::{Vocab, CLS_ID, PAD_ID, SEP_ID, UNK_ID};

use crate::data::{Claim, ClaimId, Corpus, DocId, Document, Label, Prediction};
use crate::retrieval::PairScorer;
use crate::{Error, Result};

/// Pre-decoding model output for one (claim, abstract) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifierOutput {
    /// Probabilities of (SUPPORTS, REFUTES, NEI).
    pub label_probs: [f64; 3],
    /// One probability per retained sentence.
    pub rationale_probs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_rationale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_rationale: 15.0,
        }
    }
}

/// Gold rationale supervision for one pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RationaleTarget {
    /// No rationale annotation; the rationale loss term is dropped.
    Absent,
    /// Gold rationale sentences (possibly none, e.g. for NEI pairs).
    Present(BTreeSet<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub label: Label,
    pub rationale: RationaleTarget,
}

impl Target {
    /// Supervision for `(claim, doc_id)`: the gold label, and the union of
    /// the document's rationales as the sentence targets.
    pub fn for_pair(claim: &Claim, doc_id: DocId) -> Self {
        match claim.evidence.get(&doc_id) {
            None => Target {
                label: Label::Nei,
                rationale: RationaleTarget::Present(BTreeSet::new()),
            },
            Some(ev) => Target {
                label: ev.label.into(),
                rationale: ev
                    .sentence_union()
                    .map_or(RationaleTarget::Absent, RationaleTarget::Present),
            },
        }
    }
}

/// `L_label + lambda * L_rationale` over probabilities: cross-entropy on the
/// label and the per-sentence mean binary cross-entropy on rationales. With
/// `gold_rationale == None` the rationale term is exactly zero.
pub fn multitask_loss(
    output: &VerifierOutput,
    gold_label: Label,
    gold_rationale: Option<&BTreeSet<usize>>,
    cfg: &LossConfig,
) -> f64 {
    let label_loss = -output.label_probs[gold_label.index()].ln();
    let Some(gold) = gold_rationale else {
        return label_loss;
    };
    let n = output.rationale_probs.len();
    if n == 0 {
        return label_loss;
    }
    let bce: f64 = output
        .rationale_probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if gold.contains(&i) {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    label_loss + cfg.lambda_rationale * bce / n as f64
}

/// Turns probabilities into a verdict that always satisfies the prediction
/// invariant: a non-NEI label with no sentence above `threshold` becomes NEI,
/// and NEI never carries rationale sentences.
pub fn decode(
    output: &VerifierOutput,
    threshold: f64,
    claim_id: ClaimId,
    doc_id: DocId,
) -> Prediction {
    let mut best = 0;
    for i in 1..3 {
        if output.label_probs[i] > output.label_probs[best] {
            best = i;
        }
    }
    let label = Label::from_index(best).expect("three labels");
    let rationale: BTreeSet<usize> = output
        .rationale_probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| i)
        .collect();
    if label == Label::Nei || rationale.is_empty() {
        return Prediction::nei(claim_id, doc_id);
    }
    Prediction {
        claim_id,
        doc_id,
        label,
        rationale,
    }
}

/// Anything that maps an assembled sequence to one vector per position.
///
/// Conforming encoders let global positions attend to and be attended by
/// every position and restrict the rest to their local window plus the
/// global positions. This is the slot for an externally pretrained encoder.
pub trait Encoder {
    fn hidden_size(&self) -> usize;
    fn max_length(&self) -> usize;
    fn encode(&self, input: &AssembledInput) -> Result<Array2<f64>>;
}

impl Encoder for ToyModel {
    fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    fn max_length(&self) -> usize {
        self.config.max_length
    }

    fn encode(&self, input: &AssembledInput) -> Result<Array2<f64>> {
        ToyModel::encode(self, input)
    }
}

/// Runs any encoder followed by the label head on `<s>` and the rationale
/// head on each sentence separator.
pub fn forward(
    encoder: &dyn Encoder,
    label_head: &HeadParams,
    rationale_head: &HeadParams,
    input: &AssembledInput,
) -> Result<VerifierOutput> {
    let hidden = encoder.encode(input)?;
    apply_heads(label_head, rationale_head, input, hidden.view())
}

/// A trained model together with its vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Verifier {
    pub vocab: Vocab,
    pub model: ToyModel,
}

impl Verifier {
    pub fn new(vocab: Vocab, config: EncoderConfig, seed: u64) -> Result<Self> {
        if config.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "vocab_size {} does not match vocabulary of {} tokens",
                config.vocab_size,
                vocab.len()
            )));
        }
        Ok(Verifier {
            vocab,
            model: ToyModel::new(config, seed)?,
        })
    }

    pub fn assemble(&self, claim: &str, document: &Document) -> Result<AssembledInput> {
        assemble_input(claim, document, &self.vocab, self.model.config.max_length)
    }

    pub fn predict_pair(&self, claim: &str, document: &Document) -> Result<VerifierOutput> {
        self.model.forward(&self.assemble(claim, document)?)
    }

    /// Assemble, forward and decode each candidate, in ascending doc id order.
    /// Failures are collected and reported together.
    pub fn predict_batch(
        &self,
        claim: &Claim,
        candidates: &[DocId],
        corpus: &Corpus,
        threshold: f64,
    ) -> Result<Vec<Prediction>> {
        let mut ids = candidates.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut preds = Vec::with_capacity(ids.len());
        let mut failures = Vec::new();
        for doc_id in ids {
            let result = corpus
                .get(doc_id)
                .ok_or_else(|| Error::InvalidInput(format!("doc {doc_id} not in corpus")))
                .and_then(|doc| self.predict_pair(&claim.text, doc));
            match result {
                Ok(output) => preds.push(decode(&output, threshold, claim.id, doc_id)),
                Err(e) => failures.push(format!("claim {}, doc {doc_id}: {e}", claim.id)),
            }
        }
        if failures.is_empty() {
            Ok(preds)
        } else {
            Err(Error::InvalidInput(failures.join("; ")))
        }
    }
}

/// Reranks with the verifier's belief that the abstract is evidence:
/// `1 - P(NEI)`.
pub struct VerifierScorer<'a>(pub &'a Verifier);

impl PairScorer for VerifierScorer<'_> {
    fn score(&self, claim: &str, document: &Document, _: f64) -> std::result::Result<f64, String> {
        self.0
            .predict_pair(claim, document)
            .map(|out| 1.0 - out.label_probs[Label::Nei.index()])
            .map_err(|e| e.to_string())
    }
}
