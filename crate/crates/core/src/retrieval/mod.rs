//! Two-stage abstract retrieval: BM25 over title + abstract, then an
//! optional reranker over the head of the list.

mod index;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use index::{Bm25Params, InvertedIndex, Posting};

use crate::data::{Claim, ClaimId, Corpus, DocId, Document};
use crate::text::analyze;
use crate::{Error, Result};

/// Retrieval output for one claim, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    #[serde(rename = "id")]
    pub claim_id: ClaimId,
    pub doc_ids: Vec<DocId>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (DocId, f64)> + '_ {
        self.doc_ids
            .iter()
            .copied()
            .zip(self.scores.iter().copied())
    }

    fn from_entries(claim_id: ClaimId, entries: Vec<(DocId, f64)>) -> Self {
        let (doc_ids, scores) = entries.into_iter().unzip();
        RankedList {
            claim_id,
            doc_ids,
            scores,
        }
    }
}

/// Descending score, ascending doc id among equal scores.
pub(crate) fn rank_order(a: &(DocId, f64), b: &(DocId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Scores every indexed document against `query` and keeps the best `k`.
/// Documents sharing no term with the query score 0 and still take part, so
/// the list is shorter than `k` only when the index holds fewer documents.
pub fn search(index: &InvertedIndex, query: &str, k: usize) -> Vec<(DocId, f64)> {
    let tokens = analyze(query);
    let terms: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
    let mut scores: BTreeMap<DocId, f64> = index.doc_ids().map(|d| (d, 0.0)).collect();
    // Term order matches InvertedIndex::score so the float sums are identical.
    for term in terms {
        let postings = index.postings(term);
        if postings.is_empty() {
            continue;
        }
        let idf = index.idf(term);
        for p in postings {
            let doc_len = index.doc_length(p.doc_id).unwrap_or(0);
            *scores.get_mut(&p.doc_id).expect("posting for indexed doc") +=
                index.term_score(idf, p.tf, doc_len);
        }
    }
    let mut ranked: Vec<(DocId, f64)> = scores.into_iter().collect();
    ranked.sort_by(rank_order);
    ranked.truncate(k);
    ranked
}

/// First-stage retrieval of the top `k` abstracts for a claim.
pub fn retrieve(index: &InvertedIndex, claim: &Claim, k: usize) -> RankedList {
    RankedList::from_entries(claim.id, search(index, &claim.text, k))
}

/// Second-stage relevance model over (claim, abstract) pairs.
pub trait PairScorer {
    /// `first_stage` is the score the pair received from BM25.
    fn score(
        &self,
        claim: &str,
        document: &Document,
        first_stage: f64,
    ) -> std::result::Result<f64, String>;
}

/// Keeps the first-stage score.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityScorer;

impl PairScorer for IdentityScorer {
    fn score(&self, _: &str, _: &Document, first_stage: f64) -> std::result::Result<f64, String> {
        Ok(first_stage)
    }
}

/// Reorders the first `depth` entries of `ranked` by `scorer`, highest first;
/// equal scores keep their original relative order. Entries past `depth` are
/// left untouched. A `depth` beyond the list length covers the whole list.
///
/// Reranked entries carry the scorer's value, so the list is non-increasing
/// within the reranked prefix and within the untouched suffix separately.
pub fn rerank(
    ranked: &RankedList,
    claim: &Claim,
    corpus: &Corpus,
    scorer: &dyn PairScorer,
    depth: usize,
) -> Result<RankedList> {
    let depth = depth.min(ranked.len());
    let mut head = Vec::with_capacity(depth);
    for (rank, (doc_id, first_stage)) in ranked.entries().take(depth).enumerate() {
        let doc = corpus.get(doc_id).ok_or_else(|| Error::Scorer {
            claim_id: claim.id,
            doc_id,
            message: "document not in corpus".into(),
        })?;
        let score = scorer
            .score(&claim.text, doc, first_stage)
            .map_err(|message| Error::Scorer {
                claim_id: claim.id,
                doc_id,
                message,
            })?;
        if score.is_nan() {
            return Err(Error::Scorer {
                claim_id: claim.id,
                doc_id,
                message: "scorer returned NaN".into(),
            });
        }
        head.push((rank, doc_id, score));
    }
    head.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let entries = head
        .into_iter()
        .map(|(_, d, s)| (d, s))
        .chain(ranked.entries().skip(depth))
        .collect();
    Ok(RankedList::from_entries(ranked.claim_id, entries))
}
