use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Claim, ClaimId, DocId};
use crate::retrieval::{search, InvertedIndex};
use crate::{Error, Result};

pub const DEFAULT_POOL_SIZE: usize = 1000;
pub const DEFAULT_SAMPLE_SIZE: usize = 20;

/// NEI training documents for one claim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardNegatives {
    pub claim_id: ClaimId,
    pub doc_ids: Vec<DocId>,
}

/// Samples `sample_size` of the top `pool_size` BM25 hits that are not gold
/// evidence. Sampling is uniform without replacement; the stream is keyed by
/// `(seed, claim id)` so each claim draws independently. Output keeps rank
/// order.
pub fn mine_hard_negatives(
    claim: &Claim,
    index: &InvertedIndex,
    pool_size: usize,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<DocId>> {
    if pool_size < sample_size {
        return Err(Error::Config(format!(
            "pool size {pool_size} is smaller than sample size {sample_size}"
        )));
    }
    let pool: Vec<DocId> = search(index, &claim.text, pool_size)
        .into_iter()
        .map(|(doc, _)| doc)
        .filter(|doc| !claim.evidence.contains_key(doc))
        .collect();
    if pool.len() <= sample_size {
        if pool.len() < sample_size {
            log::warn!(
                "claim {}: only {} negative candidates for a sample of {sample_size}",
                claim.id,
                pool.len()
            );
        }
        return Ok(pool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(claim.id);
    let mut picked = index::sample(&mut rng, pool.len(), sample_size).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i]).collect())
}
