//! Two-stage finetuning, few-shot subsampling and rationale-weight tuning.

mod config;
mod optim;
mod stage;

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use config::{DatasetSpec, FewShotSpec, ModelShape, StageConfig};
pub use optim::{Adam, Schedule};
pub use stage::{
    build_instances, run_stage, train, tune_lambda, BatchEvent, Divergence, EpochLog, Instance,
    LambdaEntry, LambdaReport, StageOutcome, Trainer,
};

use crate::data::Claim;
use crate::verifier::StageRecord;
use crate::{Error, Result};

/// Uniform sample of `spec.n_examples` claims without replacement, in their
/// original order.
pub fn sample_few_shot(claims: &[Claim], spec: &FewShotSpec) -> Result<Vec<Claim>> {
    if spec.n_examples > claims.len() {
        return Err(Error::Config(format!(
            "few-shot size {} exceeds the {} available claims",
            spec.n_examples,
            claims.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = index::sample(&mut rng, claims.len(), spec.n_examples).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| claims[i].clone()).collect())
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Fails if any training stage in `history` consumed a file whose content
/// matches one of `held_out`. Used to show that a zero-shot model never saw
/// the target-domain training data.
pub fn audit_unseen(history: &[StageRecord], held_out: &[&Path]) -> Result<()> {
    for path in held_out {
        let digest = file_digest(path)?;
        for stage in history {
            if let Some(d) = stage.datasets.iter().find(|d| d.sha256 == digest) {
                return Err(Error::Validation(format!(
                    "stage {:?} trained on {} (as {}), which matches held-out {}",
                    stage.name,
                    d.path,
                    d.role,
                    path.display()
                )));
            }
        }
    }
    Ok(())
}
