use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{DatasetSpec, StageConfig};
use super::optim::{Adam, Schedule};
use super::{file_digest, sample_few_shot};
use crate::data::{
    load_claims, load_corpus, read_jsonl, write_jsonl, Claim, ClaimId, Corpus, DocId,
};
use crate::eval::{score_all, MetricResult, ScoringOptions, Variant};
use crate::verifier::{
    AssembledInput, Checkpoint, DatasetDigest, LossConfig, ModelParams, RationaleTarget,
    StageRecord, Target, Verifier, Vocab,
};
use crate::weak::HardNegatives;
use crate::{Error, Result};

/// One supervised (claim, abstract) pair, already tokenized.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub claim_id: ClaimId,
    pub doc_id: DocId,
    pub input: AssembledInput,
    pub target: Target,
}

impl Instance {
    pub fn has_rationale(&self) -> bool {
        matches!(self.target.rationale, RationaleTarget::Present(_))
    }
}

/// Instances for every evidence, cited and hard-negative document of each
/// claim, in claim order then ascending doc id.
pub fn build_instances(
    claims: &[Claim],
    corpus: &Corpus,
    negatives: &BTreeMap<ClaimId, Vec<DocId>>,
    verifier: &Verifier,
) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for claim in claims {
        let docs: BTreeSet<DocId> = claim
            .evidence
            .keys()
            .chain(&claim.cited_doc_ids)
            .chain(negatives.get(&claim.id).into_iter().flatten())
            .copied()
            .collect();
        for doc_id in docs {
            let doc = corpus.get(doc_id).ok_or_else(|| {
                Error::InvalidInput(format!("claim {}: doc {doc_id} not in corpus", claim.id))
            })?;
            out.push(Instance {
                claim_id: claim.id,
                doc_id,
                input: verifier.assemble(&claim.text, doc)?,
                target: Target::for_pair(claim, doc_id),
            });
        }
    }
    Ok(out)
}

/// What happened on one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatchEvent {
    pub epoch: usize,
    pub batch: usize,
    pub size: usize,
    /// Instances in the batch that carry rationale supervision.
    pub rationale_bearing: usize,
    pub loss: f64,
    pub learning_rate: f64,
    /// Largest absolute change of any rationale-head parameter.
    pub rationale_head_delta: f64,
    /// False when the loss or gradient was not finite; parameters are then
    /// left untouched.
    pub applied: bool,
}

/// Model, optimizer and loss settings advanced one batch at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub verifier: Verifier,
    pub adam: Adam,
    pub loss: LossConfig,
}

fn max_abs_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    let a = a.tensors();
    let b = b.tensors();
    a.iter()
        .zip(&b)
        .filter(|((name, _), _)| ModelParams::is_rationale_head(name))
        .flat_map(|((_, x), (_, y))| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

impl Trainer {
    pub fn new(verifier: Verifier, loss: LossConfig, schedule: Schedule) -> Self {
        let adam = Adam::new(&verifier.model.params, schedule);
        Trainer {
            verifier,
            adam,
            loss,
        }
    }

    /// Continues from a checkpoint, reusing its optimizer moments and step
    /// count when present.
    pub fn resume(checkpoint: &Checkpoint, schedule: Schedule) -> Self {
        let mut trainer = Trainer::new(checkpoint.verifier.clone(), checkpoint.loss, schedule);
        if let Some(state) = &checkpoint.optimizer {
            trainer.adam.state = state.clone();
        }
        trainer
    }

    pub fn checkpoint(&self, seed: u64, history: Vec<StageRecord>) -> Checkpoint {
        Checkpoint {
            verifier: self.verifier.clone(),
            loss: self.loss,
            seed,
            history,
            optimizer: Some(self.adam.state.clone()),
        }
    }

    /// Mean multitask loss over `batch` and one optimizer step on it.
    pub fn train_batch(&mut self, batch: &[&Instance]) -> Result<BatchEvent> {
        let model = &self.verifier.model;
        let mut gradient = model.params.zeros_like();
        let mut loss = 0.0;
        for instance in batch {
            let lg = model.loss_and_gradient(&instance.input, &instance.target, &self.loss)?;
            loss += lg.loss;
            for ((_, acc), (_, g)) in gradient
                .tensors_mut()
                .into_iter()
                .zip(lg.gradient.tensors())
            {
                *acc += g;
            }
        }
        let scale = 1.0 / batch.len().max(1) as f64;
        loss *= scale;
        let mut finite = loss.is_finite();
        for (_, g) in gradient.tensors_mut() {
            g.mapv_inplace(|x| x * scale);
            finite &= g.iter().all(|x| x.is_finite());
        }
        let mut event = BatchEvent {
            epoch: 0,
            batch: 0,
            size: batch.len(),
            rationale_bearing: batch.iter().filter(|i| i.has_rationale()).count(),
            loss,
            learning_rate: 0.0,
            rationale_head_delta: 0.0,
            applied: finite,
        };
        if finite {
            let before = self.verifier.model.params.clone();
            event.learning_rate = self.adam.step(&mut self.verifier.model.params, &gradient);
            event.rationale_head_delta = max_abs_diff(&before, &self.verifier.model.params);
        }
        Ok(event)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<Vec<MetricResult>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Divergence {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    /// Best dev checkpoint when a dev set is configured, otherwise the last.
    /// After a divergence, the parameters from just before the bad batch.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    /// Dev results of `checkpoint`.
    pub dev_results: Option<Vec<MetricResult>>,
    pub divergence: Option<Divergence>,
}

struct Dataset {
    instances: Vec<Instance>,
    weight: f64,
}

fn digest(role: &str, path: &Path) -> Result<DatasetDigest> {
    Ok(DatasetDigest {
        role: role.into(),
        path: path.display().to_string(),
        sha256: file_digest(path)?,
    })
}

struct LoadedSource {
    claims: Vec<Claim>,
    corpus: Corpus,
    negatives: BTreeMap<ClaimId, Vec<DocId>>,
}

fn load_source(
    spec: &DatasetSpec,
    config: &StageConfig,
    digests: &mut Vec<DatasetDigest>,
) -> Result<LoadedSource> {
    let corpus = load_corpus(&spec.corpus)?;
    let mut claims = load_claims(&spec.claims, &corpus)?;
    if let Some(fs) = &config.few_shot {
        claims = sample_few_shot(&claims, fs)?;
    }
    digests.push(digest("claims", &spec.claims)?);
    digests.push(digest("corpus", &spec.corpus)?);
    let mut negatives = BTreeMap::new();
    if let Some(path) = &spec.negatives {
        for hn in read_jsonl::<HardNegatives>(path)? {
            negatives.insert(hn.claim_id, hn.doc_ids);
        }
        digests.push(digest("negatives", path)?);
    }
    Ok(LoadedSource {
        claims,
        corpus,
        negatives,
    })
}

/// Vocabulary over every claim and abstract of the training sources.
fn build_vocab(sources: &[LoadedSource], max_size: usize) -> Vocab {
    let mut texts = Vec::new();
    for s in sources {
        texts.extend(s.claims.iter().map(|c| c.text.clone()));
        texts.extend(s.corpus.iter().map(|d| d.full_text()));
    }
    Vocab::build(texts.iter().map(String::as_str), max_size)
}

fn epoch_order(datasets: &[Dataset], rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut order = Vec::new();
    for (d, ds) in datasets.iter().enumerate() {
        let n = ds.instances.len();
        if n == 0 {
            continue;
        }
        let count = ((ds.weight * n as f64).round() as usize).max(1);
        for _ in 0..count / n {
            order.extend((0..n).map(|i| (d, i)));
        }
        let mut extra = index::sample(rng, n, count % n).into_vec();
        extra.sort_unstable();
        order.extend(extra.into_iter().map(|i| (d, i)));
    }
    order.shuffle(rng);
    order
}

fn epoch_len(datasets: &[Dataset]) -> usize {
    datasets
        .iter()
        .filter(|d| !d.instances.is_empty())
        .map(|d| ((d.weight * d.instances.len() as f64).round() as usize).max(1))
        .sum()
}

fn evaluate_dev(
    verifier: &Verifier,
    claims: &[Claim],
    corpus: &Corpus,
    threshold: f64,
) -> Result<Vec<MetricResult>> {
    let mut preds = Vec::new();
    for claim in claims {
        preds.extend(verifier.predict_batch(
            claim,
            &claim.oracle_candidates(),
            corpus,
            threshold,
        )?);
    }
    Ok(score_all(&preds, claims, &ScoringOptions::default()))
}

fn selection_f1(results: &[MetricResult]) -> f64 {
    results
        .iter()
        .find(|r| r.variant == Variant::AbstractLabelRationale)
        .map_or(0.0, |r| r.f1)
}

/// Trains one stage in memory. `observer` sees every batch.
///
/// With `init` set, the checkpoint's vocabulary and architecture are reused
/// (including its max length) and its history is carried forward; otherwise
/// a fresh model is seeded from `config.seed`.
pub fn run_stage(
    config: &StageConfig,
    mut observer: Option<&mut dyn FnMut(&BatchEvent)>,
) -> Result<StageOutcome> {
    config.validate().map_err(Error::Config)?;
    let init = config.init.as_deref().map(Checkpoint::load).transpose()?;
    let mut digests = Vec::new();
    let sources = config
        .datasets
        .iter()
        .map(|spec| load_source(spec, config, &mut digests))
        .collect::<Result<Vec<_>>>()?;
    let dev = match &config.dev {
        None => None,
        Some((claims_path, corpus_path)) => {
            let corpus = load_corpus(corpus_path)?;
            let claims = load_claims(claims_path, &corpus)?;
            digests.push(digest("dev_claims", claims_path)?);
            digests.push(digest("dev_corpus", corpus_path)?);
            Some((claims, corpus))
        }
    };

    let (verifier, mut history) = match init {
        Some(ckpt) => (ckpt.verifier, ckpt.history),
        None => {
            let vocab = build_vocab(&sources, config.vocab_size);
            let encoder = config.encoder_config(vocab.len());
            (Verifier::new(vocab, encoder, config.seed)?, Vec::new())
        }
    };
    let datasets = sources
        .iter()
        .zip(&config.datasets)
        .map(|(s, spec)| {
            Ok(Dataset {
                instances: build_instances(&s.claims, &s.corpus, &s.negatives, &verifier)?,
                weight: spec.weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let steps_per_epoch = epoch_len(&datasets).div_ceil(config.batch_size);
    let schedule = Schedule::new(
        config.learning_rate,
        (steps_per_epoch * config.epochs) as u64,
        config.warmup_fraction,
    );
    let loss = LossConfig {
        lambda_rationale: config.lambda_rationale,
    };
    let mut trainer = Trainer::new(verifier, loss, schedule);
    let record = |epochs_completed| StageRecord {
        name: config.name.clone(),
        seed: config.seed,
        epochs_completed,
        few_shot: config.few_shot.map(|f| f.n_examples),
        datasets: digests.clone(),
    };
    let with_record = |mut h: Vec<StageRecord>, epochs| {
        h.push(record(epochs));
        h
    };

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Checkpoint, Vec<MetricResult>)> = None;
    let mut stale = 0;
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        let order = epoch_order(&datasets, &mut rng);
        let mut total = 0.0;
        let mut lr = 0.0;
        let mut steps = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Instance> = chunk
                .iter()
                .map(|&(d, i)| &datasets[d].instances[i])
                .collect();
            let mut event = trainer.train_batch(&batch)?;
            event.epoch = epoch;
            event.batch = b;
            step += 1;
            if let Some(obs) = observer.as_mut() {
                obs(&event);
            }
            if !event.applied {
                log::error!("non-finite loss at epoch {epoch}, batch {b}");
                history = with_record(history, epoch);
                return Ok(StageOutcome {
                    checkpoint: trainer.checkpoint(config.seed, history),
                    log,
                    best_epoch: None,
                    dev_results: None,
                    divergence: Some(Divergence {
                        epoch,
                        step,
                        loss: event.loss,
                    }),
                });
            }
            total += event.loss;
            lr = event.learning_rate;
            steps += 1;
        }
        let dev_results = match &dev {
            None => None,
            Some((claims, corpus)) => Some(evaluate_dev(
                &trainer.verifier,
                claims,
                corpus,
                config.threshold,
            )?),
        };
        let entry = EpochLog {
            epoch,
            steps,
            mean_loss: total / steps.max(1) as f64,
            learning_rate: lr,
            dev: dev_results.clone(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4}{}",
            entry.mean_loss,
            dev_results
                .as_ref()
                .map(|r| format!(", dev label+rationale F1 {:.4}", selection_f1(r)))
                .unwrap_or_default()
        );
        log.push(entry);
        if let Some(results) = dev_results {
            let f1 = selection_f1(&results);
            if best.as_ref().is_none_or(|b| f1 > b.0) {
                let ckpt = trainer.checkpoint(config.seed, with_record(history.clone(), epoch + 1));
                best = Some((f1, epoch, ckpt, results));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    log::info!("no dev improvement for {stale} epochs; stopping");
                    break;
                }
            }
        }
    }

    Ok(match best {
        Some((_, epoch, checkpoint, results)) => StageOutcome {
            checkpoint,
            log,
            best_epoch: Some(epoch),
            dev_results: Some(results),
            divergence: None,
        },
        None => {
            let epochs = log.len();
            StageOutcome {
                checkpoint: trainer.checkpoint(config.seed, with_record(history, epochs)),
                log,
                best_epoch: None,
                dev_results: None,
                divergence: None,
            }
        }
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Runs a stage and writes the checkpoint, `<out>.log.jsonl` and the
/// resolved `<out>.config` when `config.out` is set. A divergence still
/// writes the last good checkpoint, then fails.
pub fn train(
    config: &StageConfig,
    observer: Option<&mut dyn FnMut(&BatchEvent)>,
) -> Result<StageOutcome> {
    let outcome = run_stage(config, observer)?;
    if let Some(out) = &config.out {
        outcome.checkpoint.save(out)?;
        write_jsonl(&sibling(out, ".log.jsonl"), &outcome.log)?;
        let cfg_path = sibling(out, ".config");
        fs::write(&cfg_path, config.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    }
    if let Some(d) = outcome.divergence {
        return Err(Error::Diverged {
            epoch: d.epoch,
            step: d.step,
            loss: d.loss,
        });
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaEntry {
    pub lambda: f64,
    pub dev_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaReport {
    /// Ascending in lambda.
    pub entries: Vec<LambdaEntry>,
    pub best_lambda: f64,
    pub best: StageOutcome,
}

/// Trains one model per grid value and keeps the one with the highest dev
/// abstract-level label+rationale F1; ties go to the smaller weight.
pub fn tune_lambda(grid: &[f64], config: &StageConfig) -> Result<LambdaReport> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if config.dev.is_none() {
        return Err(Error::Config("lambda tuning needs a dev set".into()));
    }
    let mut values = grid.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut entries = Vec::new();
    let mut best: Option<(f64, f64, StageOutcome)> = None;
    for lambda in values {
        let mut cfg = config.clone();
        cfg.lambda_rationale = lambda;
        cfg.out = None;
        let outcome = run_stage(&cfg, None)?;
        let f1 = outcome.dev_results.as_deref().map_or(0.0, selection_f1);
        entries.push(LambdaEntry { lambda, dev_f1: f1 });
        if best.as_ref().is_none_or(|b| f1 > b.1) {
            best = Some((lambda, f1, outcome));
        }
    }
    let (best_lambda, _, best) = best.expect("grid is non-empty");
    Ok(LambdaReport {
        entries,
        best_lambda,
        best,
    })
}
