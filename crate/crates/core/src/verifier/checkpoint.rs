use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{EncoderConfig, ModelParams, ToyModel};
use super::vocab::Vocab;
use super::{LossConfig, Verifier};
use crate::{Error, Result};

const FORMAT: &str = "sciverify-checkpoint";
const VERSION: u32 = 1;

/// A training input file identified by content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// One completed training stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
    pub epochs_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub few_shot: Option<usize>,
    pub datasets: Vec<DatasetDigest>,
}

/// Adaptive-moment optimizer state, kept so training can resume exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub verifier: Verifier,
    pub loss: LossConfig,
    pub seed: u64,
    pub history: Vec<StageRecord>,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawOptimizer {
    step: u64,
    first_moment: BTreeMap<String, TensorRecord>,
    second_moment: BTreeMap<String, TensorRecord>,
}

#[derive(Serialize, Deserialize)]
struct RawCheckpoint {
    format: String,
    version: u32,
    config: EncoderConfig,
    loss: LossConfig,
    seed: u64,
    vocab: Vec<String>,
    history: Vec<StageRecord>,
    tensors: BTreeMap<String, TensorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<RawOptimizer>,
}

fn to_registry(params: &ModelParams) -> BTreeMap<String, TensorRecord> {
    params
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let record = TensorRecord {
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            };
            (name, record)
        })
        .collect()
}

fn from_registry(
    config: &EncoderConfig,
    mut registry: BTreeMap<String, TensorRecord>,
) -> std::result::Result<ModelParams, String> {
    let mut params = ModelParams::init(config, 0);
    for (name, tensor) in params.tensors_mut() {
        let record = registry
            .remove(&name)
            .ok_or_else(|| format!("missing tensor {name}"))?;
        let shape = (tensor.nrows(), tensor.ncols());
        if record.shape != [shape.0, shape.1] {
            return Err(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                record.shape
            ));
        }
        *tensor = Array2::from_shape_vec(shape, record.data)
            .map_err(|e| format!("tensor {name}: {e}"))?;
    }
    if let Some(extra) = registry.keys().next() {
        return Err(format!("unexpected tensor {extra}"));
    }
    Ok(params)
}

impl Checkpoint {
    pub fn new(verifier: Verifier, loss: LossConfig, seed: u64) -> Self {
        Checkpoint {
            verifier,
            loss,
            seed,
            history: Vec::new(),
            optimizer: None,
        }
    }

    pub fn to_json(&self) -> String {
        let raw = RawCheckpoint {
            format: FORMAT.into(),
            version: VERSION,
            config: self.verifier.model.config.clone(),
            loss: self.loss,
            seed: self.seed,
            vocab: self.verifier.vocab.tokens().to_vec(),
            history: self.history.clone(),
            tensors: to_registry(&self.verifier.model.params),
            optimizer: self.optimizer.as_ref().map(|o| RawOptimizer {
                step: o.step,
                first_moment: to_registry(&o.first_moment),
                second_moment: to_registry(&o.second_moment),
            }),
        };
        serde_json::to_string(&raw).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let raw: RawCheckpoint = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if raw.format != FORMAT {
            return Err(format!("not a checkpoint (format {:?})", raw.format));
        }
        if raw.version != VERSION {
            return Err(format!("unsupported checkpoint version {}", raw.version));
        }
        raw.config.validate().map_err(|e| e.to_string())?;
        if raw.vocab.len() != raw.config.vocab_size {
            return Err("vocabulary size disagrees with config".into());
        }
        let params = from_registry(&raw.config, raw.tensors)?;
        let optimizer = match raw.optimizer {
            None => None,
            Some(o) => Some(OptimizerState {
                step: o.step,
                first_moment: from_registry(&raw.config, o.first_moment)?,
                second_moment: from_registry(&raw.config, o.second_moment)?,
            }),
        };
        Ok(Checkpoint {
            verifier: Verifier {
                vocab: Vocab::from_tokens(raw.vocab),
                model: ToyModel {
                    config: raw.config,
                    params,
                },
            },
            loss: raw.loss,
            seed: raw.seed,
            history: raw.history,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text).map_err(|m| Error::parse(path, 1, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Checkpoint {
        let vocab = Vocab::build(["alpha beta gamma"], 100);
        let mut config = EncoderConfig::toy(vocab.len());
        config.hidden = 8;
        config.heads = 2;
        config.ffn = 8;
        config.head_hidden = 4;
        config.max_length = 32;
        let verifier = Verifier::new(vocab, config, 5).unwrap();
        Checkpoint::new(verifier, LossConfig::default(), 5)
    }

    #[test]
    fn bit_exact_round_trip() {
        let mut ckpt = small();
        let params = ckpt.verifier.model.params.clone();
        ckpt.optimizer = Some(OptimizerState {
            step: 3,
            first_moment: params.clone(),
            second_moment: params.zeros_like(),
        });
        ckpt.history.push(StageRecord {
            name: "stage1".into(),
            seed: 5,
            epochs_completed: 2,
            few_shot: None,
            datasets: vec![],
        });
        let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn missing_tensor_is_reported() {
        let json = small()
            .to_json()
            .replace("\"final_norm.gain\"", "\"renamed\"");
        let err = Checkpoint::from_json(&json).unwrap_err();
        assert!(err.contains("final_norm.gain"), "{err}");
    }
}
