use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::verifier::EncoderConfig;
use crate::{Error, Result};

/// One training source. `weight` scales how many of its instances enter
/// each epoch: 2.0 repeats every instance twice, 0.5 draws half of them.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub claims: PathBuf,
    pub corpus: PathBuf,
    pub weight: f64,
    /// Hard-negative file adding NEI pairs for this dataset's claims.
    pub negatives: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FewShotSpec {
    pub n_examples: usize,
    pub seed: u64,
}

impl Default for FewShotSpec {
    fn default() -> Self {
        FewShotSpec {
            n_examples: 45,
            seed: 0,
        }
    }
}

/// Architecture of a freshly initialized toy encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub window: usize,
    pub head_hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let toy = EncoderConfig::toy(0);
        ModelShape {
            hidden: toy.hidden,
            layers: toy.layers,
            heads: toy.heads,
            ffn: toy.ffn,
            window: toy.window,
            head_hidden: toy.head_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub name: String,
    pub datasets: Vec<DatasetSpec>,
    /// Dev claims and corpus, scored in the oracle setting after every epoch.
    pub dev: Option<(PathBuf, PathBuf)>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub lambda_rationale: f64,
    pub seed: u64,
    pub max_length: usize,
    pub threshold: f64,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Checkpoint to continue from; otherwise a fresh model is built.
    pub init: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub few_shot: Option<FewShotSpec>,
    pub vocab_size: usize,
    pub model: ModelShape,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            name: "stage".into(),
            datasets: Vec::new(),
            dev: None,
            epochs: 3,
            batch_size: 8,
            learning_rate: 1e-4,
            warmup_fraction: 0.1,
            lambda_rationale: 15.0,
            seed: 0,
            max_length: 512,
            threshold: 0.5,
            patience: 5,
            init: None,
            out: None,
            few_shot: None,
            vocab_size: 20_000,
            model: ModelShape::default(),
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

impl StageConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> std::result::Result<Self, String> {
        let mut cfg = StageConfig::default();
        let path = |v: &str| base.join(v);
        let mut few_shot_seed = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let at = |e: String| format!("line {}: {e}", n + 1);
            match key {
                "name" => cfg.name = value.to_string(),
                "dataset" => cfg.datasets.push(parse_dataset(value, base).map_err(at)?),
                "dev" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    let [claims, corpus] = parts[..] else {
                        return Err(at("dev: expected <claims> <corpus>".into()));
                    };
                    cfg.dev = Some((path(claims), path(corpus)));
                }
                "epochs" => cfg.epochs = number(key, value).map_err(at)?,
                "batch_size" => cfg.batch_size = number(key, value).map_err(at)?,
                "learning_rate" => cfg.learning_rate = number(key, value).map_err(at)?,
                "warmup_fraction" => cfg.warmup_fraction = number(key, value).map_err(at)?,
                "lambda_rationale" => cfg.lambda_rationale = number(key, value).map_err(at)?,
                "seed" => cfg.seed = number(key, value).map_err(at)?,
                "max_length" => cfg.max_length = number(key, value).map_err(at)?,
                "threshold" => cfg.threshold = number(key, value).map_err(at)?,
                "patience" => cfg.patience = number(key, value).map_err(at)?,
                "init" => cfg.init = Some(path(value)),
                "out" => cfg.out = Some(path(value)),
                "few_shot" => {
                    cfg.few_shot = Some(FewShotSpec {
                        n_examples: number(key, value).map_err(at)?,
                        seed: 0,
                    })
                }
                "few_shot_seed" => few_shot_seed = Some(number(key, value).map_err(at)?),
                "vocab_size" => cfg.vocab_size = number(key, value).map_err(at)?,
                "hidden" => cfg.model.hidden = number(key, value).map_err(at)?,
                "layers" => cfg.model.layers = number(key, value).map_err(at)?,
                "heads" => cfg.model.heads = number(key, value).map_err(at)?,
                "ffn" => cfg.model.ffn = number(key, value).map_err(at)?,
                "window" => cfg.model.window = number(key, value).map_err(at)?,
                "head_hidden" => cfg.model.head_hidden = number(key, value).map_err(at)?,
                other => return Err(at(format!("unknown key {other:?}"))),
            }
        }
        if let (Some(fs), Some(seed)) = (cfg.few_shot.as_mut(), few_shot_seed) {
            fs.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        StageConfig::parse(&text, base).map_err(Error::Config)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.datasets.is_empty() {
            return Err("at least one dataset is required".into());
        }
        if let Some(d) = self
            .datasets
            .iter()
            .find(|d| !(d.weight > 0.0 && d.weight.is_finite()))
        {
            return Err(format!("dataset weight must be positive, got {}", d.weight));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err("warmup_fraction must lie in [0, 1]".into());
        }
        if !(self.lambda_rationale >= 0.0 && self.lambda_rationale.is_finite()) {
            return Err("lambda_rationale must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err("threshold must lie in [0, 1]".into());
        }
        if self.few_shot.is_some_and(|f| f.n_examples == 0) {
            return Err("few_shot must be positive".into());
        }
        Ok(())
    }

    /// Encoder configuration for a fresh model over `vocab_len` tokens.
    pub fn encoder_config(&self, vocab_len: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size: vocab_len,
            hidden: self.model.hidden,
            layers: self.model.layers,
            heads: self.model.heads,
            ffn: self.model.ffn,
            window: self.model.window,
            max_length: self.max_length,
            head_hidden: self.model.head_hidden,
        }
    }

    /// Every setting, one `key = value` per line, with resolved paths.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("name", self.name.clone());
        for d in &self.datasets {
            let mut v = format!(
                "{} {} weight={}",
                d.claims.display(),
                d.corpus.display(),
                d.weight
            );
            if let Some(n) = &d.negatives {
                let _ = write!(v, " negatives={}", n.display());
            }
            put("dataset", v);
        }
        if let Some((c, p)) = &self.dev {
            put("dev", format!("{} {}", c.display(), p.display()));
        }
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", format!("{:e}", self.learning_rate));
        put("warmup_fraction", self.warmup_fraction.to_string());
        put("lambda_rationale", self.lambda_rationale.to_string());
        put("seed", self.seed.to_string());
        put("max_length", self.max_length.to_string());
        put("threshold", self.threshold.to_string());
        put("patience", self.patience.to_string());
        if let Some(p) = &self.init {
            put("init", p.display().to_string());
        }
        if let Some(p) = &self.out {
            put("out", p.display().to_string());
        }
        if let Some(f) = self.few_shot {
            put("few_shot", f.n_examples.to_string());
            put("few_shot_seed", f.seed.to_string());
        }
        put("vocab_size", self.vocab_size.to_string());
        put("hidden", self.model.hidden.to_string());
        put("layers", self.model.layers.to_string());
        put("heads", self.model.heads.to_string());
        put("ffn", self.model.ffn.to_string());
        put("window", self.model.window.to_string());
        put("head_hidden", self.model.head_hidden.to_string());
        out
    }
}

fn parse_dataset(value: &str, base: &Path) -> std::result::Result<DatasetSpec, String> {
    let mut parts = value.split_whitespace();
    let (Some(claims), Some(corpus)) = (parts.next(), parts.next()) else {
        return Err("dataset: expected <claims> <corpus> [weight=W] [negatives=F]".into());
    };
    let mut spec = DatasetSpec {
        claims: base.join(claims),
        corpus: base.join(corpus),
        weight: 1.0,
        negatives: None,
    };
    for part in parts {
        match part.split_once('=') {
            Some(("weight", w)) => spec.weight = number("weight", w)?,
            Some(("negatives", p)) => spec.negatives = Some(base.join(p)),
            _ => return Err(format!("dataset: unexpected {part:?}")),
        }
    }
    Ok(spec)
}
