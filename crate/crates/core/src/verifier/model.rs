//! A small long-document encoder with Longformer-style attention masking,
//! plus the label and rationale heads.
//!
//! Attention from position `i` to `j` is allowed iff either position is
//! global or `|i - j| <= window`. The encoder is pre-LayerNorm with GELU
//! feed-forward blocks, learned positional embeddings (initialised
//! sinusoidally) and no dropout. Every operation has an exact backward pass,
//! which the training loop and the gradient checks share.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assemble::AssembledInput;
use super::nn::{
    gelu, gelu_grad, init_uniform, layer_norm, layer_norm_backward, linear, linear_backward,
    log_softmax, softmax, Mat, NormCache,
};
use super::{LossConfig, RationaleTarget, Target, VerifierOutput};
use crate::{Error, Result};

/// Shape of the toy encoder and its heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Local attention radius for non-global positions.
    pub window: usize,
    pub max_length: usize,
    /// Width of the first feed-forward layer in each prediction head.
    pub head_hidden: usize,
}

impl EncoderConfig {
    /// Desk-scale defaults: 2 layers, hidden 64, window 16.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            window: 16,
            max_length: 512,
            head_hidden: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size < 4 {
            return fail("vocab_size must cover the special tokens");
        }
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return fail("hidden must be a positive multiple of heads");
        }
        if self.ffn == 0 || self.head_hidden == 0 || self.max_length < 3 {
            return fail("ffn, head_hidden and max_length must be positive (max_length >= 3)");
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Whether attention from `i` to `j` is permitted under the local/global contract.
pub fn attention_allowed(global: &[bool], window: usize, i: usize, j: usize) -> bool {
    global[i] || global[j] || i.abs_diff(j) <= window
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub attn_norm_gain: Mat,
    pub attn_norm_bias: Mat,
    pub query_weight: Mat,
    pub query_bias: Mat,
    pub key_weight: Mat,
    pub key_bias: Mat,
    pub value_weight: Mat,
    pub value_bias: Mat,
    pub output_weight: Mat,
    pub output_bias: Mat,
    pub ffn_norm_gain: Mat,
    pub ffn_norm_bias: Mat,
    pub ffn_in_weight: Mat,
    pub ffn_in_bias: Mat,
    pub ffn_out_weight: Mat,
    pub ffn_out_bias: Mat,
}

/// Two feed-forward layers ending in class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub dense_weight: Mat,
    pub dense_bias: Mat,
    pub out_weight: Mat,
    pub out_bias: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub token_embedding: Mat,
    pub position_embedding: Mat,
    pub layers: Vec<LayerParams>,
    pub final_norm_gain: Mat,
    pub final_norm_bias: Mat,
    pub label_head: HeadParams,
    pub rationale_head: HeadParams,
}

macro_rules! visit_fields {
    ($self:ident, $iter:ident, $as_ref:ident) => {{
        let mut out = Vec::new();
        out.push((
            "embeddings.token".to_string(),
            $as_ref!($self.token_embedding),
        ));
        out.push((
            "embeddings.position".to_string(),
            $as_ref!($self.position_embedding),
        ));
        for (i, l) in $self.layers.$iter().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            out.push((p("attn_norm.gain"), $as_ref!(l.attn_norm_gain)));
            out.push((p("attn_norm.bias"), $as_ref!(l.attn_norm_bias)));
            out.push((p("attn.query.weight"), $as_ref!(l.query_weight)));
            out.push((p("attn.query.bias"), $as_ref!(l.query_bias)));
            out.push((p("attn.key.weight"), $as_ref!(l.key_weight)));
            out.push((p("attn.key.bias"), $as_ref!(l.key_bias)));
            out.push((p("attn.value.weight"), $as_ref!(l.value_weight)));
            out.push((p("attn.value.bias"), $as_ref!(l.value_bias)));
            out.push((p("attn.output.weight"), $as_ref!(l.output_weight)));
            out.push((p("attn.output.bias"), $as_ref!(l.output_bias)));
            out.push((p("ffn_norm.gain"), $as_ref!(l.ffn_norm_gain)));
            out.push((p("ffn_norm.bias"), $as_ref!(l.ffn_norm_bias)));
            out.push((p("ffn.in.weight"), $as_ref!(l.ffn_in_weight)));
            out.push((p("ffn.in.bias"), $as_ref!(l.ffn_in_bias)));
            out.push((p("ffn.out.weight"), $as_ref!(l.ffn_out_weight)));
            out.push((p("ffn.out.bias"), $as_ref!(l.ffn_out_bias)));
        }
        out.push((
            "final_norm.gain".to_string(),
            $as_ref!($self.final_norm_gain),
        ));
        out.push((
            "final_norm.bias".to_string(),
            $as_ref!($self.final_norm_bias),
        ));
        for (name, h) in [
            ("label_head", $as_ref!($self.label_head)),
            ("rationale_head", $as_ref!($self.rationale_head)),
        ] {
            out.push((format!("{name}.dense.weight"), $as_ref!(h.dense_weight)));
            out.push((format!("{name}.dense.bias"), $as_ref!(h.dense_bias)));
            out.push((format!("{name}.out.weight"), $as_ref!(h.out_weight)));
            out.push((format!("{name}.out.bias"), $as_ref!(h.out_bias)));
        }
        out
    }};
}

macro_rules! by_ref {
    ($e:expr) => {
        &$e
    };
}

macro_rules! by_mut {
    ($e:expr) => {
        &mut $e
    };
}

impl HeadParams {
    fn init(hidden: usize, head_hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        HeadParams {
            dense_weight: init_uniform(hidden, head_hidden, (1.0 / hidden as f64).sqrt(), rng),
            dense_bias: Array2::zeros((1, head_hidden)),
            out_weight: init_uniform(head_hidden, classes, (1.0 / head_hidden as f64).sqrt(), rng),
            out_bias: Array2::zeros((1, classes)),
        }
    }
}

impl ModelParams {
    /// Deterministic initialisation from `seed`.
    pub fn init(config: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let proj_std = (1.0 / h as f64).sqrt();
        let token_embedding = init_uniform(config.vocab_size, h, 1.0, &mut rng);
        let position_embedding = sinusoidal(config.max_length, h);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                attn_norm_gain: Array2::ones((1, h)),
                attn_norm_bias: Array2::zeros((1, h)),
                query_weight: init_uniform(h, h, proj_std, &mut rng),
                query_bias: Array2::zeros((1, h)),
                key_weight: init_uniform(h, h, proj_std, &mut rng),
                key_bias: Array2::zeros((1, h)),
                value_weight: init_uniform(h, h, proj_std, &mut rng),
                value_bias: Array2::zeros((1, h)),
                output_weight: init_uniform(h, h, proj_std, &mut rng),
                output_bias: Array2::zeros((1, h)),
                ffn_norm_gain: Array2::ones((1, h)),
                ffn_norm_bias: Array2::zeros((1, h)),
                ffn_in_weight: init_uniform(h, config.ffn, proj_std, &mut rng),
                ffn_in_bias: Array2::zeros((1, config.ffn)),
                ffn_out_weight: init_uniform(
                    config.ffn,
                    h,
                    (1.0 / config.ffn as f64).sqrt(),
                    &mut rng,
                ),
                ffn_out_bias: Array2::zeros((1, h)),
            })
            .collect();
        ModelParams {
            token_embedding,
            position_embedding,
            layers,
            final_norm_gain: Array2::ones((1, h)),
            final_norm_bias: Array2::zeros((1, h)),
            label_head: HeadParams::init(h, config.head_hidden, 3, &mut rng),
            rationale_head: HeadParams::init(h, config.head_hidden, 2, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Every tensor under its canonical name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        visit_fields!(self, iter, by_ref)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        visit_fields!(self, iter_mut, by_mut)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_rationale_head(name: &str) -> bool {
        name.starts_with("rationale_head.")
    }
}

fn sinusoidal(max_length: usize, hidden: usize) -> Mat {
    Array2::from_shape_fn((max_length, hidden), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / hidden as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

struct LayerCache {
    input: Mat,
    norm1: NormCache,
    normed1: Mat,
    query: Mat,
    key: Mat,
    value: Mat,
    probs: Vec<Mat>,
    context: Mat,
    norm2: NormCache,
    normed2: Mat,
    pre_act: Mat,
    act: Mat,
}

struct EncoderCache {
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    hidden: Mat,
}

struct HeadCache {
    rows: Mat,
    pre_act: Mat,
    act: Mat,
    logits: Mat,
}

fn masked_attention(
    config: &EncoderConfig,
    global: &[bool],
    query: &Mat,
    key: &Mat,
    value: &Mat,
) -> (Mat, Vec<Mat>) {
    let len = query.nrows();
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut context = Array2::zeros((len, config.hidden));
    let mut all_probs = Vec::with_capacity(config.heads);
    for h in 0..config.heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let q = query.slice(cols);
        let k = key.slice(cols);
        let v = value.slice(cols);
        let mut probs = q.dot(&k.t());
        for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for (j, x) in row.iter_mut().enumerate() {
                if attention_allowed(global, config.window, i, j) {
                    *x *= scale;
                    max = max.max(*x);
                } else {
                    *x = f64::NEG_INFINITY;
                }
            }
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = if *x == f64::NEG_INFINITY {
                    0.0
                } else {
                    (*x - max).exp()
                };
                sum += *x;
            }
            row.mapv_inplace(|x| x / sum);
        }
        context.slice_mut(cols).assign(&probs.dot(&v));
        all_probs.push(probs);
    }
    (context, all_probs)
}

#[allow(clippy::too_many_arguments)]
fn masked_attention_backward(
    config: &EncoderConfig,
    cache: &LayerCache,
    dcontext: &Mat,
) -> (Mat, Mat, Mat) {
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros(cache.query.raw_dim());
    let mut dk = Array2::zeros(cache.key.raw_dim());
    let mut dv = Array2::zeros(cache.value.raw_dim());
    for (h, probs) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let q = cache.query.slice(cols);
        let k = cache.key.slice(cols);
        let v = cache.value.slice(cols);
        let dctx = dcontext.slice(cols);
        let mut dscores = dctx.dot(&v.t());
        dv.slice_mut(cols).assign(&probs.t().dot(&dctx));
        for (mut drow, prow) in dscores.rows_mut().into_iter().zip(probs.rows()) {
            let dot: f64 = drow.iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
            for (d, &p) in drow.iter_mut().zip(prow.iter()) {
                *d = p * (*d - dot) * scale;
            }
        }
        dq.slice_mut(cols).assign(&dscores.dot(&k));
        dk.slice_mut(cols).assign(&dscores.t().dot(&q));
    }
    (dq, dk, dv)
}

fn head_forward(head: &HeadParams, rows: Mat) -> HeadCache {
    let pre_act = linear(rows.view(), &head.dense_weight, &head.dense_bias);
    let act = pre_act.mapv(gelu);
    let logits = linear(act.view(), &head.out_weight, &head.out_bias);
    HeadCache {
        rows,
        pre_act,
        act,
        logits,
    }
}

fn head_backward(
    head: &HeadParams,
    cache: &HeadCache,
    dlogits: &Mat,
    grad: &mut HeadParams,
) -> Mat {
    let dact = linear_backward(
        cache.act.view(),
        &head.out_weight,
        dlogits,
        &mut grad.out_weight,
        &mut grad.out_bias,
    );
    let dpre = dact * &cache.pre_act.mapv(gelu_grad);
    linear_backward(
        cache.rows.view(),
        &head.dense_weight,
        &dpre,
        &mut grad.dense_weight,
        &mut grad.dense_bias,
    )
}

fn select_rows(hidden: &Mat, positions: &[usize]) -> Mat {
    hidden.select(Axis(0), positions)
}

/// Result of one training-mode forward/backward pass.
pub struct LossAndGradient {
    pub loss: f64,
    pub label_loss: f64,
    pub rationale_loss: f64,
    pub output: VerifierOutput,
    pub gradient: ModelParams,
}

/// The toy encoder with its two prediction heads.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub config: EncoderConfig,
    pub params: ModelParams,
}

impl ToyModel {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, seed);
        Ok(ToyModel { config, params })
    }

    fn check_input(&self, input: &AssembledInput) -> Result<()> {
        if input.len() > self.config.max_length {
            return Err(Error::Model(format!(
                "sequence of {} tokens exceeds max_length {}",
                input.len(),
                self.config.max_length
            )));
        }
        if input.global_attention.len() != input.len() {
            return Err(Error::Model("global attention mask length mismatch".into()));
        }
        if let Some(&bad) = input
            .token_ids
            .iter()
            .find(|&&t| t as usize >= self.config.vocab_size)
        {
            return Err(Error::Model(format!("token id {bad} outside vocabulary")));
        }
        Ok(())
    }

    fn encode_cached(&self, input: &AssembledInput) -> EncoderCache {
        let p = &self.params;
        let len = input.len();
        let mut x = Array2::zeros((len, self.config.hidden));
        for (i, &t) in input.token_ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &p.token_embedding.row(t as usize);
            row += &p.position_embedding.row(i);
        }
        let mut caches = Vec::with_capacity(p.layers.len());
        for layer in &p.layers {
            let (normed1, norm1) = layer_norm(&x, &layer.attn_norm_gain, &layer.attn_norm_bias);
            let query = linear(normed1.view(), &layer.query_weight, &layer.query_bias);
            let key = linear(normed1.view(), &layer.key_weight, &layer.key_bias);
            let value = linear(normed1.view(), &layer.value_weight, &layer.value_bias);
            let (context, probs) =
                masked_attention(&self.config, &input.global_attention, &query, &key, &value);
            let x1 = &x + &linear(context.view(), &layer.output_weight, &layer.output_bias);
            let (normed2, norm2) = layer_norm(&x1, &layer.ffn_norm_gain, &layer.ffn_norm_bias);
            let pre_act = linear(normed2.view(), &layer.ffn_in_weight, &layer.ffn_in_bias);
            let act = pre_act.mapv(gelu);
            let x2 = &x1 + &linear(act.view(), &layer.ffn_out_weight, &layer.ffn_out_bias);
            caches.push(LayerCache {
                input: x,
                norm1,
                normed1,
                query,
                key,
                value,
                probs,
                context,
                norm2,
                normed2,
                pre_act,
                act,
            });
            x = x2;
        }
        let (hidden, final_norm) = layer_norm(&x, &p.final_norm_gain, &p.final_norm_bias);
        EncoderCache {
            layers: caches,
            final_norm,
            hidden,
        }
    }

    fn encode_backward(
        &self,
        input: &AssembledInput,
        cache: &EncoderCache,
        dhidden: &Mat,
        grad: &mut ModelParams,
    ) {
        let p = &self.params;
        let mut dx = layer_norm_backward(
            &cache.final_norm,
            &p.final_norm_gain,
            dhidden,
            &mut grad.final_norm_gain,
            &mut grad.final_norm_bias,
        );
        for ((layer, lc), lg) in p
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            // x2 = x1 + ffn(ln2(x1))
            let dact = linear_backward(
                lc.act.view(),
                &layer.ffn_out_weight,
                &dx,
                &mut lg.ffn_out_weight,
                &mut lg.ffn_out_bias,
            );
            let dpre = dact * &lc.pre_act.mapv(gelu_grad);
            let dnormed2 = linear_backward(
                lc.normed2.view(),
                &layer.ffn_in_weight,
                &dpre,
                &mut lg.ffn_in_weight,
                &mut lg.ffn_in_bias,
            );
            dx += &layer_norm_backward(
                &lc.norm2,
                &layer.ffn_norm_gain,
                &dnormed2,
                &mut lg.ffn_norm_gain,
                &mut lg.ffn_norm_bias,
            );
            // x1 = x + attn(ln1(x))
            let dcontext = linear_backward(
                lc.context.view(),
                &layer.output_weight,
                &dx,
                &mut lg.output_weight,
                &mut lg.output_bias,
            );
            let (dq, dk, dv) = masked_attention_backward(&self.config, lc, &dcontext);
            let mut dnormed1 = linear_backward(
                lc.normed1.view(),
                &layer.query_weight,
                &dq,
                &mut lg.query_weight,
                &mut lg.query_bias,
            );
            dnormed1 += &linear_backward(
                lc.normed1.view(),
                &layer.key_weight,
                &dk,
                &mut lg.key_weight,
                &mut lg.key_bias,
            );
            dnormed1 += &linear_backward(
                lc.normed1.view(),
                &layer.value_weight,
                &dv,
                &mut lg.value_weight,
                &mut lg.value_bias,
            );
            dx += &layer_norm_backward(
                &lc.norm1,
                &layer.attn_norm_gain,
                &dnormed1,
                &mut lg.attn_norm_gain,
                &mut lg.attn_norm_bias,
            );
            debug_assert_eq!(lc.input.nrows(), dx.nrows());
        }
        for (i, &t) in input.token_ids.iter().enumerate() {
            let row = dx.row(i);
            let mut tok = grad.token_embedding.row_mut(t as usize);
            tok += &row;
            let mut pos = grad.position_embedding.row_mut(i);
            pos += &row;
        }
    }

    /// One vector per input position.
    pub fn encode(&self, input: &AssembledInput) -> Result<Mat> {
        self.check_input(input)?;
        Ok(self.encode_cached(input).hidden)
    }

    /// Attention probabilities per layer and head (`len x len` each).
    pub fn attention_weights(&self, input: &AssembledInput) -> Result<Vec<Vec<Mat>>> {
        self.check_input(input)?;
        Ok(self
            .encode_cached(input)
            .layers
            .into_iter()
            .map(|l| l.probs)
            .collect())
    }

    fn heads_forward(&self, input: &AssembledInput, hidden: &Mat) -> (HeadCache, HeadCache) {
        let label = head_forward(
            &self.params.label_head,
            select_rows(hidden, &[input.cls_position]),
        );
        let rationale = head_forward(
            &self.params.rationale_head,
            select_rows(hidden, &input.sentence_marker_positions),
        );
        (label, rationale)
    }

    pub fn forward(&self, input: &AssembledInput) -> Result<VerifierOutput> {
        let hidden = self.encode(input)?;
        apply_heads(
            &self.params.label_head,
            &self.params.rationale_head,
            input,
            hidden.view(),
        )
    }

    /// Multitask loss computed from logits, as used for training.
    pub fn loss(&self, input: &AssembledInput, target: &Target, cfg: &LossConfig) -> Result<f64> {
        self.check_input(input)?;
        let cache = self.encode_cached(input);
        let (label, rationale) = self.heads_forward(input, &cache.hidden);
        Ok(loss_terms(&label.logits, &rationale.logits, target, cfg).0)
    }

    /// Loss plus the exact gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        input: &AssembledInput,
        target: &Target,
        cfg: &LossConfig,
    ) -> Result<LossAndGradient> {
        self.check_input(input)?;
        let cache = self.encode_cached(input);
        let (label, rationale) = self.heads_forward(input, &cache.hidden);
        let (loss, label_loss, rationale_loss, dlabel, drationale) =
            loss_terms(&label.logits, &rationale.logits, target, cfg);

        let mut gradient = self.params.zeros_like();
        let mut dhidden = Array2::zeros(cache.hidden.raw_dim());
        let dcls = head_backward(
            &self.params.label_head,
            &label,
            &dlabel,
            &mut gradient.label_head,
        );
        {
            let mut row = dhidden.row_mut(input.cls_position);
            row += &dcls.row(0);
        }
        if let Some(drationale) = drationale {
            let dmarkers = head_backward(
                &self.params.rationale_head,
                &rationale,
                &drationale,
                &mut gradient.rationale_head,
            );
            for (k, &pos) in input.sentence_marker_positions.iter().enumerate() {
                let mut row = dhidden.row_mut(pos);
                row += &dmarkers.row(k);
            }
        }
        self.encode_backward(input, &cache, &dhidden, &mut gradient);

        let output = output_from_logits(&label.logits, &rationale.logits);
        Ok(LossAndGradient {
            loss,
            label_loss,
            rationale_loss,
            output,
            gradient,
        })
    }
}

fn output_from_logits(label: &Mat, rationale: &Mat) -> VerifierOutput {
    let label_probs = softmax(label.row(0).as_slice().expect("contiguous"));
    let rationale_probs = rationale
        .rows()
        .into_iter()
        .map(|r| softmax(&[r[0], r[1]])[1])
        .collect();
    VerifierOutput {
        label_probs: [label_probs[0], label_probs[1], label_probs[2]],
        rationale_probs,
    }
}

/// Returns total, label and rationale losses plus logit gradients. The
/// rationale gradient is `None` when the rationale term is switched off.
fn loss_terms(
    label_logits: &Mat,
    rationale_logits: &Mat,
    target: &Target,
    cfg: &LossConfig,
) -> (f64, f64, f64, Mat, Option<Mat>) {
    let row: Vec<f64> = label_logits.row(0).to_vec();
    let gold = target.label.index();
    let label_loss = -log_softmax(&row)[gold];
    let mut dlabel = Array2::from_shape_vec((1, 3), softmax(&row)).expect("3 logits");
    dlabel[[0, gold]] -= 1.0;

    let n = rationale_logits.nrows();
    let (rationale_loss, drationale) = match &target.rationale {
        RationaleTarget::Present(gold_set) if n > 0 => {
            let weight = cfg.lambda_rationale / n as f64;
            let mut d = Array2::zeros((n, 2));
            let mut total = 0.0;
            for (i, r) in rationale_logits.rows().into_iter().enumerate() {
                let logits = [r[0], r[1]];
                let y = usize::from(gold_set.contains(&i));
                total -= log_softmax(&logits)[y];
                let p = softmax(&logits);
                d[[i, 0]] = weight * (p[0] - f64::from(u8::from(y == 0)));
                d[[i, 1]] = weight * (p[1] - f64::from(u8::from(y == 1)));
            }
            (total / n as f64, Some(d))
        }
        _ => (0.0, None),
    };
    let total = match target.rationale {
        RationaleTarget::Absent => label_loss,
        RationaleTarget::Present(_) => label_loss + cfg.lambda_rationale * rationale_loss,
    };
    (total, label_loss, rationale_loss, dlabel, drationale)
}

/// Applies both heads to an encoding produced by any conforming encoder.
pub fn apply_heads(
    label_head: &HeadParams,
    rationale_head: &HeadParams,
    input: &AssembledInput,
    hidden: ArrayView2<f64>,
) -> Result<VerifierOutput> {
    if hidden.nrows() != input.len() {
        return Err(Error::Model(format!(
            "encoder returned {} vectors for {} positions",
            hidden.nrows(),
            input.len()
        )));
    }
    if hidden.ncols() != label_head.dense_weight.nrows() {
        return Err(Error::Model(format!(
            "encoder width {} does not match head input {}",
            hidden.ncols(),
            label_head.dense_weight.nrows()
        )));
    }
    let hidden = hidden.to_owned();
    let label = head_forward(label_head, select_rows(&hidden, &[input.cls_position]));
    let rationale = head_forward(
        rationale_head,
        select_rows(&hidden, &input.sentence_marker_positions),
    );
    Ok(output_from_logits(&label.logits, &rationale.logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use std::collections::BTreeSet;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 12,
            hidden: 8,
            layers: 2,
            heads: 2,
            ffn: 12,
            window: 2,
            max_length: 24,
            head_hidden: 6,
        }
    }

    fn input(tokens: Vec<u32>, claim_len: usize, markers: Vec<usize>) -> AssembledInput {
        let mut global = vec![false; tokens.len()];
        for g in global.iter_mut().take(claim_len + 2) {
            *g = true;
        }
        for &m in &markers {
            global[m] = true;
        }
        global[claim_len + 1] = true;
        AssembledInput {
            token_ids: tokens,
            cls_position: 0,
            claim_len,
            sentence_marker_positions: markers,
            global_attention: global,
            truncated: false,
        }
    }

    fn sample_input() -> AssembledInput {
        // <s> 4 5 </s> 6 </s> 7 8 9 </s> 10 11 4 5 </s>
        input(
            vec![2, 4, 5, 3, 6, 3, 7, 8, 9, 3, 10, 11, 4, 5, 3],
            2,
            vec![9, 14],
        )
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let model = ToyModel::new(tiny_config(), 11).unwrap();
        let x = sample_input();
        let target = Target {
            label: Label::Refutes,
            rationale: RationaleTarget::Present([1].into_iter().collect::<BTreeSet<_>>()),
        };
        let cfg = LossConfig {
            lambda_rationale: 3.0,
        };
        let analytic = model.loss_and_gradient(&x, &target, &cfg).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _)| n).collect();
        for (ti, name) in names.iter().enumerate() {
            let shape = model.params.tensors()[ti].1.raw_dim();
            for idx in 0..shape[0] * shape[1] {
                let (r, c) = (idx / shape[1], idx % shape[1]);
                let mut plus = model.clone();
                plus.params.tensors_mut()[ti].1[[r, c]] += h;
                let mut minus = model.clone();
                minus.params.tensors_mut()[ti].1[[r, c]] -= h;
                let numeric = (plus.loss(&x, &target, &cfg).unwrap()
                    - minus.loss(&x, &target, &cfg).unwrap())
                    / (2.0 * h);
                let exact = analytic.gradient.tensors()[ti].1[[r, c]];
                let denom = numeric.abs().max(exact.abs()).max(1e-6);
                let rel = (numeric - exact).abs() / denom;
                worst = worst.max(rel);
                assert!(
                    rel < 1e-4,
                    "{name}[{r},{c}]: analytic {exact} numeric {numeric}"
                );
            }
        }
        eprintln!("worst relative error {worst:e}");
    }

    #[test]
    fn attention_respects_window_and_globals() {
        let model = ToyModel::new(tiny_config(), 1).unwrap();
        let x = sample_input();
        for layer in model.attention_weights(&x).unwrap() {
            for probs in layer {
                for ((i, j), &p) in probs.indexed_iter() {
                    if !attention_allowed(&x.global_attention, 2, i, j) {
                        assert_eq!(p, 0.0);
                    }
                }
            }
        }
    }
}
