//! Encoder/decoder segmentation model with a style-projection hook.
//!
//! ```text
//! image 3×H×W
//!   enc1 conv3×3 → relu → avgpool2          C×H/2×W/2
//!   enc2 conv3×3 → relu
//!   enc3 conv3×3 → relu                     ← style hook
//!   dec1 conv3×3 → relu
//!   dec2 conv3×3 → bilinear ×2              K×H×W logits
//! ```
//!
//! The hook splits the encoder output into style and content, projects the
//! style onto the bank and recomposes. Encoder convolutions can carry
//! low-rank adapters; with a frozen encoder only the adapters, the decoder
//! and the bank train.

mod infer;
mod lora;
mod optim;
mod train;

pub use infer::{forward, infer_test_time, predict, Inference, StyleDiagnostics};
pub use lora::{apply_lora, LoraAdapter, DEFAULT_LORA_ALPHA, DEFAULT_LORA_RANK};
pub use optim::AdamW;
pub use train::{train, train_with, Clock, EpochRecord, NoClock, TrainConfig, TrainReport};

use crate::bank::{self, BankVars, OrthoNormalization, StyleBank, WeightVars};
use crate::seed::{self, Rng};
use crate::style::{self, StyleVars};
use crate::tensor::{Graph, Tensor, Var};
use crate::{math, Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};

pub const ENCODER_LAYERS: [&str; 3] = ["enc1", "enc2", "enc3"];
pub const DECODER_LAYERS: [&str; 2] = ["dec1", "dec2"];

/// Whether the style hook projects (`Always`) or passes features through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    #[default]
    Always,
    Off,
}

impl ProjectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionMode::Always => "always",
            ProjectionMode::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "always" => Some(ProjectionMode::Always),
            "off" => Some(ProjectionMode::Off),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub channels: usize,
    pub classes: usize,
    pub bases: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            classes: 2,
            bases: bank::DEFAULT_BASES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `cout×cin×3×3`
    pub weight: Tensor,
    /// `cout`
    pub bias: Tensor,
}

impl ConvLayer {
    /// He-normal weights, zero bias.
    pub fn init(cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let std = math::sqrt(2.0 / (cin * 9) as f64);
        let normal = Normal::new(0.0, std).expect("valid normal");
        let w = (0..cout * cin * 9).map(|_| normal.sample(rng)).collect();
        Self {
            weight: Tensor::new(&[cout, cin, 3, 3], w).expect("consistent shape"),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[cout, cin, 3, 3]),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1] * 9
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: [ConvLayer; 3],
    pub decoder: [ConvLayer; 2],
    pub bank: StyleBank,
    /// At most one adapter per encoder layer.
    pub adapters: Vec<LoraAdapter>,
    pub lora_enabled: bool,
    /// Base encoder weights receive no gradient.
    pub encoder_frozen: bool,
    /// Hook mode the model was trained with; used by [`predict`].
    pub projection: ProjectionMode,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.channels == 0 || cfg.classes < 2 {
            return Err(Error::invalid("model needs ≥ 1 channel and ≥ 2 classes"));
        }
        let mut rng = seed::rng(seed, seed::STREAM_INIT);
        let c = cfg.channels;
        let encoder = [
            ConvLayer::init(3, c, &mut rng),
            ConvLayer::init(c, c, &mut rng),
            ConvLayer::init(c, c, &mut rng),
        ];
        let decoder = [
            ConvLayer::init(c, c, &mut rng),
            ConvLayer::init(c, cfg.classes, &mut rng),
        ];
        Ok(Self {
            encoder,
            decoder,
            bank: StyleBank::init(cfg.bases, c, seed)?,
            adapters: Vec::new(),
            lora_enabled: false,
            encoder_frozen: false,
            projection: ProjectionMode::Always,
        })
    }

    pub fn channels(&self) -> usize {
        self.encoder[0].weight.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.decoder[1].weight.shape()[0]
    }

    /// Adds a fresh adapter (B = 0) to every encoder layer and freezes the
    /// base encoder.
    pub fn attach_lora(&mut self, rank: usize, alpha: f64, seed: u64) -> Result<()> {
        let mut rng = seed::rng(seed, seed::STREAM_LORA);
        self.adapters = (0..ENCODER_LAYERS.len())
            .map(|i| LoraAdapter::new(i, &self.encoder[i], rank, alpha, &mut rng))
            .collect::<Result<_>>()?;
        self.lora_enabled = true;
        self.encoder_frozen = true;
        Ok(())
    }

    /// Parameter tensors in checkpoint order, with their names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, layer) in ENCODER_LAYERS
            .iter()
            .zip(&self.encoder)
            .chain(DECODER_LAYERS.iter().zip(&self.decoder))
        {
            out.push((format!("{name}.weight"), &layer.weight));
            out.push((format!("{name}.bias"), &layer.bias));
        }
        out.push((String::from("bank.raw_mu"), self.bank.raw_mu()));
        out.push((String::from("bank.raw_sigma"), self.bank.raw_sigma()));
        for a in &self.adapters {
            out.push((format!("lora.{}.a", ENCODER_LAYERS[a.layer]), &a.a));
            out.push((format!("lora.{}.b", ENCODER_LAYERS[a.layer]), &a.b));
        }
        out
    }

    /// Mutable views in the same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        let (mu, sigma) = self.bank.raw_mut();
        out.push(mu);
        out.push(sigma);
        for a in &mut self.adapters {
            out.push(&mut a.a);
            out.push(&mut a.b);
        }
        out
    }

    /// Which tensors (same order) receive gradients during training.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for _ in 0..ENCODER_LAYERS.len() {
            out.extend([!self.encoder_frozen; 2]);
        }
        out.extend([true; 2 * DECODER_LAYERS.len()]);
        out.extend([true; 2]);
        out.extend(self.adapters.iter().flat_map(|_| [self.lora_enabled; 2]));
        out
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in self.named_tensors() {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Places every parameter on `g`. With `train`, trainable tensors become
    /// differentiable leaves.
    pub fn bind(&self, g: &mut Graph, train: bool) -> Result<Bound> {
        let mask = self.trainable_mask();
        let vars: Vec<Var> = self
            .named_tensors()
            .into_iter()
            .zip(&mask)
            .map(|((_, t), &m)| g.leaf(t.clone().with_requires_grad(train && m)))
            .collect();
        let n_layers = ENCODER_LAYERS.len() + DECODER_LAYERS.len();
        let adapter_base = 2 * n_layers + 2;
        let mut encoder = [(vars[0], vars[1]), (vars[2], vars[3]), (vars[4], vars[5])];
        if self.lora_enabled {
            for (k, a) in self.adapters.iter().enumerate() {
                let (av, bv) = (vars[adapter_base + 2 * k], vars[adapter_base + 2 * k + 1]);
                let base = encoder[a.layer].0;
                encoder[a.layer].0 = lora::effective_weight_var(g, base, av, bv, a.scaling())?;
            }
        }
        let decoder = [(vars[6], vars[7]), (vars[8], vars[9])];
        let raw_mu = vars[2 * n_layers];
        let raw_sigma = vars[2 * n_layers + 1];
        let sigma = g.softplus(raw_sigma)?;
        let bank = BankVars {
            raw_mu,
            raw_sigma,
            mu: raw_mu,
            sigma,
        };
        Ok(Bound {
            vars,
            encoder,
            decoder,
            bank,
        })
    }
}

/// Parameter handles on one graph.
#[derive(Debug, Clone)]
pub struct Bound {
    /// Raw leaves in [`ModelParams::named_tensors`] order.
    pub vars: Vec<Var>,
    /// Effective `(weight, bias)` per encoder layer (adapters folded in).
    pub encoder: [(Var, Var); 3],
    pub decoder: [(Var, Var); 2],
    pub bank: BankVars,
}

/// Projection bookkeeping of one hook application.
#[derive(Debug, Clone, Copy)]
pub struct HookTrace {
    pub pre: StyleVars,
    pub post: StyleVars,
    pub weights: WeightVars,
}

fn check_image(shape: &[usize]) -> Result<()> {
    if shape.len() != 3 || shape[0] != 3 || shape[1] % 4 != 0 || shape[2] % 4 != 0 {
        return Err(Error::invalid(format!(
            "image must be 3×H×W with H, W multiples of 4, got {shape:?}"
        )));
    }
    Ok(())
}

pub fn encode_var(g: &mut Graph, b: &Bound, image: Var) -> Result<Var> {
    check_image(g.shape(image))?;
    let [(w1, b1), (w2, b2), (w3, b3)] = b.encoder;
    let x = g.conv2d(image, w1, b1)?;
    let x = g.relu(x)?;
    let x = g.avg_pool2(x)?;
    let x = g.conv2d(x, w2, b2)?;
    let x = g.relu(x)?;
    let x = g.conv2d(x, w3, b3)?;
    Ok(g.relu(x)?)
}

/// Replaces the style of `f` by its projection onto the bank, keeping the
/// content. `Off` returns `f` untouched.
pub fn style_hook_var(
    g: &mut Graph,
    f: Var,
    bank: &BankVars,
    mode: ProjectionMode,
) -> Result<(Var, Option<HookTrace>)> {
    match mode {
        ProjectionMode::Off => Ok((f, None)),
        ProjectionMode::Always => {
            let (pre, content) = style::decompose_var(g, f)?;
            let (post, weights) = bank::project_style_var(g, pre, bank)?;
            let out = style::recompose_var(g, post, content)?;
            Ok((out, Some(HookTrace { pre, post, weights })))
        }
    }
}

pub fn decode_var(g: &mut Graph, b: &Bound, f: Var) -> Result<Var> {
    let [(w1, b1), (w2, b2)] = b.decoder;
    let x = g.conv2d(f, w1, b1)?;
    let x = g.relu(x)?;
    let x = g.conv2d(x, w2, b2)?;
    Ok(g.upsample2(x)?)
}

/// Mean over pixels of `−Σ_k target_k · log softmax(logits)_k`.
pub fn seg_loss_var(g: &mut Graph, logits: Var, target: Var) -> Result<Var> {
    let (ls, ts) = (g.shape(logits), g.shape(target));
    if ls != ts || ls.len() != 3 {
        return Err(Error::ShapeMismatch {
            expected: ls.to_vec(),
            got: ts.to_vec(),
        });
    }
    let pixels = (ls[1] * ls[2]) as f64;
    let logp = g.log_softmax(logits, 0)?;
    let prod = g.mul(logp, target)?;
    let total = g.sum(prod)?;
    Ok(g.scale(total, -1.0 / pixels)?)
}

pub fn total_loss_var(g: &mut Graph, seg: Var, sty: Var, lambda_sty: f64) -> Result<Var> {
    let weighted = g.scale(sty, lambda_sty)?;
    Ok(g.add(seg, weighted)?)
}

pub fn orthogonality_var(g: &mut Graph, b: &Bound, norm: OrthoNormalization) -> Result<Var> {
    bank::orthogonality_loss_var(g, &b.bank, norm)
}

pub fn encode(image: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let mut g = Graph::new();
    let b = params.bind(&mut g, false)?;
    let x = g.constant(image.clone());
    let f = encode_var(&mut g, &b, x)?;
    Ok(g.value(f).clone())
}

pub fn style_hook(f: &Tensor, bank: &StyleBank, mode: ProjectionMode) -> Result<Tensor> {
    let mut g = Graph::new();
    let bv = bank.bind(&mut g, false)?;
    let x = g.constant(f.clone());
    let (out, _) = style_hook_var(&mut g, x, &bv, mode)?;
    Ok(g.value(out).clone())
}

pub fn decode(f: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let mut g = Graph::new();
    let b = params.bind(&mut g, false)?;
    let x = g.constant(f.clone());
    let out = decode_var(&mut g, &b, x)?;
    Ok(g.value(out).clone())
}

pub fn seg_loss(logits: &Tensor, soft_mask: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let t = g.constant(soft_mask.clone());
    let out = seg_loss_var(&mut g, l, t)?;
    Ok(g.value(out).item())
}

pub fn total_loss(l_seg: f64, l_sty: f64, lambda_sty: f64) -> Result<f64> {
    if !(lambda_sty >= 0.0) {
        return Err(Error::invalid("λ_sty must be non-negative"));
    }
    Ok(l_seg + lambda_sty * l_sty)
}
