use super::{
    decode_var, encode_var, orthogonality_var, predict, seg_loss_var, style_hook_var,
    total_loss_var, AdamW, ModelConfig, ModelParams, ProjectionMode, DEFAULT_LORA_ALPHA,
    DEFAULT_LORA_RANK,
};
use crate::augment::{self, Pairing};
use crate::bank::{OrthoNormalization, DEFAULT_BASES};
use crate::data::{DomainDataset, Sample};
use crate::metrics::{self, Scores};
use crate::seed::{self, Rng};
use crate::tensor::Graph;
use crate::{Error, Result};
use alloc::borrow::Cow;
use alloc::vec::Vec;
use rand::Rng as _;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Weight of the orthogonality penalty in the total loss.
    pub lambda_sty: f64,
    pub projection: ProjectionMode,
    /// Probability that a batch is mixed.
    pub mixup_prob: f64,
    pub pairing: Pairing,
    pub bases: usize,
    pub channels: usize,
    pub ortho_norm: OrthoNormalization,
    /// Supervised encoder pretraining epochs before freezing the encoder
    /// and attaching adapters. Zero trains everything from scratch.
    pub pretrain_epochs: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            lambda_sty: 0.1,
            projection: ProjectionMode::Always,
            mixup_prob: 0.5,
            pairing: Pairing::CrossDomain,
            bases: DEFAULT_BASES,
            channels: 16,
            ortho_norm: OrthoNormalization::OrderedPairs,
            pretrain_epochs: 0,
            lora_rank: DEFAULT_LORA_RANK,
            lora_alpha: DEFAULT_LORA_ALPHA,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && self.lambda_sty >= 0.0
            && (0.0..=1.0).contains(&self.mixup_prob)
            && self.bases >= 2
            && self.channels > 0
            && self.lora_rank > 0
            && self.lora_alpha > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("training configuration out of range"))
        }
    }
}

/// Per-epoch means.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_seg: f64,
    pub l_sty: f64,
    pub total: f64,
    pub iou: Option<f64>,
    pub dice: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Encoder pretraining phase (empty when disabled).
    pub pretrain: Vec<EpochRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// Wall-clock source for [`EpochRecord::seconds`].
pub trait Clock {
    fn seconds(&mut self) -> f64;
}

/// Always reports zero, keeping reports reproducible.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&mut self) -> f64 {
        0.0
    }
}

pub fn train(sources: &[DomainDataset], cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    train_with(sources, &[], cfg, &mut NoClock)
}

/// Trains on `sources`; `validation` (possibly empty) is scored after every
/// epoch.
pub fn train_with(
    sources: &[DomainDataset],
    validation: &[DomainDataset],
    cfg: &TrainConfig,
    clock: &mut dyn Clock,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let pool: Vec<(usize, usize)> = sources
        .iter()
        .enumerate()
        .flat_map(|(d, ds)| (0..ds.samples.len()).map(move |i| (d, i)))
        .collect();
    if pool.is_empty() {
        return Err(Error::invalid("training needs at least one source sample"));
    }
    let classes = sources[0].classes;
    if sources.iter().any(|d| d.classes != classes) {
        return Err(Error::invalid("source domains disagree on the class count"));
    }
    let model_cfg = ModelConfig {
        channels: cfg.channels,
        classes,
        bases: cfg.bases,
    };
    let mut params = ModelParams::init(&model_cfg, cfg.seed)?;
    let mut report = TrainReport::default();

    if cfg.pretrain_epochs > 0 {
        params.projection = ProjectionMode::Off;
        let phase = Phase {
            epochs: cfg.pretrain_epochs,
            projection: ProjectionMode::Off,
            mixup_prob: 0.0,
            lambda_sty: 0.0,
            stream: 0x10,
        };
        report.pretrain = run_phase(&mut params, sources, validation, &pool, cfg, &phase, clock)?;
        params.attach_lora(cfg.lora_rank, cfg.lora_alpha, cfg.seed)?;
    }
    params.projection = cfg.projection;
    let phase = Phase {
        epochs: cfg.epochs,
        projection: cfg.projection,
        mixup_prob: cfg.mixup_prob,
        lambda_sty: cfg.lambda_sty,
        stream: 0x20,
    };
    report.epochs = run_phase(&mut params, sources, validation, &pool, cfg, &phase, clock)?;
    Ok((params, report))
}

struct Phase {
    epochs: usize,
    projection: ProjectionMode,
    mixup_prob: f64,
    lambda_sty: f64,
    stream: u64,
}

fn partner<'a>(
    sources: &'a [DomainDataset],
    domain: usize,
    pairing: Pairing,
    rng: &mut Rng,
) -> &'a Sample {
    let candidates: Vec<usize> = match pairing {
        Pairing::CrossDomain if sources.len() > 1 => (0..sources.len())
            .filter(|&d| d != domain && !sources[d].samples.is_empty())
            .collect(),
        _ => alloc::vec![domain],
    };
    let d = candidates[rng.random_range(0..candidates.len())];
    let samples = &sources[d].samples;
    &samples[rng.random_range(0..samples.len())]
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    params: &mut ModelParams,
    sources: &[DomainDataset],
    validation: &[DomainDataset],
    pool: &[(usize, usize)],
    cfg: &TrainConfig,
    phase: &Phase,
    clock: &mut dyn Clock,
) -> Result<Vec<EpochRecord>> {
    let mut order = pool.to_vec();
    let mut batch_rng = seed::rng(cfg.seed, seed::STREAM_BATCHES ^ phase.stream);
    let mut mix_rng = seed::rng(cfg.seed, seed::STREAM_MIXUP ^ phase.stream);
    let mut opt = AdamW::new(cfg.learning_rate, cfg.weight_decay);
    let mut records = Vec::with_capacity(phase.epochs);
    let start = clock.seconds();

    for epoch in 0..phase.epochs {
        // Fisher–Yates
        for i in (1..order.len()).rev() {
            let j = batch_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let (mut seg_sum, mut sty_sum, mut total_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mixed = phase.mixup_prob > 0.0 && mix_rng.random::<f64>() < phase.mixup_prob;
            let batch: Vec<Cow<'_, Sample>> = chunk
                .iter()
                .map(|&(d, i)| {
                    let p = &sources[d].samples[i];
                    if mixed {
                        let q = partner(sources, d, cfg.pairing, &mut mix_rng);
                        let lambda = augment::draw_lambda(&mut mix_rng);
                        augment::mixup(p, q, lambda).map(Cow::Owned)
                    } else {
                        Ok(Cow::Borrowed(p))
                    }
                })
                .collect::<Result<_>>()?;

            let mut g = Graph::new();
            let bound = params.bind(&mut g, true)?;
            let mut seg_terms = Vec::with_capacity(batch.len());
            for s in &batch {
                let x = g.constant(s.image.clone());
                let t = g.constant(s.soft_mask.clone());
                let f = encode_var(&mut g, &bound, x)?;
                let (f, _) = style_hook_var(&mut g, f, &bound.bank, phase.projection)?;
                let logits = decode_var(&mut g, &bound, f)?;
                seg_terms.push(seg_loss_var(&mut g, logits, t)?);
            }
            let stacked = g.concat(&seg_terms, 0)?;
            let l_seg = g.mean(stacked)?;
            let l_sty = orthogonality_var(&mut g, &bound, cfg.ortho_norm)?;
            let total = total_loss_var(&mut g, l_seg, l_sty, phase.lambda_sty)?;
            let values = (
                g.value(l_seg).item(),
                g.value(l_sty).item(),
                g.value(total).item(),
            );
            if !(values.0.is_finite() && values.1.is_finite() && values.2.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let grads = g.backward(total)?;
            let grad_refs: Vec<Option<&[f64]>> = bound
                .vars
                .iter()
                .map(|&v| if g.is_tracked(v) { grads.get(v) } else { None })
                .collect();
            opt.step(&mut params.tensors_mut(), &grad_refs);
            if params.tensors_mut().iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            seg_sum += values.0;
            sty_sum += values.1;
            total_sum += values.2;
            steps += 1;
        }
        let (iou, dice) = match validate(params, validation)? {
            Some(s) => (Some(s.iou), Some(s.dice)),
            None => (None, None),
        };
        let n = steps as f64;
        records.push(EpochRecord {
            epoch,
            l_seg: seg_sum / n,
            l_sty: sty_sum / n,
            total: total_sum / n,
            iou,
            dice,
            seconds: clock.seconds() - start,
        });
    }
    Ok(records)
}

fn validate(params: &ModelParams, validation: &[DomainDataset]) -> Result<Option<Scores>> {
    let mut all = Vec::new();
    for ds in validation {
        for s in &ds.samples {
            let pred = predict(&s.image, params)?;
            all.push(metrics::mean_scores(&pred, &s.mask, params.classes())?);
        }
    }
    Ok(metrics::average(&all))
}
