use super::ConvLayer;
use crate::seed::Rng;
use crate::tensor::{Graph, Tensor, Var};
use crate::{math, Error, Result};
use alloc::vec;
use rand_distr::{Distribution, Normal};

pub const DEFAULT_LORA_RANK: usize = 4;
pub const DEFAULT_LORA_ALPHA: f64 = 8.0;

/// Low-rank update `(α/r)·B·A` on a frozen convolution weight, with the
/// weight viewed as `fan_out × fan_in` (`fan_in = cin·9`).
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    /// Index into the encoder layers.
    pub layer: usize,
    pub rank: usize,
    pub alpha: f64,
    /// `rank × fan_in`
    pub a: Tensor,
    /// `fan_out × rank`, zero at creation.
    pub b: Tensor,
}

impl LoraAdapter {
    pub fn new(
        layer: usize,
        target: &ConvLayer,
        rank: usize,
        alpha: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if rank == 0 || !(alpha > 0.0) {
            return Err(Error::invalid("adapter rank and alpha must be positive"));
        }
        let (fan_in, fan_out) = (target.fan_in(), target.fan_out());
        let normal = Normal::new(0.0, 1.0 / math::sqrt(fan_in as f64)).expect("valid normal");
        let a = (0..rank * fan_in).map(|_| normal.sample(rng)).collect();
        Ok(Self {
            layer,
            rank,
            alpha,
            a: Tensor::new(&[rank, fan_in], a)?,
            b: Tensor::zeros(&[fan_out, rank]),
        })
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    fn check(&self, base: &ConvLayer) -> Result<()> {
        let ok = self.a.shape() == [self.rank, base.fan_in()]
            && self.b.shape() == [base.fan_out(), self.rank];
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: vec![base.fan_out(), base.fan_in()],
                got: vec![self.b.shape()[0], self.a.shape()[1]],
            })
        }
    }
}

/// `base + scaling · reshape(B·A)` on the graph.
pub(crate) fn effective_weight_var(
    g: &mut Graph,
    base: Var,
    a: Var,
    b: Var,
    scaling: f64,
) -> Result<Var> {
    let shape = g.shape(base).to_vec();
    let delta = g.matmul(b, a)?;
    let delta = g.scale(delta, scaling)?;
    let delta = g.reshape(delta, &shape)?;
    Ok(g.add(base, delta)?)
}

/// Effective layer for `base` under `adapter`. Disabled adapters leave the
/// weights untouched.
pub fn apply_lora(base: &ConvLayer, adapter: &LoraAdapter, enabled: bool) -> Result<ConvLayer> {
    adapter.check(base)?;
    if !enabled {
        return Ok(base.clone());
    }
    let mut g = Graph::new();
    let w = g.constant(base.weight.clone());
    let a = g.constant(adapter.a.clone());
    let b = g.constant(adapter.b.clone());
    let eff = effective_weight_var(&mut g, w, a, b, adapter.scaling())?;
    Ok(ConvLayer {
        weight: g.value(eff).clone(),
        bias: base.bias.clone(),
    })
}
