//! Learnable style-basis bank.
//!
//! Each basis `B_i = (μ_i, σ_i)` is a style vector. A sample style `f_s` is
//! projected onto the bank by taking cosine affinities `d_i = (cos(μ_s, μ_i),
//! cos(σ_s, σ_i))`, turning the μ-components and the σ-components into two
//! independent softmax weightings over `i`, and mixing the bases with them.
//! The orthogonality penalty pushes the concatenated bases `μ_i ‖ σ_i` apart
//! so the bank spans as much of style space as it can.
//!
//! σ_i is stored through a softplus reparameterization and is always
//! positive.

use crate::math;
use crate::seed::{self, Rng};
use crate::style::{StyleVars, StyleVector};
use crate::tensor::{Graph, Tensor, Var};
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};

/// Floor on vector norms in cosine denominators.
pub const NORM_FLOOR: f64 = 1e-8;

pub const DEFAULT_BASES: usize = 8;

/// Normalizer of the orthogonality penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrthoNormalization {
    /// Mean over the `n(n−1)` ordered pairs `i ≠ j`; bounded in `[0, 1]`.
    #[default]
    OrderedPairs,
    /// `1/(n−1)²` times the same sum; bounded by `n/(n−1)`.
    SquaredCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleBank {
    raw_mu: Tensor,
    raw_sigma: Tensor,
}

/// Softmax mixing weights of one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights {
    pub w_mu: Vec<f64>,
    pub w_sigma: Vec<f64>,
}

/// Graph handles for a bank: effective `mu` and `sigma`, both `n×C`.
#[derive(Debug, Clone, Copy)]
pub struct BankVars {
    pub raw_mu: Var,
    pub raw_sigma: Var,
    pub mu: Var,
    pub sigma: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct WeightVars {
    pub w_mu: Var,
    pub w_sigma: Var,
}

impl WeightVars {
    pub fn read(&self, g: &Graph) -> ProjectionWeights {
        ProjectionWeights {
            w_mu: g.value(self.w_mu).data().to_vec(),
            w_sigma: g.value(self.w_sigma).data().to_vec(),
        }
    }
}

impl StyleBank {
    /// `raw_mu ~ N(0, 1)`, `raw_sigma = softplus⁻¹(1) + N(0, 0.1)`.
    pub fn init(n: usize, channels: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a style bank needs at least two bases"));
        }
        if channels == 0 {
            return Err(Error::invalid("a style bank needs at least one channel"));
        }
        let mut rng: Rng = seed::rng(seed, seed::STREAM_BANK);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let jitter = Normal::new(0.0, 0.1).expect("valid normal");
        let base = math::softplus_inv(1.0);
        let raw_mu: Vec<f64> = (0..n * channels).map(|_| unit.sample(&mut rng)).collect();
        let raw_sigma: Vec<f64> = (0..n * channels)
            .map(|_| base + jitter.sample(&mut rng))
            .collect();
        Ok(Self {
            raw_mu: Tensor::new(&[n, channels], raw_mu)?,
            raw_sigma: Tensor::new(&[n, channels], raw_sigma)?,
        })
    }

    pub fn from_raw(raw_mu: Tensor, raw_sigma: Tensor) -> Result<Self> {
        if raw_mu.rank() != 2 || raw_mu.shape() != raw_sigma.shape() {
            return Err(Error::ShapeMismatch {
                expected: raw_mu.shape().to_vec(),
                got: raw_sigma.shape().to_vec(),
            });
        }
        if raw_mu.shape()[0] < 2 {
            return Err(Error::invalid("a style bank needs at least two bases"));
        }
        Ok(Self { raw_mu, raw_sigma })
    }

    /// Bank whose effective bases are exactly the given styles (up to the
    /// softplus round trip).
    pub fn from_bases(bases: &[StyleVector]) -> Result<Self> {
        let n = bases.len();
        let c = bases.first().map_or(0, StyleVector::channels);
        if bases.iter().any(|b| b.channels() != c) {
            return Err(Error::invalid("bases must share a channel count"));
        }
        let mu = bases.iter().flat_map(|b| b.mu.iter().copied()).collect();
        let sigma = bases
            .iter()
            .flat_map(|b| b.sigma.iter().map(|&s| math::softplus_inv(s)))
            .collect();
        Self::from_raw(Tensor::new(&[n, c], mu)?, Tensor::new(&[n, c], sigma)?)
    }

    pub fn len(&self) -> usize {
        self.raw_mu.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channels(&self) -> usize {
        self.raw_mu.shape()[1]
    }

    pub fn raw_mu(&self) -> &Tensor {
        &self.raw_mu
    }

    pub fn raw_sigma(&self) -> &Tensor {
        &self.raw_sigma
    }

    pub fn raw_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        (&mut self.raw_mu, &mut self.raw_sigma)
    }

    /// Effective basis `i`.
    pub fn basis(&self, i: usize) -> StyleVector {
        let c = self.channels();
        StyleVector {
            mu: self.raw_mu.data()[i * c..(i + 1) * c].to_vec(),
            sigma: self.raw_sigma.data()[i * c..(i + 1) * c]
                .iter()
                .map(|&r| math::softplus(r))
                .collect(),
        }
    }

    pub fn bases(&self) -> Vec<StyleVector> {
        (0..self.len()).map(|i| self.basis(i)).collect()
    }

    /// Places the bank on `g`; `trainable` marks the raw parameters as
    /// differentiable leaves.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<BankVars> {
        let raw_mu = g.leaf(self.raw_mu.clone().with_requires_grad(trainable));
        let raw_sigma = g.leaf(self.raw_sigma.clone().with_requires_grad(trainable));
        let sigma = g.softplus(raw_sigma)?;
        Ok(BankVars {
            raw_mu,
            raw_sigma,
            mu: raw_mu,
            sigma,
        })
    }
}

/// Cosine of two vectors with each norm floored at [`NORM_FLOOR`].
fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = math::sqrt(a.iter().map(|x| x * x).sum::<f64>()).max(NORM_FLOOR);
    let nb = math::sqrt(b.iter().map(|x| x * x).sum::<f64>()).max(NORM_FLOOR);
    dot / (na * nb)
}

/// `(cos(μ_s, μ_i), cos(σ_s, σ_i))`.
pub fn cosine_affinity(style: &StyleVector, basis: &StyleVector) -> Result<(f64, f64)> {
    if style.channels() != basis.channels() {
        return Err(Error::ChannelMismatch {
            expected: basis.channels(),
            got: style.channels(),
        });
    }
    Ok((
        cosine(&style.mu, &basis.mu),
        cosine(&style.sigma, &basis.sigma),
    ))
}

/// Cosines of vector `a: [C]` against every row of `m: n×C`, as `[n]`.
fn row_cosines(g: &mut Graph, a: Var, m: Var) -> Result<Var> {
    let c = g.shape(a)[0];
    let n = g.shape(m)[0];
    let col = g.reshape(a, &[c, 1])?;
    let dots = g.matmul(m, col)?;
    let dots = g.reshape(dots, &[n])?;

    let floor_sq = NORM_FLOOR * NORM_FLOOR;
    let a_sq = g.mul(a, a)?;
    let a_sq = g.sum(a_sq)?;
    let a_sq = g.clamp_min(a_sq, floor_sq)?;
    let a_norm = g.sqrt(a_sq)?;

    let m_sq = g.mul(m, m)?;
    let row_sq = g.sum_axes(m_sq, &[1])?;
    let row_sq = g.clamp_min(row_sq, floor_sq)?;
    let row_norm = g.sqrt(row_sq)?;

    let denom = g.mul(row_norm, a_norm)?;
    Ok(g.div(dots, denom)?)
}

/// Softmax-weighted mix of the bank rows keyed by cosine affinity.
pub fn project_style_var(
    g: &mut Graph,
    style: StyleVars,
    bank: &BankVars,
) -> Result<(StyleVars, WeightVars)> {
    let c = g.shape(bank.mu)[1];
    let n = g.shape(bank.mu)[0];
    if g.shape(style.mu) != [c] || g.shape(style.sigma) != [c] {
        return Err(Error::ChannelMismatch {
            expected: c,
            got: g.shape(style.mu).iter().product(),
        });
    }
    let mix = |g: &mut Graph, s: Var, rows: Var| -> Result<(Var, Var)> {
        let d = row_cosines(g, s, rows)?;
        let w = g.softmax(d, 0)?;
        let w_row = g.reshape(w, &[1, n])?;
        let mixed = g.matmul(w_row, rows)?;
        Ok((g.reshape(mixed, &[c])?, w))
    };
    let (mu, w_mu) = mix(g, style.mu, bank.mu)?;
    let (sigma, w_sigma) = mix(g, style.sigma, bank.sigma)?;
    Ok((StyleVars { mu, sigma }, WeightVars { w_mu, w_sigma }))
}

pub fn project_style(
    style: &StyleVector,
    bank: &StyleBank,
) -> Result<(StyleVector, ProjectionWeights)> {
    let mut g = Graph::new();
    let s = StyleVars::constant(&mut g, style);
    let b = bank.bind(&mut g, false)?;
    let (out, w) = project_style_var(&mut g, s, &b)?;
    Ok((out.read(&g), w.read(&g)))
}

/// Mean squared cosine between distinct concatenated bases.
pub fn orthogonality_loss_var(
    g: &mut Graph,
    bank: &BankVars,
    norm: OrthoNormalization,
) -> Result<Var> {
    let n = g.shape(bank.mu)[0];
    if n < 2 {
        return Err(Error::invalid(
            "orthogonality loss needs at least two bases",
        ));
    }
    let v = g.concat(&[bank.mu, bank.sigma], 1)?;
    let sq = g.mul(v, v)?;
    let row_sq = g.sum_axes(sq, &[1])?;
    let row_sq = g.clamp_min(row_sq, NORM_FLOOR * NORM_FLOOR)?;
    let norms = g.sqrt(row_sq)?;
    let unit = g.div(v, norms)?;
    let unit_t = g.transpose(unit)?;
    let gram = g.matmul(unit, unit_t)?;
    let gram_sq = g.mul(gram, gram)?;
    let mut mask = vec![1.0; n * n];
    for i in 0..n {
        mask[i * n + i] = 0.0;
    }
    let mask = g.constant(Tensor::new(&[n, n], mask)?);
    let off = g.mul(gram_sq, mask)?;
    let total = g.sum(off)?;
    let scale = match norm {
        OrthoNormalization::OrderedPairs => 1.0 / (n * (n - 1)) as f64,
        OrthoNormalization::SquaredCount => 1.0 / ((n - 1) * (n - 1)) as f64,
    };
    Ok(g.scale(total, scale)?)
}

pub fn orthogonality_loss(bank: &StyleBank) -> Result<f64> {
    let mut g = Graph::new();
    let b = bank.bind(&mut g, false)?;
    let l = orthogonality_loss_var(&mut g, &b, OrthoNormalization::OrderedPairs)?;
    Ok(g.value(l).item())
}
