//! Mixup over image/target pairs.
//!
//! Images and one-hot targets are mixed with the same `λ`, so training on
//! the mixed soft target equals `λ·CE(mask_p) + (1−λ)·CE(mask_q)`.

use crate::data::{Mask, Sample};
use crate::seed::Rng;
use crate::tensor::Tensor;
use crate::{Error, Result};
use alloc::string::String;
use rand::Rng as _;

/// Domain tag given to mixed samples.
pub const MIX_DOMAIN: &str = "mix";

/// Which partner a sample is mixed with during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Partner drawn from a different source domain when one exists.
    #[default]
    CrossDomain,
    WithinDomain,
}

/// Mixing weights `(w_p, w_q)` with `w_p + w_q == 1` exactly. The larger
/// weight is `fl(λ)` or `fl(1−λ)` and the smaller is its exact complement,
/// which makes `mixup(p, q, λ)` and `mixup(q, p, 1−λ)` bit-identical.
fn weights(lambda: f64) -> (f64, f64) {
    if lambda >= 0.5 {
        (lambda, 1.0 - lambda)
    } else {
        let wq = 1.0 - lambda;
        (1.0 - wq, wq)
    }
}

fn blend(a: &Tensor, b: &Tensor, wa: f64, wb: f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| wa * x + wb * y)
        .collect();
    Tensor::new(a.shape(), data).expect("shapes checked by caller")
}

/// `λ·p + (1−λ)·q` on image and soft target; the hard mask becomes the
/// per-pixel argmax of the mixed target.
pub fn mixup(p: &Sample, q: &Sample, lambda: f64) -> Result<Sample> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("mixup λ must lie in [0, 1]"));
    }
    if p.image.shape() != q.image.shape() || p.soft_mask.shape() != q.soft_mask.shape() {
        return Err(Error::ShapeMismatch {
            expected: p.image.shape().to_vec(),
            got: q.image.shape().to_vec(),
        });
    }
    let (wp, wq) = weights(lambda);
    let image = blend(&p.image, &q.image, wp, wq);
    let soft_mask = blend(&p.soft_mask, &q.soft_mask, wp, wq);
    let mask = Mask::argmax(&soft_mask)?;
    Ok(Sample {
        image,
        mask,
        soft_mask,
        domain: String::from(MIX_DOMAIN),
    })
}

/// Uniform draw from the open interval `(0, 1)`.
pub fn draw_lambda(rng: &mut Rng) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}
