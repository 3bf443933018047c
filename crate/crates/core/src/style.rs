//! Style/content decomposition of feature maps.
//!
//! A `C×H×W` feature map splits into per-channel spatial statistics
//! (the style: mean and standard deviation) and the normalized residual
//! (the content). Recomposing content with a different style swaps the
//! first two moments of every channel.

use crate::tensor::{Graph, Tensor, Var};
use crate::{Error, Result};
use alloc::vec::Vec;

/// Variance floor under the square root, so constant channels still have a
/// strictly positive, differentiable standard deviation.
pub const STYLE_EPS: f64 = 1e-5;

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleVector {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl StyleVector {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::ChannelMismatch {
                expected: mu.len(),
                got: sigma.len(),
            });
        }
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("style sigma must be strictly positive"));
        }
        Ok(Self { mu, sigma })
    }

    /// Zero mean, unit deviation.
    pub fn unit(channels: usize) -> Self {
        Self {
            mu: alloc::vec![0.0; channels],
            sigma: alloc::vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    /// `μ ‖ σ` as one `2C` vector.
    pub fn concat(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.sigma).copied().collect()
    }

    /// Inverse of [`StyleVector::concat`].
    pub fn from_concat(v: &[f64]) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::invalid("concatenated style must have even length"));
        }
        let c = v.len() / 2;
        Self::new(v[..c].to_vec(), v[c..].to_vec())
    }
}

/// Normalized content: each channel has zero spatial mean and (for channels
/// whose variance dominates the floor) unit spatial deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentMap(pub Tensor);

impl ContentMap {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Graph handles of a style vector: `mu` and `sigma` both of shape `[C]`.
#[derive(Debug, Clone, Copy)]
pub struct StyleVars {
    pub mu: Var,
    pub sigma: Var,
}

impl StyleVars {
    pub fn read(&self, g: &Graph) -> StyleVector {
        StyleVector {
            mu: g.value(self.mu).data().to_vec(),
            sigma: g.value(self.sigma).data().to_vec(),
        }
    }

    pub fn constant(g: &mut Graph, s: &StyleVector) -> Self {
        Self {
            mu: g.constant(Tensor::from_vec(s.mu.clone())),
            sigma: g.constant(Tensor::from_vec(s.sigma.clone())),
        }
    }
}

fn check_feature_map(shape: &[usize]) -> Result<()> {
    if shape.len() != 3 || shape[1] * shape[2] == 0 {
        return Err(Error::EmptySpatial);
    }
    Ok(())
}

/// Per-channel spatial mean and `sqrt(biased variance + ε)` of `f`.
pub fn style_stats_var(g: &mut Graph, f: Var) -> Result<StyleVars> {
    check_feature_map(g.shape(f))?;
    let mu = g.mean_axes(f, &[1, 2])?;
    let centered = g.sub(f, mu)?;
    let sq = g.mul(centered, centered)?;
    let var = g.mean_axes(sq, &[1, 2])?;
    let var = g.add_scalar(var, STYLE_EPS)?;
    let sigma = g.sqrt(var)?;
    Ok(StyleVars { mu, sigma })
}

/// Returns the style of `f` and its content `(f − μ) / σ`.
pub fn decompose_var(g: &mut Graph, f: Var) -> Result<(StyleVars, Var)> {
    let style = style_stats_var(g, f)?;
    let centered = g.sub(f, style.mu)?;
    let content = g.div(centered, style.sigma)?;
    Ok((style, content))
}

/// `σ ⊙ content + μ`, channel-wise.
pub fn recompose_var(g: &mut Graph, style: StyleVars, content: Var) -> Result<Var> {
    let shape = g.shape(content);
    check_feature_map(shape)?;
    let c = shape[0];
    for v in [style.mu, style.sigma] {
        let got = g.shape(v);
        if got != [c] {
            return Err(Error::ChannelMismatch {
                expected: c,
                got: got.iter().product(),
            });
        }
    }
    let scaled = g.mul(content, style.sigma)?;
    Ok(g.add(scaled, style.mu)?)
}

pub fn style_stats(f: &Tensor) -> Result<StyleVector> {
    let mut g = Graph::new();
    let v = g.constant(f.clone());
    Ok(style_stats_var(&mut g, v)?.read(&g))
}

pub fn decompose(f: &Tensor) -> Result<(StyleVector, ContentMap)> {
    let mut g = Graph::new();
    let v = g.constant(f.clone());
    let (style, content) = decompose_var(&mut g, v)?;
    Ok((style.read(&g), ContentMap(g.value(content).clone())))
}

pub fn recompose(style: &StyleVector, content: &ContentMap) -> Result<Tensor> {
    let mut g = Graph::new();
    let s = StyleVars::constant(&mut g, style);
    let c = g.constant(content.0.clone());
    let out = recompose_var(&mut g, s, c)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use alloc::vec;
    use proptest::prelude::*;

    fn channel(values: &[f64], h: usize, w: usize) -> Tensor {
        Tensor::new(&[1, h, w], values.to_vec()).unwrap()
    }

    #[test]
    fn stats_of_ramp_channel() {
        let s = style_stats(&channel(&[1.0, 2.0, 3.0, 4.0], 2, 2)).unwrap();
        assert!((s.mu[0] - 2.5).abs() < 1e-12);
        // biased variance 1.25
        assert!((s.sigma[0] - (1.25f64 + STYLE_EPS).sqrt()).abs() < 1e-12);
        assert!((s.sigma[0] - 1.1180).abs() < 1e-3);
    }

    #[test]
    fn constant_channel_hits_floor() {
        let s = style_stats(&channel(&[7.0; 4], 2, 2)).unwrap();
        assert_eq!(s.mu[0], 7.0);
        assert!((s.sigma[0] - 3.162e-3).abs() < 1e-6);
        let (_, content) = decompose(&channel(&[7.0; 4], 2, 2)).unwrap();
        assert!(content.0.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_channel() {
        let s = style_stats(&channel(&[-1.0, 1.0], 1, 2)).unwrap();
        assert_eq!(s.mu[0], 0.0);
        assert!((s.sigma[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn rank_one_input_is_rejected() {
        assert_eq!(
            style_stats(&Tensor::from_vec(vec![1.0, 2.0])),
            Err(Error::EmptySpatial)
        );
    }

    #[test]
    fn decompose_ramp() {
        let (_, content) = decompose(&channel(&[1.0, 2.0, 3.0, 4.0], 2, 2)).unwrap();
        let expected = [-1.342, -0.447, 0.447, 1.342];
        for (a, b) in content.0.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn normalized_channel_is_nearly_fixed() {
        let x = [-1.0, 1.0, -1.0, 1.0];
        let (_, content) = decompose(&channel(&x, 2, 2)).unwrap();
        for (a, b) in content.0.data().iter().zip(x) {
            assert!((a - b).abs() < 1e-2);
        }
    }

    #[test]
    fn recompose_identity_and_affine_cases() {
        let content = ContentMap(channel(&[0.3, -0.2, 0.5, -0.6], 2, 2));
        let out = recompose(&StyleVector::unit(1), &content).unwrap();
        assert_eq!(out, content.0);

        let zeros = ContentMap(Tensor::zeros(&[1, 2, 2]));
        let out = recompose(&StyleVector::new(vec![3.0], vec![2.0]).unwrap(), &zeros).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn recompose_rejects_channel_mismatch() {
        let zeros = ContentMap(Tensor::zeros(&[2, 2, 2]));
        let err = recompose(&StyleVector::unit(3), &zeros).unwrap_err();
        assert!(matches!(
            err,
            Error::ChannelMismatch {
                expected: 2,
                got: 3
            }
        ));
    }

    #[test]
    fn style_stats_gradients() {
        let x = Tensor::new(
            &[2, 3, 3],
            (0..18).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.4).collect(),
        )
        .unwrap();
        let err = grad_check(
            |g, v| {
                let s = style_stats_var(g, v)?;
                let a = g.sum(s.mu)?;
                let sq = g.mul(s.sigma, s.sigma)?;
                let sig = g.sqrt(sq)?;
                let b = g.sum(sig)?;
                let b = g.scale(b, 1.7)?;
                Ok::<_, Error>(g.add(a, b)?)
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn constant_channel_gradient_is_finite() {
        let x = Tensor::full(&[1, 2, 2], 2.0);
        let err = grad_check(
            |g, v| {
                let s = style_stats_var(g, v)?;
                Ok::<_, Error>(g.sum(s.sigma)?)
            },
            &x,
            1e-4,
        );
        // Finite-difference probes at a kink of σ; the ε floor keeps it smooth.
        assert!(err.unwrap() < 1e-4);
    }

    fn feature_map(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-3.0f64..3.0, c * h * w)
            .prop_map(move |d| Tensor::new(&[c, h, w], d).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip(f in feature_map(3, 4, 5)) {
            let s = style_stats(&f).unwrap();
            prop_assume!(s.sigma.iter().all(|&x| x * x >= 0.1));
            let (style, content) = decompose(&f).unwrap();
            let back = recompose(&style, &content).unwrap();
            prop_assert!(back.max_abs_diff(&f) < 1e-5);
        }

        #[test]
        fn content_is_normalized(f in feature_map(2, 4, 4)) {
            let s = style_stats(&f).unwrap();
            prop_assume!(s.sigma.iter().all(|&x| x * x >= 0.1));
            let (_, content) = decompose(&f).unwrap();
            let cs = style_stats(&content.0).unwrap();
            for c in 0..2 {
                prop_assert!(cs.mu[c].abs() < 1e-6);
                prop_assert!((cs.sigma[c] - 1.0).abs() < 1e-3);
            }
            // idempotence through a unit-style recomposition
            let again = decompose(&recompose(&StyleVector::unit(2), &content).unwrap()).unwrap().1;
            prop_assert!(again.0.max_abs_diff(&content.0) < 1e-3);
        }
    }
}
