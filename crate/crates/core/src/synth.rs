//! Deterministic multi-domain synthetic segmentation data.
//!
//! Content (shapes and mild texture) depends only on the spec seed and the
//! sample index. Style is a per-channel affine map plus Gaussian noise, so
//! two domains with the same seed share masks exactly.

use crate::data::{DomainDataset, Mask, Sample, Split};
use crate::seed::{self, STREAM_DATA};
use crate::tensor::Tensor;
use crate::{math, Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Normal};

pub const CLASSES: usize = 2;
pub const DEFAULT_SIZE: usize = 32;
pub const SOURCE_COUNT: usize = 60;
pub const TARGET_COUNT: usize = 20;

const BACKGROUND: [f64; 3] = [0.30, 0.25, 0.35];
const FOREGROUND: [f64; 3] = [0.65, 0.55, 0.60];
const TEXTURE: f64 = 0.04;
const STYLE_NOISE_STREAM: u64 = STREAM_DATA ^ 0x100;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    pub gain: [f64; 3],
    pub bias: [f64; 3],
    pub noise: f64,
    /// Inclusive range of shapes per image.
    pub shapes: (usize, usize),
    pub seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gain.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::invalid("domain gains must be positive"));
        }
        if self.bias.iter().any(|&b| !(-0.5..=0.5).contains(&b)) {
            return Err(Error::invalid("domain bias must lie in [-0.5, 0.5]"));
        }
        if !(0.0..=0.3).contains(&self.noise) {
            return Err(Error::invalid("domain noise must lie in [0, 0.3]"));
        }
        if self.shapes.0 == 0 || self.shapes.0 > self.shapes.1 {
            return Err(Error::invalid(
                "shape-count range must be non-empty and start at 1 or more",
            ));
        }
        Ok(())
    }
}

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                dx * dx + dy * dy <= 1.0
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

/// Unstyled content of sample `index`: a `3×size×size` image and its mask.
pub fn render_content(
    seed_: u64,
    index: u64,
    shapes: (usize, usize),
    size: usize,
) -> Result<(Tensor, Mask)> {
    if size == 0 || size % 4 != 0 {
        return Err(Error::invalid(
            "image size must be a positive multiple of 4",
        ));
    }
    let mut rng = seed::Rng::seed_from_u64(seed::derive_indexed(seed_, STREAM_DATA, index));
    let s = size as f64;
    let count = rng.random_range(shapes.0..=shapes.1);
    let list: Vec<Shape> = (0..count)
        .map(|_| {
            let cx = rng.random_range(0.2..0.8) * s;
            let cy = rng.random_range(0.2..0.8) * s;
            let rx = rng.random_range(0.10..0.22) * s;
            let ry = rng.random_range(0.10..0.22) * s;
            if rng.random_bool(0.5) {
                Shape::Ellipse { cx, cy, rx, ry }
            } else {
                Shape::Rect {
                    x0: cx - rx,
                    y0: cy - ry,
                    x1: cx + rx,
                    y1: cy + ry,
                }
            }
        })
        .collect();
    let freq: [f64; 4] = core::array::from_fn(|_| rng.random_range(0.2..0.8));
    let phase: [f64; 2] = core::array::from_fn(|_| rng.random_range(0.0..core::f64::consts::TAU));

    let plane = size * size;
    let mut mask = vec![0u8; plane];
    let mut img = vec![0.0; 3 * plane];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let fg = list.iter().any(|sh| sh.contains(px, py));
            let i = y * size + x;
            mask[i] = fg as u8;
            let (base, f) = if fg {
                (FOREGROUND, &freq[2..])
            } else {
                (BACKGROUND, &freq[..2])
            };
            let tex = TEXTURE * math::sin(f[0] * px + phase[0]) * math::cos(f[1] * py + phase[1]);
            for c in 0..3 {
                img[c * plane + i] = base[c] + tex;
            }
        }
    }
    Ok((
        Tensor::new(&[3, size, size], img)?,
        Mask::new(size, size, mask)?,
    ))
}

/// `clamp(gain ⊙ base + bias + noise, 0, 1)` with noise from `rng`.
fn apply_style(base: &Tensor, spec: &DomainSpec, rng: &mut seed::Rng) -> Tensor {
    let plane = base.numel() / 3;
    let normal = (spec.noise > 0.0).then(|| Normal::new(0.0, spec.noise).expect("valid normal"));
    let mut out = base.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i / plane;
        let n = normal.as_ref().map_or(0.0, |d| d.sample(rng));
        *v = (spec.gain[c] * *v + spec.bias[c] + n).clamp(0.0, 1.0);
    }
    out
}

pub fn gen_domain(
    spec: &DomainSpec,
    count: usize,
    size: usize,
    split: Split,
) -> Result<DomainDataset> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let samples = (0..count as u64)
        .map(|i| {
            let (base, mask) = render_content(spec.seed, i, spec.shapes, size)?;
            let mut rng =
                seed::Rng::seed_from_u64(seed::derive_indexed(spec.seed, STYLE_NOISE_STREAM, i));
            let image = apply_style(&base, spec, &mut rng);
            Sample::new(image, mask, CLASSES, spec.name.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DomainDataset {
        name: spec.name.clone(),
        split,
        classes: CLASSES,
        samples,
    })
}

fn spec(name: &str, gain: [f64; 3], bias: [f64; 3], noise: f64, seed_: u64) -> DomainSpec {
    DomainSpec {
        name: name.into(),
        gain,
        bias,
        noise,
        shapes: (1, 3),
        seed: seed_,
    }
}

/// The three source styles.
pub fn source_specs(seed_: u64) -> [DomainSpec; 3] {
    let s = |k: u64| seed::derive_indexed(seed_, STREAM_DATA, 1000 + k);
    [
        spec(
            "stomach",
            [1.0, 0.84, 1.08],
            [0.03, 0.08, -0.05],
            0.05,
            s(0),
        ),
        spec(
            "pancreas",
            [0.84, 1.08, 0.92],
            [-0.06, 0.0, 0.08],
            0.05,
            s(1),
        ),
        spec(
            "colorectum",
            [1.13, 0.92, 0.81],
            [0.08, -0.08, 0.0],
            0.05,
            s(2),
        ),
    ]
}

/// Source styles with fresh content seeds.
pub fn seen_target_specs(seed_: u64) -> [DomainSpec; 3] {
    let mut specs = source_specs(seed_);
    for (k, sp) in specs.iter_mut().enumerate() {
        sp.name = alloc::format!("{}-seen", sp.name);
        sp.seed = seed::derive_indexed(seed_, STREAM_DATA, 2000 + k as u64);
    }
    specs
}

/// Styles outside the convex hull of the source styles.
pub fn unseen_target_specs(seed_: u64) -> [DomainSpec; 3] {
    let s = |k: u64| seed::derive_indexed(seed_, STREAM_DATA, 3000 + k);
    [
        spec("ampullary", [0.55, 1.4, 0.7], [0.25, -0.2, 0.2], 0.08, s(0)),
        spec(
            "gallbladder",
            [1.6, 0.6, 1.3],
            [-0.3, 0.3, -0.1],
            0.10,
            s(1),
        ),
        spec("intestine", [0.6, 0.7, 1.5], [0.35, 0.25, -0.3], 0.12, s(2)),
    ]
}

/// Sample counts and image size of the generated layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutSize {
    pub source: usize,
    pub target: usize,
    pub size: usize,
}

impl Default for LayoutSize {
    fn default() -> Self {
        Self {
            source: SOURCE_COUNT,
            target: TARGET_COUNT,
            size: DEFAULT_SIZE,
        }
    }
}

/// 3 source domains, 3 seen-style targets, 3 unseen-style targets.
pub fn default_layout(seed_: u64, dims: LayoutSize) -> Result<Vec<DomainDataset>> {
    let mut out = Vec::with_capacity(9);
    for sp in source_specs(seed_) {
        out.push(gen_domain(&sp, dims.source, dims.size, Split::Source)?);
    }
    for sp in seen_target_specs(seed_) {
        out.push(gen_domain(&sp, dims.target, dims.size, Split::TargetSeen)?);
    }
    for sp in unseen_target_specs(seed_) {
        out.push(gen_domain(
            &sp,
            dims.target,
            dims.size,
            Split::TargetUnseen,
        )?);
    }
    Ok(out)
}
