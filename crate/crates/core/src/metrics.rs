//! Segmentation overlap metrics, style-embedding rows and a 2-D PCA.
//!
//! Reported scores are macro-averaged over classes within an image, then
//! averaged over images. A class absent from both prediction and ground
//! truth scores 1.0.

use crate::data::{DomainDataset, Mask, Split};
use crate::model::{infer_test_time, ModelParams};
use crate::{math, Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Per-class pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn iou(&self, k: usize) -> f64 {
        let denom = self.tp[k] + self.fp[k] + self.fn_[k];
        if denom == 0 {
            1.0
        } else {
            self.tp[k] as f64 / denom as f64
        }
    }

    pub fn dice(&self, k: usize) -> f64 {
        let denom = 2 * self.tp[k] + self.fp[k] + self.fn_[k];
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp[k]) as f64 / denom as f64
        }
    }
}

pub fn confusion(pred: &Mask, gt: &Mask, classes: usize) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch {
            expected: vec![gt.height(), gt.width()],
            got: vec![pred.height(), pred.width()],
        });
    }
    let mut c = ConfusionCounts {
        tp: vec![0; classes],
        fp: vec![0; classes],
        fn_: vec![0; classes],
    };
    for (&p, &t) in pred.data().iter().zip(gt.data()) {
        let (p, t) = (p as usize, t as usize);
        if p >= classes || t >= classes {
            return Err(Error::invalid("mask class index out of range"));
        }
        if p == t {
            c.tp[p] += 1;
        } else {
            c.fp[p] += 1;
            c.fn_[t] += 1;
        }
    }
    Ok(c)
}

fn classes_for(pred: &Mask, gt: &Mask, k: usize) -> usize {
    let seen = pred
        .data()
        .iter()
        .chain(gt.data())
        .copied()
        .max()
        .unwrap_or(0) as usize;
    seen.max(k) + 1
}

/// `TP / (TP + FP + FN)` for class `k`.
pub fn iou(pred: &Mask, gt: &Mask, k: usize) -> Result<f64> {
    Ok(confusion(pred, gt, classes_for(pred, gt, k))?.iou(k))
}

/// `2TP / (2TP + FP + FN)` for class `k`.
pub fn dice(pred: &Mask, gt: &Mask, k: usize) -> Result<f64> {
    Ok(confusion(pred, gt, classes_for(pred, gt, k))?.dice(k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub iou: f64,
    pub dice: f64,
}

/// Class-averaged IoU and Dice of one image.
pub fn mean_scores(pred: &Mask, gt: &Mask, classes: usize) -> Result<Scores> {
    let c = confusion(pred, gt, classes)?;
    let k = classes as f64;
    Ok(Scores {
        iou: (0..classes).map(|i| c.iou(i)).sum::<f64>() / k,
        dice: (0..classes).map(|i| c.dice(i)).sum::<f64>() / k,
    })
}

/// Mean over images; `None` for an empty slice.
pub fn average(scores: &[Scores]) -> Option<Scores> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    Some(Scores {
        iou: scores.iter().map(|s| s.iou).sum::<f64>() / n,
        dice: scores.iter().map(|s| s.dice).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pre,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        }
    }
}

/// One exported style: `μ ‖ σ` of the hooked feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleRow {
    pub domain: String,
    pub split: Split,
    pub phase: Phase,
    pub coords: Vec<f64>,
}

/// A pre- and a post-projection row for every sample, in dataset order.
pub fn style_rows(datasets: &[DomainDataset], params: &ModelParams) -> Result<Vec<StyleRow>> {
    let mut rows = Vec::new();
    for ds in datasets {
        for s in &ds.samples {
            let d = infer_test_time(&s.image, params)?.diagnostics;
            for (phase, style) in [(Phase::Pre, &d.pre), (Phase::Post, &d.post)] {
                rows.push(StyleRow {
                    domain: ds.name.clone(),
                    split: ds.split,
                    phase,
                    coords: style.concat(),
                });
            }
        }
    }
    Ok(rows)
}

pub const PCA_TOL: f64 = 1e-9;
pub const PCA_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    /// Fraction of total variance captured by the two components.
    pub retained: f64,
    /// Set when the data has no variance; coordinates are then all zero.
    pub degenerate: bool,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = math::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Leading eigenpair of the symmetric `cov`, kept orthogonal to `against`.
fn power_iteration(cov: &[f64], d: usize, against: Option<&[f64]>) -> (Vec<f64>, f64) {
    let orthogonalize = |v: &mut [f64]| {
        if let Some(u) = against {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
    };
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
    orthogonalize(&mut v);
    if normalize(&mut v) == 0.0 {
        v = vec![0.0; d];
        v[d - 1] = 1.0;
        orthogonalize(&mut v);
        normalize(&mut v);
    }
    let mut lambda = 0.0;
    for _ in 0..PCA_MAX_ITERS {
        let mut w: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| cov[i * d + j] * v[j]).sum())
            .collect();
        orthogonalize(&mut w);
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return (v, 0.0);
        }
        lambda = norm;
        let delta = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = w;
        if delta < PCA_TOL {
            break;
        }
    }
    (v, lambda)
}

/// Projects the rows of `points` onto their top two principal directions.
pub fn pca2d(points: &[Vec<f64>]) -> Result<Pca2d> {
    let m = points.len();
    if m < 2 {
        return Err(Error::invalid("PCA needs at least two points"));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("PCA points must share a non-zero dimension"));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / m as f64)
        .collect();
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for p in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += p[i] * p[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= m as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if !(trace > 0.0) {
        return Ok(Pca2d {
            coords: vec![[0.0, 0.0]; m],
            components: [vec![0.0; d], vec![0.0; d]],
            retained: 0.0,
            degenerate: true,
        });
    }
    let (v1, l1) = power_iteration(&cov, d, None);
    let (v2, l2) = if d > 1 {
        // Deflate, then iterate in the orthogonal complement of v1.
        let mut deflated = cov.clone();
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= l1 * v1[i] * v1[j];
            }
        }
        power_iteration(&deflated, d, Some(&v1))
    } else {
        (vec![0.0], 0.0)
    };
    let coords = centered
        .iter()
        .map(|p| {
            let a: f64 = p.iter().zip(&v1).map(|(x, y)| x * y).sum();
            let b: f64 = p.iter().zip(&v2).map(|(x, y)| x * y).sum();
            [a, b]
        })
        .collect();
    Ok(Pca2d {
        coords,
        components: [v1, v2],
        retained: ((l1 + l2) / trace).min(1.0),
        degenerate: false,
    })
}
