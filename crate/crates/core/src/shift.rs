//! Centroid proxies for domain shift in style space.
//!
//! Each domain is summarized by the centroid of its `μ ‖ σ` style vectors.
//! `rho` is the largest pairwise centroid distance among source domains;
//! `gamma` is the distance from a target centroid to the closest point of
//! the source centroids' convex hull, and `eta` the simplex weights reaching
//! it. These are proxies, not divergences.

use crate::style::{style_stats, StyleVector};
use crate::tensor::Tensor;
use crate::{math, Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainStyleSummary {
    pub name: String,
    pub centroid: Vec<f64>,
    /// Population standard deviation per coordinate.
    pub std: Vec<f64>,
    pub count: usize,
}

impl DomainStyleSummary {
    /// Root of the summed per-coordinate variances.
    pub fn spread(&self) -> f64 {
        math::sqrt(self.std.iter().map(|s| s * s).sum())
    }
}

pub fn summarize_domain(name: &str, styles: &[StyleVector]) -> Result<DomainStyleSummary> {
    let points: Vec<Vec<f64>> = styles.iter().map(StyleVector::concat).collect();
    summarize_points(name, &points)
}

pub fn summarize_points(name: &str, points: &[Vec<f64>]) -> Result<DomainStyleSummary> {
    let Some(first) = points.first() else {
        return Err(Error::invalid("cannot summarize an empty style list"));
    };
    let d = first.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("style vectors differ in length"));
    }
    let n = points.len() as f64;
    let centroid: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n)
        .collect();
    let std = (0..d)
        .map(|j| {
            math::sqrt(
                points
                    .iter()
                    .map(|p| {
                        let d = p[j] - centroid[j];
                        d * d
                    })
                    .sum::<f64>()
                    / n,
            )
        })
        .collect();
    Ok(DomainStyleSummary {
        name: name.into(),
        centroid,
        std,
        count: points.len(),
    })
}

/// Style of a raw `3×H×W` image.
pub fn image_style(image: &Tensor) -> Result<StyleVector> {
    style_stats(image)
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x - y;
                d * d
            })
            .sum(),
    )
}

/// Distance between two centroids over the mean of their spreads.
pub fn separation_ratio(a: &DomainStyleSummary, b: &DomainStyleSummary) -> f64 {
    distance(&a.centroid, &b.centroid) / (0.5 * (a.spread() + b.spread())).max(f64::MIN_POSITIVE)
}

/// Mean over `points` of the distance to the nearest of `centroids`.
pub fn mean_nearest_distance(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() || centroids.is_empty() {
        return Err(Error::invalid("need at least one point and one centroid"));
    }
    let total: f64 = points
        .iter()
        .map(|p| {
            centroids
                .iter()
                .map(|c| distance(p, c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / points.len() as f64)
}

/// Pairwise centroid distances and their maximum.
pub fn rho_proxy(summaries: &[DomainStyleSummary]) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = summaries.len();
    if n < 2 {
        return Err(Error::invalid("rho needs at least two domains"));
    }
    let mut m = vec![vec![0.0; n]; n];
    let mut rho = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            let d = distance(&summaries[i].centroid, &summaries[j].centroid);
            m[i][j] = d;
            m[j][i] = d;
            rho = rho.max(d);
        }
    }
    Ok((rho, m))
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

pub const ETA_STEP: f64 = 0.1;
pub const ETA_MAX_ITERS: usize = 10_000;
pub const ETA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EtaSolution {
    pub gamma: f64,
    pub eta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `½‖t − Σ ηᵢ cᵢ‖²` after every iteration, starting with the initial point.
    pub history: Vec<f64>,
}

fn half_sq_residual(t: &[f64], cs: &[&[f64]], eta: &[f64]) -> f64 {
    (0..t.len())
        .map(|k| {
            let r = t[k] - cs.iter().zip(eta).map(|(c, e)| c[k] * e).sum::<f64>();
            r * r
        })
        .sum::<f64>()
        * 0.5
}

/// Minimizes `‖t − Σ ηᵢ cᵢ‖` over the simplex by projected gradient descent.
///
/// Coordinates are centered on the source mean first, which leaves the
/// objective unchanged on the simplex. The step is `0.1`, reduced to
/// `1/trace(G)` when the Gram matrix is larger than that allows; the trace
/// bounds the largest eigenvalue, so the objective never increases.
pub fn gamma_eta(target: &[f64], sources: &[&[f64]]) -> Result<EtaSolution> {
    let n = sources.len();
    if n == 0 {
        return Err(Error::invalid("gamma needs at least one source"));
    }
    let d = target.len();
    if sources.iter().any(|c| c.len() != d) {
        return Err(Error::invalid("centroids differ in length"));
    }
    let mean: Vec<f64> = (0..d)
        .map(|k| sources.iter().map(|c| c[k]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = sources
        .iter()
        .map(|c| c.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let t: Vec<f64> = target.iter().zip(&mean).map(|(a, b)| a - b).collect();
    let cs: Vec<&[f64]> = centered.iter().map(Vec::as_slice).collect();

    let mut gram = vec![0.0; n * n];
    let mut ct = vec![0.0; n];
    for i in 0..n {
        ct[i] = cs[i].iter().zip(&t).map(|(a, b)| a * b).sum();
        for j in 0..n {
            gram[i * n + j] = cs[i].iter().zip(cs[j]).map(|(a, b)| a * b).sum();
        }
    }
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    let step = if trace > 0.0 {
        ETA_STEP.min(1.0 / trace)
    } else {
        ETA_STEP
    };

    let mut eta = vec![1.0 / n as f64; n];
    let mut best = half_sq_residual(&t, &cs, &eta);
    let mut best_eta = eta.clone();
    let mut history = vec![best];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < ETA_MAX_ITERS {
        iterations += 1;
        // ∇ = Gη − Cᵀt
        let moved: Vec<f64> = (0..n)
            .map(|i| {
                let grad = (0..n).map(|j| gram[i * n + j] * eta[j]).sum::<f64>() - ct[i];
                eta[i] - step * grad
            })
            .collect();
        let next = simplex_project(&moved);
        let change = next
            .iter()
            .zip(&eta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        eta = next;
        let obj = half_sq_residual(&t, &cs, &eta);
        history.push(obj);
        if obj <= best {
            best = obj;
            best_eta.clone_from(&eta);
        }
        if change < ETA_TOL {
            converged = true;
            break;
        }
    }
    Ok(EtaSolution {
        gamma: math::sqrt(2.0 * best),
        eta: best_eta,
        iterations,
        converged,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    pub sources: Vec<String>,
    pub target: String,
    pub rho: f64,
    pub gamma: f64,
    pub eta: Vec<f64>,
    pub distances: Vec<Vec<f64>>,
    pub converged: bool,
}

pub fn shift_report(
    target: &DomainStyleSummary,
    sources: &[DomainStyleSummary],
) -> Result<ShiftReport> {
    let (rho, distances) = rho_proxy(sources)?;
    let cs: Vec<&[f64]> = sources.iter().map(|s| s.centroid.as_slice()).collect();
    let sol = gamma_eta(&target.centroid, &cs)?;
    Ok(ShiftReport {
        sources: sources.iter().map(|s| s.name.clone()).collect(),
        target: target.name.clone(),
        rho,
        gamma: sol.gamma,
        eta: sol.eta,
        distances,
        converged: sol.converged,
    })
}

impl ShiftReport {
    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "target: {}", self.target);
        let _ = writeln!(s, "rho (centroid proxy): {:.6}", self.rho);
        let _ = writeln!(s, "gamma (centroid proxy): {:.6}", self.gamma);
        for (name, e) in self.sources.iter().zip(&self.eta) {
            let _ = writeln!(s, "eta[{name}]: {e:.6}");
        }
        if !self.converged {
            let _ = writeln!(s, "warning: eta solver hit the iteration cap");
        }
        s
    }
}
