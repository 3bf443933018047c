//! Acceptance suite: one PASS/FAIL line per criterion.

use rand::Rng as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use t3s::config::{Arms, RunConfig};
use t3s::experiment;
use t3s_core::augment::mixup;
use t3s_core::bank::{
    orthogonality_loss, orthogonality_loss_var, project_style, OrthoNormalization, StyleBank,
};
use t3s_core::data::{Mask, Split};
use t3s_core::metrics::{self, confusion};
use t3s_core::model::{seg_loss_var, AdamW, NoClock};
use t3s_core::seed;
use t3s_core::shift::{gamma_eta, simplex_project};
use t3s_core::style::{decompose, recompose, style_stats, StyleVector};
use t3s_core::synth::{self, LayoutSize};
use t3s_core::tensor::{grad_check, Graph, Tensor, Var};
use t3s_core::Error;

type Check = Result<String, String>;

fn rng(stream: u64) -> seed::Rng {
    seed::rng(2024, stream)
}

fn random(r: &mut seed::Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// 1. Invariants

fn invariants() -> Check {
    let t0 = Instant::now();
    let mut r = rng(1);
    // style round trip
    let mut trips = 0;
    while trips < 200 {
        let f = random(&mut r, &[4, 6, 6], -3.0, 3.0);
        let s = style_stats(&f).unwrap();
        if s.sigma.iter().any(|&x| x * x < 0.1) {
            continue;
        }
        let (style, content) = decompose(&f).unwrap();
        let err = recompose(&style, &content).unwrap().max_abs_diff(&f);
        ensure(err < 1e-5, format!("round trip error {err}"))?;
        let again = decompose(&recompose(&StyleVector::unit(4), &content).unwrap())
            .unwrap()
            .1;
        ensure(
            again.0.max_abs_diff(&content.0) < 1e-3,
            "content not idempotent",
        )?;
        trips += 1;
    }
    // projection weights on the simplex
    for k in 0..200 {
        let bank = StyleBank::init(2 + k % 7, 4, k as u64).unwrap();
        let mu = (0..4).map(|_| r.random_range(-3.0..3.0)).collect();
        let sigma = (0..4).map(|_| r.random_range(0.01..3.0)).collect();
        let (_, w) = project_style(&StyleVector::new(mu, sigma).unwrap(), &bank).unwrap();
        for v in [&w.w_mu, &w.w_sigma] {
            ensure(v.iter().all(|&x| x >= 0.0), "negative weight")?;
            ensure(
                (v.iter().sum::<f64>() - 1.0).abs() < 1e-6,
                "weights do not sum to 1",
            )?;
        }
    }
    // L_sty bounds
    for k in 0..200u64 {
        let l = orthogonality_loss(&StyleBank::init(2 + (k % 9) as usize, 3, k).unwrap()).unwrap();
        ensure((0.0..=1.0).contains(&l), format!("L_sty {l} out of [0, 1]"))?;
    }
    let axis = |i: usize| {
        let mut mu = vec![0.0; 6];
        mu[i] = 1.0;
        StyleVector::new(mu, vec![1e-9; 6]).unwrap()
    };
    let orth =
        orthogonality_loss(&StyleBank::from_bases(&[axis(0), axis(1), axis(2)]).unwrap()).unwrap();
    ensure(orth < 1e-12, format!("orthogonal bank L_sty {orth}"))?;
    let same = orthogonality_loss(&StyleBank::from_bases(&[axis(0), axis(0)]).unwrap()).unwrap();
    ensure(
        (same - 1.0).abs() < 1e-9,
        format!("identical bank L_sty {same}"),
    )?;
    // metric identities
    for _ in 0..200 {
        let (a, b) = (random_mask(&mut r, 2), random_mask(&mut r, 2));
        let (i, d) = (
            metrics::iou(&a, &b, 1).unwrap(),
            metrics::dice(&a, &b, 1).unwrap(),
        );
        ensure(i <= d, "iou > dice")?;
        ensure(
            (d - 2.0 * i / (1.0 + i)).abs() < 1e-12,
            "dice != 2 iou / (1 + iou)",
        )?;
        ensure(metrics::iou(&a, &a, 1).unwrap() == 1.0, "self iou != 1")?;
    }
    // mixup swap symmetry
    let ds = synth::gen_domain(&synth::source_specs(3)[0], 2, 8, Split::Source).unwrap();
    for _ in 0..50 {
        let l: f64 = r.random_range(0.0..=1.0);
        let (p, q) = (&ds.samples[0], &ds.samples[1]);
        ensure(
            mixup(p, q, l).unwrap().image == mixup(q, p, 1.0 - l).unwrap().image,
            "mixup not symmetric",
        )?;
    }
    // simplex projection against a grid oracle
    for _ in 0..200 {
        let v: [f64; 3] = std::array::from_fn(|_| r.random_range(-2.0..2.0));
        let w = simplex_project(&v);
        let g = grid_project(&v, 400);
        let gap = w
            .iter()
            .zip(g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(
            gap <= 1.0 / 400.0 + 1e-9,
            format!("simplex projection off the grid oracle by {gap}"),
        )?;
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("style round trip, simplex weights, L_sty bounds, metric and projection oracles ({secs:.1}s)"))
}

fn grid_project(v: &[f64; 3], res: usize) -> [f64; 3] {
    let mut best = ([0.0; 3], f64::INFINITY);
    for i in 0..=res {
        for j in 0..=(res - i) {
            let w = [
                i as f64 / res as f64,
                j as f64 / res as f64,
                (res - i - j) as f64 / res as f64,
            ];
            let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (w, d);
            }
        }
    }
    best.0
}

fn random_mask(r: &mut seed::Rng, classes: u8) -> Mask {
    Mask::new(
        16,
        16,
        (0..256).map(|_| r.random_range(0..classes)).collect(),
    )
    .unwrap()
}

// 2. Gradients

const POINTS: u64 = 10;

fn weighted_sum(g: &mut Graph, y: Var, r: &mut seed::Rng) -> Result<Var, Error> {
    let w = random(r, g.shape(y), -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    Ok(g.sum(p)?)
}

/// Worst relative error of `f` over ten random points in `[lo, hi)`.
fn certify<F>(name: &str, shape: &[usize], lo: f64, hi: f64, f: F) -> Result<f64, String>
where
    F: Fn(&mut Graph, Var, &mut seed::Rng) -> Result<Var, Error>,
{
    let mut worst = 0.0f64;
    for k in 0..POINTS {
        let mut r = seed::rng(k, 0x6AD);
        let x = random(&mut r, shape, lo, hi);
        let aux = r.random::<u64>();
        let err = grad_check(|g, v| f(g, v, &mut seed::rng(aux, 1)), &x, 1e-4)
            .map_err(|e| format!("{name}: {e}"))?;
        if err >= 1e-4 {
            return Err(format!("{name} point {k}: relative error {err:.2e}"));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

fn gradients() -> Check {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut track = |res: Result<f64, String>| -> Result<(), String> {
        worst = worst.max(res?);
        count += 1;
        Ok(())
    };
    for name in ["add", "sub", "mul", "div"] {
        for rhs in [&[3usize, 2, 2][..], &[3], &[1]] {
            track(certify(name, &[3, 2, 2], -2.0, 2.0, |g, v, r| {
                let b = g.constant(random(r, rhs, 0.5, 2.0));
                let y = g.apply(name, &[v, b])?;
                weighted_sum(g, y, r)
            }))?;
            track(certify(name, rhs, 0.5, 2.0, |g, v, r| {
                let a = g.constant(random(r, &[3, 2, 2], -2.0, 2.0));
                let y = g.apply(name, &[a, v])?;
                weighted_sum(g, y, r)
            }))?;
        }
    }
    for name in [
        "exp",
        "softplus",
        "softmax",
        "log_softmax",
        "transpose",
        "sum",
        "mean",
    ] {
        track(certify(name, &[3, 4], -2.0, 2.0, |g, v, r| {
            let y = g.apply(name, &[v])?;
            weighted_sum(g, y, r)
        }))?;
    }
    for name in ["sqrt", "log"] {
        track(certify(name, &[3, 4], 0.5, 3.0, |g, v, r| {
            let y = g.apply(name, &[v])?;
            weighted_sum(g, y, r)
        }))?;
    }
    // relu away from its kink: inputs in ±[0.05, 2)
    track(certify("relu", &[3, 4], 0.05, 2.0, |g, v, r| {
        let signs: Vec<f64> = (0..12)
            .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let s = g.constant(Tensor::new(&[3, 4], signs).unwrap());
        let x = g.mul(v, s)?;
        let y = g.relu(x)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("mean_axes", &[2, 3, 4], -2.0, 2.0, |g, v, r| {
        let y = g.mean_axes(v, &[1, 2])?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("sum_axes", &[2, 3, 4], -2.0, 2.0, |g, v, r| {
        let y = g.sum_axes(v, &[0])?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("softmax_axis1", &[2, 5], -3.0, 3.0, |g, v, r| {
        let y = g.softmax(v, 1)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("matmul_lhs", &[3, 4], -1.0, 1.0, |g, v, r| {
        let b = g.constant(random(r, &[4, 2], -1.0, 1.0));
        let y = g.matmul(v, b)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("matmul_rhs", &[4, 2], -1.0, 1.0, |g, v, r| {
        let a = g.constant(random(r, &[3, 4], -1.0, 1.0));
        let y = g.matmul(a, v)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("concat", &[2, 3], -1.0, 1.0, |g, v, r| {
        let other = g.constant(random(r, &[1, 3], -1.0, 1.0));
        let y = g.concat(&[other, v, v], 0)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("avg_pool2", &[2, 4, 6], -1.0, 1.0, |g, v, r| {
        let y = g.avg_pool2(v)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("upsample2", &[2, 3, 3], -1.0, 1.0, |g, v, r| {
        let y = g.upsample2(v)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify("conv2d_input", &[2, 5, 4], -1.0, 1.0, |g, v, r| {
        let w = g.constant(random(r, &[3, 2, 3, 3], -1.0, 1.0));
        let b = g.constant(random(r, &[3], -1.0, 1.0));
        let y = g.conv2d(v, w, b)?;
        weighted_sum(g, y, r)
    }))?;
    track(certify(
        "conv2d_weight",
        &[3, 2, 3, 3],
        -1.0,
        1.0,
        |g, v, r| {
            let x = g.constant(random(r, &[2, 5, 4], -1.0, 1.0));
            let b = g.constant(random(r, &[3], -1.0, 1.0));
            let y = g.conv2d(x, v, b)?;
            weighted_sum(g, y, r)
        },
    ))?;
    track(certify("conv2d_bias", &[3], -1.0, 1.0, |g, v, r| {
        let x = g.constant(random(r, &[2, 5, 4], -1.0, 1.0));
        let w = g.constant(random(r, &[3, 2, 3, 3], -1.0, 1.0));
        let y = g.conv2d(x, w, v)?;
        weighted_sum(g, y, r)
    }))?;
    // segmentation loss w.r.t. logits against random soft targets
    track(certify("seg_loss", &[3, 4, 4], -3.0, 3.0, |g, v, r| {
        let raw = g.constant(random(r, &[3, 4, 4], -2.0, 2.0));
        let t = g.softmax(raw, 0)?;
        let t = g.constant(g.value(t).clone());
        seg_loss_var(g, v, t)
    }))?;
    // orthogonality loss w.r.t. the raw bank parameters (n × 2C, μ ‖ raw σ)
    track(certify(
        "orthogonality_loss",
        &[6, 8],
        -2.0,
        2.0,
        |g, v, _| {
            let ident: Vec<f64> = (0..8 * 4)
                .map(|i| if i / 4 == i % 4 { 1.0 } else { 0.0 })
                .collect();
            let pick_mu = g.constant(Tensor::new(&[8, 4], ident).unwrap());
            let shifted: Vec<f64> = (0..8 * 4)
                .map(|i| if i / 4 == i % 4 + 4 { 1.0 } else { 0.0 })
                .collect();
            let pick_sigma = g.constant(Tensor::new(&[8, 4], shifted).unwrap());
            let raw_mu = g.matmul(v, pick_mu)?;
            let raw_sigma = g.matmul(v, pick_sigma)?;
            let sigma = g.softplus(raw_sigma)?;
            let b = t3s_core::bank::BankVars {
                raw_mu,
                raw_sigma,
                mu: raw_mu,
                sigma,
            };
            orthogonality_loss_var(g, &b, OrthoNormalization::OrderedPairs)
        },
    ))?;
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "{count} checks x {POINTS} points, worst relative error {worst:.2e} ({secs:.1}s)"
    ))
}

// 3. Oracles

fn pixel_oracle(a: &Mask, b: &Mask, k: u8) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let i = y * a.width() + x;
            let (p, t) = (a.data()[i] == k, b.data()[i] == k);
            if p && t {
                tp += 1;
            } else if p {
                fp += 1;
            } else if t {
                fn_ += 1;
            }
        }
    }
    if tp + fp + fn_ == 0 {
        return (1.0, 1.0);
    }
    (
        tp as f64 / (tp + fp + fn_) as f64,
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64,
    )
}

/// Random instance whose minimizer lies on the 0.01 grid: `η*` with
/// positive grid coordinates, target = `Σ η*ᵢ cᵢ` plus an offset
/// orthogonal to the sources' affine span.
fn grid_instance(r: &mut seed::Rng) -> (Vec<Vec<f64>>, Vec<f64>, [f64; 3]) {
    let d = 5;
    let c: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let a = r.random_range(5..90usize);
    let b = r.random_range(5..(95 - a));
    let eta = [
        a as f64 / 100.0,
        b as f64 / 100.0,
        (100 - a - b) as f64 / 100.0,
    ];
    let mut t: Vec<f64> = (0..d)
        .map(|k| (0..3).map(|i| eta[i] * c[i][k]).sum())
        .collect();
    // Gram-Schmidt an offset against the span directions c1 − c0, c2 − c0
    let dirs: Vec<Vec<f64>> = (1..3)
        .map(|i| (0..d).map(|k| c[i][k] - c[0][k]).collect())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in dirs {
        let mut u = v.clone();
        for e in &basis {
            let p: f64 = u.iter().zip(e).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(u.into_iter().map(|x| x / n).collect());
    }
    let mut off: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    for e in &basis {
        let p: f64 = off.iter().zip(e).map(|(x, y)| x * y).sum();
        off.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
    }
    t.iter_mut().zip(&off).for_each(|(x, o)| *x += o);
    (c, t, eta)
}

fn grid_eta(c: &[Vec<f64>], t: &[f64]) -> [f64; 3] {
    let mut best = ([0.0; 3], f64::INFINITY);
    for i in 0..=100usize {
        for j in 0..=(100 - i) {
            let w = [
                i as f64 / 100.0,
                j as f64 / 100.0,
                (100 - i - j) as f64 / 100.0,
            ];
            let d: f64 = (0..t.len())
                .map(|k| {
                    let m: f64 = (0..3).map(|s| w[s] * c[s][k]).sum();
                    (t[k] - m) * (t[k] - m)
                })
                .sum();
            if d < best.1 {
                best = (w, d);
            }
        }
    }
    best.0
}

fn oracles() -> Check {
    let mut r = rng(3);
    for n in 0..50 {
        let (a, b) = (random_mask(&mut r, 2), random_mask(&mut r, 2));
        let c = confusion(&a, &b, 2).unwrap();
        for k in 0..2u8 {
            let (i, d) = pixel_oracle(&a, &b, k);
            ensure(
                c.iou(k as usize) == i && c.dice(k as usize) == d,
                format!("mask pair {n} class {k}"),
            )?;
        }
        let s = metrics::mean_scores(&a, &b, 2).unwrap();
        let (i0, d0) = pixel_oracle(&a, &b, 0);
        let (i1, d1) = pixel_oracle(&a, &b, 1);
        ensure(
            s.iou == (i0 + i1) / 2.0 && s.dice == (d0 + d1) / 2.0,
            format!("mask pair {n} mean"),
        )?;
    }
    let mut worst = 0.0f64;
    for n in 0..10 {
        let (c, t, eta) = grid_instance(&mut r);
        let cs: Vec<&[f64]> = c.iter().map(Vec::as_slice).collect();
        let sol = gamma_eta(&t, &cs).unwrap();
        let grid = grid_eta(&c, &t);
        ensure(
            grid == eta,
            format!("instance {n}: grid oracle missed the constructed minimizer"),
        )?;
        let gap = sol
            .eta
            .iter()
            .zip(grid)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(
            gap <= 1e-3,
            format!("instance {n}: eta off the grid oracle by {gap:.2e}"),
        )?;
        worst = worst.max(gap);
    }
    Ok(format!(
        "50 mask pairs exact; 10 eta instances within {worst:.1e} of the grid oracle"
    ))
}

// 4. η recovery

fn eta_recovery() -> Check {
    let mut r = rng(4);
    let target_eta = [0.2, 0.3, 0.5];
    let (mut worst_eta, mut worst_gamma) = (0.0f64, 0.0f64);
    for d in [2usize, 3, 4, 6, 12] {
        for _ in 0..4 {
            let c: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect())
                .collect();
            // affine independence: the two edge vectors must not be parallel
            let e1: Vec<f64> = (0..d).map(|k| c[1][k] - c[0][k]).collect();
            let e2: Vec<f64> = (0..d).map(|k| c[2][k] - c[0][k]).collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let cos = dot(&e1, &e2) / (dot(&e1, &e1) * dot(&e2, &e2)).sqrt();
            if cos.abs() > 0.95 {
                continue;
            }
            let t: Vec<f64> = (0..d)
                .map(|k| (0..3).map(|i| target_eta[i] * c[i][k]).sum())
                .collect();
            let cs: Vec<&[f64]> = c.iter().map(Vec::as_slice).collect();
            let sol = gamma_eta(&t, &cs).unwrap();
            let gap = sol
                .eta
                .iter()
                .zip(target_eta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure(gap <= 1e-3, format!("dimension {d}: eta off by {gap:.2e}"))?;
            ensure(
                sol.gamma < 1e-6,
                format!("dimension {d}: gamma {:.2e}", sol.gamma),
            )?;
            worst_eta = worst_eta.max(gap);
            worst_gamma = worst_gamma.max(sol.gamma);
        }
    }
    Ok(format!(
        "worst eta error {worst_eta:.1e}, worst gamma {worst_gamma:.1e}"
    ))
}

// 5 and 6. Desk-scale training

struct DeskScale {
    full_dice: Vec<f64>,
    base_dice: Vec<f64>,
    reductions: Vec<f64>,
    arm_seconds: Vec<f64>,
}

fn desk_scale() -> DeskScale {
    let data = synth::default_layout(0, LayoutSize::default()).unwrap();
    let run = RunConfig::default();
    let mut out = DeskScale {
        full_dice: vec![],
        base_dice: vec![],
        reductions: vec![],
        arm_seconds: vec![],
    };
    for &seed in &run.seeds {
        for arms in [Arms::FULL, Arms::BASELINE] {
            let t0 = Instant::now();
            let (params, _) =
                experiment::train(&run.arm_config(arms, seed), &data, None, &mut NoClock).unwrap();
            let s = experiment::split_scores(&params, &data, Split::TargetUnseen).unwrap();
            out.arm_seconds.push(t0.elapsed().as_secs_f64());
            if arms == Arms::FULL {
                out.full_dice.push(s.dice);
                let unseen = experiment::of_split(&data, Split::TargetUnseen);
                let sources = experiment::of_split(&data, Split::Source);
                let rows = metrics::style_rows(&[sources, unseen].concat(), &params).unwrap();
                let a = experiment::alignment(&rows, Split::TargetUnseen).unwrap();
                out.reductions.push(a.reduction());
            } else {
                out.base_dice.push(s.dice);
            }
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn dg_result(d: &DeskScale) -> Check {
    let (full, base) = (mean(&d.full_dice), mean(&d.base_dice));
    let gain = 100.0 * (full - base);
    let slowest = d.arm_seconds.iter().cloned().fold(0.0, f64::max);
    // eight arms per seed: four train with pretraining like the full arm
    let projected = d
        .arm_seconds
        .chunks(2)
        .map(|p| 4.0 * (p[0] + p[1]))
        .sum::<f64>();
    let detail = format!(
        "unseen Dice full {:.2} vs baseline {:.2} ({gain:+.2} points); slowest arm {slowest:.0}s, projected 8-arm x 3-seed ablate {:.1} min",
        100.0 * full,
        100.0 * base,
        projected / 60.0
    );
    ensure(gain >= 3.0, detail.clone())?;
    ensure(projected < 30.0 * 60.0, detail.clone())?;
    Ok(detail)
}

fn alignment_result(d: &DeskScale) -> Check {
    let m = mean(&d.reductions);
    let detail = format!(
        "unseen-style distance to nearest source centroid reduced by {:.1}% on average (per seed {})",
        100.0 * m,
        d.reductions.iter().map(|x| format!("{:.1}%", 100.0 * x)).collect::<Vec<_>>().join(", ")
    );
    ensure(m >= 0.30, detail.clone())?;
    Ok(detail)
}

// 7. Orthogonality training

fn descend(adam: bool, lr: f64, steps: usize) -> (f64, Option<usize>) {
    let mut bank = StyleBank::init(8, 16, 7).unwrap();
    let mut opt = AdamW::new(lr, 0.0);
    for step in 0..steps {
        let mut g = Graph::new();
        let b = bank.bind(&mut g, true).unwrap();
        let l = orthogonality_loss_var(&mut g, &b, OrthoNormalization::OrderedPairs).unwrap();
        let value = g.value(l).item();
        if value < 1e-3 {
            return (value, Some(step));
        }
        let grads = g.backward(l).unwrap();
        let (gm, gs) = (
            grads.get(b.raw_mu).unwrap().to_vec(),
            grads.get(b.raw_sigma).unwrap().to_vec(),
        );
        let (mu, sigma) = bank.raw_mut();
        if adam {
            opt.step(&mut [mu, sigma], &[Some(&gm), Some(&gs)]);
        } else {
            mu.data_mut()
                .iter_mut()
                .zip(&gm)
                .for_each(|(p, g)| *p -= lr * g);
            sigma
                .data_mut()
                .iter_mut()
                .zip(&gs)
                .for_each(|(p, g)| *p -= lr * g);
        }
    }
    (orthogonality_loss(&bank).unwrap(), None)
}

fn orthogonality_training() -> Check {
    let (plain, _) = descend(false, 0.1, 2000);
    let (value, hit) = descend(true, 0.1, 2000);
    let step = hit.ok_or_else(|| format!("Adam at lr 0.1: L_sty {value:.2e} after 2000 steps"))?;
    Ok(format!(
        "Adam at lr 0.1: L_sty {value:.2e} after {step} steps (plain step 0.1 ends at {plain:.2e})"
    ))
}

// 8. Determinism

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let base = std::env::temp_dir().join(format!("t3s-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let small = [
        "--set",
        "data.size=16",
        "--set",
        "data.source_count=6",
        "--set",
        "data.target_count=4",
        "--set",
        "train.epochs=2",
        "--set",
        "train.pretrain_epochs=1",
    ];
    let run_all = |tag: &str| -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
        let root = base.join(tag);
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        let commands: Vec<Vec<String>> = vec![
            vec![
                "gen".into(),
                "--out".into(),
                p("data"),
                "--seed".into(),
                "7".into(),
            ],
            vec![
                "train".into(),
                "--data".into(),
                p("data"),
                "--out".into(),
                p("train"),
            ],
            vec![
                "eval".into(),
                "--data".into(),
                p("data"),
                "--checkpoint".into(),
                p("train/model.ckpt"),
                "--out".into(),
                p("eval.csv"),
            ],
            vec![
                "ablate".into(),
                "--data".into(),
                p("data"),
                "--out".into(),
                p("ablate"),
                "--seeds".into(),
                "0,1".into(),
            ],
            vec![
                "diagnose".into(),
                "--data".into(),
                p("data"),
                "--checkpoint".into(),
                p("train/model.ckpt"),
                "--out".into(),
                p("diag"),
            ],
            vec![
                "project".into(),
                "--checkpoint".into(),
                p("train/model.ckpt"),
                "--input".into(),
                p("data/target-unseen-style"),
                "--out".into(),
                p("proj"),
            ],
        ];
        for c in commands {
            let mut argv = vec!["t3s".to_string()];
            argv.extend(c.iter().cloned());
            if c[0] != "project" {
                argv.extend(small.iter().map(|s| s.to_string()));
            }
            let code = t3s::cli::dispatch(&argv);
            ensure(code == 0, format!("`{}` exited with {code}", c[0]))?;
        }
        Ok(tree(&root))
    };
    let a = run_all("a")?;
    let b = run_all("b")?;
    let _ = std::fs::remove_dir_all(&base);
    ensure(a.len() == b.len(), "output file sets differ")?;
    for ((pa, da), (pb, db)) in a.iter().zip(&b) {
        ensure(pa == pb, format!("{} vs {}", pa.display(), pb.display()))?;
        ensure(da == db, format!("{} differs between runs", pa.display()))?;
    }
    let csv = a
        .iter()
        .filter(|(p, _)| p.extension().is_some_and(|e| e == "csv"))
        .count();
    let ckpt = a
        .iter()
        .filter(|(p, _)| p.extension().is_some_and(|e| e == "ckpt"))
        .count();
    Ok(format!("{} files byte-identical across two runs of all six subcommands ({csv} CSV, {ckpt} checkpoint)", a.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, title: &str, c: Check| match &c {
        Ok(d) => println!("criterion {n} PASS  {title}: {d}"),
        Err(d) => {
            failed += 1;
            println!("criterion {n} FAIL  {title}: {d}");
        }
    };
    report(1, "invariant suite", invariants());
    report(2, "gradient certification", gradients());
    report(3, "oracle equivalence", oracles());
    report(4, "eta recovery", eta_recovery());
    let desk = desk_scale();
    report(5, "desk-scale generalization gain", dg_result(&desk));
    report(6, "style alignment", alignment_result(&desk));
    report(7, "orthogonality training", orthogonality_training());
    report(8, "determinism", determinism());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
