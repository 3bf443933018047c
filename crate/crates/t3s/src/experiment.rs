//! Experiment drivers shared by the CLI and the integration tests.

use crate::config::{Arms, RunConfig};
use crate::error::{Error, Result};
use crate::report::{AblationRow, EvalRow};
use std::path::Path;
use t3s_core::data::{DomainDataset, Mask, Split};
use t3s_core::metrics::{self, Pca2d, Phase, Scores, StyleRow};
use t3s_core::model::{
    self, infer_test_time, predict, Clock, ModelParams, TrainConfig, TrainReport,
};
use t3s_core::shift::{self, DomainStyleSummary, ShiftReport};
use t3s_core::synth::{self, LayoutSize};

/// Generates the default layout and writes it under `root`.
pub fn generate(root: &Path, seed: u64, dims: LayoutSize) -> Result<Vec<DomainDataset>> {
    let layout = synth::default_layout(seed, dims)?;
    crate::dataset::write_layout(&layout, root)?;
    Ok(layout)
}

pub fn of_split(datasets: &[DomainDataset], split: Split) -> Vec<DomainDataset> {
    datasets
        .iter()
        .filter(|d| d.split == split)
        .cloned()
        .collect()
}

pub fn train(
    cfg: &TrainConfig,
    datasets: &[DomainDataset],
    validate_on: Option<Split>,
    clock: &mut dyn Clock,
) -> Result<(ModelParams, TrainReport)> {
    let sources = of_split(datasets, Split::Source);
    if sources.is_empty() {
        return Err(Error::Invalid(
            "no source-domain datasets to train on".into(),
        ));
    }
    let validation = validate_on
        .map(|s| of_split(datasets, s))
        .unwrap_or_default();
    Ok(model::train_with(&sources, &validation, cfg, clock)?)
}

fn scores_of(
    pairs: impl Iterator<Item = Result<(Mask, Mask)>>,
    classes: usize,
) -> Result<Vec<Scores>> {
    pairs
        .map(|p| {
            let (pred, gt) = p?;
            Ok(metrics::mean_scores(&pred, &gt, classes)?)
        })
        .collect()
}

fn rows_from(per_domain: Vec<(Split, String, Vec<Scores>)>) -> Vec<EvalRow> {
    let mut rows = Vec::new();
    for split in Split::ALL {
        let mut pooled = Vec::new();
        for (s, name, scores) in per_domain.iter().filter(|(s, ..)| *s == split) {
            let avg = metrics::average(scores).expect("non-empty domain");
            rows.push(EvalRow {
                split: s.as_str().into(),
                domain: name.clone(),
                count: scores.len(),
                iou: avg.iou,
                dice: avg.dice,
            });
            pooled.extend_from_slice(scores);
        }
        if let Some(avg) = metrics::average(&pooled) {
            rows.push(EvalRow {
                split: split.as_str().into(),
                domain: "all".into(),
                count: pooled.len(),
                iou: avg.iou,
                dice: avg.dice,
            });
        }
    }
    rows
}

/// Per-domain and per-split IoU/Dice of `params`.
pub fn evaluate(params: &ModelParams, datasets: &[DomainDataset]) -> Result<Vec<EvalRow>> {
    let mut per = Vec::new();
    for ds in datasets {
        let scores = scores_of(
            ds.samples
                .iter()
                .map(|s| Ok((predict(&s.image, params)?, s.mask.clone()))),
            ds.classes,
        )?;
        per.push((ds.split, ds.name.clone(), scores));
    }
    Ok(rows_from(per))
}

/// Scores predicted masks against the ground-truth domain with the same
/// split and name. Every prediction domain must have ground truth.
pub fn evaluate_predictions(
    predictions: &[DomainDataset],
    truth: &[DomainDataset],
) -> Result<Vec<EvalRow>> {
    if predictions.is_empty() {
        return Err(Error::Invalid("no prediction datasets".into()));
    }
    let mut per = Vec::new();
    for pred in predictions {
        let Some(gt) = truth
            .iter()
            .find(|g| g.split == pred.split && g.name == pred.name)
        else {
            return Err(Error::Invalid(format!(
                "no ground truth for {}/{}",
                pred.split.as_str(),
                pred.name
            )));
        };
        if pred.samples.len() != gt.samples.len() {
            return Err(Error::Invalid(format!(
                "prediction count mismatch for {}",
                gt.name
            )));
        }
        let scores = scores_of(
            pred.samples
                .iter()
                .zip(&gt.samples)
                .map(|(p, g)| Ok((p.mask.clone(), g.mask.clone()))),
            gt.classes,
        )?;
        per.push((gt.split, gt.name.clone(), scores));
    }
    Ok(rows_from(per))
}

/// Mean scores over every image of `split`.
pub fn split_scores(
    params: &ModelParams,
    datasets: &[DomainDataset],
    split: Split,
) -> Result<Scores> {
    let rows = evaluate(params, &of_split(datasets, split))?;
    rows.iter()
        .find(|r| r.domain == "all")
        .map(|r| Scores {
            iou: r.iou,
            dice: r.dice,
        })
        .ok_or_else(|| Error::Invalid(format!("no {} datasets", split.as_str())))
}

/// Trains every `arms × seeds` combination and scores unseen-style targets.
pub fn ablate(
    run: &RunConfig,
    datasets: &[DomainDataset],
    arms: &[Arms],
    mut progress: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &seed in &run.seeds {
        for &a in arms {
            let cfg = run.arm_config(a, seed);
            let (params, _) = train(&cfg, datasets, None, &mut model::NoClock)?;
            let s = split_scores(&params, datasets, Split::TargetUnseen)?;
            let row = AblationRow {
                arms: a,
                seed,
                iou: s.iou,
                dice: s.dice,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Shift proxies of every target domain against the source domains.
pub fn shift_reports(
    summaries: &[(Split, DomainStyleSummary)],
) -> Result<Vec<(String, ShiftReport)>> {
    let sources: Vec<DomainStyleSummary> = summaries
        .iter()
        .filter(|(s, _)| *s == Split::Source)
        .map(|(_, d)| d.clone())
        .collect();
    summaries
        .iter()
        .filter(|(s, _)| *s != Split::Source)
        .map(|(s, d)| Ok((s.as_str().to_owned(), shift::shift_report(d, &sources)?)))
        .collect()
}

/// Per-domain summaries of raw image styles.
pub fn image_summaries(datasets: &[DomainDataset]) -> Result<Vec<(Split, DomainStyleSummary)>> {
    datasets
        .iter()
        .map(|ds| {
            let styles = ds
                .samples
                .iter()
                .map(|s| shift::image_style(&s.image))
                .collect::<t3s_core::Result<Vec<_>>>()?;
            Ok((ds.split, shift::summarize_domain(&ds.name, &styles)?))
        })
        .collect()
}

fn summaries_of(rows: &[StyleRow], phase: Phase) -> Result<Vec<(Split, DomainStyleSummary)>> {
    let mut names: Vec<(Split, String)> = Vec::new();
    for r in rows.iter().filter(|r| r.phase == phase) {
        if !names.iter().any(|(s, n)| *s == r.split && *n == r.domain) {
            names.push((r.split, r.domain.clone()));
        }
    }
    names
        .into_iter()
        .map(|(split, name)| {
            let pts: Vec<Vec<f64>> = rows
                .iter()
                .filter(|r| r.phase == phase && r.split == split && r.domain == name)
                .map(|r| r.coords.clone())
                .collect();
            Ok((split, shift::summarize_points(&name, &pts)?))
        })
        .collect()
}

/// Mean distance of `split` styles to the nearest source centroid, before
/// and after projection. Each phase is compared with its own source
/// centroids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub pre: f64,
    pub post: f64,
}

impl Alignment {
    /// Relative reduction `1 − post/pre`.
    pub fn reduction(&self) -> f64 {
        1.0 - self.post / self.pre
    }
}

pub fn alignment(rows: &[StyleRow], split: Split) -> Result<Alignment> {
    let dist = |phase: Phase| -> Result<f64> {
        let centroids: Vec<Vec<f64>> = summaries_of(rows, phase)?
            .into_iter()
            .filter(|(s, _)| *s == Split::Source)
            .map(|(_, d)| d.centroid)
            .collect();
        let pts: Vec<Vec<f64>> = rows
            .iter()
            .filter(|r| r.phase == phase && r.split == split)
            .map(|r| r.coords.clone())
            .collect();
        Ok(shift::mean_nearest_distance(&pts, &centroids)?)
    };
    Ok(Alignment {
        pre: dist(Phase::Pre)?,
        post: dist(Phase::Post)?,
    })
}

#[derive(Debug, Clone)]
pub struct FeatureDiagnosis {
    pub rows: Vec<StyleRow>,
    pub pre_reports: Vec<(String, ShiftReport)>,
    pub post_reports: Vec<(String, ShiftReport)>,
    pub pca: Pca2d,
    pub unseen: Alignment,
    pub seen: Alignment,
}

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub image_reports: Vec<(String, ShiftReport)>,
    /// Smallest centroid-distance / spread ratio between domains of
    /// different style (sources and unseen-style targets).
    pub min_separation: f64,
    pub feature: Option<FeatureDiagnosis>,
}

pub fn min_separation(summaries: &[(Split, DomainStyleSummary)]) -> f64 {
    let distinct: Vec<&DomainStyleSummary> = summaries
        .iter()
        .filter(|(s, _)| *s != Split::TargetSeen)
        .map(|(_, d)| d)
        .collect();
    let mut best = f64::INFINITY;
    for i in 0..distinct.len() {
        for j in 0..i {
            best = best.min(shift::separation_ratio(distinct[i], distinct[j]));
        }
    }
    best
}

pub fn feature_diagnosis(
    params: &ModelParams,
    datasets: &[DomainDataset],
) -> Result<FeatureDiagnosis> {
    let rows = metrics::style_rows(datasets, params)?;
    let pca = metrics::pca2d(&rows.iter().map(|r| r.coords.clone()).collect::<Vec<_>>())?;
    Ok(FeatureDiagnosis {
        pre_reports: shift_reports(&summaries_of(&rows, Phase::Pre)?)?,
        post_reports: shift_reports(&summaries_of(&rows, Phase::Post)?)?,
        unseen: alignment(&rows, Split::TargetUnseen)?,
        seen: alignment(&rows, Split::TargetSeen)?,
        pca,
        rows,
    })
}

pub fn diagnose(datasets: &[DomainDataset], params: Option<&ModelParams>) -> Result<Diagnosis> {
    let summaries = image_summaries(datasets)?;
    Ok(Diagnosis {
        image_reports: shift_reports(&summaries)?,
        min_separation: min_separation(&summaries),
        feature: params.map(|p| feature_diagnosis(p, datasets)).transpose()?,
    })
}

/// Test-time projection over one domain: predicted masks and style rows.
pub fn project(params: &ModelParams, ds: &DomainDataset) -> Result<(Vec<Mask>, Vec<StyleRow>)> {
    let mut masks = Vec::with_capacity(ds.samples.len());
    let mut rows = Vec::with_capacity(2 * ds.samples.len());
    for s in &ds.samples {
        let inf = infer_test_time(&s.image, params)?;
        masks.push(inf.mask);
        for (phase, style) in [
            (Phase::Pre, &inf.diagnostics.pre),
            (Phase::Post, &inf.diagnostics.post),
        ] {
            rows.push(StyleRow {
                domain: ds.name.clone(),
                split: ds.split,
                phase,
                coords: style.concat(),
            });
        }
    }
    Ok((masks, rows))
}
