//! CSV output. Floats use Rust's shortest round-trip formatting, so equal
//! values always print identically.

use crate::config::Arms;
use std::fmt::Write as _;
use t3s_core::metrics::{Pca2d, StyleRow};
use t3s_core::model::{EpochRecord, TrainReport};
use t3s_core::shift::ShiftReport;

pub const TRAIN_HEADER: &str = "epoch,l_seg,l_sty,total,iou,dice,seconds";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn epochs_csv(records: &[EpochRecord], timings: bool) -> String {
    let mut s = format!("{TRAIN_HEADER}\n");
    for r in records {
        let secs = if timings {
            r.seconds.to_string()
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.l_seg,
            r.l_sty,
            r.total,
            opt(r.iou),
            opt(r.dice),
            secs
        );
    }
    s
}

/// Main-phase epochs. `seconds` stays empty unless `timings` is set.
pub fn train_report_csv(report: &TrainReport, timings: bool) -> String {
    epochs_csv(&report.epochs, timings)
}

/// Encoder pretraining epochs, same columns.
pub fn pretrain_report_csv(report: &TrainReport, timings: bool) -> String {
    epochs_csv(&report.pretrain, timings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub split: String,
    pub domain: String,
    pub count: usize,
    pub iou: f64,
    pub dice: f64,
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("split,domain,count,iou,dice\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.split, r.domain, r.count, r.iou, r.dice
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub arms: Arms,
    pub seed: u64,
    /// Mean over unseen-style target images.
    pub iou: f64,
    pub dice: f64,
}

fn flag(b: bool) -> u8 {
    b as u8
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("fm,mixup,csdm,seed,iou,dice\n");
    for r in rows {
        let a = r.arms;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            flag(a.fm),
            flag(a.mixup),
            flag(a.csdm),
            r.seed,
            r.iou,
            r.dice
        );
    }
    s
}

/// Per-arm means over seeds, in first-appearance order.
pub fn ablation_summary(rows: &[AblationRow]) -> Vec<(Arms, f64, f64, usize)> {
    let mut out: Vec<(Arms, f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(a, ..)| *a == r.arms) {
            Some(e) => {
                e.1 += r.iou;
                e.2 += r.dice;
                e.3 += 1;
            }
            None => out.push((r.arms, r.iou, r.dice, 1)),
        }
    }
    for e in &mut out {
        e.1 /= e.3 as f64;
        e.2 /= e.3 as f64;
    }
    out
}

pub fn ablation_summary_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("fm,mixup,csdm,seeds,iou,dice\n");
    for (a, iou, dice, n) in ablation_summary(rows) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            flag(a.fm),
            flag(a.mixup),
            flag(a.csdm),
            n,
            iou,
            dice
        );
    }
    s
}

pub fn styles_csv(rows: &[StyleRow]) -> String {
    let c = rows.first().map_or(0, |r| r.coords.len() / 2);
    let mut s = String::from("domain,split,phase");
    for k in 0..c {
        let _ = write!(s, ",mu{k}");
    }
    for k in 0..c {
        let _ = write!(s, ",sigma{k}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{}", r.domain, r.split.as_str(), r.phase.as_str());
        for v in &r.coords {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// 2-D coordinates aligned with `labels`.
pub fn pca_csv(labels: &[(String, String, String)], pca: &Pca2d) -> String {
    let mut s = String::from("domain,split,phase,pc1,pc2\n");
    for ((d, sp, ph), c) in labels.iter().zip(&pca.coords) {
        let _ = writeln!(s, "{d},{sp},{ph},{},{}", c[0], c[1]);
    }
    s
}

/// One row per target; centroid-distance proxies, not divergences.
pub fn shift_csv(space: &str, reports: &[(String, ShiftReport)]) -> String {
    let sources = reports
        .first()
        .map(|(_, r)| r.sources.clone())
        .unwrap_or_default();
    let mut s = String::from("space,target,split,rho_proxy,gamma_proxy");
    for name in &sources {
        let _ = write!(s, ",eta_{name}");
    }
    s.push_str(",converged\n");
    for (split, r) in reports {
        let _ = write!(s, "{space},{},{split},{},{}", r.target, r.rho, r.gamma);
        for e in &r.eta {
            let _ = write!(s, ",{e}");
        }
        let _ = writeln!(s, ",{}", flag(r.converged));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_csv_shape() {
        let r = TrainReport {
            pretrain: vec![],
            epochs: vec![EpochRecord {
                epoch: 0,
                l_seg: 0.5,
                l_sty: 0.25,
                total: 0.525,
                iou: None,
                dice: Some(0.75),
                seconds: 1.5,
            }],
        };
        assert_eq!(
            train_report_csv(&r, false),
            format!("{TRAIN_HEADER}\n0,0.5,0.25,0.525,,0.75,\n")
        );
        assert!(train_report_csv(&r, true).ends_with(",1.5\n"));
    }

    #[test]
    fn ablation_rows_and_summary() {
        let rows: Vec<AblationRow> = [0u64, 1]
            .iter()
            .flat_map(|&seed| {
                Arms::all().into_iter().map(move |arms| AblationRow {
                    arms,
                    seed,
                    iou: seed as f64,
                    dice: 0.5,
                })
            })
            .collect();
        let csv = ablation_csv(&rows);
        assert_eq!(csv.lines().count(), 1 + 16);
        assert!(csv.starts_with("fm,mixup,csdm,seed,iou,dice\n0,0,0,0,"));
        let sum = ablation_summary(&rows);
        assert_eq!(sum.len(), 8);
        assert!(sum.iter().all(|e| e.1 == 0.5 && e.3 == 2));
    }
}
