//! Command-line front end. Exit status: 0 success, 2 usage error, 1 runtime
//! error. Logs go to standard error.

use crate::config::{self, Arms, RunConfig};
use crate::error::{Error, Result};
use crate::{checkpoint, dataset, experiment, io, report};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;
use t3s_core::data::{DomainDataset, Sample};
use t3s_core::model::Clock;
use t3s_core::synth;

#[derive(Parser, Debug)]
#[command(
    name = "t3s",
    version,
    about = "Test-time style projection for segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Config file with [train], [data] and [ablation] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic multi-domain layout.
    Gen {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one pipeline and write a checkpoint plus loss reports.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Fill the seconds column of the reports.
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        common: Common,
    },
    /// IoU/Dice per domain and split, from a checkpoint or predicted masks.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, conflicts_with = "pred", required_unless_present = "pred")]
        checkpoint: Option<PathBuf>,
        /// Dataset tree of predicted masks shaped like `--data`.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train all eight arm combinations for every seed.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated experiment seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Domain-shift proxies, style CSV and 2-D projection.
    Diagnose {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Test-time projection over a domain directory or a dataset tree.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn seconds(&mut self) -> f64 {
        let s = self.0.elapsed().as_secs_f64();
        self.0 = Instant::now();
        s
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<t3s_core::Error> for Failure {
    fn from(e: t3s_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load_config(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => {
            let (cfg, warnings) = config::load(p)?;
            for w in warnings {
                eprintln!("warning: {}: {w}", p.display());
            }
            cfg
        }
        None => RunConfig::default(),
    };
    for s in &common.set {
        let Some((path, value)) = s.split_once('=') else {
            return Err(usage(format!("--set expects SECTION.KEY=VALUE, got `{s}`")));
        };
        let Some((section, key)) = path.trim().split_once('.') else {
            return Err(usage(format!("--set expects SECTION.KEY=VALUE, got `{s}`")));
        };
        match config::apply(&mut cfg, section, key, value.trim()) {
            Ok(true) => {}
            Ok(false) => return Err(usage(format!("unknown setting `{path}`"))),
            Err(msg) => return Err(usage(msg)),
        }
    }
    Ok(cfg)
}

fn required(v: Option<PathBuf>, flag: &str) -> std::result::Result<PathBuf, Failure> {
    v.ok_or_else(|| usage(format!("missing {flag} (or the matching config entry)")))
}

/// Reads `--data`, or generates the layout in memory when no directory is
/// configured.
fn datasets(dir: Option<&Path>, cfg: &RunConfig) -> Result<Vec<DomainDataset>> {
    match dir {
        Some(d) => dataset::read_layout(d),
        None => {
            eprintln!(
                "no data directory given; generating the layout with seed {}",
                cfg.data_seed
            );
            Ok(synth::default_layout(cfg.data_seed, cfg.layout)?)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Gen {
            out,
            seed,
            size,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.data_seed = s;
            }
            if let Some(s) = size {
                cfg.layout.size = s;
            }
            let out = required(out.or(cfg.data_dir.clone()), "--out")?;
            let layout = experiment::generate(&out, cfg.data_seed, cfg.layout)?;
            eprintln!("wrote {} domains to {}", layout.len(), out.display());
        }
        Command::Train {
            data,
            out,
            seed,
            epochs,
            timings,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            let out = required(out.or(cfg.out_dir.clone()), "--out")?;
            let data = datasets(data.or(cfg.data_dir.clone()).as_deref(), &cfg)?;
            let tc = cfg.arm_config(cfg.arms, cfg.train.seed);
            let mut clock: Box<dyn Clock> = if timings {
                Box::new(WallClock(Instant::now()))
            } else {
                Box::new(t3s_core::model::NoClock)
            };
            let (params, rep) = experiment::train(
                &tc,
                &data,
                Some(t3s_core::data::Split::TargetSeen),
                clock.as_mut(),
            )?;
            for r in rep.pretrain.iter().chain(&rep.epochs) {
                eprintln!(
                    "epoch {} l_seg {:.5} l_sty {:.5}",
                    r.epoch, r.l_seg, r.l_sty
                );
            }
            checkpoint::save(&params, &out.join("model.ckpt"))?;
            io::write(
                &out.join("train_report.csv"),
                report::train_report_csv(&rep, timings),
            )?;
            io::write(
                &out.join("pretrain_report.csv"),
                report::pretrain_report_csv(&rep, timings),
            )?;
            eprintln!("wrote {}", out.join("model.ckpt").display());
        }
        Command::Eval {
            data,
            checkpoint: ckpt,
            pred,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            let data = datasets(data.or(cfg.data_dir.clone()).as_deref(), &cfg)?;
            let rows = match (ckpt, pred) {
                (Some(c), _) => experiment::evaluate(&checkpoint::load(&c)?, &data)?,
                (None, Some(p)) => {
                    let pred: Vec<DomainDataset> = dataset::read_tree(&p)?
                        .into_iter()
                        .map(|(_, d)| d)
                        .collect();
                    experiment::evaluate_predictions(&pred, &data)?
                }
                (None, None) => return Err(usage("eval needs --checkpoint or --pred")),
            };
            let csv = report::eval_csv(&rows);
            match out {
                Some(p) => io::write(&p, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Ablate {
            data,
            out,
            seeds,
            epochs,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seeds {
                config::apply(&mut cfg, "ablation", "seeds", &s).map_err(usage)?;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            let out = required(out.or(cfg.out_dir.clone()), "--out")?;
            let data = datasets(data.or(cfg.data_dir.clone()).as_deref(), &cfg)?;
            let rows = experiment::ablate(&cfg, &data, &Arms::all(), |r| {
                eprintln!(
                    "seed {} fm {} mixup {} csdm {}: dice {:.4} iou {:.4}",
                    r.seed, r.arms.fm as u8, r.arms.mixup as u8, r.arms.csdm as u8, r.dice, r.iou
                );
            })?;
            io::write(&out.join("ablation.csv"), report::ablation_csv(&rows))?;
            io::write(
                &out.join("ablation_summary.csv"),
                report::ablation_summary_csv(&rows),
            )?;
        }
        Command::Diagnose {
            data,
            checkpoint: ckpt,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            let out = required(out.or(cfg.out_dir.clone()), "--out")?;
            let data = datasets(data.or(cfg.data_dir.clone()).as_deref(), &cfg)?;
            let params = ckpt.map(|c| checkpoint::load(&c)).transpose()?;
            let d = experiment::diagnose(&data, params.as_ref())?;
            write_diagnosis(&d, &out)?;
        }
        Command::Project {
            checkpoint: ckpt,
            input,
            out,
            common,
        } => {
            load_config(&common)?;
            let params = checkpoint::load(&ckpt)?;
            let inputs = dataset::read_tree(&input)?;
            let mut styles = Vec::new();
            for (rel, ds) in &inputs {
                let (masks, rows) = experiment::project(&params, ds)?;
                let projected = DomainDataset {
                    samples: ds
                        .samples
                        .iter()
                        .zip(masks)
                        .map(|(s, m)| Sample::new(s.image.clone(), m, ds.classes, s.domain.clone()))
                        .collect::<t3s_core::Result<Vec<_>>>()?,
                    ..ds.clone()
                };
                dataset::write_dataset(&projected, &out.join(rel))?;
                styles.extend(rows);
                eprintln!("projected {} images of {}", ds.samples.len(), ds.name);
            }
            io::write(&out.join("styles.csv"), report::styles_csv(&styles))?;
        }
    }
    Ok(())
}

fn write_diagnosis(d: &experiment::Diagnosis, out: &Path) -> Result<()> {
    let mut text = String::from("image-level style (per-channel mean and std of pixels)\n");
    text.push_str(&format!(
        "min separation ratio between distinct domains: {:.4}\n",
        d.min_separation
    ));
    for (_, r) in &d.image_reports {
        text.push_str(&r.to_text());
    }
    io::write(
        &out.join("shift_image.csv"),
        report::shift_csv("image", &d.image_reports),
    )?;
    if let Some(f) = &d.feature {
        let mut csv = report::shift_csv("feature-pre", &f.pre_reports);
        let post = report::shift_csv("feature-post", &f.post_reports);
        csv.extend(post.lines().skip(1).map(|l| format!("{l}\n")));
        io::write(&out.join("shift_feature.csv"), csv)?;
        io::write(&out.join("styles.csv"), report::styles_csv(&f.rows))?;
        let labels: Vec<(String, String, String)> = f
            .rows
            .iter()
            .map(|r| {
                (
                    r.domain.clone(),
                    r.split.as_str().into(),
                    r.phase.as_str().into(),
                )
            })
            .collect();
        io::write(&out.join("pca.csv"), report::pca_csv(&labels, &f.pca))?;
        text.push_str("\nfeature-level style before projection\n");
        for (_, r) in &f.pre_reports {
            text.push_str(&r.to_text());
        }
        text.push_str("\nfeature-level style after projection\n");
        for (_, r) in &f.post_reports {
            text.push_str(&r.to_text());
        }
        for (name, a) in [("unseen-style", f.unseen), ("seen-style", f.seen)] {
            text.push_str(&format!(
                "{name} targets: distance to nearest source centroid {:.6} -> {:.6} ({:.1}% reduction)\n",
                a.pre,
                a.post,
                100.0 * a.reduction()
            ));
        }
        text.push_str(&format!("pca retained variance: {:.4}\n", f.pca.retained));
    }
    io::write(&out.join("shift_report.txt"), text)
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `t3s --help` for usage.");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
