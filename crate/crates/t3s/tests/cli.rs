use std::path::{Path, PathBuf};
use t3s::cli::dispatch;
use t3s::config::{Arms, RunConfig};
use t3s::{checkpoint, dataset, experiment, io};
use t3s_core::model::{self, NoClock, ProjectionMode};
use t3s_core::synth::{self, LayoutSize};

fn tmp(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("t3s-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&p);
    p
}

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("t3s").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = [
    "--set",
    "data.size=16",
    "--set",
    "data.source_count=4",
    "--set",
    "data.target_count=3",
];

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
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

#[test]
fn gen_twice_gives_identical_trees() {
    let dir = tmp("gen");
    let (a, b) = (dir.join("a"), dir.join("b"));
    assert_eq!(run(&["gen", "--out", s(&a), "--seed", "7"]), 0);
    assert_eq!(run(&["gen", "--out", s(&b), "--seed", "7"]), 0);
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 9 * (1 + 2 * 20) + 3 * 2 * 40);
    assert_eq!(fa, fb);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tmp("evalgt");
    let data = dir.join("data");
    let mut args = vec!["gen", "--out", s(&data)];
    args.extend(SMALL);
    assert_eq!(run(&args), 0);
    let out = dir.join("eval.csv");
    assert_eq!(
        run(&[
            "eval",
            "--data",
            s(&data),
            "--pred",
            s(&data),
            "--out",
            s(&out)
        ]),
        0
    );
    let csv = io::read_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 9 + 3);
    for r in rows {
        assert!(r.ends_with(",1,1"), "{r}");
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn ablate_rows_and_baseline_identity() {
    let dir = tmp("ablate");
    let data = dir.join("data");
    let mut args = vec!["gen", "--out", s(&data)];
    args.extend(SMALL);
    assert_eq!(run(&args), 0);
    let out = dir.join("abl");
    let mut args = vec![
        "ablate",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--seeds",
        "3,4",
        "--epochs",
        "1",
        "--set",
        "train.pretrain_epochs=1",
    ];
    args.extend(SMALL);
    assert_eq!(run(&args), 0);
    let csv = io::read_string(&out.join("ablation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("fm,mixup,csdm,seed,iou,dice"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8 * 2);
    let summary = io::read_string(&out.join("ablation_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 8);

    // the (off, off, off) arm is exactly a plain network trained from scratch
    let layout = dataset::read_layout(&data).unwrap();
    let mut run_cfg = RunConfig::default();
    run_cfg.train.epochs = 1;
    run_cfg.train.pretrain_epochs = 1;
    let arm = run_cfg.arm_config(Arms::BASELINE, 3);
    let plain = model::TrainConfig {
        epochs: 1,
        seed: 3,
        projection: ProjectionMode::Off,
        lambda_sty: 0.0,
        mixup_prob: 0.0,
        pretrain_epochs: 0,
        ..Default::default()
    };
    assert_eq!(arm, plain);
    let (a, _) = experiment::train(&arm, &layout, None, &mut NoClock).unwrap();
    let (p, _) = experiment::train(&plain, &layout, None, &mut NoClock).unwrap();
    assert_eq!(checkpoint::encode(&a), checkpoint::encode(&p));
    let dice = experiment::split_scores(&p, &layout, t3s_core::data::Split::TargetUnseen)
        .unwrap()
        .dice;
    assert!(rows[0].starts_with("0,0,0,3,"));
    assert!(
        rows[0].ends_with(&format!(",{dice}")),
        "{} vs {dice}",
        rows[0]
    );
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn train_project_diagnose_outputs() {
    let dir = tmp("pipeline");
    let data = dir.join("data");
    let mut args = vec!["gen", "--out", s(&data)];
    args.extend(SMALL);
    assert_eq!(run(&args), 0);
    let train = dir.join("train");
    let mut args = vec![
        "train",
        "--data",
        s(&data),
        "--out",
        s(&train),
        "--epochs",
        "1",
    ];
    args.extend(SMALL);
    assert_eq!(run(&args), 0);
    let ckpt = train.join("model.ckpt");
    let report = io::read_string(&train.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(
        report.lines().nth(1).unwrap().ends_with(','),
        "seconds stay empty without --timings"
    );

    let proj = dir.join("proj");
    assert_eq!(
        run(&[
            "project",
            "--checkpoint",
            s(&ckpt),
            "--input",
            s(&data),
            "--out",
            s(&proj)
        ]),
        0
    );
    let styles = io::read_string(&proj.join("styles.csv")).unwrap();
    assert_eq!(styles.lines().count(), 1 + 2 * (3 * 4 + 6 * 3));
    let eval_pred = dir.join("pred.csv");
    let eval_ckpt = dir.join("ckpt.csv");
    assert_eq!(
        run(&[
            "eval",
            "--data",
            s(&data),
            "--pred",
            s(&proj),
            "--out",
            s(&eval_pred)
        ]),
        0
    );
    assert_eq!(
        run(&[
            "eval",
            "--data",
            s(&data),
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(&eval_ckpt)
        ]),
        0
    );
    assert_eq!(
        std::fs::read(&eval_pred).unwrap(),
        std::fs::read(&eval_ckpt).unwrap()
    );

    let diag = dir.join("diag");
    assert_eq!(
        run(&[
            "diagnose",
            "--data",
            s(&data),
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(&diag)
        ]),
        0
    );
    for f in [
        "shift_image.csv",
        "shift_feature.csv",
        "styles.csv",
        "pca.csv",
        "shift_report.txt",
    ] {
        assert!(diag.join(f).is_file(), "{f}");
    }
    let text = io::read_string(&diag.join("shift_report.txt")).unwrap();
    assert!(text.contains("proxy"));
    let image = io::read_string(&diag.join("shift_image.csv")).unwrap();
    assert!(image.starts_with("space,target,split,rho_proxy,gamma_proxy,eta_colorectum,eta_pancreas,eta_stomach,converged\n"));
    assert_eq!(image.lines().count(), 1 + 6);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn timings_fill_the_seconds_column() {
    let dir = tmp("timings");
    let mut args = vec!["train", "--out", s(&dir), "--epochs", "1", "--timings"];
    args.extend(SMALL);
    assert_eq!(run(&args), 0);
    let report = io::read_string(&dir.join("train_report.csv")).unwrap();
    let secs: f64 = report
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(secs > 0.0);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["gen", "--no-such-flag"]), 2);
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["gen"]), 2, "missing --out");
    assert_eq!(
        run(&["eval", "--data", "x"]),
        2,
        "needs --checkpoint or --pred"
    );
    assert_eq!(
        run(&["gen", "--out", "x", "--set", "train.batch_size=eight"]),
        2
    );
    assert_eq!(run(&["gen", "--out", "x", "--set", "nonsense"]), 2);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tmp("runtime");
    assert_eq!(
        run(&["eval", "--data", s(&dir.join("none")), "--pred", s(&dir)]),
        1
    );
    assert_eq!(
        run(&[
            "project",
            "--checkpoint",
            s(&dir.join("none.ckpt")),
            "--input",
            "x",
            "--out",
            "y"
        ]),
        1
    );
    let cfg = dir.join("bad.cfg");
    io::write(&cfg, "[train]\nepochs = 2\nbatch_size = eight\n").unwrap();
    assert_eq!(
        run(&["gen", "--out", s(&dir.join("d")), "--config", s(&cfg)]),
        1
    );
    let e = t3s::config::load(&cfg).unwrap_err();
    assert!(e.to_string().contains("line 3"), "{e}");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_file_with_flag_override() {
    let dir = tmp("config");
    let cfg = dir.join("run.cfg");
    io::write(
        &cfg,
        "# sizes\n[data]\nsize = 8\nsource_count = 2\ntarget_count = 2\nseed = 5\ncolour = blue\n",
    )
    .unwrap();
    let out = dir.join("data");
    assert_eq!(
        run(&["gen", "--config", s(&cfg), "--out", s(&out), "--seed", "6"]),
        0
    );
    let layout = dataset::read_layout(&out).unwrap();
    let expected = synth::default_layout(
        6,
        LayoutSize {
            source: 2,
            target: 2,
            size: 8,
        },
    )
    .unwrap();
    assert_eq!(layout.len(), expected.len());
    for b in &expected {
        let a = layout
            .iter()
            .find(|a| a.name == b.name && a.split == b.split)
            .unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.mask, y.mask);
        }
    }
    std::fs::remove_dir_all(dir).unwrap();
}
