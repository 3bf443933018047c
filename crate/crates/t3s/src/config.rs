//! Run configuration: `key = value` lines grouped under `[train]`, `[data]`
//! and `[ablation]`, with `#` comments.

use crate::error::{Error, Result};
use std::path::{Path, PathBuf};
use t3s_core::augment::Pairing;
use t3s_core::bank::OrthoNormalization;
use t3s_core::model::{ProjectionMode, TrainConfig};
use t3s_core::synth::LayoutSize;

/// Encoder pretraining epochs used by the foundation-model arm.
pub const DEFAULT_PRETRAIN_EPOCHS: usize = 10;

/// The three ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Arms {
    /// Pretrained, frozen encoder with low-rank adapters.
    pub fm: bool,
    pub mixup: bool,
    /// Style projection plus the orthogonality penalty.
    pub csdm: bool,
}

impl Arms {
    pub const FULL: Arms = Arms {
        fm: true,
        mixup: true,
        csdm: true,
    };
    pub const BASELINE: Arms = Arms {
        fm: false,
        mixup: false,
        csdm: false,
    };

    /// All eight combinations, baseline first, `fm` as the most significant bit.
    pub fn all() -> [Arms; 8] {
        std::array::from_fn(|i| Arms {
            fm: i & 4 != 0,
            mixup: i & 2 != 0,
            csdm: i & 1 != 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Training settings of the full pipeline; arms switch parts off.
    pub train: TrainConfig,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub layout: LayoutSize,
    pub data_seed: u64,
    pub arms: Arms,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                pretrain_epochs: DEFAULT_PRETRAIN_EPOCHS,
                ..TrainConfig::default()
            },
            data_dir: None,
            out_dir: None,
            layout: LayoutSize::default(),
            data_seed: 0,
            arms: Arms::FULL,
            seeds: vec![0, 1, 2],
        }
    }
}

impl RunConfig {
    /// Training settings for `arms` under experiment seed `seed`.
    pub fn arm_config(&self, arms: Arms, seed: u64) -> TrainConfig {
        let mut c = self.train.clone();
        c.seed = seed;
        if !arms.fm {
            c.pretrain_epochs = 0;
        }
        if !arms.mixup {
            c.mixup_prob = 0.0;
        }
        if !arms.csdm {
            c.projection = ProjectionMode::Off;
            c.lambda_sty = 0.0;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_pairing(v: &str) -> Option<Pairing> {
    match v {
        "cross-domain" => Some(Pairing::CrossDomain),
        "within-domain" => Some(Pairing::WithinDomain),
        _ => None,
    }
}

fn parse_norm(v: &str) -> Option<OrthoNormalization> {
    match v {
        "ordered-pairs" => Some(OrthoNormalization::OrderedPairs),
        "squared-count" => Some(OrthoNormalization::SquaredCount),
        _ => None,
    }
}

fn parse_seeds(v: &str) -> Option<Vec<u64>> {
    v.split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<Vec<_>>>()
        .filter(|s| !s.is_empty())
}

/// Applies one `key = value` setting. `Ok(false)` means the key is unknown.
pub fn apply(
    cfg: &mut RunConfig,
    section: &str,
    key: &str,
    value: &str,
) -> std::result::Result<bool, String> {
    fn num<T: std::str::FromStr>(key: &str, v: &str, what: &str) -> std::result::Result<T, String> {
        v.parse()
            .map_err(|_| format!("`{key}` expects {what}, got `{v}`"))
    }
    fn pick<T>(
        key: &str,
        v: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> std::result::Result<T, String> {
        f(v).ok_or_else(|| format!("`{key}` expects {what}, got `{v}`"))
    }
    let t = &mut cfg.train;
    match (section, key) {
        ("train", "epochs") => t.epochs = num(key, value, "an integer")?,
        ("train", "batch_size") => t.batch_size = num(key, value, "an integer")?,
        ("train", "learning_rate") => t.learning_rate = num(key, value, "a number")?,
        ("train", "weight_decay") => t.weight_decay = num(key, value, "a number")?,
        ("train", "lambda_sty") => t.lambda_sty = num(key, value, "a number")?,
        ("train", "projection") => {
            t.projection = pick(key, value, "always|off", ProjectionMode::parse)?
        }
        ("train", "mixup_prob") => t.mixup_prob = num(key, value, "a number")?,
        ("train", "pairing") => {
            t.pairing = pick(key, value, "cross-domain|within-domain", parse_pairing)?
        }
        ("train", "bases") => t.bases = num(key, value, "an integer")?,
        ("train", "channels") => t.channels = num(key, value, "an integer")?,
        ("train", "ortho_norm") => {
            t.ortho_norm = pick(key, value, "ordered-pairs|squared-count", parse_norm)?
        }
        ("train", "pretrain_epochs") => t.pretrain_epochs = num(key, value, "an integer")?,
        ("train", "lora_rank") => t.lora_rank = num(key, value, "an integer")?,
        ("train", "lora_alpha") => t.lora_alpha = num(key, value, "a number")?,
        ("train", "seed") => t.seed = num(key, value, "an integer")?,
        ("data", "dir") => cfg.data_dir = Some(PathBuf::from(value)),
        ("data", "out") => cfg.out_dir = Some(PathBuf::from(value)),
        ("data", "size") => cfg.layout.size = num(key, value, "an integer")?,
        ("data", "source_count") => cfg.layout.source = num(key, value, "an integer")?,
        ("data", "target_count") => cfg.layout.target = num(key, value, "an integer")?,
        ("data", "seed") => cfg.data_seed = num(key, value, "an integer")?,
        ("ablation", "fm") => cfg.arms.fm = pick(key, value, "a boolean", parse_bool)?,
        ("ablation", "mixup") => cfg.arms.mixup = pick(key, value, "a boolean", parse_bool)?,
        ("ablation", "csdm") => cfg.arms.csdm = pick(key, value, "a boolean", parse_bool)?,
        ("ablation", "seeds") => {
            cfg.seeds = pick(
                key,
                value,
                "a comma-separated list of integers",
                parse_seeds,
            )?
        }
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parses config text. Unknown sections and keys produce warnings.
pub fn parse(text: &str) -> Result<(RunConfig, Vec<String>)> {
    let mut cfg = RunConfig::default();
    let mut warnings = Vec::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        if let Some(name) = t.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(Error::Config {
                    line,
                    msg: format!("malformed section header `{t}`"),
                });
            };
            section = name.trim().to_owned();
            if !["train", "data", "ablation"].contains(&section.as_str()) {
                warnings.push(format!("line {line}: unknown section [{section}]"));
            }
            continue;
        }
        let Some((key, value)) = t.split_once('=') else {
            return Err(Error::Config {
                line,
                msg: format!("expected `key = value`, got `{t}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        match apply(&mut cfg, &section, key, value) {
            Ok(true) => {}
            Ok(false) => warnings.push(format!("line {line}: unknown key `{key}` in [{section}]")),
            Err(msg) => return Err(Error::Config { line, msg }),
        }
    }
    Ok((cfg, warnings))
}

pub fn load(path: &Path) -> Result<(RunConfig, Vec<String>)> {
    parse(&crate::io::read_string(path)?)
}
