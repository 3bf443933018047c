//! On-disk dataset layout.
//!
//! ```text
//! ROOT/<split>/<domain>/manifest.txt
//! ROOT/<split>/<domain>/img/0000.ppm
//! ROOT/<split>/<domain>/mask/0000.pgm
//! ```
//!
//! The manifest starts with a `# split=<split> classes=<K>` comment and then
//! lists one sample per line: `image-path mask-path domain`, paths relative
//! to the manifest.

use crate::error::{Error, Result};
use crate::{io, netpbm};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use t3s_core::data::{DomainDataset, Sample, Split};

pub const MANIFEST: &str = "manifest.txt";

pub fn write_dataset(ds: &DomainDataset, dir: &Path) -> Result<()> {
    let mut manifest = format!("# split={} classes={}\n", ds.split.as_str(), ds.classes);
    for (i, s) in ds.samples.iter().enumerate() {
        let img = format!("img/{i:04}.ppm");
        let mask = format!("mask/{i:04}.pgm");
        io::write(&dir.join(&img), netpbm::encode_ppm(&s.image))?;
        io::write(&dir.join(&mask), netpbm::encode_pgm(&s.mask))?;
        let _ = writeln!(manifest, "{img} {mask} {}", s.domain);
    }
    io::write(&dir.join(MANIFEST), manifest)
}

fn parse_meta(line: &str) -> (Option<Split>, Option<usize>) {
    let mut split = None;
    let mut classes = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        match tok.split_once('=') {
            Some(("split", v)) => split = Split::parse(v),
            Some(("classes", v)) => classes = v.parse().ok(),
            _ => {}
        }
    }
    (split, classes)
}

/// Reads one domain directory. Without a metadata comment the split is taken
/// from the parent directory name and the class count from the masks.
pub fn read_dataset(dir: &Path) -> Result<DomainDataset> {
    let manifest_path = dir.join(MANIFEST);
    let text = io::read_string(&manifest_path)?;
    let mut split = None;
    let mut classes = None;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            let (s, k) = parse_meta(t);
            split = split.or(s);
            classes = classes.or(k);
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let [img, mask, domain] = fields[..] else {
            return Err(Error::Manifest {
                file: manifest_path,
                line: line_no,
                msg: format!("expected `image mask domain`, got {} fields", fields.len()),
            });
        };
        entries.push((line_no, img.to_owned(), mask.to_owned(), domain.to_owned()));
    }
    if entries.is_empty() {
        return Err(Error::Manifest {
            file: manifest_path,
            line: 0,
            msg: "manifest lists no samples".into(),
        });
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let split = split
        .or_else(|| {
            dir.parent()
                .and_then(Path::file_name)
                .and_then(|p| Split::parse(&p.to_string_lossy()))
        })
        .unwrap_or(Split::Source);

    let mut loaded = Vec::with_capacity(entries.len());
    for (line, img, mask, domain) in &entries {
        let (ip, mp) = (dir.join(img), dir.join(mask));
        for p in [&ip, &mp] {
            if !p.is_file() {
                return Err(Error::Manifest {
                    file: manifest_path.clone(),
                    line: *line,
                    msg: format!("missing file {}", p.display()),
                });
            }
        }
        let image = netpbm::read_ppm(&ip)?;
        let mask = netpbm::read_pgm(&mp)?;
        loaded.push((image, mask, domain.clone(), mp));
    }
    let classes = classes.unwrap_or_else(|| {
        let top = loaded
            .iter()
            .flat_map(|(_, m, ..)| m.data().iter().copied())
            .max()
            .unwrap_or(0);
        (top as usize + 1).max(2)
    });
    let samples = loaded
        .into_iter()
        .map(|(image, mask, domain, mp)| {
            Sample::new(image, mask, classes, domain).map_err(|e| Error::Format {
                file: mp,
                offset: 0,
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DomainDataset {
        name,
        split,
        classes,
        samples,
    })
}

pub fn domain_dir(root: &Path, ds: &DomainDataset) -> PathBuf {
    root.join(ds.split.as_str()).join(&ds.name)
}

pub fn write_layout(datasets: &[DomainDataset], root: &Path) -> Result<()> {
    for ds in datasets {
        write_dataset(ds, &domain_dir(root, ds))?;
    }
    Ok(())
}

/// Every domain under `root`, ordered by split then domain name.
pub fn read_layout(root: &Path) -> Result<Vec<DomainDataset>> {
    let mut out = Vec::new();
    for split in Split::ALL {
        let dir = root.join(split.as_str());
        if !dir.is_dir() {
            continue;
        }
        for name in io::subdirs(&dir)? {
            out.push(read_dataset(&dir.join(name))?);
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!(
            "no datasets found under {}",
            root.display()
        )));
    }
    Ok(out)
}

/// Datasets under a domain directory, a split directory or a layout root,
/// each with its directory relative to `dir`.
pub fn read_tree(dir: &Path) -> Result<Vec<(PathBuf, DomainDataset)>> {
    if dir.join(MANIFEST).is_file() {
        return Ok(vec![(PathBuf::new(), read_dataset(dir)?)]);
    }
    let names = io::subdirs(dir)?;
    if !names.is_empty() && names.iter().all(|n| dir.join(n).join(MANIFEST).is_file()) {
        return names
            .into_iter()
            .map(|n| Ok((PathBuf::from(&n), read_dataset(&dir.join(&n))?)))
            .collect();
    }
    Ok(read_layout(dir)?
        .into_iter()
        .map(|ds| (domain_dir(Path::new(""), &ds), ds))
        .collect())
}
