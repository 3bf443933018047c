//! Flat binary checkpoints.
//!
//! ```text
//! "T3S1"
//! u32 entry count
//! per entry: u32 name length, name (UTF-8), u8 dtype length, "f64",
//!            u32 rank, rank × u64 extents
//! raw little-endian f64 arrays in manifest order
//! ```
//!
//! All integers are little-endian. The first entry, `meta`, records the
//! hook mode and adapter settings; the rest follow
//! `ModelParams::named_tensors`.

use crate::error::{Error, Result};
use crate::io;
use std::path::Path;
use t3s_core::bank::StyleBank;
use t3s_core::model::{ConvLayer, LoraAdapter, ModelParams, ProjectionMode, ENCODER_LAYERS};
use t3s_core::Tensor;

pub const MAGIC: &[u8; 4] = b"T3S1";
const META_VERSION: f64 = 1.0;

fn meta(p: &ModelParams) -> Tensor {
    let mut v = vec![
        META_VERSION,
        matches!(p.projection, ProjectionMode::Always) as u8 as f64,
        p.lora_enabled as u8 as f64,
        p.encoder_frozen as u8 as f64,
        p.adapters.len() as f64,
    ];
    for a in &p.adapters {
        v.extend([a.layer as f64, a.rank as f64, a.alpha]);
    }
    Tensor::from_vec(v)
}

pub fn encode(p: &ModelParams) -> Vec<u8> {
    let meta = meta(p);
    let mut entries: Vec<(String, &Tensor)> = vec![("meta".into(), &meta)];
    entries.extend(p.named_tensors());
    let mut out = MAGIC.to_vec();
    out.extend((entries.len() as u32).to_le_bytes());
    for (name, t) in &entries {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.push(3);
        out.extend(b"f64");
        out.extend((t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend((d as u64).to_le_bytes());
        }
    }
    for (_, t) in &entries {
        for v in t.data() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            file: self.file.to_path_buf(),
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("unexpected end of checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| self.err("extent too large"))
    }
}

pub fn decode(bytes: &[u8], file: &Path) -> Result<ModelParams> {
    let mut r = Reader {
        bytes,
        pos: 0,
        file,
    };
    if r.take(4)? != MAGIC {
        r.pos = 0;
        return Err(r.err("bad magic, expected T3S1"));
    }
    let count = r.u32()?;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| r.err("entry name is not UTF-8"))?;
        let dlen = r.take(1)?[0] as usize;
        if r.take(dlen)? != b"f64" {
            return Err(r.err(format!("unsupported dtype for {name}")));
        }
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        manifest.push((name, shape));
    }
    let mut tensors = std::collections::BTreeMap::new();
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| r.err("tensor too large"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| r.err(format!("{name}: {e}")))?;
        tensors.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after tensor data"));
    }
    build(tensors, file)
}

fn build(mut t: std::collections::BTreeMap<String, Tensor>, file: &Path) -> Result<ModelParams> {
    let missing = |name: &str| Error::Format {
        file: file.to_path_buf(),
        offset: 0,
        msg: format!("checkpoint lacks {name}"),
    };
    let mut take = |name: &str| t.remove(name).ok_or_else(|| missing(name));
    let meta = take("meta")?;
    let m = meta.data();
    if m.len() < 5 || m[0] != META_VERSION {
        return Err(missing("a supported meta record"));
    }
    let mut layer = |prefix: &str| -> Result<ConvLayer> {
        Ok(ConvLayer {
            weight: take(&format!("{prefix}.weight"))?,
            bias: take(&format!("{prefix}.bias"))?,
        })
    };
    let encoder = [layer("enc1")?, layer("enc2")?, layer("enc3")?];
    let decoder = [layer("dec1")?, layer("dec2")?];
    let bank = StyleBank::from_raw(take("bank.raw_mu")?, take("bank.raw_sigma")?)?;
    let n_adapters = m[4] as usize;
    if m.len() != 5 + 3 * n_adapters {
        return Err(missing("consistent adapter metadata"));
    }
    let mut adapters = Vec::with_capacity(n_adapters);
    for k in 0..n_adapters {
        let rec = &m[5 + 3 * k..8 + 3 * k];
        let idx = rec[0] as usize;
        let name = ENCODER_LAYERS
            .get(idx)
            .ok_or_else(|| missing("a valid adapter layer"))?;
        adapters.push(LoraAdapter {
            layer: idx,
            rank: rec[1] as usize,
            alpha: rec[2],
            a: take(&format!("lora.{name}.a"))?,
            b: take(&format!("lora.{name}.b"))?,
        });
    }
    Ok(ModelParams {
        encoder,
        decoder,
        bank,
        adapters,
        lora_enabled: m[2] != 0.0,
        encoder_frozen: m[3] != 0.0,
        projection: if m[1] != 0.0 {
            ProjectionMode::Always
        } else {
            ProjectionMode::Off
        },
    })
}

pub fn save(p: &ModelParams, path: &Path) -> Result<()> {
    io::write(path, encode(p))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    decode(&io::read(path)?, path)
}
