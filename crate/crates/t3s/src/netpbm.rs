//! Binary PPM (P6) and PGM (P5) with maxval 255.

use crate::error::{Error, Result};
use std::path::Path;
use t3s_core::data::Mask;
use t3s_core::Tensor;

/// Quantizes a `3×H×W` image in `[0, 1]` to P6 bytes.
pub fn encode_ppm(image: &Tensor) -> Vec<u8> {
    let s = image.shape();
    let (h, w) = (s[1], s[2]);
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * plane);
    let d = image.data();
    for i in 0..plane {
        for c in 0..3 {
            out.push((d[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

/// P5 bytes with one class index per pixel.
pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend_from_slice(mask.data());
    out
}

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn format_err(file: &Path, offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        file: file.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

/// Parses `magic width height maxval` with whitespace and `#` comments.
fn parse_header(bytes: &[u8], magic: &[u8; 2], file: &Path) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format_err(
            file,
            0,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(file, pos, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(file, start, "header field out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err(file, pos, "expected whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format_err(
            file,
            pos,
            format!("unsupported maxval {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(format_err(file, pos, "zero image dimension"));
    }
    Ok(Header {
        width,
        height,
        data_start: pos + 1,
    })
}

fn payload<'a>(bytes: &'a [u8], h: &Header, channels: usize, file: &Path) -> Result<&'a [u8]> {
    let need = h.width * h.height * channels;
    let have = bytes.len() - h.data_start;
    if have < need {
        return Err(format_err(
            file,
            bytes.len(),
            format!("truncated pixel data: {have} of {need} bytes"),
        ));
    }
    Ok(&bytes[h.data_start..h.data_start + need])
}

pub fn decode_ppm(bytes: &[u8], file: &Path) -> Result<Tensor> {
    let h = parse_header(bytes, b"P6", file)?;
    let px = payload(bytes, &h, 3, file)?;
    let plane = h.width * h.height;
    let mut data = vec![0.0; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = px[3 * i + c] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h.height, h.width], data)?)
}

pub fn decode_pgm(bytes: &[u8], file: &Path) -> Result<Mask> {
    let h = parse_header(bytes, b"P5", file)?;
    let px = payload(bytes, &h, 1, file)?;
    Ok(Mask::new(h.height, h.width, px.to_vec())?)
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    decode_ppm(&crate::io::read(path)?, path)
}

pub fn read_pgm(path: &Path) -> Result<Mask> {
    decode_pgm(&crate::io::read(path)?, path)
}
