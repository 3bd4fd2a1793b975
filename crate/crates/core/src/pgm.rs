//! Portable graymap (P2 ASCII / P5 binary) reading and writing.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Grayscale image with rows top to bottom as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl Graymap {
    /// Nonzero pixels are `true`. Shape is `(height, width)`.
    pub fn to_mask(&self) -> Array2<bool> {
        Array2::from_shape_fn((self.height, self.width), |(r, c)| self.pixels[r * self.width + c] != 0)
    }
}

pub fn read(path: &Path) -> Result<Graymap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes).map_err(|message| Error::Pgm {
        path: path.to_path_buf(),
        message,
    })
}

fn parse(bytes: &[u8]) -> std::result::Result<Graymap, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
    let binary = match magic.as_str() {
        "P2" => false,
        "P5" => true,
        other => return Err(format!("unsupported magic `{other}`")),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos).ok_or(format!("missing {name}"))?;
        *slot = tok.parse().map_err(|_| format!("bad {name} `{tok}`"))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(format!("maxval {maxval} out of range"));
    }
    let n = width * height;
    let pixels = if binary {
        // exactly one whitespace byte separates header and raster
        pos += 1;
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        let data = bytes.get(pos..pos + need).ok_or("truncated raster")?;
        if wide {
            data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            data.iter().map(|&b| b as u16).collect()
        }
    } else {
        let mut px = Vec::with_capacity(n);
        for _ in 0..n {
            let tok = next_token(bytes, &mut pos).ok_or("truncated raster")?;
            px.push(tok.parse::<u16>().map_err(|_| format!("bad pixel `{tok}`"))?);
        }
        px
    };
    Ok(Graymap {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Writes an 8-bit binary graymap, min-max scaled. Returns the `(min, max)`
/// used for scaling. Rows are written in array order.
pub fn write_scaled(path: &Path, values: &Array2<f64>, comment: &str) -> Result<(f64, f64)> {
    let (h, w) = values.dim();
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n# {comment}\n# min = {lo:e}\n# max = {hi:e}\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if v.is_finite() {
            (((v - lo) / range) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok((lo, hi))
}
