//! Grayscale PFM (`Pf`) with 32-bit floats, rows stored bottom to top.
//! Invalid pixels are NaN.

use std::path::Path;

use crate::depth_map::DepthMap;
use crate::error::{Error, Result};

/// Encodes a row-major, top-to-bottom `f32` grid as little-endian PFM.
pub fn encode_pfm(width: usize, height: usize, values: &[f32]) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {width}x{height} PFM",
            values.len()
        )));
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for row in values.chunks_exact(width).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a grayscale PFM into `(width, height, values)` with rows top to
/// bottom. Both byte orders are accepted.
pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PFM header".into()));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| {
            Error::Format("non-ASCII PFM header".into())
        })?);
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(Error::Format("color PFM not supported".into())),
        other => return Err(Error::Format(format!("bad PFM magic `{other}`"))),
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Format(format!("bad PFM dimension `{s}`")))
    };
    let width = parse_dim(tokens[1])?;
    let height = parse_dim(tokens[2])?;
    let scale: f32 = tokens[3]
        .parse()
        .map_err(|_| Error::Format(format!("bad PFM scale `{}`", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("bad PFM scale `{}`", tokens[3])));
    }
    let little = scale < 0.0;
    let n = width * height;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != n * 4 {
        return Err(Error::Format(format!(
            "PFM raster has {} bytes, expected {}",
            raster.len(),
            n * 4
        )));
    }
    let mut values = vec![0.0f32; n];
    for (r, row) in raster.chunks_exact(width * 4).enumerate() {
        let y = height - 1 - r;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let b: [u8; 4] = b.try_into().unwrap();
            values[y * width + x] = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok((width, height, values))
}

pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f32]) -> Result<()> {
    std::fs::write(path, encode_pfm(width, height, values)?)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    decode_pfm(&std::fs::read(path)?)
}

pub fn write_pfm_depth(map: &DepthMap, path: &Path) -> Result<()> {
    let values: Vec<f32> = (0..map.len())
        .map(|i| map.at_index(i).map_or(f32::NAN, |d| d as f32))
        .collect();
    write_pfm(path, map.width(), map.height(), &values)
}

pub fn read_pfm_depth(path: &Path) -> Result<DepthMap> {
    let (w, h, values) = read_pfm(path)?;
    DepthMap::from_values(w, h, values.into_iter().map(f64::from).collect())
}
