//! 16-bit depth PNGs (TUM convention) and 8-bit RGB PNGs.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::depth_map::DepthMap;
use crate::error::{Error, Result};
use crate::image::Image;

/// Raw units per meter in TUM depth images.
pub const TUM_DEPTH_SCALE: f64 = 5000.0;

fn decode(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Loads a 16-bit grayscale depth PNG: `meters = raw / scale`, raw 0 is
/// invalid.
pub fn load_depth_png(path: &Path, scale: f64) -> Result<DepthMap> {
    let DynamicImage::ImageLuma16(buf) = decode(path)? else {
        return Err(Error::BitDepth {
            path: path.to_path_buf(),
            found: "not 16-bit grayscale".into(),
        });
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let values = buf
        .into_raw()
        .into_iter()
        .map(|raw| if raw == 0 { f64::NAN } else { raw as f64 / scale })
        .collect();
    DepthMap::from_values(w, h, values)
}

/// Inverse of [`load_depth_png`]; depths beyond the 16-bit range saturate,
/// invalid pixels are written as 0.
pub fn write_depth_png(map: &DepthMap, path: &Path, scale: f64) -> Result<()> {
    let raw: Vec<u16> = (0..map.len())
        .map(|i| match map.at_index(i) {
            Some(d) => (d * scale).round().clamp(1.0, u16::MAX as f64) as u16,
            None => 0,
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw).expect("sized");
    buf.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Loads an 8-bit RGB PNG as a 3-channel image with values in `[0, 1]`.
pub fn load_rgb_png(path: &Path) -> Result<Image> {
    let DynamicImage::ImageRgb8(buf) = decode(path)? else {
        return Err(Error::BitDepth {
            path: path.to_path_buf(),
            found: "not 8-bit RGB".into(),
        });
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let data = buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Image::new(w, h, 3, data)
}

/// Writes a 1- or 3-channel image with values in `[0, 1]` as 8-bit RGB.
pub fn write_rgb_png(image: &Image, path: &Path) -> Result<()> {
    let c = image.channels();
    let mut raw = Vec::with_capacity(image.width() * image.height() * 3);
    for px in image.data().chunks_exact(c) {
        for k in 0..3 {
            let v = px[if c == 3 { k } else { 0 }];
            raw.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(image.width() as u32, image.height() as u32, raw).expect("sized");
    buf.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
