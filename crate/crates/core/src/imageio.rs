//! 8-bit RGB image files (PNG and binary PPM) and grayscale heatmaps.
//!
//! Floats map to bytes as `round(v · 255)` with ties away from zero, after
//! clamping to `[0, 1]`; bytes map back as `b / 255`.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageEncoder, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn from_u8(b: u8) -> f64 {
    b as f64 / 255.0
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io_at(path, io),
        e => Error::Image(format!("{}: {e}", path.display())),
    }
}

/// Quantizes an H×W×3 tensor.
pub fn to_rgb8(img: &Tensor) -> Result<RgbImage> {
    let (h, w, c) = img.dims3()?;
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let bytes = img.data().iter().map(|&v| to_u8(v)).collect();
    Ok(RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions"))
}

pub fn from_rgb8(img: &RgbImage) -> Tensor {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&b| from_u8(b)).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data).expect("buffer matches dimensions")
}

fn is_ppm(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("ppm" | "pnm")
    )
}

/// Reads a PNG or PPM file as H×W×3 in `[0, 1]`. Grayscale and alpha inputs are
/// converted to RGB.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
    let format = if is_ppm(path) {
        ImageFormat::Pnm
    } else {
        image::guess_format(&bytes).map_err(|e| image_err(path, e))?
    };
    let img =
        image::load_from_memory_with_format(&bytes, format).map_err(|e| image_err(path, e))?;
    Ok(from_rgb8(&img.to_rgb8()))
}

/// Writes PNG, or binary PPM (P6) when the extension is `.ppm`.
pub fn write_image(path: &Path, img: &Tensor) -> Result<()> {
    let rgb = to_rgb8(img)?;
    if is_ppm(path) {
        let f = BufWriter::new(fs::File::create(path).map_err(|e| Error::io_at(path, e))?);
        PnmEncoder::new(f)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(
                rgb.as_raw(),
                rgb.width(),
                rgb.height(),
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| image_err(path, e))
    } else {
        rgb.save_with_format(path, ImageFormat::Png)
            .map_err(|e| image_err(path, e))
    }
}

/// Range used to normalize a heatmap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatmapRange {
    pub min: f64,
    pub max: f64,
}

/// Writes a single-channel map as an 8-bit grayscale PNG, min-max normalized,
/// plus a sidecar `<path>.txt` holding the range so values can be recovered as
/// `min + (byte / 255) · (max − min)`. A constant map is written as all zeros.
pub fn write_heatmap(path: &Path, map: &Tensor) -> Result<HeatmapRange> {
    let (h, w, c) = map.dims3()?;
    if c != 1 {
        return Err(Error::Shape(format!("heatmap needs 1 channel, got {c}")));
    }
    map.ensure_finite("heatmap")?;
    let min = map.data().iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let bytes = map
        .data()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                to_u8((v - min) / span)
            } else {
                0
            }
        })
        .collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_err(path, e))?;
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    fs::write(
        &side,
        format!("normalization=minmax\nmin={min:e}\nmax={max:e}\n"),
    )
    .map_err(|e| Error::io_at(Path::new(&side), e))?;
    Ok(HeatmapRange { min, max })
}
