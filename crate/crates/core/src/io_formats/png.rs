//! 8-bit PNG (and optional JPEG) for display-gamma rasters.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ColorType, DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};
use crate::raster::{Colorspace, RasterImage};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";
/// Empty IEND chunk with its CRC.
const PNG_TRAILER: &[u8] = b"\0\0\0\0IEND\xae\x42\x60\x82";

/// Quantizes `[0, 1]` samples to bytes with round-to-nearest.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn color_type(channels: usize) -> ExtendedColorType {
    match channels {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    }
}

fn require_display(image: &RasterImage) -> Result<()> {
    if image.colorspace() != Colorspace::DisplayGamma {
        return Err(Error::invalid(
            "image",
            "8-bit files hold display-gamma data; convert linear images first",
        ));
    }
    Ok(())
}

/// Encodes a display-gamma image as PNG bytes. Output is deterministic.
pub fn encode_png8(image: &RasterImage) -> Result<Vec<u8>> {
    require_display(image)?;
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(
            &bytes,
            image.width() as u32,
            image.height() as u32,
            color_type(image.channels()),
        )
        .map_err(|e| Error::Internal(format!("png encoding failed: {e}")))?;
    Ok(out)
}

pub fn write_png8(image: &RasterImage, path: &Path) -> Result<()> {
    let bytes = encode_png8(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// JPEG at the given quality. Alpha is dropped.
pub fn write_jpeg(image: &RasterImage, path: &Path, quality: u8) -> Result<()> {
    require_display(image)?;
    let rgb = image.to_rgb();
    let bytes: Vec<u8> = rgb.data().iter().map(|&v| quantize(v)).collect();
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality)
        .write_image(
            &bytes,
            rgb.width() as u32,
            rgb.height() as u32,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Internal(format!("jpeg encoding failed: {e}")))?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Decodes PNG or JPEG bytes into a display-gamma raster with samples `v / 255`.
///
/// Grayscale stays single-channel, alpha is kept, 16-bit data is reduced to 8
/// bits.
pub fn decode_image8(bytes: &[u8], path: &Path) -> Result<RasterImage> {
    if bytes.starts_with(PNG_SIGNATURE) && !bytes.ends_with(PNG_TRAILER) {
        return Err(Error::decode(
            path,
            "truncated PNG: no IEND chunk at end of file",
        ));
    }
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::decode(path, e.to_string()))?;
    let img = reader
        .decode()
        .map_err(|e| Error::decode(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img.color() {
        ColorType::L8 | ColorType::L16 => (1, img.into_luma8().into_raw()),
        ColorType::La8
        | ColorType::La16
        | ColorType::Rgba8
        | ColorType::Rgba16
        | ColorType::Rgba32F => (4, img.into_rgba8().into_raw()),
        _ => (3, DynamicImage::into_rgb8(img).into_raw()),
    };
    let data = raw.into_iter().map(|b| b as f32 / 255.0).collect();
    RasterImage::new(w, h, channels, data, Colorspace::DisplayGamma)
}

pub fn read_image8(path: &Path) -> Result<RasterImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image8(&bytes, path)
}

/// Horizontal gray ramp used as a byte-stable PNG fixture.
pub fn gradient_ramp(width: usize, height: usize) -> RasterImage {
    RasterImage::from_fn(width, height, 3, Colorspace::DisplayGamma, |x, y, px| {
        let v = x as f32 / (width - 1).max(1) as f32;
        px[0] = v;
        px[1] = 1.0 - v;
        px[2] = y as f32 / (height - 1).max(1) as f32;
    })
    .expect("ramp dimensions are valid")
}
