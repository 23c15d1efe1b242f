use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn image_err(path: &Path, message: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Loads an 8-bit PNG or binary PPM as a (1, 3, H, W) tensor in [-1, 1].
///
/// Alpha is dropped; grayscale is replicated to three channels.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| image_err(path, e))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(b) => b,
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            img.to_rgb8()
        }
        other => {
            return Err(image_err(
                path,
                format!("unsupported pixel format {:?}, expected 8-bit RGB/RGBA", other.color()),
            ))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    let plane = h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f32 / 127.5 - 1.0;
        }
    }
    Tensor::from_vec([1, 3, h, w], data)
}

fn to_bytes<E: Element>(t: &Tensor<E>) -> Result<(Vec<u8>, u32, u32)> {
    let s = t.shape();
    if s.n() != 1 || s.c() != 3 {
        return Err(Error::Dimension(format!(
            "save_image expects a single RGB image, got {s}"
        )));
    }
    let (h, w) = (s.h(), s.w());
    let plane = h * w;
    let d = t.data();
    let mut out = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            let v = d[c * plane + i].as_f64();
            let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
            out.push(((v + 1.0) * 127.5).round() as u8);
        }
    }
    Ok((out, w as u32, h as u32))
}

/// Writes a (1, 3, H, W) tensor, clamped to [-1, 1], as PNG or binary PPM
/// depending on the extension. The write is atomic.
pub fn save_image<E: Element>(t: &Tensor<E>, path: &Path) -> Result<()> {
    let (bytes, w, h) = to_bytes(t)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let mut buf = Vec::new();
    let res = match ext.as_deref() {
        Some("png") => {
            PngEncoder::new(Cursor::new(&mut buf)).write_image(&bytes, w, h, ExtendedColorType::Rgb8)
        }
        Some("ppm") => PnmEncoder::new(Cursor::new(&mut buf))
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(&bytes, w, h, ExtendedColorType::Rgb8),
        _ => return Err(image_err(path, "unsupported extension, expected .png or .ppm")),
    };
    res.map_err(|e| image_err(path, e))?;
    atomic_write(path, &buf)
}

/// Tiles equally sized (1, 3, H, W) images into one image, row by row.
pub fn tile_grid<E: Element>(rows: &[Vec<Tensor<E>>]) -> Result<Tensor<E>> {
    let first = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| Error::Argument("tile_grid needs at least one image".into()))?;
    let s = first.shape();
    let cols = rows[0].len();
    for img in rows.iter().flatten() {
        if img.shape() != s || s.n() != 1 {
            return Err(Error::Dimension(format!(
                "tile_grid expects single images of one shape, got {} and {s}",
                img.shape()
            )));
        }
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("tile_grid rows differ in length".into()));
    }
    let (h, w) = (s.h(), s.w());
    Ok(Tensor::from_fn([1, s.c(), h * rows.len(), w * cols], |[_, c, y, x]| {
        rows[y / h][x / w].at([0, c, y % h, x % w])
    }))
}
