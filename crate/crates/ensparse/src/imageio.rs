//! 8-bit grayscale images: binary PGM (P5) and PNG.

use std::path::Path;

use ensparse_core::ImagePlane;

use crate::error::{Error, Result};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Parses a P5 file with maxval up to 255 or 65535.
pub fn decode_pgm(bytes: &[u8]) -> Result<ImagePlane> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::data("PGM header is truncated")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::data("not a binary PGM (P5) file"));
    }
    let mut num = || -> Result<usize> { token()?.parse().map_err(|_| Error::data("bad PGM header number")) };
    let (w, h, maxval) = (num()?, num()?, num()?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::data(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(bpp));
    let raster = need
        .and_then(|n| bytes.get(start..start + n))
        .ok_or_else(|| Error::data("PGM raster is truncated"))?;
    let scale = maxval as f64;
    let pixels = if bpp == 1 {
        raster.iter().map(|b| *b as f64 / scale).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
    };
    Ok(ImagePlane::new(w, h, pixels)?)
}

pub fn encode_pgm(image: &ImagePlane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.pixels().iter().map(|v| to_u8(*v)));
    out
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a PGM or PNG (converted to 8-bit luma) into `[0, 1]`.
pub fn read_image(path: &Path) -> Result<ImagePlane> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = img.dimensions();
    let pixels = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Ok(ImagePlane::new(w as usize, h as usize, pixels)?)
}

/// Writes PNG when the extension says so, PGM otherwise.
pub fn write_image(path: &Path, image: &ImagePlane) -> Result<()> {
    if is_png(path) {
        let raw = image.pixels().iter().map(|v| to_u8(*v)).collect();
        let buf = image::GrayImage::from_raw(image.width() as u32, image.height() as u32, raw)
            .expect("buffer matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))
    } else {
        std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
    }
}

/// Rounds to the 8-bit grid, as a write/read cycle would.
pub fn quantize(image: &ImagePlane) -> ImagePlane {
    let pixels = image.pixels().iter().map(|v| to_u8(*v) as f64 / 255.0).collect();
    ImagePlane::new(image.width(), image.height(), pixels).expect("same shape")
}
