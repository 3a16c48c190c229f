//! PNG read/write with settings fixed for byte-reproducible output.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, RgbImage};

use crate::error::{Error, Result};

pub fn save_png(path: &Path, img: &RgbImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    std::io::Write::flush(&mut out).map_err(|e| Error::io(path, e))
}

/// Loads any PNG as 8-bit RGB.
pub fn load_png(path: &Path) -> Result<RgbImage> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(img.into_rgb8())
}
