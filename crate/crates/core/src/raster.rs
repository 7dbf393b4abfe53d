//! 8-bit grayscale rasters and their PGM/PNG encodings.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("invalid raster: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Png(String),
}

/// Row-major grayscale image; `pixels[row * width + col]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if pixels.len() != width * height {
            return Err(RasterError::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    /// Binary PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, RasterError> {
        let mut reader = BufReader::new(bytes);
        let mut tokens = Vec::new();
        let mut line = String::new();
        while tokens.len() < 4 {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(RasterError::Invalid("truncated PGM header".into()));
            }
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_string));
        }
        if tokens[0] != "P5" {
            return Err(RasterError::Invalid(format!("expected P5, found {}", tokens[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| RasterError::Invalid(format!("bad PGM number `{s}`")));
        let (w, h, max) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if max != 255 {
            return Err(RasterError::Invalid(format!("only 8-bit PGM supported, maxval {max}")));
        }
        let mut pixels = Vec::with_capacity(w * h);
        reader.read_to_end(&mut pixels)?;
        pixels.truncate(w * h);
        Self::from_pixels(w, h, pixels)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| RasterError::Invalid("pixel buffer size".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| RasterError::Png(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| RasterError::Png(e.to_string()))?
            .into_luma8();
        let (w, h) = img.dimensions();
        Self::from_pixels(w as usize, h as usize, img.into_raw())
    }

    /// Writes PGM or PNG depending on the file extension.
    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some("png") => self.to_png()?,
            _ => self.to_pgm(),
        };
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("png") => Self::from_png(&bytes),
            _ => Self::from_pgm(&bytes),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GrayImage {
        GrayImage::from_pixels(3, 2, vec![0, 10, 20, 200, 250, 255]).unwrap()
    }

    #[test]
    fn pgm_round_trip() {
        let img = sample();
        assert_eq!(GrayImage::from_pgm(&img.to_pgm()).unwrap(), img);
    }

    #[test]
    fn png_round_trip() {
        let img = sample();
        assert_eq!(GrayImage::from_png(&img.to_png().unwrap()).unwrap(), img);
    }

    #[test]
    fn rejects_wrong_pixel_count() {
        assert!(GrayImage::from_pixels(2, 2, vec![0; 3]).is_err());
    }
}
