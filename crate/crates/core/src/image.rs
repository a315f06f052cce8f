//! 8-bit RGB images normalized to `[0, 1]`, with PNG input and output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    /// Interleaved RGB, row-major.
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if width == 0 || height == 0 || data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[f32] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        &self.data[i..i + 3]
    }

    /// Copy of the `[x0, x1) x [y0, y1)` region.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Image> {
        check_rect(self.width, self.height, x0, y0, x1, y1)?;
        Ok(Image::from_fn(x1 - x0, y1 - y0, |x, y| {
            let p = self.pixel(x0 + x, y0 + y);
            [p[0], p[1], p[2]]
        }))
    }

    /// Quantized 8-bit copy.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn check_rect(width: u32, height: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<()> {
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::BadRect(format!("[{x0}, {x1}) x [{y0}, {y1}) has zero area")));
    }
    if x1 > width || y1 > height {
        return Err(Error::BadRect(format!(
            "[{x0}, {x1}) x [{y0}, {y1}) exceeds the {width}x{height} image"
        )));
    }
    Ok(())
}

/// Normalized coordinate of the center of pixel `p` along an axis of `n` pixels.
#[inline]
pub fn pixel_center(p: u32, n: u32) -> f64 {
    (p as f64 + 0.5) / n as f64
}

/// Loads an 8-bit PNG. Grayscale is replicated to RGB; alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let file = File::open(path)?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "{depth:?}-bit samples (only 8-bit PNG is supported)"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    let bytes = &buf[..info.buffer_size()];
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette".into()))
        }
    };
    let mut data = Vec::with_capacity(info.width as usize * info.height as usize * 3);
    for row in bytes.chunks_exact(info.line_size) {
        for px in row[..info.width as usize * channels].chunks_exact(channels) {
            let rgb = if channels < 3 {
                [px[0]; 3]
            } else {
                [px[0], px[1], px[2]]
            };
            data.extend(rgb.iter().map(|&b| b as f32 / 255.0));
        }
    }
    Image::new(info.width, info.height, data)
}

/// Writes an 8-bit RGB PNG; values are clamped to `[0, 1]` and rounded.
pub fn save_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width, image.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer
        .write_image_data(&image.to_rgb8())
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer.finish().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png(path: &Path, width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) {
        let file = File::create(path).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(data).unwrap();
    }

    #[test]
    fn eight_bit_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(7, 5, |x, y| {
            [x as f32 * 30.0 / 255.0, y as f32 * 50.0 / 255.0, ((x * y) % 256) as f32 / 255.0]
        });
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.to_rgb8(), img.to_rgb8());
        assert_eq!(back, img);
    }

    #[test]
    fn grayscale_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        write_png(&path, 2, 1, png::ColorType::Grayscale, png::BitDepth::Eight, &[10, 200]);
        let img = load_image(&path).unwrap();
        assert_eq!(img.to_rgb8(), vec![10, 10, 10, 200, 200, 200]);
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        write_png(&path, 1, 1, png::ColorType::Rgb, png::BitDepth::Sixteen, &[0; 6]);
        assert!(matches!(load_image(&path), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io(_))));
    }

    #[test]
    fn crop_validates_rect() {
        let img = Image::filled(4, 4, [0.5; 3]);
        assert!(matches!(img.crop(1, 1, 1, 3), Err(Error::BadRect(_))));
        assert!(matches!(img.crop(0, 0, 5, 1), Err(Error::BadRect(_))));
        assert_eq!(img.crop(1, 1, 3, 2).unwrap().pixel_count(), 2);
    }
}
