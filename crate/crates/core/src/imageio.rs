//! PNG encode/decode helpers for rasters, masks and detector images.

use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("png decode: {0}")]
    Decode(String),
    #[error("png encode: {0}")]
    Encode(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn encode(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header().map_err(|e| ImageError::Encode(e.to_string()))?;
        w.write_image_data(data).map_err(|e| ImageError::Encode(e.to_string()))?;
    }
    Ok(out)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit RGB PNG from interleaved `[0, 1]` floats.
pub fn encode_rgb(width: usize, height: usize, rgb: &[f32]) -> Result<Vec<u8>, ImageError> {
    let bytes: Vec<u8> = rgb.iter().map(|&v| to_u8(v)).collect();
    encode(width, height, png::ColorType::Rgb, png::BitDepth::Eight, &bytes)
}

/// 8-bit grayscale PNG from `[0, 1]` floats.
pub fn encode_gray8(width: usize, height: usize, values: &[f32]) -> Result<Vec<u8>, ImageError> {
    let bytes: Vec<u8> = values.iter().map(|&v| to_u8(v)).collect();
    encode(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)
}

/// 16-bit grayscale PNG from `[0, 1]` floats.
pub fn encode_gray16(width: usize, height: usize, values: &[f32]) -> Result<Vec<u8>, ImageError> {
    let mut bytes = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let q = (f64::from(v.clamp(0.0, 1.0)) * 65535.0).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    encode(width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

/// Binary mask as a 0/255 grayscale PNG.
pub fn encode_mask(width: usize, height: usize, mask: &[bool]) -> Result<Vec<u8>, ImageError> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    encode(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)
}

/// Decoded image as 8-bit RGB regardless of source colour type.
pub struct Rgb8 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb8 {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

pub fn decode_rgb8(bytes: &[u8]) -> Result<Rgb8, ImageError> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| ImageError::Decode(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| ImageError::Decode("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| ImageError::Decode(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let ch = info.color_type.samples();
    let mut data = Vec::with_capacity(w * h * 3);
    for row in 0..h {
        let line = &buf[row * info.line_size..row * info.line_size + w * ch];
        for px in line.chunks_exact(ch) {
            match ch {
                1 | 2 => data.extend_from_slice(&[px[0]; 3]),
                _ => data.extend_from_slice(&px[..3]),
            }
        }
    }
    Ok(Rgb8 { width: w, height: h, data })
}

/// Mask from any PNG: a pixel is set when its first channel is non-zero.
pub fn decode_mask(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>), ImageError> {
    let img = decode_rgb8(bytes)?;
    let mask = img.data.chunks_exact(3).map(|p| p[0] != 0).collect();
    Ok((img.width, img.height, mask))
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), ImageError> {
    if let Some(dir) = path.as_ref().parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
