//! Binary netpbm images: P6 (RGB) input and P5 (grey) label maps.

use std::fs;
use std::path::Path;

use rand::RngCore;

use super::entry_rng;
use crate::error::{Error, Result};
use crate::tensor::{LabelMap, Tensor, TensorShape};

/// Maps an 8-bit intensity to `[-1, 1]`.
pub fn normalize_pixel(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Inverse of [`normalize_pixel`], rounding to the nearest level.
pub fn denormalize_pixel(x: f32) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::format(0, "file too short for a netpbm header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start as u64, "header field out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos as u64, "expected whitespace after maxval")),
    }
    Ok(Header { magic, width: fields[0], height: fields[1], maxval: fields[2], data_offset: pos })
}

/// Decodes an 8-bit binary PPM into an `h x w x 3` tensor scaled to `[-1, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let hdr = parse_header(bytes)?;
    if &hdr.magic != b"P6" {
        return Err(Error::format(
            0,
            format!("unsupported magic {:?}, expected P6", String::from_utf8_lossy(&hdr.magic)),
        ));
    }
    if hdr.maxval != 255 {
        return Err(Error::format(0, format!("unsupported maxval {}, only 8-bit (255) images are read", hdr.maxval)));
    }
    if hdr.width == 0 || hdr.height == 0 {
        return Err(Error::format(0, format!("invalid dimensions {}x{}", hdr.width, hdr.height)));
    }
    let n = hdr.width * hdr.height * 3;
    let pixels = bytes
        .get(hdr.data_offset..hdr.data_offset + n)
        .ok_or_else(|| Error::format(bytes.len() as u64, format!("truncated pixel data, need {n} bytes")))?;
    let shape = TensorShape::new(hdr.height, hdr.width, 3)?;
    Tensor::new(shape, pixels.iter().map(|&v| normalize_pixel(v)).collect())
}

/// A seeded image of uniformly drawn 8-bit RGB pixels, normalized.
pub fn random_image(h: usize, w: usize, seed: u64) -> Result<Tensor> {
    let shape = TensorShape::new(h, w, 3)?;
    let mut rng = entry_rng(seed, "input");
    Ok(Tensor::from_fn(shape, |_, _, _| normalize_pixel((rng.next_u32() >> 24) as u8)))
}

pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.c != 3 {
        return Err(Error::shape(format!("PPM needs 3 channels, got {s}")));
    }
    let mut buf = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    buf.extend(image.data().iter().map(|&x| denormalize_pixel(x)));
    Ok(buf)
}

pub fn read_image_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_ppm(&fs::read(path)?)
}

pub fn write_image_ppm(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

pub fn encode_pgm(map: &LabelMap) -> Result<Vec<u8>> {
    map.check_range(256).map_err(|e| Error::format(0, format!("labels must fit in one byte: {e}")))?;
    let mut buf = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    buf.extend(map.labels().iter().map(|&l| l as u8));
    Ok(buf)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let hdr = parse_header(bytes)?;
    if &hdr.magic != b"P5" {
        return Err(Error::format(0, "unsupported magic, expected P5"));
    }
    if hdr.maxval > 255 || hdr.maxval == 0 {
        return Err(Error::format(0, format!("unsupported maxval {}", hdr.maxval)));
    }
    let n = hdr.width * hdr.height;
    let data = bytes
        .get(hdr.data_offset..hdr.data_offset + n)
        .ok_or_else(|| Error::format(bytes.len() as u64, format!("truncated pixel data, need {n} bytes")))?;
    LabelMap::new(hdr.height, hdr.width, data.iter().map(|&b| b as u32).collect())
}

/// Writes label values as raw bytes of a P5 image.
pub fn write_labelmap_pgm(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(map)?)?;
    Ok(())
}

pub fn read_labelmap_pgm(path: impl AsRef<Path>) -> Result<LabelMap> {
    decode_pgm(&fs::read(path)?)
}
