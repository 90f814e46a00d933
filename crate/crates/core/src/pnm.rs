//! Binary PGM (P5) and PPM (P6) codecs, 8-bit only.
//!
//! Intensity encode is `floor(v * 255 + 0.5)`; decode is `byte / 255`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ImageBuf, RgbImage};

#[inline]
pub fn encode_intensity(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[inline]
pub fn decode_intensity(b: u8) -> f64 {
    b as f64 / 255.0
}

pub fn encode_pgm(img: &ImageBuf) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| encode_intensity(v)));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ImageBuf> {
    let (header, body) = parse_header(bytes, b"P5")?;
    let n = header.width * header.height;
    if body.len() < n {
        return Err(Error::InvalidData(format!(
            "PGM payload has {} bytes, expected {n}",
            body.len()
        )));
    }
    let data = body[..n].iter().map(|&b| decode_intensity(b)).collect();
    ImageBuf::new(header.height, header.width, data)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| encode_intensity(v)));
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (header, body) = parse_header(bytes, b"P6")?;
    let n = 3 * header.width * header.height;
    if body.len() < n {
        return Err(Error::InvalidData(format!(
            "PPM payload has {} bytes, expected {n}",
            body.len()
        )));
    }
    let data = body[..n].iter().map(|&b| decode_intensity(b)).collect();
    RgbImage::new(header.height, header.width, data)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &ImageBuf) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageBuf> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}

struct Header {
    width: usize,
    height: usize,
}

fn parse_header<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<(Header, &'a [u8])> {
    if !bytes.starts_with(magic) {
        return Err(Error::InvalidData(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = magic.len();
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
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
            return Err(Error::InvalidData("malformed PNM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidData("PNM header value overflow".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::InvalidData(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::InvalidData("missing raster separator".into())),
    }
    Ok((Header { width, height }, &bytes[pos..]))
}
