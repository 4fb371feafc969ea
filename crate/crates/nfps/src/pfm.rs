//! Portable float map images.
//!
//! Header: `PF` (three channels) or `Pf` (one channel), the width and height
//! in ASCII, then a scale whose sign gives the byte order (negative is little
//! endian), each separated by whitespace, with a single whitespace byte
//! before the payload. The payload holds `f32` rows from the bottom row up.
//! Files are always written little endian.

use std::path::Path;

use nfps_core::geometry::{DepthMap, NormalMap};
use nfps_core::{Grid, Image, Mask, Vec3};

use crate::error::{CliError, IoContext, Result};

/// Float raster with rows stored top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("byte {offset}: {message}")]
pub struct PfmError {
    pub offset: u64,
    pub message: String,
}

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T, PfmError> {
    Err(PfmError {
        offset: offset as u64,
        message: message.into(),
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) -> Result<(), PfmError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos == start {
            return fail(self.pos, "expected whitespace");
        }
        Ok(())
    }

    fn token(&mut self) -> Result<(usize, &str), PfmError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return fail(start, "unexpected end of header");
        }
        match std::str::from_utf8(&self.bytes[start..self.pos]) {
            Ok(s) => Ok((start, s)),
            Err(_) => fail(start, "header is not ASCII"),
        }
    }

    fn dimension(&mut self, what: &str) -> Result<usize, PfmError> {
        let (at, tok) = self.token()?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => fail(at, format!("invalid {what} {tok:?}")),
        }
    }
}

impl PfmImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, PfmError> {
        if channels != 1 && channels != 3 {
            return fail(0, format!("{channels} channels; PFM holds 1 or 3"));
        }
        if data.len() != width * height * channels {
            return fail(0, format!("{} values for a {width}x{height}x{channels} image", data.len()));
        }
        Ok(PfmImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, PfmError> {
        let channels = match bytes.get(..2) {
            Some(b"PF") => 3,
            Some(b"Pf") => 1,
            _ => return fail(0, "missing PF or Pf magic"),
        };
        let mut cur = Cursor { bytes, pos: 2 };
        cur.skip_space()?;
        let width = cur.dimension("width")?;
        cur.skip_space()?;
        let height = cur.dimension("height")?;
        cur.skip_space()?;
        let (at, tok) = cur.token()?;
        let scale: f64 = match tok.parse() {
            Ok(s) if s != 0.0 && f64::is_finite(s) => s,
            _ => return fail(at, format!("invalid scale {tok:?}")),
        };
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return fail(cur.pos, "expected a whitespace byte before the payload"),
        }
        let count = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .filter(|n| n.checked_mul(4).is_some());
        let Some(count) = count else {
            return fail(at, "image dimensions overflow");
        };
        let payload = &bytes[cur.pos..];
        if payload.len() < count * 4 {
            return fail(
                bytes.len(),
                format!("payload truncated: {} of {} bytes", payload.len(), count * 4),
            );
        }
        if payload.len() > count * 4 {
            return fail(cur.pos + count * 4, "trailing bytes after payload");
        }
        let little = scale < 0.0;
        let row_len = width * channels;
        let mut data = vec![0.0f32; count];
        for (k, chunk) in payload.chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            let (file_row, i) = (k / row_len, k % row_len);
            data[(height - 1 - file_row) * row_len + i] = v;
        }
        Ok(PfmImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{magic}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        let row_len = self.width * self.channels;
        out.reserve(self.data.len() * 4);
        for row in self.data.chunks_exact(row_len.max(1)).rev() {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).at(path)?;
        Self::parse(&bytes).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            kind: "byte",
            offset: e.offset,
            message: e.message,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).at(path)
    }

    pub fn from_image(img: &Image) -> Result<Self> {
        let data = img.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(img.width(), img.height(), img.channels(), data).map_err(|e| CliError::config(e.message))
    }

    pub fn to_image(&self) -> Image {
        let data = self.data.iter().map(|&v| v as f64).collect();
        Image::from_vec(self.width, self.height, self.channels, data).expect("shape checked on construction")
    }

    fn expect_channels(&self, channels: usize, path: &Path) -> Result<()> {
        if self.channels != channels {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                kind: "byte",
                offset: 0,
                message: format!("expected {channels} channel(s), found {}", self.channels),
            });
        }
        Ok(())
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    Ok(PfmImage::read(path)?.to_image())
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    PfmImage::from_image(img)?.write(path)
}

/// Masks are single-channel images holding 0 or 1.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let data = mask.as_slice().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    PfmImage::new(mask.width(), mask.height(), 1, data)
        .expect("shape matches")
        .write(path)
}

/// Any value above one half counts as inside.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = PfmImage::read(path)?;
    img.expect_channels(1, path)?;
    Ok(Grid::from_vec(img.width, img.height, img.data.iter().map(|&v| v > 0.5).collect())?)
}

/// Depth in meters, zero outside the mask.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let data = depth
        .values
        .as_slice()
        .iter()
        .zip(depth.mask.as_slice())
        .map(|(&z, &m)| if m { z as f32 } else { 0.0 })
        .collect();
    PfmImage::new(depth.width(), depth.height(), 1, data)
        .expect("shape matches")
        .write(path)
}

/// Reads depth; without a mask, the finite positive pixels are inside.
pub fn read_depth(path: &Path, mask: Option<&Mask>) -> Result<DepthMap> {
    let img = PfmImage::read(path)?;
    img.expect_channels(1, path)?;
    let values = Grid::from_vec(img.width, img.height, img.data.iter().map(|&v| v as f64).collect())?;
    let mask = match mask {
        Some(m) => m.clone(),
        None => values.map(|&z| z.is_finite() && z > 0.0),
    };
    Ok(DepthMap::new(values, mask)?)
}

/// Unit normals as three channels, zero outside the mask.
pub fn write_normals(path: &Path, normals: &NormalMap) -> Result<()> {
    let mut data = Vec::with_capacity(normals.vectors.len() * 3);
    for (n, &m) in normals.vectors.as_slice().iter().zip(normals.mask.as_slice()) {
        let n = if m { *n } else { Vec3::zeros() };
        data.extend([n.x as f32, n.y as f32, n.z as f32]);
    }
    PfmImage::new(normals.width(), normals.height(), 3, data)
        .expect("shape matches")
        .write(path)
}

/// Reads normals and renormalizes them; without a mask, the nonzero pixels
/// are inside.
pub fn read_normals(path: &Path, mask: Option<&Mask>) -> Result<NormalMap> {
    let img = PfmImage::read(path)?;
    img.expect_channels(3, path)?;
    let raw: Vec<Vec3> = img
        .data
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    let mut inside: Vec<bool> = raw.iter().map(|n| n.norm() > 0.5 && n.iter().all(|c| c.is_finite())).collect();
    if let Some(m) = mask {
        if m.width() != img.width || m.height() != img.height {
            return Err(nfps_core::Error::Dimension {
                expected: format!("{}x{}", img.width, img.height),
                actual: format!("{}x{}", m.width(), m.height()),
            }
            .into());
        }
        for (i, v) in inside.iter_mut().enumerate() {
            *v &= m.as_slice()[i];
        }
    }
    let vectors = raw
        .iter()
        .zip(&inside)
        .map(|(n, &m)| if m { n.normalize() } else { Vec3::new(0.0, 0.0, -1.0) })
        .collect();
    let vectors = Grid::from_vec(img.width, img.height, vectors)?;
    Ok(NormalMap::new(vectors, Grid::from_vec(img.width, img.height, inside)?)?)
}
