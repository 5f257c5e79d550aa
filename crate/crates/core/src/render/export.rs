//! Map export: the lossless `CNOC` container and 8-bit PNG previews.
//!
//! Container layout (little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"CNOC"`                          |
//! | 4      | 2    | version (1)                             |
//! | 6      | 2    | width                                   |
//! | 8      | 2    | height                                  |
//! | 10     | 2    | channels                                |
//! | 12     | 1    | variant (0 constant, 1 identity, 2 spherical, 255 raw latent) |
//! | 13     | 1    | harmonic degree                         |
//! | 14     | 1    | flags (bit 0: radius channel present)   |
//! | 15     | 1    | reserved, 0                             |
//!
//! followed by `width · height · channels` f32 values in `(v, u, c)` order.

use super::encoding::{EncodingSpec, Variant};
use super::CnocsMap;

pub const MAGIC: &[u8; 4] = b"CNOC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
/// Variant byte for containers holding a raw latent rather than an encoded map.
pub const LATENT_VARIANT: u8 = 255;
const FLAG_RADIUS: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("container too short: {0} bytes")]
    Truncated(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u16),
    #[error("payload holds {got} bytes, header implies {expected}")]
    PayloadSize { expected: usize, got: usize },
    #[error("dimension {0} does not fit the 16-bit header field")]
    TooLarge(usize),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub width: u16,
    pub height: u16,
    pub channels: u16,
    pub variant: u8,
    pub degree: u8,
    pub flags: u8,
    pub data: Vec<f32>,
}

impl Container {
    pub fn from_map(map: &CnocsMap) -> Result<Self, ExportError> {
        let spec = map.spec;
        let (degree, flags) = match spec.variant {
            Variant::Spherical => (spec.degree, if spec.include_radius { FLAG_RADIUS } else { 0 }),
            _ => (0, 0),
        };
        Ok(Self {
            width: fit_u16(map.width as usize)?,
            height: fit_u16(map.height as usize)?,
            channels: fit_u16(map.channels())?,
            variant: spec.variant.code(),
            degree,
            flags,
            data: map.data.clone(),
        })
    }

    /// Latent stored `(channel, row, col)`; written in `(row, col, channel)` order.
    pub fn from_latent(channels: usize, height: usize, width: usize, chw: &[f64]) -> Result<Self, ExportError> {
        assert_eq!(chw.len(), channels * height * width, "latent buffer does not match its shape");
        let mut data = Vec::with_capacity(chw.len());
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    data.push(chw[(c * height + v) * width + u] as f32);
                }
            }
        }
        Ok(Self {
            width: fit_u16(width)?,
            height: fit_u16(height)?,
            channels: fit_u16(channels)?,
            variant: LATENT_VARIANT,
            degree: 0,
            flags: 0,
            data,
        })
    }

    pub fn encoding(&self) -> Option<EncodingSpec> {
        let variant = Variant::from_code(self.variant)?;
        Some(match variant {
            Variant::Spherical => EncodingSpec::spherical(self.degree, self.flags & FLAG_RADIUS != 0),
            Variant::Constant => EncodingSpec::constant(),
            Variant::Identity => EncodingSpec::identity(),
        })
    }

    /// Values back in `(channel, row, col)` order.
    pub fn to_chw(&self) -> Vec<f64> {
        let (c, h, w) = (self.channels as usize, self.height as usize, self.width as usize);
        let mut out = vec![0.0; c * h * w];
        for v in 0..h {
            for u in 0..w {
                for k in 0..c {
                    out[(k * h + v) * w + u] = self.data[(v * w + u) * c + k] as f64;
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.push(self.variant);
        out.push(self.degree);
        out.push(self.flags);
        out.push(0);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ExportError> {
        if bytes.len() < HEADER_LEN {
            return Err(ExportError::Truncated(bytes.len()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(ExportError::BadMagic);
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let version = u16_at(4);
        if version != VERSION {
            return Err(ExportError::Version(version));
        }
        let (width, height, channels) = (u16_at(6), u16_at(8), u16_at(10));
        let expected = width as usize * height as usize * channels as usize * 4;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(ExportError::PayloadSize {
                expected,
                got: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            variant: bytes[12],
            degree: bytes[13],
            flags: bytes[14],
            data,
        })
    }
}

fn fit_u16(v: usize) -> Result<u16, ExportError> {
    u16::try_from(v).map_err(|_| ExportError::TooLarge(v))
}

pub fn map_to_container_bytes(map: &CnocsMap) -> Result<Vec<u8>, ExportError> {
    Ok(Container::from_map(map)?.to_bytes())
}

fn to_byte(v: f64) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8
}

fn rgb_from_channels(px: &[f64]) -> [u8; 3] {
    match px.len() {
        0 => [0, 0, 0],
        1 => [to_byte(px[0]); 3],
        2 => [to_byte(px[0]), to_byte(px[1]), 0],
        _ => [to_byte(px[0]), to_byte(px[1]), to_byte(px[2])],
    }
}

fn encode_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>, ExportError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(rgb)?;
        writer.finish()?;
    }
    Ok(out)
}

/// RGB preview of the first three channels mapped `[-1, 1] → [0, 255]`.
/// Background pixels are black. A single channel renders as grayscale.
pub fn map_preview_png(map: &CnocsMap) -> Result<Vec<u8>, ExportError> {
    let c = map.channels();
    let shown = c.min(3);
    let mut rgb = Vec::with_capacity(map.object_index.len() * 3);
    let mut px = [0.0f64; 3];
    for (i, winner) in map.object_index.iter().enumerate() {
        if winner.is_none() {
            rgb.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        for (dst, src) in px.iter_mut().zip(&map.data[i * c..i * c + shown]) {
            *dst = *src as f64;
        }
        rgb.extend_from_slice(&rgb_from_channels(&px[..shown]));
    }
    encode_png(map.width, map.height, &rgb)
}

/// RGB preview of a `(channel, row, col)` latent, first three channels clamped to `[-1, 1]`.
pub fn latent_preview_png(channels: usize, height: usize, width: usize, chw: &[f64]) -> Result<Vec<u8>, ExportError> {
    let shown = channels.min(3);
    let mut rgb = Vec::with_capacity(height * width * 3);
    let mut px = [0.0f64; 3];
    for v in 0..height {
        for u in 0..width {
            for (k, slot) in px.iter_mut().enumerate().take(shown) {
                *slot = chw[(k * height + v) * width + u];
            }
            rgb.extend_from_slice(&rgb_from_channels(&px[..shown]));
        }
    }
    encode_png(fit_u16(width)? as u32, fit_u16(height)? as u32, &rgb)
}
