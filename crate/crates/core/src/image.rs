//! Dense float images and binary PPM (P6) / PGM (P5) export.

use std::io::Write;
use std::path::Path;

use crate::error::{io_err, CoreError, Result};

/// Row-major `[height, width, channels]` float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(CoreError::ShapeMismatch {
                op: "image",
                lhs: vec![height, width, channels],
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Binary PPM for 3-channel images, PGM for single-channel ones.
    pub fn encode_pnm(&self) -> Result<Vec<u8>> {
        let magic = match self.channels {
            3 => "P6",
            1 => "P5",
            c => {
                return Err(CoreError::InvalidArgument(format!(
                    "cannot encode {c}-channel image as PNM"
                )))
            }
        };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        Ok(out)
    }

    pub fn save_pnm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_pnm()?;
        let mut f = std::fs::File::create(path).map_err(io_err(path))?;
        f.write_all(&bytes).map_err(io_err(path))
    }

    /// Single-channel image scaled so `max` maps to white.
    pub fn normalized_gray(values: &[f32], height: usize, width: usize, max: f32) -> Result<Self> {
        let data = values.iter().map(|v| v / max.max(1e-12)).collect();
        Self::from_data(height, width, 1, data)
    }
}

/// Parse a binary P6/P5 file produced by [`Image::encode_pnm`].
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let bad = |m: &str| CoreError::InvalidArgument(format!("pnm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    let channels = match fields[0] {
        "P6" => 3,
        "P5" => 1,
        _ => return Err(bad("unsupported magic")),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad number"));
    let (w, h) = (parse(fields[1])?, parse(fields[2])?);
    let body = bytes.get(pos..pos + w * h * channels).ok_or_else(|| bad("truncated body"))?;
    Image::from_data(h, w, channels, body.iter().map(|&b| b as f32 / 255.0).collect())
}
