//! Float image buffers, channel selection and binary netpbm (P5/P6) I/O.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image shape {found:?} does not match {expected:?}")]
    Shape {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("channel selection needs a 3-channel image, got {0} channel(s)")]
    Channels(usize),
    #[error("netpbm: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ImageError>;

/// BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// A single-channel view of an RGB signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    R,
    G,
    B,
    Gray,
}

impl Channel {
    pub fn weights(self) -> [f64; 3] {
        match self {
            Channel::R => [1.0, 0.0, 0.0],
            Channel::G => [0.0, 1.0, 0.0],
            Channel::B => [0.0, 0.0, 1.0],
            Channel::Gray => LUMA,
        }
    }

    pub fn apply(self, rgb: [f64; 3]) -> f64 {
        match self {
            Channel::R => rgb[0],
            Channel::G => rgb[1],
            Channel::B => rgb[2],
            Channel::Gray => LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "r",
            Channel::G => "g",
            Channel::B => "b",
            Channel::Gray => "gray",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Some(Channel::R),
            "g" => Some(Channel::G),
            "b" => Some(Channel::B),
            "gray" | "grey" => Some(Channel::Gray),
            _ => None,
        }
    }
}

/// Row-major `height x width x channels` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn filled(height: usize, width: usize, color: &[f64]) -> Self {
        let mut data = Vec::with_capacity(height * width * color.len());
        for _ in 0..height * width {
            data.extend_from_slice(color);
        }
        Self {
            height,
            width,
            channels: color.len(),
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(ImageError::Shape {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Picks one channel, or the BT.601 luma for `Gray`.
    pub fn channel_select(&self, channel: Channel) -> Result<ImageBuffer> {
        if self.channels != 3 {
            return Err(ImageError::Channels(self.channels));
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| channel.apply([p[0], p[1], p[2]]))
            .collect();
        Ok(ImageBuffer {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        })
    }

    /// Quantizes to 8 bits and back, as a netpbm roundtrip would.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Writes binary P6 (3 channels) or P5 (1 channel), maxval 255.
    pub fn write_netpbm<W: Write>(&self, mut out: W) -> Result<()> {
        let magic = match self.channels {
            3 => "P6",
            1 => "P5",
            c => return Err(ImageError::Format(format!("cannot write {c}-channel image"))),
        };
        write!(out, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.to_u8())?;
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_netpbm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads binary P5/P6 with maxval <= 255; header comments are skipped.
    pub fn read_netpbm<R: BufRead>(mut input: R) -> Result<ImageBuffer> {
        let magic = next_token(&mut input)?;
        let channels = match magic.as_str() {
            "P6" => 3,
            "P5" => 1,
            other => return Err(ImageError::Format(format!("unsupported magic '{other}'"))),
        };
        let mut num = |what: &str| -> Result<usize> {
            let tok = next_token(&mut input)?;
            tok.parse()
                .map_err(|_| ImageError::Format(format!("bad {what} '{tok}'")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::Format(format!("unsupported maxval {maxval}")));
        }
        let mut raw = vec![0u8; width * height * channels];
        input.read_exact(&mut raw)?;
        Ok(ImageBuffer {
            height,
            width,
            channels,
            data: raw.iter().map(|&b| b as f64 / maxval as f64).collect(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<ImageBuffer> {
        let file = std::fs::File::open(path)?;
        Self::read_netpbm(io::BufReader::new(file))
    }
}

/// Reads one whitespace-delimited header token, consuming exactly one
/// trailing whitespace byte.
fn next_token<R: BufRead>(input: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if input.read(&mut byte)? == 0 {
            return Err(ImageError::Format("truncated header".into()));
        }
        match byte[0] {
            b'#' if tok.is_empty() => {
                let mut skip = Vec::new();
                input.read_until(b'\n', &mut skip)?;
            }
            b if b.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    break;
                }
            }
            b => tok.push(b),
        }
    }
    String::from_utf8(tok).map_err(|_| ImageError::Format("non-ASCII header".into()))
}
