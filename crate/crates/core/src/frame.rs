//! Image frames: rectangular grids of signed reals in `[-1, 1]`.
//!
//! Zero is the gray level, so color inversion is plain negation. Frames are
//! exported as 8-bit binary PGM with `v -> round((v + 1) * 127.5)`, and every
//! hash in the system is FNV-1a over those PGM bytes.

use std::io::{self, Read, Write};

use crate::error::{CoreError, Result};

/// One image of an image stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Default for ImageFrame {
    /// A 1x1 zero frame; only used as a placeholder while buffers are moved.
    fn default() -> Self {
        ImageFrame::zeros(1, 1)
    }
}

impl ImageFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "frame dimensions must be positive");
        let value = value.clamp(-1.0, 1.0);
        ImageFrame {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    /// Builds a frame from row-major values, rejecting anything outside
    /// `[-1, 1]` (including NaN).
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CoreError::InvalidFrame("dimensions must be positive".into()));
        }
        if values.len() != width * height {
            return Err(CoreError::InvalidFrame(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(CoreError::InvalidFrame(format!("value {bad} outside [-1, 1]")));
        }
        Ok(ImageFrame {
            width,
            height,
            values,
        })
    }

    /// Builds a frame by evaluating `f(x, y)`; results are clamped into range.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width >= 1 && height >= 1, "frame dimensions must be positive");
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                values.push(if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) });
            }
        }
        ImageFrame {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Sets a pixel, clamping into range. Out-of-bounds writes are ignored.
    pub fn put(&mut self, x: i64, y: i64, v: f64) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        self.values[y as usize * self.width + x as usize] = v.clamp(-1.0, 1.0);
    }

    pub fn same_dims(&self, other: &ImageFrame) -> bool {
        self.dims() == other.dims()
    }

    pub fn is_in_range(&self) -> bool {
        self.values.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    /// 8-bit quantization used for display, export and hashing.
    pub fn quantize(v: f64) -> u8 {
        ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
    }

    pub fn dequantize(b: u8) -> f64 {
        (b as f64 / 127.5 - 1.0).clamp(-1.0, 1.0)
    }

    pub fn quantized(&self) -> Vec<u8> {
        self.values.iter().map(|&v| Self::quantize(v)).collect()
    }

    /// Binary PGM (`P5`, maxval 255) serialization.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.quantized());
        out
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.to_pgm())
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(CoreError::InvalidFrame("truncated PGM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(CoreError::InvalidFrame(format!("unsupported magic {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| CoreError::InvalidFrame(format!("bad PGM header field {s:?}")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(CoreError::InvalidFrame(format!("unsupported maxval {maxval}")));
        }
        let raster = bytes.get(pos..pos + width * height).ok_or_else(|| {
            CoreError::InvalidFrame("truncated PGM raster".into())
        })?;
        let values = raster.iter().map(|&b| Self::dequantize(b)).collect();
        ImageFrame::from_values(width, height, values)
    }

    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| CoreError::InvalidFrame(e.to_string()))?;
        Self::from_pgm(&buf)
    }

    /// FNV-1a 64 over the PGM serialization.
    pub fn hash(&self) -> u64 {
        fnv1a64(&self.to_pgm())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Formats a hash the way manifests store it.
pub fn hash_hex(h: u64) -> String {
    format!("{h:016x}")
}
