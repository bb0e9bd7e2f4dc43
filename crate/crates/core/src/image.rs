//! Raster types and Netpbm graymap I/O.
//!
//! Both the ASCII (`P2`) and binary (`P5`) graymap encodings are read; the
//! corpus generator writes `P5`. Only 8-bit samples are accepted
//! (`maxval <= 255`); files with a smaller maxval are stretched to `0..=255`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// An image filled with one intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Intensities rescaled to `[0, 1]`.
    pub fn to_unit_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v) / 255.0).collect()
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_pgm(&bytes)
    }

    /// Writes the image as a binary (`P5`) graymap.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 32);
        write!(out, "P5\n{} {}\n255\n", self.width, self.height).expect("write to Vec");
        out.extend_from_slice(&self.data);
        out
    }

    /// ASCII (`P2`) encoding, mostly useful for fixtures.
    pub fn encode_pgm_ascii(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write!(out, "P2\n{} {}\n255\n", self.width, self.height).expect("write to Vec");
        for row in self.data.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).expect("write to Vec");
        }
        out
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<Self> {
        let mut cursor = HeaderCursor { bytes, pos: 0 };
        let magic = cursor.token()?;
        let binary = match magic.as_slice() {
            b"P2" => false,
            b"P5" => true,
            other => {
                return Err(Error::Pgm(format!(
                    "unsupported magic {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        };
        let width = cursor.number()?;
        let height = cursor.number()?;
        let maxval = cursor.number()?;
        if width == 0 || height == 0 {
            return Err(Error::Pgm(format!("zero dimension {width}x{height}")));
        }
        if maxval == 0 || maxval > 255 {
            return Err(Error::Pgm(format!("unsupported maxval {maxval}")));
        }
        let count = width
            .checked_mul(height)
            .ok_or_else(|| Error::Pgm("dimensions overflow".into()))?;

        let raw: Vec<usize> = if binary {
            // exactly one whitespace byte separates maxval from the raster
            let start = cursor.pos + 1;
            let end = start + count;
            if cursor.pos >= bytes.len() || end > bytes.len() {
                return Err(Error::Pgm(format!(
                    "raster truncated: need {count} bytes, have {}",
                    bytes.len().saturating_sub(start)
                )));
            }
            bytes[start..end].iter().map(|&b| usize::from(b)).collect()
        } else {
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(cursor.number()?);
            }
            values
        };

        let mut data = Vec::with_capacity(count);
        for v in raw {
            if v > maxval {
                return Err(Error::Pgm(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(if maxval == 255 {
                v as u8
            } else {
                ((v * 255 + maxval / 2) / maxval) as u8
            });
        }
        Self::new(width, height, data)
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<Vec<u8>> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Pgm("unexpected end of file".into()));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pgm(format!("expected a number, got {:?}", String::from_utf8_lossy(&tok))))
    }
}

/// Bit raster, row-major; `true` is foreground.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Parses rows of `'1'`/`'#'` (foreground) and anything else (background).
    pub fn from_rows(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut img = Self::new(width, height);
        for (y, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), width, "ragged rows");
            for (x, c) in row.bytes().enumerate() {
                img.set(x, y, c == b'1' || c == b'#');
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_or_background(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground pixel coordinates in raster order.
    pub fn foreground(&self) -> Vec<(u32, u32)> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| ((i % self.width) as u32, (i / self.width) as u32))
            .collect()
    }
}
