//! Binary PGM (`P5`) with 8-bit samples.

use crate::error::parse;
use crate::Result;

/// An 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Encodes as `P5` with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Decodes a `P5` file. Samples are rescaled to 0..=255 when maxval < 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(2) != Some(b"P5".as_slice()) {
            return Err(parse("not a binary PGM (expected P5)"));
        }
        let width = cur.header_uint()?;
        let height = cur.header_uint()?;
        let maxval = cur.header_uint()?;
        if width == 0 || height == 0 {
            return Err(parse("PGM dimensions must be positive"));
        }
        if maxval == 0 || maxval > 255 {
            return Err(parse(format!("unsupported PGM maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        match cur.take(1) {
            Some([b]) if b.is_ascii_whitespace() => {}
            _ => return Err(parse("missing whitespace after PGM maxval")),
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| parse("PGM dimensions overflow"))?;
        let raster = cur
            .take(n)
            .ok_or_else(|| parse(format!("PGM raster truncated: need {n} bytes")))?;
        let data = if maxval == 255 {
            raster.to_vec()
        } else {
            raster
                .iter()
                .map(|&v| ((v.min(maxval as u8) as u32 * 255 + maxval as u32 / 2) / maxval as u32) as u8)
                .collect()
        };
        Ok(Self { width, height, data })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn skip_ws_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn header_uint(&mut self) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let digits = &self.bytes[start..self.pos];
        if digits.is_empty() || digits.len() > 9 {
            return Err(parse("bad PGM header field"));
        }
        // digits are ASCII, so this cannot fail
        Ok(std::str::from_utf8(digits).unwrap().parse().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut img = GrayImage::new(3, 2);
        img.set(2, 1, 200);
        img.set(0, 0, 128);
        let back = GrayImage::from_pgm(&img.to_pgm()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn header_with_comments_and_small_maxval() {
        let mut bytes = b"P5 # c\n2 # w\n1\n# m\n1\n".to_vec();
        bytes.extend_from_slice(&[0, 1]);
        let img = GrayImage::from_pgm(&bytes).unwrap();
        assert_eq!(img.data, vec![0, 255]);
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        assert!(GrayImage::from_pgm(b"P5\n4 4\n255\n\x00\x00").is_err());
        assert!(GrayImage::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(GrayImage::from_pgm(b"P5\n0 4\n255\n").is_err());
        assert!(GrayImage::from_pgm(b"P5\n99999999 99999999\n255\n").is_err());
        assert!(GrayImage::from_pgm(b"").is_err());
    }
}
