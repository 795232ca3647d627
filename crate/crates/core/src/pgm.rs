//! Binary greyscale PGM (P5) images with 8-bit samples.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM (P5) file")]
    Magic,
    #[error("malformed header: {0}")]
    Header(&'static str),
    #[error("maxval {0} unsupported, only 8-bit images are read")]
    MaxVal(u32),
    #[error("pixel data holds {have} bytes, header declares {need}")]
    Truncated { need: usize, have: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&c) = self.bytes.get(self.at) {
            if c == b'#' {
                while self.bytes.get(self.at).is_some_and(|&c| c != b'\n') {
                    self.at += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.at += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u32, PgmError> {
        self.skip_space();
        let start = self.at;
        while self.bytes.get(self.at).is_some_and(u8::is_ascii_digit) {
            self.at += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.at])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::Header(what))
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PgmError> {
        if pixels.len() != width * height {
            return Err(PgmError::Truncated {
                need: width * height,
                have: pixels.len(),
            });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, PgmError> {
        if !bytes.starts_with(b"P5") {
            return Err(PgmError::Magic);
        }
        let mut cur = Cursor { bytes, at: 2 };
        let width = cur.number("width")? as usize;
        let height = cur.number("height")? as usize;
        let maxval = cur.number("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(PgmError::MaxVal(maxval));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if !bytes.get(cur.at).is_some_and(u8::is_ascii_whitespace) {
            return Err(PgmError::Header("no separator before raster"));
        }
        let data = &bytes[cur.at + 1..];
        let need = width * height;
        if data.len() < need {
            return Err(PgmError::Truncated {
                need,
                have: data.len(),
            });
        }
        GrayImage::new(width, height, data[..need].to_vec())
    }

    pub fn read(path: &Path) -> Result<Self, PgmError> {
        GrayImage::parse(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), PgmError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_comments() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        assert_eq!(GrayImage::parse(&img.to_bytes()).unwrap(), img);
        let mut with_comment = b"P5 # made by hand\n3 # width\n2\n255\n".to_vec();
        with_comment.extend_from_slice(&img.pixels);
        assert_eq!(GrayImage::parse(&with_comment).unwrap(), img);
    }

    #[test]
    fn rejects() {
        assert!(matches!(GrayImage::parse(b"P2\n1 1\n255\n0"), Err(PgmError::Magic)));
        assert!(matches!(GrayImage::parse(b"P5\n2 2\n255\n\x00"), Err(PgmError::Truncated { .. })));
        assert!(matches!(GrayImage::parse(b"P5\n1 1\n65535\n\x00\x00"), Err(PgmError::MaxVal(65535))));
    }
}
