//! Binary PGM (`P5`) and PPM (`P6`) images with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::BadSize(format!("{channels} channels, expected 1 or 3")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::LengthMismatch {
                expected: width * height * channels,
                actual: pixels.len(),
            });
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Samples scaled to [0, 1].
    pub fn normalized(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == self.bytes.len() {
            return Err(Error::Truncated(format!("header ends inside {what}")));
        }
        if start == self.pos {
            return Err(Error::BadHeader(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::BadHeader(format!("{what} out of range")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) => return Err(Error::BadMagic(format!("{:?}", String::from_utf8_lossy(m)))),
        None => return Err(Error::Truncated("no magic number".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::BadMagic("magic not followed by whitespace".into()));
    }
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::BadMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::BadHeader("maxval not followed by whitespace".into()));
    }
    let start = cur.pos + 1;
    let need = width * height * channels;
    let raster = bytes.get(start..start + need).ok_or_else(|| {
        Error::Truncated(format!("raster holds {} of {need} bytes", bytes.len().saturating_sub(start)))
    })?;
    Image::new(width, height, channels, raster.to_vec())
}

pub fn encode(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    decode(&bytes).map_err(|e| e.at(path))
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(img)).map_err(|source| Error::IoWrite {
        path: path.into(),
        source,
    })
}
