//! 8-bit grayscale rasters and the Netpbm PGM codec.

use crate::error::{Error, Result};

/// Smallest width/height for which a 3x3 window exists.
pub const MIN_DIM: usize = 3;

/// Row-major 8-bit grayscale image, at least 3x3.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::ImageTooSmall { width, height });
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::MalformedHeader(format!("dimensions {width}x{height} overflow")))?;
        if pixels.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// An image where every pixel has the same value.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Copies the `w`x`h` region whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::SizeMismatch {
                expected: self.width * self.height,
                actual: (x0 + w) * (y0 + h),
            });
        }
        GrayImage::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// Converts packed RGB triplets with BT.601 luma weights, rounding half up.
pub fn rgb_to_gray(rgb: &[u8], width: usize, height: usize) -> Result<GrayImage> {
    let expected = width.saturating_mul(height).saturating_mul(3);
    if rgb.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: rgb.len(),
        });
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|p| {
            // weights in thousandths: 0.299, 0.587, 0.114
            let acc = 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]);
            ((acc + 500) / 1000).min(255) as u8
        })
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Encodes as binary PGM (P5) with maxval 255.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&image.pixels);
    out
}

/// Decodes a P2 (ASCII) or P5 (binary) PGM with maxval at most 255.
///
/// Samples are returned as stored; a maxval below 255 is not rescaled.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.is_empty() {
        return Err(Error::MalformedHeader("empty input".into()));
    }
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur
        .token()
        .ok_or_else(|| Error::MalformedHeader("missing magic".into()))?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} out of range")));
    }
    if maxval > 255 {
        return Err(Error::MaxvalTooLarge(maxval as u32));
    }
    if width < MIN_DIM || height < MIN_DIM {
        return Err(Error::ImageTooSmall { width, height });
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;

    let pixels = if binary {
        // exactly one whitespace byte separates maxval from the payload
        match cur.peek() {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::MalformedHeader("missing whitespace before payload".into())),
        }
        let payload = &bytes[cur.pos..];
        if payload.len() < count {
            return Err(Error::TruncatedPayload {
                expected: count,
                found: payload.len(),
            });
        }
        payload[..count].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(count);
        while pixels.len() < count {
            let Some(tok) = cur.token() else {
                return Err(Error::TruncatedPayload {
                    expected: count,
                    found: pixels.len(),
                });
            };
            let v = parse_decimal(tok)
                .ok_or_else(|| Error::MalformedHeader(format!("bad sample {:?}", String::from_utf8_lossy(tok))))?;
            if v > maxval {
                return Err(Error::PixelOutOfRange(v.min(u32::MAX as usize) as u32));
            }
            pixels.push(v as u8);
        }
        pixels
    };
    for &p in &pixels {
        if usize::from(p) > maxval {
            return Err(Error::PixelOutOfRange(u32::from(p)));
        }
    }
    GrayImage::new(width, height, pixels)
}

fn parse_decimal(tok: &[u8]) -> Option<usize> {
    if tok.is_empty() || tok.len() > 9 || !tok.iter().all(u8::is_ascii_digit) {
        return None;
    }
    Some(tok.iter().fold(0usize, |acc, &d| acc * 10 + usize::from(d - b'0')))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        parse_decimal(tok).ok_or_else(|| {
            Error::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok)))
        })
    }
}
