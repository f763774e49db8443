use crate::error::{Result, RpcaError};

/// An 8-bit grayscale image, pixels row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return crate::error::invalid(format!("image dimensions must be positive, got {width}x{height}"));
        }
        if width.checked_mul(height) != Some(pixels.len()) {
            return crate::error::invalid(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width.saturating_mul(height),
                pixels.len()
            ));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl HeaderReader<'_> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> RpcaError {
        RpcaError::format(self.context, Some(offset as u64), msg)
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_blank(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_blank();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| self.err(start, format!("{what} is too large")))
    }
}

/// Decodes a binary (P5) PGM with maxval at most 255. Pixel values are
/// returned as stored, without rescaling to 255.
pub fn decode_pgm(bytes: &[u8], context: &str) -> Result<GrayImage> {
    let mut rd = HeaderReader { bytes, pos: 0, context };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(rd.err(0, "bad magic, expected binary PGM \"P5\""));
    }
    rd.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(rd.err(2, "expected whitespace after magic"));
    }
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval_at = {
        rd.skip_blank();
        rd.pos
    };
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(rd.err(2, format!("image dimensions must be positive, got {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(rd.err(maxval_at, format!("maxval {maxval} unsupported, expected 1..=255")));
    }
    match bytes.get(rd.pos) {
        Some(b) if b.is_ascii_whitespace() => rd.pos += 1,
        _ => return Err(rd.err(rd.pos, "expected a single whitespace byte before pixel data")),
    }
    let start = rd.pos;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| rd.err(2, format!("dimensions {width}x{height} overflow")))?;
    let found = bytes.len() - start;
    if found != expected {
        let kind = if found < expected { "truncated" } else { "oversized" };
        return Err(rd.err(
            start,
            format!("{kind} pixel data: expected {expected} bytes for {width}x{height}, found {found}"),
        ));
    }
    let pixels = bytes[start..].to_vec();
    if let Some(k) = pixels.iter().position(|&p| p as usize > maxval) {
        return Err(rd.err(start + k, format!("pixel value {} exceeds maxval {maxval}", pixels[k])));
    }
    Ok(GrayImage { width, height, pixels })
}

/// Encodes as binary PGM with maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}
