//! In-memory codecs for the three raster formats: `Pf`/`PF` float maps,
//! 16-bit binary graymaps (`P5`) and packed bitmaps (`P4`).

use crate::error::{Error, Result};

/// Decoded float map, rows stored top to bottom, channels interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Header { bytes, pos: 0 }
    }

    fn magic(&mut self) -> Result<[u8; 2]> {
        if self.bytes.len() < 2 {
            return Err(Error::parse(0, "file too short for a magic number"));
        }
        self.pos = 2;
        Ok([self.bytes[0], self.bytes[1]])
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a str> {
        let start_ws = self.pos;
        self.skip_space_and_comments();
        if self.pos == start_ws {
            return Err(Error::parse(self.pos, format!("expected whitespace before {what}")));
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, format!("non-ASCII {what}")))
    }

    fn dimension(&mut self, what: &str) -> Result<usize> {
        let start = self.pos;
        let t = self.token(what)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::parse(start, format!("invalid {what} {t:?}"))),
        }
    }

    /// Consumes the single whitespace byte separating header and raster.
    fn end(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            Some(_) => Err(Error::parse(self.pos, "expected whitespace after header")),
            None => Err(Error::parse(self.pos, "header ends without raster data")),
        }
    }
}

fn payload(bytes: &[u8], start: usize, need: usize) -> Result<&[u8]> {
    let have = bytes.len() - start;
    if have < need {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated raster: expected {need} bytes, found {have}"),
        ));
    }
    Ok(&bytes[start..start + need])
}

fn checked_area(w: usize, h: usize, per_pixel: usize, offset: usize) -> Result<usize> {
    w.checked_mul(h)
        .and_then(|n| n.checked_mul(per_pixel))
        .ok_or_else(|| Error::parse(offset, format!("image size {w}x{h} overflows")))
}

/// Parses a `Pf` (one channel) or `PF` (three channel) float map.
///
/// A negative scale means little-endian samples stored bottom row first; a
/// positive scale means big-endian samples stored top row first.
pub fn parse_pfm(bytes: &[u8]) -> Result<FloatImage> {
    let mut hdr = Header::new(bytes);
    let channels = match &hdr.magic()? {
        b"Pf" => 1,
        b"PF" => 3,
        _ => return Err(Error::parse(0, "expected magic \"Pf\" or \"PF\"")),
    };
    let width = hdr.dimension("width")?;
    let height = hdr.dimension("height")?;
    let scale_at = hdr.pos;
    let t = hdr.token("scale")?;
    let scale: f64 = t
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::parse(scale_at, format!("invalid scale {t:?}")))?;
    let start = hdr.end()?;
    let n = checked_area(width, height, channels, start)?;
    let raw = payload(bytes, start, checked_area(n, 1, 4, start)?)?;
    let little = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0f32; n];
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, col) = (k / row_len, k % row_len);
        let dst_row = if little { height - 1 - row } else { row };
        data[dst_row * row_len + col] = v;
    }
    Ok(FloatImage {
        width,
        height,
        channels,
        data,
    })
}

/// Encodes a float map little-endian, bottom row first, with scale `-1`.
pub fn encode_pfm(img: &FloatImage) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Parameter(format!("float maps carry 1 or 3 channels, not {c}"))),
    };
    let row_len = img.width * img.channels;
    if img.width == 0 || img.height == 0 || img.data.len() != row_len * img.height {
        return Err(Error::Dimension(format!(
            "{}x{}x{} float map with {} samples",
            img.width,
            img.height,
            img.channels,
            img.data.len()
        )));
    }
    let mut out = format!("{magic}\n{} {}\n-1\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    for row in img.data.chunks_exact(row_len).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a binary graymap with 16-bit big-endian samples.
pub fn parse_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut hdr = Header::new(bytes);
    if &hdr.magic()? != b"P5" {
        return Err(Error::parse(0, "expected magic \"P5\""));
    }
    let width = hdr.dimension("width")?;
    let height = hdr.dimension("height")?;
    let maxval_at = hdr.pos;
    let maxval = hdr.dimension("maxval")?;
    if !(256..=65535).contains(&maxval) {
        return Err(Error::parse(
            maxval_at,
            format!("maxval {maxval} does not describe 16-bit samples"),
        ));
    }
    let start = hdr.end()?;
    let n = checked_area(width, height, 1, start)?;
    let raw = payload(bytes, start, checked_area(n, 2, 1, start)?)?;
    let samples = raw
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, samples))
}

pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || samples.len() != width * height {
        return Err(Error::Dimension(format!(
            "{width}x{height} graymap with {} samples",
            samples.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    Ok(out)
}

/// Parses a packed bitmap: rows padded to whole bytes, first pixel in the
/// most significant bit, bit 1 set.
pub fn parse_pbm(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let mut hdr = Header::new(bytes);
    if &hdr.magic()? != b"P4" {
        return Err(Error::parse(0, "expected magic \"P4\""));
    }
    let width = hdr.dimension("width")?;
    let height = hdr.dimension("height")?;
    let start = hdr.end()?;
    let stride = width.div_ceil(8);
    let raw = payload(bytes, start, checked_area(stride, height, 1, start)?)?;
    let mut bits = Vec::with_capacity(width * height);
    for row in raw.chunks_exact(stride) {
        for x in 0..width {
            bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok((width, height, bits))
}

pub fn encode_pbm(width: usize, height: usize, bits: &[bool]) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || bits.len() != width * height {
        return Err(Error::Dimension(format!(
            "{width}x{height} bitmap with {} bits",
            bits.len()
        )));
    }
    let stride = width.div_ceil(8);
    let mut out = format!("P4\n{width} {height}\n").into_bytes();
    let start = out.len();
    out.resize(start + stride * height, 0);
    for (i, &b) in bits.iter().enumerate() {
        if b {
            let (x, y) = (i % width, i / width);
            out[start + y * stride + x / 8] |= 0x80 >> (x % 8);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_is_bit_exact() {
        let img = FloatImage {
            width: 2,
            height: 2,
            channels: 1,
            data: vec![1.0, 2.0, 3.0, 4.0],
        };
        let bytes = encode_pfm(&img).unwrap();
        assert!(bytes.starts_with(b"Pf\n2 2\n-1\n"));
        // bottom row first
        assert_eq!(&bytes[10..14], &3f32.to_le_bytes());
        let back = parse_pfm(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_pfm(&back).unwrap(), bytes);
    }

    #[test]
    fn pfm_positive_scale_is_big_endian_top_down() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&5f32.to_be_bytes());
        bytes.extend_from_slice(&7f32.to_be_bytes());
        let img = parse_pfm(&bytes).unwrap();
        assert_eq!(img.data, vec![5.0, 7.0]);
    }

    #[test]
    fn pfm_three_channels() {
        let img = FloatImage {
            width: 2,
            height: 1,
            channels: 3,
            data: vec![0.0, 0.0, -1.0, 0.6, 0.0, -0.8],
        };
        assert_eq!(parse_pfm(&encode_pfm(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn pfm_errors_carry_offsets() {
        let e = parse_pfm(b"Pf\n0 2\n-1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 2, .. }), "{e}");
        let e = parse_pfm(b"Pf\n1 1\n-1\n\0\0").unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 12, .. }), "{e}");
        let e = parse_pfm(b"P5\n1 1\n-1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 0, .. }), "{e}");
        assert!(parse_pfm(b"Pf\n1 1\nabc\n\0\0\0\0").is_err());
        assert!(parse_pfm(b"Pf\n1 1\n0\n\0\0\0\0").is_err());
    }

    #[test]
    fn pgm_samples_and_comments() {
        let mut bytes = b"P5\n# depth in mm\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&1500u16.to_be_bytes());
        bytes.extend_from_slice(&0u16.to_be_bytes());
        let (w, h, s) = parse_pgm16(&bytes).unwrap();
        assert_eq!((w, h, s.as_slice()), (2, 1, &[1500u16, 0][..]));
        let out = encode_pgm16(w, h, &s).unwrap();
        assert_eq!(parse_pgm16(&out).unwrap().2, s);
    }

    #[test]
    fn pgm_rejects_8_bit_and_truncation() {
        assert!(parse_pgm16(b"P5\n1 1\n255\n\0").is_err());
        assert!(matches!(
            parse_pgm16(b"P5\n2 1\n65535\n\0\0\0"),
            Err(Error::Parse { offset: 16, .. })
        ));
    }

    #[test]
    fn pbm_packing() {
        let (w, h, bits) = parse_pbm(b"P4\n8 1\n\x00").unwrap();
        assert_eq!((w, h), (8, 1));
        assert!(bits.iter().all(|b| !b));
        let (_, _, bits) = parse_pbm(b"P4\n8 1\n\x80").unwrap();
        assert_eq!(bits, [true, false, false, false, false, false, false, false]);
        let bytes = encode_pbm(9, 2, &[true; 18]).unwrap();
        assert_eq!(bytes.len(), "P4\n9 2\n".len() + 4);
        assert_eq!(&bytes[7..], &[0xff, 0x80, 0xff, 0x80]);
        assert_eq!(parse_pbm(&bytes).unwrap().2, vec![true; 18]);
    }
}
