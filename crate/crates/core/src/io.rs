//! Binary PGM (P5) and PFM readers/writers.
//!
//! * grayscale images: 8-bit P5
//! * depth maps: single-channel PFM in meters, or 16-bit P5 in millimeters;
//!   invalid pixels are written as 0
//! * disparity maps: single-channel PFM in pixels, invalid written as -1
//!
//! PFM rows are stored bottom-to-top and we always write little-endian
//! (negative scale). Both byte orders are accepted on read.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{DepthMap, DisparityMap, ImageGray};

struct Header<'a> {
    tokens: Vec<&'a str>,
    data_offset: usize,
}

/// Splits a netpbm-style header into `count` whitespace-separated tokens,
/// skipping `#` comments. The data starts after exactly one whitespace byte.
fn parse_header(bytes: &[u8], count: usize) -> Option<Header<'_>> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(std::str::from_utf8(&bytes[start..i]).ok()?);
    }
    if i >= bytes.len() {
        return None;
    }
    Some(Header {
        tokens,
        data_offset: i + 1,
    })
}

fn parse_dims(origin: &str, w: &str, h: &str) -> Result<(usize, usize)> {
    let w: usize = w
        .parse()
        .map_err(|_| Error::format(origin, format!("bad width {w:?}")))?;
    let h: usize = h
        .parse()
        .map_err(|_| Error::format(origin, format!("bad height {h:?}")))?;
    if w == 0 || h == 0 {
        return Err(Error::format(origin, "zero image dimension"));
    }
    Ok((w, h))
}

enum Pgm {
    Gray8(usize, usize, Vec<u8>),
    Gray16(usize, usize, Vec<u16>),
}

fn decode_pgm_any(bytes: &[u8], origin: &str) -> Result<Pgm> {
    let header = parse_header(bytes, 4).ok_or_else(|| Error::format(origin, "truncated PGM header"))?;
    if header.tokens[0] != "P5" {
        return Err(Error::format(origin, format!("expected P5, found {:?}", header.tokens[0])));
    }
    let (w, h) = parse_dims(origin, header.tokens[1], header.tokens[2])?;
    let maxval: u32 = header.tokens[3]
        .parse()
        .map_err(|_| Error::format(origin, "bad maxval"))?;
    let data = &bytes[header.data_offset..];
    match maxval {
        1..=255 => {
            if data.len() < w * h {
                return Err(Error::format(origin, "truncated 8-bit PGM data"));
            }
            Ok(Pgm::Gray8(w, h, data[..w * h].to_vec()))
        }
        256..=65535 => {
            if data.len() < 2 * w * h {
                return Err(Error::format(origin, "truncated 16-bit PGM data"));
            }
            let px = data[..2 * w * h]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect();
            Ok(Pgm::Gray16(w, h, px))
        }
        _ => Err(Error::format(origin, format!("unsupported maxval {maxval}"))),
    }
}

pub fn encode_pgm(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn decode_pgm(bytes: &[u8], origin: &str) -> Result<ImageGray> {
    match decode_pgm_any(bytes, origin)? {
        Pgm::Gray8(w, h, px) => ImageGray::new(w, h, px),
        Pgm::Gray16(..) => Err(Error::format(origin, "expected an 8-bit PGM image")),
    }
}

/// Depth in millimeters, big-endian 16-bit samples, 0 = invalid.
/// Depths beyond 65.535 m are written as invalid.
pub fn encode_depth_pgm16(depth: &DepthMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", depth.width(), depth.height()).into_bytes();
    out.reserve(depth.values().len() * 2);
    for &z in depth.values() {
        let mm = (z * 1000.0).round();
        let mm = if z > 0.0 && (1.0..=65535.0).contains(&mm) { mm as u16 } else { 0 };
        out.extend_from_slice(&mm.to_be_bytes());
    }
    out
}

pub fn decode_depth_pgm16(bytes: &[u8], origin: &str) -> Result<DepthMap> {
    match decode_pgm_any(bytes, origin)? {
        Pgm::Gray16(w, h, px) => {
            DepthMap::from_values(w, h, px.into_iter().map(|mm| mm as f64 / 1000.0).collect())
        }
        Pgm::Gray8(..) => Err(Error::format(origin, "expected a 16-bit PGM depth map")),
    }
}

fn encode_pfm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for v in (0..height).rev() {
        for &x in &values[v * width..(v + 1) * width] {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

fn decode_pfm(bytes: &[u8], origin: &str) -> Result<(usize, usize, Vec<f64>)> {
    let header = parse_header(bytes, 4).ok_or_else(|| Error::format(origin, "truncated PFM header"))?;
    match header.tokens[0] {
        "Pf" => {}
        "PF" => return Err(Error::format(origin, "three-channel PFM not supported")),
        other => return Err(Error::format(origin, format!("expected Pf, found {other:?}"))),
    }
    let (w, h) = parse_dims(origin, header.tokens[1], header.tokens[2])?;
    let scale: f32 = header.tokens[3]
        .parse()
        .map_err(|_| Error::format(origin, "bad PFM scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(origin, "PFM scale must be nonzero"));
    }
    let little = scale < 0.0;
    let data = &bytes[header.data_offset..];
    if data.len() < 4 * w * h {
        return Err(Error::format(origin, "truncated PFM data"));
    }
    let mut values = vec![0.0f64; w * h];
    for (i, c) in data[..4 * w * h].chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (h - 1 - i / w, i % w);
        values[row * w + col] = x as f64;
    }
    Ok((w, h, values))
}

pub fn encode_depth_pfm(depth: &DepthMap) -> Vec<u8> {
    encode_pfm(depth.width(), depth.height(), depth.values())
}

pub fn decode_depth_pfm(bytes: &[u8], origin: &str) -> Result<DepthMap> {
    let (w, h, values) = decode_pfm(bytes, origin)?;
    DepthMap::from_values(w, h, values)
}

pub fn encode_disparity_pfm(disp: &DisparityMap) -> Vec<u8> {
    encode_pfm(disp.width(), disp.height(), disp.values())
}

pub fn decode_disparity_pfm(bytes: &[u8], origin: &str) -> Result<DisparityMap> {
    let (w, h, values) = decode_pfm(bytes, origin)?;
    DisparityMap::from_values(w, h, values)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<ImageGray> {
    decode_pgm(&read(path)?, &path.display().to_string())
}

pub fn write_pgm(path: &Path, img: &ImageGray) -> Result<()> {
    write_bytes(path, &encode_pgm(img))
}

/// Reads a depth map, choosing the decoder from the file extension
/// (`.pfm` or `.pgm`).
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let origin = path.display().to_string();
    let bytes = read(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => decode_depth_pfm(&bytes, &origin),
        Some("pgm") => decode_depth_pgm16(&bytes, &origin),
        _ => Err(Error::format(origin, "depth maps must be .pfm or .pgm")),
    }
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => write_bytes(path, &encode_depth_pfm(depth)),
        Some("pgm") => write_bytes(path, &encode_depth_pgm16(depth)),
        _ => Err(Error::format(
            path.display().to_string(),
            "depth maps must be .pfm or .pgm",
        )),
    }
}

pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    decode_disparity_pfm(&read(path)?, &path.display().to_string())
}

pub fn write_disparity(path: &Path, disp: &DisparityMap) -> Result<()> {
    write_bytes(path, &encode_disparity_pfm(disp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_header_with_comment() {
        let bytes = b"P5\n# made by hand\n3 2\n255\n\x01\x02\x03\x04\x05\x06";
        let img = decode_pgm(bytes, "t").unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.get(2, 1), 6);
    }

    #[test]
    fn pgm_rejects_ascii_and_truncation() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0", "t").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00\x00", "t").is_err());
        assert!(decode_pgm(b"P5\n4", "t").is_err());
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let depth = DepthMap::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_depth_pfm(&depth);
        let header_len = b"Pf\n2 2\n-1.0\n".len();
        let first = f32::from_le_bytes(bytes[header_len..header_len + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
    }

    #[test]
    fn pfm_big_endian_accepted() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&5.5f32.to_be_bytes());
        bytes.extend_from_slice(&7.25f32.to_be_bytes());
        let d = decode_depth_pfm(&bytes, "t").unwrap();
        assert_eq!(d.get(0, 0), Some(7.25));
        assert_eq!(d.get(0, 1), Some(5.5));
    }

    #[test]
    fn invalid_markers_in_files() {
        let mut disp = DisparityMap::invalid(2, 1);
        disp.set(1, 0, Some(3.5));
        let bytes = encode_disparity_pfm(&disp);
        let raw = &bytes[bytes.len() - 8..];
        assert_eq!(f32::from_le_bytes(raw[..4].try_into().unwrap()), -1.0);
        assert_eq!(decode_disparity_pfm(&bytes, "t").unwrap(), disp);

        let mut depth = DepthMap::invalid(2, 1);
        depth.set(0, 0, Some(4.321));
        let back = decode_depth_pgm16(&encode_depth_pgm16(&depth), "t").unwrap();
        assert_eq!(back.get(0, 0), Some(4.321));
        assert_eq!(back.get(1, 0), None);
    }

    proptest! {
        #[test]
        fn depth_pfm_round_trip(
            (w, h, values) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                let cell = prop_oneof![Just(0.0f32), 0.01f32..100.0];
                (Just(w), Just(h), prop::collection::vec(cell, w * h))
            })
        ) {
            let depth = DepthMap::from_values(w, h, values.into_iter().map(f64::from).collect()).unwrap();
            prop_assert_eq!(decode_depth_pfm(&encode_depth_pfm(&depth), "t").unwrap(), depth);
        }

        #[test]
        fn gray_pgm_round_trip(w in 1usize..20, h in 1usize..20, fill in any::<u8>()) {
            let img = ImageGray::from_fn(w, h, |u, v| fill.wrapping_add((u * 31 + v * 7) as u8));
            prop_assert_eq!(decode_pgm(&encode_pgm(&img), "t").unwrap(), img);
        }
    }
}
