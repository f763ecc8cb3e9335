//! Mask export. Soft masks go to 16-bit binary PGM (`P5`, maxval 65535,
//! big-endian samples); binary masks to packed PBM (`P4`, bit 1 for a
//! traversable pixel, rows padded to whole bytes).

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub fn write_pgm16<W: Write>(out: &mut W, width: usize, height: usize, soft: &[f64]) -> Result<()> {
    if soft.len() != width * height {
        return Err(Error::Format(format!("{} values for a {width}x{height} image", soft.len())));
    }
    write!(out, "P5\n{width} {height}\n65535\n")?;
    for v in soft {
        let level = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.write_all(&level.to_be_bytes())?;
    }
    Ok(())
}

pub fn write_pbm<W: Write>(out: &mut W, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    if mask.len() != width * height {
        return Err(Error::Format(format!("{} values for a {width}x{height} image", mask.len())));
    }
    write!(out, "P4\n{width} {height}\n")?;
    for row in mask.chunks(width.max(1)).take(height) {
        for byte in row.chunks(8) {
            let mut b = 0u8;
            for (i, bit) in byte.iter().enumerate() {
                if *bit {
                    b |= 0x80 >> i;
                }
            }
            out.write_all(&[b])?;
        }
    }
    Ok(())
}

fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PNM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    Ok((tokens, pos + 1))
}

/// Reads a `P4` bitmap as `(width, height, mask)`.
pub fn read_pbm<R: Read>(input: &mut R) -> Result<(usize, usize, Vec<bool>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (tokens, start) = header_tokens(&bytes, 3)?;
    if tokens[0] != "P4" {
        return Err(Error::Format(format!("expected P4, found {}", tokens[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PBM dimension `{s}`")));
    let (width, height) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let stride = width.div_ceil(8);
    let raster = bytes.get(start..).unwrap_or(&[]);
    if raster.len() != stride * height {
        return Err(Error::Format(format!("PBM raster has {} bytes, expected {}", raster.len(), stride * height)));
    }
    let mut mask = Vec::with_capacity(width * height);
    for row in raster.chunks(stride.max(1)).take(height) {
        for x in 0..width {
            mask.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok((width, height, mask))
}
