//! Binary 8-bit PGM (P5) I/O.
//!
//! A byte `b` loads as `2·b/255 − 1`; a value `v` saves as
//! `round(255·(v+1)/2)` clamped to `[0,255]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub fn byte_to_value(b: u8) -> f64 {
    2.0 * (b as f64 / 255.0) - 1.0
}

pub fn value_to_byte(v: f64) -> u8 {
    (255.0 * (v + 1.0) / 2.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode(grid: &Grid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(grid.values().iter().map(|&v| value_to_byte(v)));
    out
}

pub fn decode(bytes: &[u8]) -> Result<Grid> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Pgm("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Pgm(format!("unsupported magic {:?}", fields[0])));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Pgm(format!("bad {what} {s:?}")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Pgm(format!("only 8-bit maxval 255 supported, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Pgm("missing raster separator".into()));
    }
    pos += 1;
    let n = width * height;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Pgm(format!("expected {n} raster bytes, got {}", bytes.len() - pos)))?;
    Grid::new(height, width, raster.iter().map(|&b| byte_to_value(b)).collect())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Grid> {
    decode(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &Grid) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(grid))?;
    Ok(())
}
