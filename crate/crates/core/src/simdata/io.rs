//! Cube container.
//!
//! ```text
//! magic        8 bytes  "HSICUBE\0"
//! version      u32      1
//! height       u32
//! width        u32
//! bands        u32
//! wavelengths  u8 flag, then bands × f64 when the flag is 1
//! samples      height·width·bands × f64, band-interleaved by pixel
//! ```
//!
//! Little-endian throughout. Trailing bytes are rejected.

use std::path::Path;

use super::HsiCube;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const CUBE_MAGIC: &[u8; 8] = b"HSICUBE\0";
pub const CUBE_VERSION: u32 = 1;

pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    let (h, w, b) = cube.shape();
    let mut out = Writer::new();
    out.bytes(CUBE_MAGIC);
    out.u32(CUBE_VERSION);
    for d in [h, w, b] {
        out.u32(d as u32);
    }
    match cube.wavelengths() {
        Some(wl) => {
            out.u8(1);
            out.f64s(wl);
        }
        None => out.u8(0),
    }
    out.f64s(cube.data());
    out.buf
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    let mut r = Reader::new("cube", bytes);
    if r.take(CUBE_MAGIC.len()).map_err(|_| Error::BadMagic { kind: "cube" })? != CUBE_MAGIC {
        return Err(Error::BadMagic { kind: "cube" });
    }
    let version = r.u32()?;
    if version != CUBE_VERSION {
        return Err(Error::UnsupportedVersion { kind: "cube", found: version });
    }
    let (h, w, b) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if h == 0 || w == 0 || b == 0 {
        return Err(r.corrupt(format!("zero extent {h}x{w}x{b}")));
    }
    let wavelengths = match r.u8()? {
        0 => None,
        1 => Some(r.f64s(b)?),
        f => return Err(r.corrupt(format!("wavelength flag {f} is neither 0 nor 1"))),
    };
    let n = h.checked_mul(w).and_then(|v| v.checked_mul(b)).ok_or_else(|| r.corrupt(format!("extents {h}x{w}x{b} overflow")))?;
    let data = r.f64s(n)?;
    r.finish()?;
    let cube = HsiCube::new(h, w, b, data)?;
    match wavelengths {
        Some(wl) => cube.with_wavelengths(wl),
        None => Ok(cube),
    }
}

pub fn save_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    std::fs::write(path, encode_cube(cube)).map_err(|e| Error::io(path, e))
}

pub fn load_cube(path: &Path) -> Result<HsiCube> {
    decode_cube(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Band `band` as an 8-bit binary PGM, values clamped to [0, 1].
pub fn encode_pgm(cube: &HsiCube, band: usize) -> Result<Vec<u8>> {
    if band >= cube.bands() {
        return Err(Error::InvalidArgument(format!("band {band} of a {}-band cube", cube.bands())));
    }
    let mut out = format!("P5\n{} {}\n255\n", cube.width(), cube.height()).into_bytes();
    out.extend(cube.band(band).iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}
