//! Binary checkpoint container.
//!
//! ```text
//! magic     8 bytes  "HSIFCKPT"
//! version   u32      1
//! header    u32 length + utf-8 text (architecture descriptor)
//! count     u32      number of parameters
//! per parameter, in order:
//!   name    u32 length + utf-8
//!   rank    u32, then rank × u64 extents
//!   step    u64      Adam step counter
//!   value   numel × f64
//!   m       numel × f64   first moment
//!   v       numel × f64   second moment
//! ```
//!
//! All integers and floats are little-endian. The encoding has no padding,
//! timestamps, or map iteration, so identical state gives identical bytes.

use std::path::Path;

use super::Parameter;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HSIFCKPT";
pub const VERSION: u32 = 1;

pub fn encode(header: &str, params: &[Parameter]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.str(header);
    w.u32(params.len() as u32);
    for p in params {
        w.str(&p.name);
        w.u32(p.shape().len() as u32);
        for &d in p.shape() {
            w.u64(d as u64);
        }
        w.u64(p.step);
        w.f64s(p.data());
        w.f64s(&p.m);
        w.f64s(&p.v);
    }
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<(String, Vec<Parameter>)> {
    let mut r = Reader::new("checkpoint", bytes);
    if r.take(MAGIC.len()).map_err(|_| Error::BadMagic { kind: "checkpoint" })? != MAGIC {
        return Err(Error::BadMagic { kind: "checkpoint" });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion { kind: "checkpoint", found: version });
    }
    let header = r.str()?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.str()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.corrupt(format!("extent overflow in {name}")))?;
        let step = r.u64()?;
        let data = r.f64s(n)?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        params.push(Parameter::with_state(name, &shape, data, m, v, step)?);
    }
    r.finish()?;
    Ok((header, params))
}

pub fn save(path: &Path, header: &str, params: &[Parameter]) -> Result<()> {
    std::fs::write(path, encode(header, params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(String, Vec<Parameter>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Parameter> {
        vec![
            Parameter::new("a.weight", &[2, 3], vec![0.5, -1.0, 2.0, 1e-300, f64::MAX, -0.0]).unwrap(),
            Parameter::new("a.bias", &[2], vec![0.25, 0.75]).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = sample();
        let bytes = encode("d1=4\n", &params);
        let (header, back) = decode(&bytes).unwrap();
        assert_eq!(header, "d1=4\n");
        assert_eq!(back.len(), 2);
        for (a, b) in params.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape(), b.shape());
            let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.data()), bits(b.data()));
        }
        assert_eq!(encode("d1=4\n", &back), bytes);
    }

    #[test]
    fn distinct_failures() {
        let bytes = encode("", &sample());
        assert!(matches!(decode(b"NOPE"), Err(Error::BadMagic { .. })));
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(matches!(decode(&wrong_version), Err(Error::UnsupportedVersion { found: 9, .. })));
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(Error::Corrupt { .. })));
    }
}
