//! Binary field snapshots.
//!
//! Layout: 64-byte header, then interleaved little-endian `f64` re/im pairs
//! in storage order. Header: 6-byte magic `WGNLS1`, two zero bytes, then
//! `d`, `m`, `alpha`, `L`, `n_x`, `n_y` as little-endian `f64` (`n_y = 0`
//! when there is no torus axis), then 8 reserved zero bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::params::{DomainSpec, ModelParams};

pub const MAGIC: &[u8; 6] = b"WGNLS1";
pub const HEADER_LEN: usize = 64;

pub fn encode(u: &Field) -> Vec<u8> {
    let p = u.params();
    let dom = u.domain();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * u.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[0, 0]);
    for v in [
        p.d as f64,
        p.m as f64,
        p.alpha,
        dom.half_length,
        dom.n_x as f64,
        dom.n_y.unwrap_or(0) as f64,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[0u8; 8]);
    for z in u.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Field, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[..6] != MAGIC {
        return Err("bad magic".into());
    }
    let word = |k: usize| {
        let off = 8 + 8 * k;
        f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"))
    };
    let as_count = |v: f64, name: &str| {
        if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
            Ok(v as usize)
        } else {
            Err(format!("header field {name} = {v} is not a count"))
        }
    };
    let d = as_count(word(0), "d")?;
    let m = as_count(word(1), "m")?;
    let alpha = word(2);
    let half_length = word(3);
    let n_x = as_count(word(4), "n_x")?;
    let n_y = as_count(word(5), "n_y")?;
    let params = ModelParams::new(d, m, alpha).map_err(|e| e.to_string())?;
    let domain = DomainSpec::new(half_length, n_x, (n_y > 0).then_some(n_y))
        .map_err(|e| e.to_string())?;
    let grid = Grid::new(params, domain).map_err(|e| e.to_string())?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 16 * grid.len() {
        return Err(format!(
            "payload has {} bytes, expected {}",
            body.len(),
            16 * grid.len()
        ));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Field::new(grid, values).map_err(|e| e.to_string())
}

pub fn save(u: &Field, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(u))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Field> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|msg| Error::Snapshot {
        path: path.to_path_buf(),
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_64_bytes() {
        let p = ModelParams::quintic_waveguide();
        let g = Grid::new(p, DomainSpec::new(4.0, 8, Some(4)).unwrap()).unwrap();
        let u = Field::from_real_fn(g, |p| p.x[0] + p.y).unwrap();
        let bytes = encode(&u);
        assert_eq!(bytes.len(), HEADER_LEN + 16 * 32);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.values(), u.values());
        assert!(decode(&bytes[..40]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
