//! `MAGF` binary field snapshots.
//!
//! Layout: magic `MAGF`, format version (u32 LE), cell counts n1 n2 n3
//! (u32 LE each), the mask packed eight cells per byte (LSB first, x fastest,
//! then y, then z), then three little-endian f64 per interior cell in mask
//! order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, VectorField};
use crate::vec3::Vec3;

pub const MAGIC: &[u8; 4] = b"MAGF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: [usize; 3],
    pub mask: Vec<bool>,
    pub values: Vec<Vec3>,
}

impl Snapshot {
    pub fn from_field(g: &Grid, m: &VectorField) -> Result<Self> {
        g.check(m)?;
        Ok(Snapshot {
            n: g.n(),
            mask: g.mask().to_vec(),
            values: m.values().to_vec(),
        })
    }

    /// Field on `g`; the stored mask must match the grid's exactly. The unit
    /// flag is restored when the data passes the unit check.
    pub fn into_field(self, g: &Grid) -> Result<VectorField> {
        if self.n != g.n() {
            return Err(Error::Snapshot(format!(
                "snapshot resolution {:?} does not match grid {:?}",
                self.n,
                g.n()
            )));
        }
        if self.mask != g.mask() {
            return Err(Error::Snapshot("snapshot mask does not match grid".into()));
        }
        let mut f = VectorField::from_values(g, self.values)?;
        let _ = f.assert_unit();
        Ok(f)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.mask.len() / 8 + 1 + 24 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for &n in &self.n {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for chunk in self.mask.chunks(8) {
            let mut byte = 0u8;
            for (bit, &b) in chunk.iter().enumerate() {
                byte |= (b as u8) << bit;
            }
            out.push(byte);
        }
        for v in &self.values {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Snapshot(msg.to_string());
        if bytes.len() < 20 {
            return Err(bad("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic, not a MAGF snapshot"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let n = [word(8) as usize, word(12) as usize, word(16) as usize];
        let total = n
            .iter()
            .try_fold(1usize, |a, &b| a.checked_mul(b))
            .filter(|&t| t > 0)
            .ok_or_else(|| bad("invalid cell counts"))?;
        let mask_bytes = total.div_ceil(8);
        let body = &bytes[20..];
        if body.len() < mask_bytes {
            return Err(bad("truncated mask"));
        }
        let mask: Vec<bool> = (0..total)
            .map(|i| body[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        let interior = mask.iter().filter(|&&b| b).count();
        let data = &body[mask_bytes..];
        if data.len() != 24 * interior {
            return Err(Error::Snapshot(format!(
                "expected {} data bytes for {} cells, found {}",
                24 * interior,
                interior,
                data.len()
            )));
        }
        let values = data
            .chunks_exact(24)
            .map(|c| std::array::from_fn(|k| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap())))
            .collect();
        Ok(Snapshot { n, mask, values })
    }
}

pub fn write_snapshot(path: &Path, g: &Grid, m: &VectorField) -> Result<()> {
    let bytes = Snapshot::from_field(g, m)?.to_bytes();
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Snapshot::from_bytes(&bytes)
}

/// Reads a snapshot and binds it to `g`.
pub fn load_field(path: &Path, g: &Grid) -> Result<VectorField> {
    read_snapshot(path)?.into_field(g)
}
