//! Binary channel-grid files: precomputed channels on a regular xy grid,
//! looked up by nearest grid point.
//!
//! Layout (little-endian): magic `BDCG`, `u32` version, origin x/y and
//! spacing as `f64`, `nx`, `ny`, `N_t` as `u64`, then `nx·ny·N_t` complex
//! entries as interleaved `f32` re/im, row-major y-then-x.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BDCG";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGrid {
    pub origin: [f64; 2],
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub n_antennas: usize,
    data: Vec<Complex64>,
}

impl ChannelGrid {
    pub fn new(
        origin: [f64; 2],
        spacing: f64,
        nx: usize,
        ny: usize,
        n_antennas: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if !(spacing > 0.0) || nx == 0 || ny == 0 || n_antennas == 0 {
            return Err(Error::Config("channel grid needs positive spacing and dimensions".into()));
        }
        if data.len() != nx * ny * n_antennas {
            return Err(Error::Config(format!(
                "channel grid holds {} entries, expected {}",
                data.len(),
                nx * ny * n_antennas
            )));
        }
        Ok(ChannelGrid { origin, spacing, nx, ny, n_antennas, data })
    }

    /// Channel at grid point `(ix, iy)`.
    pub fn at(&self, ix: usize, iy: usize) -> &[Complex64] {
        let start = (iy * self.nx + ix) * self.n_antennas;
        &self.data[start..start + self.n_antennas]
    }

    /// Channel at the grid point nearest to `position`, clamped to the grid.
    pub fn nearest(&self, position: [f64; 2]) -> &[Complex64] {
        let index = |coord: f64, origin: f64, n: usize| {
            let f = ((coord - origin) / self.spacing).round();
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(n - 1)
            }
        };
        self.at(index(position[0], self.origin[0], self.nx), index(position[1], self.origin[1], self.ny))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(52 + self.data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.origin[0], self.origin[1], self.spacing] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.nx, self.ny, self.n_antennas] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for c in &self.data {
            out.extend_from_slice(&(c.re as f32).to_le_bytes());
            out.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], origin_path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(origin_path, m);
        let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
            let s = bytes.get(*at..*at + n).ok_or_else(|| bad("truncated channel grid"))?;
            *at += n;
            Ok(s)
        };
        let mut at = 0;
        if take(&mut at, 4)? != MAGIC {
            return Err(bad("bad magic, not a channel grid"));
        }
        let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported channel grid version {version}")));
        }
        let mut f = [0.0; 3];
        for v in &mut f {
            *v = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let raw = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
            *d = usize::try_from(raw).map_err(|_| bad("grid dimension overflows usize"))?;
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| bad("grid size overflows"))?;
        let payload = bytes.len() - at;
        if payload != count.saturating_mul(8) {
            return Err(bad(&format!("payload has {payload} bytes, expected {}", count.saturating_mul(8))));
        }
        let data = bytes[at..]
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        ChannelGrid::new([f[0], f[1]], f[2], dims[0], dims[1], dims[2], data)
            .map_err(|e| bad(&e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}
