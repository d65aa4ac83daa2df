//! Binary channel persistence.
//!
//! The on-disk layout is language neutral and bit exact so channel draws can
//! be replayed across runs and compared against fixtures produced elsewhere:
//!
//! - magic bytes `"CFCH"`, then format version as little-endian `u32`
//! - `I` (access points) and `K` (users) as `u32`
//! - one record per pair in `(i ascending, k ascending)` order: `N_k`, `M_i`
//!   as `u32`, then the `N_k x M_i` channel matrix row-major as interleaved
//!   `(re, im)` little-endian IEEE-754 `f64`
//! - footer: a `u32` flag (1 when noise powers are present) followed by `K`
//!   noise variances as `f64`, then each user's serving set as a `u32`
//!   length plus that many `u32` access-point indices

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::network::{ChannelSet, Topology};

const MAGIC: &[u8; 4] = b"CFCH";
const VERSION: u32 = 1;

/// Hard cap on one matrix dimension; rejects absurd headers before any
/// allocation happens.
const MAX_DIM: u64 = 1 << 24;

/// Serialize a channel set to its binary representation.
pub fn to_bytes(channels: &ChannelSet) -> Vec<u8> {
    let num_aps = channels.num_aps();
    let num_ues = channels.num_ues();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(num_aps as u32).to_le_bytes());
    out.extend_from_slice(&(num_ues as u32).to_le_bytes());
    for i in 0..num_aps {
        for k in 0..num_ues {
            let h = channels.channel(i, k);
            out.extend_from_slice(&(h.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(h.ncols() as u32).to_le_bytes());
            for r in 0..h.nrows() {
                for c in 0..h.ncols() {
                    let z = h[(r, c)];
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
    }
    match channels.noise_powers() {
        Some(noise) => {
            out.extend_from_slice(&1u32.to_le_bytes());
            for &s in noise {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        None => out.extend_from_slice(&0u32.to_le_bytes()),
    }
    for k in 0..num_ues {
        let serving = &channels.topology().serving[k];
        out.extend_from_slice(&(serving.len() as u32).to_le_bytes());
        for &i in serving {
            out.extend_from_slice(&(i as u32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of channel file".into()))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Rebuild a channel set from its binary representation.
pub fn from_bytes(bytes: &[u8]) -> Result<ChannelSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a channel file (bad magic bytes)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported channel file version {version}, expected {VERSION}"
        )));
    }
    let num_aps = r.u32()? as usize;
    let num_ues = r.u32()? as usize;
    if num_aps == 0 || num_ues == 0 {
        return Err(Error::Format("channel file declares an empty network".into()));
    }

    let mut rx = vec![0usize; num_ues];
    let mut tx = vec![0usize; num_aps];
    let mut grid: Vec<Vec<CMat>> = Vec::with_capacity(num_aps);
    for i in 0..num_aps {
        let mut row = Vec::with_capacity(num_ues);
        for k in 0..num_ues {
            let n = r.u32()? as u64;
            let m = r.u32()? as u64;
            if n == 0 || m == 0 || n > MAX_DIM || m > MAX_DIM {
                return Err(Error::Format(format!(
                    "channel ({i}, {k}) declares unusable dimensions {n}x{m}"
                )));
            }
            let (n, m) = (n as usize, m as usize);
            if rx[k] == 0 {
                rx[k] = n;
            } else if rx[k] != n {
                return Err(Error::Format(format!(
                    "user {k} has inconsistent receive antenna counts {} and {n}",
                    rx[k]
                )));
            }
            if tx[i] == 0 {
                tx[i] = m;
            } else if tx[i] != m {
                return Err(Error::Format(format!(
                    "access point {i} has inconsistent transmit antenna counts {} and {m}",
                    tx[i]
                )));
            }
            let mut h = CMat::zeros(n, m);
            for rr in 0..n {
                for cc in 0..m {
                    let re = r.f64()?;
                    let im = r.f64()?;
                    h[(rr, cc)] = Complex64::new(re, im);
                }
            }
            row.push(h);
        }
        grid.push(row);
    }

    let noise = match r.u32()? {
        0 => None,
        1 => {
            let mut v = Vec::with_capacity(num_ues);
            for _ in 0..num_ues {
                v.push(r.f64()?);
            }
            Some(v)
        }
        other => {
            return Err(Error::Format(format!("invalid noise flag {other}")));
        }
    };

    let mut serving = Vec::with_capacity(num_ues);
    for k in 0..num_ues {
        let len = r.u32()? as usize;
        if len == 0 || len > num_aps {
            return Err(Error::Format(format!(
                "user {k} declares a serving set of size {len} among {num_aps} access points"
            )));
        }
        let mut set = Vec::with_capacity(len);
        for _ in 0..len {
            let i = r.u32()? as usize;
            if i >= num_aps {
                return Err(Error::Format(format!(
                    "user {k} lists serving access point {i} outside 0..{num_aps}"
                )));
            }
            set.push(i);
        }
        set.sort_unstable();
        set.dedup();
        if set.len() != len {
            return Err(Error::Format(format!("user {k} lists a serving access point twice")));
        }
        serving.push(set);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the channel file footer",
            bytes.len() - r.pos
        )));
    }

    let topology = Topology::from_serving_sets(serving, num_aps);
    ChannelSet::new(grid, topology, noise)
}

/// Write a channel set to `path`.
pub fn dump_channels(channels: &ChannelSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(channels))?;
    Ok(())
}

/// Read a channel set from `path`.
pub fn load_channels(path: impl AsRef<Path>) -> Result<ChannelSet> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}
