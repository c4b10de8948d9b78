//! Binary state snapshots.
//!
//! Layout, little-endian: magic `NARS`, `u32` version, `f64` time, `u32` nx,
//! `u32` ny, `u32` field count, then per field a `u16` name length, the UTF-8
//! name and `nx * ny` `f64` values (row-major, `y` outer). Fields are `phi0`,
//! `phi1..phiN`, `psi`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nar_core::spectral::{self, ScalarField2D};
use nar_core::{Grid, State};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"NARS";
pub const VERSION: u32 = 1;

/// Raw snapshot contents before they are tied to a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub nx: usize,
    pub ny: usize,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl Snapshot {
    pub fn from_state(state: &State) -> Self {
        let g = state.grid();
        let mut fields = vec![("phi0".to_string(), state.phi0.values().to_vec())];
        for (m, f) in state.phi.iter().enumerate() {
            fields.push((format!("phi{}", m + 1), f.values().to_vec()));
        }
        fields.push(("psi".to_string(), state.psi.values().to_vec()));
        Self {
            t: state.t,
            nx: g.nx(),
            ny: g.ny(),
            fields,
        }
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn encode(&self) -> Vec<u8> {
        let len = self.nx * self.ny;
        let mut out = Vec::with_capacity(24 + self.fields.len() * (8 + 8 * len));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, values) in &self.fields {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> CliResult<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CliError::Snapshot("bad magic, not a snapshot file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Snapshot(format!("unsupported version {version}")));
        }
        let t = r.f64()?;
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let count = r.u32()? as usize;
        let len = nx
            .checked_mul(ny)
            .ok_or_else(|| CliError::Snapshot("grid size overflows".into()))?;
        let mut fields = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CliError::Snapshot("field name is not UTF-8".into()))?
                .to_string();
            let raw = r.take(len.checked_mul(8).ok_or_else(|| {
                CliError::Snapshot("field size overflows".into())
            })?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            fields.push((name, values));
        }
        if r.pos != bytes.len() {
            return Err(CliError::Snapshot(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { t, nx, ny, fields })
    }

    /// Rebuilds the state on `grid`, interpolating spectrally when the
    /// snapshot was written at another resolution.
    pub fn to_state(&self, grid: &Arc<Grid>) -> CliResult<State> {
        let l = 2.0 * std::f64::consts::PI;
        let source = if (self.nx, self.ny) == (grid.nx(), grid.ny()) {
            Arc::clone(grid)
        } else {
            if grid.lx() != l || grid.ly() != l {
                return Err(CliError::Snapshot(
                    "resampling needs the default [-pi, pi)^2 domain".into(),
                ));
            }
            nar_core::spectral::Grid2D::new(self.nx, self.ny, l, l)?
        };
        let field = |name: &str| -> CliResult<ScalarField2D<f64>> {
            let values = self
                .field(name)
                .ok_or_else(|| CliError::Snapshot(format!("missing field {name}")))?;
            let f = ScalarField2D::from_values(&source, values.to_vec())?;
            f.ensure_finite()?;
            Ok(spectral::resample(&f, grid)?)
        };
        let n = self
            .fields
            .iter()
            .filter(|(name, _)| {
                name.strip_prefix("phi")
                    .is_some_and(|k| k != "0" && k.parse::<usize>().is_ok())
            })
            .count();
        let state = State {
            t: self.t,
            phi0: field("phi0")?,
            phi: (1..=n)
                .map(|m| field(&format!("phi{m}")))
                .collect::<CliResult<_>>()?,
            psi: field("psi")?,
        };
        state.validate()?;
        Ok(state)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CliError::Snapshot(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> CliResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write_state(path: &Path, state: &State) -> CliResult<()> {
    let mut file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(&Snapshot::from_state(state).encode())
        .map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> CliResult<Snapshot> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    Snapshot::decode(&bytes).map_err(|e| match e {
        CliError::Snapshot(m) => CliError::Snapshot(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_state(path: &Path, grid: &Arc<Grid>) -> CliResult<State> {
    read(path)?.to_state(grid)
}
