//! Binary table checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic     8 bytes  "KGFEDEMB"
//! version   u32      1
//! kind      u8       0 transe, 1 complex, 2 rotate
//! role      u8       0 entity, 1 relation
//! flags     u16      bit 0: optimizer state follows the values
//! rows      u64
//! dim       u64
//! width     u64
//! values    rows * width f64, row-major
//! [lr, beta1, beta2, eps as f64; m and v as rows * width f64; steps as rows u64]
//! ```
//!
//! Each file gets a `<file>.manifest` text sidecar with the run seed and
//! config hash.

use std::fs;
use std::path::{Path, PathBuf};

use super::{AdamConfig, AdamState, EmbeddingTable, ModelKind, Role};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"KGFEDEMB";
pub const VERSION: u32 = 1;
const HAS_ADAM: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
}

pub fn encode(table: &EmbeddingTable, adam: Option<&AdamState>) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + table.data().len() * 8 * if adam.is_some() { 3 } else { 1 });
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(table.kind.code());
    out.push(table.role.code());
    out.extend_from_slice(&(if adam.is_some() { HAS_ADAM } else { 0 }).to_le_bytes());
    for v in [table.rows(), table.dim, table.width()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let put = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    put(&mut out, table.data());
    if let Some(s) = adam {
        put(&mut out, &[s.config.lr, s.config.beta1, s.config.beta2, s.config.eps]);
        put(&mut out, &s.m);
        put(&mut out, &s.v);
        for step in &s.steps {
            out.extend_from_slice(&step.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint { path: self.path.to_owned(), reason: "truncated".into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.bad("size overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn bad(&self, reason: &str) -> Error {
        Error::Checkpoint { path: self.path.to_owned(), reason: reason.into() }
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(EmbeddingTable, Option<AdamState>)> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::Version { found: 0, expected: VERSION });
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let head: [u8; 4] = r.take(4)?.try_into().unwrap();
    let kind = ModelKind::from_code(head[0]).ok_or_else(|| r.bad("unknown model kind"))?;
    let role = Role::from_code(head[1]).ok_or_else(|| r.bad("unknown role"))?;
    let flags = u16::from_le_bytes([head[2], head[3]]);
    let rows = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let width = r.u64()? as usize;
    if kind.width(role, dim) != width {
        return Err(r.bad("width does not match kind and dimension"));
    }
    let data = r.f64s(rows * width)?;
    let table = EmbeddingTable::from_data(kind, role, dim, rows, data)?;
    let adam = if flags & HAS_ADAM != 0 {
        let c = r.f64s(4)?;
        let m = r.f64s(rows * width)?;
        let v = r.f64s(rows * width)?;
        let steps = (0..rows).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let config = AdamConfig { lr: c[0], beta1: c[1], beta2: c[2], eps: c[3] };
        Some(AdamState { config, m, v, steps })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(r.bad("trailing bytes"));
    }
    Ok((table, adam))
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    path.with_file_name(name)
}

pub fn write(path: &Path, table: &EmbeddingTable, adam: Option<&AdamState>, manifest: &Manifest) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode(table, adam))?;
    let text = format!(
        "format=kgfed-embedding\nversion={VERSION}\nkind={}\nrole={}\nrows={}\ndim={}\nseed={}\nconfig_hash={}\n",
        table.kind,
        if table.role == Role::Entity { "entity" } else { "relation" },
        table.rows(),
        table.dim,
        manifest.seed,
        manifest.config_hash,
    );
    fs::write(manifest_path(path), text)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(EmbeddingTable, Option<AdamState>)> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint { path: path.to_owned(), reason: e.to_string() })?;
    decode(&bytes, path)
}
