//! Binary basis files: magic `OBAS`, version, sizes, problem tag, then
//! `λ̂`, `Û` and `V̂` (column-major), all little-endian. A JSON sidecar
//! `<name>.meta.json` records the configuration that produced the basis.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rsvd::{BasisMeta, SVDBasis};

pub const MAGIC: &[u8; 4] = b"OBAS";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1;

pub fn encode(basis: &SVDBasis) -> Vec<u8> {
    let (n, r) = (basis.dim(), basis.rank());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * r * (2 * n + 1));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(r as u64).to_le_bytes());
    out.push(basis.meta.tag);
    for l in &basis.lambdas {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for m in [&basis.u_hat, &basis.v_hat] {
        for j in 0..r {
            for v in m.col_as_slice(j) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::BadFormat(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, k: usize, what: &str) -> Result<Vec<f64>> {
        let len = k
            .checked_mul(8)
            .ok_or_else(|| Error::BadFormat(format!("{what} size overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<SVDBasis> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::BadFormat("bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::BadFormat(format!("unsupported version {version}")));
    }
    let n = usize::try_from(c.u64("N")?).map_err(|_| Error::BadFormat("N too large".into()))?;
    let r = usize::try_from(c.u64("r")?).map_err(|_| Error::BadFormat("r too large".into()))?;
    if r > n {
        return Err(Error::BadFormat(format!("rank {r} exceeds dimension {n}")));
    }
    let tag = c.take(1, "tag")?[0];
    let expected = n
        .checked_mul(r)
        .and_then(|nr| nr.checked_mul(2))
        .and_then(|v| v.checked_add(r))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::BadFormat("sizes overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::BadFormat(format!(
            "expected {expected} bytes for N={n}, r={r}, found {}",
            bytes.len()
        )));
    }
    let lambdas = c.f64s(r, "singular values")?;
    let u = c.f64s(n * r, "left vectors")?;
    let v = c.f64s(n * r, "right vectors")?;
    Ok(SVDBasis {
        lambdas,
        u_hat: DenseMatrix::from_fn(n, r, |i, j| u[j * n + i]),
        v_hat: DenseMatrix::from_fn(n, r, |i, j| v[j * n + i]),
        meta: BasisMeta {
            tag,
            ..BasisMeta::default()
        },
    })
}

/// `<stem>.meta.json` next to `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Write the basis and, when given, its provenance sidecar.
pub fn write_basis(path: &Path, basis: &SVDBasis, meta_json: Option<&str>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(basis))?;
    if let Some(meta) = meta_json {
        std::fs::write(sidecar_path(path), meta)?;
    }
    Ok(())
}

pub fn read_basis(path: &Path) -> Result<SVDBasis> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
