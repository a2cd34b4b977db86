//! SMX1 binary container.
//!
//! Little-endian layout:
//!
//! ```text
//! "SMX1" | u32 version=1 | u32 kind | u32 M | u32 K | u32 V | u32 G | payload
//! ```
//!
//! | kind | payload |
//! |------|---------|
//! | 0 dense | `M*K` f32, row-major |
//! | 1 mask | `ceil(M*K/8)` bytes, row-major, bit `i % 8` (LSB first) of byte `i / 8` |
//! | 2 vector-wise | per group: u32 `n_g`, `n_g` u32 columns, `V*n_g` f32 values |
//! | 3 shfl-bw | `M` u32 row indices, then the vector-wise payload |
//! | 4 block-wise | u32 `nblocks`, `nblocks` (u32, u32) coords, `nblocks*V*V` f32 |
//!
//! `V` and `G` are zero for dense and mask. For block-wise `G` is the number
//! of block rows `M/V`.

use std::fs;
use std::path::Path;

use super::dense::{DenseMatrix, SparsityMask};
use super::sparse::{BlockWiseMatrix, ShflBWMatrix, VectorGroup, VectorWiseMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SMX1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Dense = 0,
    Mask = 1,
    VectorWise = 2,
    ShflBw = 3,
    BlockWise = 4,
}

impl Kind {
    fn from_u32(raw: u32) -> Result<Self> {
        Ok(match raw {
            0 => Kind::Dense,
            1 => Kind::Mask,
            2 => Kind::VectorWise,
            3 => Kind::ShflBw,
            4 => Kind::BlockWise,
            other => return Err(Error::CorruptPayload(format!("unknown kind {other}"))),
        })
    }
}

/// Any matrix type the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Mask(SparsityMask),
    VectorWise(VectorWiseMatrix),
    ShflBw(ShflBWMatrix),
    BlockWise(BlockWiseMatrix),
}

impl Matrix {
    pub fn kind(&self) -> Kind {
        match self {
            Matrix::Dense(_) => Kind::Dense,
            Matrix::Mask(_) => Kind::Mask,
            Matrix::VectorWise(_) => Kind::VectorWise,
            Matrix::ShflBw(_) => Kind::ShflBw,
            Matrix::BlockWise(_) => Kind::BlockWise,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Matrix::Dense(_) => "dense",
            Matrix::Mask(_) => "mask",
            Matrix::VectorWise(_) => "vector-wise",
            Matrix::ShflBw(_) => "shfl-bw",
            Matrix::BlockWise(_) => "block-wise",
        }
    }
}

macro_rules! impl_from {
    ($($variant:ident($ty:ty)),*) => {
        $(impl From<$ty> for Matrix {
            fn from(m: $ty) -> Self {
                Matrix::$variant(m)
            }
        })*
    };
}

impl_from!(
    Dense(DenseMatrix),
    Mask(SparsityMask),
    VectorWise(VectorWiseMatrix),
    ShflBw(ShflBWMatrix),
    BlockWise(BlockWiseMatrix)
);

fn to_u32(x: usize, what: &str) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::params(format!("{what}={x} does not fit in u32")))
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, x: usize, what: &str) -> Result<()> {
        self.buf.extend_from_slice(&to_u32(x, what)?.to_le_bytes());
        Ok(())
    }

    fn f32s(&mut self, xs: &[f32]) {
        for x in xs {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn vector_wise(&mut self, vw: &VectorWiseMatrix) -> Result<()> {
        for g in vw.groups() {
            self.u32(g.columns.len(), "n_g")?;
            for &c in &g.columns {
                self.u32(c, "column")?;
            }
            self.f32s(&g.values);
        }
        Ok(())
    }
}

/// Serializes `matrix` into an in-memory SMX1 image.
pub fn to_bytes(matrix: &Matrix) -> Result<Vec<u8>> {
    let (m, k, v, g) = match matrix {
        Matrix::Dense(d) => (d.rows(), d.cols(), 0, 0),
        Matrix::Mask(d) => (d.rows(), d.cols(), 0, 0),
        Matrix::VectorWise(vw) => (vw.rows(), vw.cols(), vw.vector_size(), vw.group_count()),
        Matrix::ShflBw(s) => (s.rows(), s.cols(), s.vector_size(), s.core().group_count()),
        Matrix::BlockWise(b) => (b.rows(), b.cols(), b.block_size(), b.rows() / b.block_size()),
    };
    let mut w = Writer {
        buf: Vec::with_capacity(HEADER_LEN),
    };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION as usize, "version")?;
    w.u32(matrix.kind() as usize, "kind")?;
    w.u32(m, "M")?;
    w.u32(k, "K")?;
    w.u32(v, "V")?;
    w.u32(g, "G")?;
    match matrix {
        Matrix::Dense(d) => w.f32s(d.values()),
        Matrix::Mask(mask) => {
            let mut packed = vec![0u8; mask.bits().len().div_ceil(8)];
            for (i, _) in mask.bits().iter().enumerate().filter(|(_, &b)| b) {
                packed[i / 8] |= 1 << (i % 8);
            }
            w.buf.extend_from_slice(&packed);
        }
        Matrix::VectorWise(vw) => w.vector_wise(vw)?,
        Matrix::ShflBw(s) => {
            for &r in s.row_indices() {
                w.u32(r, "row index")?;
            }
            w.vector_wise(s.core())?;
        }
        Matrix::BlockWise(b) => {
            w.u32(b.coords().len(), "nblocks")?;
            for &(br, bc) in b.coords() {
                w.u32(br, "block row")?;
                w.u32(bc, "block col")?;
            }
            w.f32s(b.tiles());
        }
    }
    Ok(w.buf)
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
            .ok_or_else(|| {
                Error::CorruptPayload(format!(
                    "needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::CorruptPayload("length overflow".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    fn vector_wise(&mut self, m: usize, k: usize, v: usize, g: usize) -> Result<VectorWiseMatrix> {
        if v == 0 || !m.is_multiple_of(v) || g != m / v {
            return Err(Error::CorruptPayload(format!(
                "inconsistent header M={m} V={v} G={g}"
            )));
        }
        let mut groups = Vec::with_capacity(g);
        for _ in 0..g {
            let n = self.usize()?;
            if n > k {
                return Err(Error::CorruptPayload(format!(
                    "group with {n} columns exceeds K={k}"
                )));
            }
            let columns = (0..n).map(|_| self.usize()).collect::<Result<Vec<_>>>()?;
            let values = self.f32s(v * n)?;
            groups.push(VectorGroup { columns, values });
        }
        VectorWiseMatrix::new(m, k, v, groups).map_err(corrupt)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptPayload(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn corrupt(e: Error) -> Error {
    match e {
        Error::CorruptPayload(_) => e,
        other => Error::CorruptPayload(other.to_string()),
    }
}

/// Parses an SMX1 image, rejecting truncated input and trailing bytes.
pub fn from_bytes(buf: &[u8]) -> Result<Matrix> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { buf, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = Kind::from_u32(r.u32()?)?;
    let m = r.usize()?;
    let k = r.usize()?;
    let v = r.usize()?;
    let g = r.usize()?;
    let total = m
        .checked_mul(k)
        .ok_or_else(|| Error::CorruptPayload("M*K overflows".into()))?;

    let matrix = match kind {
        Kind::Dense => Matrix::Dense(DenseMatrix::new(m, k, r.f32s(total)?).map_err(corrupt)?),
        Kind::Mask => {
            let packed = r.take(total.div_ceil(8))?;
            let bits = (0..total).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
            Matrix::Mask(SparsityMask::new(m, k, bits)?)
        }
        Kind::VectorWise => Matrix::VectorWise(r.vector_wise(m, k, v, g)?),
        Kind::ShflBw => {
            let rows = (0..m).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let core = r.vector_wise(m, k, v, g)?;
            Matrix::ShflBw(ShflBWMatrix::new(core, rows).map_err(corrupt)?)
        }
        Kind::BlockWise => {
            let n = r.usize()?;
            let coords = (0..n)
                .map(|_| Ok((r.usize()?, r.usize()?)))
                .collect::<Result<Vec<_>>>()?;
            let tiles = r.f32s(
                n.checked_mul(v * v)
                    .ok_or_else(|| Error::CorruptPayload("length overflow".into()))?,
            )?;
            Matrix::BlockWise(BlockWiseMatrix::new(m, k, v, coords, tiles).map_err(corrupt)?)
        }
    };
    r.finish()?;
    Ok(matrix)
}

pub fn write_container(matrix: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(matrix)?)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Matrix> {
    from_bytes(&fs::read(path)?)
}
