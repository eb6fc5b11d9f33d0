//! Binary field snapshots (.hfd files).
//!
//! Layout, all little-endian:
//!
//! ```text
//! "HYLO"            4-byte magic
//! u32 version       currently 1
//! u32 ndim          1 (radial) or 3 (box)
//! u32 * ndim        cell counts per axis
//! f64 * ndim        domain extents per axis (r_max, or box lengths)
//! u8  kind          0 = real, 1 = complex
//! f64 payload       row-major samples; complex fields interleave re, im
//! ```
//!
//! Reads are strict: wrong magic, unknown version, truncated payloads,
//! trailing bytes, and non-finite samples are all rejected.

use super::{ComplexField, Grid, GridError, RealField};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HYLO";
const VERSION: u32 = 1;

/// Errors from reading or writing field snapshots.
#[derive(Debug, thiserror::Error)]
pub enum FieldIoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a field snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {found}, expected {expected}")]
    BadVersion { found: u32, expected: u32 },
    #[error("unsupported dimension count {0}, expected 1 or 3")]
    BadNdim(u32),
    #[error("unknown sample kind tag {0}")]
    BadKind(u8),
    #[error("file ends before the declared payload")]
    Truncated,
    #[error("file has {0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("snapshot describes an invalid grid: {0}")]
    Grid(#[from] GridError),
}

/// A field loaded from disk, real or complex.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredField {
    Real(RealField),
    Complex(ComplexField),
}

fn grid_header(grid: &Grid) -> (u32, Vec<u32>, Vec<f64>) {
    match grid {
        Grid::Radial(g) => (1, vec![g.len() as u32], vec![g.r_max()]),
        Grid::Box3(g) => {
            let n = g.sizes();
            (
                3,
                n.iter().map(|&v| v as u32).collect(),
                g.lengths().to_vec(),
            )
        }
    }
}

fn write_header(w: &mut impl Write, grid: &Grid, kind: u8) -> Result<(), FieldIoError> {
    let (ndim, sizes, lengths) = grid_header(grid);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ndim.to_le_bytes())?;
    for s in sizes {
        w.write_all(&s.to_le_bytes())?;
    }
    for l in lengths {
        w.write_all(&l.to_le_bytes())?;
    }
    w.write_all(&[kind])?;
    Ok(())
}

/// Writes a real field snapshot.
pub fn write_real(path: &Path, field: &RealField) -> Result<(), FieldIoError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut w, field.grid(), 0)?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a complex field snapshot.
pub fn write_complex(path: &Path, field: &ComplexField) -> Result<(), FieldIoError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut w, field.grid(), 1)?;
    for v in field.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FieldIoError> {
        if self.pos + n > self.bytes.len() {
            return Err(FieldIoError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, FieldIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FieldIoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, FieldIoError> {
        Ok(self.take(1)?[0])
    }
}

/// Reads a field snapshot, validating the header, payload size, and samples.
pub fn read_field(path: &Path) -> Result<StoredField, FieldIoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    if c.take(4)? != MAGIC {
        return Err(FieldIoError::BadMagic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(FieldIoError::BadVersion {
            found: version,
            expected: VERSION,
        });
    }
    let ndim = c.u32()?;
    if ndim != 1 && ndim != 3 {
        return Err(FieldIoError::BadNdim(ndim));
    }
    let mut sizes = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        sizes.push(c.u32()? as usize);
    }
    let mut lengths = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        lengths.push(c.f64()?);
    }
    let kind = c.u8()?;

    let grid = if ndim == 1 {
        Grid::radial(sizes[0], lengths[0])?
    } else {
        Grid::box3(
            [sizes[0], sizes[1], sizes[2]],
            [lengths[0], lengths[1], lengths[2]],
        )?
    };
    let cells = grid.len();

    let field = match kind {
        0 => {
            let mut values = Vec::with_capacity(cells);
            for _ in 0..cells {
                values.push(c.f64()?);
            }
            StoredField::Real(RealField::new(grid, values)?)
        }
        1 => {
            let mut values = Vec::with_capacity(cells);
            for _ in 0..cells {
                let re = c.f64()?;
                let im = c.f64()?;
                values.push(Complex64::new(re, im));
            }
            StoredField::Complex(ComplexField::new(grid, values)?)
        }
        other => return Err(FieldIoError::BadKind(other)),
    };

    if c.pos != bytes.len() {
        return Err(FieldIoError::TrailingBytes(bytes.len() - c.pos));
    }
    Ok(field)
}
