//! Corpus embedding sidecar: an 8-byte header `{u32 rows, u32 dim}` followed
//! by `rows * dim` little-endian f32 values in row-major order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbedError, EmbeddingVector};

/// A dense row-major matrix read from a sidecar file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows as renormalized embedding vectors.
    pub fn to_vectors(&self) -> Vec<EmbeddingVector> {
        (0..self.rows)
            .map(|i| EmbeddingVector::normalized(self.row(i).iter().map(|&x| f64::from(x)).collect()))
            .collect()
    }
}

pub fn write_matrix(path: &Path, rows: &[EmbeddingVector]) -> Result<(), EmbedError> {
    let dim = rows.first().map_or(0, EmbeddingVector::dim);
    if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
        return Err(EmbedError::DimensionMismatch {
            left: dim,
            right: bad.dim(),
        });
    }
    let as_u32 =
        |n: usize| u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "matrix too large"));
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&as_u32(rows.len())?.to_le_bytes())?;
    w.write_all(&as_u32(dim)?.to_le_bytes())?;
    for row in rows {
        for &x in row.as_slice() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 8];
    r.read_exact(&mut header)?;
    let rows = u32::from_le_bytes(header[0..4].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| EmbedError::Parse("sidecar header overflows".into()))?;
    if bytes.len() != expected {
        return Err(EmbedError::Parse(format!(
            "sidecar declares {rows}x{dim} but holds {} bytes of data",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(EmbeddingMatrix { rows, dim, data })
}
