//! On-disk container: magic, little-endian `u64` header length, JSON
//! header, then a little-endian `f64` payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat2, CMat3, C64};
use crate::scene::{ArrayGeom, FrequencyBand, SourceSpec};

pub const MAGIC: &[u8; 9] = b"POLARMIG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataKind {
    #[serde(rename = "coherency2x2")]
    Coherency2x2,
    #[serde(rename = "response3x3")]
    Response3x3,
    #[serde(rename = "preprocessed3x3")]
    Preprocessed3x3,
    #[serde(rename = "image2x2")]
    Image2x2,
    #[serde(rename = "image3x3")]
    Image3x3,
    #[serde(rename = "timeseries")]
    Timeseries,
}

impl DataKind {
    /// Matrix side for the matrix-valued kinds.
    pub fn matrix_dim(self) -> Option<usize> {
        match self {
            DataKind::Coherency2x2 | DataKind::Image2x2 => Some(2),
            DataKind::Response3x3 | DataKind::Preprocessed3x3 | DataKind::Image3x3 => Some(3),
            DataKind::Timeseries => None,
        }
    }
}

/// Parsed container header. `shape` counts payload `f64`s per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: DataKind,
    pub shape: Vec<usize>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Header {
    pub fn payload_len(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn write_container(path: impl AsRef<Path>, header: &Header, payload: &[f64]) -> Result<()> {
    if header.payload_len() != payload.len() {
        return Err(Error::invalid(format!(
            "payload has {} values, header shape {:?} needs {}",
            payload.len(),
            header.shape,
            header.payload_len()
        )));
    }
    let json = serde_json::to_vec(header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in payload {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<(Header, Vec<f64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    let n = MAGIC.len();
    if let Some(pos) = (0..n).find(|&i| bytes.get(i) != Some(&MAGIC[i])) {
        return Err(Error::format(pos as u64, "bad magic string"));
    }
    let len_bytes: [u8; 8] = bytes
        .get(n..n + 8)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| Error::format(n as u64, "missing header length"))?;
    let hlen = u64::from_le_bytes(len_bytes);
    let start = n + 8;
    let end = usize::try_from(hlen)
        .ok()
        .and_then(|h| start.checked_add(h))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| {
            Error::format(
                start as u64,
                format!("header of {hlen} bytes runs past end of file"),
            )
        })?;
    let header: Header = serde_json::from_slice(&bytes[start..end])
        .map_err(|e| Error::format(start as u64, format!("malformed header: {e}")))?;
    let body = &bytes[end..];
    let want = header.payload_len();
    if body.len() != want * 8 {
        return Err(Error::format(
            end as u64,
            format!(
                "payload is {} bytes, header shape {:?} needs {}",
                body.len(),
                header.shape,
                want * 8
            ),
        ));
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, payload))
}

/// Geometry carried with every array dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub array: ArrayGeom,
    pub source: SourceSpec,
    pub band: FrequencyBand,
}

/// Matrix field indexed by (receiver row, receiver col, frequency, i, j).
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayDataSet {
    pub kind: DataKind,
    pub meta: DataMeta,
    values: Vec<C64>,
}

impl ArrayDataSet {
    pub fn zeros(kind: DataKind, meta: DataMeta) -> Result<Self> {
        let dim = Self::dim_of(kind)?;
        let n = meta.array.len() * meta.band.count * dim * dim;
        Ok(ArrayDataSet {
            kind,
            meta,
            values: vec![C64::from(0.0); n],
        })
    }

    fn dim_of(kind: DataKind) -> Result<usize> {
        match kind {
            DataKind::Coherency2x2 | DataKind::Response3x3 | DataKind::Preprocessed3x3 => {
                Ok(kind.matrix_dim().expect("matrix kind"))
            }
            other => Err(Error::invalid(format!(
                "{other:?} is not an array dataset kind"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.kind
            .matrix_dim()
            .expect("array kinds are matrix-valued")
    }

    pub fn receivers(&self) -> usize {
        self.meta.array.len()
    }

    pub fn freqs(&self) -> usize {
        self.meta.band.count
    }

    /// Entries for receiver `r` (row-major over the grid), all frequencies.
    pub fn receiver_slice(&self, r: usize) -> &[C64] {
        let block = self.freqs() * self.dim() * self.dim();
        &self.values[r * block..(r + 1) * block]
    }

    pub fn receiver_slice_mut(&mut self, r: usize) -> &mut [C64] {
        let block = self.freqs() * self.dim() * self.dim();
        &mut self.values[r * block..(r + 1) * block]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    fn offset(&self, r: usize, f: usize) -> usize {
        let d2 = self.dim() * self.dim();
        (r * self.freqs() + f) * d2
    }

    pub fn mat3(&self, r: usize, f: usize) -> CMat3 {
        assert_eq!(self.dim(), 3);
        let o = self.offset(r, f);
        CMat3::from_row_slice(&self.values[o..o + 9])
    }

    pub fn mat2(&self, r: usize, f: usize) -> CMat2 {
        assert_eq!(self.dim(), 2);
        let o = self.offset(r, f);
        CMat2::from_row_slice(&self.values[o..o + 4])
    }

    pub fn set_mat3(&mut self, r: usize, f: usize, m: &CMat3) {
        assert_eq!(self.dim(), 3);
        let o = self.offset(r, f);
        self.values[o..o + 9].copy_from_slice(m.transpose().as_slice());
    }

    pub fn set_mat2(&mut self, r: usize, f: usize, m: &CMat2) {
        assert_eq!(self.dim(), 2);
        let o = self.offset(r, f);
        self.values[o..o + 4].copy_from_slice(m.transpose().as_slice());
    }

    /// Builds a dataset from per-receiver blocks of row-major matrices.
    pub fn from_blocks(kind: DataKind, meta: DataMeta, blocks: Vec<Vec<C64>>) -> Result<Self> {
        let mut ds = Self::zeros(kind, meta)?;
        if blocks.len() != ds.receivers() {
            return Err(Error::invalid("receiver block count mismatch"));
        }
        for (r, b) in blocks.into_iter().enumerate() {
            let dst = ds.receiver_slice_mut(r);
            if b.len() != dst.len() {
                return Err(Error::invalid("receiver block length mismatch"));
            }
            dst.copy_from_slice(&b);
        }
        Ok(ds)
    }

    pub fn header(&self) -> Result<Header> {
        let d = self.dim();
        Ok(Header {
            kind: self.kind,
            shape: vec![
                self.meta.array.n1,
                self.meta.array.n2,
                self.freqs(),
                d,
                d,
                2,
            ],
            meta: serde_json::to_value(&self.meta)?,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_container(path, &self.header()?, &flatten(&self.values))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (h, payload) = read_container(path)?;
        Self::from_parts(h, payload)
    }

    pub fn from_parts(h: Header, payload: Vec<f64>) -> Result<Self> {
        let dim = Self::dim_of(h.kind)?;
        let meta: DataMeta = serde_json::from_value(h.meta.clone())?;
        let expect = vec![meta.array.n1, meta.array.n2, meta.band.count, dim, dim, 2];
        if h.shape != expect {
            return Err(Error::invalid(format!(
                "dataset shape {:?} disagrees with its geometry {:?}",
                h.shape, expect
            )));
        }
        Ok(ArrayDataSet {
            kind: h.kind,
            meta,
            values: unflatten(&payload),
        })
    }
}

pub fn flatten(v: &[C64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub fn unflatten(v: &[f64]) -> Vec<C64> {
    v.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
}
