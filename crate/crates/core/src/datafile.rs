//! Data matrices and their on-disk formats.
//!
//! A data matrix is `p × n`: rows are variables, columns are samples.
//!
//! Two file formats are supported:
//!
//! - CSV, one row per variable, with an optional header line. Complex
//!   entries are written as `a+bi`.
//! - Binary: the 16 bytes `COVSPEC-MAT\0` padded with zeros, a little-endian
//!   `u64` header length, a UTF-8 JSON header
//!   `{"p":..,"n":..,"dtype":"f64"|"c128","layout":"column-major"}`, then
//!   `p·n` little-endian values (complex as interleaved re, im).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: [u8; 16] = *b"COVSPEC-MAT\0\0\0\0\0";
const MAX_HEADER: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum DataMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "column-major")]
    ColumnMajor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryHeader {
    pub p: usize,
    pub n: usize,
    pub dtype: Dtype,
    pub layout: Layout,
}

impl DataMatrix {
    pub fn p(&self) -> usize {
        match self {
            DataMatrix::Real(m) => m.nrows(),
            DataMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            DataMatrix::Real(m) => m.ncols(),
            DataMatrix::Complex(m) => m.ncols(),
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, DataMatrix::Real(_))
    }

    pub fn dtype(&self) -> Dtype {
        if self.is_real() {
            Dtype::F64
        } else {
            Dtype::C128
        }
    }

    /// Complex view of the entries.
    pub fn to_complex(&self) -> DMatrix<Complex64> {
        match self {
            DataMatrix::Real(m) => m.map(Complex64::from),
            DataMatrix::Complex(m) => m.clone(),
        }
    }

    /// Entries in column-major order, as complex numbers.
    pub fn entries(&self) -> Vec<Complex64> {
        match self {
            DataMatrix::Real(m) => m.iter().map(|&x| Complex64::from(x)).collect(),
            DataMatrix::Complex(m) => m.iter().copied().collect(),
        }
    }

    /// `Γ X` for a `p × p` matrix `Γ`; a real `Γ` keeps real data real.
    pub fn left_multiply(&self, gamma: &DMatrix<Complex64>) -> Result<DataMatrix> {
        if gamma.ncols() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: gamma.ncols(),
            });
        }
        let real_gamma = gamma.iter().all(|v| v.im == 0.0);
        Ok(match self {
            DataMatrix::Real(m) if real_gamma => DataMatrix::Real(gamma.map(|v| v.re) * m),
            _ => DataMatrix::Complex(gamma * self.to_complex()),
        })
    }

    pub fn read(path: &Path) -> Result<DataMatrix> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Reads either format from a stream, detecting binary by its magic.
    pub fn read_from<R: Read>(mut f: R) -> Result<DataMatrix> {
        let mut head = [0u8; 16];
        let got = read_up_to(&mut f, &mut head)?;
        if got == 16 && head == MAGIC {
            return read_binary_body(&mut f);
        }
        let mut rest = Vec::new();
        f.read_to_end(&mut rest)?;
        let mut all = head[..got].to_vec();
        all.extend(rest);
        parse_csv(&all)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_binary_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = BinaryHeader {
            p: self.p(),
            n: self.n(),
            dtype: self.dtype(),
            layout: Layout::ColumnMajor,
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(&MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        match self {
            DataMatrix::Real(m) => {
                for v in m.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            DataMatrix::Complex(m) => {
                for v in m.iter() {
                    w.write_all(&v.re.to_le_bytes())?;
                    w.write_all(&v.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        self.write_csv_to(w)
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.p() {
            let row: Vec<String> = match self {
                DataMatrix::Real(m) => m.row(i).iter().map(|v| format!("{v:?}")).collect(),
                DataMatrix::Complex(m) => m
                    .row(i)
                    .iter()
                    .map(|v| format!("{:?}{:+?}i", v.re, v.im))
                    .collect(),
            };
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        let k = r.read(&mut buf[got..])?;
        if k == 0 {
            break;
        }
        got += k;
    }
    Ok(got)
}

fn read_binary_body<R: Read>(r: &mut R) -> Result<DataMatrix> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format("truncated header length".into()))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(Error::Format(format!("header length {len} exceeds limit")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let header: BinaryHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let count = header
        .p
        .checked_mul(header.n)
        .ok_or_else(|| Error::Format("p·n overflows".into()))?;
    if count == 0 {
        return Err(Error::Format("empty matrix".into()));
    }
    let width = match header.dtype {
        Dtype::F64 => 8,
        Dtype::C128 => 16,
    };
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "payload has {} bytes, header declares {} × {} {:?} ({} bytes)",
            payload.len(),
            header.p,
            header.n,
            header.dtype,
            count * width
        )));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(match header.dtype {
        Dtype::F64 => DataMatrix::Real(DMatrix::from_vec(header.p, header.n, vals)),
        Dtype::C128 => DataMatrix::Complex(DMatrix::from_vec(
            header.p,
            header.n,
            vals.chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect(),
        )),
    })
}

fn parse_cell(s: &str) -> Option<Complex64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(Complex64::from(v));
    }
    s.parse::<Complex64>().ok()
}

fn parse_csv(bytes: &[u8]) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut complex = false;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let cells: Option<Vec<Complex64>> = rec.iter().map(parse_cell).collect();
        match cells {
            Some(v) => {
                complex |= rec.iter().any(|c| c.trim().parse::<f64>().is_err());
                rows.push(v);
            }
            None if line == 0 => continue,
            None => {
                return Err(Error::Format(format!(
                    "non-numeric entry on line {}",
                    line + 1
                )))
            }
        }
    }
    let p = rows.len();
    if p == 0 {
        return Err(Error::Format("no numeric rows".into()));
    }
    let n = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Format(format!(
            "row {} has {} entries, expected {n}",
            i + 1,
            r.len()
        )));
    }
    if rows
        .iter()
        .flatten()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::Format("non-finite entry".into()));
    }
    Ok(if complex {
        DataMatrix::Complex(DMatrix::from_fn(p, n, |i, j| rows[i][j]))
    } else {
        DataMatrix::Real(DMatrix::from_fn(p, n, |i, j| rows[i][j].re))
    })
}
