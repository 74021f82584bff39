//! Artifact files: the `SWRM` binary matrix container and small CSV tables.
//!
//! A matrix file is the 4-byte magic `SWRM`, a little-endian `u32` format
//! version, `u64` rows and `u64` cols, followed by `rows·cols` little-endian
//! `f64` values in column-major order. Every file is written to a temporary
//! sibling and renamed into place once complete.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use tempfile::NamedTempFile;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SWRM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8;

fn temp_beside(path: &Path) -> Result<NamedTempFile> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    Ok(NamedTempFile::new_in(dir)?)
}

fn persist(tmp: NamedTempFile, path: &Path) -> Result<()> {
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes `contents` to `path` atomically.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = temp_beside(path)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    persist(tmp, path)
}

/// Streams the columns of a matrix whose shape is known up front.
pub struct ColumnWriter {
    out: BufWriter<NamedTempFile>,
    path: PathBuf,
    rows: usize,
    cols: usize,
    written: usize,
}

impl ColumnWriter {
    pub fn create(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut out = BufWriter::new(temp_beside(&path)?);
        out.write_all(&MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(rows as u64).to_le_bytes())?;
        out.write_all(&(cols as u64).to_le_bytes())?;
        Ok(ColumnWriter {
            out,
            path,
            rows,
            cols,
            written: 0,
        })
    }

    pub fn push(&mut self, column: &[f64]) -> Result<()> {
        if column.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "matrix column",
                expected: self.rows,
                found: column.len(),
            });
        }
        if self.written == self.cols {
            return Err(Error::InvalidArgument(format!(
                "{} already holds its {} columns",
                self.path.display(),
                self.cols
            )));
        }
        for x in column {
            self.out.write_all(&x.to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    /// Moves the file into place; fails if columns are missing.
    pub fn finish(self) -> Result<()> {
        if self.written != self.cols {
            return Err(Error::InvalidArgument(format!(
                "{} received {} of {} columns",
                self.path.display(),
                self.written,
                self.cols
            )));
        }
        let tmp = self.out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        tmp.as_file().sync_all()?;
        persist(tmp, &self.path)
    }
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Mat<f64>) -> Result<()> {
    let mut w = ColumnWriter::create(path, m.nrows(), m.ncols())?;
    let mut col = vec![0.0; m.nrows()];
    for j in 0..m.ncols() {
        for (i, c) in col.iter_mut().enumerate() {
            *c = m[(i, j)];
        }
        w.push(&col)?;
    }
    w.finish()
}

/// Writes equally long vectors as the columns of one matrix.
pub fn write_columns<C: AsRef<[f64]>>(path: impl AsRef<Path>, rows: usize, columns: &[C]) -> Result<()> {
    let mut w = ColumnWriter::create(path, rows, columns.len())?;
    for c in columns {
        w.push(c.as_ref())?;
    }
    w.finish()
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    write_columns(path, v.len(), &[v])
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a matrix file column by column.
pub struct ColumnReader {
    input: BufReader<File>,
    path: PathBuf,
    rows: usize,
    cols: usize,
    read: usize,
}

impl ColumnReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let len = file.metadata()?.len();
        let mut input = BufReader::new(file);
        let mut header = [0u8; HEADER_LEN as usize];
        input
            .read_exact(&mut header)
            .map_err(|_| format_error(&path, "truncated header"))?;
        if header[..4] != MAGIC {
            return Err(format_error(&path, "bad magic"));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format_error(&path, format!("unsupported format version {version}")));
        }
        let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let cols = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let payload = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| format_error(&path, "matrix shape overflows"))?;
        if len - HEADER_LEN != payload {
            return Err(format_error(
                &path,
                format!("payload is {} bytes, expected {payload} for {rows}x{cols}", len - HEADER_LEN),
            ));
        }
        Ok(ColumnReader {
            input,
            path,
            rows: rows as usize,
            cols: cols as usize,
            read: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Reads the next column into `out`; returns `false` once exhausted.
    pub fn next_into(&mut self, out: &mut [f64]) -> Result<bool> {
        if self.read == self.cols {
            return Ok(false);
        }
        if out.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "matrix column",
                expected: self.rows,
                found: out.len(),
            });
        }
        let mut buf = [0u8; 8];
        for x in out.iter_mut() {
            self.input
                .read_exact(&mut buf)
                .map_err(|_| format_error(&self.path, "truncated payload"))?;
            *x = f64::from_le_bytes(buf);
        }
        self.read += 1;
        Ok(true)
    }

    pub fn into_columns(mut self) -> Result<Vec<Vec<f64>>> {
        let mut cols = Vec::with_capacity(self.cols - self.read);
        let mut col = vec![0.0; self.rows];
        while self.next_into(&mut col)? {
            cols.push(col.clone());
        }
        Ok(cols)
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let mut r = ColumnReader::open(path)?;
    let mut m = Mat::zeros(r.rows(), r.cols());
    let mut col = vec![0.0; r.rows()];
    let mut j = 0;
    while r.next_into(&mut col)? {
        for (i, &x) in col.iter().enumerate() {
            m[(i, j)] = x;
        }
        j += 1;
    }
    Ok(m)
}

pub fn read_columns(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    ColumnReader::open(path)?.into_columns()
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let r = ColumnReader::open(path)?;
    if r.cols() != 1 {
        return Err(format_error(path, format!("expected a single column, found {}", r.cols())));
    }
    Ok(r.into_columns()?.pop().unwrap())
}

/// Writes a CSV table with a header row.
pub fn write_csv<R: AsRef<[f64]>>(path: impl AsRef<Path>, header: &[&str], rows: &[R]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| format_error(path, e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.as_ref().iter().map(|x| format!("{x:e}"))).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| format_error(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Writes `quantity,value` rows.
pub fn write_quantities(path: impl AsRef<Path>, rows: &[(String, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| format_error(path, e.to_string());
    w.write_record(["quantity", "value"]).map_err(fail)?;
    for (name, value) in rows {
        w.write_record([name.as_str(), &format!("{value:e}")]).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| format_error(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_quantities(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| format_error(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| format_error(path, e.to_string())))
        .collect()
}
