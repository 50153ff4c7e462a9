//! File formats: the TTS1 binary series format, CSV matrix series, and the
//! JSON documents written by the command-line tool.
//!
//! TTS1 layout (little-endian): magic `TTS1`, `u32` version (1), `u32` K,
//! K `u32` dimensions, `u64` T, then `T·d` `f64` values, time-major with
//! each slice in vec order (mode 0 fastest).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{FitResult, Method};
use crate::model::CpFactorModel;
use crate::moments::TensorTimeSeries;
use crate::simulate::SimConfig;
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"TTS1";
pub const FORMAT_VERSION: u32 = 1;
/// Largest payload [`read_series`] accepts, in bytes.
pub const DEFAULT_MAX_PAYLOAD: u64 = 8 << 30;

/// Size in bytes of a TTS1 payload.
pub fn payload_len(dims: &[usize], t: usize) -> Option<u64> {
    dims.iter()
        .try_fold(8u64 * t as u64, |acc, &d| acc.checked_mul(d as u64))
}

pub fn write_series_to<W: Write>(x: &TensorTimeSeries, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let order = u32::try_from(x.dims().len()).map_err(|_| Error::Format("too many modes".into()))?;
    w.write_all(&order.to_le_bytes())?;
    for &d in x.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&(x.len() as u64).to_le_bytes())?;
    for v in x.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series(x: &TensorTimeSeries, path: impl AsRef<Path>) -> Result<()> {
    write_series_to(x, BufWriter::new(File::create(path)?))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_series_from<R: Read>(mut r: R, max_payload: u64) -> Result<TensorTimeSeries> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let order = read_u32(&mut r, "order")? as usize;
    if order == 0 {
        return Err(Error::Format("order must be at least 1".into()));
    }
    if order > 64 {
        return Err(Error::Format(format!("order {order} is implausible")));
    }
    let dims = (0..order)
        .map(|_| read_u32(&mut r, "dimensions").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut tb = [0u8; 8];
    read_exact(&mut r, &mut tb, "length")?;
    let t = usize::try_from(u64::from_le_bytes(tb))
        .map_err(|_| Error::Format("series length overflows".into()))?;
    let bytes = payload_len(&dims, t)
        .filter(|&b| b <= max_payload)
        .ok_or_else(|| Error::Format(format!("payload for dims {dims:?} x {t} exceeds the size limit")))?;
    let mut raw = vec![0u8; bytes as usize];
    read_exact(&mut r, &mut raw, "payload")?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    TensorTimeSeries::new(dims, t, data)
}

pub fn read_series(path: impl AsRef<Path>) -> Result<TensorTimeSeries> {
    read_series_from(BufReader::new(File::open(path)?), DEFAULT_MAX_PAYLOAD)
}

/// Reads a K=2 series from CSV, one record per time slice holding the
/// `rows x cols` matrix in column-major order. No header row.
pub fn read_csv_matrix_series(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<TensorTimeSeries> {
    read_csv_matrix_series_from(File::open(path)?, rows, cols)
}

pub fn read_csv_matrix_series_from<R: Read>(r: R, rows: usize, cols: usize) -> Result<TensorTimeSeries> {
    let d = rows * cols;
    if d == 0 {
        return Err(Error::invalid("matrix dimensions must be positive"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r);
    let mut data = Vec::new();
    let mut t = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.len() != d {
            return Err(Error::Format(format!(
                "line {line}: expected {d} values, found {}",
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("line {line}, field {}: cannot parse '{field}'", j + 1))
            })?;
            data.push(v);
        }
        t += 1;
    }
    if t == 0 {
        return Err(Error::Format("no records".into()));
    }
    TensorTimeSeries::new(vec![rows, cols], t, data)
}

/// Writes a series as CSV, one record per time slice in vec order.
pub fn write_csv_series_to<W: Write>(x: &TensorTimeSeries, w: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for t in 0..x.len() {
        writer.write_record(x.slice(t).iter().map(|v| format!("{v:?}")))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv_series(x: &TensorTimeSeries, path: impl AsRef<Path>) -> Result<()> {
    write_csv_series_to(x, File::create(path)?)
}

/// Row-major nested representation of a matrix.
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::shape("ragged matrix rows"));
    }
    Ok(Matrix::from_fn(n, c, |i, j| rows[i][j]))
}

/// JSON document written by `cpfactor fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub dims: Vec<usize>,
    pub r: usize,
    pub h: usize,
    /// One `d_k x r` matrix per mode, as rows.
    pub loadings: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<f64>,
    pub factors: Vec<Vec<f64>>,
    pub lambda_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
    pub explained_variability: f64,
    pub seconds: f64,
}

impl FitReport {
    pub fn new(fit: &FitResult, dims: &[usize], h: usize, explained_variability: f64, seconds: f64) -> Self {
        FitReport {
            method: fit.method,
            dims: dims.to_vec(),
            r: fit.rank(),
            h,
            loadings: fit.loadings.iter().map(matrix_to_rows).collect(),
            weights: fit.weights.clone(),
            factors: fit.factors.clone(),
            lambda_hat: fit.lambda_hat.clone(),
            iterations: fit.iterations,
            converged: fit.converged,
            trace: fit.trace.clone(),
            warnings: fit.warnings.clone(),
            explained_variability,
            seconds,
        }
    }

    /// The library result this report was built from.
    pub fn to_fit(&self) -> Result<FitResult> {
        Ok(FitResult {
            method: self.method,
            loadings: self
                .loadings
                .iter()
                .map(|m| matrix_from_rows(m))
                .collect::<Result<Vec<_>>>()?,
            weights: self.weights.clone(),
            factors: self.factors.clone(),
            lambda_hat: self.lambda_hat.clone(),
            iterations: self.iterations,
            converged: self.converged,
            trace: self.trace.clone(),
            warnings: self.warnings.clone(),
        })
    }
}

/// Ground-truth JSON document written by `cpfactor simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub config: SimConfig,
    pub weights: Vec<f64>,
    pub loadings: Vec<Vec<Vec<f64>>>,
    pub factors: Vec<Vec<f64>>,
}

impl ModelReport {
    pub fn new(config: &SimConfig, model: &CpFactorModel) -> Self {
        ModelReport {
            config: config.clone(),
            weights: model.weights().to_vec(),
            loadings: model.loadings().iter().map(matrix_to_rows).collect(),
            factors: model.factors().map(<[_]>::to_vec).unwrap_or_default(),
        }
    }

    pub fn to_model(&self) -> Result<CpFactorModel> {
        let loadings = self
            .loadings
            .iter()
            .map(|m| matrix_from_rows(m))
            .collect::<Result<Vec<_>>>()?;
        let factors = (!self.factors.is_empty()).then(|| self.factors.clone());
        CpFactorModel::new(self.weights.clone(), loadings, factors)
    }
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
