//! File formats: dense matrices (CSV or binary), datasets, labelings and
//! embeddings.
//!
//! Floats are written in Rust's shortest round-trip notation, so a write
//! followed by a read reproduces every value exactly and reruns produce
//! identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk layout of a dense matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    /// Comma-separated rows, no header.
    #[default]
    Csv,
    /// `n` as a little-endian u64, then n² little-endian f64 in row-major
    /// order. Square matrices only.
    Bin,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Bin => "bin",
        }
    }

    /// `Bin` for a `.bin` extension, `Csv` otherwise.
    pub fn guess(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::Bin,
            _ => MatrixFormat::Csv,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_f64(field: &str, row: usize, col: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}, column {col}: not a number: {field:?}")))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn flush<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

pub fn write_matrix(path: impl AsRef<Path>, m: ArrayView2<'_, f64>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Csv => {
            let mut w = csv_writer(path)?;
            for row in m.rows() {
                w.write_record(row.iter().map(|x| x.to_string()))?;
            }
            flush(w, path)
        }
        MatrixFormat::Bin => {
            let (r, c) = m.dim();
            if r != c {
                return Err(Error::Shape {
                    expected: "square matrix for the binary layout".into(),
                    got: format!("{r}×{c}"),
                });
            }
            let mut w = create(path)?;
            let mut buf = Vec::with_capacity(8 * (1 + r * c));
            buf.extend_from_slice(&(r as u64).to_le_bytes());
            for x in m.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<Array2<f64>> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Csv => {
            let mut rd = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(open(path)?);
            let mut data = Vec::new();
            let mut cols = None;
            let mut rows = 0;
            for (i, rec) in rd.records().enumerate() {
                let rec = rec?;
                if *cols.get_or_insert(rec.len()) != rec.len() {
                    return Err(Error::Parse(format!("{}: row {} has {} fields", path.display(), i + 1, rec.len())));
                }
                for (j, f) in rec.iter().enumerate() {
                    data.push(parse_f64(f, i + 1, j + 1)?);
                }
                rows += 1;
            }
            let cols = cols.unwrap_or(0);
            Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Parse(e.to_string()))
        }
        MatrixFormat::Bin => {
            let mut bytes = Vec::new();
            open(path)?
                .read_to_end(&mut bytes)
                .map_err(|e| Error::io(path, e))?;
            if bytes.len() < 8 {
                return Err(Error::Parse(format!("{}: missing size header", path.display())));
            }
            let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
            let want = n
                .checked_mul(n)
                .and_then(|m| m.checked_mul(8))
                .and_then(|m| m.checked_add(8));
            if want != Some(bytes.len()) {
                return Err(Error::Parse(format!(
                    "{}: header says n = {n} but the file has {} bytes",
                    path.display(),
                    bytes.len()
                )));
            }
            let data = bytes[8..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Array2::from_shape_vec((n, n), data).expect("length checked above"))
        }
    }
}

/// Points with optional 1-based labels as read from a dataset CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub points: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

/// Header `x1,…,xd,label`, one sample per row.
pub fn write_dataset(path: impl AsRef<Path>, points: ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != points.nrows() {
        return Err(Error::Shape {
            expected: format!("{} labels", points.nrows()),
            got: labels.len().to_string(),
        });
    }
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (1..=points.ncols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, l) in points.rows().into_iter().zip(labels) {
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        rec.push(l.to_string());
        w.write_record(&rec)?;
    }
    flush(w, path)
}

/// Reads a CSV with a header row. A final column named `label` becomes the
/// labels; every other column is a feature.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<DataTable> {
    let path = path.as_ref();
    let mut rd = csv::ReaderBuilder::new().from_reader(open(path)?);
    let header = rd.headers()?.clone();
    let has_label = header.iter().last().map(|h| h.trim()) == Some("label");
    let d = header.len() - usize::from(has_label);
    if d == 0 {
        return Err(Error::Parse(format!("{}: no feature columns", path.display())));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        for j in 0..d {
            data.push(parse_f64(&rec[j], i + 2, j + 1)?);
        }
        if has_label {
            let f = rec[d].trim();
            labels.push(f.parse().map_err(|_| {
                Error::Parse(format!("row {}: label is not a positive integer: {f:?}", i + 2))
            })?);
        }
        rows += 1;
    }
    Ok(DataTable {
        points: Array2::from_shape_vec((rows, d), data).expect("row lengths checked by csv"),
        labels: has_label.then_some(labels),
    })
}

/// Single `label` column.
pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["label"])?;
    for l in labels {
        w.write_record([l.to_string()])?;
    }
    flush(w, path)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut rd = csv::ReaderBuilder::new().from_reader(open(path)?);
    rd.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let f = rec.get(0).unwrap_or("").trim();
            f.parse()
                .map_err(|_| Error::Parse(format!("row {}: not a label: {f:?}", i + 2)))
        })
        .collect()
}

/// Header `dim_1,…,dim_K` plus `label` when labels are given.
pub fn write_embedding(path: impl AsRef<Path>, coords: ArrayView2<'_, f64>, labels: Option<&[usize]>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (1..=coords.ncols()).map(|j| format!("dim_{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in coords.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    flush(w, path)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Grayscale heatmap, one rect per cell; values are clamped to `[0,1]` with
/// 1 drawn black.
pub fn write_heatmap_svg(path: impl AsRef<Path>, m: ArrayView2<'_, f64>) -> Result<()> {
    const LIMIT: usize = 300;
    let (r, c) = m.dim();
    if r > LIMIT || c > LIMIT {
        return Err(Error::Size {
            n: r.max(c),
            limit: LIMIT,
            hint: "heatmaps draw one element per cell",
        });
    }
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {c} {r}\" shape-rendering=\"crispEdges\">\n",
        c * 2,
        r * 2
    );
    for ((i, j), x) in m.indexed_iter() {
        let g = (255.0 * (1.0 - x.clamp(0.0, 1.0))).round() as u8;
        s.push_str(&format!(
            "<rect x=\"{j}\" y=\"{i}\" width=\"1\" height=\"1\" fill=\"rgb({g},{g},{g})\"/>\n"
        ));
    }
    s.push_str("</svg>\n");
    w.write_all(s.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
