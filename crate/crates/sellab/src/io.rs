//! CSV ingestion and emission of selection datasets.
//!
//! Files are UTF-8 with a header row and `.` decimals. `D` is `0`/`1`; `Y` is
//! `0`/`1` where `D = 1` and empty where `D = 0`. Row numbers in errors count
//! data rows from 1 (the header is not counted).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use sellab_core::linalg::Matrix;
use sellab_core::Dataset;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {reason}")]
    Schema { row: usize, column: String, reason: String },

    #[error("column `{0}` has zero variance and cannot be standardized")]
    Constant(String),

    #[error(transparent)]
    Core(#[from] sellab_core::Error),
}

/// Column roles of a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub selection_normalized: String,
    pub selection_free: Vec<String>,
    pub outcome_normalized: String,
    pub outcome_free: Vec<String>,
    pub d: String,
    pub y: String,
    /// Multiplies the normalized selection column, `±1`.
    pub selection_sign: f64,
    /// Multiplies the normalized outcome column, `±1`.
    pub outcome_sign: f64,
}

impl CsvSchema {
    /// The layout written by `simulate`: `z0, z1.., x0, x1.., d, y`.
    pub fn simulated(p_z: usize, p_x: usize) -> Self {
        Self {
            selection_normalized: "z0".into(),
            selection_free: (1..=p_z).map(|j| format!("z{j}")).collect(),
            outcome_normalized: "x0".into(),
            outcome_free: (1..=p_x).map(|j| format!("x{j}")).collect(),
            d: "d".into(),
            y: "y".into(),
            selection_sign: 1.0,
            outcome_sign: 1.0,
        }
    }

    /// Reads the simulated layout off a header: `z<k>` and `x<k>` columns
    /// with `k ≥ 1` are free regressors, in header order.
    pub fn infer(header: &[String]) -> Self {
        let numbered = |prefix: char| -> Vec<String> {
            header
                .iter()
                .filter(|h| {
                    let mut c = h.chars();
                    c.next() == Some(prefix)
                        && c.as_str().parse::<usize>().is_ok_and(|k| k >= 1)
                        && !c.as_str().starts_with('0')
                })
                .cloned()
                .collect()
        };
        Self {
            selection_free: numbered('z'),
            outcome_free: numbered('x'),
            ..Self::simulated(0, 0)
        }
    }

    fn validate(&self) -> Result<(), IoError> {
        for (what, s) in [("selection", self.selection_sign), ("outcome", self.outcome_sign)] {
            if s != 1.0 && s != -1.0 {
                return Err(IoError::Schema {
                    row: 0,
                    column: what.into(),
                    reason: format!("normalization sign must be 1 or -1, got {s}"),
                });
            }
        }
        Ok(())
    }
}

/// Load-time transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Free regressors to mean 0 and (population) variance 1.
    pub standardize: bool,
    /// `Y` holds a continuous outcome, binarized at its median over the
    /// selected rows.
    pub binarize_outcome: bool,
}

pub fn read_header(path: &Path) -> Result<Vec<String>, IoError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}

pub fn load_csv(path: &Path, schema: &CsvSchema, opts: LoadOptions) -> Result<Dataset, IoError> {
    load_csv_from(open(path)?, schema, opts)
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn column(header: &csv::StringRecord, name: &str) -> Result<usize, IoError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IoError::MissingColumn(name.into()))
}

fn parse_real(row: usize, column: &str, cell: &str) -> Result<f64, IoError> {
    let v: f64 = cell.trim().parse().map_err(|_| IoError::Schema {
        row,
        column: column.into(),
        reason: format!("`{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IoError::Schema {
            row,
            column: column.into(),
            reason: "value is not finite".into(),
        });
    }
    Ok(v)
}

fn parse_binary(row: usize, column: &str, cell: &str) -> Result<bool, IoError> {
    match cell.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(IoError::Schema {
            row,
            column: column.into(),
            reason: format!("`{other}` is not binary (0/1)"),
        }),
    }
}

pub fn load_csv_from<R: Read>(reader: R, schema: &CsvSchema, opts: LoadOptions) -> Result<Dataset, IoError> {
    schema.validate()?;
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let zn = column(&header, &schema.selection_normalized)?;
    let xn = column(&header, &schema.outcome_normalized)?;
    let zf = schema.selection_free.iter().map(|c| column(&header, c)).collect::<Result<Vec<_>, _>>()?;
    let xf = schema.outcome_free.iter().map(|c| column(&header, c)).collect::<Result<Vec<_>, _>>()?;
    let dc = column(&header, &schema.d)?;
    let yc = column(&header, &schema.y)?;

    let (mut z0, mut z, mut x0, mut x) = (vec![], vec![], vec![], vec![]);
    let (mut d, mut y_raw) = (vec![], vec![]);
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        z0.push(schema.selection_sign * parse_real(row, &schema.selection_normalized, cell(zn))?);
        for (&c, name) in zf.iter().zip(&schema.selection_free) {
            z.push(parse_real(row, name, cell(c))?);
        }
        x0.push(schema.outcome_sign * parse_real(row, &schema.outcome_normalized, cell(xn))?);
        for (&c, name) in xf.iter().zip(&schema.outcome_free) {
            x.push(parse_real(row, name, cell(c))?);
        }
        let di = parse_binary(row, &schema.d, cell(dc))?;
        let yc_cell = cell(yc).trim();
        let yi = match (di, yc_cell.is_empty()) {
            (true, true) => {
                return Err(IoError::Schema {
                    row,
                    column: schema.y.clone(),
                    reason: "outcome missing where D = 1".into(),
                })
            }
            (false, false) => {
                return Err(IoError::Schema {
                    row,
                    column: schema.y.clone(),
                    reason: "outcome present where D = 0".into(),
                })
            }
            (false, true) => None,
            (true, false) if opts.binarize_outcome => Some(parse_real(row, &schema.y, yc_cell)?),
            (true, false) => Some(if parse_binary(row, &schema.y, yc_cell)? { 1.0 } else { 0.0 }),
        };
        d.push(di);
        y_raw.push(yi);
    }
    let n = d.len();
    let y = if opts.binarize_outcome {
        binarize_at_median(&y_raw)
    } else {
        y_raw.iter().map(|v| v.map(|v| v == 1.0)).collect()
    };
    let (pz, px) = (zf.len(), xf.len());
    if opts.standardize && n > 0 {
        standardize_columns(&mut z, pz, &schema.selection_free)?;
        standardize_columns(&mut x, px, &schema.outcome_free)?;
    }
    Ok(Dataset::new(
        z0,
        Matrix::from_row_major(n, pz, z)?,
        x0,
        Matrix::from_row_major(n, px, x)?,
        d,
        y,
    )?)
}

/// In-place standardization of the columns of a row-major `n × p` block.
fn standardize_columns(data: &mut [f64], p: usize, names: &[String]) -> Result<(), IoError> {
    if p == 0 {
        return Ok(());
    }
    let n = data.len() / p;
    for j in 0..p {
        let mean = (0..n).map(|i| data[i * p + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (data[i * p + j] - mean) * (data[i * p + j] - mean)).sum::<f64>() / n as f64;
        if !(var > 0.0) {
            return Err(IoError::Constant(names[j].clone()));
        }
        let sd = var.sqrt();
        for i in 0..n {
            data[i * p + j] = (data[i * p + j] - mean) / sd;
        }
    }
    Ok(())
}

/// `1{y > median}` over the present values; missing stays missing.
pub fn binarize_at_median(values: &[Option<f64>]) -> Vec<Option<bool>> {
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return vec![None; values.len()];
    }
    present.sort_by(f64::total_cmp);
    let k = present.len();
    let median = if k % 2 == 1 {
        present[k / 2]
    } else {
        0.5 * (present[k / 2 - 1] + present[k / 2])
    };
    values.iter().map(|v| v.map(|v| v > median)).collect()
}

/// Writes `data` under the column names of `schema`. Normalized columns are
/// written as stored, i.e. after any sign flip applied at load time.
pub fn write_csv(path: &Path, data: &Dataset, schema: &CsvSchema) -> Result<(), IoError> {
    let file = File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    write_csv_to(file, data, schema)
}

pub fn write_csv_to<W: Write>(writer: W, data: &Dataset, schema: &CsvSchema) -> Result<(), IoError> {
    if schema.selection_free.len() != data.p_z() || schema.outcome_free.len() != data.p_x() {
        return Err(sellab_core::Error::DimensionMismatch {
            what: "schema free columns",
            expected: data.p_z() + data.p_x(),
            got: schema.selection_free.len() + schema.outcome_free.len(),
        }
        .into());
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.selection_normalized.as_str()];
    header.extend(schema.selection_free.iter().map(String::as_str));
    header.push(&schema.outcome_normalized);
    header.extend(schema.outcome_free.iter().map(String::as_str));
    header.extend([schema.d.as_str(), schema.y.as_str()]);
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        rec.clear();
        // shortest representation that parses back to the same value
        rec.push(data.z0()[i].to_string());
        rec.extend(data.z().row(i).iter().map(f64::to_string));
        rec.push(data.x0()[i].to_string());
        rec.extend(data.x().row(i).iter().map(f64::to_string));
        rec.push(if data.d()[i] { "1" } else { "0" }.into());
        rec.push(match data.y()[i] {
            Some(true) => "1".into(),
            Some(false) => "0".into(),
            None => String::new(),
        });
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| IoError::File {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}
