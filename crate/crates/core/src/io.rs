//! CSV formats.
//!
//! Every input file has a header row. Numbers may use plain or scientific
//! notation; output uses 17 significant digits so values survive a round
//! trip bit for bit. Writes go to a temporary file in the destination
//! directory that is renamed into place, so a failed run never leaves a
//! partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor_model::{AlphaEstimates, NullSampleSet, ReturnPanel};

/// Formats `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` atomically.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// A header plus rows of raw cells with their 1-based line numbers.
struct RawTable {
    path: String,
    headers: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl RawTable {
    fn read(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(&name, &e))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(&name, &e))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.iter().all(String::is_empty) {
            return Err(Error::Csv {
                path: name,
                line: 1,
                message: "missing header row".into(),
            });
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(&name, &e))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if rec.len() != headers.len() {
                return Err(Error::Csv {
                    path: name,
                    line,
                    message: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        if rows.is_empty() {
            return Err(Error::Csv {
                path: name,
                line: 2,
                message: "no data rows".into(),
            });
        }
        Ok(Self {
            path: name,
            headers,
            rows,
        })
    }

    fn number(&self, line: u64, col: usize, cell: &str) -> Result<f64> {
        let err = |message: String| Error::Csv {
            path: self.path.clone(),
            line,
            message,
        };
        let v: f64 = cell
            .parse()
            .map_err(|_| err(format!("column '{}': '{cell}' is not a number", self.headers[col])))?;
        if !v.is_finite() {
            return Err(err(format!("column '{}': non-finite value '{cell}'", self.headers[col])));
        }
        Ok(v)
    }

    /// All cells as numbers, row by row.
    fn numeric_rows(&self) -> Result<Vec<Vec<f64>>> {
        self.rows
            .iter()
            .map(|(line, cells)| {
                cells
                    .iter()
                    .enumerate()
                    .map(|(c, s)| self.number(*line, c, s))
                    .collect()
            })
            .collect()
    }
}

fn csv_error(path: &str, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{path}: {io}"))),
        _ => Error::Csv {
            path: path.to_string(),
            line,
            message: e.to_string(),
        },
    }
}

/// Observed t-values with optional hypothesis names.
#[derive(Debug, Clone, PartialEq)]
pub struct TvalueFile {
    pub names: Option<Vec<String>>,
    pub estimates: AlphaEstimates,
}

/// Loads an alphas file: one t-value column, plus an optional `name` column
/// and an optional `df` column (constant across rows). Without a `df`
/// column, `default_df` is required.
pub fn load_tvalues(path: &Path, default_df: Option<f64>) -> Result<TvalueFile> {
    let table = RawTable::read(path)?;
    let find = |key: &str| table.headers.iter().position(|h| h.eq_ignore_ascii_case(key));
    let name_col = find("name");
    let df_col = find("df");
    let value_cols: Vec<usize> = (0..table.headers.len())
        .filter(|&c| Some(c) != name_col && Some(c) != df_col)
        .collect();
    if value_cols.len() != 1 {
        return Err(Error::Csv {
            path: table.path,
            line: 1,
            message: format!("expected one t-value column besides 'name' and 'df', found {}", value_cols.len()),
        });
    }
    let vc = value_cols[0];
    let mut values = Vec::with_capacity(table.rows.len());
    let mut df = None;
    for (line, cells) in &table.rows {
        values.push(table.number(*line, vc, &cells[vc])?);
        if let Some(dc) = df_col {
            let d = table.number(*line, dc, &cells[dc])?;
            match df {
                None => df = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::Csv {
                        path: table.path.clone(),
                        line: *line,
                        message: format!("df {d} differs from {prev} on earlier rows"),
                    })
                }
                _ => {}
            }
        }
    }
    let df = df
        .or(default_df)
        .ok_or_else(|| Error::invalid(format!("{}: no 'df' column and no default df given", table.path)))?;
    let names = name_col.map(|c| table.rows.iter().map(|(_, cells)| cells[c].clone()).collect());
    Ok(TvalueFile {
        names,
        estimates: AlphaEstimates::new(values, df)?,
    })
}

/// Loads a null-draw file: rows are draws, columns are hypotheses.
pub fn load_nulls(path: &Path, df: f64) -> Result<NullSampleSet> {
    let table = RawTable::read(path)?;
    NullSampleSet::from_rows(table.numeric_rows()?, df)
}

/// Errors unless the null draws cover the same hypotheses as the t-values.
pub fn check_matching(alphas: &AlphaEstimates, nulls: &NullSampleSet) -> Result<()> {
    if alphas.len() != nulls.num_hypotheses() {
        return Err(Error::invalid(format!(
            "alphas have {} hypotheses but null draws have {} columns",
            alphas.len(),
            nulls.num_hypotheses()
        )));
    }
    Ok(())
}

/// Loads a numeric table and its header.
pub fn load_numeric(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let table = RawTable::read(path)?;
    let rows = table.numeric_rows()?;
    let m = DMatrix::from_fn(rows.len(), table.headers.len(), |r, c| rows[r][c]);
    Ok((table.headers, m))
}

/// Loads returns stored with time steps as rows and portfolios as columns.
pub fn load_returns(path: &Path) -> Result<(Vec<String>, ReturnPanel)> {
    let (headers, m) = load_numeric(path)?;
    Ok((headers, ReturnPanel::new(m.transpose())?))
}

/// Serializes a numeric table with the given header.
pub fn table_csv(headers: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = headers.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn nulls_csv(nulls: &NullSampleSet) -> String {
    let headers: Vec<String> = (1..=nulls.num_hypotheses()).map(|i| format!("h{i}")).collect();
    table_csv(&headers, nulls.rows().map(<[f64]>::to_vec))
}

pub fn tvalues_csv(alphas: &AlphaEstimates, names: Option<&[String]>) -> String {
    let mut s = String::new();
    match names {
        Some(_) => s.push_str("name,t_value,df\n"),
        None => s.push_str("t_value,df\n"),
    }
    for (i, &v) in alphas.values().iter().enumerate() {
        if let Some(n) = names {
            write!(s, "{},", n[i]).unwrap();
        }
        writeln!(s, "{},{}", fmt_f64(v), alphas.df()).unwrap();
    }
    s
}

pub fn write_nulls(path: &Path, nulls: &NullSampleSet) -> Result<()> {
    atomic_write(path, nulls_csv(nulls).as_bytes())
}

pub fn write_tvalues(path: &Path, alphas: &AlphaEstimates, names: Option<&[String]>) -> Result<()> {
    atomic_write(path, tvalues_csv(alphas, names).as_bytes())
}
