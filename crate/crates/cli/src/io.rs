//! CSV readers and writers for the file schemas, and atomic output writes.
//!
//! * target: `x0,...,x{d-1}`
//! * trial: `x0,...,x{d-1},a,l`
//! * pooled labeled: `x0,...,x{d-1},s` (`s = 1` for trial rows)
//! * policy table: `p0,...,p{K-1}`, one row per trial row

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use certlim::propensity::LabeledPool;
use certlim::{CovariateVector, TargetCovariates, TrialDataset, TrialSample};
use serde::Serialize;

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .with_context(|| format!("reading {}", path.display()))?;
    if rows.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    Ok(Table { headers, rows })
}

/// Indices of the `x0..x{d-1}` columns, which must be numbered consecutively.
fn covariate_columns(headers: &[String], path: &Path) -> Result<Vec<usize>> {
    let mut cols = Vec::new();
    for j in 0.. {
        match headers.iter().position(|h| *h == format!("x{j}")) {
            Some(i) => cols.push(i),
            None => break,
        }
    }
    let stray = headers
        .iter()
        .filter(|h| h.starts_with('x') && h[1..].parse::<usize>().is_ok())
        .count();
    if cols.is_empty() || stray != cols.len() {
        bail!(
            "{}: expected covariate columns x0, x1, ... numbered without gaps",
            path.display()
        );
    }
    Ok(cols)
}

fn column(headers: &[String], name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("{}: missing `{name}` column", path.display()))
}

fn parse_f64(field: &str, row: usize, path: &Path) -> Result<f64> {
    field
        .parse()
        .with_context(|| format!("{} row {row}: `{field}` is not a number", path.display()))
}

fn parse_usize(field: &str, row: usize, path: &Path) -> Result<usize> {
    field.parse().with_context(|| {
        format!(
            "{} row {row}: `{field}` is not a nonnegative integer",
            path.display()
        )
    })
}

fn covariates(
    row: &[String],
    cols: &[usize],
    i: usize,
    path: &Path,
) -> Result<CovariateVector<f64>> {
    cols.iter()
        .map(|&c| parse_f64(&row[c], i, path))
        .collect::<Result<Vec<_>>>()
        .map(CovariateVector::new)
}

pub fn read_covariates(path: &Path) -> Result<Vec<CovariateVector<f64>>> {
    let table = read_table(path)?;
    let cols = covariate_columns(&table.headers, path)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| covariates(row, &cols, i, path))
        .collect()
}

pub fn read_target(path: &Path) -> Result<TargetCovariates<f64>> {
    Ok(TargetCovariates::new(read_covariates(path)?)?)
}

/// Reads a trial file; `K` is taken from the design.
pub fn read_trial(path: &Path, k_actions: usize) -> Result<TrialDataset<f64>> {
    let table = read_table(path)?;
    let cols = covariate_columns(&table.headers, path)?;
    let a_col = column(&table.headers, "a", path)?;
    let l_col = column(&table.headers, "l", path)?;
    let samples = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            Ok(TrialSample::new(
                covariates(row, &cols, i, path)?,
                parse_usize(&row[a_col], i, path)?,
                parse_f64(&row[l_col], i, path)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialDataset::new(samples, k_actions)?)
}

pub fn read_pool(path: &Path) -> Result<LabeledPool> {
    let table = read_table(path)?;
    let cols = covariate_columns(&table.headers, path)?;
    let s_col = column(&table.headers, "s", path)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        rows.push(covariates(row, &cols, i, path)?);
        labels.push(match row[s_col].as_str() {
            "0" => 0,
            "1" => 1,
            other => bail!("{} row {i}: label `{other}` must be 0 or 1", path.display()),
        });
    }
    Ok(LabeledPool::new(rows, labels)?)
}

pub fn read_policy_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let table = read_table(path)?;
    let mut cols = Vec::new();
    for k in 0.. {
        match table.headers.iter().position(|h| *h == format!("p{k}")) {
            Some(i) => cols.push(i),
            None => break,
        }
    }
    if cols.is_empty() {
        bail!("{}: expected columns p0, p1, ...", path.display());
    }
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| cols.iter().map(|&c| parse_f64(&row[c], i, path)).collect())
        .collect()
}

/// Writes `path` through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_csv(path: &Path, headers: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(headers)?;
    for row in rows {
        writer.write_record(row)?;
    }
    write_atomic(path, &writer.into_inner()?)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn covariate_headers(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("x{j}")).collect()
}

pub fn write_target(path: &Path, target: &TargetCovariates<f64>) -> Result<()> {
    let rows: Vec<Vec<String>> = target
        .rows()
        .iter()
        .map(|x| x.values().iter().map(|&v| fmt_f64(v)).collect())
        .collect();
    write_csv(path, &covariate_headers(target.dim()), &rows)
}

pub fn write_trial(path: &Path, trial: &TrialDataset<f64>) -> Result<()> {
    let mut headers = covariate_headers(trial.dim());
    headers.extend(["a".to_owned(), "l".to_owned()]);
    let rows: Vec<Vec<String>> = trial
        .samples()
        .iter()
        .map(|s| {
            let mut row: Vec<String> = s.x.values().iter().map(|&v| fmt_f64(v)).collect();
            row.push(s.a.to_string());
            row.push(fmt_f64(s.l));
            row
        })
        .collect();
    write_csv(path, &headers, &rows)
}
