//! External score files: `id,p_s1` (probability of trial membership) or
//! `id,odds` (nominal odds directly). `id` is the 0-based row index into the
//! dataset the scores refer to; every row must appear exactly once.

use std::io::Read;
use std::path::Path;

use super::{OddsTable, Provenance};
use crate::error::{Error, Result};

enum Column {
    ProbTrial,
    Odds,
}

pub fn load_external_scores(path: impl AsRef<Path>, n_rows: usize) -> Result<OddsTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::ScoreFile(format!("{}: {e}", path.display())))?;
    parse_external_scores(file, n_rows)
}

pub fn parse_external_scores(reader: impl Read, n_rows: usize) -> Result<OddsTable> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::ScoreFile(e.to_string()))?
        .clone();
    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| Error::ScoreFile("missing `id` column".into()))?;
    let (value_col, kind) = if let Some(i) = headers.iter().position(|h| h == "p_s1") {
        (i, Column::ProbTrial)
    } else if let Some(i) = headers.iter().position(|h| h == "odds") {
        (i, Column::Odds)
    } else {
        return Err(Error::ScoreFile(
            "expected a `p_s1` or `odds` column".into(),
        ));
    };

    let mut odds: Vec<Option<f64>> = vec![None; n_rows];
    for (line, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::ScoreFile(e.to_string()))?;
        let field = |col: usize| {
            record
                .get(col)
                .ok_or_else(|| Error::ScoreFile(format!("record {line} is short")))
        };
        let id: usize = field(id_col)?
            .parse()
            .map_err(|e| Error::ScoreFile(format!("record {line}: bad id: {e}")))?;
        let value: f64 = field(value_col)?
            .parse()
            .map_err(|e| Error::ScoreFile(format!("record {line}: bad value: {e}")))?;
        let o = match kind {
            Column::ProbTrial => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(Error::ScoreFile(format!(
                        "record {line}: p_s1 = {value} must lie strictly inside (0, 1)"
                    )));
                }
                (1.0 - value) / value
            }
            Column::Odds => value,
        };
        if !(o > 0.0) || !o.is_finite() {
            return Err(Error::InvalidOdds { row: id, value: o });
        }
        let slot = odds
            .get_mut(id)
            .ok_or_else(|| Error::ScoreFile(format!("id {id} out of range 0..{n_rows}")))?;
        if slot.replace(o).is_some() {
            return Err(Error::ScoreFile(format!("duplicate id {id}")));
        }
    }
    let odds = odds
        .into_iter()
        .enumerate()
        .map(|(i, o)| o.ok_or_else(|| Error::ScoreFile(format!("missing id {i}"))))
        .collect::<Result<Vec<_>>>()?;
    OddsTable::new(odds, Provenance::External)
}
