//! CSV and JSON helpers for curve matrices, truth files and segment means.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{validate_csv_matrix, ChangePointSet, FunctionalSequence};
use crate::simlab::{LabeledDataset, SimulationSpec};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a headerless numeric CSV; with `grid_header` the first row holds grid coordinates.
pub fn read_sequence<R: Read>(reader: R, grid_header: bool) -> Result<FunctionalSequence> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}, column {}: {f:?} is not a number", i + 1, j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let grid = if grid_header {
        if rows.is_empty() {
            return Err(Error::Parse("missing grid header row".into()));
        }
        Some(rows.remove(0))
    } else {
        None
    };
    validate_csv_matrix(&rows, grid)
}

/// Writes a matrix as CSV, optionally preceded by a header row.
pub fn write_matrix<W: Write>(writer: W, header: Option<&[f64]>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    if let Some(h) = header {
        w.write_record(h.iter().map(|&x| fmt_f64(x)))?;
    }
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sequence<W: Write>(writer: W, seq: &FunctionalSequence, grid_header: bool) -> Result<()> {
    let header = grid_header.then(|| seq.grid().points());
    write_matrix(writer, header, seq.values())
}

/// Truth file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub change_points: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SimulationSpec>,
}

impl TruthFile {
    pub fn from_dataset(ds: &LabeledDataset, spec: &SimulationSpec) -> Self {
        Self {
            change_points: ds.truth.indices().to_vec(),
            spec: Some(spec.clone()),
        }
    }

    pub fn change_point_set(&self) -> Result<ChangePointSet> {
        ChangePointSet::new(self.change_points.clone())
    }
}

/// One row per segment: start, end, then the segment mean at every grid point.
pub fn segment_means(seq: &FunctionalSequence, change_points: &ChangePointSet) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    let t_len = seq.len();
    if let Some(&last) = change_points.indices().last() {
        if last > t_len {
            return Err(Error::IndexOutOfRange { index: last, len: t_len });
        }
    }
    Ok(change_points
        .segments(t_len)
        .into_iter()
        .map(|(start, end)| {
            let rows = seq.values().rows(start - 1, end + 1 - start);
            let means = rows.column_iter().map(|c| c.mean()).collect();
            (start, end, means)
        })
        .collect())
}

pub fn write_segment_means<W: Write>(writer: W, rows: &[(usize, usize, Vec<f64>)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for (start, end, means) in rows {
        let mut rec = vec![start.to_string(), end.to_string()];
        rec.extend(means.iter().map(|&x| fmt_f64(x)));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
