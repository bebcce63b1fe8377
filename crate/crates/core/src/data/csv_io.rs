//! CSV ingestion and emission. Comma-separated UTF-8 with a header row; the
//! label column is named `label`, with optional `entity` and `mission`
//! columns. Floats are written in scientific notation with 17 significant
//! digits, which round-trips `f64` exactly.

use std::path::Path;

use ndarray::Array2;

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LABEL_COL: &str = "label";
const ENTITY_COL: &str = "entity";
const MISSION_COL: &str = "mission";

/// Loads a dataset. Feature columns are every column not named `label`,
/// `entity`, or `mission`, kept in file order.
pub fn load_csv<F: Scalar>(path: impl AsRef<Path>) -> Result<TabularDataset<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { row: 0, col: 0, msg: format!("unreadable header: {e}") })?
        .clone();

    let mut label_idx = None;
    let mut entity_idx = None;
    let mut mission_idx = None;
    let mut feature_cols: Vec<(usize, String)> = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        match name {
            LABEL_COL => label_idx = Some(i),
            ENTITY_COL => entity_idx = Some(i),
            MISSION_COL => mission_idx = Some(i),
            _ => feature_cols.push((i, name.to_string())),
        }
    }
    let label_idx = label_idx.ok_or(Error::Parse {
        row: 0,
        col: 0,
        msg: format!("missing required '{LABEL_COL}' column"),
    })?;

    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut entities: Vec<u32> = Vec::new();
    let mut missions: Vec<u32> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            col: 0,
            msg: format!("unreadable record: {e}"),
        })?;
        let mut row = Vec::with_capacity(feature_cols.len());
        for (col, _) in &feature_cols {
            let cell = record.get(*col).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col: *col,
                msg: format!("non-numeric cell '{cell}'"),
            })?;
            row.push(F::cast(value));
        }
        let label_cell = record.get(label_idx).unwrap_or("");
        let label: u32 = label_cell.trim().parse().map_err(|_| Error::Parse {
            row: row_no,
            col: label_idx,
            msg: format!("unknown label '{label_cell}' (expected a non-negative integer)"),
        })?;
        labels.push(label);
        if let Some(idx) = entity_idx {
            let cell = record.get(idx).unwrap_or("");
            entities.push(cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col: idx,
                msg: format!("non-integer entity '{cell}'"),
            })?);
        }
        if let Some(idx) = mission_idx {
            let cell = record.get(idx).unwrap_or("");
            missions.push(cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col: idx,
                msg: format!("non-integer mission '{cell}'"),
            })?);
        }
        rows.push(row);
    }

    let n = rows.len();
    let d = feature_cols.len();
    let mut features = Array2::<F>::zeros((n, d));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    TabularDataset::with_metadata(
        features,
        labels,
        Some(feature_cols.into_iter().map(|(_, name)| name).collect()),
        entity_idx.map(|_| entities),
        mission_idx.map(|_| missions),
    )
}

/// Saves a dataset; `load_csv(save_csv(d))` reproduces `d` exactly.
pub fn save_csv<F: Scalar>(data: &TabularDataset<F>, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path.as_ref())?;

    let mut header: Vec<String> = match data.feature_names() {
        Some(names) => names.to_vec(),
        None => (0..data.n_features()).map(|j| format!("f{j}")).collect(),
    };
    header.push(LABEL_COL.to_string());
    if data.entities().is_some() {
        header.push(ENTITY_COL.to_string());
    }
    if data.missions().is_some() {
        header.push(MISSION_COL.to_string());
    }
    writer
        .write_record(&header)
        .map_err(|e| Error::format(format!("csv write failed: {e}")))?;

    for i in 0..data.n_rows() {
        let mut record: Vec<String> = data
            .row(i)
            .iter()
            .map(|&v| format!("{:.17e}", v.as_f64()))
            .collect();
        record.push(data.labels()[i].to_string());
        if let Some(e) = data.entities() {
            record.push(e[i].to_string());
        }
        if let Some(m) = data.missions() {
            record.push(m[i].to_string());
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::format(format!("csv write failed: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = TabularDataset::with_metadata(
            array![[1.25, -3.0e-7], [0.1, 9.999999999], [2.0 / 3.0, 1e20]],
            vec![0, 1, 2],
            Some(vec!["a".into(), "b".into()]),
            Some(vec![1, 1, 2]),
            None,
        )
        .unwrap();
        save_csv(&d, &path).unwrap();
        let back: TabularDataset<f64> = load_csv(&path).unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.entities(), d.entities());
        assert_eq!(back.feature_names(), d.feature_names());
    }

    #[test]
    fn missing_label_column_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n").unwrap();
        match load_csv::<f64>(&path) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("label")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_only_file_loads_as_empty_dataset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,label\n").unwrap();
        let d: TabularDataset<f64> = load_csv(&path).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.n_features(), 2);
    }

    #[test]
    fn non_numeric_cell_reports_location() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,label\n1.0,2.0,0\n1.0,oops,1\n").unwrap();
        match load_csv::<f64>(&path) {
            Err(Error::Parse { row, col, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(col, 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,label\n1.0,2.0,0\n1.0,0\n").unwrap();
        assert!(matches!(load_csv::<f64>(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_label_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,label\n1.0,-3\n").unwrap();
        assert!(matches!(load_csv::<f64>(&path), Err(Error::Parse { row: 0, .. })));
    }
}
