//! Delimited feature/response tables.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub feature_names: Vec<String>,
    pub response_name: String,
    /// Row-major, `rows x feature_names.len()`.
    pub features: Vec<f64>,
    pub responses: Vec<f64>,
    pub row_names: Option<Vec<String>>,
}

impl TabularDataset {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dimension();
        &self.features[i * d..(i + 1) * d]
    }
}

fn detect_delimiter(path: &Path) -> Result<u8> {
    let mut header = String::new();
    BufReader::new(File::open(path)?).read_line(&mut header)?;
    Ok(if header.contains('\t') { b'\t' } else { b',' })
}

fn tab_err(msg: impl Into<String>) -> Error {
    Error::Tabular(msg.into())
}

/// Reads a header-row table. Feature columns default to every column other
/// than the response and the optional name column.
pub fn load_tabular(
    path: &Path,
    feature_columns: Option<&[String]>,
    response_column: &str,
    name_column: Option<&str>,
) -> Result<TabularDataset> {
    let delimiter = detect_delimiter(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| tab_err(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| tab_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| tab_err(format!("missing column `{name}`")))
    };
    let response_idx = find(response_column)?;
    let name_idx = name_column.map(find).transpose()?;
    let feature_names: Vec<String> = match feature_columns {
        Some(cols) => cols.to_vec(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != response_idx && Some(*i) != name_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(tab_err("no feature columns"));
    }
    let feature_idx = feature_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut responses = Vec::new();
    let mut row_names = name_idx.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| tab_err(format!("row {row}: {e}")))?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            if raw.is_empty() {
                return Err(tab_err(format!("row {row}: missing value in column `{}`", headers[col])));
            }
            let v: f64 = raw.parse().map_err(|_| {
                tab_err(format!(
                    "row {row}, column `{}`: non-numeric value `{raw}`",
                    headers[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(tab_err(format!("row {row}, column `{}`: non-finite value", headers[col])));
            }
            Ok(v)
        };
        for &c in &feature_idx {
            features.push(cell(c)?);
        }
        responses.push(cell(response_idx)?);
        if let (Some(names), Some(i)) = (row_names.as_mut(), name_idx) {
            names.push(record.get(i).unwrap_or("").to_string());
        }
    }
    if responses.len() < 2 {
        return Err(tab_err(format!("need at least 2 rows, found {}", responses.len())));
    }
    Ok(TabularDataset {
        feature_names,
        response_name: response_column.to_string(),
        features,
        responses,
        row_names,
    })
}

/// Writes a comma-delimited table readable by [`load_tabular`]. Values use
/// the shortest round-trip representation.
pub fn write_tabular(path: &Path, data: &TabularDataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header: Vec<&str> = Vec::new();
    if data.row_names.is_some() {
        header.push("name");
    }
    header.extend(data.feature_names.iter().map(String::as_str));
    header.push(&data.response_name);
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        let mut cells: Vec<String> = Vec::with_capacity(header.len());
        if let Some(names) = &data.row_names {
            cells.push(names[i].clone());
        }
        cells.extend(data.row(i).iter().map(|v| v.to_string()));
        cells.push(data.responses[i].to_string());
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_small_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x1,x2,y\n0.1,0.2,1.0\n0.3,0.4,2.0\n0.5,0.6,3.0\n");
        let d = load_tabular(&p, None, "y", None).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dimension(), 2);
        assert_eq!(d.row(1), &[0.3, 0.4]);
        assert_eq!(d.responses, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn tab_delimited_with_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "gene\tf\tscore\nA\t1\t0.5\nB\t2\t0.25\n");
        let d = load_tabular(&p, None, "score", Some("gene")).unwrap();
        assert_eq!(d.feature_names, vec!["f".to_string()]);
        assert_eq!(d.row_names, Some(vec!["A".into(), "B".into()]));
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x1,x2,y\n0.1,0.2,1.0\n0.3,abc,2.0\n");
        let err = load_tabular(&p, None, "y", None).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("x2"), "{err}");
    }

    #[test]
    fn missing_value_and_column_and_short_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x1,y\n0.1,1.0\n,2.0\n");
        let err = load_tabular(&p, None, "y", None).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("missing"), "{err}");
        let p = write(&dir, "b.csv", "x1,y\n0.1,1.0\n0.2,2.0\n");
        assert!(load_tabular(&p, None, "z", None).unwrap_err().to_string().contains("`z`"));
        let p = write(&dir, "c.csv", "x1,y\n0.1,1.0\n");
        assert!(load_tabular(&p, None, "y", None).is_err());
        assert!(load_tabular(&dir.path().join("nope.csv"), None, "y", None).is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = TabularDataset {
            feature_names: vec!["a".into(), "b".into()],
            response_name: "y".into(),
            features: vec![0.1, 1.0 / 3.0, -2.5e-17, std::f64::consts::PI],
            responses: vec![1e300, -0.000_123_456_789_012_345_6],
            row_names: Some(vec!["g1".into(), "g2".into()]),
        };
        let p = dir.path().join("rt.csv");
        write_tabular(&p, &data).unwrap();
        let back = load_tabular(&p, Some(&data.feature_names), "y", Some("name")).unwrap();
        assert_eq!(back, data);
    }
}
