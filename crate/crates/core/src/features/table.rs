use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContextAxis, Normalization, ViewAxis};
use crate::{Error, Result};

/// Flattened feature vectors of one (context, view) pair, one row per user.
///
/// This is the exchange format between featurization and clustering: a CSV
/// whose first column is `user_id` followed by one column per cell label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub user_ids: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.columns.len()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(std::iter::once("user_id").chain(self.columns.iter().map(String::as_str)))?;
        for (user, row) in self.user_ids.iter().zip(&self.rows) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(user.clone());
            rec.extend(row.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses a table; `origin` only labels errors.
    pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let schema = |reason: String| Error::Schema { path: origin.to_path_buf(), reason };
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("user_id") {
            return Err(schema("first column must be user_id".into()));
        }
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut user_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() + 1 {
                return Err(schema(format!("row {} has {} fields, expected {}", i + 1, rec.len(), columns.len() + 1)));
            }
            let row = rec
                .iter()
                .skip(1)
                .zip(&columns)
                .map(|(v, col)| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| schema(format!("row {} field {col:?}: {v:?} is not a finite number", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            user_ids.push(rec[0].to_string());
            rows.push(row);
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = user_ids.iter().find(|u| !seen.insert(*u)) {
            return Err(schema(format!("user {dup:?} appears twice")));
        }
        Ok(Self { user_ids, columns, rows })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetadata {
    pub name: String,
    pub file: String,
    pub context: ContextAxis,
    pub view: ViewAxis,
    pub rows: usize,
    pub cols: usize,
    /// Number of users whose matrix was all zero and skipped normalization.
    pub zero_matrices: usize,
}

/// JSON sidecar written next to the per-pair CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub normalization: Normalization,
    pub user_count: usize,
    pub checkin_count: usize,
    pub skipped_checkins: usize,
    pub pairs: Vec<PairMetadata>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let t = FeatureTable {
            user_ids: vec!["b".into(), "a".into()],
            columns: vec!["h0|Food".into(), "h0|Event".into()],
            rows: vec![vec![0.1, 1.0 / 3.0], vec![0.0, 2.5e-17]],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("user_id,h0|Food,h0|Event\n"));
        assert_eq!(FeatureTable::read_csv(&buf[..], Path::new("t.csv")).unwrap(), t);
    }

    #[test]
    fn schema_errors_name_the_problem() {
        let err = FeatureTable::read_csv("uid,a\nx,1\n".as_bytes(), Path::new("f.csv")).unwrap_err();
        assert!(err.to_string().contains("f.csv") && err.to_string().contains("user_id"));
        let err = FeatureTable::read_csv("user_id,a\nx,abc\n".as_bytes(), Path::new("f.csv")).unwrap_err();
        assert!(err.to_string().contains("\"a\""), "{err}");
        assert!(FeatureTable::read_csv("user_id,a\nx,1\nx,2\n".as_bytes(), Path::new("f.csv")).is_err());
    }
}
