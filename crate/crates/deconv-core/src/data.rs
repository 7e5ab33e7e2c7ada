//! Replicate datasets and their CSV representation.
//!
//! On disk a dataset is a UTF-8, LF-terminated CSV with header
//! `subject_id,replicate_id,w_1,…,w_d` and '.' decimal separators. Rows for
//! one subject need not be contiguous; replicate counts may differ across
//! subjects (the model requires at least 3 per subject).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum replicates per subject required by the model.
pub const MIN_REPLICATES: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub replicates: Vec<DVector<f64>>,
}

impl Subject {
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.replicates[0].len());
        for w in &self.replicates {
            m += w;
        }
        m / self.replicates.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateDataset {
    pub d: usize,
    pub subjects: Vec<Subject>,
}

impl ReplicateDataset {
    pub fn new(d: usize, subjects: Vec<Subject>) -> Result<Self> {
        let ds = ReplicateDataset { d, subjects };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_replicates_total(&self) -> usize {
        self.subjects.iter().map(|s| s.replicates.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::validation("dataset dimension must be >= 2"));
        }
        if self.subjects.is_empty() {
            return Err(Error::validation("dataset has no subjects"));
        }
        for s in &self.subjects {
            if s.replicates.len() < MIN_REPLICATES {
                return Err(Error::validation(format!(
                    "subject {} has {} replicates; the model needs at least {MIN_REPLICATES}",
                    s.id,
                    s.replicates.len()
                )));
            }
            for w in &s.replicates {
                if w.len() != self.d {
                    return Err(Error::validation(format!(
                        "subject {}: replicate of dimension {} in a d={} dataset",
                        s.id,
                        w.len(),
                        self.d
                    )));
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(format!(
                        "subject {}: non-finite replicate entry",
                        s.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-dimension maximum of |w| over the whole dataset.
    pub fn column_max_abs(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.d];
        for s in &self.subjects {
            for w in &s.replicates {
                for l in 0..self.d {
                    m[l] = m[l].max(w[l].abs());
                }
            }
        }
        m
    }

    /// Dataset with every dimension scaled by `scales[l]`.
    pub fn scaled(&self, scales: &[f64]) -> ReplicateDataset {
        let subjects = self
            .subjects
            .iter()
            .map(|s| Subject {
                id: s.id.clone(),
                replicates: s
                    .replicates
                    .iter()
                    .map(|w| DVector::from_fn(self.d, |l, _| w[l] * scales[l]))
                    .collect(),
            })
            .collect();
        ReplicateDataset {
            d: self.d,
            subjects,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = String::from("subject_id,replicate_id");
        for l in 1..=self.d {
            header.push_str(&format!(",w_{l}"));
        }
        writeln!(file, "{header}")?;
        for s in &self.subjects {
            for (j, w) in s.replicates.iter().enumerate() {
                let mut line = format!("{},{}", s.id, j + 1);
                for l in 0..self.d {
                    line.push_str(&format!(",{}", w[l]));
                }
                writeln!(file, "{line}")?;
            }
        }
        Ok(())
    }

    /// Parse a dataset CSV, reporting 1-based line numbers on error.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty file".into(),
            })??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 3 || cols[0] != "subject_id" || cols[1] != "replicate_id" {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header subject_id,replicate_id,w_1,...; got '{}'",
                    header.trim_end()
                ),
            });
        }
        let d = cols.len() - 2;
        for (l, c) in cols[2..].iter().enumerate() {
            let expect = format!("w_{}", l + 1);
            if *c != expect {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing or misnamed column: expected '{expect}', got '{c}'"),
                });
            }
        }

        // Preserve first-appearance subject order for determinism.
        let mut order: Vec<String> = Vec::new();
        let mut map: std::collections::HashMap<String, Vec<DVector<f64>>> =
            std::collections::HashMap::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != d + 2 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {} fields, got {}", d + 2, fields.len()),
                });
            }
            let mut w = DVector::zeros(d);
            for l in 0..d {
                w[l] = fields[l + 2].parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("column w_{}: {e}", l + 1),
                })?;
            }
            let id = fields[0].to_string();
            if !map.contains_key(&id) {
                order.push(id.clone());
            }
            map.entry(id).or_default().push(w);
        }
        let subjects = order
            .into_iter()
            .map(|id| {
                let replicates = map.remove(&id).unwrap();
                Subject { id, replicates }
            })
            .collect();
        ReplicateDataset::new(d, subjects)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ReplicateDataset {
        let subjects = (0..4)
            .map(|i| Subject {
                id: format!("s{i}"),
                replicates: (0..3)
                    .map(|j| DVector::from_vec(vec![i as f64 + 1.0, j as f64 + 0.5]))
                    .collect(),
            })
            .collect();
        ReplicateDataset::new(2, subjects).unwrap()
    }

    #[test]
    fn csv_roundtrip() {
        let ds = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        ds.write_csv(&path).unwrap();
        let back = ReplicateDataset::read_csv(&path).unwrap();
        assert_eq!(back.d, 2);
        assert_eq!(back.n_subjects(), 4);
        for (a, b) in ds.subjects.iter().zip(&back.subjects) {
            assert_eq!(a.id, b.id);
            for (wa, wb) in a.replicates.iter().zip(&b.replicates) {
                assert_eq!(wa, wb);
            }
        }
    }

    #[test]
    fn header_errors_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "subject_id,replicate_id,w_1,wrong\n").unwrap();
        match ReplicateDataset::read_csv(&path) {
            Err(Error::Parse { line: 1, message }) => assert!(message.contains("w_2")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn body_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "subject_id,replicate_id,w_1,w_2\na,1,1.0,2.0\na,2,1.0,oops\n",
        )
        .unwrap();
        match ReplicateDataset::read_csv(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("w_2"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn too_few_replicates_rejected() {
        let subjects = vec![Subject {
            id: "a".into(),
            replicates: vec![
                DVector::from_vec(vec![1.0, 2.0]),
                DVector::from_vec(vec![1.0, 2.0]),
            ],
        }];
        assert!(matches!(
            ReplicateDataset::new(2, subjects),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn means_and_scaling() {
        let ds = toy();
        let m = ds.subjects[0].mean();
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!((m[1] - 1.5).abs() < 1e-15);
        let scaled = ds.scaled(&[2.0, 10.0]);
        assert!((scaled.subjects[0].replicates[0][1] - 5.0).abs() < 1e-15);
        let maxes = ds.column_max_abs();
        assert_eq!(maxes, vec![4.0, 2.5]);
    }
}
