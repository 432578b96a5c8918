//! Import/export of per-sample feature tables.
//!
//! This is the plug-in channel for feature extractors that live outside
//! this crate (and doubles as a cache format): a CSV with header
//! `subject_id,view_id,f0,...,f{d-1}`, one row per sample.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::features::{FeatureMethod, FeatureVector};
use crate::Scalar;

/// A loaded feature table, keyed by `(subject_id, view_id)`, not yet
/// aligned to any dataset.
#[derive(Debug, Clone)]
pub struct ImportedFeatures<F> {
    map: BTreeMap<(String, u32), Vec<F>>,
    dims: usize,
    /// Free-form label naming the external method, used in reports.
    pub label: String,
}

/// Reads a feature table. Every row must have the same number of feature
/// columns; the first offending row is reported.
pub fn import_features<F: Scalar>(path: &Path, method_label: &str) -> Result<ImportedFeatures<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::validation(format!("cannot read feature table: {other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::ingest(0, format!("unreadable header: {e}")))?;
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[0] != "subject_id" || names[1] != "view_id" {
        return Err(Error::validation(
            "feature table header must be `subject_id,view_id,f0,...`",
        ));
    }
    let dims = names.len() - 2;

    let mut map = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::ingest(row, e.to_string()))?;
        if record.len() != dims + 2 {
            return Err(Error::ingest(
                row,
                format!(
                    "expected {} feature values, found {}",
                    dims,
                    record.len().saturating_sub(2)
                ),
            ));
        }
        let subject_id = record[0].to_string();
        let view_id: u32 = record[1]
            .parse()
            .map_err(|e| Error::ingest(row, format!("bad view_id `{}`: {e}", &record[1])))?;
        let mut values = Vec::with_capacity(dims);
        for field in record.iter().skip(2) {
            let v: f64 = field
                .parse()
                .map_err(|e| Error::ingest(row, format!("bad feature value `{field}`: {e}")))?;
            if !v.is_finite() {
                return Err(Error::ingest(row, format!("non-finite feature value {v}")));
            }
            values.push(F::cast(v));
        }
        if map.insert((subject_id.clone(), view_id), values).is_some() {
            return Err(Error::ingest(
                row,
                format!("duplicate (subject_id, view_id) pair ({subject_id}, {view_id})"),
            ));
        }
    }
    Ok(ImportedFeatures {
        map,
        dims,
        label: method_label.to_string(),
    })
}

impl<F: Scalar> ImportedFeatures<F> {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Aligns the table to a dataset: one vector per sample, in sample
    /// order. Every sample must have a row and every row must belong to a
    /// sample, so silent partial joins are impossible.
    pub fn join(&self, samples: &[Sample]) -> Result<Vec<FeatureVector<F>>> {
        let mut vectors = Vec::with_capacity(samples.len());
        let mut used = 0usize;
        for sample in samples {
            let key = (sample.subject_id.clone(), sample.view_id);
            match self.map.get(&key) {
                Some(values) => {
                    used += 1;
                    vectors.push(FeatureVector {
                        values: values.clone(),
                        method: FeatureMethod::Imported,
                    });
                }
                None => {
                    return Err(Error::validation(format!(
                        "no imported features for sample ({}, {})",
                        sample.subject_id, sample.view_id
                    )));
                }
            }
        }
        if used < self.map.len() {
            for (subject_id, view_id) in self.map.keys() {
                if !samples
                    .iter()
                    .any(|s| s.subject_id == *subject_id && s.view_id == *view_id)
                {
                    return Err(Error::validation(format!(
                        "imported features for ({subject_id}, {view_id}) match no dataset sample"
                    )));
                }
            }
        }
        Ok(vectors)
    }
}

/// Writes a feature table (the same format [`import_features`] reads).
/// `prefix` names the value columns, e.g. `f` for features, `e` for
/// embeddings. All rows must share one dimensionality.
pub fn write_features<'a, F: Scalar>(
    path: &Path,
    prefix: &str,
    rows: impl IntoIterator<Item = (&'a str, u32, &'a [F])>,
) -> Result<()> {
    let rows: Vec<(&str, u32, &[F])> = rows.into_iter().collect();
    let dims = match rows.first() {
        Some((_, _, v)) => v.len(),
        None => return Err(Error::validation("cannot write an empty feature table")),
    };
    for (subject_id, view_id, values) in &rows {
        if values.len() != dims {
            return Err(Error::validation(format!(
                "row ({subject_id}, {view_id}) has {} values, expected {dims}",
                values.len()
            )));
        }
        if subject_id.contains(',') || subject_id.contains('"') || subject_id.contains('\n') {
            return Err(Error::validation(format!(
                "subject_id {subject_id:?} contains a comma, quote, or newline"
            )));
        }
    }

    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "subject_id,view_id")?;
    for d in 0..dims {
        write!(out, ",{prefix}{d}")?;
    }
    writeln!(out)?;
    for (subject_id, view_id, values) in rows {
        write!(out, "{subject_id},{view_id}")?;
        for v in values {
            write!(out, ",{}", v.widen())?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
