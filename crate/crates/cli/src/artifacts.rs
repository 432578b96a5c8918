//! Writing run artifacts to the output directory, and reading embedding
//! dumps back for the standalone correlation command.
//!
//! A completed run leaves behind:
//!
//! ```text
//! out/
//!   report.json          machine-readable results (see [`crate::report`])
//!   report.txt           the same results rendered as aligned text tables
//!   run_manifest.json    what ran: config echo, seeds, artifact listing
//!   figures/*.csv        one CSV per chart
//!   models/rotation_<r>/<sub-model>.model
//!   transforms/rotation_<r>/<ensemble>.transform
//!   embeddings/rotation_<r>/<sub-model>.csv
//! ```
//!
//! Embedding dumps hold one row per evaluation image (query rows first,
//! then gallery) with columns `subject_id,view_id,e0..e{d-1}`; they are the
//! input format of `correlate`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use serde::Serialize;

use reident_core::data::Sample;
use reident_core::eval::{ExperimentOutput, RotationEmbeddings};
use reident_core::Real;

use crate::config::ExperimentConfig;
use crate::report::{RunReport, SCHEMA_VERSION};

/// Everything `run_manifest.json` records about one invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub dataset_hash: &'a str,
    /// Root seed after overrides; per-model seeds sit in the config echo.
    pub seed: u64,
    pub threads: usize,
    pub stable_output: bool,
    /// The resolved configuration, defaults expanded.
    pub config: &'a ExperimentConfig,
    /// Paths written by this run, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Writes every artifact of a completed run into `out`. Returns the list
/// of paths written, relative to `out` (also recorded in the manifest).
pub fn write_run_outputs(
    out: &Path,
    command: &str,
    report: &RunReport,
    config: &ExperimentConfig,
    trained: Option<(&[Sample], &ExperimentOutput<Real>)>,
    threads: usize,
    stable_output: bool,
) -> Result<Vec<String>> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let mut artifacts = Vec::new();

    fs::write(out.join("report.json"), report.to_json())?;
    artifacts.push("report.json".to_string());
    fs::write(out.join("report.txt"), report.evaluation.render_text())?;
    artifacts.push("report.txt".to_string());

    let figures = out.join("figures");
    for path in report.evaluation.write_figure_csvs(&figures)? {
        artifacts.push(relative_name(out, &path));
    }

    if let Some((samples, output)) = trained {
        for (r, rot) in output.rotations.iter().enumerate() {
            let model_dir = out.join("models").join(format!("rotation_{r}"));
            fs::create_dir_all(&model_dir)?;
            for (mi, sm) in config.sub_models.iter().enumerate() {
                let path = model_dir.join(format!("{}.model", sm.name));
                rot.models[mi].save(&path)?;
                artifacts.push(relative_name(out, &path));
            }

            let transform_dir = out.join("transforms").join(format!("rotation_{r}"));
            fs::create_dir_all(&transform_dir)?;
            for (ei, kind) in config.settings.ensembles.iter().enumerate() {
                let path = transform_dir.join(format!("{}.transform", kind.name()));
                output.transforms[r][ei].save(&path)?;
                artifacts.push(relative_name(out, &path));
            }

            let dump_dir = out.join("embeddings").join(format!("rotation_{r}"));
            fs::create_dir_all(&dump_dir)?;
            for (mi, sm) in config.sub_models.iter().enumerate() {
                let path = dump_dir.join(format!("{}.csv", sm.name));
                write_embedding_dump(&path, samples, rot, mi)?;
                artifacts.push(relative_name(out, &path));
            }
        }
    }

    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command,
        dataset_hash: &report.dataset_hash,
        seed: report.seed,
        threads,
        stable_output,
        config,
        artifacts: artifacts.clone(),
    };
    let mut manifest_json =
        serde_json::to_string_pretty(&manifest).expect("run manifest serializes");
    manifest_json.push('\n');
    fs::write(out.join("run_manifest.json"), manifest_json)?;
    artifacts.push("run_manifest.json".to_string());
    Ok(artifacts)
}

fn relative_name(base: &Path, path: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Writes one rotation's evaluation-fold embeddings for one sub-model:
/// header `subject_id,view_id,e0..e{d-1}`, query rows first, then gallery
/// rows, values in shortest round-trip decimal form.
pub fn write_embedding_dump(
    path: &Path,
    samples: &[Sample],
    rot: &RotationEmbeddings<Real>,
    model_idx: usize,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create embedding dump {}", path.display()))?;
    let dim = rot.query[model_idx].ncols();
    let mut header = vec!["subject_id".to_string(), "view_id".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    writer.write_record(&header)?;
    for (rows, indices) in [
        (&rot.query[model_idx], &rot.query_indices),
        (&rot.gallery[model_idx], &rot.gallery_indices),
    ] {
        for (pos, &sample_idx) in indices.iter().enumerate() {
            let sample = &samples[sample_idx];
            let mut record = vec![sample.subject_id.clone(), sample.view_id.to_string()];
            record.extend(rows.row(pos).iter().map(|v| format!("{v}")));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// One parsed embedding dump: the model name (from the file stem), the
/// (subject, view) key of every row, and the embedding matrix.
#[derive(Debug, Clone)]
pub struct EmbeddingDump {
    pub name: String,
    pub keys: Vec<(String, u32)>,
    pub rows: Array2<Real>,
}

/// Reads a dump written by [`write_embedding_dump`]. The header must be
/// exactly `subject_id,view_id,e0..e{d-1}`.
pub fn read_embedding_dump(path: &Path) -> Result<EmbeddingDump> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot open embedding dump {}", path.display()))?;

    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "subject_id" || &header[1] != "view_id" {
        bail!(
            "{} is not an embedding dump: header must start with subject_id,view_id,e0",
            path.display()
        );
    }
    let dim = header.len() - 2;
    for (i, field) in header.iter().skip(2).enumerate() {
        if field != format!("e{i}") {
            bail!(
                "{} is not an embedding dump: column {} is named {:?}, expected \"e{}\"",
                path.display(),
                i + 2,
                field,
                i
            );
        }
    }

    let mut keys = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            bail!(
                "{} row {}: {} fields, header has {}",
                path.display(),
                row + 1,
                record.len(),
                header.len()
            );
        }
        let view: u32 = record[1]
            .parse()
            .with_context(|| format!("{} row {}: bad view_id {:?}", path.display(), row + 1, &record[1]))?;
        keys.push((record[0].to_string(), view));
        for field in record.iter().skip(2) {
            let v: f64 = field.parse().with_context(|| {
                format!("{} row {}: bad value {:?}", path.display(), row + 1, field)
            })?;
            values.push(v);
        }
    }
    if keys.is_empty() {
        bail!("{} holds no embedding rows", path.display());
    }
    let rows = Array2::from_shape_vec((keys.len(), dim), values).expect("row-major layout");
    Ok(EmbeddingDump { name, keys, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use reident_core::data::ImageBuf;

    fn sample(subject: &str, view: u32) -> Sample {
        Sample {
            image: ImageBuf::from_fn(2, 2, |_, _, _| 0),
            subject_id: subject.to_string(),
            view_id: view,
            tag: String::new(),
        }
    }

    fn tiny_rotation() -> (Vec<Sample>, RotationEmbeddings<Real>) {
        let samples = vec![sample("a", 0), sample("a", 1), sample("b", 0), sample("b", 1)];
        let rot = RotationEmbeddings {
            eval_fold: 0,
            train_subjects: vec![],
            query_subjects: vec!["a".into(), "b".into()],
            gallery_subjects: vec!["a".into(), "b".into()],
            query_indices: vec![0, 2],
            gallery_indices: vec![1, 3],
            train: vec![],
            query: vec![array![[0.125, -3.0], [2.0, 0.5]]],
            gallery: vec![array![[1e-9, 7.25], [0.1, -0.2]]],
            models: vec![],
            train_loss: vec![vec![]],
            train_seconds: vec![0.0],
            inference_seconds: 0.0,
        };
        (samples, rot)
    }

    #[test]
    fn embedding_dump_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("brightness.csv");
        let (samples, rot) = tiny_rotation();
        write_embedding_dump(&path, &samples, &rot, 0).unwrap();

        let dump = read_embedding_dump(&path).unwrap();
        assert_eq!(dump.name, "brightness");
        assert_eq!(
            dump.keys,
            vec![
                ("a".to_string(), 0),
                ("b".to_string(), 0),
                ("a".to_string(), 1),
                ("b".to_string(), 1),
            ],
            "query rows come first, then gallery rows"
        );
        assert_eq!(dump.rows.nrows(), 4);
        assert_eq!(dump.rows[[0, 0]], 0.125);
        assert_eq!(dump.rows[[2, 1]], 7.25, "1e-9 and 7.25 survive the text round trip");
        assert_eq!(dump.rows[[2, 0]], 1e-9);
    }

    #[test]
    fn malformed_dumps_are_rejected_with_the_offending_location() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("wrong_header.csv", "id,view_id,e0\na,0,1.0\n", "header"),
            ("wrong_embed_col.csv", "subject_id,view_id,e1\na,0,1.0\n", "e0"),
            ("bad_value.csv", "subject_id,view_id,e0\na,0,whoops\n", "bad value"),
            ("bad_view.csv", "subject_id,view_id,e0\na,minus,1.0\n", "bad view_id"),
            ("empty.csv", "subject_id,view_id,e0\n", "no embedding rows"),
        ];
        for (file, text, needle) in cases {
            let path = dir.path().join(file);
            fs::write(&path, text).unwrap();
            let err = read_embedding_dump(&path).unwrap_err();
            assert!(
                format!("{err:#}").contains(needle),
                "{file}: expected {needle:?} in {err:#}"
            );
        }
    }
}
