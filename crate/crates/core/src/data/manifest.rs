//! Manifest-driven dataset ingestion.
//!
//! A manifest is a plain CSV with header `path,subject_id,view_id,tag`.
//! Fields are never quoted; fields containing commas (or quotes/newlines)
//! are rejected outright so the format stays trivially greppable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::data::{validate_dataset, ImageBuf, Sample, MIN_IMAGE_EDGE};
use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["path", "subject_id", "view_id", "tag"];

/// One manifest row, before image decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Image path, absolute or relative to the manifest's directory.
    pub path: String,
    pub subject_id: String,
    pub view_id: u32,
    pub tag: String,
}

fn check_plain_field(row: usize, name: &str, value: &str) -> Result<()> {
    if value.contains(',') || value.contains('"') || value.contains('\n') || value.contains('\r') {
        return Err(Error::ingest(
            row,
            format!("field `{name}` contains a comma, quote, or newline: {value:?}"),
        ));
    }
    Ok(())
}

/// Parses a manifest CSV without touching any image files.
pub fn read_manifest(manifest_path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(manifest_path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::validation(format!("cannot read manifest: {other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::ingest(0, format!("unreadable header: {e}")))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != HEADER {
        return Err(Error::validation(format!(
            "manifest header must be `{}`, found `{}`",
            HEADER.join(","),
            got.join(",")
        )));
    }

    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::ingest(row, e.to_string()))?;
        if record.len() != HEADER.len() {
            return Err(Error::ingest(
                row,
                format!("expected {} fields, found {}", HEADER.len(), record.len()),
            ));
        }
        let path = record[0].to_string();
        let subject_id = record[1].to_string();
        let tag = record[3].to_string();
        check_plain_field(row, "path", &path)?;
        check_plain_field(row, "subject_id", &subject_id)?;
        check_plain_field(row, "tag", &tag)?;
        let view_id: u32 = record[2]
            .parse()
            .map_err(|e| Error::ingest(row, format!("bad view_id `{}`: {e}", &record[2])))?;
        entries.push(ManifestEntry {
            path,
            subject_id,
            view_id,
            tag,
        });
    }
    Ok(entries)
}

/// Writes a manifest CSV. Fields must not contain commas, quotes, or
/// newlines; offending rows are rejected.
pub fn write_manifest(manifest_path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    for (i, entry) in entries.iter().enumerate() {
        let row = i + 1;
        check_plain_field(row, "path", &entry.path)?;
        check_plain_field(row, "subject_id", &entry.subject_id)?;
        check_plain_field(row, "tag", &entry.tag)?;
    }
    let mut out = BufWriter::new(File::create(manifest_path)?);
    writeln!(out, "{}", HEADER.join(","))?;
    for entry in entries {
        writeln!(
            out,
            "{},{},{},{}",
            entry.path, entry.subject_id, entry.view_id, entry.tag
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Loads every image referenced by a manifest, in file order.
///
/// Relative image paths are resolved against the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<Sample>> {
    let entries = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));

    let mut samples = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let row = i + 1;
        let path = resolve(base, &entry.path);
        let decoded = image::open(&path).map_err(|e| {
            Error::ingest(row, format!("cannot load image `{}`: {e}", path.display()))
        })?;
        let rgb = decoded.into_rgb8();
        let (width, height) = (rgb.width() as usize, rgb.height() as usize);
        if width < MIN_IMAGE_EDGE || height < MIN_IMAGE_EDGE {
            return Err(Error::ingest(
                row,
                format!(
                    "image `{}` is {width}x{height}, below the {MIN_IMAGE_EDGE}x{MIN_IMAGE_EDGE} minimum",
                    path.display()
                ),
            ));
        }
        let image = ImageBuf::from_raw(width, height, rgb.into_raw())?;
        samples.push(Sample {
            image,
            subject_id: entry.subject_id.clone(),
            view_id: entry.view_id,
            tag: entry.tag.clone(),
        });
    }
    validate_dataset(&samples)?;
    Ok(samples)
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
