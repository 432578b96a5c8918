//! The on-disk run report and the report-to-report comparison.
//!
//! A run report is self-describing: it embeds the fully resolved
//! configuration (defaults expanded, overrides applied), the dataset's
//! content hash, and the root seed, so the JSON alone identifies what was
//! run and suffices to reproduce it.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use reident_core::eval::EvaluationReport;

use crate::config::ExperimentConfig;

/// Bumped whenever the report layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run leaves behind in `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    /// `sha256:<hex>` of the manifest file, or of the canonical JSON of the
    /// synthetic parameters.
    pub dataset_hash: String,
    /// Root seed after command-line overrides. Sub-model and ensemble-fit
    /// seeds live in the embedded config.
    pub seed: u64,
    /// The resolved configuration. The output directory is stripped: where
    /// artifacts land does not influence results.
    pub config: ExperimentConfig,
    pub evaluation: EvaluationReport,
}

impl RunReport {
    pub fn new(
        mut config: ExperimentConfig,
        dataset_hash: String,
        evaluation: EvaluationReport,
    ) -> Self {
        config.output_dir = None;
        let seed = config.settings.seed;
        RunReport {
            schema_version: SCHEMA_VERSION,
            dataset_hash,
            seed,
            config,
            evaluation,
        }
    }

    /// Pretty JSON with a trailing newline. Serialization is deterministic,
    /// so identical reports produce identical bytes.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("run report serializes");
        text.push('\n');
        text
    }

    /// Reads and verifies a report: schema version must match and the
    /// evaluation must pass its internal consistency checks.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read report {}", path.display()))?;
        let report: RunReport = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse report {}", path.display()))?;
        if report.schema_version != SCHEMA_VERSION {
            bail!(
                "report {} has schema version {}, this tool reads version {}",
                path.display(),
                report.schema_version,
                SCHEMA_VERSION
            );
        }
        report
            .evaluation
            .validate()
            .with_context(|| format!("report {} fails consistency checks", path.display()))?;
        Ok(report)
    }
}

/// One (method, rank) cell whose mean accuracies differ beyond tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub method: String,
    pub rank: usize,
    pub a: f64,
    pub b: f64,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} rank-{}: {} vs {} (delta {:.6})",
            self.method,
            self.rank,
            self.a,
            self.b,
            (self.a - self.b).abs()
        )
    }
}

/// Compares the mean rank-k curves of two reports cell by cell. Returns the
/// cells that differ by strictly more than `tolerance`. Structurally
/// different reports (different method sets or rank ranges) are an error,
/// not a divergence: comparing them would be meaningless.
pub fn compare_reports(a: &RunReport, b: &RunReport, tolerance: f64) -> Result<Vec<Divergence>> {
    if !tolerance.is_finite() || tolerance < 0.0 {
        bail!("tolerance must be finite and non-negative");
    }
    if a.evaluation.max_rank != b.evaluation.max_rank {
        bail!(
            "reports rank curves extend to different ranks: {} vs {}",
            a.evaluation.max_rank,
            b.evaluation.max_rank
        );
    }
    let names_a: Vec<&str> = a.evaluation.methods.iter().map(|m| m.name.as_str()).collect();
    let names_b: Vec<&str> = b.evaluation.methods.iter().map(|m| m.name.as_str()).collect();
    if names_a != names_b {
        bail!(
            "reports do not cover the same methods: [{}] vs [{}]",
            names_a.join(", "),
            names_b.join(", ")
        );
    }
    let mut divergences = Vec::new();
    for (ma, mb) in a.evaluation.methods.iter().zip(&b.evaluation.methods) {
        for k in 0..a.evaluation.max_rank {
            let (va, vb) = (ma.mean[k], mb.mean[k]);
            if (va - vb).abs() > tolerance {
                divergences.push(Divergence {
                    method: ma.name.clone(),
                    rank: k + 1,
                    a: va,
                    b: vb,
                });
            }
        }
    }
    Ok(divergences)
}
