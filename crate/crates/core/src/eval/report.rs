//! Evaluation results: JSON-serializable report types, aligned text
//! rendering, and per-figure CSV exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::stats::{mean, relative_uncertainty, sample_std};

/// Whether a method row is a single trained sub-model or a fused ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    SubModel,
    Ensemble,
}

impl MethodKind {
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::SubModel => "sub-model",
            MethodKind::Ensemble => "ensemble",
        }
    }
}

/// Rank-k accuracies of one method across fold rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub role: MethodKind,
    /// `per_rotation[r][k - 1]` is the Rank-k accuracy in rotation `r`.
    pub per_rotation: Vec<Vec<f64>>,
    /// Mean Rank-k accuracy across rotations, index `k - 1`.
    pub mean: Vec<f64>,
    /// Sample standard deviation across rotations, index `k - 1`.
    pub std: Vec<f64>,
    /// Fitted fusion weights per rotation (weighted ensembles only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    /// Per-epoch training loss per rotation (trained methods only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_loss: Option<Vec<Vec<f64>>>,
    /// Wall-clock seconds spent training or fitting this method, summed
    /// across rotations. Dropped for byte-stable output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
}

impl MethodResult {
    /// Builds a result from per-rotation accuracy rows, computing the
    /// cross-rotation mean and sample standard deviation.
    pub fn aggregate(
        name: impl Into<String>,
        role: MethodKind,
        per_rotation: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        if per_rotation.is_empty() {
            return Err(Error::validation(format!(
                "method '{name}' has no fold rotations"
            )));
        }
        let max_rank = per_rotation[0].len();
        if max_rank == 0 {
            return Err(Error::validation(format!(
                "method '{name}' has an empty accuracy row"
            )));
        }
        for (r, row) in per_rotation.iter().enumerate() {
            if row.len() != max_rank {
                return Err(Error::validation(format!(
                    "method '{name}': rotation {r} reports {} ranks, expected {max_rank}",
                    row.len()
                )));
            }
            for (k, &acc) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&acc) {
                    return Err(Error::validation(format!(
                        "method '{name}': rotation {r} Rank-{} accuracy {acc} outside [0, 1]",
                        k + 1
                    )));
                }
                if k > 0 && acc < row[k - 1] {
                    return Err(Error::validation(format!(
                        "method '{name}': rotation {r} accuracy decreases from Rank-{k} to Rank-{}",
                        k + 1
                    )));
                }
            }
        }
        let n = per_rotation.len();
        let mut mean_row = vec![0.0; max_rank];
        let mut std_row = vec![0.0; max_rank];
        for k in 0..max_rank {
            let col: Vec<f64> = per_rotation.iter().map(|row| row[k]).collect();
            mean_row[k] = mean(&col);
            std_row[k] = if n >= 2 { sample_std(&col) } else { 0.0 };
        }
        Ok(MethodResult {
            name,
            role,
            per_rotation,
            mean: mean_row,
            std: std_row,
            weights: None,
            train_loss: None,
            train_seconds: None,
        })
    }

    /// Mean Rank-1 accuracy across rotations.
    pub fn mean_rank1(&self) -> f64 {
        self.mean[0]
    }

    /// Rank-1 accuracy per rotation.
    pub fn rank1_per_rotation(&self) -> Vec<f64> {
        self.per_rotation.iter().map(|row| row[0]).collect()
    }

    /// Cross-rotation relative uncertainty of the Rank-1 accuracy, when
    /// defined (at least two rotations and a positive mean).
    pub fn rank1_relative_uncertainty(&self) -> Option<f64> {
        relative_uncertainty(&self.rank1_per_rotation()).ok()
    }
}

/// Mean triplet correlation between sub-model embeddings; symmetric with a
/// computed (not assumed) diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `matrix[i][j]`, averaged over fold rotations.
    pub matrix: Vec<Vec<f64>>,
    /// Monte-Carlo triples drawn per (pair, rotation).
    pub trials: usize,
}

/// Rank-1 gain of each two-model concatenation ensemble over its best
/// constituent sub-model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseImprovement {
    pub names: Vec<String>,
    /// `matrix[i][j]` = pair Rank-1 − max(Rank-1 of i, Rank-1 of j);
    /// `None` on the diagonal.
    pub matrix: Vec<Vec<Option<f64>>>,
    /// Sum of each row's off-diagonal entries (reported, not asserted).
    pub row_sums: Vec<f64>,
}

/// Rank-1 drop from removing each sub-model from the full ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOut {
    /// Ensemble the ablation was run with.
    pub ensemble: String,
    pub names: Vec<String>,
    /// Mean Rank-1 of the full ensemble.
    pub full_rank1: f64,
    /// `minus_one_rank1[m]`: mean Rank-1 with sub-model `m` removed.
    pub minus_one_rank1: Vec<f64>,
    /// `deltas[m] = full_rank1 - minus_one_rank1[m]`.
    pub deltas: Vec<f64>,
}

/// Rank-1 accuracy of one retrained sub-model as its embedding width varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSweep {
    pub method: String,
    pub sizes: Vec<usize>,
    pub mean_rank1: Vec<f64>,
    pub std_rank1: Vec<f64>,
}

/// Wall-clock seconds per pipeline phase, summed over rotations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub feature_extraction_s: f64,
    pub training_s: f64,
    pub ensemble_fitting_s: f64,
    pub inference_s: f64,
}

/// Full cross-validated evaluation: per-method rank-k accuracies plus the
/// optional correlation, improvement, ablation, and sweep analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Highest rank the CMC rows extend to.
    pub max_rank: usize,
    /// Evaluation fold index of each rotation, in rotation order.
    pub rotations: Vec<usize>,
    pub methods: Vec<MethodResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<PhaseTimings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise_improvement: Option<PairwiseImprovement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leave_one_out: Option<LeaveOneOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_sweep: Option<SizeSweep>,
}

impl EvaluationReport {
    /// Looks a method up by name.
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Drops every wall-clock measurement so repeated runs with identical
    /// configuration serialize byte-identically.
    pub fn strip_timings(&mut self) {
        self.timings = None;
        for m in &mut self.methods {
            m.train_seconds = None;
        }
    }

    /// Checks structural invariants: consistent rotation counts, accuracy
    /// rows of length `max_rank`, values in [0, 1], and monotonically
    /// non-decreasing rank-k accuracy.
    pub fn validate(&self) -> Result<()> {
        if self.max_rank == 0 {
            return Err(Error::validation("max_rank must be at least 1"));
        }
        if self.rotations.is_empty() {
            return Err(Error::validation("report has no fold rotations"));
        }
        if self.methods.is_empty() {
            return Err(Error::validation("report has no methods"));
        }
        let mut seen = BTreeMap::new();
        for m in &self.methods {
            if seen.insert(m.name.clone(), ()).is_some() {
                return Err(Error::validation(format!(
                    "duplicate method name '{}'",
                    m.name
                )));
            }
            if m.per_rotation.len() != self.rotations.len() {
                return Err(Error::validation(format!(
                    "method '{}' covers {} rotations, report has {}",
                    m.name,
                    m.per_rotation.len(),
                    self.rotations.len()
                )));
            }
            if m.mean.len() != self.max_rank || m.std.len() != self.max_rank {
                return Err(Error::validation(format!(
                    "method '{}' aggregates {} ranks, expected {}",
                    m.name,
                    m.mean.len(),
                    self.max_rank
                )));
            }
            // Rebuilding through the constructor re-runs the row checks.
            let rebuilt =
                MethodResult::aggregate(m.name.clone(), m.role, m.per_rotation.clone())?;
            if rebuilt.mean != m.mean || rebuilt.std != m.std {
                return Err(Error::validation(format!(
                    "method '{}': stored mean/std disagree with its per-rotation rows",
                    m.name
                )));
            }
        }
        Ok(())
    }

    /// Renders the report as aligned human-readable text.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let rot_list = self
            .rotations
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(
            out,
            "Rank-k accuracy, mean ± sample std over {} fold rotations (eval folds {rot_list})",
            self.rotations.len()
        );
        let _ = writeln!(out);

        let shown_ks: Vec<usize> = [1usize, 5, self.max_rank]
            .into_iter()
            .filter(|&k| k <= self.max_rank)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let name_w = self
            .methods
            .iter()
            .map(|m| m.name.len())
            .max()
            .unwrap_or(6)
            .max("method".len());

        let mut header = format!("{:<name_w$}  {:<9}", "method", "role");
        for &k in &shown_ks {
            let _ = write!(header, "  {:<15}", format!("Rank-{k}"));
        }
        let _ = write!(header, "  {:<8}", "rel-unc");
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", "-".repeat(header.len()));
        for m in &self.methods {
            let _ = write!(out, "{:<name_w$}  {:<9}", m.name, m.role.label());
            for &k in &shown_ks {
                let cell = format!("{:.3} ± {:.3}", m.mean[k - 1], m.std[k - 1]);
                let _ = write!(out, "  {cell:<15}");
            }
            match m.rank1_relative_uncertainty() {
                Some(u) => {
                    let _ = writeln!(out, "  {u:<8.4}");
                }
                None => {
                    let _ = writeln!(out, "  {:<8}", "-");
                }
            }
        }

        let _ = writeln!(out);
        let _ = writeln!(out, "Per-rotation Rank-1 accuracy");
        let mut header = format!("{:<name_w$}", "method");
        for fold in &self.rotations {
            let _ = write!(header, "  {:<7}", format!("fold {fold}"));
        }
        let _ = writeln!(out, "{header}");
        for m in &self.methods {
            let _ = write!(out, "{:<name_w$}", m.name);
            for row in &m.per_rotation {
                let _ = write!(out, "  {:<7.3}", row[0]);
            }
            let _ = writeln!(out);
        }

        let weighted: Vec<&MethodResult> =
            self.methods.iter().filter(|m| m.weights.is_some()).collect();
        if !weighted.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Fusion weights per rotation");
            for m in weighted {
                for (r, w) in m.weights.as_ref().unwrap().iter().enumerate() {
                    let cells = w
                        .iter()
                        .map(|x| format!("{x:.4}"))
                        .collect::<Vec<_>>()
                        .join(", ");
                    let _ = writeln!(
                        out,
                        "{:<name_w$}  fold {:<3}  [{cells}]",
                        m.name, self.rotations[r]
                    );
                }
            }
        }

        if let Some(c) = &self.correlation {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Triplet correlation between sub-model embeddings ({} trials per pair)",
                c.trials
            );
            let cw = c.names.iter().map(|n| n.len()).max().unwrap_or(6).max(7);
            let mut header = format!("{:<cw$}", "");
            for n in &c.names {
                let _ = write!(header, "  {n:<cw$}");
            }
            let _ = writeln!(out, "{header}");
            for (i, n) in c.names.iter().enumerate() {
                let _ = write!(out, "{n:<cw$}");
                for j in 0..c.names.len() {
                    let _ = write!(out, "  {:<cw$.4}", c.matrix[i][j]);
                }
                let _ = writeln!(out);
            }
        }

        if let Some(p) = &self.pairwise_improvement {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Pairwise Rank-1 improvement of two-model concatenation over the better constituent"
            );
            let cw = p.names.iter().map(|n| n.len()).max().unwrap_or(6).max(8);
            let mut header = format!("{:<cw$}", "");
            for n in &p.names {
                let _ = write!(header, "  {n:<cw$}");
            }
            let _ = write!(header, "  {:<cw$}", "row sum");
            let _ = writeln!(out, "{header}");
            for (i, n) in p.names.iter().enumerate() {
                let _ = write!(out, "{n:<cw$}");
                for j in 0..p.names.len() {
                    match p.matrix[i][j] {
                        Some(v) => {
                            let _ = write!(out, "  {v:<+cw$.4}");
                        }
                        None => {
                            let _ = write!(out, "  {:<cw$}", "-");
                        }
                    }
                }
                let _ = writeln!(out, "  {:<+cw$.4}", p.row_sums[i]);
            }
        }

        if let Some(l) = &self.leave_one_out {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Leave-one-out ablation of the {} ensemble (full Rank-1 {:.3})",
                l.ensemble, l.full_rank1
            );
            let cw = l.names.iter().map(|n| n.len()).max().unwrap_or(6).max("removed".len());
            let _ = writeln!(
                out,
                "{:<cw$}  {:<10}  {:<10}",
                "removed", "Rank-1", "delta"
            );
            for (i, n) in l.names.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{n:<cw$}  {:<10.3}  {:<+10.4}",
                    l.minus_one_rank1[i], l.deltas[i]
                );
            }
        }

        if let Some(s) = &self.size_sweep {
            let _ = writeln!(out);
            let _ = writeln!(out, "Embedding-width sweep for {}", s.method);
            let _ = writeln!(out, "{:<8}  {:<10}  {:<10}", "width", "Rank-1", "std");
            for (i, &size) in s.sizes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{size:<8}  {:<10.3}  {:<10.3}",
                    s.mean_rank1[i], s.std_rank1[i]
                );
            }
        }

        if let Some(t) = &self.timings {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Wall-clock seconds: features {:.2}, training {:.2}, ensemble fitting {:.2}, inference {:.2}",
                t.feature_extraction_s, t.training_s, t.ensemble_fitting_s, t.inference_s
            );
        }
        out
    }

    /// Writes one CSV per chart under `dir` and returns the created paths.
    ///
    /// Always: `cmc.csv` (method, k, mean, std), `rank1.csv` (method, role,
    /// mean, std, relative uncertainty), `per_rotation_rank1.csv`. When the
    /// data exists: `training_loss.csv`, `weights.csv`, `correlation.csv`,
    /// `pairwise_improvement.csv`, `leave_one_out.csv`, `size_sweep.csv`.
    pub fn write_figure_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();

        let mut w = csv_writer(dir, "cmc.csv", &mut written)?;
        w.write_record(["method", "k", "mean_accuracy", "std_accuracy"])?;
        for m in &self.methods {
            for k in 1..=self.max_rank {
                w.write_record([
                    m.name.as_str(),
                    &k.to_string(),
                    &fmt_f64(m.mean[k - 1]),
                    &fmt_f64(m.std[k - 1]),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv_writer(dir, "rank1.csv", &mut written)?;
        w.write_record([
            "method",
            "role",
            "mean_rank1",
            "std_rank1",
            "relative_uncertainty",
        ])?;
        for m in &self.methods {
            let unc = m
                .rank1_relative_uncertainty()
                .map(|u| fmt_f64(u))
                .unwrap_or_default();
            w.write_record([
                m.name.as_str(),
                m.role.label(),
                &fmt_f64(m.mean[0]),
                &fmt_f64(m.std[0]),
                &unc,
            ])?;
        }
        w.flush()?;

        let mut w = csv_writer(dir, "per_rotation_rank1.csv", &mut written)?;
        w.write_record(["method", "rotation", "eval_fold", "rank1"])?;
        for m in &self.methods {
            for (r, row) in m.per_rotation.iter().enumerate() {
                w.write_record([
                    m.name.as_str(),
                    &r.to_string(),
                    &self.rotations[r].to_string(),
                    &fmt_f64(row[0]),
                ])?;
            }
        }
        w.flush()?;

        if self.methods.iter().any(|m| m.train_loss.is_some()) {
            let mut w = csv_writer(dir, "training_loss.csv", &mut written)?;
            w.write_record(["method", "rotation", "epoch", "loss"])?;
            for m in &self.methods {
                let Some(logs) = &m.train_loss else { continue };
                for (r, log) in logs.iter().enumerate() {
                    for (e, &loss) in log.iter().enumerate() {
                        w.write_record([
                            m.name.as_str(),
                            &r.to_string(),
                            &(e + 1).to_string(),
                            &fmt_f64(loss),
                        ])?;
                    }
                }
            }
            w.flush()?;
        }

        if self.methods.iter().any(|m| m.weights.is_some()) {
            let mut w = csv_writer(dir, "weights.csv", &mut written)?;
            w.write_record(["method", "rotation", "model_index", "weight"])?;
            for m in &self.methods {
                let Some(all) = &m.weights else { continue };
                for (r, ws) in all.iter().enumerate() {
                    for (i, &weight) in ws.iter().enumerate() {
                        w.write_record([
                            m.name.as_str(),
                            &r.to_string(),
                            &i.to_string(),
                            &fmt_f64(weight),
                        ])?;
                    }
                }
            }
            w.flush()?;
        }

        if let Some(c) = &self.correlation {
            let mut w = csv_writer(dir, "correlation.csv", &mut written)?;
            w.write_record(["model_a", "model_b", "correlation"])?;
            for (i, a) in c.names.iter().enumerate() {
                for (j, b) in c.names.iter().enumerate() {
                    w.write_record([a.as_str(), b.as_str(), &fmt_f64(c.matrix[i][j])])?;
                }
            }
            w.flush()?;
        }

        if let Some(p) = &self.pairwise_improvement {
            let mut w = csv_writer(dir, "pairwise_improvement.csv", &mut written)?;
            w.write_record(["model_a", "model_b", "rank1_improvement"])?;
            for (i, a) in p.names.iter().enumerate() {
                for (j, b) in p.names.iter().enumerate() {
                    if let Some(v) = p.matrix[i][j] {
                        w.write_record([a.as_str(), b.as_str(), &fmt_f64(v)])?;
                    }
                }
            }
            w.flush()?;

            let mut w = csv_writer(dir, "pairwise_row_sums.csv", &mut written)?;
            w.write_record(["model", "row_sum"])?;
            for (i, a) in p.names.iter().enumerate() {
                w.write_record([a.as_str(), &fmt_f64(p.row_sums[i])])?;
            }
            w.flush()?;
        }

        if let Some(l) = &self.leave_one_out {
            let mut w = csv_writer(dir, "leave_one_out.csv", &mut written)?;
            w.write_record(["model", "full_rank1", "minus_one_rank1", "delta"])?;
            for (i, n) in l.names.iter().enumerate() {
                w.write_record([
                    n.as_str(),
                    &fmt_f64(l.full_rank1),
                    &fmt_f64(l.minus_one_rank1[i]),
                    &fmt_f64(l.deltas[i]),
                ])?;
            }
            w.flush()?;
        }

        if let Some(s) = &self.size_sweep {
            let mut w = csv_writer(dir, "size_sweep.csv", &mut written)?;
            w.write_record(["width", "mean_rank1", "std_rank1"])?;
            for (i, &size) in s.sizes.iter().enumerate() {
                w.write_record([
                    &size.to_string(),
                    &fmt_f64(s.mean_rank1[i]),
                    &fmt_f64(s.std_rank1[i]),
                ])?;
            }
            w.flush()?;
        }

        Ok(written)
    }
}

fn csv_writer(
    dir: &Path,
    file: &str,
    written: &mut Vec<PathBuf>,
) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(file);
    let w = csv::Writer::from_path(&path)
        .map_err(|e| Error::validation(format!("cannot write {}: {e}", path.display())))?;
    written.push(path);
    Ok(w)
}

/// Shortest round-trippable decimal form, identical across runs.
fn fmt_f64(v: f64) -> String {
    // `{}` on f64 prints the shortest string that parses back exactly.
    let mut buf = format!("{v}");
    if !buf.contains(['.', 'e', 'i', 'N']) {
        buf.push_str(".0");
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn two_method_report() -> EvaluationReport {
        let a = MethodResult::aggregate(
            "alpha",
            MethodKind::SubModel,
            vec![vec![0.5, 0.7, 0.9], vec![0.6, 0.8, 1.0]],
        )
        .unwrap();
        let mut b = MethodResult::aggregate(
            "fused",
            MethodKind::Ensemble,
            vec![vec![0.7, 0.8, 0.9], vec![0.8, 0.9, 1.0]],
        )
        .unwrap();
        b.weights = Some(vec![vec![1.0, 2.0], vec![0.5, 1.5]]);
        b.train_loss = Some(vec![vec![0.9, 0.5], vec![0.8, 0.4]]);
        EvaluationReport {
            max_rank: 3,
            rotations: vec![0, 2],
            methods: vec![a, b],
            timings: Some(PhaseTimings {
                feature_extraction_s: 1.0,
                training_s: 2.0,
                ensemble_fitting_s: 0.5,
                inference_s: 0.25,
            }),
            correlation: Some(CorrelationMatrix {
                names: vec!["alpha".into(), "beta".into()],
                matrix: vec![vec![1.0, 0.3], vec![0.3, 1.0]],
                trials: 1000,
            }),
            pairwise_improvement: Some(PairwiseImprovement {
                names: vec!["alpha".into(), "beta".into()],
                matrix: vec![vec![None, Some(0.05)], vec![Some(0.05), None]],
                row_sums: vec![0.05, 0.05],
            }),
            leave_one_out: Some(LeaveOneOut {
                ensemble: "concatenation".into(),
                names: vec!["alpha".into(), "beta".into()],
                full_rank1: 0.75,
                minus_one_rank1: vec![0.55, 0.7],
                deltas: vec![0.2, 0.05],
            }),
            size_sweep: Some(SizeSweep {
                method: "alpha".into(),
                sizes: vec![10, 50],
                mean_rank1: vec![0.5, 0.6],
                std_rank1: vec![0.02, 0.01],
            }),
        }
    }

    #[test]
    fn aggregate_computes_mean_and_sample_std() {
        let m = MethodResult::aggregate(
            "m",
            MethodKind::SubModel,
            vec![vec![0.8, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        assert!((m.mean[0] - 0.9).abs() < 1e-12);
        assert!((m.mean[1] - 1.0).abs() < 1e-12);
        // Sample std of {0.8, 1.0} is sqrt(0.02) ≈ 0.141421.
        assert!((m.std[0] - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.std[1], 0.0);
        let unc = m.rank1_relative_uncertainty().unwrap();
        assert!((unc - 0.02f64.sqrt() / 0.9).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_bad_rows() {
        let dec = MethodResult::aggregate("m", MethodKind::SubModel, vec![vec![0.9, 0.8]]);
        assert!(dec.is_err(), "decreasing rank accuracy must be rejected");
        let oob = MethodResult::aggregate("m", MethodKind::SubModel, vec![vec![1.2]]);
        assert!(oob.is_err());
        let ragged =
            MethodResult::aggregate("m", MethodKind::SubModel, vec![vec![0.5], vec![0.5, 0.6]]);
        assert!(ragged.is_err());
        let empty = MethodResult::aggregate("m", MethodKind::SubModel, vec![]);
        assert!(empty.is_err());
    }

    #[test]
    fn validate_accepts_consistent_report_and_catches_tampering() {
        let report = two_method_report();
        report.validate().unwrap();

        let mut bad = report.clone();
        bad.methods[0].mean[0] = 0.99;
        assert!(bad.validate().is_err(), "stale aggregate must be caught");

        let mut bad = report.clone();
        bad.methods[1].name = "alpha".into();
        assert!(bad.validate().is_err(), "duplicate names must be caught");

        let mut bad = report;
        bad.rotations.push(4);
        assert!(bad.validate().is_err(), "rotation count mismatch");
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let report = two_method_report();
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        // Serialization itself is deterministic for a fixed value.
        assert_eq!(json, serde_json::to_string_pretty(&back).unwrap());
    }

    #[test]
    fn strip_timings_removes_all_wall_clock_fields() {
        let mut report = two_method_report();
        report.methods[0].train_seconds = Some(12.5);
        report.strip_timings();
        assert!(report.timings.is_none());
        assert!(report.methods.iter().all(|m| m.train_seconds.is_none()));
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("seconds"), "no timing keys may survive");
    }

    #[test]
    fn text_rendering_mentions_every_section() {
        let text = two_method_report().render_text();
        for needle in [
            "Rank-1",
            "alpha",
            "fused",
            "rel-unc",
            "Per-rotation",
            "Fusion weights",
            "Triplet correlation",
            "Pairwise Rank-1 improvement",
            "Leave-one-out",
            "Embedding-width sweep",
            "Wall-clock seconds",
        ] {
            assert!(text.contains(needle), "missing section: {needle}\n{text}");
        }
    }

    #[test]
    fn figure_csvs_cover_every_chart() {
        let dir = tempdir().unwrap();
        let written = two_method_report().write_figure_csvs(dir.path()).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expect in [
            "cmc.csv",
            "rank1.csv",
            "per_rotation_rank1.csv",
            "training_loss.csv",
            "weights.csv",
            "correlation.csv",
            "pairwise_improvement.csv",
            "pairwise_row_sums.csv",
            "leave_one_out.csv",
            "size_sweep.csv",
        ] {
            assert!(names.contains(&expect.to_string()), "missing {expect}");
        }
        // cmc.csv: header + 2 methods × 3 ranks.
        let cmc = std::fs::read_to_string(dir.path().join("cmc.csv")).unwrap();
        assert_eq!(cmc.lines().count(), 1 + 2 * 3);
        assert!(cmc.starts_with("method,k,mean_accuracy,std_accuracy"));
        // The diagonal is excluded from the pairwise CSV.
        let pw = std::fs::read_to_string(dir.path().join("pairwise_improvement.csv")).unwrap();
        assert_eq!(pw.lines().count(), 1 + 2);
    }

    #[test]
    fn stable_float_formatting_round_trips() {
        for v in [0.0, 1.0, 0.5, 0.1234567890123, 1e-9, 123456.75] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0");
        assert_eq!(fmt_f64(0.5), "0.5");
    }
}
