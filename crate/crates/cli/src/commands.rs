//! One driver per subcommand, plus the error classification that decides
//! the process exit code.
//!
//! Exit codes: 0 on success, 1 when the pipeline fails at runtime (the
//! message names the failing fold and phase), 2 for configuration and
//! usage errors. Progress goes to stderr through the logger; data goes to
//! files — the only data on stdout is the `compare` divergence list.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;

use reident_core::data::{write_manifest, ManifestEntry, Sample};
use reident_core::eval::{
    correlation_matrix, cross_validate, leave_one_out, pairwise_improvement,
    representation_size_sweep, CorrelationMatrix, ExperimentOutput,
};
use reident_core::seeding::{derive_seed, streams};
use reident_core::Real;

use crate::artifacts::{read_embedding_dump, write_run_outputs, EmbeddingDump};
use crate::config::{ExperimentConfig, SyntheticConfig};
use crate::report::{compare_reports, RunReport};
use crate::{AblateArgs, CompareArgs, CorrelateArgs, RunArgs, SynthArgs};

/// A failed invocation, split by whose fault it is.
#[derive(Debug)]
pub enum Failure {
    /// The configuration or usage is wrong; exit code 2.
    Config(anyhow::Error),
    /// The pipeline itself failed; exit code 1.
    Runtime(anyhow::Error),
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Classifies a `Result`'s error as configuration or runtime.
pub trait Classify<T> {
    fn or_config(self) -> CliResult<T>;
    fn or_runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_config(self) -> CliResult<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn or_runtime(self) -> CliResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure::Config(anyhow!(message.into()))
}

/// Installs the global worker pool. Safe to call once per process.
fn init_threads(threads: usize) -> CliResult<()> {
    if threads == 0 {
        return Err(config_error("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .or_runtime()
}

/// Loads, overrides, and validates the config, and picks the output
/// directory. Shared preamble of `run` and `ablate`.
fn prepare(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    threads: usize,
) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(config_path).or_config()?;
    config.apply_seed_override(seed);
    config.validate().or_config()?;
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            config_error("no output directory: set `output_dir` in the config or pass --out")
        })?;
    init_threads(threads)?;
    Ok((config, out_dir))
}

/// `run`: the full cross-validated evaluation, plus the correlation
/// analysis when the config asks for it.
pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let (config, out_dir) = prepare(&args.config, args.seed, args.out.as_deref(), args.threads)?;
    let (samples, dataset_hash) = config.load_samples().or_runtime()?;
    info!(
        "dataset ready: {} images, seed {}, writing to {}",
        samples.len(),
        config.settings.seed,
        out_dir.display()
    );

    let output: ExperimentOutput<Real> =
        cross_validate(&samples, &config.sub_models, &config.settings).or_runtime()?;
    let mut evaluation = output.report.clone();
    attach_correlation(&config, &output, &mut evaluation)?;
    if args.stable_output {
        evaluation.strip_timings();
    }

    let report = RunReport::new(config.clone(), dataset_hash, evaluation);
    write_run_outputs(
        &out_dir,
        "run",
        &report,
        &config,
        Some((&samples, &output)),
        args.threads,
        args.stable_output,
    )
    .or_runtime()?;
    info!("run complete: {}", out_dir.join("report.json").display());
    Ok(())
}

/// `ablate`: the same evaluation plus leave-one-out deltas, the pairwise
/// improvement matrix, and (when configured) the embedding-width sweep.
pub fn cmd_ablate(args: &AblateArgs) -> CliResult<()> {
    let (config, out_dir) =
        prepare(&args.run.config, args.run.seed, args.run.out.as_deref(), args.run.threads)?;
    if config.sub_models.len() < 2 {
        return Err(config_error(
            "ablation needs at least two sub-models to compare",
        ));
    }
    let (samples, dataset_hash) = config.load_samples().or_runtime()?;
    info!(
        "dataset ready: {} images, ablating {} sub-models",
        samples.len(),
        config.sub_models.len()
    );

    let output: ExperimentOutput<Real> =
        cross_validate(&samples, &config.sub_models, &config.settings).or_runtime()?;
    let names: Vec<String> = config.sub_models.iter().map(|m| m.name.clone()).collect();
    let mut evaluation = output.report.clone();
    attach_correlation(&config, &output, &mut evaluation)?;

    evaluation.leave_one_out = Some(
        leave_one_out(
            &output.rotations,
            &names,
            config.analysis.leave_one_out_ensemble,
            &config.settings,
        )
        .or_runtime()?,
    );
    info!("leave-one-out ablation done");
    evaluation.pairwise_improvement = Some(
        pairwise_improvement(&output.rotations, &names, &config.settings).or_runtime()?,
    );
    info!("pairwise improvement matrix done");

    if !args.skip_size_sweep && !config.analysis.size_sweep.is_empty() {
        let base_name = config
            .analysis
            .size_sweep_model
            .clone()
            .unwrap_or_else(|| names[0].clone());
        let base = config
            .sub_models
            .iter()
            .find(|m| m.name == base_name)
            .expect("validated: sweep model exists");
        evaluation.size_sweep = Some(
            representation_size_sweep::<Real>(
                &samples,
                base,
                &config.analysis.size_sweep,
                &config.settings,
            )
            .or_runtime()?,
        );
        info!("embedding-width sweep done");
    }

    if args.run.stable_output {
        evaluation.strip_timings();
    }
    let report = RunReport::new(config.clone(), dataset_hash, evaluation);
    write_run_outputs(
        &out_dir,
        "ablate",
        &report,
        &config,
        Some((&samples, &output)),
        args.run.threads,
        args.run.stable_output,
    )
    .or_runtime()?;
    info!("ablation complete: {}", out_dir.join("report.json").display());
    Ok(())
}

fn attach_correlation(
    config: &ExperimentConfig,
    output: &ExperimentOutput<Real>,
    evaluation: &mut reident_core::eval::EvaluationReport,
) -> CliResult<()> {
    if !config.analysis.correlation {
        return Ok(());
    }
    let names: Vec<String> = config.sub_models.iter().map(|m| m.name.clone()).collect();
    evaluation.correlation = Some(
        correlation_matrix(
            &output.rotations,
            &names,
            config.settings.correlation_trials,
            config.settings.seed,
        )
        .or_runtime()?,
    );
    info!("correlation matrix done");
    Ok(())
}

/// `synth`: writes a generated corpus as PNG files plus the manifest CSV
/// that `run` consumes, and records the parameters next to them.
pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let params = SyntheticConfig {
        subjects: args.subjects,
        views_per_subject: args.views,
        width: args.width,
        height: args.height,
        noise_sigma: args.noise_sigma,
        shift_max: args.shift_max,
        seed: args.seed,
    };
    params.validate().or_config()?;
    let samples = params.generate().or_runtime()?;

    let image_dir = args.out.join("images");
    fs::create_dir_all(&image_dir)
        .with_context(|| format!("cannot create {}", image_dir.display()))
        .or_runtime()?;

    let mut entries = Vec::with_capacity(samples.len());
    for sample in &samples {
        let file = format!("images/{}_v{}.png", sample.subject_id, sample.view_id);
        save_png(&args.out.join(&file), sample).or_runtime()?;
        entries.push(ManifestEntry {
            path: file,
            subject_id: sample.subject_id.clone(),
            view_id: sample.view_id,
            tag: sample.tag.clone(),
        });
    }
    let manifest_path = args.out.join("manifest.csv");
    write_manifest(&manifest_path, &entries).or_runtime()?;

    let mut params_json = serde_json::to_string_pretty(&params).expect("parameters serialize");
    params_json.push('\n');
    fs::write(args.out.join("synthetic_params.json"), params_json).or_runtime()?;

    info!(
        "wrote {} images ({} subjects x {} views) and {}",
        samples.len(),
        params.subjects,
        params.views_per_subject,
        manifest_path.display()
    );
    Ok(())
}

fn save_png(path: &Path, sample: &Sample) -> anyhow::Result<()> {
    let image = image::RgbImage::from_raw(
        sample.image.width() as u32,
        sample.image.height() as u32,
        sample.image.as_bytes().to_vec(),
    )
    .expect("buffer length matches dimensions");
    image
        .save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("cannot write {}", path.display()))
}

/// `compare`: prints every (method, rank) divergence beyond tolerance to
/// stdout. No divergences exits 0; any divergence exits 1; structurally
/// different reports exit 2.
pub fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    let a = RunReport::load(&args.report_a).or_config()?;
    let b = RunReport::load(&args.report_b).or_config()?;
    let divergences = compare_reports(&a, &b, args.tolerance).or_config()?;
    for d in &divergences {
        println!("{d}");
    }
    if divergences.is_empty() {
        info!(
            "reports agree on every method and rank within {}",
            args.tolerance
        );
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!(
            "{} of {} (method, rank) cells diverge beyond tolerance {}",
            divergences.len(),
            a.evaluation.methods.len() * a.evaluation.max_rank,
            args.tolerance
        )))
    }
}

/// `correlate`: estimates the triplet-order correlation matrix of saved
/// embedding dumps that cover the same rows.
pub fn cmd_correlate(args: &CorrelateArgs) -> CliResult<()> {
    if args.dumps.len() < 2 {
        return Err(config_error(
            "correlate needs at least two embedding dumps",
        ));
    }
    let mut dumps: Vec<EmbeddingDump> = Vec::with_capacity(args.dumps.len());
    for path in &args.dumps {
        dumps.push(read_embedding_dump(path).or_config()?);
    }
    for d in &dumps[1..] {
        if d.keys != dumps[0].keys {
            return Err(config_error(format!(
                "dump {} covers different rows than {}: correlations need the same images in the same order",
                d.name, dumps[0].name
            )));
        }
    }

    let m = dumps.len();
    let mut matrix = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let seed = derive_seed(args.seed, streams::CORRELATION, i as u64, j as u64);
            let corr = reident_core::eval::triplet_correlation(
                &dumps[i].rows,
                &dumps[j].rows,
                args.trials,
                seed,
            )
            .or_runtime()?;
            matrix[i][j] = corr;
            matrix[j][i] = corr;
        }
    }
    let result = CorrelationMatrix {
        names: dumps.iter().map(|d| d.name.clone()).collect(),
        matrix,
        trials: args.trials,
    };

    fs::create_dir_all(&args.out).or_runtime()?;
    let mut json = serde_json::to_string_pretty(&result).expect("matrix serializes");
    json.push('\n');
    fs::write(args.out.join("correlation.json"), json).or_runtime()?;
    write_correlation_csv(&args.out.join("correlation.csv"), &result).or_runtime()?;
    info!(
        "correlation matrix over {} models written to {}",
        m,
        args.out.display()
    );
    Ok(())
}

fn write_correlation_csv(path: &Path, result: &CorrelationMatrix) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string()];
    header.extend(result.names.iter().cloned());
    writer.write_record(&header)?;
    for (name, row) in result.names.iter().zip(&result.matrix) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
