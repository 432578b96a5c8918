//! The TOML experiment configuration consumed by `run` and `ablate`.
//!
//! A config names a dataset (a manifest CSV on disk, or parameters for a
//! generated corpus), lists the sub-models to train, and carries the fold,
//! ensemble, and seeding settings. Every field has a sensible default
//! except the dataset and the sub-model list, so a minimal config is a
//! handful of lines. Unknown keys are rejected everywhere: a typo fails
//! fast instead of silently falling back to a default.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use reident_core::data::{generate_synthetic, load_dataset, Sample};
use reident_core::ensemble::EnsembleKind;
use reident_core::eval::{validate_sub_models, ExperimentSettings, SubModelSpec};

/// Parameters of a generated corpus: per-subject textures re-imaged several
/// times under seeded brightness, wraparound-shift, and pixel-noise
/// perturbations. The defaults describe the standard demo corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub views_per_subject: usize,
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
    /// Standard deviation of the additive per-pixel Gaussian noise.
    pub noise_sigma: f64,
    /// Largest horizontal wraparound shift a view may receive.
    pub shift_max: usize,
    /// Seed of the corpus itself, independent of the experiment seed.
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            subjects: 50,
            views_per_subject: 5,
            width: 128,
            height: 96,
            noise_sigma: 8.0,
            shift_max: 4,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    /// Cheap structural checks; the generator enforces the full contract.
    pub fn validate(&self) -> Result<()> {
        if self.subjects < 2 {
            bail!("synthetic corpus needs at least 2 subjects");
        }
        if self.views_per_subject < 2 {
            bail!("synthetic corpus needs at least 2 views per subject");
        }
        if self.width < 32 || self.height < 32 {
            bail!(
                "synthetic images must be at least 32x32, got {}x{}",
                self.width,
                self.height
            );
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            bail!("noise_sigma must be finite and non-negative");
        }
        Ok(())
    }

    /// Generates the corpus these parameters describe.
    pub fn generate(&self) -> reident_core::Result<Vec<Sample>> {
        generate_synthetic(
            self.subjects,
            self.views_per_subject,
            self.width,
            self.height,
            self.noise_sigma,
            self.shift_max,
            self.seed,
        )
    }
}

/// Where the labelled images come from: exactly one of the two sources.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Manifest CSV (`path,subject_id,view_id,tag`) listing image files.
    /// Relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Parameters of a generated corpus; mutually exclusive with `manifest`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

/// Optional analyses layered on top of the cross-validated evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Estimate the pairwise triplet-order correlation matrix during `run`
    /// and `ablate`.
    pub correlation: bool,
    /// Ensemble the leave-one-out ablation refits (`ablate`).
    pub leave_one_out_ensemble: EnsembleKind,
    /// Embedding widths retrained for the size sweep (`ablate`); empty
    /// skips the sweep.
    pub size_sweep: Vec<usize>,
    /// Sub-model the size sweep retrains; defaults to the first one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_sweep_model: Option<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            correlation: false,
            leave_one_out_ensemble: EnsembleKind::Concatenation,
            size_sweep: Vec::new(),
            size_sweep_model: None,
        }
    }
}

/// One complete experiment description, as parsed from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Where run artifacts land unless `--out` overrides it. Relative to
    /// the invoking directory, not the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    /// Declared as repeated `[[sub_model]]` tables. Leaving them out
    /// parses, but validation requires at least one.
    #[serde(default, rename = "sub_model")]
    pub sub_models: Vec<SubModelSpec>,
    #[serde(default)]
    pub settings: ExperimentSettings,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Parses a TOML config file. Relative dataset and feature-import paths
    /// are resolved against the config file's directory, so a config plus
    /// its data travel as a unit.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if let Some(m) = &mut config.dataset.manifest {
            *m = resolve(base, m);
        }
        for sm in &mut config.sub_models {
            if let Some(p) = &mut sm.import_path {
                *p = resolve(base, p);
            }
        }
        Ok(config)
    }

    /// Applies command-line overrides; the echoed config in the report
    /// reflects the values actually used.
    pub fn apply_seed_override(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.settings.seed = s;
        }
    }

    /// Full structural validation, run before any training starts. Errors
    /// here are configuration mistakes, not runtime failures.
    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.manifest, &self.dataset.synthetic) {
            (None, None) => bail!("dataset needs either `manifest` or `synthetic`"),
            (Some(_), Some(_)) => {
                bail!("dataset sets both `manifest` and `synthetic`; pick one")
            }
            (Some(path), None) => {
                if !path.is_file() {
                    bail!("dataset manifest {} does not exist", path.display());
                }
            }
            (None, Some(synth)) => synth.validate()?,
        }
        validate_sub_models(&self.sub_models).map_err(anyhow::Error::from)?;
        self.settings.validate().map_err(anyhow::Error::from)?;
        for sm in &self.sub_models {
            if let Some(p) = &sm.import_path {
                if !p.is_file() {
                    bail!(
                        "sub-model `{}` imports features from {}, which does not exist",
                        sm.name,
                        p.display()
                    );
                }
            }
        }
        if self.analysis.size_sweep.iter().any(|&d| d == 0) {
            bail!("size_sweep widths must all be at least 1");
        }
        if let Some(name) = &self.analysis.size_sweep_model {
            if !self.sub_models.iter().any(|m| &m.name == name) {
                bail!("size_sweep_model `{name}` does not name a configured sub-model");
            }
        }
        Ok(())
    }

    /// Loads the dataset together with a content hash that pins its
    /// identity inside the report: SHA-256 of the manifest file's bytes, or
    /// of the canonical JSON of the synthetic parameters.
    pub fn load_samples(&self) -> Result<(Vec<Sample>, String)> {
        match (&self.dataset.manifest, &self.dataset.synthetic) {
            (Some(path), None) => {
                let bytes = fs::read(path)
                    .with_context(|| format!("cannot read manifest {}", path.display()))?;
                let hash = hex_digest(&bytes);
                let samples = load_dataset(path)
                    .with_context(|| format!("loading dataset from {}", path.display()))?;
                Ok((samples, hash))
            }
            (None, Some(synth)) => {
                let canon = serde_json::to_vec(synth).expect("synthetic parameters serialize");
                let samples = synth.generate()?;
                Ok((samples, hex_digest(&canon)))
            }
            _ => bail!("dataset needs exactly one of `manifest` or `synthetic`"),
        }
    }
}

/// `sha256:<hex>` digest of a byte string.
pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{:x}", hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use reident_core::features::FeatureMethod;
    use std::io::Write;

    const MINIMAL: &str = r#"
        [dataset.synthetic]
        subjects = 6
        views_per_subject = 3
        width = 32
        height = 32

        [[sub_model]]
        name = "brightness"
        feature = { method = "brightness" }
    "#;

    fn write_config(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("config.toml");
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    #[test]
    fn minimal_config_parses_with_defaults_filled_in() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::load(&write_config(dir.path(), MINIMAL)).unwrap();
        config.validate().unwrap();

        let synth = config.dataset.synthetic.as_ref().unwrap();
        assert_eq!(synth.subjects, 6);
        assert_eq!(synth.noise_sigma, 8.0);
        assert_eq!(synth.shift_max, 4);
        assert_eq!(config.sub_models.len(), 1);
        assert_eq!(config.sub_models[0].feature.method, FeatureMethod::Brightness);
        assert_eq!(config.sub_models[0].hidden, vec![100, 100, 100]);
        assert_eq!(config.sub_models[0].embedding_dim, 50);
        assert_eq!(config.settings.k_folds, 5);
        assert_eq!(config.settings.ensembles.len(), 5);
        assert!(!config.analysis.correlation);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let dir = tempfile::tempdir().unwrap();
        for bad in [
            MINIMAL.replace("[dataset.synthetic]", "[dataset.synthetic]\nsubjcts = 9"),
            MINIMAL.replace("name = \"brightness\"", "name = \"brightness\"\nhiden = [5]"),
            format!("{MINIMAL}\n[settings]\nk_fold = 4"),
            format!("{MINIMAL}\n[analysis]\ncorrrelation = true"),
        ] {
            let err = ExperimentConfig::load(&write_config(dir.path(), &bad)).unwrap_err();
            assert!(format!("{err:#}").contains("cannot parse"), "{err:#}");
        }
    }

    #[test]
    fn validation_rejects_incoherent_configs() {
        let dir = tempfile::tempdir().unwrap();
        let cases: Vec<(String, &str)> = vec![
            (
                MINIMAL.replace(
                    "[dataset.synthetic]",
                    "[dataset]\nmanifest = \"nowhere.csv\"\n\n[dataset.synthetic]",
                ),
                "pick one",
            ),
            (
                "
                [dataset]
                manifest = \"missing.csv\"

                [[sub_model]]
                name = \"b\"
                feature = { method = \"brightness\" }
                "
                .to_string(),
                "does not exist",
            ),
            (
                "
                [dataset.synthetic]
                subjects = 6
                views_per_subject = 3
                "
                .to_string(),
                "at least one sub-model required",
            ),
            (
                format!("{MINIMAL}\n[analysis]\nsize_sweep = [10]\nsize_sweep_model = \"nope\""),
                "does not name a configured sub-model",
            ),
        ];
        for (text, needle) in cases {
            let config = ExperimentConfig::load(&write_config(dir.path(), &text)).unwrap();
            let err = config.validate().unwrap_err();
            assert!(
                format!("{err:#}").contains(needle),
                "expected {needle:?} in {err:#}"
            );
        }
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("nested");
        fs::create_dir(&sub).unwrap();
        let text = "
            [dataset]
            manifest = \"data/manifest.csv\"

            [[sub_model]]
            name = \"graph\"
            feature = { method = \"imported\" }
            import_path = \"features.csv\"
        ";
        let config = ExperimentConfig::load(&write_config(&sub, text)).unwrap();
        assert_eq!(
            config.dataset.manifest.as_deref().unwrap(),
            sub.join("data/manifest.csv")
        );
        assert_eq!(
            config.sub_models[0].import_path.as_deref().unwrap(),
            sub.join("features.csv")
        );
    }

    #[test]
    fn seed_override_lands_in_the_settings() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::load(&write_config(dir.path(), MINIMAL)).unwrap();
        assert_eq!(config.settings.seed, 0);
        config.apply_seed_override(Some(99));
        assert_eq!(config.settings.seed, 99);
        config.apply_seed_override(None);
        assert_eq!(config.settings.seed, 99);
    }

    #[test]
    fn synthetic_hash_depends_on_every_parameter() {
        let base = SyntheticConfig::default();
        let base_hash = hex_digest(&serde_json::to_vec(&base).unwrap());
        let mut tweaked = base.clone();
        tweaked.seed += 1;
        let tweaked_hash = hex_digest(&serde_json::to_vec(&tweaked).unwrap());
        assert_ne!(base_hash, tweaked_hash);
        assert!(base_hash.starts_with("sha256:"));
    }
}
