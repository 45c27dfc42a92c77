//! Run configuration: a TOML file with one table per subcommand. Every key
//! can be overridden with `--set table.key=value`; dedicated flags win last.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::encoding::{EncodeOptions, ZScoreMode, DEFAULT_ALPHA_GRID, DEFAULT_INNER_K, DEFAULT_K};
use crate::error::{Error, Result};
use crate::roi::Aggregator;
use crate::stats::UnitAxis;

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Upper bound on worker threads; defaults to the available parallelism.
    pub threads: Option<usize>,
    pub paths: Paths,
    pub simulate: SimulateConfig,
    pub glm: GlmConfig,
    pub roi: RoiConfig,
    pub encode: EncodeConfig,
    pub csaa: CsaaConfig,
    pub stats: StatsConfig,
}

/// Relative paths resolve against the output directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub subjects: PathBuf,
    pub masks: PathBuf,
    pub betas: PathBuf,
    pub responses: PathBuf,
    pub embeddings: PathBuf,
    pub truth: PathBuf,
    pub encode: PathBuf,
    pub csaa: PathBuf,
    pub stats: PathBuf,
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            subjects: "subjects".into(),
            masks: "masks.tsv".into(),
            betas: "betas".into(),
            responses: "responses".into(),
            embeddings: "embeddings".into(),
            truth: "truth".into(),
            encode: "encode".into(),
            csaa: "csaa".into(),
            stats: "stats".into(),
            report: "report".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub l: usize,
    pub d: usize,
    pub true_layer: usize,
    pub snr: f64,
    pub subjects: usize,
    pub rois: Vec<String>,
    pub voxels_per_roi: usize,
    /// The first model carries the planted signal; the rest are null models.
    pub models: Vec<String>,
    pub tr: f64,
    pub trial_spacing: f64,
    pub first_onset: f64,
    pub noise_sd: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 200,
            l: 6,
            d: 20,
            true_layer: 3,
            snr: 4.0,
            subjects: 2,
            rois: vec!["LH_IFG".into(), "RH_IFG".into(), "LH_AntTemp".into()],
            voxels_per_roi: 4,
            models: vec!["synthetic".into()],
            tr: 2.0,
            trial_spacing: 12.0,
            first_onset: 4.0,
            noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmConfig {
    pub tr: f64,
    /// Legendre drift degree; 0 keeps only the intercept.
    pub drift_order: usize,
}

impl Default for GlmConfig {
    fn default() -> Self {
        GlmConfig {
            tr: 2.0,
            drift_order: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub aggregator: String,
}

impl Default for RoiConfig {
    fn default() -> Self {
        RoiConfig {
            aggregator: "mean".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub k: usize,
    pub inner_k: usize,
    pub alpha_grid: Vec<f64>,
    /// Defaults to the global seed.
    pub fold_seed: Option<u64>,
    pub zscore: String,
    /// Provenance only: how the embeddings were pooled.
    pub pooling: String,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            k: DEFAULT_K,
            inner_k: DEFAULT_INNER_K,
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            fold_seed: None,
            zscore: "train".into(),
            pooling: "unspecified".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsaaConfig {
    /// Options TSV (item_id, option_label, text).
    pub options: Option<PathBuf>,
    /// Directory with one sub-directory per model holding source.nat and options.nat.
    pub embeddings: Option<PathBuf>,
    pub layer: Option<usize>,
    pub pooling: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// TSV with columns tuned, base.
    pub pairing: Option<PathBuf>,
    /// TSV with a model column and a percent or score column.
    pub performance: Option<PathBuf>,
    /// Region names (e.g. "IFG"); empty means every homologous pair present.
    pub pairs: Vec<String>,
    pub unit_axis: String,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            pairing: None,
            performance: None,
            pairs: Vec::new(),
            unit_axis: "model".into(),
        }
    }
}

impl Config {
    /// Parses TOML text, then applies `table.key=value` overrides in order.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut root, ov)?;
        }
        let cfg: Config = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => {
                    Error::Config(format!("config file {} not found", p.display()))
                }
                _ => Error::io(p, e),
            })?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.encode_options()?.validate()?;
        self.aggregator()?;
        self.unit_axis()?;
        if !(self.glm.tr > 0.0) {
            return Err(Error::Config(format!("glm.tr must be > 0, got {}", self.glm.tr)));
        }
        Ok(())
    }

    pub fn encode_options(&self) -> Result<EncodeOptions> {
        Ok(EncodeOptions {
            k: self.encode.k,
            inner_k: self.encode.inner_k,
            alpha_grid: self.encode.alpha_grid.clone(),
            seed: self.encode.fold_seed.unwrap_or(self.seed),
            zscore: self.encode.zscore.parse::<ZScoreMode>()?,
        })
    }

    pub fn aggregator(&self) -> Result<Aggregator> {
        self.roi
            .aggregator
            .parse()
            .map_err(|_| Error::Config(format!("unknown aggregator {:?}", self.roi.aggregator)))
    }

    pub fn unit_axis(&self) -> Result<UnitAxis> {
        self.stats
            .unit_axis
            .parse()
            .map_err(|_| Error::Config(format!("unknown unit axis {:?}", self.stats.unit_axis)))
    }
}

fn apply_override(root: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    // bare words are taken as strings
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
