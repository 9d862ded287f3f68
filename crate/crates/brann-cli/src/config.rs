//! Run configuration: TOML schema, validation, canonical echo and the
//! content-addressed run-directory scheme.
//!
//! The echo is the normalized configuration exactly as re-serialized after
//! defaults and command-line overrides are applied; its SHA-256 prefix names
//! the run directory, so identical configurations always map to the same
//! directory and any change lands in a fresh one.

use std::fs;
use std::path::{Path, PathBuf};

use brann::data::{FeatureSchema, SplitMode, SplitSpec};
use brann::features::Manifest;
use brann::network::TransferKind;
use brann::trainers::{AlgorithmKind, TrainingConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// Magic `features` value selecting the bundled synthetic fixture:
/// 100 samples of y = sin(3x) + N(0, 0.05²), generated from the run seed.
pub const BUILTIN_SINE: &str = "builtin:sine";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Prepared feature CSV, or `builtin:sine`. Mutually exclusive with `manifest`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    /// Raw-signal manifest to ingest on the fly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    /// Feature schema name: nasa | phm2010 | nuaa | inhouse | union.
    /// Required for feature CSVs; a manifest declares its own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    /// Output root for run directories. Excluded from the serialized echo:
    /// the run-directory hash addresses what was computed, not where it
    /// lands, so the same run is recognizable across output roots.
    #[serde(skip_serializing)]
    pub out: String,
    /// Independent repeats; repeat r uses seed + r for split and init.
    pub repeats: usize,
    pub seed: u64,
    pub split: SplitSection,
    pub network: NetworkSection,
    pub training: TrainingConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            features: None,
            manifest: None,
            schema: None,
            out: "runs".to_string(),
            repeats: 1,
            seed: 0,
            split: SplitSection::default(),
            network: NetworkSection::default(),
            training: TrainingConfig::default(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub mode: SplitMode,
    /// Pin the shuffle seed across repeats; unset, each repeat splits with
    /// its own sub-seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: 0.7,
            mode: SplitMode::Random,
            seed: None,
        }
    }
}

impl SplitSection {
    /// The concrete split request for one repeat.
    pub fn spec(&self, repeat_seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            mode: self.mode,
            seed: self.seed.unwrap_or(repeat_seed),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Hidden layer sizes; empty = a purely linear input→output map.
    pub hidden: Vec<usize>,
    /// Transfer function shared by all hidden layers; the output layer is
    /// always linear.
    pub transfer: String,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            hidden: vec![32],
            transfer: "tansig".to_string(),
        }
    }
}

impl NetworkSection {
    pub fn transfer_kind(&self) -> CliResult<TransferKind> {
        TransferKind::parse(&self.transfer)
            .map_err(|e| CliError::config(format!("network.transfer: {e}")))
    }
}

/// Grid axes; an empty axis leaves that dimension at the base value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub hidden_units: Vec<usize>,
    pub transfer: Vec<String>,
    pub train_fraction: Vec<f64>,
    pub algorithm: Vec<String>,
}

impl SweepSection {
    pub fn is_empty(&self) -> bool {
        self.hidden_units.is_empty()
            && self.transfer.is_empty()
            && self.train_fraction.is_empty()
            && self.algorithm.is_empty()
    }

    /// The four canned study shapes.
    pub fn preset(name: &str) -> CliResult<Self> {
        let mut s = SweepSection::default();
        match name {
            "hidden" => s.hidden_units = vec![8, 16, 32, 64],
            "transfer" => {
                s.transfer = TransferKind::ALL.iter().map(|t| t.name().to_string()).collect()
            }
            "ratio" => s.train_fraction = (1..=9).map(|i| i as f64 / 10.0).collect(),
            "algorithm" => {
                s.algorithm = AlgorithmKind::ALL.iter().map(|a| a.name().to_string()).collect()
            }
            other => {
                return Err(CliError::config(format!(
                    "unknown sweep preset `{other}` (expected hidden, transfer, ratio or algorithm)"
                )))
            }
        }
        Ok(s)
    }

    fn validate(&self) -> CliResult<()> {
        if let Some(&z) = self.hidden_units.iter().find(|&&h| h == 0) {
            return Err(CliError::config(format!("sweep.hidden_units: size {z} < 1")));
        }
        for t in &self.transfer {
            TransferKind::parse(t).map_err(|e| CliError::config(format!("sweep.transfer: {e}")))?;
        }
        for &f in &self.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::config(format!(
                    "sweep.train_fraction {f} outside (0, 1)"
                )));
            }
        }
        for a in &self.algorithm {
            AlgorithmKind::parse(a).map_err(|e| CliError::config(format!("sweep.algorithm: {e}")))?;
        }
        Ok(())
    }
}

/// Where the training data comes from, with paths resolved for IO.
#[derive(Debug, Clone)]
pub enum DataSource {
    BuiltinSine,
    Features { path: PathBuf, schema: String },
    Manifest { path: PathBuf },
}

/// A validated configuration plus its canonical echo and hash.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: RunConfig,
    pub echo: String,
    pub hash: String,
    pub source: DataSource,
    pub out_root: PathBuf,
    /// Directory the config file lives in; relative paths resolve here.
    pub config_dir: PathBuf,
}

/// 12-hex-character SHA-256 prefix used in run directory names.
pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(12);
    for b in &digest[..6] {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Load, override, validate and hash a run configuration.
///
/// Paths inside the file resolve relative to the file's directory;
/// `--out` resolves relative to the working directory and wins over the
/// configured root.
pub fn resolve(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
    repeats_override: Option<usize>,
) -> CliResult<Resolved> {
    let text = fs::read_to_string(config_path).map_err(|e| {
        CliError::config(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let mut cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", config_path.display())))?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(out) = out_override {
        cfg.out = out.to_string_lossy().into_owned();
    }
    if let Some(r) = repeats_override {
        cfg.repeats = r;
    }
    // The training seed is derived per repeat; pin the echoed value to the
    // run seed so two configs differing only there do not hash apart.
    cfg.training.seed = cfg.seed;
    let config_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    finish(cfg, &config_dir, out_override.is_some())
}

/// Validate an already-built configuration (sweep grid points).
pub fn resolve_point(cfg: RunConfig, config_dir: &Path, out_root: &Path) -> CliResult<Resolved> {
    let mut resolved = finish(cfg, config_dir, false)?;
    resolved.out_root = out_root.to_path_buf();
    Ok(resolved)
}

fn finish(cfg: RunConfig, config_dir: &Path, out_is_absolute_override: bool) -> CliResult<Resolved> {
    if cfg.repeats < 1 {
        return Err(CliError::config("repeats must be >= 1"));
    }
    cfg.split
        .spec(cfg.seed)
        .validate()
        .map_err(|e| CliError::config(format!("split: {e}")))?;
    cfg.network.transfer_kind()?;
    cfg.training
        .validate()
        .map_err(|e| CliError::config(format!("training: {e}")))?;
    if let Some(sweep) = &cfg.sweep {
        sweep.validate()?;
    }

    let source = match (&cfg.features, &cfg.manifest) {
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "set either `features` or `manifest`, not both",
            ))
        }
        (None, None) => {
            return Err(CliError::config(
                "a data source is required: `features` (CSV path or builtin:sine) or `manifest`",
            ))
        }
        (Some(f), None) if f == BUILTIN_SINE => DataSource::BuiltinSine,
        (Some(f), None) => {
            let schema = cfg.schema.clone().ok_or_else(|| {
                CliError::config("`schema` is required when `features` is a CSV path")
            })?;
            FeatureSchema::by_name(&schema)
                .map_err(|e| CliError::config(format!("schema: {e}")))?;
            let path = config_dir.join(f);
            if !path.is_file() {
                return Err(CliError::config(format!(
                    "features CSV {} does not exist",
                    path.display()
                )));
            }
            DataSource::Features { path, schema }
        }
        (None, Some(m)) => {
            let path = config_dir.join(m);
            if !path.is_file() {
                return Err(CliError::config(format!(
                    "manifest {} does not exist",
                    path.display()
                )));
            }
            let manifest = Manifest::load(&path)?;
            FeatureSchema::by_name(&manifest.schema)
                .map_err(|e| CliError::config(format!("manifest schema: {e}")))?;
            if let Some(s) = &cfg.schema {
                if *s != manifest.schema {
                    return Err(CliError::config(format!(
                        "config schema `{s}` disagrees with manifest schema `{}`",
                        manifest.schema
                    )));
                }
            }
            DataSource::Manifest { path }
        }
    };

    let echo = toml::to_string(&cfg)
        .map_err(|e| CliError::config(format!("cannot serialize config: {e}")))?;
    let hash = short_hash(&echo);
    let out_root = if out_is_absolute_override {
        PathBuf::from(&cfg.out)
    } else {
        config_dir.join(&cfg.out)
    };
    Ok(Resolved {
        cfg,
        echo,
        hash,
        source,
        out_root,
        config_dir: config_dir.to_path_buf(),
    })
}

/// Create `<out>/<label>-<hash>`, refusing to clobber unless forced.
pub fn create_run_dir(out_root: &Path, label: &str, hash: &str, force: bool) -> CliResult<PathBuf> {
    let dir = out_root.join(format!("{label}-{hash}"));
    if dir.exists() {
        if !force {
            return Err(CliError::config(format!(
                "run directory {} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(&dir).map_err(brann::Error::from)?;
    }
    fs::create_dir_all(&dir).map_err(brann::Error::from)?;
    Ok(dir)
}
