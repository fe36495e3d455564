//! Experiment configuration files, in TOML or JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use botl_core::botl::{BotlError, FrameworkConfig, TransferPolicy};
use botl_core::cdd::CddConfig;
use botl_core::selection::{SelectionParams, SelectorKind};
use botl_core::streams::StreamConfig;

pub const DEFAULT_OUT_DIR: &str = "results";

/// Everything needed to run one experiment. Only `seed` and `streams` are
/// required; the rest fall back to the framework defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub streams: Vec<StreamConfig>,
    #[serde(default)]
    pub detector: CddConfig,
    #[serde(default = "default_selector")]
    pub selector: SelectorKind,
    #[serde(default)]
    pub transfer_policy: TransferPolicy,
    #[serde(default = "default_transfer")]
    pub transfer: bool,
    #[serde(default)]
    pub selection: SelectionParams,
    #[serde(default)]
    pub reselect_every: Option<usize>,
}

fn default_selector() -> SelectorKind {
    FrameworkConfig::default().selector
}

fn default_transfer() -> bool {
    true
}

/// A configuration problem, located as precisely as the input allows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn new(field: Option<String>, message: impl Into<String>) -> Self {
        Self { file: None, line: None, field, message: message.into() }
    }

    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Some(field.into()), message)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{}", file.display())?;
            if let Some(line) = self.line {
                write!(f, ":{line}")?;
            }
            write!(f, ": ")?;
        } else if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn of(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Toml,
        }
    }
}

impl ExperimentConfig {
    /// Reads, parses and validates a config file. Relative CSV paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            field: None,
            message: format!("cannot read config: {e}"),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, Format::of(path), base).map_err(|e| ConfigError { file: Some(path.to_path_buf()), ..e })
    }

    pub fn parse(text: &str, format: Format, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = match format {
            Format::Toml => {
                let de = toml::Deserializer::new(text);
                serde_path_to_error::deserialize(de).map_err(|e| {
                    let line = e.inner().span().map(|s| line_of(text, s.start));
                    ConfigError { line, ..ConfigError::new(field_path(e.path()), e.inner().message()) }
                })?
            }
            Format::Json => {
                let mut de = serde_json::Deserializer::from_str(text);
                serde_path_to_error::deserialize(&mut de).map_err(|e| {
                    let line = Some(e.inner().line()).filter(|&l| l > 0);
                    let message = strip_position(&e.inner().to_string());
                    ConfigError { line, ..ConfigError::new(field_path(e.path()), message) }
                })?
            }
        };
        for s in &mut cfg.streams {
            if let Some(csv) = &mut s.csv {
                if csv.path.is_relative() {
                    csv.path = base_dir.join(&csv.path);
                }
            }
        }
        cfg.validate().map_err(|e| {
            let line = e.field.as_deref().and_then(|f| locate(text, f, format));
            ConfigError { line, ..e }
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.streams.is_empty() {
            return Err(ConfigError::field("streams", "at least one stream is required"));
        }
        let sel = &self.selection;
        for (name, v) in [("tau_perf", sel.tau_perf), ("tau_mi", sel.tau_mi), ("tau_cs", sel.tau_cs)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::field(format!("selection.{name}"), format!("must lie in [0, 1], got {v}")));
            }
        }
        if sel.scaling_k == 0 {
            return Err(ConfigError::field("selection.scaling_k", "must be at least 1"));
        }
        if sel.mi_bins < 2 {
            return Err(ConfigError::field("selection.mi_bins", "must be at least 2"));
        }
        if sel.max_clusters == 0 {
            return Err(ConfigError::field("selection.max_clusters", "must be at least 1"));
        }
        let det = &self.detector;
        if !(det.delta > 0.0 && det.delta < 1.0) {
            return Err(ConfigError::field("detector.delta", format!("must lie in (0, 1), got {}", det.delta)));
        }
        if !(det.retention > 0.0 && det.retention <= 1.0) {
            return Err(ConfigError::field("detector.retention", format!("must lie in (0, 1], got {}", det.retention)));
        }
        if !(det.lambda >= 0.0) {
            return Err(ConfigError::field("detector.lambda", "must be non-negative"));
        }
        if det.consecutive == 0 {
            return Err(ConfigError::field("detector.consecutive", "must be at least 1"));
        }
        if !det.tau_d.is_finite() || !det.tau_reuse.is_finite() {
            return Err(ConfigError::field("detector", "thresholds must be finite"));
        }
        if self.reselect_every == Some(0) {
            return Err(ConfigError::field("reselect_every", "must be at least 1"));
        }
        for (i, s) in self.streams.iter().enumerate() {
            if let Some(csv) = &s.csv {
                if !csv.path.is_file() {
                    return Err(ConfigError::field(
                        format!("streams[{i}].csv.path"),
                        format!("file not found: {}", csv.path.display()),
                    ));
                }
            }
        }
        self.framework().validate().map_err(|e| match e {
            BotlError::NoStreams => ConfigError::field("streams", e.to_string()),
            BotlError::ConfigMismatch { stream, .. } => ConfigError::field(format!("streams[{stream}].detector"), e.to_string()),
            BotlError::Stream { stream, source } => ConfigError::field(format!("streams[{stream}]"), source.to_string()),
        })
    }

    pub fn framework(&self) -> FrameworkConfig {
        FrameworkConfig {
            streams: self.streams.clone(),
            detector: self.detector.clone(),
            selector: self.selector,
            selection: self.selection.clone(),
            transfer_policy: self.transfer_policy,
            transfer: self.transfer,
            reselect_every: self.reselect_every,
            seed: self.seed,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

fn field_path(path: &serde_path_to_error::Path) -> Option<String> {
    let s = path.to_string();
    (s != "." && !s.is_empty()).then_some(s)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// serde_json appends " at line L column C"; the line is reported separately.
fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

/// Best-effort line of the key named by the last segment of `field`.
fn locate(text: &str, field: &str, format: Format) -> Option<usize> {
    let key = field.rsplit('.').next()?.split('[').next()?;
    if key.is_empty() {
        return None;
    }
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            match format {
                Format::Toml => l.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('=')),
                Format::Json => l.strip_prefix(&format!("\"{key}\"")).is_some_and(|r| r.trim_start().starts_with(':')),
            }
        })
        .map(|i| i + 1)
}
