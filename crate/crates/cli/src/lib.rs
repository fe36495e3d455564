//! Running experiments from configuration files and exporting their results.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use botl_core::botl::{run_framework, ExperimentResult};

pub use config::{ConfigError, ExperimentConfig, Format};
pub use output::SweepRow;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("run failed: {0}")]
    Runtime(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) | Self::Output { .. } => 3,
        }
    }
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    TauPerf,
    TauMi,
    TauCs,
    ScalingK,
}

impl SweepParam {
    pub const ALL: [Self; 4] = [Self::TauPerf, Self::TauMi, Self::TauCs, Self::ScalingK];

    pub fn name(self) -> &'static str {
        match self {
            Self::TauPerf => "tau_perf",
            Self::TauMi => "tau_mi",
            Self::TauCs => "tau_cs",
            Self::ScalingK => "scaling_k",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| ConfigError {
            file: None,
            line: None,
            field: Some("param".into()),
            message: format!(
                "unknown parameter `{name}`, expected one of {}",
                Self::ALL.map(|p| p.name()).join(", ")
            ),
        })
    }

    /// A copy of `cfg` with this parameter set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, ConfigError> {
        let mut out = cfg.clone();
        let sel = &mut out.selection;
        match self {
            Self::TauPerf => sel.tau_perf = value,
            Self::TauMi => sel.tau_mi = value,
            Self::TauCs => sel.tau_cs = value,
            Self::ScalingK => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(ConfigError {
                        file: None,
                        line: None,
                        field: Some("values".into()),
                        message: format!("scaling_k takes positive integers, got {value}"),
                    });
                }
                sel.scaling_k = value as usize;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

/// Parses a comma-separated list of numbers.
pub fn parse_values(list: &str) -> Result<Vec<f64>, ConfigError> {
    let err = |message: String| ConfigError { file: None, line: None, field: Some("values".into()), message };
    let values: Vec<f64> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| err(format!("not a number: `{s}`"))))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(err("no values given".into()));
    }
    Ok(values)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, CliError> {
    run_framework(&cfg.framework()).map_err(|e| CliError::Runtime(e.to_string()))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.to_path_buf(), source }
}

/// Writes `metrics.csv`, `summary.json` and `transfers.csv` into `dir`.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let p = dir.join(output::METRICS_FILE);
    output::write_metrics(&p, result).map_err(io(&p))?;
    let p = dir.join(output::SUMMARY_FILE);
    output::write_summary(&p, &result.summary()).map_err(io(&p))?;
    let p = dir.join(output::TRANSFERS_FILE);
    output::write_transfers(&p, &result.transfers).map_err(io(&p))?;
    Ok(())
}

/// Loads a config, applies command-line overrides and runs it. Returns
/// the output directory.
pub fn run_command(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir());
    let result = run_experiment(&cfg)?;
    write_outputs(&dir, &result)?;
    Ok(dir)
}

/// Runs one experiment per value, in parallel, all with the config's seed.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    let points: Vec<ExperimentConfig> = values.iter().map(|&v| param.apply(cfg, v)).collect::<Result<_, _>>()?;
    points
        .par_iter()
        .zip(values.par_iter())
        .map(|(point, &value)| {
            let result = run_experiment(point)?;
            let summary = result.summary();
            let meta = &summary.overall[&result.method];
            let cdd = &summary.overall["cdd"];
            Ok(SweepRow {
                param: param.name().into(),
                value,
                detector: format!("{:?}", result.detector).to_lowercase(),
                method: result.method.clone(),
                r2: meta.r2,
                cdd_r2: cdd.r2,
                r2_delta: meta.r2 - cdd.r2,
                mean_active_models: meta.mean_active_models,
                metric_calcs: meta.metric_calcs,
            })
        })
        .collect()
}

/// Loads a config, sweeps one parameter and writes `sweep.csv`. Returns
/// the path written.
pub fn sweep_command(
    config: &Path,
    param: &str,
    values: &str,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let param = SweepParam::parse(param)?;
    let values = parse_values(values)?;
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir());
    let rows = sweep(&cfg, param, &values)?;
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let p = dir.join(output::SWEEP_FILE);
    output::write_sweep(&p, &rows).map_err(io(&p))?;
    Ok(p)
}
