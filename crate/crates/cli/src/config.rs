//! Run configuration: one JSON document for every subcommand.

use std::path::{Path, PathBuf};

use heliqsim_core::electrostatics::{DeviceGeometry, LaplaceSettings};
use heliqsim_core::optimizer::{ConfigIIITargets, ConfigITargets, OptimizerConfig, PipelineSettings};
use heliqsim_core::units::UnitSystem;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Uniform λ grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lambda_min: 0.0,
            lambda_max: 2.0,
            points: 101,
        }
    }
}

impl SweepGrid {
    /// Parses `min:max:points`.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("--lambda expects min:max:points, got {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            lambda_min: parts[0].trim().parse().map_err(|_| bad())?,
            lambda_max: parts[1].trim().parse().map_err(|_| bad())?,
            points: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lambda_min];
        }
        let step = (self.lambda_max - self.lambda_min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                if k == self.points - 1 {
                    self.lambda_max
                } else {
                    self.lambda_min + k as f64 * step
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.points == 0 {
            return Err(CliError::Config("sweep.points must be at least 1".into()));
        }
        if !self.lambda_min.is_finite() || !self.lambda_max.is_finite() {
            return Err(CliError::Config(
                "sweep.lambda_min and sweep.lambda_max must be finite".into(),
            ));
        }
        if self.points > 1 && self.lambda_max <= self.lambda_min {
            return Err(CliError::Config("sweep.lambda_max must exceed sweep.lambda_min".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: DeviceGeometry,
    pub x0_nm: f64,
    pub laplace: LaplaceSettings,
    pub pipeline: PipelineSettings,
    pub optimizer: OptimizerConfig,
    pub targets_i: ConfigITargets,
    pub targets_iii: ConfigIIITargets,
    pub sweep: SweepGrid,
    pub output_dir: PathBuf,
    /// Coupling-table cache; `<output_dir>/cache` when absent.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: DeviceGeometry::default(),
            x0_nm: heliqsim_core::units::DEFAULT_X0_NM,
            laplace: LaplaceSettings::default(),
            pipeline: PipelineSettings::default(),
            optimizer: OptimizerConfig::default(),
            targets_i: ConfigITargets::default(),
            targets_iii: ConfigIIITargets::default(),
            sweep: SweepGrid::default(),
            output_dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn units(&self) -> Result<UnitSystem, CliError> {
        UnitSystem::derive(self.x0_nm).map_err(|e| CliError::Config(format!("x0_nm: {e}")))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry
            .validate()
            .map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        self.units()?;
        if !(self.laplace.tolerance > 0.0) || self.laplace.max_cycles == 0 {
            return Err(CliError::Config(
                "laplace.tolerance must be positive and laplace.max_cycles nonzero".into(),
            ));
        }
        let p = &self.pipeline;
        if p.points_per_well < heliqsim_core::dvr::MIN_POINTS {
            return Err(CliError::Config(format!(
                "pipeline.points_per_well must be at least {}",
                heliqsim_core::dvr::MIN_POINTS
            )));
        }
        if !(p.epsilon > 0.0) {
            return Err(CliError::Config("pipeline.epsilon must be positive".into()));
        }
        if !(p.kappa_scale >= 0.0) || !p.kappa_scale.is_finite() {
            return Err(CliError::Config(
                "pipeline.kappa_scale must be finite and non-negative".into(),
            ));
        }
        if let Some(m) = p.margin_x0 {
            if !(m > 0.0) {
                return Err(CliError::Config("pipeline.margin_x0 must be positive".into()));
            }
        }
        if p.scf.n_left < 2 || p.scf.n_right < 2 {
            return Err(CliError::Config(
                "pipeline.scf.n_left and pipeline.scf.n_right must be at least 2".into(),
            ));
        }
        self.optimizer
            .validate()
            .map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        self.sweep.validate()
    }

    /// Hex SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
