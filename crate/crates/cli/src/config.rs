//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lndm::inference::GridConfig;
use lndm::io::{CsvSchema, ZeroPolicy};
use lndm::model_spec::{PriorSpec, StructureType};

use crate::CliError;

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select: Option<SelectConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("lndm-out"),
        }
    }
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_true() -> bool {
    true
}

/// Input file and its column mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub categories: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<[String; 2]>,
    #[serde(default)]
    pub zero_policy: ZeroPolicy,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            categories: self.categories.clone(),
            covariates: self.covariates.clone(),
            coords: self.coords.clone(),
            zero_policy: self.zero_policy,
            epsilon: self.epsilon,
            standardize: self.standardize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub structure: StructureType,
    /// Covariates entering the linear predictors; all data covariates when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    /// Reference category name; the last category when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default)]
    pub priors: PriorSpec,
    #[serde(default)]
    pub constrain_shared: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpoChoice {
    /// Exact refits up to `exact_max_rows` compositions, importance
    /// sampling above.
    #[default]
    Auto,
    Exact,
    Importance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Posterior draws shared by DIC, WAIC and importance CPO.
    pub samples: usize,
    pub cpo: CpoChoice,
    pub exact_max_rows: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            cpo: CpoChoice::Auto,
            exact_max_rows: 50,
        }
    }
}

fn default_draws() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// CSV with the model's covariates (raw scale) and, for spatial
    /// structures, the coordinate columns named in `[data]`.
    pub path: PathBuf,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub structures: Vec<StructureType>,
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    Direct,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub structure: StructureType,
    pub parts: usize,
    /// One-based reference category; the last when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<usize>,
    /// `[intercept, slopes…]`, once or per alr coordinate.
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proportional: Vec<f64>,
    pub n: usize,
    #[serde(default)]
    pub noise: Noise,
    /// Output file name inside the output directory.
    #[serde(default = "default_sim_file")]
    pub file: String,
}

fn default_sim_file() -> String {
    "simulated.csv".into()
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::User(format!("invalid config: {e}")))
    }

    /// Reads a config file; relative data paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config '{}': {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.data.as_mut() {
            resolve(&mut d.path);
        }
        if let Some(p) = cfg.predict.as_mut() {
            resolve(&mut p.path);
        }
        resolve(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::User(format!("cannot serialise config: {e}")))
    }

    pub fn data(&self) -> Result<&DataConfig, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::User("config has no [data] section".into()))
    }

    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::User("config has no [model] section".into()))
    }
}
