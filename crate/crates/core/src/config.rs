//! Run configuration: a single TOML document collecting the input files,
//! the entity and case-type selection, preprocessing, learning, scheme, and
//! output settings.
//!
//! Parsing is separated from filesystem checks: [`RunConfig::from_toml_str`]
//! validates every value invariant with a dotted field path in the error,
//! while [`RunConfig::validate_paths`] checks that the referenced input
//! files exist.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{CaseType, TransformSpec};
use crate::learner::{LearnerConfig, SolverTuning};
use crate::predictor::SchemeConfig;
use crate::{Error, Result};

/// Paths to the cumulative case CSVs, one per case type. A path is required
/// only when its case type is requested.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// Confirmed-cases CSV.
    pub confirmed: Option<PathBuf>,
    /// Deaths CSV.
    pub deaths: Option<PathBuf>,
    /// Recovered-cases CSV.
    pub recovered: Option<PathBuf>,
}

impl InputPaths {
    /// The configured path for a case type, if any.
    pub fn get(&self, case_type: CaseType) -> Option<&Path> {
        match case_type {
            CaseType::Confirmed => self.confirmed.as_deref(),
            CaseType::Deaths => self.deaths.as_deref(),
            CaseType::Recovered => self.recovered.as_deref(),
        }
    }

    fn field_name(case_type: CaseType) -> &'static str {
        match case_type {
            CaseType::Confirmed => "inputs.confirmed",
            CaseType::Deaths => "inputs.deaths",
            CaseType::Recovered => "inputs.recovered",
        }
    }
}

/// Scheme settings beyond the learner itself.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    /// Learning exponent for the online phase.
    pub online_beta: f64,
    /// L1 weight for partial fitting and extrapolation.
    pub lambda_prime: f64,
    /// Extrapolation horizon in days.
    pub horizon: usize,
    /// Number of randomized trials.
    pub trials: usize,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self { online_beta: 4.0, lambda_prime: 0.0, horizon: 30, trials: 8 }
    }
}

/// Output location.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Directory all command outputs are written into.
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out") }
    }
}

/// Behavioral switches.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeFlags {
    /// Restrict minibatch initialization to the first window so one-step
    /// predictions never see data from their own future.
    pub strict_causal: bool,
    /// Sort atoms by descending importance before writing checkpoints and
    /// importance tables.
    pub sort_atoms: bool,
}

impl Default for ModeFlags {
    fn default() -> Self {
        Self { strict_causal: false, sort_atoms: true }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Countries to include, matched exactly against the CSV country field.
    pub countries: Vec<String>,
    /// Case types to include, in row-block order.
    pub case_types: Vec<CaseType>,
    /// Input CSV paths.
    pub inputs: InputPaths,
    /// Preprocessing parameters.
    pub transform: TransformSpec,
    /// Learning hyperparameters (minibatch phase).
    pub learner: LearnerConfig,
    /// Scheme parameters (online phase and extrapolation).
    pub scheme: SchemeSection,
    /// Solver limits.
    pub solver: SolverTuning,
    /// Output location.
    pub output: OutputSection,
    /// Behavioral switches.
    pub mode: ModeFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            countries: [
                "Korea, South",
                "China",
                "US",
                "Italy",
                "Spain",
                "Germany",
            ]
            .map(String::from)
            .to_vec(),
            case_types: vec![CaseType::Confirmed, CaseType::Deaths, CaseType::Recovered],
            inputs: InputPaths::default(),
            transform: TransformSpec::default(),
            learner: LearnerConfig::default(),
            scheme: SchemeSection::default(),
            solver: SolverTuning::default(),
            output: OutputSection::default(),
            mode: ModeFlags::default(),
        }
    }
}

impl RunConfig {
    /// Parse a TOML document and validate every value invariant.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate_values()?;
        Ok(config)
    }

    /// Load and validate a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Validate all value invariants (no filesystem access).
    pub fn validate_values(&self) -> Result<()> {
        if self.countries.is_empty() {
            return Err(Error::config("countries", "must list at least one country"));
        }
        for (i, country) in self.countries.iter().enumerate() {
            if country.trim().is_empty() {
                return Err(Error::config(format!("countries[{i}]"), "must not be empty"));
            }
            if self.countries[..i].contains(country) {
                return Err(Error::config(
                    format!("countries[{i}]"),
                    format!("duplicate country {country:?}"),
                ));
            }
        }
        if self.case_types.is_empty() {
            return Err(Error::config("case_types", "must list at least one case type"));
        }
        for (i, case_type) in self.case_types.iter().enumerate() {
            if self.case_types[..i].contains(case_type) {
                return Err(Error::config(
                    format!("case_types[{i}]"),
                    format!("duplicate case type {case_type}"),
                ));
            }
        }
        self.transform.validate()?;
        self.learner.validate()?;
        if !(self.scheme.online_beta > 0.0) {
            return Err(Error::config("scheme.online_beta", "must be positive"));
        }
        if !(self.scheme.lambda_prime >= 0.0) {
            return Err(Error::config("scheme.lambda_prime", "must be nonnegative"));
        }
        if self.scheme.trials == 0 {
            return Err(Error::config("scheme.trials", "must be at least 1"));
        }
        self.solver.validate()?;
        if self.output.directory.as_os_str().is_empty() {
            return Err(Error::config("output.directory", "must not be empty"));
        }
        Ok(())
    }

    /// Check that every requested input file exists.
    pub fn validate_paths(&self) -> Result<()> {
        for &case_type in &self.case_types {
            let path = self.input_path(case_type)?;
            if !path.is_file() {
                return Err(Error::config(
                    InputPaths::field_name(case_type),
                    format!("input file not found: {}", path.display()),
                ));
            }
        }
        Ok(())
    }

    /// The input path for a requested case type; an error if unset.
    pub fn input_path(&self, case_type: CaseType) -> Result<&Path> {
        self.inputs.get(case_type).ok_or_else(|| {
            Error::config(
                InputPaths::field_name(case_type),
                format!("no input file configured for requested case type {case_type}"),
            )
        })
    }

    /// Assemble the scheme configuration from the learner, scheme, and mode
    /// sections.
    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            learner: self.learner.clone(),
            online_beta: self.scheme.online_beta,
            lambda_prime: self.scheme.lambda_prime,
            horizon: self.scheme.horizon,
            n_trials: self.scheme.trials,
            strict_causal: self.mode.strict_causal,
        }
    }
}
