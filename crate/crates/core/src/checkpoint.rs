//! Versioned JSON model checkpoints.
//!
//! A checkpoint captures everything needed to resume or reuse a learned
//! model: dimensions, the dictionary tensor in row-major `(row, time, atom)`
//! order, the aggregate matrices, the importance accumulator, the step
//! counter and learning exponent, and an echo of the learner config.
//! JSON-representable doubles round-trip bit-exactly.

use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};

use crate::learner::{AggregateState, LearnerConfig, LearnerOptions, OnlineLearner};
use crate::tensor::DictionaryTensor;
use crate::{Error, Result};

/// Current checkpoint format version.
pub const FORMAT_VERSION: u32 = 1;

/// Serialized model state.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    /// Format version; currently always [`FORMAT_VERSION`].
    pub format_version: u32,
    /// Number of panel rows `d`.
    pub d: usize,
    /// Window length `k`.
    pub k: usize,
    /// Number of atoms `r`.
    pub r: usize,
    /// Learning exponent in effect when the state was saved.
    pub beta: f64,
    /// Number of learning steps folded into the aggregates.
    pub step: u64,
    /// Dictionary entries, row-major `(row, time, atom)`, length `d*k*r`.
    pub dictionary: Vec<f64>,
    /// Aggregate `A`, row-major `r x r`.
    pub aggregate_a: Vec<f64>,
    /// Aggregate `B`, row-major `r x (d*k)`.
    pub aggregate_b: Vec<f64>,
    /// Importance accumulator, length `r`.
    pub importance: Vec<f64>,
    /// Echo of the learner configuration that produced this state.
    pub config: LearnerConfig,
}

impl ModelCheckpoint {
    /// Snapshot a learner.
    pub fn from_learner(learner: &OnlineLearner) -> Self {
        let dict = learner.dictionary();
        let agg = learner.aggregate();
        Self {
            format_version: FORMAT_VERSION,
            d: dict.num_rows(),
            k: dict.window(),
            r: dict.num_atoms(),
            beta: agg.beta(),
            step: agg.step(),
            dictionary: dict.values().iter().copied().collect(),
            aggregate_a: agg.a().iter().copied().collect(),
            aggregate_b: agg.b().iter().copied().collect(),
            importance: dict.importance().to_vec(),
            config: learner.config().clone(),
        }
    }

    /// Validate internal consistency (version, dimensions, finiteness).
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidCheckpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.d == 0 || self.k == 0 || self.r == 0 {
            return Err(Error::InvalidCheckpoint("dimensions must be nonzero".into()));
        }
        let dk = self
            .d
            .checked_mul(self.k)
            .ok_or_else(|| Error::InvalidCheckpoint("d * k overflows".into()))?;
        let dkr = dk
            .checked_mul(self.r)
            .ok_or_else(|| Error::InvalidCheckpoint("d * k * r overflows".into()))?;
        let rr = self
            .r
            .checked_mul(self.r)
            .ok_or_else(|| Error::InvalidCheckpoint("r * r overflows".into()))?;
        let rdk = self
            .r
            .checked_mul(dk)
            .ok_or_else(|| Error::InvalidCheckpoint("r * d * k overflows".into()))?;
        if self.dictionary.len() != dkr {
            return Err(Error::InvalidCheckpoint(format!(
                "dictionary has {} entries, expected {dkr}",
                self.dictionary.len()
            )));
        }
        if self.aggregate_a.len() != rr {
            return Err(Error::InvalidCheckpoint(format!(
                "aggregate A has {} entries, expected {rr}",
                self.aggregate_a.len()
            )));
        }
        if self.aggregate_b.len() != rdk {
            return Err(Error::InvalidCheckpoint(format!(
                "aggregate B has {} entries, expected {rdk}",
                self.aggregate_b.len()
            )));
        }
        if self.importance.len() != self.r {
            return Err(Error::InvalidCheckpoint(format!(
                "importance has {} entries, expected {}",
                self.importance.len(),
                self.r
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidCheckpoint("beta must be positive".into()));
        }
        let all = self
            .dictionary
            .iter()
            .chain(&self.aggregate_a)
            .chain(&self.aggregate_b)
            .chain(&self.importance);
        for &v in all {
            if !v.is_finite() {
                return Err(Error::InvalidCheckpoint("non-finite entry".into()));
            }
        }
        if self.dictionary.iter().any(|&v| v < 0.0) || self.importance.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidCheckpoint("negative dictionary or importance entry".into()));
        }
        if self.config.segment_length != self.k || self.config.num_atoms != self.r {
            return Err(Error::InvalidCheckpoint(
                "config echo disagrees with stored dimensions".into(),
            ));
        }
        Ok(())
    }

    /// Rebuild the dictionary and aggregate state.
    pub fn into_state(self) -> Result<(DictionaryTensor, AggregateState, LearnerConfig)> {
        self.validate()?;
        let dk = self.d * self.k;
        let values = Array3::from_shape_vec((self.d, self.k, self.r), self.dictionary)
            .expect("validated length");
        let importance = Array1::from_vec(self.importance);
        let dict = DictionaryTensor::with_importance(values, importance)?;
        let a = Array2::from_shape_vec((self.r, self.r), self.aggregate_a)
            .expect("validated length");
        let b = Array2::from_shape_vec((self.r, dk), self.aggregate_b).expect("validated length");
        let agg = AggregateState::from_parts(a, b, self.step, self.beta)?;
        Ok((dict, agg, self.config))
    }

    /// Rebuild a full learner with the given solver options.
    pub fn into_learner(self, opts: LearnerOptions) -> Result<OnlineLearner> {
        let (dict, agg, config) = self.into_state()?;
        OnlineLearner::from_state(dict, agg, config, opts)
    }

    /// Parse and validate a checkpoint from raw JSON bytes.
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let checkpoint: ModelCheckpoint = serde_json::from_slice(bytes)?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    /// Parse and validate a checkpoint from a reader.
    pub fn from_reader(mut reader: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        reader
            .read_to_end(&mut buf)
            .map_err(|e| Error::io("<reader>", e))?;
        Self::from_slice(&buf)
    }

    /// Load a checkpoint file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_slice(&bytes)
    }

    /// Write the checkpoint as pretty-printed JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}
