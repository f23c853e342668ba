//! Experiment configuration files.
//!
//! A config is a JSON object; unknown keys are rejected. Fields left out take
//! the defaults below. Its hash (sha256 of the canonical serialization) is
//! stamped on every result row.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense::circuit::EnsembleSpec;
use crate::dense::hamiltonian::RydbergParams;
use crate::dense::prepare::StateSpec;
use crate::entanglement::OutcomeMode;
use crate::error::{param, Error, Result};
use crate::estimators::{FidelityMode, Uncertainty};
use crate::frame::PairMode;
use crate::region::check_sites;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    GhzFidelityVsDepth,
    BiasDemo,
    VarianceScaling,
    PauliVarianceVsDepth,
    TomographyComplexity,
    SandwichFidelity,
    FrameGapVsT,
    ApproximateFidelityVsT,
    ZErrorFidelity,
    SpectrumAndProjection,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [
        Self::GhzFidelityVsDepth,
        Self::BiasDemo,
        Self::VarianceScaling,
        Self::PauliVarianceVsDepth,
        Self::TomographyComplexity,
        Self::SandwichFidelity,
        Self::FrameGapVsT,
        Self::ApproximateFidelityVsT,
        Self::ZErrorFidelity,
        Self::SpectrumAndProjection,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).expect("unit variant")
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Parameter(format!("unknown experiment id {s:?}")))
    }
}

/// Sweep axes; each experiment reads the ones it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Circuit depths `L`.
    #[serde(default)]
    pub depths: Vec<usize>,
    /// Evolution times `T` (quench steps for DQIM).
    #[serde(default)]
    pub times: Vec<f64>,
    /// System sizes `N`.
    #[serde(default)]
    pub sites: Vec<usize>,
    /// Pauli string lengths `k` of `Z^k`.
    #[serde(default)]
    pub ks: Vec<usize>,
    /// Z-error probabilities.
    #[serde(default)]
    pub ps: Vec<f64>,
    /// DQIM couplings `J`.
    #[serde(default)]
    pub couplings: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Master seed of the whole run.
    pub seed: u64,
    #[serde(default = "default_sites")]
    pub n_sites: usize,
    /// Base ensemble for experiments that sweep a Hamiltonian ensemble.
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default = "default_state")]
    pub state: StateSpec,
    #[serde(default)]
    pub sweep: Sweep,
    /// Pauli strings to estimate, e.g. `"+ZZIIII"`.
    #[serde(default)]
    pub observables: Vec<String>,
    /// Snapshots per sweep point (`M`).
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Prior samples for the entanglement feature.
    #[serde(default = "default_ef_samples")]
    pub ef_samples: usize,
    #[serde(default = "default_ef_mode")]
    pub ef_mode: OutcomeMode,
    /// Member pairs for frame potentials.
    #[serde(default = "default_pairs")]
    pub frame_pairs: usize,
    #[serde(default = "default_pair_mode")]
    pub pair_mode: PairMode,
    /// Independent repetitions of each sweep point.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub uncertainty: Uncertainty,
    #[serde(default = "default_fidelity_mode")]
    pub fidelity_mode: FidelityMode,
    #[serde(default)]
    pub rydberg: RydbergParams,
    /// Evolution time of the Rydberg sandwich.
    #[serde(default = "default_rydberg_time")]
    pub rydberg_time: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_sites() -> usize {
    6
}
fn default_state() -> StateSpec {
    StateSpec::Ghz
}
fn default_samples() -> usize {
    5000
}
fn default_ef_samples() -> usize {
    2000
}
fn default_ef_mode() -> OutcomeMode {
    OutcomeMode::Sample
}
fn default_pairs() -> usize {
    400
}
fn default_pair_mode() -> PairMode {
    PairMode::Enumerate
}
fn default_repeats() -> usize {
    1
}
fn default_fidelity_mode() -> FidelityMode {
    FidelityMode::Mean
}
fn default_rydberg_time() -> f64 {
    1.0
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Defaults for `experiment`, matching the sweeps of the shipped configs.
    pub fn new(experiment: ExperimentId, seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment, "seed": seed }))
            .expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex sha256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        check_sites(self.n_sites)?;
        for n in self.sweep_sites() {
            check_sites(n)?;
        }
        if self.samples < 2 || self.ef_samples < 2 || self.frame_pairs < 2 {
            return param("samples, ef_samples and frame_pairs must be at least 2");
        }
        if self.repeats == 0 {
            return param("repeats must be positive");
        }
        let s = &self.sweep;
        if s.times.iter().chain(&s.couplings).any(|t| !t.is_finite() || *t < 0.0) {
            return param("sweep times and couplings must be finite and non-negative");
        }
        if s.ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return param("error probabilities must lie in [0, 1]");
        }
        if let Some(k) = s.ks.iter().find(|&&k| k == 0 || s.sites.iter().chain([&self.n_sites]).any(|&n| k > n)) {
            return param(format!("string length {k} outside 1..=N"));
        }
        if let Some(e) = &self.ensemble {
            e.validate()?;
        }
        if !(self.rydberg_time.is_finite() && self.rydberg_time >= 0.0) {
            return param("rydberg_time must be finite and non-negative");
        }
        Ok(())
    }

    /// `sweep.sites`, or `[n_sites]` when empty.
    pub fn sweep_sites(&self) -> Vec<usize> {
        if self.sweep.sites.is_empty() {
            vec![self.n_sites]
        } else {
            self.sweep.sites.clone()
        }
    }
}
