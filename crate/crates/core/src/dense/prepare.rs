//! Input states for the protocols.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::state::{DensityMatrix, PureState};
use crate::error::{param, Result};
use crate::rng::{derive_seed, rng_from_seed, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum StateSpec {
    Ghz,
    /// `(1-p)|GHZ+><GHZ+| + p|GHZ-><GHZ-|`.
    ZErrorGhz { p: f64 },
    /// Haar-random pure state drawn from `seed`.
    RandomHaar { seed: u64 },
    Basis { b: u64 },
}

/// A pure state, or a finite mixture sampled shot by shot.
#[derive(Clone, Debug)]
pub enum PreparedState {
    Pure(PureState),
    Mixture(Vec<(f64, PureState)>),
}

impl PreparedState {
    pub fn n_sites(&self) -> usize {
        match self {
            Self::Pure(s) => s.n_sites(),
            Self::Mixture(parts) => parts[0].1.n_sites(),
        }
    }

    /// The pure state fed to the simulator on one shot.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &PureState {
        match self {
            Self::Pure(s) => s,
            Self::Mixture(parts) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, s) in parts {
                    acc += w;
                    if u < acc {
                        return s;
                    }
                }
                &parts.last().expect("non-empty mixture").1
            }
        }
    }

    /// The pure state of shot `index` under `master_seed`.
    pub fn shot(&self, master_seed: u64, index: u64) -> &PureState {
        match self {
            Self::Pure(s) => s,
            Self::Mixture(_) => self.sample(&mut rng_from_seed(derive_seed(master_seed, Stream::State, index))),
        }
    }

    pub fn density_matrix(&self) -> Result<DensityMatrix> {
        match self {
            Self::Pure(s) => Ok(s.density_matrix()),
            Self::Mixture(parts) => {
                let refs: Vec<(f64, &PureState)> = parts.iter().map(|(w, s)| (*w, s)).collect();
                DensityMatrix::mixture(&refs)
            }
        }
    }
}

pub fn prepare_state(spec: &StateSpec, n_sites: usize) -> Result<PreparedState> {
    match *spec {
        StateSpec::Ghz => Ok(PreparedState::Pure(PureState::ghz(n_sites)?)),
        StateSpec::ZErrorGhz { p } => {
            if !(0.0..=1.0).contains(&p) {
                return param(format!("error probability {p} outside [0, 1]"));
            }
            let plus = PureState::ghz_signed(n_sites, 1.0)?;
            if p == 0.0 {
                return Ok(PreparedState::Pure(plus));
            }
            let minus = PureState::ghz_signed(n_sites, -1.0)?;
            Ok(PreparedState::Mixture(vec![(1.0 - p, plus), (p, minus)]))
        }
        StateSpec::RandomHaar { seed } => Ok(PreparedState::Pure(PureState::random_haar(n_sites, &mut rng_from_seed(seed))?)),
        StateSpec::Basis { b } => Ok(PreparedState::Pure(PureState::basis(b, n_sites)?)),
    }
}
