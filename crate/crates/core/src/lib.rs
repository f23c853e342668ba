//! Randomized-measurement tomography with locally scrambled unitary ensembles.
//!
//! The lattice math (`lattice`, `region`, the fusion system in
//! `reconstruction`, LS frame potentials) is generic over [`scalar::Scalar`]
//! so it can run on exact rationals. Simulators and estimators are `f64`.

pub mod dense;
pub mod entanglement;
pub mod error;
pub mod estimators;
pub mod frame;
pub mod harness;
pub mod lattice;
pub mod linalg;
pub mod reconstruction;
pub mod region;
pub mod rng;
pub mod scalar;
pub mod stabilizer;

pub use dense::{DensityMatrix, Ensemble, EnsembleKind, EnsembleSpec, PureState};
pub use entanglement::{estimate_ef, EfEstimate, OutcomeMode};
pub use error::{Error, Result};
pub use reconstruction::ReconVector;
pub use region::Region;

/// Power-set vector in floating point.
pub type LatticeVec = lattice::LatticeVector<f64>;
/// Power-set vector over exact rationals.
pub type ExactLatticeVec = lattice::LatticeVector<num_rational::Ratio<i64>>;
