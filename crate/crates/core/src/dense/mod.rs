pub mod circuit;
pub mod hamiltonian;
pub mod prepare;
pub mod state;

pub use circuit::{CircuitInstance, Ensemble, EnsembleKind, EnsembleSpec, FixedPart, Gate};
pub use prepare::{prepare_state, PreparedState, StateSpec};
pub use state::{DensityMatrix, PureState};
