//! Observable estimates from snapshots, their error bars, and shadow norms.

pub mod norm;
pub mod shadow;
pub mod stats;

pub use norm::{shadow_norm, two_qudit_shadow_norm};
pub use shadow::{
    collect_shadows, estimate_fidelity, estimate_pauli, map_records, map_shot_range, map_shots, materialize, measure,
    single_shot_overlap, FidelityMode, OverlapEstimator, PauliEstimator, ShadowRecord, Snapshot,
};
pub use stats::{sample_complexity_bound, uncertainty, EstimateReport, Uncertainty};
