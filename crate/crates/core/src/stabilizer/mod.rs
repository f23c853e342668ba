pub mod clifford;
pub mod pauli;
pub mod tableau;

pub use pauli::PauliString;
pub use tableau::{CliffordGate, Tableau};
