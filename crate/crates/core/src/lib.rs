//! Variational ground-state search for small Hubbard rings on a simulated
//! noisy quantum device.

pub mod ansatz;
pub mod error;
pub mod experiment;
pub mod fermion;
pub mod hubbard;
pub mod mitigation;
pub mod pauli;
pub mod rng;
pub mod simulator;
pub mod tapering;
pub mod vqe;

pub use error::{Error, Result};
pub use mitigation::EnergyEstimate;
pub use pauli::{Letter, PauliString, PauliSum};
pub use simulator::{Gate, NoiseModel, ShotCounts, Statevector};
