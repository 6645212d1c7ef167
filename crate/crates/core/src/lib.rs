//! Monitored dynamics of the PXP spin chain on its constrained Hilbert space.
//!
//! The crate is layered bottom-up: [`basis`] enumerates the configurations
//! without neighbouring excitations, [`hamiltonian`] builds the sparse PXP
//! operator on them, [`evolution`] propagates states (dense or Krylov) and
//! measures entanglement, [`measurement`] applies projective `σ^z`
//! measurements, [`scars`] extracts the scarred eigenstates, [`protocols`]
//! composes these into the monitoring experiments and [`fss`] fits
//! finite-size-scaling collapses to steady-state entropy tables.

pub mod basis;
pub mod error;
pub mod evolution;
pub mod fss;
pub mod hamiltonian;
pub mod measurement;
pub mod protocols;
pub mod scars;
pub mod stats;

pub use basis::{Basis, BipartitionMap, Boundary, SpinConfig};
pub use error::{Error, Result};
pub use evolution::{fidelity, make_neel, make_uniform, DensePropagator, KrylovPropagator, Propagator, StateVector};
pub use hamiltonian::SparseHamiltonian;
pub use measurement::{MeasurementEvent, MeasurementMode, MeasurementOutcome, Outcome};
pub use scars::{EigenSystem, ScarSearch, ScarSet};
