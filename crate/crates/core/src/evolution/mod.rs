//! State vectors over the constrained basis and their unitary propagation.
//!
//! Two propagators are provided: [`DensePropagator`] caches a full
//! eigendecomposition and is exact for any time, [`KrylovPropagator`] runs a
//! Lanczos exponential on the sparse Hamiltonian and is the workhorse for the
//! stochastic trajectories.

mod dense;
mod entanglement;
mod krylov;

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{Basis, SpinConfig};
use crate::error::{arg, Result};

pub use dense::{DensePropagator, DENSE_DIM_LIMIT};
pub use entanglement::{entanglement_entropy, schmidt_probabilities, SCHMIDT_CUTOFF};
pub use krylov::{evolve_krylov, KrylovPropagator, DEFAULT_KRYLOV_DIM, DEFAULT_KRYLOV_TOL};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Complex amplitudes over a [`Basis`].
///
/// Constructors normalize; the unit-norm invariant holds for every state handed
/// out by the public API.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    basis: Arc<Basis>,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn basis_state(basis: Arc<Basis>, index: usize) -> Result<Self> {
        if index >= basis.dim() {
            return arg(format!("basis index {index} out of range for dimension {}", basis.dim()));
        }
        let mut amps = vec![ZERO; basis.dim()];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { basis, amps })
    }

    pub fn from_config(basis: Arc<Basis>, config: SpinConfig) -> Result<Self> {
        let index = basis.rank(config)?;
        Self::basis_state(basis, index)
    }

    /// Normalizes `amps`; fails on length mismatch or a null vector.
    pub fn from_amplitudes(basis: Arc<Basis>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return arg(format!("expected {} amplitudes, got {}", basis.dim(), amps.len()));
        }
        let mut psi = StateVector { basis, amps };
        let norm = psi.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return arg("cannot normalize a null or non-finite vector");
        }
        psi.scale(1.0 / norm);
        Ok(psi)
    }

    /// Haar-like random state from i.i.d. complex Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(basis: Arc<Basis>, rng: &mut R) -> Self {
        let amps = (0..basis.dim())
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::from_amplitudes(basis, amps).expect("gaussian vector is non-null")
    }

    pub(crate) fn from_raw(basis: Arc<Basis>, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), basis.dim());
        StateVector { basis, amps }
    }

    #[inline]
    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    #[inline]
    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.amps.iter_mut().for_each(|a| *a *= s);
    }

    pub(crate) fn renormalize(&mut self) {
        let n = self.norm();
        self.scale(1.0 / n);
    }

    /// Multiply by the global phase `e^{iθ}`.
    pub fn with_global_phase(mut self, theta: f64) -> Self {
        let z = Complex64::from_polar(1.0, theta);
        self.amps.iter_mut().for_each(|a| *a *= z);
        self
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.check_same_basis(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub(crate) fn check_same_basis(&self, other: &StateVector) -> Result<()> {
        if !self.basis.same_space(&other.basis) {
            return arg(format!(
                "basis mismatch: (N={}, {}) vs (N={}, {})",
                self.basis.n_sites(),
                self.basis.boundary(),
                other.basis.n_sites(),
                other.basis.boundary()
            ));
        }
        Ok(())
    }

    /// Population of configurations with site `site` excited.
    pub fn excitation_probability(&self, site: usize) -> f64 {
        self.basis
            .configs()
            .zip(&self.amps)
            .filter(|(c, _)| c.bit(site))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

/// Néel state `•∘•∘…∘`: site 0 excited. Requires even `N`.
pub fn make_neel(basis: &Arc<Basis>) -> Result<StateVector> {
    let config = basis.neel_config()?;
    StateVector::from_config(basis.clone(), config)
}

/// All sites in `|∘⟩`.
pub fn make_uniform(basis: &Arc<Basis>) -> StateVector {
    StateVector::basis_state(basis.clone(), 0).expect("the empty configuration is always allowed")
}

/// `|⟨phi|psi⟩|²`.
pub fn fidelity(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    Ok(phi.inner(psi)?.norm_sqr().min(1.0))
}

/// Unitary time evolution `|ψ⟩ ↦ e^{-iHt}|ψ⟩`.
pub trait Propagator: Sync {
    fn basis(&self) -> &Arc<Basis>;

    fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector>;
}
