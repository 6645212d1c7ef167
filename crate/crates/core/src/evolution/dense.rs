use std::sync::Arc;

use num_complex::Complex64;

use super::{Propagator, StateVector};
use crate::basis::Basis;
use crate::error::Result;
use crate::hamiltonian::SparseHamiltonian;
use crate::scars::EigenSystem;

/// Default capacity guard for dense diagonalization, in basis dimension.
pub const DENSE_DIM_LIMIT: usize = 20_000;

/// `U(t) = V diag(e^{-iEt}) Vᵀ` from a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct DensePropagator {
    eigs: Arc<EigenSystem>,
}

impl DensePropagator {
    pub fn new(h: &SparseHamiltonian) -> Result<Self> {
        Self::with_limit(h, DENSE_DIM_LIMIT)
    }

    pub fn with_limit(h: &SparseHamiltonian, limit: usize) -> Result<Self> {
        Ok(DensePropagator {
            eigs: Arc::new(EigenSystem::compute(h, limit)?),
        })
    }

    pub fn from_eigensystem(eigs: Arc<EigenSystem>) -> Self {
        DensePropagator { eigs }
    }

    pub fn eigensystem(&self) -> &Arc<EigenSystem> {
        &self.eigs
    }
}

impl Propagator for DensePropagator {
    fn basis(&self) -> &Arc<Basis> {
        self.eigs.basis()
    }

    fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if t == 0.0 {
            return Ok(psi.clone());
        }
        let mut coeffs = self.eigs.to_eigenbasis(psi)?;
        for (c, &e) in coeffs.iter_mut().zip(self.eigs.energies()) {
            *c *= Complex64::from_polar(1.0, -e * t);
        }
        let mut out = self.eigs.from_eigenbasis(&coeffs);
        out.renormalize();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Boundary;
    use crate::evolution::{fidelity, make_neel, make_uniform};

    fn system(n: usize, bc: Boundary) -> (Arc<Basis>, SparseHamiltonian) {
        let b = Arc::new(Basis::new(n, bc).unwrap());
        let h = SparseHamiltonian::build(b.clone());
        (b, h)
    }

    #[test]
    fn two_site_fidelity_is_cos_squared() {
        let (b, h) = system(2, Boundary::Obc);
        let prop = DensePropagator::new(&h).unwrap();
        let psi0 = make_uniform(&b);
        for &t in &[0.1, 0.5, 1.0, 2.7, 10.0] {
            let f = fidelity(&prop.evolve(&psi0, t).unwrap(), &psi0).unwrap();
            // |00⟩ couples only to (|01⟩+|10⟩)/√2 with strength √2
            let exact = (2f64.sqrt() * t).cos().powi(2);
            assert!((f - exact).abs() < 1e-12, "t={t}: {f} vs {exact}");
        }
    }

    #[test]
    fn zero_time_is_identity_and_group_property() {
        let (b, h) = system(10, Boundary::Pbc);
        let prop = DensePropagator::new(&h).unwrap();
        let psi = StateVector::random(b, &mut rand::rng());
        assert_eq!(prop.evolve(&psi, 0.0).unwrap(), psi);
        let ab = prop.evolve(&prop.evolve(&psi, 1.3).unwrap(), 2.2).unwrap();
        let direct = prop.evolve(&psi, 3.5).unwrap();
        let diff: f64 = ab
            .amplitudes()
            .iter()
            .zip(direct.amplitudes())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-9);
    }

    #[test]
    fn norm_and_energy_conserved() {
        let (b, h) = system(12, Boundary::Obc);
        let prop = DensePropagator::new(&h).unwrap();
        let psi = StateVector::random(b.clone(), &mut rand::rng());
        let e0 = h.expectation(psi.amplitudes()).unwrap();
        for &t in &[0.3, 4.72, 47.2] {
            let out = prop.evolve(&psi, t).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-9);
            assert!((h.expectation(out.amplitudes()).unwrap() - e0).abs() < 1e-8);
        }
        let neel = make_neel(&b).unwrap();
        assert!((prop.evolve(&neel, 1.0).unwrap().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn capacity_guard() {
        let (_, h) = system(12, Boundary::Obc);
        assert!(matches!(
            DensePropagator::with_limit(&h, 100),
            Err(crate::error::Error::Capacity { dim: 377, limit: 100 })
        ));
    }
}
