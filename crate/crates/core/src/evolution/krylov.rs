//! Lanczos approximation of `e^{-iHt}|ψ⟩`.
//!
//! Each substep builds an orthonormal Krylov basis `Q` (fully
//! reorthogonalized) and the tridiagonal projection `T = QᴴHQ`, then uses
//! `e^{-iHh}|ψ⟩ ≈ Q e^{-iTh} e₁`. The a posteriori estimate
//! `β_m |e_mᵀ e^{-iTh} e₁|` decides when the basis is large enough; if the
//! maximal basis cannot reach the per-step budget `tol·h/|t|`, the substep is
//! shortened using the same basis.

use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex64;

use super::{Propagator, StateVector, ZERO};
use crate::basis::Basis;
use crate::error::{arg, Error, Result};
use crate::hamiltonian::SparseHamiltonian;

pub const DEFAULT_KRYLOV_TOL: f64 = 1e-10;
pub const DEFAULT_KRYLOV_DIM: usize = 40;

const MAX_SUBSTEPS: usize = 1_000_000;
const BREAKDOWN: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct KrylovPropagator {
    h: Arc<SparseHamiltonian>,
    tol: f64,
    max_dim: usize,
}

impl KrylovPropagator {
    pub fn new(h: Arc<SparseHamiltonian>) -> Self {
        KrylovPropagator {
            h,
            tol: DEFAULT_KRYLOV_TOL,
            max_dim: DEFAULT_KRYLOV_DIM,
        }
    }

    pub fn with_tolerance(mut self, tol: f64, max_dim: usize) -> Self {
        self.tol = tol;
        self.max_dim = max_dim;
        self
    }

    pub fn hamiltonian(&self) -> &Arc<SparseHamiltonian> {
        &self.h
    }
}

impl Propagator for KrylovPropagator {
    fn basis(&self) -> &Arc<Basis> {
        self.h.basis()
    }

    fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        evolve_krylov(&self.h, psi, t, self.tol, self.max_dim)
    }
}

/// Spectral data of the small tridiagonal matrix.
struct Tridiagonal {
    theta: Vec<f64>,
    // row-major m×m eigenvector matrix
    vectors: Vec<f64>,
}

impl Tridiagonal {
    fn new(alpha: &[f64], beta: &[f64]) -> Result<Self> {
        let m = alpha.len();
        let t = Mat::<f64>::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let evd = t
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Linalg(format!("{e:?}")))?;
        let theta = evd.S().column_vector().iter().copied().collect();
        let u = evd.U();
        let vectors = (0..m).flat_map(|i| (0..m).map(move |j| u[(i, j)])).collect();
        Ok(Tridiagonal { theta, vectors })
    }

    /// `e^{-i s T} e₁`.
    fn exp_e1(&self, s: f64) -> Vec<Complex64> {
        let m = self.theta.len();
        let weights: Vec<Complex64> = (0..m)
            .map(|l| Complex64::from_polar(self.vectors[l], -s * self.theta[l]))
            .collect();
        (0..m)
            .map(|k| {
                (0..m)
                    .map(|l| weights[l] * self.vectors[k * m + l])
                    .sum()
            })
            .collect()
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `e^{-iHt}|ψ⟩` to 2-norm accuracy `tol`, using at most `max_dim` Lanczos vectors per substep.
pub fn evolve_krylov(
    h: &SparseHamiltonian,
    psi: &StateVector,
    t: f64,
    tol: f64,
    max_dim: usize,
) -> Result<StateVector> {
    if !(tol > 0.0) {
        return arg(format!("Krylov tolerance must be positive, got {tol}"));
    }
    if max_dim < 2 {
        return arg("Krylov subspace dimension must be at least 2");
    }
    if !t.is_finite() {
        return arg(format!("evolution time must be finite, got {t}"));
    }
    if psi.dim() != h.dim() {
        return arg(format!("dimension mismatch: operator {} vs state {}", h.dim(), psi.dim()));
    }
    if t == 0.0 {
        return Ok(psi.clone());
    }
    let total = t.abs();
    let sign = t.signum();
    let dim = h.dim();
    let m_cap = max_dim.min(dim);

    let mut v = psi.amplitudes().to_vec();
    let v_norm = norm(&v);
    v.iter_mut().for_each(|x| *x /= v_norm);

    let mut done = 0.0;
    let mut step = total;
    let mut substeps = 0usize;
    let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(m_cap);
    let mut w = vec![ZERO; dim];

    while done < total {
        let remaining = total - done;
        // avoid a sliver substep caused by rounding of `done`
        if remaining <= total * 1e-14 {
            break;
        }
        step = step.min(remaining);
        let budget = |s: f64| tol * s / total;

        q.clear();
        q.push(v.clone());
        let mut alpha = Vec::with_capacity(m_cap);
        let mut beta: Vec<f64> = Vec::with_capacity(m_cap);
        let mut invariant = false;
        let mut last_beta = 0.0;
        let mut tri = None;

        for j in 0..m_cap {
            h.apply_into(&q[j], &mut w)?;
            let a = dot(&q[j], &w).re;
            for (wi, qi) in w.iter_mut().zip(&q[j]) {
                *wi -= qi * a;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (wi, qi) in w.iter_mut().zip(&q[j - 1]) {
                    *wi -= qi * b;
                }
            }
            // two passes of classical Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for qk in &q {
                    let c = dot(qk, &w);
                    for (wi, qi) in w.iter_mut().zip(qk) {
                        *wi -= qi * c;
                    }
                }
            }
            alpha.push(a);
            let b = norm(&w);
            let td = Tridiagonal::new(&alpha, &beta)?;
            last_beta = b;
            if b < BREAKDOWN {
                invariant = true;
                tri = Some(td);
                break;
            }
            let y = td.exp_e1(sign * step);
            let err = b * y[j].norm();
            tri = Some(td);
            if err <= budget(step) || j + 1 == m_cap {
                break;
            }
            beta.push(b);
            q.push(w.iter().map(|x| x / b).collect());
        }

        let tri = tri.expect("at least one Lanczos iteration ran");
        let m = tri.theta.len();
        if !invariant && m < dim {
            let estimate = |s: f64| last_beta * tri.exp_e1(sign * s)[m - 1].norm();
            let mut err = estimate(step);
            while err > budget(step) {
                step *= 0.5;
                if step < total * 1e-12 {
                    return Err(Error::Convergence { residual: err, tol });
                }
                err = estimate(step);
            }
        }
        let y = tri.exp_e1(sign * step);
        v.iter_mut().for_each(|x| *x = ZERO);
        for (qk, yk) in q.iter().zip(&y) {
            for (vi, qi) in v.iter_mut().zip(qk) {
                *vi += qi * yk;
            }
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);

        done += step;
        substeps += 1;
        if substeps > MAX_SUBSTEPS {
            return Err(Error::Convergence { residual: f64::NAN, tol });
        }
    }

    Ok(StateVector::from_raw(psi.basis().clone(), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Boundary;
    use crate::evolution::{make_neel, DensePropagator};

    fn distance(a: &StateVector, b: &StateVector) -> f64 {
        a.amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn agrees_with_dense_route() {
        let b = Arc::new(Basis::new(10, Boundary::Obc).unwrap());
        let h = Arc::new(SparseHamiltonian::build(b.clone()));
        let dense = DensePropagator::new(&h).unwrap();
        let kry = KrylovPropagator::new(h.clone());
        let neel = make_neel(&b).unwrap();
        for &t in &[0.05, 1.0, 4.72, -2.0] {
            let d = distance(&dense.evolve(&neel, t).unwrap(), &kry.evolve(&neel, t).unwrap());
            assert!(d < 1e-8, "t={t}: {d}");
        }
    }

    #[test]
    fn zero_time_identity() {
        let b = Arc::new(Basis::new(8, Boundary::Pbc).unwrap());
        let h = SparseHamiltonian::build(b.clone());
        let psi = StateVector::random(b, &mut rand::rng());
        assert_eq!(evolve_krylov(&h, &psi, 0.0, 1e-10, 30).unwrap(), psi);
    }

    #[test]
    fn substeps_compose() {
        let b = Arc::new(Basis::new(10, Boundary::Obc).unwrap());
        let h = SparseHamiltonian::build(b.clone());
        let neel = make_neel(&b).unwrap();
        let t = 4.72;
        let one = evolve_krylov(&h, &neel, t, 1e-10, 40).unwrap();
        let mut many = neel.clone();
        for _ in 0..10 {
            many = evolve_krylov(&h, &many, t / 10.0, 1e-10, 40).unwrap();
        }
        assert!(distance(&one, &many) < 1e-8);
    }

    #[test]
    fn small_subspace_forces_substepping() {
        let b = Arc::new(Basis::new(10, Boundary::Obc).unwrap());
        let h = Arc::new(SparseHamiltonian::build(b.clone()));
        let dense = DensePropagator::new(&h).unwrap();
        let neel = make_neel(&b).unwrap();
        let out = evolve_krylov(&h, &neel, 10.0, 1e-10, 6).unwrap();
        assert!(distance(&out, &dense.evolve(&neel, 10.0).unwrap()) < 1e-8);
    }

    #[test]
    fn invariant_subspace_breakdown_is_exact() {
        // |00⟩ on two sites lives in a two-dimensional invariant subspace
        let b = Arc::new(Basis::new(2, Boundary::Obc).unwrap());
        let h = SparseHamiltonian::build(b.clone());
        let psi = StateVector::basis_state(b, 0).unwrap();
        let out = evolve_krylov(&h, &psi, 0.9, 1e-12, 10).unwrap();
        let f = out.amplitudes()[0].norm_sqr();
        assert!((f - (2f64.sqrt() * 0.9).cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let b = Arc::new(Basis::new(4, Boundary::Obc).unwrap());
        let h = SparseHamiltonian::build(b.clone());
        let psi = StateVector::basis_state(b, 0).unwrap();
        assert!(evolve_krylov(&h, &psi, 1.0, 0.0, 10).is_err());
        assert!(evolve_krylov(&h, &psi, f64::NAN, 1e-10, 10).is_err());
    }
}
