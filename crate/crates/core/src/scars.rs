//! Exact diagonalization and the tower of scarred eigenstates.
//!
//! The scar tower is located rung by rung, walking outwards from zero energy
//! in both directions. Rung `k` is searched in a window of half-width `ΔE/2`
//! centred one nominal spacing `ΔE = 2π/T` beyond the previously found rung
//! (rung 0 sits at `E = 0`). Inside a window, eigenstates whose Néel overlap
//! exceeds [`ScarSearch::overlap_factor`] times the mean overlap of the other
//! window members are shortlisted, and the shortlisted state with lowest
//! half-chain entropy is taken. The zero-energy rung is not searched: the PXP
//! spectrum has an exponentially degenerate zero-energy manifold in which
//! individual eigenvectors are not uniquely defined. The remaining `N` rungs
//! `±1, …, ±N/2` make up the [`ScarSet`].

use std::f64::consts::PI;
use std::sync::Arc;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BipartitionMap};
use crate::error::{arg, Error, Result};
use crate::evolution::{entanglement_entropy, StateVector};
use crate::hamiltonian::SparseHamiltonian;

/// Revival period of the Néel state quoted for large chains.
pub const NOMINAL_PERIOD: f64 = 4.72;

/// Full spectrum of a Hamiltonian, energies ascending, eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    basis: Arc<Basis>,
    energies: Vec<f64>,
    vectors: Mat<f64>,
}

impl EigenSystem {
    pub fn compute(h: &SparseHamiltonian, limit: usize) -> Result<Self> {
        let dim = h.dim();
        if dim > limit {
            return Err(Error::Capacity { dim, limit });
        }
        let dense = h.to_dense();
        let m = Mat::<f64>::from_fn(dim, dim, |i, j| dense[i * dim + j]);
        let evd = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Linalg(format!("{e:?}")))?;
        let energies = evd.S().column_vector().iter().copied().collect();
        let vectors = evd.U().to_owned();
        Ok(EigenSystem {
            basis: h.basis().clone(),
            energies,
            vectors,
        })
    }

    #[inline]
    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    #[inline]
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vectors(&self) -> MatRef<'_, f64> {
        self.vectors.as_ref()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.col(k).iter().copied().collect()
    }

    pub fn state(&self, k: usize) -> StateVector {
        let amps = self.vectors.col(k).iter().map(|&x| Complex64::new(x, 0.0)).collect();
        StateVector::from_raw(self.basis.clone(), amps)
    }

    /// Coefficients `Vᵀψ` of `psi` in the eigenbasis.
    pub fn to_eigenbasis(&self, psi: &StateVector) -> Result<Vec<Complex64>> {
        if psi.dim() != self.dim() || !psi.basis().same_space(&self.basis) {
            return arg("state is not defined over the diagonalized basis");
        }
        let amps = psi.amplitudes();
        let x = Mat::<f64>::from_fn(self.dim(), 2, |i, j| if j == 0 { amps[i].re } else { amps[i].im });
        let y = self.vectors.transpose() * &x;
        Ok((0..self.dim()).map(|k| Complex64::new(y[(k, 0)], y[(k, 1)])).collect())
    }

    /// `Σ_k c_k |E_k⟩` in the computational basis (not renormalized).
    pub fn from_eigenbasis(&self, coeffs: &[Complex64]) -> StateVector {
        let x = Mat::<f64>::from_fn(self.dim(), 2, |k, j| if j == 0 { coeffs[k].re } else { coeffs[k].im });
        let y = &self.vectors * &x;
        let amps = (0..self.dim()).map(|i| Complex64::new(y[(i, 0)], y[(i, 1)])).collect();
        StateVector::from_raw(self.basis.clone(), amps)
    }
}

/// Diagonalize `h` densely, subject to a dimension guard.
pub fn diagonalize(h: &SparseHamiltonian, limit: usize) -> Result<EigenSystem> {
    EigenSystem::compute(h, limit)
}

/// Tunable constants of the scar search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScarSearch {
    /// Revival period setting the nominal rung spacing `2π/T`.
    pub period: f64,
    /// Shortlist threshold relative to the mean Néel overlap of the other window members.
    pub overlap_factor: f64,
    /// Candidates whose entropies differ by less than this are reported as ambiguous.
    pub entropy_tie: f64,
}

impl Default for ScarSearch {
    fn default() -> Self {
        ScarSearch {
            period: NOMINAL_PERIOD,
            overlap_factor: 10.0,
            entropy_tie: 1e-6,
        }
    }
}

/// One recognised scar eigenstate.
#[derive(Debug, Clone)]
pub struct Scar {
    /// Position in the [`EigenSystem`].
    pub index: usize,
    /// Ladder position `±1, …, ±N/2`.
    pub rung: i32,
    pub energy: f64,
    /// `|⟨ψ_s|Néel⟩|²`.
    pub neel_overlap: f64,
    pub entropy: f64,
    /// Real eigenvector with `⟨ψ_s|Néel⟩ ≥ 0`.
    pub state: Vec<f64>,
}

/// The `N` scar eigenstates, ascending in energy.
#[derive(Debug, Clone)]
pub struct ScarSet {
    basis: Arc<Basis>,
    scars: Vec<Scar>,
}

impl ScarSet {
    #[inline]
    pub fn len(&self) -> usize {
        self.scars.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.scars.is_empty()
    }

    #[inline]
    pub fn scars(&self) -> &[Scar] {
        &self.scars
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn energies(&self) -> Vec<f64> {
        self.scars.iter().map(|s| s.energy).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.scars.iter().map(|s| s.index).collect()
    }

    /// `⟨ψ_s|psi⟩` for every scar.
    pub fn overlaps(&self, psi: &StateVector) -> Result<Vec<Complex64>> {
        if !psi.basis().same_space(&self.basis) {
            return arg("state and scars live in different bases");
        }
        Ok(self
            .scars
            .iter()
            .map(|s| {
                s.state
                    .iter()
                    .zip(psi.amplitudes())
                    .map(|(&v, a)| a * v)
                    .sum()
            })
            .collect())
    }

    /// Mean rung spacing of the scars with `|rung| ≤ max_rung`, as the
    /// least-squares slope of energy against ladder position (rung 0 is not
    /// part of the set, so `+1` and `-1` are two positions apart).
    pub fn ladder_spacing(&self, max_rung: i32) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .scars
            .iter()
            .filter(|s| s.rung.abs() <= max_rung)
            .map(|s| (s.rung as f64, s.energy))
            .collect();
        crate::stats::linear_fit(&pts).map(|f| f.slope)
    }
}

/// Locate the `N` scar eigenstates. Requires even `N`; `neel` must be the Néel state.
pub fn identify_scars(
    eigs: &EigenSystem,
    neel: &StateVector,
    half_chain: &BipartitionMap,
    search: &ScarSearch,
) -> Result<ScarSet> {
    let basis = eigs.basis().clone();
    let n = basis.n_sites();
    if n % 2 != 0 {
        return arg(format!("scar identification requires even N, got {n}"));
    }
    if !(search.period > 0.0) {
        return arg("scar search period must be positive");
    }
    let neel_index = neel
        .amplitudes()
        .iter()
        .position(|a| a.norm_sqr() > 0.5)
        .ok_or_else(|| Error::Argument("reference state is not a computational basis state".into()))?;
    let vectors = eigs.vectors();
    let overlaps: Vec<f64> = (0..eigs.dim()).map(|k| vectors[(neel_index, k)].powi(2)).collect();
    let energies = eigs.energies();
    let spacing = 2.0 * PI / search.period;

    let mut scars = Vec::with_capacity(n);
    for direction in [-1.0f64, 1.0] {
        let mut previous = 0.0;
        for step in 1..=(n / 2) as i32 {
            let rung = step * direction as i32;
            let center = previous + direction * spacing;
            let window: Vec<usize> = (0..eigs.dim())
                .filter(|&k| (energies[k] - center).abs() <= 0.5 * spacing)
                .collect();
            let total: f64 = window.iter().map(|&k| overlaps[k]).sum();
            let shortlist: Vec<usize> = window
                .iter()
                .copied()
                .filter(|&k| {
                    if window.len() == 1 {
                        return overlaps[k] > 0.0;
                    }
                    let others = (total - overlaps[k]) / (window.len() - 1) as f64;
                    overlaps[k] > search.overlap_factor * others
                })
                .collect();
            if shortlist.is_empty() {
                return Err(Error::MissingScar { rung, center });
            }
            let mut ranked: Vec<(f64, usize)> = shortlist
                .iter()
                .map(|&k| (entanglement_entropy(&eigs.state(k), half_chain), k))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if ranked.len() > 1 && ranked[1].0 - ranked[0].0 < search.entropy_tie {
                return Err(Error::AmbiguousScar {
                    rung,
                    candidates: ranked.iter().map(|&(s, k)| (energies[k], s)).collect(),
                });
            }
            let (entropy, index) = ranked[0];
            let mut state = eigs.vector(index);
            if state[neel_index] < 0.0 {
                state.iter_mut().for_each(|x| *x = -*x);
            }
            previous = energies[index];
            scars.push(Scar {
                index,
                rung,
                energy: energies[index],
                neel_overlap: overlaps[index],
                entropy,
                state,
            });
        }
    }
    scars.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.index.cmp(&b.index)));
    Ok(ScarSet { basis, scars })
}

/// `W = Σ_s |⟨ψ_s|psi⟩|²`.
pub fn scar_weight(psi: &StateVector, scars: &ScarSet) -> Result<f64> {
    Ok(scars.overlaps(psi)?.iter().map(|z| z.norm_sqr()).sum())
}

/// Amplitudes below this have no meaningful phase.
pub const PHASE_AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScarComponent {
    pub amplitude: f64,
    /// `arg⟨ψ_s|psi⟩` in `(-π, π]`; `None` when the amplitude vanishes.
    pub phase: Option<f64>,
}

/// `psi = √(1-W)|ETH⟩ + Σ_s a_s e^{iφ_s}|ψ_s⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScarDecomposition {
    pub weight: f64,
    pub components: Vec<ScarComponent>,
}

pub fn scar_decomposition(psi: &StateVector, scars: &ScarSet) -> Result<ScarDecomposition> {
    let components: Vec<ScarComponent> = scars
        .overlaps(psi)?
        .into_iter()
        .map(|z| {
            let amplitude = z.norm();
            let phase = (amplitude >= PHASE_AMPLITUDE_FLOOR).then(|| wrap_phase(z.im.atan2(z.re)));
            ScarComponent { amplitude, phase }
        })
        .collect();
    let weight = components.iter().map(|c| c.amplitude * c.amplitude).sum();
    Ok(ScarDecomposition { weight, components })
}

/// Map an angle into `(-π, π]`.
pub fn wrap_phase(theta: f64) -> f64 {
    let mut x = theta.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}
