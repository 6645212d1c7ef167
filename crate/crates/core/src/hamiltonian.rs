//! The PXP Hamiltonian `H = Σ_j P_{j-1} σ^x_j P_{j+1}` in compressed-row form.
//!
//! On an open chain the end sites flip conditioned only on their single
//! neighbour (`σ^x_0 P_1 + P_{N-2} σ^x_{N-1}`); on a ring neighbours wrap.
//! Within the constrained basis every matrix element is either 0 or 1: site `j`
//! may flip exactly when the flipped configuration is itself allowed.

use std::sync::Arc;

use num_complex::Complex64;

use crate::basis::Basis;
use crate::error::{arg, Result};

#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    basis: Arc<Basis>,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseHamiltonian {
    pub fn build(basis: Arc<Basis>) -> Self {
        let n = basis.n_sites();
        let mut row_offsets = Vec::with_capacity(basis.dim() + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        let mut row = Vec::with_capacity(n);
        for config in basis.configs() {
            row.clear();
            row.extend(
                (0..n)
                    .filter_map(|j| basis.find(config.flipped(j)))
                    .map(|b| b as u32),
            );
            row.sort_unstable();
            col_indices.extend_from_slice(&row);
            row_offsets.push(col_indices.len());
        }
        let values = vec![1.0; col_indices.len()];
        SparseHamiltonian {
            basis,
            row_offsets,
            col_indices,
            values,
        }
    }

    #[inline]
    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.row_offsets.len() - 1
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Column indices and values of one row, columns ascending.
    pub fn row(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[a]..self.row_offsets[a + 1];
        self.col_indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        let span = self.row_offsets[a]..self.row_offsets[a + 1];
        match self.col_indices[span.clone()].binary_search(&(b as u32)) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// `out = H · v`, summing each row in ascending column order.
    pub fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        if v.len() != self.dim() || out.len() != self.dim() {
            return arg(format!(
                "dimension mismatch: operator {} vs vectors {} / {}",
                self.dim(),
                v.len(),
                out.len()
            ));
        }
        for (a, o) in out.iter_mut().enumerate() {
            let span = self.row_offsets[a]..self.row_offsets[a + 1];
            let mut acc = Complex64::new(0.0, 0.0);
            for (&c, &h) in self.col_indices[span.clone()].iter().zip(&self.values[span]) {
                acc += v[c as usize] * h;
            }
            *o = acc;
        }
        Ok(())
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    /// Dense row-major copy, for small systems and exact diagonalization.
    pub fn to_dense(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        for a in 0..d {
            for (b, v) in self.row(a) {
                m[a * d + b] = v;
            }
        }
        m
    }

    /// `⟨v|H|v⟩`, real for Hermitian `H`.
    pub fn expectation(&self, v: &[Complex64]) -> Result<f64> {
        let hv = self.apply(v)?;
        Ok(v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum())
    }
}
