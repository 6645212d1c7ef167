use faer::{c64, Mat};

use super::StateVector;
use crate::basis::BipartitionMap;

/// Squared Schmidt coefficients below this are dropped before taking logs.
pub const SCHMIDT_CUTOFF: f64 = 1e-14;

/// Squared Schmidt coefficients of `psi` across the cut, descending.
pub fn schmidt_probabilities(psi: &StateVector, map: &BipartitionMap) -> Vec<f64> {
    assert_eq!(
        psi.dim(),
        map.pairs().len(),
        "state and bipartition are defined over different bases"
    );
    let (rows, cols) = (map.left().dim(), map.right().dim());
    // Singular values are invariant under transposition; keep the short side as rows.
    let transpose = rows > cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut m = Mat::<c64>::zeros(r, c);
    for (&(l, rt), a) in map.pairs().iter().zip(psi.amplitudes()) {
        let (i, j) = if transpose { (rt as usize, l as usize) } else { (l as usize, rt as usize) };
        m[(i, j)] = *a;
    }
    match m.singular_values() {
        Ok(s) => s.into_iter().map(|x| x * x).collect(),
        // The SVD only fails on non-finite input.
        Err(_) => vec![f64::NAN],
    }
}

/// Von Neumann entropy (natural log) of the reduced state on either block.
pub fn entanglement_entropy(psi: &StateVector, map: &BipartitionMap) -> f64 {
    -schmidt_probabilities(psi, map)
        .into_iter()
        .filter(|&p| p >= SCHMIDT_CUTOFF)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use num_complex::Complex64;

    use super::*;
    use crate::basis::{Basis, Boundary, SpinConfig};
    use crate::evolution::make_neel;

    #[test]
    fn product_states_have_zero_entropy() {
        for bc in [Boundary::Obc, Boundary::Pbc] {
            let b = Arc::new(Basis::new(10, bc).unwrap());
            let map = b.bipartition(5).unwrap();
            let neel = make_neel(&b).unwrap();
            assert!(entanglement_entropy(&neel, &map).abs() < 1e-10);
        }
    }

    #[test]
    fn two_site_bell_pair() {
        let b = Arc::new(Basis::new(2, Boundary::Obc).unwrap());
        let map = b.bipartition(1).unwrap();
        let s = 0.5f64.sqrt();
        let z = Complex64::new(0.0, 0.0);
        let psi = StateVector::from_amplitudes(b, vec![z, Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap();
        assert!((entanglement_entropy(&psi, &map) - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn bounded_by_smaller_block() {
        let mut rng = rand::rng();
        for bc in [Boundary::Obc, Boundary::Pbc] {
            let b = Arc::new(Basis::new(11, bc).unwrap());
            for cut in [3, 5, 8] {
                let map = b.bipartition(cut).unwrap();
                let psi = StateVector::random(b.clone(), &mut rng);
                let bound = (map.left().dim().min(map.right().dim()) as f64).ln();
                let s = entanglement_entropy(&psi, &map);
                assert!(s >= 0.0 && s <= bound + 1e-12, "S={s} bound={bound}");
            }
        }
    }

    #[test]
    fn invariant_under_phase_and_mirror() {
        let mut rng = rand::rng();
        let n = 10;
        let b = Arc::new(Basis::new(n, Boundary::Obc).unwrap());
        let psi = StateVector::random(b.clone(), &mut rng);
        let map = b.bipartition(4).unwrap();
        let s = entanglement_entropy(&psi, &map);
        let phased = psi.clone().with_global_phase(1.234);
        assert!((entanglement_entropy(&phased, &map) - s).abs() < 1e-12);

        // Reflecting the chain exchanges the blocks of cut c and cut N-c.
        let reflect = |c: SpinConfig| SpinConfig((0..n).filter(|&j| c.bit(j)).fold(0, |m, j| m | 1 << (n - 1 - j)));
        let mut amps = vec![Complex64::new(0.0, 0.0); b.dim()];
        for (i, c) in b.configs().enumerate() {
            amps[b.rank(reflect(c)).unwrap()] = psi.amplitudes()[i];
        }
        let mirrored = StateVector::from_amplitudes(b.clone(), amps).unwrap();
        let map_mirror = b.bipartition(n - 4).unwrap();
        assert!((entanglement_entropy(&mirrored, &map_mirror) - s).abs() < 1e-10);
    }
}
