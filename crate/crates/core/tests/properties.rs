//! Property tests against brute-force oracles in the full `2^N` space.

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use pxp_core::evolution::entanglement_entropy;
use pxp_core::fss::{collapse_objective, ScalingDataset, ScalingRow};
use pxp_core::measurement::{born_probability, project};
use pxp_core::protocols::{run_trajectory, trajectory_rng, Observables, TrajectoryStatus};
use pxp_core::scars::{diagonalize, identify_scars, scar_decomposition, wrap_phase, ScarSearch};
use pxp_core::{
    make_neel, Basis, Boundary, DensePropagator, KrylovPropagator, MeasurementEvent, MeasurementMode, Outcome,
    Propagator, SparseHamiltonian, SpinConfig, StateVector,
};

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Obc), Just(Boundary::Pbc)]
}

fn random_state(n: usize, bc: Boundary, seed: u64) -> StateVector {
    let basis = Arc::new(Basis::new(n, bc).unwrap());
    StateVector::random(basis, &mut trajectory_rng(seed, 0))
}

fn adjacent(n: usize, bc: Boundary, a: usize, b: usize) -> bool {
    a.abs_diff(b) == 1 || (bc == Boundary::Pbc && a.abs_diff(b) == n - 1)
}

/// `Σ_j P_{j-1} X_j P_{j+1}` acting on a full-space vector.
fn full_space_pxp(n: usize, bc: Boundary, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); v.len()];
    for (c, &amp) in v.iter().enumerate() {
        for j in 0..n {
            let down = |k: usize| (c >> k) & 1 == 0;
            let left = if j > 0 { down(j - 1) } else { bc == Boundary::Obc || down(n - 1) };
            let right = if j + 1 < n { down(j + 1) } else { bc == Boundary::Obc || down(0) };
            if left && right {
                out[c ^ (1 << j)] += amp;
            }
        }
    }
    out
}

fn embed(psi: &StateVector) -> Vec<Complex64> {
    let n = psi.basis().n_sites();
    let mut full = vec![Complex64::default(); 1 << n];
    for (c, &a) in psi.basis().configs().zip(psi.amplitudes()) {
        full[c.0 as usize] = a;
    }
    full
}

/// `⟨σ^z_site⟩` in the full space, `σ^z = |•⟩⟨•| - |∘⟩⟨∘|`.
fn full_sigma_z(full: &[Complex64], site: usize) -> f64 {
    full.iter()
        .enumerate()
        .map(|(c, a)| if (c >> site) & 1 == 1 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// `e^{-iHt} v` by a truncated Taylor series on short substeps, without normalization.
fn taylor_evolve(h: &SparseHamiltonian, v: &[Complex64], t: f64) -> Vec<Complex64> {
    let steps = (t.abs() / 0.05).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut x = v.to_vec();
    for _ in 0..steps {
        let mut term = x.clone();
        for k in 1..=30 {
            let hv = h.apply(&term).unwrap();
            let factor = Complex64::new(0.0, -dt / k as f64);
            term = hv.iter().map(|z| z * factor).collect();
            for (a, b) in x.iter_mut().zip(&term) {
                *a += b;
            }
        }
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn basis_structure(n in 3usize..=14, bc in boundary()) {
        let basis = Basis::new(n, bc).unwrap();
        let configs: Vec<SpinConfig> = basis.configs().collect();
        prop_assert!(configs.windows(2).all(|w| w[0].0 < w[1].0));
        for (i, &c) in configs.iter().enumerate() {
            prop_assert!(c.is_allowed(n, bc));
            prop_assert_eq!(basis.rank(c).unwrap(), i);
            prop_assert_eq!(basis.config(i), c);
        }
        for cut in 1..n {
            prop_assert_eq!(basis.bipartition(cut).unwrap().pairs().len(), basis.dim());
        }
    }

    #[test]
    fn hamiltonian_matches_full_space(n in 3usize..=10, bc in boundary(), seed in any::<u64>()) {
        let psi = random_state(n, bc, seed);
        let h = SparseHamiltonian::build(psi.basis().clone());
        let hv = h.apply(psi.amplitudes()).unwrap();
        let full = full_space_pxp(n, bc, &embed(&psi));
        let basis = psi.basis();
        for (c, z) in full.iter().enumerate() {
            match basis.find(SpinConfig(c as u64)) {
                Some(k) => prop_assert!((hv[k] - z).norm() < 1e-12),
                // constraint preservation: nothing leaks out of the subspace
                None => prop_assert!(z.norm() == 0.0),
            }
        }
    }

    #[test]
    fn evolution_conserves_norm_and_energy(n in 4usize..=10, bc in boundary(), seed in any::<u64>(), t in 0.0f64..30.0) {
        let psi = random_state(n, bc, seed);
        let h = Arc::new(SparseHamiltonian::build(psi.basis().clone()));
        let e0 = h.expectation(psi.amplitudes()).unwrap();
        let dense = DensePropagator::new(&h).unwrap();
        let kry = KrylovPropagator::new(h.clone());
        for out in [dense.evolve(&psi, t).unwrap(), kry.evolve(&psi, t).unwrap()] {
            prop_assert!((out.norm() - 1.0).abs() < 1e-9);
            prop_assert!((h.expectation(out.amplitudes()).unwrap() - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn entropy_phase_and_mirror_invariant(half in 2usize..=5, bc in boundary(), seed in any::<u64>(), theta in -6.3f64..6.3) {
        let n = 2 * half;
        let psi = random_state(n, bc, seed);
        let basis = psi.basis().clone();
        let cut = basis.bipartition(half).unwrap();
        let s = entanglement_entropy(&psi, &cut);
        prop_assert!((entanglement_entropy(&psi.clone().with_global_phase(theta), &cut) - s).abs() < 1e-10);
        let mirror = |c: SpinConfig| SpinConfig((0..n).filter(|&j| c.bit(j)).map(|j| 1u64 << (n - 1 - j)).sum());
        let mut amps = vec![Complex64::default(); basis.dim()];
        for (c, &a) in basis.configs().zip(psi.amplitudes()) {
            amps[basis.rank(mirror(c)).unwrap()] = a;
        }
        let mirrored = StateVector::from_amplitudes(basis, amps).unwrap();
        prop_assert!((entanglement_entropy(&mirrored, &cut) - s).abs() < 1e-10);
    }

    #[test]
    fn measurement_completeness_idempotence_constraint(n in 3usize..=12, bc in boundary(), seed in any::<u64>(), site_pick in 0usize..64) {
        let psi = random_state(n, bc, seed);
        let site = site_pick % n;
        let p_up = born_probability(&psi, site).unwrap();
        let up = project(&psi, site, Outcome::Up).unwrap();
        let down = project(&psi, site, Outcome::Down).unwrap();
        prop_assert!((up.probability + down.probability - 1.0).abs() < 1e-12);
        prop_assert!((up.probability - p_up).abs() < 1e-15);
        for out in [&up, &down] {
            let again = project(&out.post_state, site, out.result).unwrap();
            prop_assert!((again.probability - 1.0).abs() < 1e-12);
            let diff = again.post_state.amplitudes().iter().zip(out.post_state.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-12);
            prop_assert!((out.post_state.norm() - 1.0).abs() < 1e-12);
        }
        // an excitation forces its neighbours down; support stays in the allowed set
        for k in (0..n).filter(|&k| adjacent(n, bc, k, site)) {
            prop_assert!(up.post_state.excitation_probability(k) < 1e-15);
        }
        for (c, a) in up.post_state.basis().configs().zip(up.post_state.amplitudes()) {
            prop_assert!(a.norm() == 0.0 || (c.is_allowed(n, bc) && c.bit(site)));
        }
    }

    #[test]
    fn measurement_reconstructs_neighbour_sigma_z(n in 3usize..=8, bc in boundary(), seed in any::<u64>(), site_pick in 0usize..64) {
        let psi = random_state(n, bc, seed);
        let site = site_pick % n;
        let full = embed(&psi);
        let up = project(&psi, site, Outcome::Up).unwrap();
        let down = project(&psi, site, Outcome::Down).unwrap();
        let (fu, fd) = (embed(&up.post_state), embed(&down.post_state));
        for k in (0..n).filter(|&k| adjacent(n, bc, k, site) || k == site) {
            let mixed = up.probability * full_sigma_z(&fu, k) + down.probability * full_sigma_z(&fd, k);
            prop_assert!((mixed - full_sigma_z(&full, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn postselection_weight_is_unnormalized_norm(n in 4usize..=8, bc in boundary(), seed in any::<u64>(),
                                                 plan in proptest::collection::vec((0.05f64..1.5, 0usize..64, any::<bool>()), 1..=4)) {
        let psi = random_state(n, bc, seed);
        let basis = psi.basis().clone();
        let h = Arc::new(SparseHamiltonian::build(basis.clone()));
        let prop = KrylovPropagator::new(h.clone());
        let mut t = 0.0;
        let events: Vec<MeasurementEvent> = plan.iter().map(|&(dt, s, up)| {
            t += dt;
            MeasurementEvent { time: t, site: s % n, mode: MeasurementMode::Postselect(Outcome::from_bit(up)) }
        }).collect();
        let cut = basis.bipartition(n / 2).unwrap();
        let obs = Observables { reference: &psi, cut: &cut, scars: None };
        let rec = run_trajectory(&prop, &psi, &obs, &[0.0, t], &events, &mut trajectory_rng(0, 0)).unwrap();

        let mut v = psi.amplitudes().to_vec();
        let mut now = 0.0;
        for ev in &events {
            v = taylor_evolve(&h, &v, ev.time - now);
            now = ev.time;
            let MeasurementMode::Postselect(o) = ev.mode else { unreachable!() };
            for (a, c) in v.iter_mut().zip(basis.configs()) {
                if c.bit(ev.site) != o.bit() {
                    *a = Complex64::default();
                }
            }
        }
        let weight: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        match rec.status {
            TrajectoryStatus::Completed => prop_assert!((rec.born_weight() - weight).abs() < 1e-9),
            TrajectoryStatus::DeadEnd { .. } => prop_assert!(weight < 1e-9),
        }
    }

    #[test]
    fn scar_phases_pair_up(t in 0.0f64..40.0) {
        let basis = Arc::new(Basis::new(10, Boundary::Pbc).unwrap());
        let h = SparseHamiltonian::build(basis.clone());
        let eigs = diagonalize(&h, 10_000).unwrap();
        let neel = make_neel(&basis).unwrap();
        let scars = identify_scars(&eigs, &neel, &basis.bipartition(5).unwrap(), &ScarSearch::default()).unwrap();
        let psi = DensePropagator::new(&h).unwrap().evolve(&neel, t).unwrap();
        let d = scar_decomposition(&psi, &scars).unwrap();
        let m = scars.len();
        for s in 0..m / 2 {
            let (a, b) = (&scars.scars()[s], &scars.scars()[m - 1 - s]);
            prop_assert!((a.energy + b.energy).abs() < 1e-10);
            let (pa, pb) = (d.components[s].phase.unwrap(), d.components[m - 1 - s].phase.unwrap());
            prop_assert!(wrap_phase(pa + pb).abs() < 1e-7);
            prop_assert!(wrap_phase(pa + a.energy * t).abs() < 1e-7);
        }
    }

    #[test]
    fn objective_scales_quadratically(c in 0.1f64..10.0, gc in 0.004f64..0.022, nu in 0.2f64..3.0, seed in any::<u64>()) {
        let ds = fuzzed_dataset(seed);
        let scaled = ScalingDataset::new(ds.rows().iter().map(|r| ScalingRow { s: c * r.s, ..*r }).collect()).unwrap();
        let a = collapse_objective(&ds, gc, nu).unwrap();
        let b = collapse_objective(&scaled, gc, nu).unwrap();
        prop_assert!(a.is_finite() && a >= 0.0);
        prop_assert!((b - c * c * a).abs() <= 1e-9 * b.abs().max(1e-300));
    }
}

fn fuzzed_dataset(seed: u64) -> ScalingDataset {
    use rand::Rng;
    let mut rng = trajectory_rng(seed, 1);
    let rows = [8usize, 10, 12]
        .iter()
        .flat_map(|&n| (0..8).map(move |k| (n, 0.002 + 0.003 * k as f64)))
        .map(|(n, gamma)| ScalingRow {
            n,
            gamma,
            s: rng.random_range(0.0..3.0),
            s_err: rng.random_range(0.01..0.2),
        })
        .collect();
    ScalingDataset::new(rows).unwrap()
}
