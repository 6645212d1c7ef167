use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_trajectory, time_grid, trajectory_rng, Observables, TrajectoryStatus};
use crate::basis::{Basis, BipartitionMap, Boundary};
use crate::error::{arg, Error, Result};
use crate::evolution::{fidelity, make_neel, DensePropagator, KrylovPropagator, Propagator, StateVector};
use crate::hamiltonian::SparseHamiltonian;
use crate::measurement::{project, MeasurementEvent, MeasurementMode, Outcome};
use crate::protocols::neel_outcome;
use crate::scars::{
    diagonalize, identify_scars, scar_decomposition, scar_weight, EigenSystem, ScarComponent, ScarSearch, ScarSet,
    NOMINAL_PERIOD,
};
use crate::stats::{linear_fit, LinearFit};

/// Everything a scar analysis needs for one periodic chain.
pub struct ScarContext {
    pub basis: Arc<Basis>,
    pub hamiltonian: Arc<SparseHamiltonian>,
    pub eigs: Arc<EigenSystem>,
    pub propagator: DensePropagator,
    pub neel: StateVector,
    pub cut: BipartitionMap,
    pub scars: ScarSet,
}

impl ScarContext {
    pub fn new(n: usize, search: &ScarSearch, dense_limit: usize) -> Result<Self> {
        let basis = Arc::new(Basis::new(n, Boundary::Pbc)?);
        let hamiltonian = Arc::new(SparseHamiltonian::build(basis.clone()));
        let eigs = Arc::new(diagonalize(&hamiltonian, dense_limit)?);
        let neel = make_neel(&basis)?;
        let cut = basis.bipartition(n / 2)?;
        let scars = identify_scars(&eigs, &neel, &cut, search)?;
        Ok(ScarContext {
            propagator: DensePropagator::from_eigensystem(eigs.clone()),
            basis,
            hamiltonian,
            eigs,
            neel,
            cut,
            scars,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Revival {
    pub time: f64,
    pub fidelity: f64,
}

/// First local maximum of `|⟨psi|e^{-iHt}|psi⟩|²` after the fidelity has
/// dropped below one half and reaching at least half of the largest later
/// value, located on a grid of spacing `step` up to `t_max`
/// and refined by golden-section search.
pub fn first_revival(prop: &dyn Propagator, psi: &StateVector, t_max: f64, step: f64) -> Result<Revival> {
    let grid = time_grid(t_max, step)?;
    let f = |t: f64| -> Result<f64> { fidelity(&prop.evolve(psi, t)?, psi) };
    let mut values = Vec::with_capacity(grid.len());
    for &t in &grid {
        values.push(f(t)?);
    }
    let Some(dip) = values.iter().position(|&v| v < 0.5) else {
        return arg("fidelity never decays below 1/2 within tMax");
    };
    // ignore ripples near zero fidelity: the revival must reach half the later maximum
    let floor = 0.5 * values[dip..].iter().cloned().fold(0.0, f64::max);
    let k = (dip.max(1)..values.len().saturating_sub(1))
        .find(|&k| values[k] >= floor && values[k] >= values[k - 1] && values[k] >= values[k + 1])
        .ok_or_else(|| Error::Argument("no fidelity maximum within tMax".into()))?;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[k] - step, grid[k] + step);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-7 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let time = 0.5 * (a + b);
    Ok(Revival {
        time,
        fidelity: f(time)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScarWeightScan {
    pub site: usize,
    pub outcome: Outcome,
    pub times: Vec<f64>,
    /// Scar weight after the projection; `None` where the outcome is impossible.
    pub weight: Vec<Option<f64>>,
    /// Scar weight of the unmeasured evolved Néel state.
    pub reference: f64,
}

/// Scar weight of `e^{-iHt}|Néel⟩` after projecting `site` onto `outcome`.
pub fn scan_scar_weight(ctx: &ScarContext, times: &[f64], site: usize, outcome: Outcome) -> Result<ScarWeightScan> {
    if site >= ctx.basis.n_sites() {
        return arg(format!("site {site} out of range for N = {}", ctx.basis.n_sites()));
    }
    let mut weight = Vec::with_capacity(times.len());
    for &t in times {
        let psi = ctx.propagator.evolve(&ctx.neel, t)?;
        weight.push(match project(&psi, site, outcome) {
            Ok(out) => Some(scar_weight(&out.post_state, &ctx.scars)?),
            Err(Error::ImpossibleOutcome { .. }) => None,
            Err(e) => return Err(e),
        });
    }
    Ok(ScarWeightScan {
        site,
        outcome,
        times: times.to_vec(),
        weight,
        reference: scar_weight(&ctx.neel, &ctx.scars)?,
    })
}

/// Amplitude threshold `a_s²` at zero measured sites for a scar to be reported.
pub const REPORT_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RephasingStep {
    /// Number of measured sites.
    pub n: usize,
    pub weight: Option<f64>,
    /// One entry per scar, ascending energy; `None` after a dead end.
    pub components: Option<Vec<ScarComponent>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RephasingScan {
    pub period: f64,
    pub energies: Vec<f64>,
    /// Scar positions with `a_s² > 0.005` before any measurement.
    pub reported: Vec<usize>,
    pub steps: Vec<RephasingStep>,
}

/// Start from `e^{-iHT}|Néel⟩` and cumulatively project sites `0, …, n-1`
/// onto their Néel values, decomposing onto the scars after each step.
pub fn rephasing_scan(ctx: &ScarContext, period: f64, n_max: usize) -> Result<RephasingScan> {
    let n_sites = ctx.basis.n_sites();
    if n_max > n_sites {
        return arg(format!("nMax = {n_max} exceeds N = {n_sites}"));
    }
    let mut psi = Some(ctx.propagator.evolve(&ctx.neel, period)?);
    let mut steps = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            psi = match psi.as_ref().map(|p| project(p, n - 1, neel_outcome(n - 1))) {
                Some(Ok(out)) => Some(out.post_state),
                Some(Err(Error::ImpossibleOutcome { .. })) | None => None,
                Some(Err(e)) => return Err(e),
            };
        }
        steps.push(match &psi {
            Some(p) => {
                let d = scar_decomposition(p, &ctx.scars)?;
                RephasingStep {
                    n,
                    weight: Some(d.weight),
                    components: Some(d.components),
                }
            }
            None => RephasingStep {
                n,
                weight: None,
                components: None,
            },
        });
    }
    let reported = steps[0]
        .components
        .as_ref()
        .map(|c| {
            c.iter()
                .enumerate()
                .filter(|(_, c)| c.amplitude * c.amplitude > REPORT_THRESHOLD)
                .map(|(s, _)| s)
                .collect()
        })
        .unwrap_or_default();
    Ok(RephasingScan {
        period,
        energies: ctx.scars.energies(),
        reported,
        steps,
    })
}

/// Entropy growth before and after one projection at `t = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct Velocity {
    pub n: usize,
    pub boundary: Boundary,
    pub period: f64,
    pub t_max: f64,
    pub grid_step: f64,
    /// Zero-based measured site; defaults to `N/2 - 2`.
    pub site: Option<usize>,
    pub outcome: Outcome,
    /// Fit window; defaults to `[T + 0.5, min(tMax, 3T)]`.
    pub window: Option<(f64, f64)>,
}

impl Default for Velocity {
    fn default() -> Self {
        Velocity {
            n: 16,
            boundary: Boundary::Obc,
            period: NOMINAL_PERIOD,
            t_max: 15.0,
            grid_step: 0.1,
            site: None,
            outcome: Outcome::Down,
            window: None,
        }
    }
}

impl Velocity {
    pub fn resolved_site(&self) -> Result<usize> {
        match self.site {
            Some(s) if s < self.n => Ok(s),
            Some(s) => arg(format!("site {s} out of range for N = {}", self.n)),
            None if self.n >= 4 && (self.n / 2) % 2 == 0 => Ok(self.n / 2 - 2),
            None => arg(format!("the default velocity site needs N/2 even, got N = {}", self.n)),
        }
    }

    pub fn resolved_window(&self) -> (f64, f64) {
        self.window
            .unwrap_or((self.period + 0.5, self.t_max.min(3.0 * self.period)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityResult {
    pub site: usize,
    pub outcome: Outcome,
    pub probability: f64,
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub unitary: Vec<f64>,
    pub measured: Vec<f64>,
    pub unitary_fit: LinearFit,
    pub measured_fit: LinearFit,
}

pub fn velocity_experiment(cfg: &Velocity) -> Result<VelocityResult> {
    let site = cfg.resolved_site()?;
    let window = cfg.resolved_window();
    if !(cfg.period > 0.0 && cfg.period < cfg.t_max) {
        return arg("period must lie inside (0, tMax)");
    }
    let basis = Arc::new(Basis::new(cfg.n, cfg.boundary)?);
    let h = Arc::new(SparseHamiltonian::build(basis.clone()));
    let prop = KrylovPropagator::new(h);
    let neel = make_neel(&basis)?;
    let cut = basis.bipartition(cfg.n / 2)?;
    let grid = time_grid(cfg.t_max, cfg.grid_step)?;
    let obs = Observables {
        reference: &neel,
        cut: &cut,
        scars: None,
    };
    // no Born events: the rng is never consulted
    let mut rng = trajectory_rng(0, 0);
    let unitary = run_trajectory(&prop, &neel, &obs, &grid, &[], &mut rng)?;
    let event = MeasurementEvent {
        time: cfg.period,
        site,
        mode: MeasurementMode::Postselect(cfg.outcome),
    };
    let measured = run_trajectory(&prop, &neel, &obs, &grid, &[event], &mut rng)?;
    if let TrajectoryStatus::DeadEnd { probability, .. } = measured.status {
        return Err(Error::ImpossibleOutcome {
            site,
            outcome: cfg.outcome,
            probability,
        });
    }
    let fit = |series: &[f64]| {
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .zip(series)
            .filter(|(&t, _)| t >= window.0 - 1e-9 && t <= window.1 + 1e-9)
            .map(|(&t, &s)| (t, s))
            .collect();
        linear_fit(&pts).ok_or_else(|| Error::Argument(format!("fit window [{}, {}] holds too few samples", window.0, window.1)))
    };
    Ok(VelocityResult {
        site,
        outcome: cfg.outcome,
        probability: measured.log[0].probability,
        window,
        unitary_fit: fit(&unitary.entropy)?,
        measured_fit: fit(&measured.entropy)?,
        times: grid.clone(),
        unitary: unitary.entropy,
        measured: measured.entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::DENSE_DIM_LIMIT;
    use crate::scars::wrap_phase;

    #[test]
    fn revival_near_nominal_period() {
        let b = Arc::new(Basis::new(12, Boundary::Pbc).unwrap());
        let prop = DensePropagator::new(&SparseHamiltonian::build(b.clone())).unwrap();
        let r = first_revival(&prop, &make_neel(&b).unwrap(), 7.0, 0.05).unwrap();
        assert!((4.5..5.0).contains(&r.time), "{r:?}");
        assert!(r.fidelity > 0.5);
    }

    #[test]
    fn early_projection_is_trivial() {
        let ctx = ScarContext::new(10, &ScarSearch::default(), DENSE_DIM_LIMIT).unwrap();
        let scan = scan_scar_weight(&ctx, &[1e-6, 1e-4], 0, Outcome::Up).unwrap();
        for w in &scan.weight {
            assert!((w.unwrap() - scan.reference).abs() < 1e-6);
        }
        let dead = scan_scar_weight(&ctx, &[0.0], 0, Outcome::Down).unwrap();
        assert_eq!(dead.weight, vec![None]);
    }

    #[test]
    fn rephasing_starts_from_free_phases() {
        let ctx = ScarContext::new(10, &ScarSearch::default(), DENSE_DIM_LIMIT).unwrap();
        let scan = rephasing_scan(&ctx, NOMINAL_PERIOD, 4).unwrap();
        assert_eq!(scan.steps.len(), 5);
        let comps = scan.steps[0].components.as_ref().unwrap();
        for (c, e) in comps.iter().zip(&scan.energies) {
            let expected = wrap_phase(-e * NOMINAL_PERIOD);
            assert!(wrap_phase(c.phase.unwrap() - expected).abs() < 1e-8);
        }
        assert!(!scan.reported.is_empty());
    }

    #[test]
    fn velocity_defaults() {
        let v = Velocity::default();
        assert_eq!(v.resolved_site().unwrap(), 6);
        let (a, b) = v.resolved_window();
        assert!((a - 5.22).abs() < 1e-12 && (b - 14.16).abs() < 1e-12);
        let odd_half = Velocity { n: 14, ..Default::default() };
        assert!(odd_half.resolved_site().is_err());
    }

    #[test]
    fn velocity_is_deterministic() {
        let cfg = Velocity {
            n: 8,
            t_max: 10.0,
            grid_step: 0.25,
            ..Default::default()
        };
        assert_eq!(velocity_experiment(&cfg).unwrap(), velocity_experiment(&cfg).unwrap());
    }
}
