use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    derive_seed, par_map_indexed, run_trajectory, time_grid, trajectory_rng, EnsembleResult, InitialState, Observables,
    SeedProvenance,
};
use crate::basis::{Basis, Boundary};
use crate::error::{arg, Error, Result};
use crate::evolution::{make_neel, make_uniform, KrylovPropagator, StateVector, DEFAULT_KRYLOV_DIM, DEFAULT_KRYLOV_TOL};
use crate::hamiltonian::SparseHamiltonian;
use crate::measurement::{schedule_random_events, MeasurementEvent, MeasurementMode, Outcome};
use crate::scars::NOMINAL_PERIOD;
use crate::stats::mean_stderr;

/// The local state of the Néel configuration at `site` (site 0 excited).
pub fn neel_outcome(site: usize) -> Outcome {
    Outcome::from_bit(site % 2 == 0)
}

fn initial_state(basis: &Arc<Basis>, initial: InitialState) -> Result<StateVector> {
    match initial {
        InitialState::Neel => make_neel(basis),
        InitialState::Uniform => Ok(make_uniform(basis)),
    }
}

fn krylov(basis: &Arc<Basis>, tol: f64, dim: usize) -> KrylovPropagator {
    KrylovPropagator::new(Arc::new(SparseHamiltonian::build(basis.clone()))).with_tolerance(tol, dim)
}

fn check_traj(n_traj: usize) -> Result<()> {
    if n_traj == 0 {
        return arg("nTraj must be at least 1");
    }
    Ok(())
}

/// Random-time Born monitoring of every site at rate `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct RandomMonitoring {
    pub n: usize,
    pub boundary: Boundary,
    pub initial: InitialState,
    pub gamma: f64,
    pub t_max: f64,
    pub grid_step: f64,
    pub n_traj: usize,
    pub master_seed: u64,
    pub krylov_tol: f64,
    pub krylov_dim: usize,
}

impl Default for RandomMonitoring {
    fn default() -> Self {
        RandomMonitoring {
            n: 16,
            boundary: Boundary::Obc,
            initial: InitialState::Neel,
            gamma: 0.04,
            t_max: 80.0,
            grid_step: 0.05,
            n_traj: 200,
            master_seed: 0,
            krylov_tol: DEFAULT_KRYLOV_TOL,
            krylov_dim: DEFAULT_KRYLOV_DIM,
        }
    }
}

pub fn run_random_monitoring(cfg: &RandomMonitoring, threads: Option<usize>) -> Result<EnsembleResult> {
    check_traj(cfg.n_traj)?;
    let basis = Arc::new(Basis::new(cfg.n, cfg.boundary)?);
    let psi0 = initial_state(&basis, cfg.initial)?;
    let cut = basis.bipartition(cfg.n / 2)?;
    let grid = time_grid(cfg.t_max, cfg.grid_step)?;
    let prop = krylov(&basis, cfg.krylov_tol, cfg.krylov_dim);
    // validates gamma and tMax before any trajectory starts
    schedule_random_events(cfg.n, cfg.gamma, cfg.t_max, &mut trajectory_rng(0, 0))?;

    let obs = Observables {
        reference: &psi0,
        cut: &cut,
        scars: None,
    };
    let records = par_map_indexed(cfg.n_traj, threads, |i| {
        let mut rng = trajectory_rng(cfg.master_seed, i as u64);
        let events = schedule_random_events(cfg.n, cfg.gamma, cfg.t_max, &mut rng)?;
        let mut rec = run_trajectory(&prop, &psi0, &obs, &grid, &events, &mut rng).map_err(|e| Error::Trajectory {
            index: i,
            source: Box::new(e),
        })?;
        rec.seed = Some(SeedProvenance {
            master_seed: cfg.master_seed,
            stream: i as u64,
        });
        Ok(rec)
    })?;
    Ok(EnsembleResult::from_records(grid, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodicMode {
    Unitary,
    Born,
    Postselect,
}

impl std::str::FromStr for PeriodicMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unitary" => Ok(PeriodicMode::Unitary),
            "born" => Ok(PeriodicMode::Born),
            "postselect" => Ok(PeriodicMode::Postselect),
            _ => arg(format!("unknown mode '{s}' (expected unitary, born or postselect)")),
        }
    }
}

/// Néel evolution interrupted after every period by measurements of `sites`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct PeriodicMonitoring {
    pub n: usize,
    pub boundary: Boundary,
    pub mode: PeriodicMode,
    pub sites: Vec<usize>,
    pub n_periods: usize,
    pub period: f64,
    /// Grid points per period; 1 samples only at `nT`.
    pub samples_per_period: usize,
    pub n_traj: usize,
    pub master_seed: u64,
    pub krylov_tol: f64,
    pub krylov_dim: usize,
}

impl Default for PeriodicMonitoring {
    fn default() -> Self {
        PeriodicMonitoring {
            n: 16,
            boundary: Boundary::Obc,
            mode: PeriodicMode::Postselect,
            sites: vec![0],
            n_periods: 10,
            period: NOMINAL_PERIOD,
            samples_per_period: 1,
            n_traj: 200,
            master_seed: 0,
            krylov_tol: DEFAULT_KRYLOV_TOL,
            krylov_dim: DEFAULT_KRYLOV_DIM,
        }
    }
}

impl PeriodicMonitoring {
    /// Measurement events after each of the `n_periods` periods.
    pub fn events(&self) -> Vec<MeasurementEvent> {
        let mut events = Vec::new();
        if self.mode == PeriodicMode::Unitary {
            return events;
        }
        for k in 1..=self.n_periods {
            for &site in &self.sites {
                let mode = match self.mode {
                    PeriodicMode::Born => MeasurementMode::Born,
                    _ => MeasurementMode::Postselect(neel_outcome(site)),
                };
                events.push(MeasurementEvent {
                    time: k as f64 * self.period,
                    site,
                    mode,
                });
            }
        }
        events
    }

    pub fn grid(&self) -> Vec<f64> {
        let per = self.samples_per_period.max(1);
        (0..=self.n_periods * per)
            .map(|k| (k / per) as f64 * self.period + (k % per) as f64 * self.period / per as f64)
            .collect()
    }

    /// Trajectories actually run: deterministic modes need only one.
    pub fn effective_traj(&self) -> usize {
        match self.mode {
            PeriodicMode::Born => self.n_traj,
            _ => 1,
        }
    }
}

pub fn run_periodic_monitoring(cfg: &PeriodicMonitoring, threads: Option<usize>) -> Result<EnsembleResult> {
    check_traj(cfg.n_traj)?;
    if !(cfg.period > 0.0 && cfg.period.is_finite()) {
        return arg(format!("period must be positive, got {}", cfg.period));
    }
    if cfg.mode != PeriodicMode::Unitary && cfg.sites.is_empty() {
        return arg("sites: measured modes require at least one site");
    }
    if let Some(&s) = cfg.sites.iter().find(|&&s| s >= cfg.n) {
        return arg(format!("sites: site {s} out of range for N = {}", cfg.n));
    }
    let basis = Arc::new(Basis::new(cfg.n, cfg.boundary)?);
    let neel = make_neel(&basis)?;
    let cut = basis.bipartition(cfg.n / 2)?;
    let prop = krylov(&basis, cfg.krylov_tol, cfg.krylov_dim);
    let grid = cfg.grid();
    let events = cfg.events();
    let obs = Observables {
        reference: &neel,
        cut: &cut,
        scars: None,
    };
    let records = par_map_indexed(cfg.effective_traj(), threads, |i| {
        let mut rng = trajectory_rng(cfg.master_seed, i as u64);
        let mut rec = run_trajectory(&prop, &neel, &obs, &grid, &events, &mut rng).map_err(|e| Error::Trajectory {
            index: i,
            source: Box::new(e),
        })?;
        rec.seed = Some(SeedProvenance {
            master_seed: cfg.master_seed,
            stream: i as u64,
        });
        Ok(rec)
    })?;
    Ok(EnsembleResult::from_records(grid, records))
}

/// Long-time entropy averages over a grid of sizes and rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SteadyStateScan {
    pub sizes: Vec<usize>,
    pub gammas: Vec<f64>,
    pub boundary: Boundary,
    pub window: (f64, f64),
    pub grid_step: f64,
    pub n_traj: usize,
    pub master_seed: u64,
    pub krylov_tol: f64,
    pub krylov_dim: usize,
}

impl Default for SteadyStateScan {
    fn default() -> Self {
        SteadyStateScan {
            sizes: vec![8, 10, 12],
            gammas: vec![0.0, 0.01, 0.02, 0.04, 0.08, 0.16],
            boundary: Boundary::Obc,
            window: (60.0, 80.0),
            grid_step: 0.5,
            n_traj: 50,
            master_seed: 0,
            krylov_tol: 1e-8,
            krylov_dim: DEFAULT_KRYLOV_DIM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateRow {
    pub n: usize,
    pub gamma: f64,
    pub mean_entropy: f64,
    pub stderr: f64,
    /// `false` for `γ = 0`: unitary dynamics has no measurement steady state.
    pub stationary: bool,
}

pub fn steady_state_scan(cfg: &SteadyStateScan, threads: Option<usize>) -> Result<Vec<SteadyStateRow>> {
    let (lo, hi) = cfg.window;
    if !(lo >= 0.0 && hi > lo) {
        return arg(format!("window must satisfy 0 <= start < end, got [{lo}, {hi}]"));
    }
    if cfg.sizes.is_empty() || cfg.gammas.is_empty() {
        return arg("sizes and gammas must be non-empty");
    }
    let mut rows = Vec::with_capacity(cfg.sizes.len() * cfg.gammas.len());
    for (si, &n) in cfg.sizes.iter().enumerate() {
        for (gi, &gamma) in cfg.gammas.iter().enumerate() {
            let cell = (si * cfg.gammas.len() + gi) as u64;
            let run = RandomMonitoring {
                n,
                boundary: cfg.boundary,
                initial: InitialState::Neel,
                gamma,
                t_max: hi,
                grid_step: cfg.grid_step,
                n_traj: cfg.n_traj,
                master_seed: derive_seed(cfg.master_seed, cell),
                krylov_tol: cfg.krylov_tol,
                krylov_dim: cfg.krylov_dim,
            };
            let ens = run_random_monitoring(&run, threads)?;
            let in_window: Vec<usize> = (0..ens.times.len())
                .filter(|&k| ens.times[k] >= lo - 1e-9 && ens.times[k] <= hi + 1e-9)
                .collect();
            let per_traj: Vec<f64> = ens
                .records
                .iter()
                .map(|r| in_window.iter().map(|&k| r.entropy[k]).sum::<f64>() / in_window.len() as f64)
                .collect();
            let (mean_entropy, stderr) = mean_stderr(&per_traj);
            rows.push(SteadyStateRow {
                n,
                gamma,
                mean_entropy,
                stderr,
                stationary: gamma > 0.0,
            });
        }
    }
    Ok(rows)
}
