//! Composite monitoring experiments built from evolution, measurement and scars.
//!
//! Every stochastic experiment is an ensemble of independent trajectories.
//! Trajectory `i` draws all its randomness from a ChaCha20 stream selected by
//! `(master_seed, i)`, trajectories are mapped in parallel and reduced in index
//! order, so results do not depend on the number of worker threads.

mod monitoring;
mod scar_experiments;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BipartitionMap;
use crate::error::{arg, Error, Result};
use crate::evolution::{entanglement_entropy, fidelity, Propagator, StateVector};
use crate::measurement::{project, sample_measurement, MeasurementEvent, MeasurementMode, Outcome};
use crate::scars::{scar_weight, ScarSet};

pub use monitoring::{
    neel_outcome, run_periodic_monitoring, run_random_monitoring, steady_state_scan, PeriodicMode, PeriodicMonitoring,
    RandomMonitoring, SteadyStateRow, SteadyStateScan,
};
pub use scar_experiments::{
    first_revival, rephasing_scan, scan_scar_weight, velocity_experiment, RephasingScan, RephasingStep, Revival,
    ScarContext, ScarWeightScan, Velocity, VelocityResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Neel,
    #[serde(alias = "unif")]
    Uniform,
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neel" => Ok(InitialState::Neel),
            "unif" | "uniform" => Ok(InitialState::Uniform),
            _ => arg(format!("unknown initial state '{s}' (expected neel or unif)")),
        }
    }
}

impl std::fmt::Display for InitialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitialState::Neel => "neel",
            InitialState::Uniform => "unif",
        })
    }
}

/// The rng for trajectory `index` of an ensemble.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer, used to derive independent master seeds for sub-ensembles.
pub fn derive_seed(master_seed: u64, key: u64) -> u64 {
    let mut z = master_seed ^ key.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `f(0), …, f(n-1)` evaluated in parallel, returned in index order. The
/// first error by index wins. `threads = None` uses the global pool.
pub fn par_map_indexed<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<Result<T>>>();
    let results = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::Argument(format!("cannot start thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

/// Uniform grid `0, step, 2·step, …` up to `t_max` inclusive (to rounding).
pub fn time_grid(t_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return arg(format!("grid step must be positive, got {step}"));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return arg(format!("tMax must be non-negative, got {t_max}"));
    }
    let count = (t_max / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| k as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master_seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: f64,
    pub site: usize,
    pub result: Outcome,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    /// A postselected outcome had vanishing probability.
    DeadEnd {
        time: f64,
        site: usize,
        probability: f64,
    },
}

/// One stochastic realization. Observables are aligned with `times`;
/// entries after a dead end are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: Option<SeedProvenance>,
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub entropy: Vec<f64>,
    pub scar_weight: Option<Vec<f64>>,
    pub log: Vec<LogEntry>,
    pub status: TrajectoryStatus,
}

impl TrajectoryRecord {
    /// Product of the recorded outcome probabilities.
    pub fn born_weight(&self) -> f64 {
        self.log.iter().map(|e| e.probability).product()
    }
}

/// Reference state, bipartition and optional scars used to evaluate a
/// trajectory on its grid.
pub struct Observables<'a> {
    pub reference: &'a StateVector,
    pub cut: &'a BipartitionMap,
    pub scars: Option<&'a ScarSet>,
}

/// Evolve `initial` through `events`, recording observables at each grid time.
///
/// Events at a time strictly before a grid point are applied before that
/// point is recorded; an event coinciding with a grid point is applied right
/// after it, so grid samples at measurement times are pre-measurement values.
pub fn run_trajectory<R: Rng + ?Sized>(
    prop: &dyn Propagator,
    initial: &StateVector,
    obs: &Observables<'_>,
    grid: &[f64],
    events: &[MeasurementEvent],
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    if grid.windows(2).any(|w| w[1] < w[0]) || events.windows(2).any(|w| w[1].time < w[0].time) {
        return arg("grid and events must be time ordered");
    }
    let len = grid.len();
    let mut rec = TrajectoryRecord {
        seed: None,
        times: grid.to_vec(),
        fidelity: Vec::with_capacity(len),
        entropy: Vec::with_capacity(len),
        scar_weight: obs.scars.map(|_| Vec::with_capacity(len)),
        log: Vec::new(),
        status: TrajectoryStatus::Completed,
    };
    let mut psi = initial.clone();
    let mut t = 0.0;
    let mut next = 0;
    let last = grid.last().copied().unwrap_or(0.0);

    let mut apply = |psi: &mut StateVector, t: &mut f64, ev: &MeasurementEvent, log: &mut Vec<LogEntry>| -> Result<Option<TrajectoryStatus>> {
        *psi = prop.evolve(psi, ev.time - *t)?;
        *t = ev.time;
        let out = match ev.mode {
            MeasurementMode::Born => sample_measurement(psi, ev.site, rng)?,
            MeasurementMode::Postselect(o) => match project(psi, ev.site, o) {
                Ok(out) => out,
                Err(Error::ImpossibleOutcome { probability, .. }) => {
                    return Ok(Some(TrajectoryStatus::DeadEnd {
                        time: ev.time,
                        site: ev.site,
                        probability,
                    }))
                }
                Err(e) => return Err(e),
            },
        };
        log.push(LogEntry {
            time: ev.time,
            site: ev.site,
            result: out.result,
            probability: out.probability,
        });
        *psi = out.post_state;
        Ok(None)
    };

    for &tg in grid {
        while next < events.len() && events[next].time < tg {
            if let Some(status) = apply(&mut psi, &mut t, &events[next], &mut rec.log)? {
                rec.status = status;
                pad_nan(&mut rec, len);
                return Ok(rec);
            }
            next += 1;
        }
        psi = prop.evolve(&psi, tg - t)?;
        t = tg;
        rec.fidelity.push(fidelity(&psi, obs.reference)?);
        rec.entropy.push(entanglement_entropy(&psi, obs.cut));
        if let (Some(scars), Some(w)) = (obs.scars, rec.scar_weight.as_mut()) {
            w.push(scar_weight(&psi, scars)?);
        }
    }
    // events at the final grid time still enter the log
    while next < events.len() && events[next].time <= last {
        if let Some(status) = apply(&mut psi, &mut t, &events[next], &mut rec.log)? {
            rec.status = status;
            return Ok(rec);
        }
        next += 1;
    }
    Ok(rec)
}

fn pad_nan(rec: &mut TrajectoryRecord, len: usize) {
    rec.fidelity.resize(len, f64::NAN);
    rec.entropy.resize(len, f64::NAN);
    if let Some(w) = rec.scar_weight.as_mut() {
        w.resize(len, f64::NAN);
    }
}

/// Pointwise trajectory mean and its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Series {
    /// Averages the finite entries at each index, summing in record order.
    pub fn from_columns<'a>(columns: impl Iterator<Item = &'a [f64]> + Clone, len: usize) -> Self {
        let mut mean = Vec::with_capacity(len);
        let mut stderr = Vec::with_capacity(len);
        for k in 0..len {
            let xs: Vec<f64> = columns.clone().map(|c| c[k]).filter(|x| x.is_finite()).collect();
            let (m, s) = crate::stats::mean_stderr(&xs);
            mean.push(m);
            stderr.push(s);
        }
        Series { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub fidelity: Series,
    pub entropy: Series,
    pub scar_weight: Option<Series>,
    pub n_traj: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl EnsembleResult {
    pub fn from_records(times: Vec<f64>, records: Vec<TrajectoryRecord>) -> Self {
        let len = times.len();
        let fidelity = Series::from_columns(records.iter().map(|r| r.fidelity.as_slice()), len);
        let entropy = Series::from_columns(records.iter().map(|r| r.entropy.as_slice()), len);
        let scar_weight = if records.iter().all(|r| r.scar_weight.is_some()) && !records.is_empty() {
            Some(Series::from_columns(
                records.iter().map(|r| r.scar_weight.as_deref().unwrap_or(&[])),
                len,
            ))
        } else {
            None
        };
        EnsembleResult {
            times,
            fidelity,
            entropy,
            scar_weight,
            n_traj: records.len(),
            records,
        }
    }

    pub fn dead_ends(&self) -> impl Iterator<Item = (usize, &TrajectoryStatus)> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.status != TrajectoryStatus::Completed)
            .map(|(i, r)| (i, &r.status))
    }
}
