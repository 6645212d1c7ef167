use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use pxp_core::basis::{Basis, Boundary};
use pxp_core::evolution::{make_neel, KrylovPropagator, Propagator, DEFAULT_KRYLOV_DIM, DEFAULT_KRYLOV_TOL, DENSE_DIM_LIMIT};
use pxp_core::fss::{fit_collapse, FitOptions, ScalingDataset, ScalingRow};
use pxp_core::measurement::Outcome;
use pxp_core::protocols::{
    first_revival, rephasing_scan, run_periodic_monitoring, run_random_monitoring, scan_scar_weight, steady_state_scan,
    velocity_experiment, EnsembleResult, InitialState, PeriodicMode, PeriodicMonitoring, RandomMonitoring, ScarContext,
    Series, SteadyStateScan, TrajectoryStatus, Velocity,
};
use pxp_core::scars::{ScarSearch, NOMINAL_PERIOD};
use pxp_core::{Error as CoreError, SparseHamiltonian};
use serde_json::{json, Value};

use crate::config::{invalid, Params};
use crate::output::{config_hash, fmt_f, Manifest, OutputDir, MANIFEST_VERSION};
use crate::{CliError, Kind, RunArgs};

/// Largest revival time searched when calibrating the period.
const CALIBRATION_HORIZON: f64 = 7.0;
const CALIBRATION_STEP: f64 = 0.05;

/// A validated, fully specified run.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Basis {
        n: usize,
        boundary: Boundary,
        dump: bool,
    },
    Scars {
        n: usize,
        search: ScarSearch,
        dense_limit: usize,
    },
    RandomMon(RandomMonitoring),
    PeriodicMon {
        cfg: PeriodicMonitoring,
        calibrate: bool,
    },
    ScarWeight {
        n: usize,
        period: f64,
        calibrate: bool,
        t_max: f64,
        grid_step: f64,
        site: usize,
        outcome: Outcome,
        search: ScarSearch,
        dense_limit: usize,
    },
    Rephase {
        n: usize,
        period: f64,
        calibrate: bool,
        n_max: usize,
        search: ScarSearch,
        dense_limit: usize,
    },
    Velocity {
        cfg: Velocity,
        calibrate: bool,
    },
    SteadyScan(SteadyStateScan),
    Fss {
        data: PathBuf,
        n_boot: usize,
        seed: u64,
    },
}

fn pick<T: Clone>(slot: &mut Option<T>, given: &Option<T>, default: T) -> T {
    let v = given.clone().unwrap_or(default);
    *slot = Some(v.clone());
    v
}

fn check_chain(n: usize, boundary: Boundary) -> Result<(), CliError> {
    if n == 0 || n > pxp_core::basis::MAX_SITES {
        return invalid("n", format!("N must lie in 1..={}, got {n}", pxp_core::basis::MAX_SITES));
    }
    if boundary == Boundary::Pbc && n < 3 {
        return invalid("boundary", format!("pbc requires N >= 3, got N = {n}"));
    }
    Ok(())
}

fn check_neel(n: usize) -> Result<(), CliError> {
    if n % 2 != 0 {
        return invalid("initial", format!("neel requires even N, got N = {n}"));
    }
    Ok(())
}

fn check_positive(field: &str, x: f64) -> Result<(), CliError> {
    if !(x > 0.0 && x.is_finite()) {
        return invalid(field, format!("must be positive and finite, got {x}"));
    }
    Ok(())
}

fn check_pbc(boundary: Boundary) -> Result<(), CliError> {
    if boundary != Boundary::Pbc {
        return invalid("boundary", "scar analyses run on periodic chains (pbc)");
    }
    Ok(())
}

fn check_dense(n: usize, limit: usize) -> Result<(), CliError> {
    let dim = Basis::new(n, Boundary::Pbc)?.dim();
    if dim > limit {
        return Err(CoreError::Capacity { dim, limit }.into());
    }
    Ok(())
}

fn window(eff: &mut Params, given: &Params, default: (f64, f64)) -> Result<(f64, f64), CliError> {
    let w = pick(&mut eff.window, &given.window, vec![default.0, default.1]);
    match w[..] {
        [a, b] if a >= 0.0 && b > a => Ok((a, b)),
        _ => invalid("window", format!("expected start,end with 0 <= start < end, got {w:?}")),
    }
}

fn scar_search(eff: &mut Params, p: &Params, period: f64) -> Result<ScarSearch, CliError> {
    let overlap_factor = pick(&mut eff.overlap_factor, &p.overlap_factor, 10.0);
    check_positive("overlapFactor", overlap_factor)?;
    Ok(ScarSearch {
        period,
        overlap_factor,
        ..Default::default()
    })
}

/// Fill defaults for `kind`, validate every field and cross-field constraint,
/// and return the effective parameters together with the plan.
pub fn resolve(kind: Kind, p: &Params) -> Result<(Params, Plan), CliError> {
    let mut e = Params::default();
    let plan = match kind {
        Kind::Basis => {
            let n = pick(&mut e.n, &p.n, 12);
            let boundary = pick(&mut e.boundary, &p.boundary, Boundary::Obc);
            check_chain(n, boundary)?;
            let dump = pick(&mut e.dump, &p.dump, false);
            Plan::Basis { n, boundary, dump }
        }
        Kind::Scars => {
            let n = pick(&mut e.n, &p.n, 12);
            let boundary = pick(&mut e.boundary, &p.boundary, Boundary::Pbc);
            check_pbc(boundary)?;
            check_chain(n, boundary)?;
            check_neel(n)?;
            let period = pick(&mut e.period, &p.period, NOMINAL_PERIOD);
            check_positive("period", period)?;
            let search = scar_search(&mut e, p, period)?;
            let dense_limit = pick(&mut e.dense_limit, &p.dense_limit, DENSE_DIM_LIMIT);
            check_dense(n, dense_limit)?;
            Plan::Scars { n, search, dense_limit }
        }
        Kind::RandomMon => {
            let d = RandomMonitoring::default();
            let cfg = RandomMonitoring {
                n: pick(&mut e.n, &p.n, d.n),
                boundary: pick(&mut e.boundary, &p.boundary, d.boundary),
                initial: pick(&mut e.initial, &p.initial, d.initial),
                gamma: pick(&mut e.gamma, &p.gamma, d.gamma),
                t_max: pick(&mut e.t_max, &p.t_max, d.t_max),
                grid_step: pick(&mut e.grid_step, &p.grid_step, d.grid_step),
                n_traj: pick(&mut e.n_traj, &p.n_traj, d.n_traj),
                master_seed: pick(&mut e.master_seed, &p.master_seed, d.master_seed),
                krylov_tol: pick(&mut e.krylov_tol, &p.krylov_tol, DEFAULT_KRYLOV_TOL),
                krylov_dim: pick(&mut e.krylov_dim, &p.krylov_dim, DEFAULT_KRYLOV_DIM),
            };
            check_chain(cfg.n, cfg.boundary)?;
            if cfg.initial == InitialState::Neel {
                check_neel(cfg.n)?;
            }
            if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
                return invalid("gamma", format!("must be finite and non-negative, got {}", cfg.gamma));
            }
            check_positive("tMax", cfg.t_max)?;
            check_positive("gridStep", cfg.grid_step)?;
            check_krylov(&cfg.krylov_tol, cfg.krylov_dim)?;
            if cfg.n_traj == 0 {
                return invalid("nTraj", "must be at least 1");
            }
            Plan::RandomMon(cfg)
        }
        Kind::PeriodicMon => {
            let d = PeriodicMonitoring::default();
            let cfg = PeriodicMonitoring {
                n: pick(&mut e.n, &p.n, d.n),
                boundary: pick(&mut e.boundary, &p.boundary, d.boundary),
                mode: pick(&mut e.mode, &p.mode, d.mode),
                sites: pick(&mut e.sites, &p.sites, d.sites.clone()),
                n_periods: pick(&mut e.n_periods, &p.n_periods, d.n_periods),
                period: pick(&mut e.period, &p.period, d.period),
                samples_per_period: pick(&mut e.samples_per_period, &p.samples_per_period, d.samples_per_period),
                n_traj: pick(&mut e.n_traj, &p.n_traj, d.n_traj),
                master_seed: pick(&mut e.master_seed, &p.master_seed, d.master_seed),
                krylov_tol: pick(&mut e.krylov_tol, &p.krylov_tol, DEFAULT_KRYLOV_TOL),
                krylov_dim: pick(&mut e.krylov_dim, &p.krylov_dim, DEFAULT_KRYLOV_DIM),
            };
            let calibrate = pick(&mut e.calibrate_period, &p.calibrate_period, false);
            check_chain(cfg.n, cfg.boundary)?;
            check_neel(cfg.n)?;
            check_positive("period", cfg.period)?;
            check_krylov(&cfg.krylov_tol, cfg.krylov_dim)?;
            if cfg.mode != PeriodicMode::Unitary && cfg.sites.is_empty() {
                return invalid("sites", "born and postselect modes require at least one site");
            }
            if let Some(s) = cfg.sites.iter().find(|&&s| s >= cfg.n) {
                return invalid("sites", format!("site {s} out of range for N = {}", cfg.n));
            }
            if cfg.n_periods == 0 || cfg.samples_per_period == 0 || cfg.n_traj == 0 {
                return invalid("nPeriods/samplesPerPeriod/nTraj", "must be at least 1");
            }
            Plan::PeriodicMon { cfg, calibrate }
        }
        Kind::ScarWeight => {
            let n = pick(&mut e.n, &p.n, 14);
            let boundary = pick(&mut e.boundary, &p.boundary, Boundary::Pbc);
            check_pbc(boundary)?;
            check_chain(n, boundary)?;
            check_neel(n)?;
            let period = pick(&mut e.period, &p.period, NOMINAL_PERIOD);
            check_positive("period", period)?;
            let calibrate = pick(&mut e.calibrate_period, &p.calibrate_period, false);
            let t_max = pick(&mut e.t_max, &p.t_max, 20.0);
            let grid_step = pick(&mut e.grid_step, &p.grid_step, 0.05);
            check_positive("tMax", t_max)?;
            check_positive("gridStep", grid_step)?;
            let site = pick(&mut e.site, &p.site, 0);
            if site >= n {
                return invalid("site", format!("site {site} out of range for N = {n}"));
            }
            let outcome = pick(&mut e.outcome, &p.outcome, Outcome::Up);
            let search = scar_search(&mut e, p, period)?;
            let dense_limit = pick(&mut e.dense_limit, &p.dense_limit, DENSE_DIM_LIMIT);
            check_dense(n, dense_limit)?;
            Plan::ScarWeight {
                n,
                period,
                calibrate,
                t_max,
                grid_step,
                site,
                outcome,
                search,
                dense_limit,
            }
        }
        Kind::Rephase => {
            let n = pick(&mut e.n, &p.n, 14);
            let boundary = pick(&mut e.boundary, &p.boundary, Boundary::Pbc);
            check_pbc(boundary)?;
            check_chain(n, boundary)?;
            check_neel(n)?;
            let period = pick(&mut e.period, &p.period, NOMINAL_PERIOD);
            check_positive("period", period)?;
            let calibrate = pick(&mut e.calibrate_period, &p.calibrate_period, false);
            let n_max = pick(&mut e.n_max, &p.n_max, n.min(10));
            if n_max > n {
                return invalid("nMax", format!("must not exceed N = {n}, got {n_max}"));
            }
            let search = scar_search(&mut e, p, period)?;
            let dense_limit = pick(&mut e.dense_limit, &p.dense_limit, DENSE_DIM_LIMIT);
            check_dense(n, dense_limit)?;
            Plan::Rephase {
                n,
                period,
                calibrate,
                n_max,
                search,
                dense_limit,
            }
        }
        Kind::Velocity => {
            let d = Velocity::default();
            let n = pick(&mut e.n, &p.n, d.n);
            let period = pick(&mut e.period, &p.period, d.period);
            let mut cfg = Velocity {
                n,
                boundary: pick(&mut e.boundary, &p.boundary, d.boundary),
                period,
                t_max: pick(&mut e.t_max, &p.t_max, d.t_max),
                grid_step: pick(&mut e.grid_step, &p.grid_step, d.grid_step),
                site: p.site,
                outcome: pick(&mut e.outcome, &p.outcome, d.outcome),
                window: None,
            };
            check_chain(cfg.n, cfg.boundary)?;
            check_neel(cfg.n)?;
            check_positive("period", cfg.period)?;
            check_positive("tMax", cfg.t_max)?;
            check_positive("gridStep", cfg.grid_step)?;
            if cfg.period >= cfg.t_max {
                return invalid("tMax", format!("must exceed the period {}", cfg.period));
            }
            let site = cfg
                .resolved_site()
                .or_else(|err| invalid("site", err.to_string().trim_start_matches("invalid argument: ")))?;
            e.site = Some(site);
            cfg.site = Some(site);
            cfg.window = match &p.window {
                Some(_) => Some(window(&mut e, p, (0.0, 0.0))?),
                None => None,
            };
            let calibrate = pick(&mut e.calibrate_period, &p.calibrate_period, false);
            Plan::Velocity { cfg, calibrate }
        }
        Kind::SteadyScan => {
            let d = SteadyStateScan::default();
            let cfg = SteadyStateScan {
                sizes: pick(&mut e.sizes, &p.sizes, d.sizes.clone()),
                gammas: pick(&mut e.gammas, &p.gammas, d.gammas.clone()),
                boundary: pick(&mut e.boundary, &p.boundary, d.boundary),
                window: window(&mut e, p, d.window)?,
                grid_step: pick(&mut e.grid_step, &p.grid_step, d.grid_step),
                n_traj: pick(&mut e.n_traj, &p.n_traj, d.n_traj),
                master_seed: pick(&mut e.master_seed, &p.master_seed, d.master_seed),
                krylov_tol: pick(&mut e.krylov_tol, &p.krylov_tol, d.krylov_tol),
                krylov_dim: pick(&mut e.krylov_dim, &p.krylov_dim, d.krylov_dim),
            };
            if cfg.sizes.is_empty() || cfg.gammas.is_empty() {
                return invalid("sizes/gammas", "must be non-empty");
            }
            for &n in &cfg.sizes {
                check_chain(n, cfg.boundary)?;
                check_neel(n)?;
            }
            if let Some(g) = cfg.gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
                return invalid("gammas", format!("rates must be finite and non-negative, got {g}"));
            }
            check_positive("gridStep", cfg.grid_step)?;
            check_krylov(&cfg.krylov_tol, cfg.krylov_dim)?;
            if cfg.n_traj == 0 {
                return invalid("nTraj", "must be at least 1");
            }
            Plan::SteadyScan(cfg)
        }
        Kind::Fss => {
            let Some(data) = p.data.clone() else {
                return invalid("data", "fss requires an input table (--data <csv>)");
            };
            e.data = Some(data.clone());
            let n_boot = pick(&mut e.n_boot, &p.n_boot, 100);
            let seed = pick(&mut e.master_seed, &p.master_seed, 0);
            Plan::Fss { data, n_boot, seed }
        }
    };
    Ok((e, plan))
}

fn check_krylov(tol: &f64, dim: usize) -> Result<(), CliError> {
    check_positive("krylovTol", *tol)?;
    if dim < 2 {
        return invalid("krylovDim", format!("must be at least 2, got {dim}"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: PathBuf,
    pub outputs: Vec<String>,
    pub results: Value,
}

/// Resolve the arguments against an optional config file, check the output
/// directory, run, and write CSV files plus the manifest.
pub fn execute(kind: Kind, args: &RunArgs) -> Result<RunSummary, CliError> {
    let file = match &args.config {
        Some(path) => Params::load(path)?,
        None => Params::default(),
    };
    let merged = Params::merged(&file, &args.params);
    let (effective, plan) = resolve(kind, &merged)?;
    if args.threads == Some(0) {
        return invalid("threads", "must be at least 1");
    }
    let mut out = OutputDir::prepare(&args.out_dir)?;
    let config = serde_json::to_value(&effective).expect("params serialize");
    let hash = config_hash(kind.name(), &config);
    let started = Instant::now();
    let mut ctx = RunContext {
        kind,
        hash: &hash,
        out: &mut out,
        explicit: args.out.as_deref(),
        threads: args.threads,
        dimension: None,
        trajectories: Vec::new(),
        dead_end: None,
    };
    let results = ctx.run(&plan)?;
    let (dimension, trajectories, dead_end) = (ctx.dimension, std::mem::take(&mut ctx.trajectories), ctx.dead_end.take());
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: "pxp",
        version: env!("CARGO_PKG_VERSION"),
        command: kind.name().to_string(),
        config,
        config_hash: hash.clone(),
        threads: args.threads,
        dimension,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        status: if dead_end.is_some() { "dead_end".into() } else { "ok".into() },
        outputs: out.outputs(),
        results: results.clone(),
        trajectories,
    };
    let manifest_path = out.write_manifest(&manifest)?;
    if let Some(msg) = dead_end {
        return Err(CliError::DeadEnd(msg));
    }
    Ok(RunSummary {
        manifest: manifest_path,
        outputs: out.outputs(),
        results,
    })
}

struct RunContext<'a> {
    kind: Kind,
    hash: &'a str,
    out: &'a mut OutputDir,
    explicit: Option<&'a Path>,
    threads: Option<usize>,
    dimension: Option<usize>,
    trajectories: Vec<Value>,
    dead_end: Option<String>,
}

fn f(x: f64) -> String {
    fmt_f(x)
}

fn calibrated(basis: &Arc<Basis>, prop: &dyn Propagator) -> Result<f64, CliError> {
    Ok(first_revival(prop, &make_neel(basis)?, CALIBRATION_HORIZON, CALIBRATION_STEP)?.time)
}

impl RunContext<'_> {
    fn csv(&mut self, name: &str, primary: bool, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        let path = self.out.path(name, if primary { self.explicit } else { None });
        self.out.write_csv(path, self.kind.name(), self.hash, header, rows)
    }

    fn series_csv(&mut self, name: &str, primary: bool, times: &[f64], s: &Series) -> Result<(), CliError> {
        let rows = times
            .iter()
            .zip(s.mean.iter().zip(&s.stderr))
            .map(|(t, (m, e))| vec![f(*t), f(*m), f(*e)])
            .collect();
        self.csv(name, primary, &["time", "mean", "stderr"], rows)
    }

    fn record_trajectories(&mut self, ens: &EnsembleResult, period: Option<f64>) {
        for (i, r) in ens.records.iter().enumerate() {
            let mut entry = json!({
                "index": i,
                "seed": r.seed,
                "events": r.log.len(),
                "bornWeight": r.born_weight(),
                "status": r.status,
            });
            if let (TrajectoryStatus::DeadEnd { time, .. }, Some(t)) = (r.status, period) {
                entry["abortPeriod"] = json!((time / t).round() as usize);
            }
            self.trajectories.push(entry);
        }
    }

    fn run(&mut self, plan: &Plan) -> Result<Value, CliError> {
        match plan {
            Plan::Basis { n, boundary, dump } => {
                let b = Basis::new(*n, *boundary)?;
                self.dimension = Some(b.dim());
                println!("N = {n}, {boundary}: dimension {}", b.dim());
                if *dump {
                    let rows = b
                        .configs()
                        .enumerate()
                        .map(|(i, c)| vec![i.to_string(), c.0.to_string(), c.to_bitstring(*n)])
                        .collect();
                    self.csv("basis.csv", true, &["index", "mask", "config"], rows)?;
                }
                Ok(json!({ "dimension": b.dim() }))
            }
            Plan::Scars { n, search, dense_limit } => {
                let ctx = ScarContext::new(*n, search, *dense_limit)?;
                self.dimension = Some(ctx.basis.dim());
                let rows = ctx
                    .scars
                    .scars()
                    .iter()
                    .enumerate()
                    .map(|(s, sc)| {
                        vec![
                            s.to_string(),
                            sc.rung.to_string(),
                            sc.index.to_string(),
                            f(sc.energy),
                            f(sc.neel_overlap),
                            f(sc.entropy),
                        ]
                    })
                    .collect();
                self.csv("scars.csv", true, &["scar", "rung", "eigen_index", "energy", "neel_overlap", "entropy"], rows)?;
                let w = pxp_core::scars::scar_weight(&ctx.neel, &ctx.scars)?;
                Ok(json!({
                    "count": ctx.scars.len(),
                    "neelScarWeight": w,
                    "ladderSpacing": ctx.scars.ladder_spacing((*n / 4) as i32),
                }))
            }
            Plan::RandomMon(cfg) => {
                self.dimension = Some(Basis::new(cfg.n, cfg.boundary)?.dim());
                let ens = run_random_monitoring(cfg, self.threads)?;
                self.series_csv("entropy.csv", true, &ens.times, &ens.entropy)?;
                self.series_csv("fidelity.csv", false, &ens.times, &ens.fidelity)?;
                self.record_trajectories(&ens, None);
                Ok(json!({ "nTraj": ens.n_traj }))
            }
            Plan::PeriodicMon { cfg, calibrate } => {
                let basis = Arc::new(Basis::new(cfg.n, cfg.boundary)?);
                self.dimension = Some(basis.dim());
                let mut cfg = cfg.clone();
                if *calibrate {
                    let prop = KrylovPropagator::new(Arc::new(SparseHamiltonian::build(basis.clone())))
                        .with_tolerance(cfg.krylov_tol, cfg.krylov_dim);
                    cfg.period = calibrated(&basis, &prop)?;
                }
                let ens = run_periodic_monitoring(&cfg, self.threads)?;
                self.series_csv("fidelity.csv", true, &ens.times, &ens.fidelity)?;
                self.series_csv("entropy.csv", false, &ens.times, &ens.entropy)?;
                let rows = ens
                    .records
                    .iter()
                    .enumerate()
                    .flat_map(|(i, r)| {
                        r.log.iter().map(move |e| {
                            vec![i.to_string(), f(e.time), e.site.to_string(), e.result.to_string(), f(e.probability)]
                        })
                    })
                    .collect();
                self.csv("measurements.csv", false, &["trajectory", "time", "site", "outcome", "probability"], rows)?;
                self.record_trajectories(&ens, Some(cfg.period));
                let dead: Vec<usize> = ens.dead_ends().map(|(i, _)| i).collect();
                if !dead.is_empty() {
                    self.dead_end = Some(format!("{} trajectories aborted (indices {dead:?})", dead.len()));
                }
                Ok(json!({ "periodUsed": cfg.period, "nTraj": ens.n_traj, "deadEnds": dead }))
            }
            Plan::ScarWeight {
                n,
                period,
                calibrate,
                t_max,
                grid_step,
                site,
                outcome,
                search,
                dense_limit,
            } => {
                let ctx = ScarContext::new(*n, search, *dense_limit)?;
                self.dimension = Some(ctx.basis.dim());
                let period = if *calibrate { calibrated(&ctx.basis, &ctx.propagator)? } else { *period };
                let times: Vec<f64> = pxp_core::protocols::time_grid(*t_max, *grid_step)?.into_iter().skip(1).collect();
                let scan = scan_scar_weight(&ctx, &times, *site, *outcome)?;
                let rows = scan
                    .times
                    .iter()
                    .zip(&scan.weight)
                    .map(|(t, w)| vec![f(*t), w.map(f).unwrap_or_default(), f(scan.reference)])
                    .collect();
                self.csv("scar_weight.csv", true, &["time", "weight", "reference"], rows)?;
                Ok(json!({ "periodUsed": period, "reference": scan.reference }))
            }
            Plan::Rephase {
                n,
                period,
                calibrate,
                n_max,
                search,
                dense_limit,
            } => {
                let ctx = ScarContext::new(*n, search, *dense_limit)?;
                self.dimension = Some(ctx.basis.dim());
                let period = if *calibrate { calibrated(&ctx.basis, &ctx.propagator)? } else { *period };
                let scan = rephasing_scan(&ctx, period, *n_max)?;
                let mut rows = Vec::new();
                for step in &scan.steps {
                    for &s in &scan.reported {
                        let (a2, phase) = match &step.components {
                            Some(c) => (f(c[s].amplitude.powi(2)), c[s].phase),
                            None => (String::new(), None),
                        };
                        rows.push(vec![
                            step.n.to_string(),
                            s.to_string(),
                            f(scan.energies[s]),
                            a2,
                            phase.map(f).unwrap_or_default(),
                            phase.map(|p| f(p.sin())).unwrap_or_default(),
                            step.weight.map(f).unwrap_or_default(),
                        ]);
                    }
                }
                self.csv(
                    "rephase.csv",
                    true,
                    &["n_measured", "scar", "energy", "amplitude_sq", "phase", "sin_phase", "weight"],
                    rows,
                )?;
                let dead = scan.steps.iter().find(|s| s.weight.is_none()).map(|s| s.n);
                if let Some(k) = dead {
                    self.dead_end = Some(format!("projection {k} of the rephasing sequence is impossible"));
                }
                Ok(json!({ "periodUsed": period, "reported": scan.reported, "deadEndAt": dead }))
            }
            Plan::Velocity { cfg, calibrate } => {
                let basis = Arc::new(Basis::new(cfg.n, cfg.boundary)?);
                self.dimension = Some(basis.dim());
                let mut cfg = cfg.clone();
                if *calibrate {
                    let prop = KrylovPropagator::new(Arc::new(SparseHamiltonian::build(basis.clone())));
                    cfg.period = calibrated(&basis, &prop)?;
                }
                let r = velocity_experiment(&cfg)?;
                let rows = r
                    .times
                    .iter()
                    .zip(r.unitary.iter().zip(&r.measured))
                    .map(|(t, (u, m))| vec![f(*t), f(*u), f(*m)])
                    .collect();
                self.csv("entropy.csv", true, &["time", "unitary", "measured"], rows)?;
                let fits = [("unitary", r.unitary_fit), ("measured", r.measured_fit)]
                    .iter()
                    .map(|(name, fit)| vec![name.to_string(), f(fit.slope), f(fit.slope_stderr), f(fit.intercept)])
                    .collect();
                self.csv("velocity_fit.csv", false, &["run", "slope", "slope_stderr", "intercept"], fits)?;
                Ok(json!({
                    "periodUsed": cfg.period,
                    "site": r.site,
                    "probability": r.probability,
                    "window": r.window,
                    "unitaryFit": r.unitary_fit,
                    "measuredFit": r.measured_fit,
                }))
            }
            Plan::SteadyScan(cfg) => {
                let rows = steady_state_scan(cfg, self.threads)?;
                let table = rows
                    .iter()
                    .map(|r| {
                        vec![r.n.to_string(), f(r.gamma), f(r.mean_entropy), f(r.stderr), r.stationary.to_string()]
                    })
                    .collect();
                self.csv("steady_state.csv", true, &["N", "gamma", "S", "S_err", "stationary"], table)?;
                Ok(json!({ "cells": rows.len() }))
            }
            Plan::Fss { data, n_boot, seed } => {
                let ds = read_scaling_csv(data)?;
                let opts = FitOptions {
                    n_boot: *n_boot,
                    seed: *seed,
                    ..Default::default()
                };
                let fit = fit_collapse(&ds, None, &opts, self.threads)?;
                let json_path = self.out.path("fss.json", self.explicit);
                self.out.write_json(json_path, &fit)?;
                let rows = fit
                    .scaled
                    .iter()
                    .map(|p| vec![p.n.to_string(), f(p.x), f(p.y), f(p.sigma)])
                    .collect();
                self.csv("scaled.csv", false, &["N", "x", "y", "sigma"], rows)?;
                Ok(json!({
                    "gammaC": fit.gamma_c,
                    "nu": fit.nu,
                    "gammaCErr": fit.gamma_c_err,
                    "nuErr": fit.nu_err,
                    "errorsValid": fit.gamma_c_err.is_some() && *n_boot >= 100,
                    "quality": fit.quality,
                    "rows": ds.rows().len(),
                }))
            }
        }
    }
}

/// Columns `N, gamma, S, S_err`; an optional `stationary` column drops rows marked `false`.
pub fn read_scaling_csv(path: &Path) -> Result<ScalingDataset, CliError> {
    let bad = |msg: String| CliError::Config(format!("data: {}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(cn), Some(cg), Some(cs), Some(ce)) = (col("N"), col("gamma"), col("S"), col("S_err")) else {
        return Err(bad("expected columns N, gamma, S, S_err".into()));
    };
    let stationary = col("stationary");
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if stationary.and_then(|k| rec.get(k)) == Some("false") {
            continue;
        }
        let num = |k: usize| -> Result<f64, CliError> {
            rec.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: column {} is not a number", line + 1, headers.get(k).unwrap_or("?"))))
        };
        let n = rec
            .get(cn)
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| bad(format!("row {}: N is not a positive integer", line + 1)))?;
        rows.push(ScalingRow {
            n,
            gamma: num(cg)?,
            s: num(cs)?,
            s_err: num(ce)?,
        });
    }
    ScalingDataset::new(rows).map_err(|e| bad(e.to_string()))
}
