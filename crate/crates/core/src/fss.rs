//! Finite-size-scaling collapse of steady-state entropies.
//!
//! The ansatz `|S_N(γ) - S_N(γ_c)| = f((γ - γ_c) N^{1/ν})` is fitted by
//! scoring how well all sizes fall onto one curve. The curve is a
//! Nadaraya-Watson estimate with a Gaussian kernel and inverse-variance
//! weights; the score is the weighted mean squared leave-one-out residual,
//! minimised over a fixed ladder of bandwidths proportional to the spread of
//! the scaled abscissae. Because the bandwidths follow the data, the score is
//! invariant under rescaling of `x`, and rescaling all `S` by `c` (at fixed
//! `σ_S`) scales it by `c²`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::protocols::{par_map_indexed, trajectory_rng};

/// Bandwidths tried by the leave-one-out selection, in units of the standard
/// deviation of the scaled abscissae.
pub const BANDWIDTH_LADDER: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

/// Smallest exponent the optimizer may visit.
pub const MIN_NU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub gamma: f64,
    pub s: f64,
    pub s_err: f64,
}

/// Rows sorted by `(N, γ, S, σ_S)`; input order never matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDataset {
    rows: Vec<ScalingRow>,
}

/// The curve of one size with duplicate rates merged: `(γ, S, σ_S)`, ascending `γ`.
type Curve = Vec<(f64, f64, f64)>;

impl ScalingDataset {
    /// Requires at least 3 sizes, 4 distinct rates per size and finite `σ_S > 0`.
    pub fn new(rows: Vec<ScalingRow>) -> Result<Self> {
        let ds = Self::unvalidated(rows)?;
        let sizes = ds.sizes();
        if sizes.len() < 3 {
            return arg(format!("dataset needs at least 3 sizes, got {}", sizes.len()));
        }
        for n in sizes {
            let distinct = ds.curve(n).len();
            if distinct < 4 {
                return arg(format!("size N = {n} has {distinct} distinct rates, need at least 4"));
            }
        }
        Ok(ds)
    }

    /// Checks only per-row validity; used for degenerate diagnostics and bootstrap replicas.
    pub fn unvalidated(mut rows: Vec<ScalingRow>) -> Result<Self> {
        if let Some(r) = rows
            .iter()
            .find(|r| !(r.s_err > 0.0 && r.s_err.is_finite() && r.s.is_finite() && r.gamma.is_finite()))
        {
            return arg(format!("row {r:?}: S and gamma must be finite and S_err > 0"));
        }
        rows.sort_by(|a, b| {
            a.n.cmp(&b.n)
                .then(a.gamma.total_cmp(&b.gamma))
                .then(a.s.total_cmp(&b.s))
                .then(a.s_err.total_cmp(&b.s_err))
        });
        Ok(ScalingDataset { rows })
    }

    pub fn rows(&self) -> &[ScalingRow] {
        &self.rows
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        v.dedup();
        v
    }

    /// Fewer than two sizes carry no cross-size constraint on `ν`.
    pub fn is_degenerate(&self) -> bool {
        self.sizes().len() < 2
    }

    /// `(min γ, max γ)` over all rows.
    pub fn gamma_range(&self) -> (f64, f64) {
        self.rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.gamma), hi.max(r.gamma)))
    }

    /// The rate interval sampled by every size.
    pub fn common_range(&self) -> (f64, f64) {
        self.sizes().into_iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), n| {
            let c = self.curve(n);
            (lo.max(c[0].0), hi.min(c[c.len() - 1].0))
        })
    }

    fn curve(&self, n: usize) -> Curve {
        let mut out: Curve = Vec::new();
        let mut count = 0usize;
        for r in self.rows.iter().filter(|r| r.n == n) {
            match out.last_mut() {
                Some(last) if last.0 == r.gamma => {
                    count += 1;
                    last.1 += r.s;
                    last.2 += r.s_err;
                }
                _ => {
                    finish(&mut out, count);
                    out.push((r.gamma, r.s, r.s_err));
                    count = 1;
                }
            }
        }
        finish(&mut out, count);
        out
    }
}

fn finish(out: &mut Curve, count: usize) {
    if let Some(last) = out.last_mut() {
        if count > 1 {
            last.1 /= count as f64;
            last.2 /= count as f64;
        }
    }
}

fn interpolate(curve: &Curve, n: usize, gamma_c: f64) -> Result<(f64, f64)> {
    let (lo, hi) = (curve[0].0, curve[curve.len() - 1].0);
    if !(gamma_c >= lo && gamma_c <= hi) {
        return Err(Error::Extrapolation { n, gamma_c, lo, hi });
    }
    let k = curve.partition_point(|p| p.0 < gamma_c);
    if curve[k].0 == gamma_c {
        return Ok((curve[k].1, curve[k].2));
    }
    let (a, b) = (curve[k - 1], curve[k]);
    let w = (gamma_c - a.0) / (b.0 - a.0);
    let s = (1.0 - w) * a.1 + w * b.1;
    let err = (((1.0 - w) * a.2).powi(2) + (w * b.2).powi(2)).sqrt();
    Ok((s, err))
}

/// `S_N(γ_c)` by linear interpolation between the bracketing rates.
pub fn critical_entropy(ds: &ScalingDataset, n: usize, gamma_c: f64) -> Result<f64> {
    let curve = ds.curve(n);
    if curve.is_empty() {
        return arg(format!("no rows for N = {n}"));
    }
    Ok(interpolate(&curve, n, gamma_c)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledPoint {
    pub n: usize,
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// `((γ - γ_c) N^{1/ν}, |S - S_N(γ_c)|)` for every row, the uncertainty of `y`
/// combining `σ_S` with the interpolated uncertainty of `S_N(γ_c)`.
pub fn scaled_points(ds: &ScalingDataset, gamma_c: f64, nu: f64) -> Result<Vec<ScaledPoint>> {
    if !(nu > 0.0 && nu.is_finite() && gamma_c.is_finite()) {
        return arg(format!("invalid scaling parameters gamma_c = {gamma_c}, nu = {nu}"));
    }
    let mut pts = Vec::with_capacity(ds.rows.len());
    for n in ds.sizes() {
        let curve = ds.curve(n);
        let (s_c, err_c) = interpolate(&curve, n, gamma_c)?;
        let scale = (n as f64).powf(1.0 / nu);
        pts.extend(curve.iter().map(|&(g, s, e)| ScaledPoint {
            n,
            x: (g - gamma_c) * scale,
            y: (s - s_c).abs(),
            sigma: (e * e + err_c * err_c).sqrt().max(f64::MIN_POSITIVE),
        }));
    }
    Ok(pts)
}

/// Collapse quality: weighted mean squared leave-one-out residual of the
/// kernel fit, minimised over [`BANDWIDTH_LADDER`].
pub fn collapse_objective(ds: &ScalingDataset, gamma_c: f64, nu: f64) -> Result<f64> {
    let pts = scaled_points(ds, gamma_c, nu)?;
    let m = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.x).sum::<f64>() / m;
    let spread = (pts.iter().map(|p| (p.x - mean_x).powi(2)).sum::<f64>() / m).sqrt();
    if !(spread > 0.0) || pts.len() < 3 {
        return Err(Error::Objective("all scaled abscissae coincide".into()));
    }
    let w: Vec<f64> = pts.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect();
    let w_total: f64 = w.iter().sum();
    let mut best = f64::INFINITY;
    for factor in BANDWIDTH_LADDER {
        let inv_h = 1.0 / (factor * spread);
        let mut total = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for (j, q) in pts.iter().enumerate() {
                if i == j {
                    continue;
                }
                let u = (p.x - q.x) * inv_h;
                let k = (-0.5 * u * u).exp() * w[j];
                num += k * q.y;
                den += k;
            }
            // beyond the reach of every kernel the prediction falls back to zero
            let pred = if den > 0.0 { num / den } else { 0.0 };
            total += w[i] * (p.y - pred).powi(2);
        }
        best = best.min(total / w_total);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub point: (f64, f64),
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Derivative-free simplex minimisation of `f` over two parameters.
/// Convergence requires the simplex to shrink below `x_tol` per coordinate
/// (relative to `scale`) and the value spread below `f_tol`.
pub fn nelder_mead<F: Fn(f64, f64) -> f64>(
    f: F,
    start: (f64, f64),
    scale: (f64, f64),
    x_tol: f64,
    f_tol: f64,
    max_iter: usize,
) -> NelderMeadResult {
    let eval = |p: [f64; 2]| {
        let v = f(p[0], p[1]);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex = [
        [start.0, start.1],
        [start.0 + scale.0, start.1],
        [start.0, start.1 + scale.1],
    ];
    let mut values = simplex.map(eval);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.map(|k| simplex[k]);
        values = order.map(|k| values[k]);
        trace.push(values[0]);
        let size = (1..3).fold(0.0f64, |acc, k| {
            acc.max(((simplex[k][0] - simplex[0][0]) / scale.0).abs())
                .max(((simplex[k][1] - simplex[0][1]) / scale.1).abs())
        });
        if values[0].is_finite() && size < x_tol && (values[2] - values[0]).abs() <= f_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid = [(simplex[0][0] + simplex[1][0]) / 2.0, (simplex[0][1] + simplex[1][1]) / 2.0];
        let along = |t: f64| [centroid[0] + t * (simplex[2][0] - centroid[0]), centroid[1] + t * (simplex[2][1] - centroid[1])];
        let reflected = along(-1.0);
        let fr = eval(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = eval(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let (contracted, fc) = if fr < values[2] {
                let c = along(-0.5);
                (c, eval(c))
            } else {
                let c = along(0.5);
                (c, eval(c))
            };
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    values[k] = eval(simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NelderMeadResult {
        point: (simplex[best][0], simplex[best][1]),
        value: values[best],
        iterations,
        converged,
        trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct FitOptions {
    pub n_boot: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_boot: 100,
            seed: 0,
            max_iter: 2000,
            x_tol: 1e-6,
            f_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub gamma_c: f64,
    pub nu: f64,
    /// Bootstrap standard deviations; `None` when fewer than two replicas
    /// make the spread meaningless.
    pub gamma_c_err: Option<f64>,
    pub nu_err: Option<f64>,
    pub n_boot: usize,
    /// Replicas whose refit failed and were left out of the error estimate.
    pub failed_replicas: usize,
    pub quality: f64,
    pub scaled: Vec<ScaledPoint>,
}

/// Objective with the invalid domain mapped to `+∞`.
fn penalized(ds: &ScalingDataset, gamma_c: f64, nu: f64) -> f64 {
    if !(nu >= MIN_NU) {
        return f64::INFINITY;
    }
    collapse_objective(ds, gamma_c, nu).unwrap_or(f64::INFINITY)
}

/// Simplex starts: `γ_c` at 7 points over the inner 80% of the common rate
/// range, crossed with four exponents; `init`, if given, goes first.
pub fn start_grid(ds: &ScalingDataset, init: Option<(f64, f64)>) -> Vec<(f64, f64)> {
    let (lo, hi) = ds.common_range();
    let mut starts: Vec<(f64, f64)> = init.into_iter().collect();
    for k in 0..7 {
        let g = lo + (0.1 + 0.8 * k as f64 / 6.0) * (hi - lo);
        for nu in [0.4, 0.7, 1.0, 1.5] {
            starts.push((g, nu));
        }
    }
    starts
}

fn minimize(ds: &ScalingDataset, starts: &[(f64, f64)], opts: &FitOptions) -> Result<NelderMeadResult> {
    let (lo, hi) = ds.common_range();
    if !(hi > lo) {
        return Err(Error::Objective("sizes share no common rate interval".into()));
    }
    let step = (0.1 * (hi - lo), 0.1);
    let mut best: Option<NelderMeadResult> = None;
    for &s in starts {
        let r = nelder_mead(|g, nu| penalized(ds, g, nu), s, step, opts.x_tol, opts.f_tol, opts.max_iter);
        let better = match &best {
            None => true,
            Some(b) => r.value < b.value,
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::Argument("no optimizer starts".into()))?;
    if !best.converged || !best.value.is_finite() {
        return Err(Error::Optimizer {
            iterations: best.iterations,
            best: best.point,
            objective: best.value,
            trace: best.trace,
        });
    }
    Ok(best)
}

/// One bootstrap replica: rows resampled with replacement within each size,
/// `S` jittered by `σ_S`.
pub fn bootstrap_replica<R: Rng + ?Sized>(ds: &ScalingDataset, rng: &mut R) -> Result<ScalingDataset> {
    let mut rows = Vec::with_capacity(ds.rows.len());
    for n in ds.sizes() {
        let own: Vec<&ScalingRow> = ds.rows.iter().filter(|r| r.n == n).collect();
        for _ in 0..own.len() {
            let r = own[rng.random_range(0..own.len())];
            let noise = Normal::new(0.0, r.s_err).map_err(|e| Error::Argument(e.to_string()))?;
            rows.push(ScalingRow {
                s: r.s + noise.sample(rng),
                ..*r
            });
        }
    }
    ScalingDataset::unvalidated(rows)
}

/// Minimise the collapse objective by multi-start simplex search and
/// estimate uncertainties by bootstrap.
pub fn fit_collapse(
    ds: &ScalingDataset,
    init: Option<(f64, f64)>,
    opts: &FitOptions,
    threads: Option<usize>,
) -> Result<CollapseFit> {
    let best = minimize(ds, &start_grid(ds, init), opts)?;
    let (gamma_c, nu) = best.point;

    let replicas = par_map_indexed(opts.n_boot, threads, |b| {
        let mut rng = trajectory_rng(opts.seed, b as u64);
        let rep = bootstrap_replica(ds, &mut rng)?;
        Ok(minimize(&rep, &[(gamma_c, nu)], opts).ok().map(|r| r.point))
    })?;
    let ok: Vec<(f64, f64)> = replicas.iter().flatten().copied().collect();
    let spread = |xs: Vec<f64>| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    };
    let (gamma_c_err, nu_err) = if ok.len() >= 2 {
        (
            Some(spread(ok.iter().map(|p| p.0).collect())),
            Some(spread(ok.iter().map(|p| p.1).collect())),
        )
    } else {
        (None, None)
    };
    Ok(CollapseFit {
        gamma_c,
        nu,
        gamma_c_err,
        nu_err,
        n_boot: opts.n_boot,
        failed_replicas: replicas.len() - ok.len(),
        quality: best.value,
        scaled: scaled_points(ds, gamma_c, nu)?,
    })
}

/// Rows of the synthetic family `S = a·N - tanh((γ - γ_c) N^{1/ν})` plus
/// i.i.d. Gaussian noise of standard deviation `noise`, which is also the
/// reported `σ_S` (a floor of `1e-3` applies in the noiseless case).
pub fn synthetic_dataset<R: Rng + ?Sized>(
    sizes: &[usize],
    gammas: &[f64],
    gamma_c: f64,
    nu: f64,
    volume: f64,
    noise: f64,
    rng: &mut R,
) -> Result<ScalingDataset> {
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rows = Vec::new();
    for &n in sizes {
        let scale = (n as f64).powf(1.0 / nu);
        for &g in gammas {
            let clean = volume * n as f64 - ((g - gamma_c) * scale).tanh();
            let s = if noise > 0.0 { clean + normal.sample(rng) } else { clean };
            rows.push(ScalingRow {
                n,
                gamma: g,
                s,
                s_err: noise.max(1e-3),
            });
        }
    }
    ScalingDataset::new(rows)
}
