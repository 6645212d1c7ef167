//! Projective single-site `σ^z` measurements inside the constrained space.
//!
//! Because the basis already excludes neighbouring excitations, projecting a
//! site onto `•` automatically leaves its neighbours in `∘`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::evolution::StateVector;

/// Outcomes with probability at or below this are treated as impossible.
pub const IMPOSSIBLE_THRESHOLD: f64 = 1e-12;

/// Local `σ^z` eigenvalue: `Up` is the excitation `•` (bit set), `Down` is `∘`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Up,
    Down,
}

impl Outcome {
    #[inline]
    pub fn bit(self) -> bool {
        self == Outcome::Up
    }

    #[inline]
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Outcome::Up
        } else {
            Outcome::Down
        }
    }

    #[inline]
    pub fn flipped(self) -> Self {
        Self::from_bit(!self.bit())
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Up => "up",
            Outcome::Down => "down",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    Born,
    Postselect(Outcome),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub time: f64,
    pub site: usize,
    pub mode: MeasurementMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub site: usize,
    pub result: Outcome,
    /// Born probability of `result` in the pre-measurement state.
    pub probability: f64,
    pub post_state: StateVector,
}

fn check_site(psi: &StateVector, site: usize) -> Result<()> {
    let n = psi.basis().n_sites();
    if site >= n {
        return arg(format!("site {site} out of range for N = {n}"));
    }
    Ok(())
}

/// Probability of finding `•` at `site`.
pub fn born_probability(psi: &StateVector, site: usize) -> Result<f64> {
    check_site(psi, site)?;
    Ok(psi.excitation_probability(site).clamp(0.0, 1.0))
}

fn outcome_probability(p_up: f64, outcome: Outcome) -> f64 {
    match outcome {
        Outcome::Up => p_up,
        Outcome::Down => (1.0 - p_up).max(0.0),
    }
}

/// Project `psi` onto `outcome` at `site` and renormalize.
pub fn project(psi: &StateVector, site: usize, outcome: Outcome) -> Result<MeasurementOutcome> {
    let p_up = born_probability(psi, site)?;
    project_with(psi, site, outcome, outcome_probability(p_up, outcome))
}

fn project_with(psi: &StateVector, site: usize, outcome: Outcome, probability: f64) -> Result<MeasurementOutcome> {
    if probability <= IMPOSSIBLE_THRESHOLD {
        return Err(Error::ImpossibleOutcome {
            site,
            outcome,
            probability,
        });
    }
    let mut post = psi.clone();
    let keep = outcome.bit();
    let configs: Vec<bool> = psi.basis().configs().map(|c| c.bit(site)).collect();
    for (a, bit) in post.amplitudes_mut().iter_mut().zip(configs) {
        if bit != keep {
            *a = Default::default();
        }
    }
    post.renormalize();
    Ok(MeasurementOutcome {
        site,
        result: outcome,
        probability,
        post_state: post,
    })
}

/// Born-rule measurement consuming exactly one uniform draw from `rng`.
/// Outcomes at or below [`IMPOSSIBLE_THRESHOLD`] are never selected.
pub fn sample_measurement<R: Rng + ?Sized>(psi: &StateVector, site: usize, rng: &mut R) -> Result<MeasurementOutcome> {
    let p_up = born_probability(psi, site)?;
    let u: f64 = rng.random();
    let outcome = if p_up <= IMPOSSIBLE_THRESHOLD {
        Outcome::Down
    } else if 1.0 - p_up <= IMPOSSIBLE_THRESHOLD {
        Outcome::Up
    } else {
        Outcome::from_bit(u < p_up)
    };
    project_with(psi, site, outcome, outcome_probability(p_up, outcome))
}

/// Independent Poisson processes of rate `gamma` on every site, truncated at
/// `t_max`, merged in time order with ties broken by site. Sites are drawn in
/// ascending order so the schedule depends only on the rng state.
pub fn schedule_random_events<R: Rng + ?Sized>(
    n_sites: usize,
    gamma: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<Vec<MeasurementEvent>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return arg(format!("measurement rate must be finite and non-negative, got {gamma}"));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return arg(format!("tMax must be positive, got {t_max}"));
    }
    let mut events = Vec::new();
    if gamma == 0.0 {
        return Ok(events);
    }
    let wait = Exp::new(gamma).map_err(|e| Error::Argument(e.to_string()))?;
    for site in 0..n_sites {
        let mut t = wait.sample(rng);
        while t < t_max {
            events.push(MeasurementEvent {
                time: t,
                site,
                mode: MeasurementMode::Born,
            });
            t += wait.sample(rng);
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.site.cmp(&b.site)));
    Ok(events)
}
