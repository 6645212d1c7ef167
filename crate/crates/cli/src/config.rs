//! Run parameters: one flat record shared by the JSON config file, the command
//! line and the manifest. Flags override file values key by key.

use std::path::{Path, PathBuf};

use clap::Args;
use pxp_core::basis::Boundary;
use pxp_core::measurement::Outcome;
use pxp_core::protocols::{InitialState, PeriodicMode};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

fn parse_outcome(s: &str) -> Result<Outcome, String> {
    match s.to_ascii_lowercase().as_str() {
        "up" | "1" | "•" => Ok(Outcome::Up),
        "down" | "0" | "∘" => Ok(Outcome::Down),
        _ => Err(format!("unknown outcome '{s}' (expected up or down)")),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(rename_all = "camelCase")]
pub struct Params {
    /// Number of sites.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Boundary condition: obc or pbc.
    #[arg(long = "bc")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    /// Initial state: neel or unif.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    /// Measurement rate per site and unit time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Revival period T.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// Replace T by the first fidelity maximum of the Néel state for this chain.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate_period: Option<bool>,
    /// Zero-based measured sites, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
    /// Periodic monitoring mode: unitary, born or postselect.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<PeriodicMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Spacing of the observable grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Time window `start,end`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_periods: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_period: Option<usize>,
    /// Master seed of the run.
    #[arg(long = "seed")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    /// Chain sizes of a scan, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    /// Measurement rates of a scan, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Zero-based measured site.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
    /// Projection outcome: up or down.
    #[arg(long, value_parser = parse_outcome)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    /// Largest number of measured sites in the rephasing scan.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Largest basis dimension allowed for dense diagonalization.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_limit: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub krylov_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub krylov_dim: Option<usize>,
    /// Overlap factor of the scar shortlist.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_factor: Option<f64>,
    /// Input CSV with columns N, gamma, S, S_err.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Bootstrap replicas.
    #[arg(long = "nboot")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_boot: Option<usize>,
    /// Write the full basis listing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<bool>,
}

impl Params {
    /// `overrides` wins wherever it sets a key.
    pub fn merged(base: &Params, overrides: &Params) -> Params {
        let mut out = serde_json::to_value(base).expect("params serialize");
        if let (Value::Object(out_map), Value::Object(over)) =
            (&mut out, serde_json::to_value(overrides).expect("params serialize"))
        {
            for (k, v) in over {
                out_map.insert(k, v);
            }
        }
        serde_json::from_value(out).expect("merged params deserialize")
    }

    /// Reads a config file: either a bare parameter object or a run manifest,
    /// whose `config` member is used.
    pub fn load(path: &Path) -> Result<Params, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config: cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config: {} is not valid JSON: {e}", path.display())))?;
        let value = match value {
            Value::Object(mut m) if m.contains_key("manifestVersion") => {
                m.remove("config").unwrap_or(Value::Object(Default::default()))
            }
            v => v,
        };
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("config: {e}")))
    }
}

pub(crate) fn invalid<T>(field: &str, constraint: impl std::fmt::Display) -> Result<T, CliError> {
    Err(CliError::Config(format!("{field}: {constraint}")))
}
