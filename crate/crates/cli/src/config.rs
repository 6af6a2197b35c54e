//! Scenario configuration: one JSON document, every section optional.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "params": { "k1": 1, "k_minus1": 1, "k2": 1, "e0": 1, "s0": 0.1 },
//!   "simulate": { "n_grid": 201 },
//!   "order": { "n_points": 6 },
//!   "timescales": { "eta_sep": 0.1, "eta_marginal": 0.5 },
//!   "fit": { "data": "obs.csv" },
//!   "seed": 0
//! }
//! ```

use std::path::PathBuf;

use pfo_core::fit::{FitOptions, Rates};
use pfo_core::integrate::IntegratorConfig;
use pfo_core::timescale::Thresholds;
use pfo_core::RateParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub order: OrderSection,
    #[serde(default)]
    pub timescales: Thresholds,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            params: ParamsConfig::default(),
            integrator: IntegratorSection::default(),
            simulate: SimulateSection::default(),
            order: OrderSection::default(),
            timescales: Thresholds::default(),
            fit: FitSection::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub k1: f64,
    pub k_minus1: f64,
    pub k2: f64,
    pub e0: f64,
    pub s0: f64,
    #[serde(default)]
    pub c0: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            k1: 1.0,
            k_minus1: 1.0,
            k2: 1.0,
            e0: 1.0,
            s0: 0.1,
            c0: 0.0,
        }
    }
}

impl ParamsConfig {
    pub fn rate_params(&self) -> Result<RateParams, CliError> {
        let p = RateParams::new(self.k1, self.k_minus1, self.k2, self.e0, self.s0)?;
        Ok(if self.c0 != 0.0 {
            p.with_c0(self.c0)?
        } else {
            p
        })
    }

    pub fn rates(&self) -> Rates {
        Rates::new(self.k1, self.k_minus1, self.k2)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_steps: Option<usize>,
}

impl IntegratorSection {
    pub fn build(&self) -> Result<IntegratorConfig, CliError> {
        let d = IntegratorConfig::default();
        let cfg = IntegratorConfig {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            dense_output: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_grid: usize,
    /// Also write `observations.csv` sampled from the closed form.
    pub observations: Option<ObservationSection>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            n_grid: 201,
            observations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSection {
    pub n_points: usize,
    /// Gaussian noise on `s`, as a fraction of `s0`.
    pub noise_rel: f64,
    /// Defaults to the 1e-6 decay horizon.
    pub t_end: Option<f64>,
    pub with_c: bool,
}

impl Default for ObservationSection {
    fn default() -> Self {
        ObservationSection {
            n_points: 50,
            noise_rel: 0.0,
            t_end: None,
            with_c: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderSection {
    /// Largest `s0` of the sequence; defaults to `K/4`.
    pub s0_max: Option<f64>,
    pub n_points: usize,
}

impl Default for OrderSection {
    fn default() -> Self {
        OrderSection {
            s0_max: None,
            n_points: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub data: Option<PathBuf>,
    /// Starting rates; defaults to the rates in `params`.
    pub guess: Option<RatesConfig>,
    pub max_iterations: usize,
    pub monte_carlo: Option<MonteCarloSection>,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            data: None,
            guess: None,
            max_iterations: FitOptions::default().max_iterations,
            monte_carlo: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub k1: f64,
    pub k_minus1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub trials: usize,
    pub noise_rel: f64,
    pub n_points: usize,
    pub t_end: Option<f64>,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        MonteCarloSection {
            trials: 20,
            noise_rel: 0.01,
            n_points: 50,
            t_end: None,
        }
    }
}

/// Parses and version-checks a configuration document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
