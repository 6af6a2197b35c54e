//! Batch front end for `pfo-core`: each subcommand reads a scenario
//! configuration, runs one analysis and writes CSV/JSON files into the
//! output directory.

pub mod commands;
pub mod config;
pub mod json;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_bounds, cmd_fit, cmd_order, cmd_simulate, cmd_timescales};
pub use config::{parse_config, ScenarioConfig};

pub const TRAJECTORY_HEADER: &str = "t,t_over_T,s_num,c_num,s_star,c_star,s_low,c_low,s_up,c_up";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] pfo_core::Error),
    #[error("{0}")]
    Numerical(String),
    #[error("fit did not converge after {iterations} iterations (report written to {})", report.display())]
    NonConvergence { iterations: usize, report: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 config/input error, 3 numerical failure, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(pfo_core::Error::NonConvergence { .. }) => 4,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NonConvergence { .. } => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pfo",
    version,
    about = "Pseudo-first-order Michaelis-Menten analyses"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// Scenario configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub k1: Option<f64>,
    #[arg(long = "k-minus1", global = true)]
    pub k_minus1: Option<f64>,
    #[arg(long, global = true)]
    pub k2: Option<f64>,
    #[arg(long, global = true)]
    pub e0: Option<f64>,
    #[arg(long, global = true)]
    pub s0: Option<f64>,
    #[arg(long, global = true)]
    pub c0: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Numerical, closed-form and bounding time courses (trajectory.csv).
    Simulate {
        #[arg(long)]
        n_grid: Option<usize>,
        /// Also write N closed-form observations to observations.csv.
        #[arg(long, value_name = "N")]
        observations: Option<usize>,
        /// Noise on the observations, as a fraction of s0.
        #[arg(long)]
        noise_rel: Option<f64>,
        /// Include the complex concentration in observations.csv.
        #[arg(long)]
        with_c: bool,
    },
    /// Sandwich check and sup-norm error at the configured s0 (bounds.json).
    Bounds {
        #[arg(long)]
        n_grid: Option<usize>,
    },
    /// Empirical order of the linearization error in s0 (order.json).
    Order {
        #[arg(long)]
        s0_max: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Eigenvalues, separation index and verdict (timescales.json).
    Timescales {
        #[arg(long)]
        eta_sep: Option<f64>,
        #[arg(long)]
        eta_marginal: Option<f64>,
    },
    /// Rate constants from an observation table (fit.json), or a
    /// Monte-Carlo study on synthetic data (fit_monte_carlo.json).
    Fit {
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        #[arg(long)]
        guess_k1: Option<f64>,
        #[arg(long = "guess-k-minus1")]
        guess_k_minus1: Option<f64>,
        #[arg(long)]
        guess_k2: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        monte_carlo: bool,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        noise_rel: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
    },
}

/// Loads the configuration and applies flag overrides (flags win).
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => config::load_config(path)?,
        None => ScenarioConfig::default(),
    };
    let p = &mut cfg.params;
    set(&mut p.k1, global.k1);
    set(&mut p.k_minus1, global.k_minus1);
    set(&mut p.k2, global.k2);
    set(&mut p.e0, global.e0);
    set(&mut p.s0, global.s0);
    set(&mut p.c0, global.c0);
    set(&mut cfg.seed, global.seed);

    match command {
        Command::Simulate {
            n_grid,
            observations,
            noise_rel,
            with_c,
        } => {
            set(&mut cfg.simulate.n_grid, *n_grid);
            if observations.is_some() || noise_rel.is_some() || *with_c {
                let obs = cfg
                    .simulate
                    .observations
                    .get_or_insert_with(Default::default);
                set(&mut obs.n_points, *observations);
                set(&mut obs.noise_rel, *noise_rel);
                obs.with_c |= *with_c;
            }
        }
        Command::Bounds { n_grid } => set(&mut cfg.simulate.n_grid, *n_grid),
        Command::Order { s0_max, n_points } => {
            if s0_max.is_some() {
                cfg.order.s0_max = *s0_max;
            }
            set(&mut cfg.order.n_points, *n_points);
        }
        Command::Timescales {
            eta_sep,
            eta_marginal,
        } => {
            set(&mut cfg.timescales.eta_sep, *eta_sep);
            set(&mut cfg.timescales.eta_marginal, *eta_marginal);
        }
        Command::Fit {
            data,
            guess_k1,
            guess_k_minus1,
            guess_k2,
            max_iterations,
            monte_carlo,
            trials,
            noise_rel,
            n_points,
        } => {
            let f = &mut cfg.fit;
            if data.is_some() {
                f.data = data.clone();
            }
            if guess_k1.is_some() || guess_k_minus1.is_some() || guess_k2.is_some() {
                let base = cfg.params;
                let g = f.guess.get_or_insert(config::RatesConfig {
                    k1: base.k1,
                    k_minus1: base.k_minus1,
                    k2: base.k2,
                });
                set(&mut g.k1, *guess_k1);
                set(&mut g.k_minus1, *guess_k_minus1);
                set(&mut g.k2, *guess_k2);
            }
            set(&mut f.max_iterations, *max_iterations);
            if *monte_carlo || trials.is_some() || noise_rel.is_some() || n_points.is_some() {
                let mc = f.monte_carlo.get_or_insert_with(Default::default);
                set(&mut mc.trials, *trials);
                set(&mut mc.noise_rel, *noise_rel);
                set(&mut mc.n_points, *n_points);
            }
        }
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Runs one invocation and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = resolve_config(&cli.global, &cli.command)?;
    let out = &cli.global.out;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    match cli.command {
        Command::Simulate { .. } => cmd_simulate(&cfg, out),
        Command::Bounds { .. } => cmd_bounds(&cfg, out),
        Command::Order { .. } => cmd_order(&cfg, out),
        Command::Timescales { .. } => cmd_timescales(&cfg, out),
        Command::Fit { .. } => cmd_fit(&cfg, out),
    }
}
