use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pfo_core::bounds::{sandwich_check_with, sandwich_slack, sup_error_with, OrderReport};
use pfo_core::fit::{
    add_noise, fit_rates_with, monte_carlo, synthesize, uniform_times, FitOptions, FitResult,
    MonteCarloConfig, MonteCarloSummary, Rates,
};
use pfo_core::integrate::{horizon, HORIZON_EPS};
use pfo_core::timescale::{analyze, TimescaleReport};
use pfo_core::{DerivedConstants, RateParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ParamsConfig, ScenarioConfig, SCHEMA_VERSION};
use crate::{json, CliError, TRAJECTORY_HEADER};

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    params: ParamsConfig,
    constants: DerivedConstants,
    #[serde(flatten)]
    body: T,
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn write_report<T: Serialize>(
    out: &Path,
    name: &str,
    command: &str,
    cfg: &ScenarioConfig,
    p: &RateParams,
    body: T,
) -> Result<PathBuf, CliError> {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command,
        params: cfg.params,
        constants: p.constants(),
        body,
    };
    let text = json::to_string(&report).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(out.join(name), &text)
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct SimulateBody {
    horizon: f64,
    n_grid: usize,
    slack: f64,
    max_violation: f64,
    passed: bool,
    max_envelope_width_s: f64,
    max_envelope_width_c: f64,
}

/// Writes `trajectory.csv` (and `observations.csv` when configured) plus a
/// `simulate.json` summary.
pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = cfg.params.rate_params()?;
    let icfg = cfg.integrator.build()?;
    let rep = sandwich_check_with(&p, cfg.simulate.n_grid, &icfg)?;

    let mut csv = String::with_capacity(rep.len() * 200);
    csv.push_str(TRAJECTORY_HEADER);
    csv.push('\n');
    for i in 0..rep.len() {
        let t = rep.grid[i];
        let row = [
            t,
            t / rep.horizon,
            rep.s_num[i],
            rep.c_num[i],
            rep.s_star[i],
            rep.c_star[i],
            rep.s_low[i],
            rep.c_low[i],
            rep.s_up[i],
            rep.c_up[i],
        ];
        let line: Vec<String> = row.iter().map(|v| num(*v)).collect();
        let _ = writeln!(csv, "{}", line.join(","));
    }
    let mut files = vec![write_file(out.join("trajectory.csv"), &csv)?];

    if let Some(obs) = cfg.simulate.observations {
        let t_end = match obs.t_end {
            Some(t) => t,
            None => horizon(&p, HORIZON_EPS)?,
        };
        let mut data = synthesize(&p, &uniform_times(t_end, obs.n_points), obs.with_c)?;
        if obs.noise_rel > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            add_noise(&mut data, obs.noise_rel * p.s0(), &mut rng)?;
        }
        let mut buf = Vec::new();
        pfo_core::data::write_observations(&mut buf, &data)?;
        let text = String::from_utf8(buf).expect("csv output is UTF-8");
        files.push(write_file(out.join("observations.csv"), &text)?);
    }

    let width = |w: Vec<f64>| w.into_iter().fold(0.0, f64::max);
    let body = SimulateBody {
        horizon: rep.horizon,
        n_grid: rep.len(),
        slack: rep.slack,
        max_violation: rep.max_violation,
        passed: rep.passed,
        max_envelope_width_s: width(rep.envelope_width_s()),
        max_envelope_width_c: width(rep.envelope_width_c()),
    };
    files.push(write_report(
        out,
        "simulate.json",
        "simulate",
        cfg,
        &p,
        body,
    )?);
    if !rep.passed {
        return Err(CliError::Numerical(format!(
            "bounds violated by {:e} (slack {:e})",
            rep.max_violation, rep.slack
        )));
    }
    Ok(files)
}

#[derive(Serialize)]
struct BoundsBody {
    horizon: f64,
    n_grid: usize,
    slack: f64,
    max_violation: f64,
    passed: bool,
    /// Sup-norm distance between the numerical and linearized solutions;
    /// present when `s0 <= K/2`.
    sup_error_s: Option<f64>,
    sup_error_c: Option<f64>,
}

pub fn cmd_bounds(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = cfg.params.rate_params()?;
    let icfg = cfg.integrator.build()?;
    let rep = sandwich_check_with(&p, cfg.simulate.n_grid, &icfg)?;
    let (es, ec) = if p.s0() <= 0.5 * p.constants().k {
        let (s, c) = sup_error_with(&p, &icfg)?;
        (Some(s), Some(c))
    } else {
        (None, None)
    };
    let body = BoundsBody {
        horizon: rep.horizon,
        n_grid: rep.len(),
        slack: sandwich_slack(&p, &icfg),
        max_violation: rep.max_violation,
        passed: rep.passed,
        sup_error_s: es,
        sup_error_c: ec,
    };
    let path = write_report(out, "bounds.json", "bounds", cfg, &p, body)?;
    if !rep.passed {
        return Err(CliError::Numerical(format!(
            "bounds violated by {:e} (slack {:e})",
            rep.max_violation, rep.slack
        )));
    }
    Ok(vec![path])
}

#[derive(Serialize)]
struct OrderBody {
    s0_max: f64,
    #[serde(flatten)]
    report: OrderReport,
    error_constant_s: f64,
    error_constant_c: f64,
}

pub fn cmd_order(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = cfg.params.rate_params()?;
    let icfg = cfg.integrator.build()?;
    let s0_max = cfg.order.s0_max.unwrap_or(0.25 * p.constants().k);
    let report = pfo_core::bounds::convergence_order_with(&p, s0_max, cfg.order.n_points, &icfg)?;
    let (cs, cc) = report.error_constants();
    let body = OrderBody {
        s0_max,
        report,
        error_constant_s: cs,
        error_constant_c: cc,
    };
    Ok(vec![write_report(
        out,
        "order.json",
        "order",
        cfg,
        &p,
        body,
    )?])
}

pub fn cmd_timescales(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = cfg.params.rate_params()?;
    let report: TimescaleReport = analyze(&p, cfg.timescales)?;
    Ok(vec![write_report(
        out,
        "timescales.json",
        "timescales",
        cfg,
        &p,
        report,
    )?])
}

#[derive(Serialize)]
struct FitBody<'a> {
    data: Option<&'a Path>,
    n_observations: usize,
    guess: Rates,
    #[serde(flatten)]
    result: FitResult,
}

#[derive(Serialize)]
struct MonteCarloBody {
    guess: Rates,
    config: MonteCarloConfig,
    #[serde(flatten)]
    summary: MonteCarloSummary,
}

/// Fits the observation table named in the configuration, or runs the
/// Monte-Carlo study when no table is given and one is configured.
pub fn cmd_fit(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = cfg.params.rate_params()?;
    let guess = cfg.fit.guess.map_or_else(
        || cfg.params.rates(),
        |g| Rates::new(g.k1, g.k_minus1, g.k2),
    );
    match (&cfg.fit.data, cfg.fit.monte_carlo) {
        (Some(path), _) => {
            let data = pfo_core::data::read_observations(path)?;
            let opts = FitOptions {
                max_iterations: cfg.fit.max_iterations,
                ..FitOptions::default()
            };
            let result = fit_rates_with(&data, p.e0(), p.s0(), guess, &opts)?;
            let (converged, iterations) = (result.converged, result.iterations);
            let body = FitBody {
                data: Some(path),
                n_observations: data.len(),
                guess,
                result,
            };
            let report = write_report(out, "fit.json", "fit", cfg, &p, body)?;
            if !converged {
                return Err(CliError::NonConvergence { iterations, report });
            }
            Ok(vec![report])
        }
        (None, Some(mc)) => {
            let t_end = match mc.t_end {
                Some(t) => t,
                None => horizon(&p, HORIZON_EPS)?,
            };
            let mc_cfg = MonteCarloConfig {
                trials: mc.trials,
                noise_rel: mc.noise_rel,
                n_points: mc.n_points,
                t_end,
                seed: cfg.seed,
            };
            let summary = monte_carlo(&p, guess, &mc_cfg)?;
            let body = MonteCarloBody {
                guess,
                config: mc_cfg,
                summary,
            };
            Ok(vec![write_report(
                out,
                "fit_monte_carlo.json",
                "fit",
                cfg,
                &p,
                body,
            )?])
        }
        (None, None) => Err(CliError::Config(
            "fit needs an observation table (--data or fit.data) or a Monte-Carlo study (--monte-carlo)"
                .into(),
        )),
    }
}
