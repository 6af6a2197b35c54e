//! Checks of the comparison estimates: the nonlinear solution and the
//! pseudo-first-order solution both lie between the lower (`G`) and upper
//! (`H`) linear flows, and the approximation error is `O(s0²)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{comparison_horizon, integrate_mm, IntegratorConfig};
use crate::linear::{lower_solution, mm_linear_solution, upper_solution};
use crate::model::RateParams;

/// Uniform points added to the accepted-step grid for sup-norm errors.
pub const SUP_UNIFORM_POINTS: usize = 512;

/// Minimum number of successful `s0` points for a slope fit.
pub const MIN_ORDER_POINTS: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub s0: f64,
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub s_low: Vec<f64>,
    pub s_star: Vec<f64>,
    pub s_up: Vec<f64>,
    pub c_low: Vec<f64>,
    pub c_star: Vec<f64>,
    pub c_up: Vec<f64>,
    pub s_num: Vec<f64>,
    pub c_num: Vec<f64>,
    /// Largest `lower - upper` over all eight inequalities; negative when
    /// every inequality holds strictly.
    pub max_violation: f64,
    pub slack: f64,
    pub passed: bool,
}

impl SandwichReport {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `(s_up - s_low)/s0` per grid point.
    pub fn envelope_width_s(&self) -> Vec<f64> {
        self.s_up
            .iter()
            .zip(&self.s_low)
            .map(|(u, l)| (u - l) / self.s0)
            .collect()
    }

    pub fn envelope_width_c(&self) -> Vec<f64> {
        self.c_up
            .iter()
            .zip(&self.c_low)
            .map(|(u, l)| (u - l) / self.s0)
            .collect()
    }

    /// Worst violation of each of the eight inequalities at row `i`.
    pub fn row_violation(&self, i: usize) -> f64 {
        [
            self.s_num[i] - self.s_up[i],
            self.s_low[i] - self.s_num[i],
            self.c_num[i] - self.c_up[i],
            self.c_low[i] - self.c_num[i],
            self.s_star[i] - self.s_up[i],
            self.s_low[i] - self.s_star[i],
            self.c_star[i] - self.c_up[i],
            self.c_low[i] - self.c_star[i],
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Slack for the inequality checks: ten integrator tolerances plus one
/// relative epsilon at `s0` scale.
pub fn sandwich_slack(p: &RateParams, cfg: &IntegratorConfig) -> f64 {
    10.0 * cfg.tolerance_at(p.s0()) + 1e-12 * p.s0()
}

pub fn sandwich_check(p: &RateParams, n_grid: usize) -> Result<SandwichReport> {
    sandwich_check_with(p, n_grid, &IntegratorConfig::default())
}

pub fn sandwich_check_with(
    p: &RateParams,
    n_grid: usize,
    cfg: &IntegratorConfig,
) -> Result<SandwichReport> {
    p.require_no_initial_complex()?;
    p.require_usable_upper_bound()?;
    if n_grid < 2 {
        return Err(Error::InvalidInput(format!(
            "sandwich grid needs at least 2 points (got {n_grid})"
        )));
    }
    let horizon = comparison_horizon(p);
    let dense = IntegratorConfig {
        dense_output: true,
        ..*cfg
    };
    let traj = integrate_mm(p, horizon, &dense)?;
    let low = lower_solution(p)?;
    let star = mm_linear_solution(p)?;
    let up = upper_solution(p)?;

    let grid: Vec<f64> = (0..n_grid)
        .map(|i| (i as f64 / (n_grid - 1) as f64) * horizon)
        .collect();
    let mut report = SandwichReport {
        s0: p.s0(),
        horizon,
        grid: Vec::with_capacity(n_grid),
        s_low: Vec::with_capacity(n_grid),
        s_star: Vec::with_capacity(n_grid),
        s_up: Vec::with_capacity(n_grid),
        c_low: Vec::with_capacity(n_grid),
        c_star: Vec::with_capacity(n_grid),
        c_up: Vec::with_capacity(n_grid),
        s_num: Vec::with_capacity(n_grid),
        c_num: Vec::with_capacity(n_grid),
        max_violation: f64::NEG_INFINITY,
        slack: sandwich_slack(p, cfg),
        passed: false,
    };
    for &t in &grid {
        let (l, s, u, x) = (low.at(t), star.at(t), up.at(t), traj.sample(t)?);
        report.s_low.push(l.s);
        report.c_low.push(l.c);
        report.s_star.push(s.s);
        report.c_star.push(s.c);
        report.s_up.push(u.s);
        report.c_up.push(u.c);
        report.s_num.push(x.s);
        report.c_num.push(x.c);
    }
    report.grid = grid;
    report.max_violation = (0..n_grid)
        .map(|i| report.row_violation(i))
        .fold(f64::NEG_INFINITY, f64::max);
    report.passed = report.max_violation <= report.slack;
    Ok(report)
}

fn require_half_k(p: &RateParams) -> Result<()> {
    let k = p.constants().k;
    if p.s0() > 0.5 * k {
        return Err(Error::InvalidParameter {
            name: "s0",
            value: p.s0(),
            reason: "error-order estimates require s0 <= K/2",
        });
    }
    Ok(())
}

/// `(sup |s - s*|, sup |c - c*|)` over the accepted-step grid plus
/// [`SUP_UNIFORM_POINTS`] uniform points of the comparison window.
pub fn sup_error(p: &RateParams) -> Result<(f64, f64)> {
    sup_error_with(p, &IntegratorConfig::default())
}

pub fn sup_error_with(p: &RateParams, cfg: &IntegratorConfig) -> Result<(f64, f64)> {
    p.require_no_initial_complex()?;
    require_half_k(p)?;
    let horizon = comparison_horizon(p);
    let dense = IntegratorConfig {
        dense_output: true,
        ..*cfg
    };
    let traj = integrate_mm(p, horizon, &dense)?;
    let star = mm_linear_solution(p)?;

    let mut err = (0.0f64, 0.0f64);
    let mut track = |t: f64, x: crate::model::State| {
        let y = star.at(t);
        err.0 = err.0.max((x.s - y.s).abs());
        err.1 = err.1.max((x.c - y.c).abs());
    };
    for (&t, &x) in traj.times().iter().zip(traj.states()) {
        track(t, x);
    }
    for i in 0..SUP_UNIFORM_POINTS {
        let t = (i as f64 / (SUP_UNIFORM_POINTS - 1) as f64) * horizon;
        track(t, traj.sample(t)?);
    }
    Ok(err)
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub s0_values: Vec<f64>,
    pub sup_errors_s: Vec<f64>,
    pub sup_errors_c: Vec<f64>,
    pub slope_s: f64,
    pub slope_c: f64,
    /// Natural-log intercepts; `exp(intercept)` estimates the constant in
    /// `error ≈ C·s0^slope`.
    pub intercept_s: f64,
    pub intercept_c: f64,
    /// `s0` values whose run failed and were left out of the fit.
    pub failed_s0: Vec<f64>,
}

impl OrderReport {
    pub fn error_constants(&self) -> (f64, f64) {
        (self.intercept_s.exp(), self.intercept_c.exp())
    }
}

/// Ordinary least squares fit of `ln y = slope·ln x + intercept`.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(
            "log-log fit needs at least two paired points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput(
            "log-log fit needs finite positive values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("log-log fit needs distinct x".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Runs [`sup_error`] on `s0_max, s0_max/2, …` (`n_points` values) and fits
/// the log-log slope of both error components.
pub fn convergence_order(p: &RateParams, s0_max: f64, n_points: usize) -> Result<OrderReport> {
    convergence_order_with(p, s0_max, n_points, &IntegratorConfig::default())
}

pub fn convergence_order_with(
    p: &RateParams,
    s0_max: f64,
    n_points: usize,
    cfg: &IntegratorConfig,
) -> Result<OrderReport> {
    if n_points < MIN_ORDER_POINTS {
        return Err(Error::InvalidInput(format!(
            "convergence order needs at least {MIN_ORDER_POINTS} points (got {n_points})"
        )));
    }
    let k = p.constants().k;
    if !(s0_max > 0.0 && s0_max <= 0.5 * k) {
        return Err(Error::InvalidParameter {
            name: "s0_max",
            value: s0_max,
            reason: "must satisfy 0 < s0_max <= K/2",
        });
    }
    let s0_values: Vec<f64> = (0..n_points)
        .map(|i| s0_max / 2f64.powi(i as i32))
        .collect();
    let runs: Vec<Result<(f64, f64)>> = s0_values
        .par_iter()
        .map(|&s0| p.with_s0(s0).and_then(|q| sup_error_with(&q, cfg)))
        .collect();

    let mut report = OrderReport {
        s0_values: Vec::new(),
        sup_errors_s: Vec::new(),
        sup_errors_c: Vec::new(),
        slope_s: f64::NAN,
        slope_c: f64::NAN,
        intercept_s: f64::NAN,
        intercept_c: f64::NAN,
        failed_s0: Vec::new(),
    };
    for (s0, run) in s0_values.into_iter().zip(runs) {
        match run {
            Ok((es, ec)) if es > 0.0 && ec > 0.0 => {
                report.s0_values.push(s0);
                report.sup_errors_s.push(es);
                report.sup_errors_c.push(ec);
            }
            Ok(_) => report.failed_s0.push(s0),
            Err(e) if e.is_numerical() => report.failed_s0.push(s0),
            Err(e) => return Err(e),
        }
    }
    let got = report.s0_values.len();
    if got < MIN_ORDER_POINTS {
        return Err(Error::InsufficientPoints {
            got,
            need: MIN_ORDER_POINTS,
        });
    }
    (report.slope_s, report.intercept_s) = log_log_fit(&report.s0_values, &report.sup_errors_s)?;
    (report.slope_c, report.intercept_c) = log_log_fit(&report.s0_values, &report.sup_errors_c)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_configurations_pass() {
        let top = sandwich_check(&RateParams::unit_rates(0.5).unwrap(), 512).unwrap();
        assert!(top.passed, "max violation {}", top.max_violation);
        let bottom = sandwich_check(&RateParams::unit_rates(0.1).unwrap(), 512).unwrap();
        assert!(bottom.passed, "max violation {}", bottom.max_violation);
        // same horizon, so rows are matched in scaled time
        assert_eq!(top.horizon, bottom.horizon);
        let (wt, wb) = (top.envelope_width_s(), bottom.envelope_width_s());
        let max = |w: &[f64]| w.iter().cloned().fold(0.0, f64::max);
        assert!(max(&wb) < max(&wt));
        assert!(wt.iter().zip(&wb).skip(1).all(|(a, b)| b < a));
    }

    #[test]
    fn curves_collapse_as_s0_vanishes() {
        let p = RateParams::unit_rates(1e-8).unwrap();
        let r = sandwich_check(&p, 256).unwrap();
        assert!(r.passed);
        for i in 0..r.len() {
            let vals = [r.s_low[i], r.s_star[i], r.s_up[i], r.s_num[i]];
            let cvals = [r.c_low[i], r.c_star[i], r.c_up[i], r.c_num[i]];
            for v in [vals, cvals] {
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(hi - lo <= 1e-7 * p.s0(), "row {i}: spread {}", hi - lo);
            }
        }
    }

    #[test]
    fn sandwich_preconditions() {
        assert!(matches!(
            sandwich_check(&RateParams::unit_rates(1.5).unwrap(), 16),
            Err(Error::UpperBoundUnusable { .. })
        ));
        let p = RateParams::unit_rates(0.1).unwrap();
        assert!(sandwich_check(&p.with_c0(0.01).unwrap(), 16).is_err());
        assert!(sandwich_check(&p, 1).is_err());
    }

    #[test]
    fn sup_error_small_substrate() {
        let p = RateParams::unit_rates(1e-8).unwrap();
        let (es, ec) = sup_error(&p).unwrap();
        assert!(es >= 0.0 && ec >= 0.0);
        assert!(es / p.s0() <= 1e-6);
        assert!(sup_error(&RateParams::unit_rates(0.6).unwrap()).is_err());
    }

    #[test]
    fn halving_s0_halves_relative_error() {
        let base = RateParams::unit_rates(1.0 / 16.0).unwrap();
        let (e1, _) = sup_error(&base).unwrap();
        let (e2, _) = sup_error(&base.with_s0(1.0 / 32.0).unwrap()).unwrap();
        let ratio = (e1 / base.s0()) / (e2 / (base.s0() / 2.0));
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn reference_order_is_two() {
        let p = RateParams::unit_rates(0.25).unwrap();
        let r = convergence_order(&p, 0.25, 6).unwrap();
        assert_eq!(r.s0_values.len(), 6);
        assert!((1.85..=2.15).contains(&r.slope_s), "slope_s {}", r.slope_s);
        assert!((1.8..=2.2).contains(&r.slope_c), "slope_c {}", r.slope_c);
        assert!(r.failed_s0.is_empty());
    }

    #[test]
    fn order_validation() {
        let p = RateParams::unit_rates(0.25).unwrap();
        assert!(convergence_order(&p, 0.25, 3).is_err());
        assert!(convergence_order(&p, 0.75, 6).is_err());
    }

    #[test]
    fn regression_is_shift_invariant() {
        let x = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
        let y = [3e-2, 8e-3, 2.1e-3, 5e-4, 1.3e-4];
        let (a, _) = log_log_fit(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * 7.5).collect();
        let (b, _) = log_log_fit(&xs, &y).unwrap();
        assert!((a - b).abs() < 1e-12);
        let y2: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        let (s, i) = log_log_fit(&x, &y2).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (i - 3f64.ln()).abs() < 1e-12);
        assert!(log_log_fit(&[1.0], &[1.0]).is_err());
        assert!(log_log_fit(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }
}
