//! Rate-constant estimation from time courses using the pseudo-first-order
//! closed form as the forward model.
//!
//! The unknowns are `θ = (ln k1, ln k₋₁, ln k2)`; working in log space keeps
//! the rates positive without a constrained solver. The objective
//! `½·Σ rᵢ²` is minimized by damped Gauss–Newton (Levenberg–Marquardt)
//! with an analytic Jacobian of the biexponential model.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Observation;
use crate::error::{Error, Result};
use crate::linear::{biexp_solve, mm_linear_triple, BiexpSolution, LinearTriple};
use crate::model::RateParams;

/// Minimum number of observations accepted by [`fit_rates`].
pub const MIN_OBSERVATIONS: usize = 6;

/// Relative proximity of the two decay rates below which the three rate
/// constants are reported as poorly identifiable.
pub const IDENTIFIABILITY_GAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    pub k1: f64,
    pub k_minus1: f64,
    pub k2: f64,
}

impl Rates {
    pub fn new(k1: f64, k_minus1: f64, k2: f64) -> Self {
        Rates { k1, k_minus1, k2 }
    }

    pub fn of(p: &RateParams) -> Self {
        Rates::new(p.k1(), p.k_minus1(), p.k2())
    }

    fn to_log(self) -> Vector3<f64> {
        Vector3::new(self.k1.ln(), self.k_minus1.ln(), self.k2.ln())
    }

    fn from_log(theta: &Vector3<f64>) -> Self {
        Rates::new(theta[0].exp(), theta[1].exp(), theta[2].exp())
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k1", self.k1),
            ("k_minus1", self.k_minus1),
            ("k2", self.k2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "rate guesses must be finite and > 0",
                });
            }
        }
        Ok(())
    }

    fn triple(&self, e0: f64) -> Result<LinearTriple> {
        LinearTriple::new(self.k1 * e0, self.k_minus1, self.k_minus1 + self.k2)
    }

    /// Pseudo-first-order solution for these rates.
    pub fn solution(&self, e0: f64, s0: f64) -> Result<BiexpSolution> {
        Ok(biexp_solve(&self.triple(e0)?, s0))
    }

    /// `(A1, A2)`, the slow and fast decay rates.
    pub fn decay_rates(&self, e0: f64) -> Result<(f64, f64)> {
        let sol = self.solution(e0, 1.0)?;
        Ok((sol.a1, sol.a2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the log-parameter step (max norm).
    pub step_tol: f64,
    /// Convergence threshold on the gradient of the `s0`-normalized
    /// objective (max norm).
    pub grad_tol: f64,
    /// Initial damping relative to the largest diagonal of `JᵀJ`.
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            step_tol: 1e-10,
            grad_tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub k1: f64,
    pub k_minus1: f64,
    pub k2: f64,
    /// Weighted RMS of the residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `σ²·(JᵀJ)⁻¹` in log-parameter space; `None` when `JᵀJ` is singular.
    pub covariance_proxy: Option<[[f64; 3]; 3]>,
    /// The decay rates are within [`IDENTIFIABILITY_GAP`] of each other or
    /// the normal equations are rank deficient.
    pub identifiability_flag: bool,
    pub rank_deficient: bool,
    /// Objective value after each accepted step, starting with the guess.
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn rates(&self) -> Rates {
        Rates::new(self.k1, self.k_minus1, self.k2)
    }
}

/// Model predictions at each observation time.
fn predictions(data: &[Observation], sol: &BiexpSolution) -> Vec<crate::model::State> {
    data.iter().map(|o| sol.at(o.t)).collect()
}

/// `rᵢ = wᵢ·(obsᵢ - modelᵢ)`: all `s` residuals first, then the `c`
/// residuals of the observations that carry one.
pub fn residuals(data: &[Observation], e0: f64, s0: f64, rates: Rates) -> Result<Vec<f64>> {
    rates.validate()?;
    let sol = rates.solution(e0, s0)?;
    let pred = predictions(data, &sol);
    let mut r: Vec<f64> = data
        .iter()
        .zip(&pred)
        .map(|(o, x)| o.weight * (o.s_obs - x.s))
        .collect();
    r.extend(
        data.iter()
            .zip(&pred)
            .filter_map(|(o, x)| o.c_obs.map(|c| o.weight * (c - x.c))),
    );
    Ok(r)
}

/// Partial derivatives of `(s(t), c(t))` with respect to `(α, β, γ)`.
fn model_gradient(tri: &LinearTriple, s0: f64, t: f64) -> ([f64; 3], [f64; 3]) {
    let (a, b, g) = (tri.alpha(), tri.beta(), tri.gamma());
    let r = tri.discriminant().sqrt();
    let sol = biexp_solve(tri, s0);
    let (l1, l2) = (-sol.a1, -sol.a2);
    let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());

    // d/dα, d/dβ, d/dγ of √Δ, of α+γ, of γ-α and of α
    let dr = [(a - g + 2.0 * b) / r, 2.0 * a / r, (g - a) / r];
    let dsum = [1.0, 0.0, 1.0];
    let dgma = [-1.0, 0.0, 1.0];
    let dalpha = [1.0, 0.0, 0.0];

    let mut ds = [0.0; 3];
    let mut dc = [0.0; 3];
    for i in 0..3 {
        let dl1 = 0.5 * (-dsum[i] + dr[i]);
        let dl2 = 0.5 * (-dsum[i] - dr[i]);
        let db1s = 0.5 * s0 * (dgma[i] / r - (g - a) * dr[i] / (r * r));
        let db1c = s0 * (dalpha[i] / r - a * dr[i] / (r * r));
        ds[i] = db1s * (e1 - e2) + t * (sol.b1.s * e1 * dl1 + sol.b2.s * e2 * dl2);
        dc[i] = db1c * (e1 - e2) + sol.b1.c * t * (e1 * dl1 - e2 * dl2);
    }
    (ds, dc)
}

/// Jacobian of [`residuals`] with respect to `(ln k1, ln k₋₁, ln k2)`.
/// Falls back to central differences if the analytic form is not finite.
pub fn residual_jacobian(
    data: &[Observation],
    e0: f64,
    s0: f64,
    rates: Rates,
) -> Result<Vec<[f64; 3]>> {
    rates.validate()?;
    let tri = rates.triple(e0)?;
    // chain rule: α = k1·e0, β = k₋₁, γ = k₋₁ + k2
    let to_log = |d: [f64; 3]| {
        [
            tri.alpha() * d[0],
            rates.k_minus1 * (d[1] + d[2]),
            rates.k2 * d[2],
        ]
    };
    let mut s_rows = Vec::with_capacity(data.len());
    let mut c_rows = Vec::new();
    for o in data {
        let (ds, dc) = model_gradient(&tri, s0, o.t);
        let (ds, dc) = (to_log(ds), to_log(dc));
        s_rows.push(ds.map(|v| -o.weight * v));
        if o.c_obs.is_some() {
            c_rows.push(dc.map(|v| -o.weight * v));
        }
    }
    s_rows.extend(c_rows);
    if s_rows.iter().flatten().all(|v| v.is_finite()) {
        Ok(s_rows)
    } else {
        finite_difference_jacobian(data, e0, s0, rates)
    }
}

pub fn finite_difference_jacobian(
    data: &[Observation],
    e0: f64,
    s0: f64,
    rates: Rates,
) -> Result<Vec<[f64; 3]>> {
    let theta = rates.to_log();
    let h = 1e-6;
    let n = residuals(data, e0, s0, rates)?.len();
    let mut jac = vec![[0.0; 3]; n];
    for j in 0..3 {
        let mut up = theta;
        let mut down = theta;
        up[j] += h;
        down[j] -= h;
        let ru = residuals(data, e0, s0, Rates::from_log(&up))?;
        let rd = residuals(data, e0, s0, Rates::from_log(&down))?;
        for i in 0..n {
            jac[i][j] = (ru[i] - rd[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn normal_equations(jac: &[[f64; 3]], r: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut g = Vector3::zeros();
    for (row, &ri) in jac.iter().zip(r) {
        for i in 0..3 {
            g[i] += row[i] * ri;
            for j in 0..3 {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    (a, g)
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn check_data(data: &[Observation], e0: f64, s0: f64, guess: Rates) -> Result<()> {
    for (name, v) in [("e0", e0), ("s0", s0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "must be finite and > 0",
            });
        }
    }
    guess.validate()?;
    if data.len() < MIN_OBSERVATIONS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_OBSERVATIONS} observations (got {})",
            data.len()
        )));
    }
    for o in data {
        o.validate()?;
    }
    if let Some(w) = data.windows(2).find(|w| w[1].t <= w[0].t) {
        return Err(Error::InvalidInput(format!(
            "observation times must be strictly increasing ({} then {})",
            w[0].t, w[1].t
        )));
    }
    if s0 >= guess.k2 / guess.k1 {
        return Err(Error::InvalidInput(format!(
            "s0 = {s0} is not below K = k2/k1 = {} of the guess; the pseudo-first-order model does not apply",
            guess.k2 / guess.k1
        )));
    }
    let (a1, _) = guess.decay_rates(e0)?;
    let span = data[data.len() - 1].t - data[0].t;
    if span * a1 < 1.0 {
        return Err(Error::InvalidInput(format!(
            "observations span {span}, less than one slow time constant 1/A1 = {}",
            1.0 / a1
        )));
    }
    Ok(())
}

pub fn fit_rates(data: &[Observation], e0: f64, s0: f64, guess: Rates) -> Result<FitResult> {
    fit_rates_with(data, e0, s0, guess, &FitOptions::default())
}

pub fn fit_rates_with(
    data: &[Observation],
    e0: f64,
    s0: f64,
    guess: Rates,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_data(data, e0, s0, guess)?;
    // residuals are normalized by s0 inside the loop so tolerances are
    // independent of the concentration unit
    let norm = 1.0 / s0;
    let eval = |theta: &Vector3<f64>| -> Result<Vec<f64>> {
        let mut r = residuals(data, e0, s0, Rates::from_log(theta))?;
        r.iter_mut().for_each(|v| *v *= norm);
        Ok(r)
    };
    let jacobian = |theta: &Vector3<f64>| -> Result<Vec<[f64; 3]>> {
        let mut j = residual_jacobian(data, e0, s0, Rates::from_log(theta))?;
        j.iter_mut()
            .for_each(|row| row.iter_mut().for_each(|v| *v *= norm));
        Ok(j)
    };

    let mut theta = guess.to_log();
    let mut r = eval(&theta)?;
    let mut cost = half_sq(&r);
    let mut jac = jacobian(&theta)?;
    let (mut a, mut g) = normal_equations(&jac, &r);
    let max_diag = a.diagonal().max();
    let mut damping = opts.initial_damping * if max_diag > 0.0 { max_diag } else { 1.0 };
    let mut trace = vec![cost];
    let mut converged = g.amax() < opts.grad_tol && cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let lhs = a + Matrix3::identity() * damping;
        let Some(chol) = lhs.cholesky() else {
            damping *= 3.0;
            continue;
        };
        let step = chol.solve(&(-g));
        let candidate = theta + step;
        let r_new = match eval(&candidate) {
            Ok(r) if r.iter().all(|v| v.is_finite()) => r,
            _ => {
                damping *= 3.0;
                continue;
            }
        };
        let cost_new = half_sq(&r_new);
        if cost_new < cost {
            theta = candidate;
            r = r_new;
            cost = cost_new;
            trace.push(cost);
            jac = jacobian(&theta)?;
            (a, g) = normal_equations(&jac, &r);
            damping /= 2.0;
            converged = (step.amax() < opts.step_tol && g.amax() < opts.grad_tol) || cost == 0.0;
        } else {
            damping *= 3.0;
            // no representable improvement left: stationary to working precision
            if step.amax() < opts.step_tol && g.amax() < opts.grad_tol {
                converged = true;
            }
        }
    }

    let rates = Rates::from_log(&theta);
    let raw = residuals(data, e0, s0, rates)?;
    let n = raw.len();
    let ssr: f64 = raw.iter().map(|v| v * v).sum();
    let jac_raw = residual_jacobian(data, e0, s0, rates)?;
    let (a_raw, _) = normal_equations(&jac_raw, &raw);
    let sigma2 = if n > 3 { ssr / (n - 3) as f64 } else { ssr };
    let eig = a_raw.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let rank_deficient = !lo.is_finite() || lo <= hi * 1e-14;
    let covariance_proxy = if rank_deficient {
        None
    } else {
        a_raw.try_inverse().map(|inv| {
            let c = inv * sigma2;
            [
                [c[(0, 0)], c[(0, 1)], c[(0, 2)]],
                [c[(1, 0)], c[(1, 1)], c[(1, 2)]],
                [c[(2, 0)], c[(2, 1)], c[(2, 2)]],
            ]
        })
    };
    let (a1, a2) = rates.decay_rates(e0)?;
    let close = (a2 - a1).abs() < IDENTIFIABILITY_GAP * a1.abs().max(a2.abs());

    Ok(FitResult {
        k1: rates.k1,
        k_minus1: rates.k_minus1,
        k2: rates.k2,
        residual_norm: (ssr / n as f64).sqrt(),
        iterations,
        converged,
        covariance_proxy,
        identifiability_flag: close || rank_deficient,
        rank_deficient,
        objective_trace: trace,
    })
}

/// Noiseless observations of the pseudo-first-order solution for `p` at the
/// given times (`c` included on request).
pub fn synthesize(p: &RateParams, times: &[f64], with_c: bool) -> Result<Vec<Observation>> {
    let sol = biexp_solve(&mm_linear_triple(p), p.s0());
    times
        .iter()
        .map(|&t| {
            let x = sol.evaluate(t)?;
            let o = Observation::new(t, x.s);
            Ok(if with_c { o.with_c(x.c) } else { o })
        })
        .collect()
}

/// Adds Gaussian noise with standard deviation `sigma` to every `s` value.
pub fn add_noise(data: &mut [Observation], sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidInput(format!("noise level {sigma}: {e}")))?;
    for o in data {
        o.s_obs += normal.sample(rng);
    }
    Ok(())
}

/// `n` uniform times on `[0, t_end]`.
pub fn uniform_times(t_end: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| (i as f64 / (n - 1) as f64) * t_end)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloConfig {
    pub trials: usize,
    /// Noise standard deviation as a fraction of `s0`.
    pub noise_rel: f64,
    pub n_points: usize,
    pub t_end: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub converged: usize,
    pub flagged: usize,
    pub failed: usize,
    /// Median relative errors of `(k1, k₋₁, k2)` over converged trials.
    pub median_rel_error: [f64; 3],
    pub estimates: Vec<Rates>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Repeated fits of noisy synthetic `s` data. Trial `i` draws its noise
/// from a generator seeded with `seed + i`, so results do not depend on
/// scheduling.
pub fn monte_carlo(
    truth: &RateParams,
    guess: Rates,
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloSummary> {
    if cfg.trials == 0 {
        return Err(Error::InvalidInput(
            "monte carlo needs at least one trial".into(),
        ));
    }
    let times = uniform_times(cfg.t_end, cfg.n_points);
    let clean = synthesize(truth, &times, false)?;
    let sigma = cfg.noise_rel * truth.s0();
    let runs: Vec<Result<FitResult>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let mut data = clean.clone();
            add_noise(&mut data, sigma, &mut rng)?;
            fit_rates(&data, truth.e0(), truth.s0(), guess)
        })
        .collect();

    let t = Rates::of(truth);
    let mut summary = MonteCarloSummary {
        trials: cfg.trials,
        converged: 0,
        flagged: 0,
        failed: 0,
        median_rel_error: [f64::NAN; 3],
        estimates: Vec::new(),
    };
    let mut errs: [Vec<f64>; 3] = Default::default();
    for run in runs {
        match run {
            Ok(fit) if fit.converged => {
                summary.converged += 1;
                summary.flagged += fit.identifiability_flag as usize;
                let e = fit.rates();
                errs[0].push((e.k1 - t.k1).abs() / t.k1);
                errs[1].push((e.k_minus1 - t.k_minus1).abs() / t.k_minus1);
                errs[2].push((e.k2 - t.k2).abs() / t.k2);
                summary.estimates.push(e);
            }
            Ok(fit) => {
                summary.flagged += fit.identifiability_flag as usize;
                summary.failed += 1;
            }
            Err(e) if matches!(e, Error::InvalidInput(_) | Error::InvalidParameter { .. }) => {
                return Err(e)
            }
            Err(_) => summary.failed += 1,
        }
    }
    summary.median_rel_error = errs.map(median);
    Ok(summary)
}
