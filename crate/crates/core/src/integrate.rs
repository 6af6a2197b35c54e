//! Dormand–Prince 5(4) integration of the nonlinear mechanism and of
//! linear triples. These runs are the numerical ground truth that the
//! closed forms and comparison bounds are checked against.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear::{biexp_solve, mm_linear_triple, LinearTriple};
use crate::model::{in_region_d, mm_rhs, RateParams, State};

/// Default target for [`horizon`]: both linear components below `1e-6·s0`.
pub const HORIZON_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Keep the continuous extension so the trajectory can be sampled
    /// between accepted steps.
    pub dense_output: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 10_000_000,
            dense_output: true,
        }
    }
}

impl IntegratorConfig {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "tolerances must be finite and > 0",
                });
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Absolute floor of the error weights. It is expressed in units of the
    /// problem's concentration scale once that scale drops below one, so
    /// that runs at tiny `s0` keep their relative accuracy.
    pub fn abs_floor(&self, scale: f64) -> f64 {
        self.abs_tol * scale.min(1.0)
    }

    /// Per-component absolute tolerance for a solution of magnitude `scale`.
    pub fn tolerance_at(&self, scale: f64) -> f64 {
        self.abs_floor(scale) + self.rel_tol * scale
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<State>,
    #[serde(skip)]
    derivs: Vec<State>,
    /// Fifth coefficient of the continuous extension on each step interval.
    #[serde(skip)]
    cont5: Vec<State>,
    est_local_error: Vec<f64>,
    tol: f64,
    rejected: usize,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    /// Normalized embedded error estimate of each accepted step (`<= 1`);
    /// entry 0 belongs to the initial point and is zero.
    pub fn est_local_error(&self) -> &[f64] {
        &self.est_local_error
    }

    /// Absolute per-component tolerance at the solution's initial scale.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has its initial point")
    }

    pub fn final_state(&self) -> State {
        *self
            .states
            .last()
            .expect("trajectory has its initial point")
    }

    pub fn has_dense_output(&self) -> bool {
        !self.derivs.is_empty()
    }

    /// Evaluates the Dormand–Prince continuous extension between accepted
    /// steps; it is as accurate as the steps themselves.
    pub fn sample(&self, t: f64) -> Result<State> {
        if !self.has_dense_output() {
            return Err(Error::InvalidInput(
                "trajectory was integrated without dense output".into(),
            ));
        }
        let end = self.end_time();
        if !(t >= 0.0 && t <= end) {
            return Err(Error::InvalidInput(format!(
                "sample time {t} outside [0, {end}]"
            )));
        }
        let i = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return Ok(self.states[i]),
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let theta = (t - t0) / h;
        let theta1 = 1.0 - theta;
        let y0 = self.states[i];
        let diff = self.states[i + 1] - y0;
        let bspl = h * self.derivs[i] - diff;
        let r4 = diff - h * self.derivs[i + 1] - bspl;
        Ok(y0 + theta * (diff + theta1 * (bspl + theta * (r4 + theta1 * self.cont5[i]))))
    }

    pub fn sample_many(&self, ts: &[f64]) -> Result<Vec<State>> {
        ts.iter().map(|&t| self.sample(t)).collect()
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller (Hairer & Wanner defaults for DOPRI5)
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn lin(y: State, terms: &[(f64, State)]) -> State {
    terms.iter().fold(y, |acc, &(w, k)| {
        State::new(acc.s + w * k.s, acc.c + w * k.c)
    })
}

struct Solver<'a, F, A> {
    rhs: F,
    accept: A,
    scale: f64,
    cfg: &'a IntegratorConfig,
}

impl<F, A> Solver<'_, F, A>
where
    F: Fn(State) -> State,
    A: Fn(State) -> bool,
{
    fn weights(&self, y: State, y_new: State) -> State {
        let floor = self.cfg.abs_floor(self.scale).max(f64::MIN_POSITIVE);
        let w = |a: f64, b: f64| floor + self.cfg.rel_tol * a.abs().max(b.abs()).max(self.scale);
        State::new(w(y.s, y_new.s), w(y.c, y_new.c))
    }

    fn norm(v: State, w: State) -> f64 {
        let (a, b) = (v.s / w.s, v.c / w.c);
        (0.5 * (a * a + b * b)).sqrt()
    }

    fn initial_step(&self, y0: State, f0: State, span: f64) -> f64 {
        let w = self.weights(y0, y0);
        let d0 = Self::norm(y0, w);
        let d1 = Self::norm(f0, w);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(span);
        let y1 = lin(y0, &[(h0, f0)]);
        let f1 = (self.rhs)(y1);
        let d2 = Self::norm(f1 - f0, w) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    fn run(&self, y0: State, t_end: f64) -> Result<Trajectory> {
        self.cfg.validate()?;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidInput(format!(
                "integration horizon must be finite and > 0 (got {t_end})"
            )));
        }
        let dense = self.cfg.dense_output;
        let mut times = vec![0.0];
        let mut states = vec![y0];
        let mut errs = vec![0.0];
        let mut f = (self.rhs)(y0);
        let mut derivs = if dense { vec![f] } else { Vec::new() };
        let mut cont5 = Vec::new();

        let mut t = 0.0;
        let mut y = y0;
        let mut h = self.initial_step(y0, f, t_end);
        let mut fac_old: f64 = 1e-4;
        let mut last_rejected = false;
        let mut rejected = 0usize;
        let mut steps = 0usize;

        while t < t_end {
            if steps >= self.cfg.max_steps {
                return Err(Error::StepLimit { steps, t });
            }
            steps += 1;
            if h <= 1e-14 * t.abs().max(1e-300) || h < f64::MIN_POSITIVE {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }

            let k1 = f;
            let k2 = (self.rhs)(lin(y, &[(h * A21, k1)]));
            let k3 = (self.rhs)(lin(y, &[(h * A31, k1), (h * A32, k2)]));
            let k4 = (self.rhs)(lin(y, &[(h * A41, k1), (h * A42, k2), (h * A43, k3)]));
            let k5 = (self.rhs)(lin(
                y,
                &[(h * A51, k1), (h * A52, k2), (h * A53, k3), (h * A54, k4)],
            ));
            let k6 = (self.rhs)(lin(
                y,
                &[
                    (h * A61, k1),
                    (h * A62, k2),
                    (h * A63, k3),
                    (h * A64, k4),
                    (h * A65, k5),
                ],
            ));
            let y_new = lin(
                y,
                &[
                    (h * A71, k1),
                    (h * A73, k3),
                    (h * A74, k4),
                    (h * A75, k5),
                    (h * A76, k6),
                ],
            );
            let k7 = (self.rhs)(y_new);
            let err_vec = lin(
                State::ZERO,
                &[
                    (h * E1, k1),
                    (h * E3, k3),
                    (h * E4, k4),
                    (h * E5, k5),
                    (h * E6, k6),
                    (h * E7, k7),
                ],
            );
            let err = Self::norm(err_vec, self.weights(y, y_new));
            if !err.is_finite() {
                h *= FAC_MIN;
                last_rejected = true;
                rejected += 1;
                continue;
            }

            let fac11 = err.powf(EXPO1);
            if err <= 1.0 && (self.accept)(y_new) {
                let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                fac_old = err.max(1e-4);
                last_rejected = false;

                t = if last { t_end } else { t + h };
                y = y_new;
                f = k7;
                times.push(t);
                states.push(y);
                errs.push(err);
                if dense {
                    derivs.push(f);
                    cont5.push(lin(
                        State::ZERO,
                        &[
                            (h * D1, k1),
                            (h * D3, k3),
                            (h * D4, k4),
                            (h * D5, k5),
                            (h * D6, k6),
                            (h * D7, k7),
                        ],
                    ));
                }
                h = h_new;
            } else {
                if err <= 1.0 {
                    // left the admissible region despite a small error estimate
                    h *= 0.5;
                } else {
                    h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
                }
                last_rejected = true;
                rejected += 1;
            }
        }

        Ok(Trajectory {
            times,
            states,
            derivs,
            cont5,
            est_local_error: errs,
            tol: self.cfg.tolerance_at(self.scale),
            rejected,
        })
    }
}

/// Integrates the nonlinear mechanism from `(s0, c0)` over `[0, t_end]`.
/// Every accepted state lies in `D` within `10·tol`.
pub fn integrate_mm(p: &RateParams, t_end: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_mm_from(p, p.initial_state(), t_end, cfg)
}

/// As [`integrate_mm`] from an arbitrary initial state. The region check is
/// enforced only when `init` itself lies in `D`.
pub fn integrate_mm_from(
    p: &RateParams,
    init: State,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let scale = (p.s0() + p.c0()).max(init.max_abs());
    let slack = 10.0 * cfg.tolerance_at(scale);
    let check = in_region_d(init, p, 0.0);
    Solver {
        rhs: |x| mm_rhs(x, p),
        accept: |x| !check || in_region_d(x, p, slack),
        scale,
        cfg,
    }
    .run(init, t_end)
}

pub fn integrate_linear(
    tri: &LinearTriple,
    init: State,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    Solver {
        rhs: |x| tri.apply(x),
        accept: |_| true,
        scale: init.max_abs(),
        cfg,
    }
    .run(init, t_end)
}

/// Time after which both components of the pseudo-first-order solution are
/// below `eps·s0`: `T = ln(C/eps)/A1` with `C = max_i (|B1_i| + |B2_i|)/s0`.
pub fn horizon(p: &RateParams, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            value: eps,
            reason: "must lie in (0, 1)",
        });
    }
    let sol = biexp_solve(&mm_linear_triple(p), p.s0());
    let c = sol.coefficient_bound(p.s0());
    Ok(((c / eps).ln() / sol.a1).max(0.0))
}

/// Window used for nonlinear and bound comparisons: twice [`horizon`].
pub fn comparison_horizon(p: &RateParams) -> f64 {
    2.0 * horizon(p, HORIZON_EPS).expect("default eps is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::mm_linear_solution;
    use approx::assert_relative_eq;

    #[test]
    fn matches_closed_form_on_accepted_grid() {
        let tri = LinearTriple::new(1.0, 1.0, 2.0).unwrap();
        let traj = integrate_linear(
            &tri,
            State::new(0.1, 0.0),
            20.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let sol = biexp_solve(&tri, 0.1);
        for (&t, x) in traj.times().iter().zip(traj.states()) {
            let y = sol.at(t);
            assert!((x.s - y.s).abs() < 1e-10 && (x.c - y.c).abs() < 1e-10);
        }
        assert_eq!(traj.times()[0], 0.0);
        assert_eq!(traj.end_time(), 20.0);
        assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
        assert!(traj.est_local_error().iter().all(|&e| e <= 1.0));
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let tri = LinearTriple::new(0.5, 2.0, 3.0).unwrap();
        let traj = integrate_linear(&tri, State::ZERO, 10.0, &IntegratorConfig::default()).unwrap();
        assert!(traj.states().iter().all(|x| *x == State::ZERO));
        assert_eq!(traj.end_time(), 10.0);
    }

    #[test]
    fn superposition() {
        let tri = LinearTriple::new(0.8, 0.3, 1.9).unwrap();
        let cfg = IntegratorConfig::default();
        let x0 = State::new(0.2, 0.05);
        let one = integrate_linear(&tri, x0, 15.0, &cfg).unwrap();
        let two = integrate_linear(&tri, x0.scale(2.0), 15.0, &cfg).unwrap();
        for &t in &[0.5, 3.0, 7.5, 15.0] {
            let (a, b) = (one.sample(t).unwrap(), two.sample(t).unwrap());
            assert!((b - a.scale(2.0)).max_abs() < 10.0 * two.tol());
        }
    }

    #[test]
    fn rejects_bad_horizon_and_config() {
        let tri = LinearTriple::new(1.0, 1.0, 2.0).unwrap();
        let cfg = IntegratorConfig::default();
        assert!(integrate_linear(&tri, State::new(1.0, 0.0), 0.0, &cfg).is_err());
        assert!(integrate_linear(&tri, State::new(1.0, 0.0), -1.0, &cfg).is_err());
        let bad = cfg.with_rel_tol(0.0);
        assert!(matches!(
            integrate_linear(&tri, State::new(1.0, 0.0), 1.0, &bad),
            Err(Error::InvalidParameter {
                name: "rel_tol",
                ..
            })
        ));
    }

    #[test]
    fn step_limit_reported() {
        let p = RateParams::unit_rates(0.5).unwrap();
        let cfg = IntegratorConfig {
            max_steps: 5,
            ..IntegratorConfig::default()
        };
        assert!(matches!(
            integrate_mm(&p, 100.0, &cfg),
            Err(Error::StepLimit { steps: 5, .. })
        ));
    }

    #[test]
    fn sampling_needs_dense_output_and_range() {
        let p = RateParams::unit_rates(0.5).unwrap();
        let sparse = IntegratorConfig {
            dense_output: false,
            ..IntegratorConfig::default()
        };
        let traj = integrate_mm(&p, 5.0, &sparse).unwrap();
        assert!(traj.sample(1.0).is_err());
        let traj = integrate_mm(&p, 5.0, &IntegratorConfig::default()).unwrap();
        assert!(traj.sample(5.5).is_err());
        assert!(traj.sample(-0.1).is_err());
        assert_eq!(traj.sample(0.0).unwrap(), p.initial_state());
    }

    #[test]
    fn reference_time_course_shape() {
        let p = RateParams::unit_rates(0.5).unwrap();
        let t_end = comparison_horizon(&p);
        let traj = integrate_mm(&p, t_end, &IntegratorConfig::default()).unwrap();
        let xs = traj.states();
        let tol = traj.tol();
        assert!(xs.windows(2).all(|w| w[1].s <= w[0].s + tol));
        let peak = xs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.c.total_cmp(&b.1.c))
            .unwrap()
            .0;
        assert!(peak > 0 && peak < xs.len() - 1);
        assert!(xs[..=peak].windows(2).all(|w| w[1].c >= w[0].c - tol));
        assert!(xs[peak..].windows(2).all(|w| w[1].c <= w[0].c + tol));
        let end = traj.final_state();
        assert!(end.s < 1e-5 * p.s0() && end.c < 1e-5 * p.s0());
        // total substrate never increases
        assert!(xs
            .windows(2)
            .all(|w| w[1].s + w[1].c <= w[0].s + w[0].c + tol));
    }

    #[test]
    fn tiny_substrate_tracks_linear_solution() {
        // the gap itself is ~0.075·s0² for these rates, so 1e-8·s0 needs s0 < 1.3e-7
        for (s0, rel) in [(1e-8, 1e-8), (1e-6, 1e-7)] {
            let p = RateParams::unit_rates(s0).unwrap();
            let traj =
                integrate_mm(&p, comparison_horizon(&p), &IntegratorConfig::default()).unwrap();
            let sol = mm_linear_solution(&p).unwrap();
            for (&t, x) in traj.times().iter().zip(traj.states()) {
                let y = sol.at(t);
                assert!((x.s - y.s).abs() <= rel * s0, "s0 {s0} t {t}");
                assert!((x.c - y.c).abs() <= rel * s0, "s0 {s0} t {t}");
            }
        }
    }

    #[test]
    fn horizon_properties() {
        let p = RateParams::unit_rates(0.1).unwrap();
        let t = horizon(&p, 1e-6).unwrap();
        let sol = mm_linear_solution(&p).unwrap();
        assert_relative_eq!(sol.a1, 0.5 * (3.0 - 5f64.sqrt()), max_relative = 1e-14);
        let c = sol.coefficient_bound(p.s0());
        assert_relative_eq!(t, (c / 1e-6).ln() / sol.a1, max_relative = 1e-14);
        assert!(t.is_finite() && t > 0.0);
        let x = sol.at(t);
        assert!(x.s.abs() <= 1e-6 * p.s0() && x.c.abs() <= 1e-6 * p.s0());
        assert!(horizon(&p, 1e-9).unwrap() > t);
        assert!(horizon(&p, 0.999_999).unwrap() >= 0.0);
        assert!(horizon(&p, 1.0).is_err() && horizon(&p, 0.0).is_err());
        // independent of s0
        let q = p.with_s0(0.5).unwrap();
        assert_relative_eq!(horizon(&q, 1e-6).unwrap(), t, max_relative = 1e-14);
    }

    #[test]
    fn tighter_tolerance_converges() {
        let p = RateParams::new(2.0, 0.5, 1.5, 0.7, 0.3).unwrap();
        let t_end = 10.0;
        let reference =
            integrate_mm(&p, t_end, &IntegratorConfig::default().with_rel_tol(1e-13)).unwrap();
        let dev = |rel: f64| {
            let traj = integrate_mm(
                &p,
                t_end,
                &IntegratorConfig::default()
                    .with_rel_tol(rel)
                    .with_abs_tol(1e-15),
            )
            .unwrap();
            (traj.final_state() - reference.final_state()).max_abs()
        };
        assert!(dev(1e-8) < dev(1e-6));
    }
}
