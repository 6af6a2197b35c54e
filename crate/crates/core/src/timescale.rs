//! Timescale diagnostics for the linearized system.
//!
//! The eigenvalues are `λ₁,₂ = (k1/2)(K_M + e0)(-1 ± √(1 - η))` with the
//! separation index `η = 4·K·e0/(K_M + e0)²`. Separation is significant when
//! `η ≪ 1`; then the slow mode is well described by the scalar rate
//! `-k2·e0/(K_M + e0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{eigen, mm_linear_triple};
use crate::model::{RateParams, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// `η` below this is well separated.
    pub eta_sep: f64,
    /// `η` below this (and at least `eta_sep`) is marginal.
    pub eta_marginal: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            eta_sep: 0.1,
            eta_marginal: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_sep > 0.0 && self.eta_sep <= self.eta_marginal && self.eta_marginal <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "thresholds must satisfy 0 < eta_sep <= eta_marginal <= 1 (got {} / {})",
                self.eta_sep, self.eta_marginal
            )));
        }
        Ok(())
    }

    pub fn verdict(&self, eta: f64) -> Verdict {
        if eta < self.eta_sep {
            Verdict::WellSeparated
        } else if eta < self.eta_marginal {
            Verdict::Marginal
        } else {
            Verdict::NotSeparated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    WellSeparated,
    Marginal,
    NotSeparated,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::WellSeparated => "well-separated",
            Verdict::Marginal => "marginal",
            Verdict::NotSeparated => "not-separated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimescaleReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta: f64,
    pub lambda1_approx: f64,
    pub v1_exact: State,
    pub v1_approx: State,
    /// Acute angle (radians) between the exact and approximate slow directions.
    pub v1_angle: f64,
    pub separation_verdict: Verdict,
    pub thresholds: Thresholds,
}

/// `η = 4·K·e0/(K_M + e0)²`.
pub fn separation_index(p: &RateParams) -> f64 {
    let k = p.constants();
    let sum = k.k_m + p.e0();
    4.0 * k.k * p.e0() / (sum * sum)
}

/// `1 - η`, evaluated as `((K_M - e0)² + 4·K_S·e0)/(K_M + e0)²` so it stays
/// accurate as `η → 1`.
fn one_minus_eta(p: &RateParams) -> f64 {
    let k = p.constants();
    let e0 = p.e0();
    let sum = k.k_m + e0;
    ((k.k_m - e0).powi(2) + 4.0 * k.k_s * e0) / (sum * sum)
}

/// Exact eigenvalues `(λ₁, λ₂)` in the `(K_M, e0, η)` form. The slow one is
/// written as `-(k1/2)(K_M+e0)·η/(1 + √(1-η))` to avoid cancellation.
pub fn exact_eigenvalues(p: &RateParams) -> (f64, f64) {
    let half = 0.5 * p.k1() * (p.constants().k_m + p.e0());
    let root = one_minus_eta(p).sqrt();
    let eta = separation_index(p);
    (-half * eta / (1.0 + root), -half * (1.0 + root))
}

pub fn slow_eigenvalue_approx(p: &RateParams) -> f64 {
    -p.k2() * p.e0() / (p.constants().k_m + p.e0())
}

pub fn slow_eigenvector_approx(p: &RateParams) -> State {
    let k = p.constants();
    State::new(k.k_m - k.k * p.e0() / (k.k_m + p.e0()), p.e0())
}

/// Acute angle between two directions, in radians.
pub fn direction_angle(a: State, b: State) -> f64 {
    let cross = a.s * b.c - a.c * b.s;
    let dot = a.s * b.s + a.c * b.c;
    cross.abs().atan2(dot.abs())
}

/// Solution of the reduced equation `x' = -(k2·e0/(K_M+e0))·x`.
pub fn reduced_solution(p: &RateParams, init: State, t: f64) -> Result<State> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    Ok(init.scale((slow_eigenvalue_approx(p) * t).exp()))
}

pub fn analyze(p: &RateParams, thresholds: Thresholds) -> Result<TimescaleReport> {
    thresholds.validate()?;
    let (lambda1, lambda2) = exact_eigenvalues(p);
    let eta = separation_index(p);
    let v1_exact = eigen(&mm_linear_triple(p)).v1;
    let v1_approx = slow_eigenvector_approx(p);
    Ok(TimescaleReport {
        lambda1,
        lambda2,
        eta,
        lambda1_approx: slow_eigenvalue_approx(p),
        v1_exact,
        v1_approx,
        v1_angle: direction_angle(v1_exact, v1_approx),
        separation_verdict: thresholds.verdict(eta),
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::mm_linear_solution;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_rates_are_marginal() {
        let p = RateParams::unit_rates(0.1).unwrap();
        let r = analyze(&p, Thresholds::default()).unwrap();
        assert_relative_eq!(r.eta, 4.0 / 9.0, max_relative = 1e-15);
        assert_eq!(r.separation_verdict, Verdict::Marginal);
        assert_relative_eq!(r.lambda1, (-3.0 + 5f64.sqrt()) / 2.0, max_relative = 1e-14);
        assert_relative_eq!(r.lambda1_approx, -1.0 / 3.0, max_relative = 1e-15);
        let rel = (r.lambda1_approx - r.lambda1).abs() / r.lambda1.abs();
        assert!((rel - 0.127).abs() < 1e-3, "rel {rel}");
        let v = slow_eigenvector_approx(&p);
        assert_relative_eq!(v.s, 5.0 / 3.0, max_relative = 1e-15);
        assert_eq!(v.c, 1.0);
    }

    #[test]
    fn comparable_timescales() {
        let p = RateParams::new(1.0, 1e-12, 1.0, 1.0, 0.1).unwrap();
        let r = analyze(&p, Thresholds::default()).unwrap();
        assert!((r.eta - 1.0).abs() < 1e-9);
        assert!((r.lambda1 - r.lambda2).abs() / r.lambda2.abs() < 1e-4);
        assert_eq!(r.separation_verdict, Verdict::NotSeparated);
    }

    #[test]
    fn dilute_enzyme_is_separated() {
        let p = RateParams::new(1.0, 1.0, 1.0, 2e-3, 0.1).unwrap();
        let r = analyze(&p, Thresholds::default()).unwrap();
        assert_relative_eq!(r.eta, 8e-3 / (2.002f64 * 2.002), max_relative = 1e-14);
        assert_eq!(r.separation_verdict, Verdict::WellSeparated);
        let rel = (r.lambda1_approx - r.lambda1).abs() / r.lambda1.abs();
        assert!(rel <= 1e-3, "rel {rel}");
        assert!(r.v1_angle <= 1e-3, "angle {}", r.v1_angle);
    }

    #[test]
    fn thresholds_are_checked() {
        let p = RateParams::unit_rates(0.1).unwrap();
        let bad = Thresholds {
            eta_sep: 0.6,
            eta_marginal: 0.5,
        };
        assert!(analyze(&p, bad).is_err());
        let custom = Thresholds {
            eta_sep: 0.45,
            eta_marginal: 0.9,
        };
        let r = analyze(&p, custom).unwrap();
        assert_eq!(r.separation_verdict, Verdict::WellSeparated);
        assert_eq!(r.thresholds, custom);
    }

    #[test]
    fn approximation_exact_as_k_vanishes() {
        let base = RateParams::new(1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let mut prev = f64::INFINITY;
        for k2 in [1e-2, 1e-4, 1e-6, 1e-8] {
            let p = RateParams::new(base.k1(), base.k_minus1(), k2, base.e0(), base.s0()).unwrap();
            let (l1, _) = exact_eigenvalues(&p);
            let ratio = slow_eigenvalue_approx(&p) / l1;
            assert!((ratio - 1.0).abs() < prev);
            prev = (ratio - 1.0).abs();
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn reduced_solution_examples() {
        let p = RateParams::unit_rates(0.1).unwrap();
        let x0 = State::new(0.1, 0.0);
        assert_eq!(reduced_solution(&p, x0, 0.0).unwrap(), x0);
        let x = reduced_solution(&p, x0, 3.0).unwrap();
        assert_relative_eq!(x.s, 0.1 * (-1f64).exp(), max_relative = 1e-15);
        assert_eq!(x.c, 0.0);
        assert!(matches!(
            reduced_solution(&p, x0, -1.0),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn reduced_solution_tracks_slow_dynamics() {
        // e0 -> 0 family with the reference rate constants; tolerance 2·η·s0
        for e0 in [2e-3, 1e-3, 2e-4, 5e-5] {
            let p = RateParams::new(1.0, 1.0, 1.0, e0, 0.1).unwrap();
            let eta = separation_index(&p);
            assert!(eta <= 1e-3 * 2.1);
            let lin = mm_linear_solution(&p).unwrap();
            let t_fast = 10.0 / lin.a2;
            let t_end = 20.0 / lin.a1;
            let init = State::new(p.s0(), 0.0);
            let worst = (0..=2000)
                .map(|i| t_fast + (t_end - t_fast) * i as f64 / 2000.0)
                .map(|t| {
                    let r = reduced_solution(&p, init, t).unwrap();
                    (r.s - lin.at(t).s).abs()
                })
                .fold(0.0, f64::max);
            assert!(
                worst <= 2.0 * eta * p.s0(),
                "e0 {e0}: {worst} vs {}",
                2.0 * eta * p.s0()
            );
        }
    }

    fn params() -> impl Strategy<Value = RateParams> {
        (-2.3f64..2.3, -2.3f64..2.3, -2.3f64..2.3, -2.3f64..2.3).prop_map(|(a, b, c, d)| {
            RateParams::new(a.exp(), b.exp(), c.exp(), d.exp(), 0.1).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn eigenvalues_agree_with_triple_route(p in params()) {
            let (l1, l2) = exact_eigenvalues(&p);
            let e = eigen(&mm_linear_triple(&p));
            prop_assert!((l1 - e.lambda1).abs() <= 1e-12 * e.lambda1.abs());
            prop_assert!((l2 - e.lambda2).abs() <= 1e-12 * e.lambda2.abs());
            prop_assert!(l2 <= l1 && l1 < 0.0);
        }

        #[test]
        fn separation_index_range(p in params()) {
            let eta = separation_index(&p);
            prop_assert!(eta > 0.0 && eta <= 1.0);
            let k = p.constants();
            let lhs = (1.0 - eta) * (k.k_m + p.e0()).powi(2);
            let rhs = (k.k_m - p.e0()).powi(2) + 4.0 * k.k_s * p.e0();
            prop_assert!(rhs >= 0.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (k.k_m + p.e0()).powi(2));
        }

        #[test]
        fn discriminant_forms_agree(p in params()) {
            let k = p.constants();
            let k1 = p.k1();
            let e0 = p.e0();
            let a = k1 * k1 * ((k.k_m + e0).powi(2) - 4.0 * k.k * e0);
            let b = k1 * k1 * ((k.k_m - e0).powi(2) + 4.0 * k.k_s * e0);
            prop_assert!((a - b).abs() <= 1e-12 * k1 * k1 * (k.k_m + e0).powi(2));
        }

        #[test]
        fn approximate_direction_is_positive(p in params()) {
            let v = slow_eigenvector_approx(&p);
            prop_assert!(v.s > 0.0 && v.c > 0.0);
        }
    }
}
