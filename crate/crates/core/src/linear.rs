//! Closed-form analysis of linear systems with matrix
//!
//! ```text
//!   [ -α   β ]
//!   [  α  -γ ]      α, β, γ > 0
//! ```
//!
//! The linearization at the origin and both comparison matrices (lower `G`,
//! upper `H`) have this shape. Its discriminant `Δ = (α-γ)² + 4αβ` is
//! strictly positive, so the eigenvalues are real and distinct and every
//! solution is a sum of two exponential modes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{RateParams, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearTriple {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl LinearTriple {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be finite and > 0",
                });
            }
        }
        Ok(LinearTriple { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Both eigenvalues are negative iff `γ > β`; otherwise the solution
    /// from `(s0, 0)` does not decay and is useless as a bound.
    pub fn usable_bounds(&self) -> bool {
        self.gamma > self.beta
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[-self.alpha, self.beta], [self.alpha, -self.gamma]]
    }

    pub fn apply(&self, x: State) -> State {
        State::new(
            -self.alpha * x.s + self.beta * x.c,
            self.alpha * x.s - self.gamma * x.c,
        )
    }

    pub fn discriminant(&self) -> f64 {
        let d = self.alpha - self.gamma;
        d * d + 4.0 * self.alpha * self.beta
    }

    pub fn determinant(&self) -> f64 {
        self.alpha * (self.gamma - self.beta)
    }

    pub fn trace(&self) -> f64 {
        -(self.alpha + self.gamma)
    }

    /// Returns `(γ - α + √Δ, α - γ + √Δ)`, each computed without cancellation.
    /// Their product is `4αβ`.
    fn shifted_roots(&self, sqrt_delta: f64) -> (f64, f64) {
        let d = self.gamma - self.alpha;
        let big = sqrt_delta + d.abs();
        let small = 4.0 * self.alpha * self.beta / big;
        if d >= 0.0 {
            (big, small)
        } else {
            (small, big)
        }
    }
}

/// Eigen-decomposition of a [`LinearTriple`]; `lambda1` is the slow
/// eigenvalue (closer to zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenPair {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `(β, (α - γ + √Δ)/2)`
    pub v1: State,
    /// `(β, (α - γ - √Δ)/2)`
    pub v2: State,
    pub delta: f64,
}

pub fn eigen(tri: &LinearTriple) -> EigenPair {
    let delta = tri.discriminant();
    debug_assert!(delta > 0.0, "Δ must be positive for positive entries");
    let root = delta.sqrt();
    // large-magnitude root first, then the slow one from the determinant
    let lambda2 = -0.5 * ((tri.alpha + tri.gamma) + root);
    let lambda1 = tri.determinant() / lambda2;
    let (gma_plus, amg_plus) = tri.shifted_roots(root);
    EigenPair {
        lambda1,
        lambda2,
        v1: State::new(tri.beta, 0.5 * amg_plus),
        v2: State::new(tri.beta, -0.5 * gma_plus),
        delta,
    }
}

/// `x(t) = B1·exp(-A1·t) + B2·exp(-A2·t)`; mode 1 is the slow one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiexpSolution {
    pub b1: State,
    pub b2: State,
    pub a1: f64,
    pub a2: f64,
}

impl BiexpSolution {
    pub fn evaluate(&self, t: f64) -> Result<State> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.at(t))
    }

    /// Unchecked evaluation for callers that already validated `t >= 0`.
    pub(crate) fn at(&self, t: f64) -> State {
        let e1 = (-self.a1 * t).exp();
        let e2 = (-self.a2 * t).exp();
        State::new(
            self.b1.s * e1 + self.b2.s * e2,
            self.b1.c * e1 + self.b2.c * e2,
        )
    }

    pub fn initial_value(&self) -> State {
        self.b1 + self.b2
    }

    /// Largest componentwise `(|B1| + |B2|) / scale`.
    pub fn coefficient_bound(&self, scale: f64) -> f64 {
        let s = self.b1.s.abs() + self.b2.s.abs();
        let c = self.b1.c.abs() + self.b2.c.abs();
        s.max(c) / scale
    }
}

pub fn evaluate(sol: &BiexpSolution, t: f64) -> Result<State> {
    sol.evaluate(t)
}

/// Solution from `(s0, 0)`.
pub fn biexp_solve(tri: &LinearTriple, s0: f64) -> BiexpSolution {
    let eig = eigen(tri);
    let root = eig.delta.sqrt();
    let (gma_plus, amg_plus) = tri.shifted_roots(root);
    let scale = s0 / (2.0 * root);
    let c_amp = scale * 2.0 * tri.alpha;
    BiexpSolution {
        b1: State::new(scale * gma_plus, c_amp),
        b2: State::new(scale * amg_plus, -c_amp),
        a1: -eig.lambda1,
        a2: -eig.lambda2,
    }
}

/// Linearization at the origin: `α = k1·e0`, `β = k1·K_S`, `γ = k1·K_M`.
pub fn mm_linear_triple(p: &RateParams) -> LinearTriple {
    let k = p.constants();
    LinearTriple {
        alpha: p.k1() * p.e0(),
        beta: p.k1() * k.k_s,
        gamma: p.k1() * k.k_m,
    }
}

/// Lower comparison matrix `G`: `K_M` replaced by `K_M + s0`.
pub fn lower_triple(p: &RateParams) -> LinearTriple {
    let k = p.constants();
    LinearTriple {
        alpha: p.k1() * p.e0(),
        beta: p.k1() * k.k_s,
        gamma: p.k1() * (k.k_m + p.s0()),
    }
}

/// Upper comparison matrix `H`: `K_S` replaced by `K_S + s0`. Not usable as
/// a decaying bound once `s0 >= K`; check [`LinearTriple::usable_bounds`].
pub fn upper_triple(p: &RateParams) -> LinearTriple {
    let k = p.constants();
    LinearTriple {
        alpha: p.k1() * p.e0(),
        beta: p.k1() * (k.k_s + p.s0()),
        gamma: p.k1() * k.k_m,
    }
}

/// Pseudo-first-order solution `(s*, c*)` from `(s0, 0)`.
pub fn mm_linear_solution(p: &RateParams) -> Result<BiexpSolution> {
    p.require_no_initial_complex()?;
    Ok(biexp_solve(&mm_linear_triple(p), p.s0()))
}

pub fn lower_solution(p: &RateParams) -> Result<BiexpSolution> {
    p.require_no_initial_complex()?;
    Ok(biexp_solve(&lower_triple(p), p.s0()))
}

pub fn upper_solution(p: &RateParams) -> Result<BiexpSolution> {
    p.require_no_initial_complex()?;
    Ok(biexp_solve(&upper_triple(p), p.s0()))
}
