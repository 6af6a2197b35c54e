//! The irreversible Michaelis–Menten mechanism
//!
//! ```text
//!   ds/dt = -k1·e0·s + (k1·s + k₋₁)·c
//!   dc/dt =  k1·e0·s - (k1·s + k₋₁ + k2)·c
//! ```
//!
//! with its derived constants and the physically relevant region `D` on
//! which the system is cooperative.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default absolute slack for [`in_region_d`].
pub const REGION_SLACK: f64 = 1e-9;

/// Physical parameters of the mechanism plus initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateParams {
    k1: f64,
    k_minus1: f64,
    k2: f64,
    e0: f64,
    s0: f64,
    c0: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

impl RateParams {
    /// Parameters with no complex present initially.
    pub fn new(k1: f64, k_minus1: f64, k2: f64, e0: f64, s0: f64) -> Result<Self> {
        Ok(RateParams {
            k1: positive("k1", k1)?,
            k_minus1: positive("k_minus1", k_minus1)?,
            k2: positive("k2", k2)?,
            e0: positive("e0", e0)?,
            s0: positive("s0", s0)?,
            c0: 0.0,
        })
    }

    /// The reference set `k1 = k₋₁ = k2 = e0 = 1`.
    pub fn unit_rates(s0: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, 1.0, s0)
    }

    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 >= 0.0 && c0 <= self.e0) {
            return Err(Error::InvalidParameter {
                name: "c0",
                value: c0,
                reason: "must satisfy 0 <= c0 <= e0",
            });
        }
        self.c0 = c0;
        Ok(self)
    }

    pub fn with_s0(self, s0: f64) -> Result<Self> {
        Self::new(self.k1, self.k_minus1, self.k2, self.e0, s0)?.with_c0(self.c0)
    }

    pub fn with_e0(self, e0: f64) -> Result<Self> {
        Self::new(self.k1, self.k_minus1, self.k2, e0, self.s0)?.with_c0(self.c0)
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k_minus1(&self) -> f64 {
        self.k_minus1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }
    pub fn e0(&self) -> f64 {
        self.e0
    }
    pub fn s0(&self) -> f64 {
        self.s0
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn initial_state(&self) -> State {
        State::new(self.s0, self.c0)
    }

    pub fn constants(&self) -> DerivedConstants {
        derive_constants(self)
    }

    /// Closed-form solutions are only available from `(s0, 0)`.
    pub(crate) fn require_no_initial_complex(&self) -> Result<()> {
        if self.c0 != 0.0 {
            return Err(Error::NonzeroInitialComplex(self.c0));
        }
        Ok(())
    }

    /// Both comparison bounds decay only while `s0 < K`.
    pub fn require_usable_upper_bound(&self) -> Result<()> {
        let k = self.constants().k;
        if self.s0 >= k {
            return Err(Error::UpperBoundUnusable { s0: self.s0, k });
        }
        Ok(())
    }
}

/// `K_S` (complex equilibrium), `K_M` (Michaelis) and `K` (Van Slyke–Cullen).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub k_s: f64,
    pub k_m: f64,
    pub k: f64,
}

pub fn derive_constants(p: &RateParams) -> DerivedConstants {
    DerivedConstants {
        k_s: p.k_minus1 / p.k1,
        k_m: (p.k_minus1 + p.k2) / p.k1,
        k: p.k2 / p.k1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct State {
    pub s: f64,
    pub c: f64,
}

impl State {
    pub const ZERO: State = State { s: 0.0, c: 0.0 };

    pub const fn new(s: f64, c: f64) -> Self {
        State { s, c }
    }

    pub fn scale(self, k: f64) -> Self {
        State::new(self.s * k, self.c * k)
    }

    pub fn max_abs(self) -> f64 {
        self.s.abs().max(self.c.abs())
    }

    /// Componentwise `self ≺ other + slack`.
    pub fn precedes(self, other: State, slack: f64) -> bool {
        self.s <= other.s + slack && self.c <= other.c + slack
    }
}

impl std::ops::Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        State::new(self.s + o.s, self.c + o.c)
    }
}

impl std::ops::Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State::new(self.s - o.s, self.c - o.c)
    }
}

impl std::ops::Mul<State> for f64 {
    type Output = State;
    fn mul(self, x: State) -> State {
        x.scale(self)
    }
}

pub fn mm_rhs(x: State, p: &RateParams) -> State {
    let bind = p.k1 * p.e0 * x.s;
    let unbind = p.k1 * x.s + p.k_minus1;
    State::new(-bind + unbind * x.c, bind - (unbind + p.k2) * x.c)
}

/// Row-major Jacobian `[[∂f1/∂s, ∂f1/∂c], [∂f2/∂s, ∂f2/∂c]]`.
pub fn mm_jacobian(x: State, p: &RateParams) -> [[f64; 2]; 2] {
    let ds_dc = p.k1 * x.s + p.k_minus1;
    let dc_ds = p.k1 * (p.e0 - x.c);
    [[-dc_ds, ds_dc], [dc_ds, -(ds_dc + p.k2)]]
}

/// Membership in `D = {s >= 0, 0 <= c <= e0, s + c <= s0 + c0}` up to `slack`.
pub fn in_region_d(x: State, p: &RateParams, slack: f64) -> bool {
    x.s >= -slack && x.c >= -slack && x.c <= p.e0 + slack && x.s + x.c <= p.s0 + p.c0 + slack
}
