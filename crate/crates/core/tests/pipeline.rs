//! Cross-module checks that exercise the public API end to end.

use approx::assert_relative_eq;
use pfo_core::bounds::{sandwich_check, sup_error};
use pfo_core::data::{parse_observations, write_observations};
use pfo_core::fit::{fit_rates, synthesize, uniform_times, Rates};
use pfo_core::integrate::{comparison_horizon, horizon, integrate_mm, IntegratorConfig};
use pfo_core::linear::{lower_solution, mm_linear_solution, upper_solution, upper_triple};
use pfo_core::timescale::{analyze, Thresholds, Verdict};
use pfo_core::{Error, RateParams};
use proptest::prelude::*;

#[test]
fn grid_end_lands_on_integration_end() {
    // horizon·511/511 rounds above the horizon for this set
    let p = RateParams::new(
        0.3275749210930745,
        0.12032562917231446,
        9.673009657461737,
        0.38083190344007384,
        2.5091781054816953,
    )
    .unwrap();
    let rep = sandwich_check(&p, 512).unwrap();
    assert!(rep.passed);
    assert_eq!(*rep.grid.last().unwrap(), comparison_horizon(&p));
}

#[test]
fn reference_pipeline() {
    let p = RateParams::unit_rates(0.1).unwrap();
    let ts = analyze(&p, Thresholds::default()).unwrap();
    assert_eq!(ts.separation_verdict, Verdict::Marginal);

    let rep = sandwich_check(&p, 101).unwrap();
    assert!(rep.passed);
    let (es, ec) = sup_error(&p).unwrap();
    // O(s0²) with a constant below one for these rates
    assert!(es < p.s0() * p.s0() && ec < p.s0() * p.s0());

    let data = synthesize(&p, &uniform_times(horizon(&p, 1e-6).unwrap(), 30), true).unwrap();
    let mut buf = Vec::new();
    write_observations(&mut buf, &data).unwrap();
    let back = parse_observations(buf.as_slice()).unwrap();
    let fit = fit_rates(&back, p.e0(), p.s0(), Rates::new(1.4, 0.8, 1.2)).unwrap();
    assert!(fit.converged);
    assert_relative_eq!(fit.k1, 1.0, max_relative = 1e-6);
    assert_relative_eq!(fit.k_minus1, 1.0, max_relative = 1e-6);
    assert_relative_eq!(fit.k2, 1.0, max_relative = 1e-6);
}

#[test]
fn gates_report_typed_errors() {
    let p = RateParams::unit_rates(1.5).unwrap();
    // the H solution still exists but grows: its slow rate is negative
    assert!(!upper_triple(&p).usable_bounds());
    assert!(upper_solution(&p).unwrap().a1 < 0.0);
    assert!(matches!(
        p.require_usable_upper_bound(),
        Err(Error::UpperBoundUnusable { .. })
    ));
    assert!(matches!(
        sandwich_check(&p, 10),
        Err(Error::UpperBoundUnusable { .. })
    ));
    let q = RateParams::unit_rates(0.1).unwrap().with_c0(0.05).unwrap();
    assert!(matches!(
        mm_linear_solution(&q),
        Err(Error::NonzeroInitialComplex(_))
    ));
    assert!(RateParams::new(1.0, 0.0, 1.0, 1.0, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn numerical_solution_between_closed_form_bounds(
        k1 in 0.1f64..10.0,
        km1 in 0.1f64..10.0,
        k2 in 0.1f64..10.0,
        e0 in 0.1f64..10.0,
        frac in 0.01f64..0.9,
    ) {
        let p = RateParams::new(k1, km1, k2, e0, frac * k2 / k1).unwrap();
        let cfg = IntegratorConfig::default();
        let t_end = comparison_horizon(&p);
        let traj = integrate_mm(&p, t_end, &cfg).unwrap();
        let (lo, up) = (lower_solution(&p).unwrap(), upper_solution(&p).unwrap());
        let slack = 10.0 * cfg.tolerance_at(p.s0()) + 1e-12 * p.s0();
        for (t, x) in traj.times().iter().zip(traj.states()) {
            let (l, u) = (lo.evaluate(*t).unwrap(), up.evaluate(*t).unwrap());
            prop_assert!(l.precedes(*x, slack) && x.precedes(u, slack), "t = {}", t);
        }
    }
}
