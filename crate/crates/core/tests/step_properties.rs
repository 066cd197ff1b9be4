//! Per-step invariants of the coupled integrator on random initial data.

mod common;

use proptest::prelude::*;

use chemostokes::diagnostics::mass_budget;
use chemostokes::grid::{divergence, ScalarField, State, VectorField};
use chemostokes::integrator::{Integrator, StepContext};

use common::load_config;

fn random_state(setup: &chemostokes::config::Setup, n: &[f64], c: &[f64]) -> State {
    let g = &setup.problem.grid;
    State::new(
        ScalarField::from_values(g, n.to_vec()).unwrap(),
        ScalarField::from_values(g, c.to_vec()).unwrap(),
        VectorField::zeros(g),
        0.0,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_preserve_sign_mass_balance_and_incompressibility(
        n in proptest::collection::vec(0.0f64..3.0, 64),
        c in proptest::collection::vec(-0.5f64..0.5, 64),
        chi in 0.0f64..2.0,
    ) {
        let mut cfg = load_config("small");
        cfg.grid.cells = chemostokes::config::PerAxis::All(8);
        cfg.physics.chi = chi;
        cfg.integrator.dt = 0.02;
        let setup = cfg.build().unwrap();
        let state = random_state(&setup, &n, &c);
        let mut integ = Integrator::new(&setup.problem, setup.step).unwrap();
        let mut worst_budget = 0.0f64;
        let mut worst_neg = 0.0f64;
        let mut hook = |ctx: &StepContext<'_>| {
            worst_budget = worst_budget.max(mass_budget(ctx.before, ctx.after, ctx.fluxes, ctx.dt));
            worst_neg = worst_neg.max(-ctx.fluxes.min_before_clip / ctx.after.n.max().max(1e-300));
            Ok(())
        };
        let mut s = state;
        for _ in 0..5 {
            s = integ.step(&s, &mut hook).unwrap();
        }
        prop_assert!(worst_budget <= 1e-9, "budget residual {worst_budget:e}");
        prop_assert!(worst_neg <= 1e-12, "relative negativity {worst_neg:e}");
        prop_assert!(s.n.min() >= 0.0);
        prop_assert!(divergence(&s.u).max_abs() <= 1e-10 * s.u.max_abs().max(1.0));
    }
}
