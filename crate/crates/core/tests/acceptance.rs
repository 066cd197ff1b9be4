//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The reference orbit is
//! computed once and shared by the criteria that audit it. Exit status is
//! nonzero when any criterion fails.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chemostokes::coeffs::{build_homogenizers, RobinData};
use chemostokes::config::{RunConfig, Setup};
use chemostokes::diagnostics::{
    clipped_mass_check, divergence_check, finiteness_check, mass_budget_check, moser_escalation, moser_ladder,
    nonnegativity_check, penalty_recovery_check, stationarity, DiagnosticsLedger,
};
use chemostokes::expr::Expr;
use chemostokes::grid::{Grid, ScalarField, VectorField};
use chemostokes::integrator::{transformed_oxygen_step, Integrator};
use chemostokes::mms::{fit_order, run_convergence, ManufacturedCase};
use chemostokes::periodic::{find_periodic, relative_residual, FixedPointReport};
use chemostokes::robin::direct_robin_step;
use chemostokes::Result;

use common::{load_config, robin_helmholtz};

struct Outcome {
    passed: bool,
    value: f64,
    limit: f64,
    detail: String,
}

impl Outcome {
    fn at_most(value: f64, limit: f64, detail: String) -> Self {
        Outcome { passed: value <= limit, value, limit, detail }
    }

    fn at_least(value: f64, limit: f64, detail: String) -> Self {
        Outcome { passed: value >= limit, value, limit, detail }
    }

    /// Combines sub-checks; the first failing one supplies value and limit.
    fn all(parts: Vec<Outcome>) -> Self {
        let detail = parts.iter().map(|p| p.detail.as_str()).filter(|d| !d.is_empty()).collect::<Vec<_>>().join("; ");
        let lead = parts.iter().find(|p| !p.passed).unwrap_or(&parts[0]);
        Outcome { passed: parts.iter().all(|p| p.passed), value: lead.value, limit: lead.limit, detail }
    }
}

/// A converged orbit and the ledger of the periods audited on it.
struct Orbit {
    setup: Setup,
    report: FixedPointReport,
    ledger: DiagnosticsLedger,
    elapsed: Duration,
}

fn orbit(cfg: &RunConfig, periods: usize) -> Result<Orbit> {
    let start = Instant::now();
    let setup = cfg.build()?;
    let report = find_periodic(&setup.problem, &setup.initial, setup.step, setup.fixed_point)?;
    let mut ledger = DiagnosticsLedger::new(&setup.problem, &report.final_state, setup.ledger);
    let mut integ = Integrator::new(&setup.problem, setup.step)?;
    let mut state = report.final_state.clone();
    for _ in 0..periods {
        state = integ.simulate_period(&state, &mut ledger)?;
    }
    Ok(Orbit { setup, report, ledger, elapsed: start.elapsed() })
}

fn simulate(cfg: &RunConfig) -> Result<(Setup, DiagnosticsLedger)> {
    let setup = cfg.build()?;
    let mut ledger = DiagnosticsLedger::new(&setup.problem, &setup.initial, setup.ledger);
    let mut integ = Integrator::new(&setup.problem, setup.step)?;
    let mut state = setup.initial.clone();
    for _ in 0..cfg.run.periods {
        state = integ.simulate_period(&state, &mut ledger)?;
    }
    Ok((setup, ledger))
}

fn c1_oxygen_bounds(reference: &Orbit) -> Result<Outcome> {
    let g2_sup = reference.setup.problem.g2_sup();
    let rows = &reference.ledger.monitors;
    let c_min = rows.iter().map(|r| r.c_min).fold(f64::INFINITY, f64::min);
    let c_max = rows.iter().map(|r| r.c_max).fold(f64::NEG_INFINITY, f64::max);
    let secs = reference.elapsed.as_secs_f64();
    Ok(Outcome::all(vec![
        Outcome::at_least(c_min, -1e-8, format!("min c = {c_min:e}")),
        Outcome::at_most(c_max - g2_sup, 1e-8, format!("max c - sup g2 = {:e}", c_max - g2_sup)),
        Outcome::at_most(secs, 120.0, format!("orbit + 3 periods in {secs:.1} s")),
    ]))
}

fn c2_nonnegativity(reference: &Orbit) -> Result<Outcome> {
    // A second, harder case: strong chemotaxis from a concentrated start.
    let mut cfg = load_config("small");
    cfg.physics.chi = 1.0;
    cfg.run.periods = 1;
    cfg.initial.kind = chemostokes::config::InitialKind::Expressions;
    cfg.initial.n = Some("exp(-40*((x-0.3)^2 + (y-0.6)^2))".into());
    let (_, strong) = simulate(&cfg)?;
    let mut parts = Vec::new();
    for (label, ledger) in [("reference", &reference.ledger), ("strong chemotaxis", &strong)] {
        let neg = nonnegativity_check(ledger);
        let clip = clipped_mass_check(ledger, 1e-8);
        parts.push(Outcome::at_most(neg.value, neg.limit, format!("{label}: -min n / max n = {:e}", neg.value)));
        parts.push(Outcome::at_most(clip.value, clip.limit, format!("{label}: clipped/mass = {:e}", clip.value)));
    }
    Ok(Outcome::all(parts))
}

fn c3_mass_budget(reference: &Orbit) -> Result<Outcome> {
    let v = mass_budget_check(&reference.ledger, 1e-9);
    Ok(Outcome::at_most(v.value, 1e-9, format!("worst relative step residual, {}", v.detail)))
}

/// Oxygen equation alone (cells and flow frozen), evolved one period in the
/// direct Robin form and in the homogenized Neumann form.
fn c4_transform_equivalence() -> Result<Outcome> {
    let period = 0.02;
    let robin = RobinData::new(
        Expr::parse(&format!("2 + sin(2*pi*t/{period})"))?,
        Expr::parse(&format!("1.5 + 0.5*cos(2*pi*t/{period})"))?,
    );
    let mut hs = Vec::new();
    let mut diffs = Vec::new();
    for cells in [32usize, 64, 128] {
        let g = Arc::new(Grid::square(cells, 1.0)?);
        let h = 1.0 / cells as f64;
        let steps = (period / (0.5 * h * h)).ceil() as usize;
        let dt = period / steps as f64;
        let homog = build_homogenizers(&robin, &g, period)?;
        let n = ScalarField::from_fn(&g, |x| 0.5 + 0.2 * (PI * x[0]).cos() * (PI * x[1]).cos());
        // u = curl of 0.05 sin^2(pi x) sin^2(pi y)
        let u = VectorField::from_fn(&g, |axis, x| {
            let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
            let (dx, dy) = (PI * (2.0 * PI * x[0]).sin(), PI * (2.0 * PI * x[1]).sin());
            if axis == 0 {
                0.05 * sx * sx * dy
            } else {
                -0.05 * dx * sy * sy
            }
        });
        let c_tilde0 = ScalarField::from_fn(&g, |x| 0.5 + 0.3 * (PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
        let mut c_tilde = c_tilde0.clone();
        let mut c = homog.from_homogeneous(&c_tilde0, 0.0);
        for k in 0..steps {
            let t0 = k as f64 * dt;
            c_tilde = transformed_oxygen_step(&c_tilde, &n, &u, &homog.sample(&g, t0), None, dt)?;
            c = direct_robin_step(&c, &n, &u, &robin, t0 + dt, dt)?;
        }
        let c_h = homog.from_homogeneous(&c_tilde, period);
        hs.push(h);
        diffs.push(c_h.zip_map(&c, |a, b| a - b)?.l2_norm());
    }
    let order = fit_order(&hs, &diffs);
    Ok(Outcome::at_least(
        order,
        1.8,
        format!("L2 differences {:.3e} {:.3e} {:.3e} on 32/64/128", diffs[0], diffs[1], diffs[2]),
    ))
}

fn c5_divergence(reference: &Orbit) -> Result<Outcome> {
    let v = divergence_check(&reference.ledger);
    Ok(Outcome::at_most(
        v.value,
        1e-10,
        format!("max |div u| / max(1, |u|) over {} Stokes steps", reference.ledger.steps.len()),
    ))
}

fn c6_fixed_points(reference: &Orbit) -> Result<Outcome> {
    let mut parts = Vec::new();

    // (a) no cells: n = 0 and c = g2 = a2 / a1.
    let trivial = load_config("trivial_periodic").build()?;
    let r = find_periodic(&trivial.problem, &trivial.initial, trivial.step, trivial.fixed_point)?;
    let c = trivial.problem.homogenizers.from_homogeneous(&r.final_state.c_tilde, 0.0);
    let c_err = c.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let n_err = r.final_state.n.max_abs();
    parts.push(Outcome::at_most(
        r.final_residual(),
        1e-10,
        format!("(a) residual {:e} in {} iterations, |n| {n_err:e}, |c - g2| {c_err:e}", r.final_residual(), r.iterations),
    ));
    parts.push(Outcome::at_most(r.iterations as f64, 20.0, String::new()));
    parts.push(Outcome::at_most(n_err.max(c_err), 1e-8, String::new()));

    // (b) logistic: n = 1 and c solves the steady Robin-Helmholtz problem.
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    let mut n_dev = 0.0f64;
    // 16^2 leaves only four cells across the homogenizer cutoff layer and is
    // not yet asymptotic, so the ladder starts at 32^2.
    for cells in [32usize, 64, 128] {
        let mut cfg = load_config("logistic_periodic");
        cfg.grid.cells = chemostokes::config::PerAxis::All(cells);
        cfg.coefficients.a = "1".into();
        cfg.boundary = chemostokes::config::BoundarySection {
            mode: chemostokes::config::BoundaryMode::Robin,
            a1: Some("1".into()),
            a2: Some("1".into()),
            g1: None,
            g2: None,
        };
        let setup = cfg.build()?;
        let r = find_periodic(&setup.problem, &setup.initial, setup.step, setup.fixed_point)?;
        if !r.converged {
            return Ok(Outcome::at_most(r.final_residual(), cfg.fixed_point.tol_rel, format!("(b) {cells}^2 did not converge")));
        }
        let g = &setup.problem.grid;
        let c = setup.problem.homogenizers.from_homogeneous(&r.final_state.c_tilde, 0.0);
        let oracle = robin_helmholtz(g, 1.0, 1.0, 1.0);
        let diff: f64 = c.values().iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * g.cell_volume();
        hs.push(g.h()[0]);
        errs.push(diff.sqrt());
        n_dev = n_dev.max(r.final_state.n.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
    }
    let order = fit_order(&hs, &errs);
    parts.push(Outcome::at_least(
        order,
        1.8,
        format!("(b) |c - oracle| {:.3e} {:.3e} {:.3e} on 32/64/128, order {order:.3}, max |n - 1| {n_dev:e}", errs[0], errs[1], errs[2]),
    ));
    parts.push(Outcome::at_most(n_dev, 1e-8, String::new()));

    // (c) the weakly coupled reference orbit, re-simulated independently.
    let tol = reference.setup.fixed_point.tol_rel;
    let x = &reference.report.final_state;
    let mut integ = Integrator::new(&reference.setup.problem, reference.setup.step)?;
    let image = integ.poincare_map(x)?;
    let again = relative_residual(x, &image);
    parts.push(Outcome::at_most(
        reference.report.final_residual(),
        tol,
        format!("(c) residual {:e}, re-simulated {again:e}", reference.report.final_residual()),
    ));
    parts.push(Outcome::at_most(again, 2.0 * tol, String::new()));
    Ok(Outcome::all(parts))
}

fn c7_stationarity() -> Result<Outcome> {
    let mut parts = Vec::new();
    for m in [1.25, 2.0] {
        let mut cfg = load_config("small");
        cfg.grid.cells = chemostokes::config::PerAxis::All(32);
        cfg.physics.m = m;
        cfg.integrator.dt = 0.005;
        cfg.fixed_point.tol_rel = 1e-9;
        let o = orbit(&cfg, 3)?;
        let mut families = vec!["n_max", "grad_nm", "c_tilde_w1inf", "u_w1inf", "entropy"];
        if m < 2.0 {
            families.extend(["quartic", "nt_sq", "lap_nm_sq"]);
        }
        let table = stationarity(&o.ledger);
        let (name, worst) = table
            .iter()
            .filter(|(f, _)| families.contains(&f.as_str()))
            .fold((String::new(), 0.0f64), |acc, (f, v)| if *v > acc.1 { (f.clone(), *v) } else { acc });
        parts.push(Outcome::at_most(
            worst,
            1e-3,
            format!("m = {m}: worst {name} {worst:e} (orbit residual {:e})", o.report.final_residual()),
        ));
        parts.push(Outcome::at_most(o.report.final_residual(), 1e-9, String::new()));
    }
    Ok(Outcome::all(parts))
}

fn c8_moser(reference: &Orbit) -> Result<Outcome> {
    let m = reference.setup.problem.coeffs.m;
    let r0 = moser_ladder(m, 8)[0];
    let table = moser_escalation(&reference.ledger, m);
    Ok(Outcome::all(vec![
        Outcome::at_most((r0 - 10.0 / 3.0).abs(), 4.0 * f64::EPSILON * 10.0 / 3.0, format!("r0 = {r0}")),
        Outcome::at_most(
            table.top_gap,
            0.05,
            format!(
                "sup L^{:.4} = {:.6}, sup Linf = {:.6}",
                table.exponents[8], table.suprema[8], table.linf_sup
            ),
        ),
    ]))
}

fn c9_mms() -> Result<Outcome> {
    let start = Instant::now();
    let mut parts = Vec::new();
    for case in ManufacturedCase::standard() {
        let table = run_convergence(&case, &case.ladder)?;
        let order = table.judged_order();
        parts.push(Outcome {
            passed: table.passed,
            value: order,
            limit: f64::NAN,
            detail: format!("{} {} order {order:.3} (needs {})", case.name, table.judged_field, table.criterion),
        });
    }
    let secs = start.elapsed().as_secs_f64();
    parts.push(Outcome::at_most(secs, 600.0, format!("{secs:.1} s")));
    Ok(Outcome::all(parts))
}

fn c10_regularized() -> Result<Outcome> {
    let (_, ledger) = simulate(&load_config("regularized"))?;
    let rec = penalty_recovery_check(&ledger, 1e-6);
    let fin = finiteness_check(&ledger);
    Ok(Outcome::all(vec![
        Outcome::at_least(rec.value, -1e-6, format!("min n after one period {:e} ({})", rec.value, rec.detail)),
        Outcome { passed: fin.passed, value: fin.value, limit: 0.0, detail: "monitors finite".into() },
    ]))
}

fn print_line(id: usize, name: &str, result: &Result<Outcome>, elapsed: Duration) -> bool {
    let secs = elapsed.as_secs_f64();
    match result {
        Ok(o) => {
            println!(
                "{} criterion {id:>2} {name}: value={:e} limit={:e} [{}] ({secs:.1} s)",
                if o.passed { "PASS" } else { "FAIL" },
                o.value,
                o.limit,
                o.detail
            );
            o.passed
        }
        Err(e) => {
            println!("FAIL criterion {id:>2} {name}: error: {e} ({secs:.1} s)");
            false
        }
    }
}

fn main() {
    let start = Instant::now();
    let reference = orbit(&load_config("reference"), 3);
    let reference_time = start.elapsed();
    let mut all = true;
    let mut run = |id: usize, name: &str, f: &dyn Fn(Option<&Orbit>) -> Result<Outcome>| {
        let t = Instant::now();
        let result = f(reference.as_ref().ok());
        let elapsed = t.elapsed() + if id == 1 { reference_time } else { Duration::ZERO };
        all &= print_line(id, name, &result, elapsed);
    };
    let on_reference = |f: fn(&Orbit) -> Result<Outcome>| {
        let reference = &reference;
        move |r: Option<&Orbit>| match r {
            Some(r) => f(r),
            None => Err(chemostokes::Error::InvalidParameter(format!(
                "reference orbit failed: {}",
                reference.as_ref().err().map_or(String::new(), |e| e.to_string())
            ))),
        }
    };
    run(1, "oxygen maximum principle", &on_reference(c1_oxygen_bounds));
    run(2, "cell nonnegativity", &on_reference(c2_nonnegativity));
    run(3, "mass budget", &on_reference(c3_mass_budget));
    run(4, "transform equivalence", &|_| c4_transform_equivalence());
    run(5, "divergence-free flow", &on_reference(c5_divergence));
    run(6, "periodic fixed points", &on_reference(c6_fixed_points));
    run(7, "boundedness ladder", &|_| c7_stationarity());
    run(8, "moser escalation", &on_reference(c8_moser));
    run(9, "manufactured solutions", &|_| c9_mms());
    run(10, "regularized mode", &|_| c10_regularized());
    println!("acceptance: {} ({:.1} s)", if all { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    if !all {
        std::process::exit(1);
    }
}
