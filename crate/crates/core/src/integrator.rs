//! The coupled IMEX step and the period map.
//!
//! One step updates the fluid first, then the transformed oxygen, then the
//! cells, so the cell drift sees the freshest oxygen field. Diffusion is
//! implicit; advection, drift and reactions are explicit. When the explicit
//! part would break positivity the step is split into 2, 4, ... substeps.

use std::sync::Arc;

use crate::coeffs::{
    validate_homogenizers, CoefficientSample, Coefficients, HomogenizerSample, Homogenizers, RobinData,
};
use crate::diffusion::{FaceCoefficients, ImplicitSystem, Regularization};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, State, VectorField};
use crate::stokes::StokesSolver;
use crate::transport::{
    boundary_outflux, chemo_drift, flux_divergence, outflow_rates, reactions_n, rhs_c, upwind_fluxes, DriftField,
};

/// Extra forcing added to each equation, used by manufactured solutions.
pub trait SourceTerms: Send + Sync {
    fn n_source(&self, x: [f64; 3], t: f64) -> f64;
    fn c_source(&self, x: [f64; 3], t: f64) -> f64;
    /// Forcing of velocity component `axis` at face point `x`.
    fn u_source(&self, axis: usize, x: [f64; 3], t: f64) -> f64;
}

/// Everything that defines the equations, independent of the time step.
#[derive(Clone)]
pub struct Problem {
    pub grid: Arc<Grid>,
    pub coeffs: Coefficients,
    /// `None` for problems posed directly on `c~` (zero-flux oxygen).
    pub robin: Option<RobinData>,
    pub homogenizers: Homogenizers,
    pub regularization: Regularization,
    pub sources: Option<Arc<dyn SourceTerms>>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("grid", &self.grid)
            .field("coeffs", &self.coeffs)
            .field("robin", &self.robin)
            .field("regularization", &self.regularization)
            .field("sources", &self.sources.is_some())
            .finish()
    }
}

/// Tolerance on the sampled homogenizer boundary conditions.
pub const HOMOGENIZER_TOL: f64 = 1e-8;

impl Problem {
    /// Checks the coefficient hypotheses, the Robin signs and that the
    /// homogenizers satisfy the boundary relations.
    pub fn new(
        grid: Arc<Grid>,
        coeffs: Coefficients,
        robin: RobinData,
        homogenizers: Homogenizers,
        regularization: Regularization,
    ) -> Result<Self> {
        coeffs.check_hypotheses(&grid)?;
        robin.validate(&grid, coeffs.period)?;
        regularization.validate(coeffs.m)?;
        let report = validate_homogenizers(&homogenizers, &robin, &grid, coeffs.period, HOMOGENIZER_TOL);
        if !report.passed {
            return Err(Error::InvalidParameter(format!(
                "homogenizers violate the boundary relations by {:e}",
                report.max_violation()
            )));
        }
        Ok(Problem {
            grid,
            coeffs,
            robin: Some(robin),
            homogenizers,
            regularization,
            sources: None,
        })
    }

    /// A problem posed on `c~` with zero-flux walls and `g1 = g2 = 0`.
    pub fn zero_flux(grid: Arc<Grid>, coeffs: Coefficients, regularization: Regularization) -> Result<Self> {
        coeffs.check_hypotheses(&grid)?;
        regularization.validate(coeffs.m)?;
        let dim = grid.dim();
        Ok(Problem {
            grid,
            coeffs,
            robin: None,
            homogenizers: Homogenizers::zero(dim),
            regularization,
            sources: None,
        })
    }

    pub fn with_sources(mut self, sources: Arc<dyn SourceTerms>) -> Self {
        self.sources = Some(sources);
        self
    }

    pub fn period(&self) -> f64 {
        self.coeffs.period
    }

    /// `sup g2` over the grid samples and one period.
    pub fn g2_sup(&self) -> f64 {
        self.homogenizers.g2_sup(&self.grid, self.period())
    }

    fn time_independent(&self) -> bool {
        self.coeffs.is_time_independent() && self.homogenizers.is_time_independent() && self.sources.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    /// Requested step; rounded down so the period is a whole number of steps.
    pub dt: f64,
    /// Bound on the per-cell positivity number of the explicit cell update.
    pub cfl_target: f64,
    /// Largest number of substeps per step.
    pub max_substeps: usize,
    pub clip_negative: bool,
}

impl StepConfig {
    /// Clipping is on unless the regularization penalties are active.
    pub fn new(dt: f64, reg: &Regularization) -> Self {
        StepConfig {
            dt,
            cfl_target: 0.9,
            max_substeps: 64,
            clip_negative: !reg.penalties_active(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.cfl_target > 0.0 && self.cfl_target <= 1.0) {
            return Err(Error::InvalidParameter(format!("cfl target must lie in (0, 1], got {}", self.cfl_target)));
        }
        if self.max_substeps == 0 {
            return Err(Error::InvalidParameter("max_substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bookkeeping of one (sub)step of the cell equation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepFluxes {
    /// Net cell flux leaving through the walls (per unit time).
    pub boundary_outflux: f64,
    /// `sum (reactions) vol`, including any manufactured source.
    pub reaction_integral: f64,
    /// Mass added by clipping negative cell densities.
    pub clipped_mass: f64,
    /// Largest per-cell positivity number of the explicit cell update.
    pub positivity_number: f64,
    /// Substeps the enclosing step was split into.
    pub substeps: usize,
    /// Largest divergence of the velocity after the Stokes step.
    pub divergence: f64,
    /// Smallest cell density before clipping.
    pub min_before_clip: f64,
}

/// What a hook sees after each (sub)step.
pub struct StepContext<'a> {
    pub problem: &'a Problem,
    pub before: &'a State,
    pub after: &'a State,
    pub fluxes: &'a StepFluxes,
    pub dt: f64,
    /// Running count of substeps taken by this integrator.
    pub step: usize,
    /// Phase in `[0, T)` at which coefficients were evaluated.
    pub phase_before: f64,
    pub phase_after: f64,
}

pub trait StepHook {
    fn on_step(&mut self, ctx: &StepContext<'_>) -> Result<()>;
}

impl<F: FnMut(&StepContext<'_>) -> Result<()>> StepHook for F {
    fn on_step(&mut self, ctx: &StepContext<'_>) -> Result<()> {
        self(ctx)
    }
}

/// A hook that does nothing.
pub fn no_hook() -> impl StepHook {
    |_: &StepContext<'_>| Ok(())
}

struct Sampled {
    coeffs: CoefficientSample,
    homog: HomogenizerSample,
}

/// Owns the Stokes workspace and the per-period step count.
pub struct Integrator<'p> {
    problem: &'p Problem,
    cfg: StepConfig,
    stokes: StokesSolver,
    steps_per_period: usize,
    dt: f64,
    cache: Option<Arc<Sampled>>,
    steps_taken: usize,
}

impl<'p> Integrator<'p> {
    pub fn new(problem: &'p Problem, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        let period = problem.period();
        let steps_per_period = ((period / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
        Ok(Integrator {
            problem,
            cfg,
            stokes: StokesSolver::new(&problem.grid),
            steps_per_period,
            dt: period / steps_per_period as f64,
            cache: None,
            steps_taken: 0,
        })
    }

    /// The step actually used (`T / steps_per_period`).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    fn sample(&mut self, t: f64) -> Arc<Sampled> {
        if let Some(c) = &self.cache {
            return c.clone();
        }
        let p = self.problem;
        let s = Arc::new(Sampled {
            coeffs: p.coeffs.sample(&p.grid, t),
            homog: p.homogenizers.sample(&p.grid, t),
        });
        if p.time_independent() {
            self.cache = Some(s.clone());
        }
        s
    }

    /// Step index and phase for a state time that is a multiple of `dt`.
    fn phase_of(&self, t: f64) -> (usize, f64) {
        let k = (t / self.dt).round();
        if (t / self.dt - k).abs() < 1e-6 && k >= 0.0 {
            let k = k as usize;
            (k, (k % self.steps_per_period) as f64 * self.dt)
        } else {
            let period = self.problem.period();
            ((t / self.dt).floor() as usize, t - (t / period).floor() * period)
        }
    }

    /// Advances by one step `dt`, splitting into substeps when needed.
    pub fn step(&mut self, state: &State, hook: &mut dyn StepHook) -> Result<State> {
        state.check_finite()?;
        let (k, phase) = self.phase_of(state.t);
        let mut substeps = 1;
        loop {
            match self.try_step(state, k, phase, substeps) {
                Ok(records) => {
                    let last = records.last().map(|r| r.1.clone()).expect("at least one substep");
                    let mut before = state.clone();
                    for (i, (fluxes, after)) in records.iter().enumerate() {
                        let dt_s = self.dt / substeps as f64;
                        let ctx = StepContext {
                            problem: self.problem,
                            before: &before,
                            after,
                            fluxes,
                            dt: dt_s,
                            step: self.steps_taken,
                            phase_before: phase + i as f64 * dt_s,
                            phase_after: phase + (i + 1) as f64 * dt_s,
                        };
                        hook.on_step(&ctx)?;
                        self.steps_taken += 1;
                        before = after.clone();
                    }
                    return Ok(last);
                }
                Err(Error::CflViolation { cfl, limit }) => {
                    substeps *= 2;
                    if substeps > self.cfg.max_substeps {
                        return Err(Error::CflViolation { cfl, limit });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn try_step(&mut self, state: &State, k: usize, phase: f64, substeps: usize) -> Result<Vec<(StepFluxes, State)>> {
        let dt_s = self.dt / substeps as f64;
        let mut cur = state.clone();
        let mut out = Vec::with_capacity(substeps);
        for j in 0..substeps {
            let t0 = phase + j as f64 * dt_s;
            let (mut next, mut fluxes) = self.substep(&cur, t0, dt_s)?;
            fluxes.substeps = substeps;
            let aligned = (state.t / self.dt - k as f64).abs() < 1e-6;
            next.t = if aligned && j + 1 == substeps {
                (k + 1) as f64 * self.dt
            } else {
                state.t + (j + 1) as f64 * dt_s
            };
            next.check_finite()?;
            out.push((fluxes, next.clone()));
            cur = next;
        }
        Ok(out)
    }

    fn substep(&mut self, s: &State, t0: f64, dt: f64) -> Result<(State, StepFluxes)> {
        let p = self.problem;
        let g = p.grid.clone();
        let sampled = self.sample(t0);
        let reg = &p.regularization;
        let mut fluxes = StepFluxes::default();

        // (1) fluid
        let mut force = self.stokes.body_force(&s.n, &sampled.coeffs.phi);
        if let Some(src) = &p.sources {
            for d in 0..g.dim() {
                let comp = force.component_mut(d);
                for (idx, f) in comp.iter_mut().enumerate() {
                    if !g.is_boundary_face(d, idx) {
                        *f += src.u_source(d, g.face_center(d, idx), t0);
                    }
                }
            }
        }
        let (u, _) = self.stokes.step_with_force(&s.u, &force, dt)?;
        fluxes.divergence = crate::grid::divergence(&u).max_abs();

        // (2) transformed oxygen
        let n_for_c = if reg.penalties_active() { s.n.map(|v| v.max(0.0)) } else { s.n.clone() };
        let extra: Option<Vec<f64>> = p.sources.as_ref().map(|src| (0..g.cell_count()).map(|i| src.c_source(g.cell_center(i), t0)).collect());
        let c_tilde = transformed_oxygen_step(&s.c_tilde, &n_for_c, &u, &sampled.homog, extra.as_deref(), dt)?;

        // (3) cells
        let drift = chemo_drift(&c_tilde, &sampled.homog, p.coeffs.chi);
        let uface = DriftField::from_velocity(&u);
        let rates = outflow_rates(&g, &[&uface, &drift]);
        let mu = p.coeffs.mu;
        let mut positivity: f64 = 0.0;
        let mut logistic: f64 = 0.0;
        for (i, r) in rates.iter().enumerate() {
            let n = s.n.values()[i];
            positivity = positivity.max(dt * (r + mu * (n - sampled.coeffs.a[i]).max(0.0)));
            logistic = logistic.max(dt * mu * n);
        }
        fluxes.positivity_number = positivity;
        if positivity > self.cfg.cfl_target {
            return Err(Error::CflViolation { cfl: positivity, limit: self.cfg.cfl_target });
        }
        if logistic > 0.5 {
            return Err(Error::CflViolation { cfl: logistic, limit: 0.5 });
        }
        let mut face_flux = upwind_fluxes(&s.n, &uface, false);
        let drift_flux = upwind_fluxes(&s.n, &drift, reg.penalties_active());
        for (a, b) in face_flux.iter_mut().zip(&drift_flux) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        fluxes.boundary_outflux = boundary_outflux(&g, &face_flux);
        let transport = flux_divergence(&g, &face_flux);
        let mut react = reactions_n(&s.n, &sampled.coeffs, mu, reg);
        if let Some(src) = &p.sources {
            for (i, v) in react.values_mut().iter_mut().enumerate() {
                *v += src.n_source(g.cell_center(i), t0);
            }
        }
        fluxes.reaction_integral = react.integral();
        let mut n_star = s.n.clone();
        for (i, v) in n_star.values_mut().iter_mut().enumerate() {
            *v += dt * (transport.values()[i] + react.values()[i]);
        }
        let mobility = FaceCoefficients::porous_medium(&n_star, p.coeffs.m, reg.eps);
        let n_sys = ImplicitSystem {
            coefficients: &mobility,
            dt,
            delta: reg.delta,
            extra_diag: None,
            rtol: crate::diffusion::SOLVE_RTOL,
        };
        let (mut n, _) = n_sys.solve(&n_star, "cell diffusion")?;
        fluxes.min_before_clip = n.min();

        // (4) clipping
        if self.cfg.clip_negative {
            let vol = g.cell_volume();
            let mut added = 0.0;
            for v in n.values_mut() {
                if *v < 0.0 {
                    added -= *v * vol;
                    *v = 0.0;
                }
            }
            fluxes.clipped_mass = added;
        }
        Ok((State { n, c_tilde, u, t: s.t + dt }, fluxes))
    }

    /// Advances by exactly one period.
    pub fn simulate_period(&mut self, state: &State, hook: &mut dyn StepHook) -> Result<State> {
        self.simulate_steps(state, self.steps_per_period, hook)
    }

    pub fn simulate_steps(&mut self, state: &State, steps: usize, hook: &mut dyn StepHook) -> Result<State> {
        let mut cur = state.clone();
        for _ in 0..steps {
            cur = self.step(&cur, hook)?;
        }
        Ok(cur)
    }

    /// Advances by one period and resets the clock modulo `T`.
    pub fn poincare_map(&mut self, state: &State) -> Result<State> {
        let mut out = self.simulate_period(state, &mut no_hook())?;
        let period = self.problem.period();
        out.t = state.t - (state.t / period).floor() * period;
        Ok(out)
    }
}

/// One step of the transformed oxygen equation with `n` and `u` given:
/// explicit transport and reaction, then implicit unit diffusion with zero
/// wall flux. `source` is an optional extra per-cell forcing.
pub fn transformed_oxygen_step(
    c_tilde: &ScalarField,
    n: &ScalarField,
    u: &VectorField,
    homog: &HomogenizerSample,
    source: Option<&[f64]>,
    dt: f64,
) -> Result<ScalarField> {
    let rhs = rhs_c(c_tilde, n, u, homog);
    let mut c_star = c_tilde.clone();
    for (i, v) in c_star.values_mut().iter_mut().enumerate() {
        *v += dt * (rhs.values()[i] + source.map_or(0.0, |s| s[i]));
    }
    let unit = FaceCoefficients::unit(c_tilde.grid());
    let sys = ImplicitSystem { coefficients: &unit, dt, delta: 0.0, extra_diag: None, rtol: crate::diffusion::SOLVE_RTOL };
    Ok(sys.solve(&c_star, "oxygen diffusion")?.0)
}

/// One step of the coupled system with a fresh integrator.
pub fn step(state: &State, problem: &Problem, cfg: StepConfig) -> Result<State> {
    Integrator::new(problem, cfg)?.step(state, &mut no_hook())
}

/// Advances `state` by exactly one period, invoking `hook` after every substep.
pub fn simulate_period(state: &State, problem: &Problem, cfg: StepConfig, hook: &mut dyn StepHook) -> Result<State> {
    Integrator::new(problem, cfg)?.simulate_period(state, hook)
}

/// Zero velocity, `c~ = 0`, and `n = max(mean of a at t = 0, 0)`.
pub fn default_initial_state(problem: &Problem) -> State {
    let g = &problem.grid;
    let a = problem.coeffs.sample(g, 0.0).a;
    let mean = (a.iter().sum::<f64>() / a.len() as f64).max(0.0);
    State {
        n: ScalarField::constant(g, mean),
        c_tilde: ScalarField::zeros(g),
        u: VectorField::zeros(g),
        t: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::build_homogenizers;
    use crate::expr::Expr;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn problem(a: &str, g: &str, phi: &str, chi: f64, mu: f64) -> Problem {
        let grid = Arc::new(Grid::square(12, 1.0).unwrap());
        let coeffs = Coefficients::new(e(a), e(g), e(phi), chi, mu, 2.0, 1.0).unwrap();
        let robin = RobinData::new(e("1"), e("1"));
        let h = build_homogenizers(&robin, &grid, 1.0).unwrap();
        Problem::new(grid, coeffs, robin, h, Regularization::off()).unwrap()
    }

    #[test]
    fn zero_state_is_fixed_for_homogeneous_data() {
        let grid = Arc::new(Grid::square(8, 1.0).unwrap());
        let coeffs = Coefficients::new(e("0"), e("0"), e("-y"), 0.3, 1.0, 2.0, 1.0).unwrap();
        let p = Problem::zero_flux(grid.clone(), coeffs, Regularization::off()).unwrap();
        let s0 = State::zeros(&grid);
        let s1 = step(&s0, &p, StepConfig::new(0.05, &p.regularization)).unwrap();
        assert_eq!(s1.n, s0.n);
        assert_eq!(s1.c_tilde, s0.c_tilde);
        assert_eq!(s1.u, s0.u);
    }

    #[test]
    fn uniform_logistic_equilibrium_persists() {
        let p = problem("1", "0", "0.3", 0.0, 1.0);
        let mut s = State::zeros(&p.grid);
        s.n = ScalarField::constant(&p.grid, 1.0);
        let mut it = Integrator::new(&p, StepConfig::new(0.05, &p.regularization)).unwrap();
        for _ in 0..5 {
            s = it.step(&s, &mut no_hook()).unwrap();
            assert!(s.n.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn dt_is_rounded_down_to_divide_the_period() {
        let p = problem("1", "0", "0", 0.0, 1.0);
        let it = Integrator::new(&p, StepConfig::new(0.03, &p.regularization)).unwrap();
        assert_eq!(it.steps_per_period(), 34);
        assert!(it.dt() <= 0.03);
    }

    #[test]
    fn two_periods_equal_one_double_run() {
        let p = problem("1 + 0.2*cos(pi*x)", "0.1", "-y", 0.2, 1.0);
        let cfg = StepConfig::new(0.1, &p.regularization);
        let s0 = default_initial_state(&p);
        let mut it = Integrator::new(&p, cfg).unwrap();
        let a = it.simulate_period(&s0, &mut no_hook()).unwrap();
        let a = it.simulate_period(&a, &mut no_hook()).unwrap();
        let mut it2 = Integrator::new(&p, cfg).unwrap();
        let b = it2.simulate_steps(&s0, 2 * it2.steps_per_period(), &mut no_hook()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hooks_see_every_substep() {
        let p = problem("1", "0", "-y", 0.1, 1.0);
        let mut count = 0;
        let mut hook = |ctx: &StepContext<'_>| {
            count += 1;
            assert!(ctx.after.t > ctx.before.t);
            Ok(())
        };
        simulate_period(&default_initial_state(&p), &p, StepConfig::new(0.25, &p.regularization), &mut hook).unwrap();
        assert!(count >= 4);
    }

    #[test]
    fn rejects_invalid_homogenizers() {
        let grid = Arc::new(Grid::square(8, 1.0).unwrap());
        let coeffs = Coefficients::new(e("1"), e("0"), e("0"), 0.1, 1.0, 2.0, 1.0).unwrap();
        let robin = RobinData::new(e("1"), e("1"));
        let wrong = Homogenizers::analytic(e("0"), e("1"), 2);
        assert!(Problem::new(grid, coeffs, robin, wrong, Regularization::off()).is_err());
    }
}
