//! Manufactured-solution convergence studies.
//!
//! Each case fixes a closed-form solution, derives the forcing that makes it
//! exact (symbolically, through [`Expr::diff`]), runs the discretisation on
//! a ladder of grids and fits the observed order by least squares.
//!
//! * `heat`: backward-Euler Neumann heat equation, `dt ~ h^2`, expected 2.
//! * `advection`: explicit upwind transport by a divergence-free flow,
//!   `dt ~ h`, expected 1.
//! * `coupled`: the full cell/oxygen/fluid step with `m = 2`, `dt ~ h`,
//!   expected at least 1.
//! * `periodic`: the coupled case solved as a fixed point of the period map;
//!   the converged orbit is compared with the exact periodic solution.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coeffs::Coefficients;
use crate::diffusion::{implicit_diffuse_c, Regularization};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::grid::{Grid, ScalarField, State, VectorField};
use crate::integrator::{no_hook, Integrator, Problem, SourceTerms, StepConfig};
use crate::periodic::{find_periodic, FixedPointConfig};
use crate::transport::{flux_divergence, upwind_fluxes, DriftField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Heat,
    Advection,
    Coupled,
    Periodic,
}

/// How the fitted order is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderCriterion {
    /// `|order - expected| <= tolerance`.
    Within { expected: f64, tolerance: f64 },
    /// `order >= minimum`.
    AtLeast { minimum: f64 },
}

impl OrderCriterion {
    pub fn accepts(&self, order: f64) -> bool {
        match *self {
            OrderCriterion::Within { expected, tolerance } => (order - expected).abs() <= tolerance,
            OrderCriterion::AtLeast { minimum } => order >= minimum,
        }
    }
}

impl std::fmt::Display for OrderCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderCriterion::Within { expected, tolerance } => write!(f, "{expected} +- {tolerance}"),
            OrderCriterion::AtLeast { minimum } => write!(f, ">= {minimum}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub kind: CaseKind,
    /// Cells per axis on the unit square, each twice the previous.
    pub ladder: Vec<usize>,
    pub criterion: OrderCriterion,
    /// Field whose L2 order carries the verdict (`state` stacks all fields).
    pub judged_field: &'static str,
}

impl ManufacturedCase {
    pub fn heat() -> Self {
        ManufacturedCase {
            name: "heat",
            kind: CaseKind::Heat,
            ladder: vec![16, 32, 64],
            criterion: OrderCriterion::Within { expected: 2.0, tolerance: 0.2 },
            judged_field: "q",
        }
    }

    pub fn advection() -> Self {
        ManufacturedCase {
            name: "advection",
            kind: CaseKind::Advection,
            ladder: vec![32, 64, 128],
            criterion: OrderCriterion::Within { expected: 1.0, tolerance: 0.2 },
            judged_field: "q",
        }
    }

    pub fn coupled() -> Self {
        ManufacturedCase {
            name: "coupled",
            kind: CaseKind::Coupled,
            ladder: vec![16, 32, 64],
            criterion: OrderCriterion::AtLeast { minimum: 1.0 },
            judged_field: "state",
        }
    }

    pub fn periodic() -> Self {
        ManufacturedCase {
            name: "periodic",
            kind: CaseKind::Periodic,
            ladder: vec![8, 16, 32],
            criterion: OrderCriterion::AtLeast { minimum: 0.8 },
            judged_field: "state",
        }
    }

    /// The three cases of the standard harness.
    pub fn standard() -> Vec<Self> {
        vec![ManufacturedCase::heat(), ManufacturedCase::advection(), ManufacturedCase::coupled()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "heat" => Some(ManufacturedCase::heat()),
            "advection" => Some(ManufacturedCase::advection()),
            "coupled" => Some(ManufacturedCase::coupled()),
            "periodic" => Some(ManufacturedCase::periodic()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: &'static str,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub errors: Vec<FieldError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderTable {
    pub case: &'static str,
    pub rows: Vec<ConvergenceRow>,
    /// `(field, L2 order, Linf order)`.
    pub orders: Vec<(&'static str, f64, f64)>,
    pub criterion: OrderCriterion,
    pub judged_field: &'static str,
    pub passed: bool,
}

impl OrderTable {
    pub fn order_of(&self, field: &str) -> Option<(f64, f64)> {
        self.orders.iter().find(|o| o.0 == field).map(|o| (o.1, o.2))
    }

    pub fn judged_order(&self) -> f64 {
        self.order_of(self.judged_field).map_or(f64::NAN, |o| o.0)
    }
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fit_order(hs: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hs.iter().zip(errs).map(|(h, e)| (h.ln(), e.max(1e-300).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn run_convergence(case: &ManufacturedCase, ladder: &[usize]) -> Result<OrderTable> {
    if ladder.len() < 3 || ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidParameter(format!(
            "ladder must hold at least 3 grids with ratio 2, got {ladder:?}"
        )));
    }
    let rows = ladder
        .iter()
        .map(|&cells| match case.kind {
            CaseKind::Heat => run_heat(cells),
            CaseKind::Advection => run_advection(cells),
            CaseKind::Coupled => run_coupled(cells),
            CaseKind::Periodic => run_periodic(cells),
        })
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let orders: Vec<(&'static str, f64, f64)> = rows[0]
        .errors
        .iter()
        .enumerate()
        .map(|(i, fe)| {
            let l2: Vec<f64> = rows.iter().map(|r| r.errors[i].l2).collect();
            let li: Vec<f64> = rows.iter().map(|r| r.errors[i].linf).collect();
            (fe.field, fit_order(&hs, &l2), fit_order(&hs, &li))
        })
        .collect();
    let judged = orders.iter().find(|o| o.0 == case.judged_field).map_or(f64::NAN, |o| o.1);
    Ok(OrderTable {
        case: case.name,
        passed: case.criterion.accepts(judged),
        rows,
        orders,
        criterion: case.criterion,
        judged_field: case.judged_field,
    })
}

fn cell_errors(field: &'static str, num: &ScalarField, exact: impl Fn([f64; 3]) -> f64) -> FieldError {
    let g = num.grid();
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for (c, v) in num.values().iter().enumerate() {
        let e = (v - exact(g.cell_center(c))).abs();
        l2 += e * e;
        linf = linf.max(e);
    }
    FieldError { field, l2: (l2 * g.cell_volume()).sqrt(), linf }
}

fn face_errors(field: &'static str, num: &VectorField, exact: impl Fn(usize, [f64; 3]) -> f64) -> FieldError {
    let g = num.grid();
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for d in 0..g.dim() {
        for (idx, v) in num.component(d).iter().enumerate() {
            if g.is_boundary_face(d, idx) {
                continue;
            }
            let e = (v - exact(d, g.face_center(d, idx))).abs();
            l2 += e * e;
            linf = linf.max(e);
        }
    }
    FieldError { field, l2: (l2 * g.cell_volume()).sqrt(), linf }
}

fn unit_square(cells: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::square(cells, 1.0)?))
}

fn parse(s: &str) -> Expr {
    Expr::parse(s).expect("built-in expression parses")
}

/// Heat equation `q_t = Lap q + f` with zero-flux walls.
fn run_heat(cells: usize) -> Result<ConvergenceRow> {
    let q = parse("1 + 0.5*cos(pi*x)*cos(2*pi*y)*cos(3*t)");
    let f = q.diff(Var::T) - q.laplacian(2);
    let g = unit_square(cells)?;
    let h = g.h()[0];
    let t_end = 0.1;
    let steps = (t_end / (h * h)).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut cur = ScalarField::from_fn(&g, |x| q.eval(x, 0.0));
    for k in 0..steps {
        let t1 = (k + 1) as f64 * dt;
        let mut rhs = cur.clone();
        for (c, v) in rhs.values_mut().iter_mut().enumerate() {
            *v += dt * f.eval(g.cell_center(c), t1);
        }
        cur = implicit_diffuse_c(&rhs, dt)?;
    }
    Ok(ConvergenceRow {
        cells,
        h,
        dt,
        steps,
        errors: vec![cell_errors("q", &cur, |x| q.eval(x, t_end))],
    })
}

/// Stream function shared by the flow of the transport and coupled cases;
/// it and its gradient vanish on the walls of the unit square.
fn stream_function(amplitude: f64, time_factor: &str) -> Expr {
    parse(&format!("{amplitude}*sin(pi*x)^2*sin(pi*y)^2*({time_factor})"))
}

/// Face velocity from differences of the stream function at face ends,
/// discretely divergence-free.
fn discrete_curl(g: &Arc<Grid>, psi: &Expr, t: f64) -> VectorField {
    let h = g.h();
    VectorField::from_fn(g, |axis, x| {
        let at = |dx: f64, dy: f64| psi.eval([x[0] + dx, x[1] + dy, 0.0], t);
        match axis {
            0 => (at(0.0, h[1] / 2.0) - at(0.0, -h[1] / 2.0)) / h[1],
            _ => -(at(h[0] / 2.0, 0.0) - at(-h[0] / 2.0, 0.0)) / h[0],
        }
    })
}

/// `q_t + div(q u) = f`, explicit upwind, steady flow.
fn run_advection(cells: usize) -> Result<ConvergenceRow> {
    let psi = stream_function(1.0 / PI, "1");
    let (ux, uy) = (psi.diff(Var::Y), Expr::constant(0.0) - psi.diff(Var::X));
    let q = parse("1 + 0.5*sin(2*pi*x + t)*cos(pi*y)");
    let f = q.diff(Var::T) + (q.clone() * ux).diff(Var::X) + (q.clone() * uy).diff(Var::Y);
    let g = unit_square(cells)?;
    let h = g.h()[0];
    let u = discrete_curl(&g, &psi, 0.0);
    let v = DriftField::from_velocity(&u);
    let t_end = 0.25;
    let umax = u.max_abs().max(1e-12);
    let steps = (t_end / (0.5 * h / umax)).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut cur = ScalarField::from_fn(&g, |x| q.eval(x, 0.0));
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let div = flux_divergence(&g, &upwind_fluxes(&cur, &v, false));
        for (c, val) in cur.values_mut().iter_mut().enumerate() {
            *val += dt * (div.values()[c] + f.eval(g.cell_center(c), t0));
        }
    }
    Ok(ConvergenceRow {
        cells,
        h,
        dt,
        steps,
        errors: vec![cell_errors("q", &cur, |x| q.eval(x, t_end))],
    })
}

/// Exact solution and forcing of the coupled case (zero-flux oxygen,
/// `g1 = g2 = 0`, zero pressure).
pub struct CoupledSolution {
    pub n: Expr,
    pub c: Expr,
    pub psi: Expr,
    pub u: [Expr; 2],
    pub forcing_n: Expr,
    pub forcing_c: Expr,
    pub forcing_u: [Expr; 2],
    pub coefficients: Coefficients,
}

impl CoupledSolution {
    pub fn new() -> Self {
        let (chi, mu, m) = (0.5, 1.0, 2.0);
        let coefficients =
            Coefficients::new(parse("1"), parse("0"), parse("x + 0.5*y"), chi, mu, m, 1.0).expect("valid coefficients");
        let n = parse("1 + 0.3*cos(pi*x)*cos(pi*y)*cos(2*pi*t)");
        let c = parse("0.5 + 0.25*cos(pi*x)*cos(2*pi*y)*(1 + 0.5*sin(2*pi*t))");
        let psi = stream_function(0.2, "cos(2*pi*t)");
        let u = [psi.diff(Var::Y), Expr::constant(0.0) - psi.diff(Var::X)];
        let flux = |axis: Var, vel: &Expr| n.clone() * (vel.clone() + Expr::constant(chi) * c.diff(axis));
        let forcing_n = n.diff(Var::T) + flux(Var::X, &u[0]).diff(Var::X) + flux(Var::Y, &u[1]).diff(Var::Y)
            - n.clone().powf(m).laplacian(2)
            - Expr::constant(mu) * n.clone() * (Expr::constant(1.0) - n.clone());
        let forcing_c = c.diff(Var::T) - c.laplacian(2)
            + u[0].clone() * c.diff(Var::X)
            + u[1].clone() * c.diff(Var::Y)
            + n.clone() * c.clone();
        // u_t - Lap u - n grad(phi) with grad(phi) = (1, 0.5)
        let forcing_u = [
            u[0].diff(Var::T) - u[0].laplacian(2) - n.clone(),
            u[1].diff(Var::T) - u[1].laplacian(2) - Expr::constant(0.5) * n.clone(),
        ];
        CoupledSolution { n, c, psi, u, forcing_n, forcing_c, forcing_u, coefficients }
    }

    pub fn problem(self: &Arc<Self>, grid: Arc<Grid>) -> Result<Problem> {
        let p = Problem::zero_flux(grid, self.coefficients.clone(), Regularization::off())?;
        Ok(p.with_sources(self.clone()))
    }

    pub fn exact_state(&self, grid: &Arc<Grid>, t: f64) -> State {
        State {
            n: ScalarField::from_fn(grid, |x| self.n.eval(x, t)),
            c_tilde: ScalarField::from_fn(grid, |x| self.c.eval(x, t)),
            u: discrete_curl(grid, &self.psi, t),
            t,
        }
    }

    /// Per-field errors followed by the stacked `(n, c, u)` state error.
    fn errors(&self, s: &State, t: f64) -> Vec<FieldError> {
        let mut out = vec![
            cell_errors("n", &s.n, |x| self.n.eval(x, t)),
            cell_errors("c", &s.c_tilde, |x| self.c.eval(x, t)),
            face_errors("u", &s.u, |d, x| self.u[d].eval(x, t)),
        ];
        let l2 = out.iter().map(|e| e.l2 * e.l2).sum::<f64>().sqrt();
        let linf = out.iter().map(|e| e.linf).fold(0.0, f64::max);
        out.push(FieldError { field: "state", l2, linf });
        out
    }
}

impl Default for CoupledSolution {
    fn default() -> Self {
        CoupledSolution::new()
    }
}

impl SourceTerms for CoupledSolution {
    fn n_source(&self, x: [f64; 3], t: f64) -> f64 {
        self.forcing_n.eval(x, t)
    }

    fn c_source(&self, x: [f64; 3], t: f64) -> f64 {
        self.forcing_c.eval(x, t)
    }

    fn u_source(&self, axis: usize, x: [f64; 3], t: f64) -> f64 {
        self.forcing_u[axis].eval(x, t)
    }
}

fn run_coupled(cells: usize) -> Result<ConvergenceRow> {
    let sol = Arc::new(CoupledSolution::new());
    let g = unit_square(cells)?;
    let h = g.h()[0];
    let p = sol.problem(g.clone())?;
    let t_end = 0.25;
    let dt = h / 4.0;
    let mut it = Integrator::new(&p, StepConfig::new(dt, &p.regularization))?;
    let steps = (t_end / it.dt()).round() as usize;
    let s = it.simulate_steps(&sol.exact_state(&g, 0.0), steps, &mut no_hook())?;
    Ok(ConvergenceRow { cells, h, dt: it.dt(), steps, errors: sol.errors(&s, s.t) })
}

fn run_periodic(cells: usize) -> Result<ConvergenceRow> {
    let sol = Arc::new(CoupledSolution::new());
    let g = unit_square(cells)?;
    let h = g.h()[0];
    let p = sol.problem(g.clone())?;
    let step = StepConfig::new(h / 4.0, &p.regularization);
    let init = State {
        n: ScalarField::constant(&g, 1.0),
        ..State::zeros(&g)
    };
    let cfg = FixedPointConfig { max_iters: 40, tol_rel: 1e-10, ..Default::default() };
    let report = find_periodic(&p, &init, step, cfg)?;
    if !report.converged {
        return Err(Error::NonFinite {
            what: format!("periodic manufactured orbit did not converge (residual {:e})", report.final_residual()),
        });
    }
    let steps = Integrator::new(&p, step)?.steps_per_period();
    Ok(ConvergenceRow {
        cells,
        h,
        dt: 1.0 / steps as f64,
        steps,
        errors: sol.errors(&report.final_state, 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_fit_recovers_power_laws() {
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((fit_order(&hs, &errs) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_or_irregular_ladders() {
        let case = ManufacturedCase::heat();
        assert!(run_convergence(&case, &[8, 16]).is_err());
        assert!(run_convergence(&case, &[8, 16, 24]).is_err());
    }

    #[test]
    fn manufactured_flow_is_discretely_divergence_free() {
        let g = unit_square(12).unwrap();
        let u = discrete_curl(&g, &stream_function(0.2, "1"), 0.0);
        assert!(crate::grid::divergence(&u).max_abs() < 1e-13);
        // wall-normal faces carry only the round-off of sin(pi)^2
        let mut v = u.clone();
        v.zero_boundary_normals();
        v.axpy(-1.0, &u);
        assert!(v.max_abs() < 1e-30);
    }

    #[test]
    fn forcing_vanishes_for_exact_equilibrium_pieces() {
        // With the exact solution plugged in, the continuous residual is zero
        // by construction; spot-check the heat forcing formula.
        let q = parse("cos(pi*x)*exp(-t)");
        let f = q.diff(Var::T) - q.laplacian(2);
        let x = [0.3, 0.7, 0.0];
        let expected = (PI * PI - 1.0) * (PI * 0.3).cos() * (-0.2f64).exp();
        assert!((f.eval(x, 0.2) - expected).abs() < 1e-12);
    }

    #[test]
    fn heat_case_converges_at_second_order() {
        let t = run_convergence(&ManufacturedCase::heat(), &[8, 16, 32]).unwrap();
        assert!((t.judged_order() - 2.0).abs() < 0.2, "{t:?}");
    }
}
