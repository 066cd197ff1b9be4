//! Time-periodic coefficients, Robin oxygen-exchange data, the homogenizer
//! pair `(g1, g2)` and the change of variables `c~ = exp(-g1) (c - g2)`.
//!
//! The homogenizers must satisfy, on every boundary face and at all times,
//!
//! ```text
//! dg1/dnu = -a1,    g2 = a2 / a1,    dg2/dnu = 0
//! ```
//!
//! which turns the Robin condition `dc/dnu = -a1 c + a2` into a homogeneous
//! Neumann condition for `c~`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::grid::{BoxSide, Grid, ScalarField};

/// Number of equispaced times in `[0, T)` used by sampled checks.
pub const TIME_SAMPLES: usize = 8;

fn sample_times(period: f64) -> impl Iterator<Item = f64> {
    (0..TIME_SAMPLES).map(move |i| period * i as f64 / TIME_SAMPLES as f64)
}

/// Physical coefficients of the cell equation and the fluid forcing.
#[derive(Debug, Clone)]
pub struct Coefficients {
    /// Growth capacity `a(x, t)`.
    pub a: Expr,
    /// Cell source `g(x, t) >= 0`.
    pub g: Expr,
    /// Potential `phi(x, t)`; the fluid is driven by `n grad(phi)`.
    pub phi: Expr,
    pub chi: f64,
    pub mu: f64,
    pub m: f64,
    pub period: f64,
}

/// Coefficients sampled at cell centres at one instant.
#[derive(Debug, Clone)]
pub struct CoefficientSample {
    pub a: Vec<f64>,
    pub g: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Coefficients {
    pub fn new(a: Expr, g: Expr, phi: Expr, chi: f64, mu: f64, m: f64, period: f64) -> Result<Self> {
        let c = Coefficients { a, g, phi, chi, mu, m, period };
        c.validate_scalars()?;
        Ok(c)
    }

    fn validate_scalars(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidParameter(format!("period T must be > 0, got {}", self.period)));
        }
        if !(self.m.is_finite() && self.m > 1.0) {
            return Err(Error::InvalidParameter(format!("diffusion exponent m must be > 1, got {}", self.m)));
        }
        if !(self.chi.is_finite() && self.chi >= 0.0) {
            return Err(Error::InvalidParameter(format!("chi must be >= 0, got {}", self.chi)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {}", self.mu)));
        }
        Ok(())
    }

    /// Checks `g >= 0` and T-periodicity of `a`, `g`, `phi` at the cell
    /// centres of `grid` and `TIME_SAMPLES` times.
    pub fn check_hypotheses(&self, grid: &Grid) -> Result<()> {
        self.validate_scalars()?;
        for t in sample_times(self.period) {
            for c in 0..grid.cell_count() {
                let x = grid.cell_center(c);
                let g = self.g.eval(x, t);
                if g < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "hypothesis g >= 0 violated: g = {g} at x = {x:?}, t = {t}"
                    )));
                }
            }
        }
        for (name, e) in [("a", &self.a), ("g", &self.g), ("phi", &self.phi)] {
            check_periodic(name, e, grid, self.period)?;
        }
        Ok(())
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> CoefficientSample {
        let n = grid.cell_count();
        let mut s = CoefficientSample {
            a: Vec::with_capacity(n),
            g: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
        };
        for c in 0..n {
            let x = grid.cell_center(c);
            s.a.push(self.a.eval(x, t));
            s.g.push(self.g.eval(x, t));
            s.phi.push(self.phi.eval(x, t));
        }
        s
    }

    pub fn is_time_independent(&self) -> bool {
        self.a.is_time_independent() && self.g.is_time_independent() && self.phi.is_time_independent()
    }
}

/// Values at `t` and `t + T` must agree to `1e-12` (relative above 1).
pub fn check_periodic(name: &str, e: &Expr, grid: &Grid, period: f64) -> Result<()> {
    if e.is_time_independent() {
        return Ok(());
    }
    let stride = (grid.cell_count() / 64).max(1);
    for t in sample_times(period) {
        for c in (0..grid.cell_count()).step_by(stride) {
            let x = grid.cell_center(c);
            let v0 = e.eval(x, t);
            let v1 = e.eval(x, t + period);
            if (v0 - v1).abs() > 1e-12 * v0.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} is not periodic with period {period}: {v0} at t = {t}, {v1} at t + T"
                )));
            }
        }
    }
    Ok(())
}

/// Robin data on the box boundary: `dc/dnu = -a1 c + a2`.
#[derive(Debug, Clone)]
pub struct RobinData {
    /// Oxygen leaving rate, `a1 > 0`.
    pub a1: Expr,
    /// Incoming oxygen, `a2 >= 0`.
    pub a2: Expr,
}

impl RobinData {
    pub fn new(a1: Expr, a2: Expr) -> Self {
        RobinData { a1, a2 }
    }

    /// Checks signs and periodicity at every boundary face centre.
    pub fn validate(&self, grid: &Grid, period: f64) -> Result<()> {
        for t in sample_times(period) {
            for bf in grid.boundary_faces() {
                let x = grid.face_center(bf.axis, bf.index);
                let a1 = self.a1.eval(x, t);
                if !(a1 > 0.0) {
                    return Err(Error::NonPositiveLeavingRate {
                        value: a1,
                        location: format!("x = {x:?}, t = {t}"),
                    });
                }
                let a2 = self.a2.eval(x, t);
                if !(a2 >= 0.0) {
                    return Err(Error::NegativeIncomingRate {
                        value: a2,
                        location: format!("x = {x:?}, t = {t}"),
                    });
                }
            }
        }
        check_periodic("a1", &self.a1, grid, period)?;
        check_periodic("a2", &self.a2, grid, period)?;
        Ok(())
    }

    /// `a2 != 0` somewhere on the sampled boundary.
    pub fn has_incoming_oxygen(&self, grid: &Grid, period: f64) -> bool {
        sample_times(period).any(|t| {
            grid.boundary_faces()
                .iter()
                .any(|bf| self.a2.eval(grid.face_center(bf.axis, bf.index), t) != 0.0)
        })
    }
}

/// Value, spatial gradient, Laplacian and time derivative at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    pub lap: f64,
    pub dt: f64,
}

/// Cutoff profile: `psi(0) = 0`, `psi'(0) = 1`, `psi' = 0` beyond the width.
///
/// `psi'(d) = p(d / w)` with `p(s) = 1 - 10 s^3 + 15 s^4 - 6 s^5`, so `psi`
/// is C^3 and constant (`w / 2`) past `d = w`.
#[derive(Debug, Clone, Copy)]
pub struct Cutoff {
    pub width: f64,
}

impl Cutoff {
    pub fn value(&self, d: f64) -> f64 {
        let s = (d / self.width).clamp(0.0, 1.0);
        let s2 = s * s;
        let s4 = s2 * s2;
        self.width * (s - 2.5 * s4 + 3.0 * s4 * s - s4 * s2)
    }

    pub fn slope(&self, d: f64) -> f64 {
        let s = (d / self.width).clamp(0.0, 1.0);
        let s3 = s * s * s;
        1.0 - 10.0 * s3 + 15.0 * s3 * s - 6.0 * s3 * s * s
    }

    pub fn curvature(&self, d: f64) -> f64 {
        let s = (d / self.width).clamp(0.0, 1.0);
        let s2 = s * s;
        -30.0 * s2 * (1.0 - s) * (1.0 - s) / self.width
    }
}

#[derive(Debug, Clone)]
struct SideRate {
    side: BoxSide,
    /// Point on the side where `a1` is evaluated.
    anchor: [f64; 3],
    cutoff: Cutoff,
}

/// Closed-form cutoff homogenizers for Robin data constant on each side.
#[derive(Debug, Clone)]
pub struct CutoffHomogenizers {
    grid: Arc<Grid>,
    sides: Vec<SideRate>,
    a1: Expr,
    a1_t: Expr,
    a2: Expr,
    a2_t: Expr,
    ratio_anchor: [f64; 3],
}

impl CutoffHomogenizers {
    fn a1_at(&self, side: &SideRate, t: f64) -> (f64, f64) {
        (self.a1.eval(side.anchor, t), self.a1_t.eval(side.anchor, t))
    }

    fn g1(&self, x: [f64; 3], t: f64) -> Jet {
        let mut jet = Jet::default();
        for s in &self.sides {
            let (rate, rate_t) = self.a1_at(s, t);
            let d = s.side.distance(&self.grid, x);
            let psi = s.cutoff.value(d);
            jet.value += rate * psi;
            jet.dt += rate_t * psi;
            // d(distance)/dx_axis = -outward
            jet.grad[s.side.axis] += -s.side.outward() * rate * s.cutoff.slope(d);
            jet.lap += rate * s.cutoff.curvature(d);
        }
        jet
    }

    fn g2(&self, t: f64) -> Jet {
        let a1 = self.a1.eval(self.ratio_anchor, t);
        let a2 = self.a2.eval(self.ratio_anchor, t);
        let a1_t = self.a1_t.eval(self.ratio_anchor, t);
        let a2_t = self.a2_t.eval(self.ratio_anchor, t);
        Jet {
            value: a2 / a1,
            grad: [0.0; 3],
            lap: 0.0,
            dt: (a2_t * a1 - a2 * a1_t) / (a1 * a1),
        }
    }
}

#[derive(Debug, Clone)]
struct ExprJet {
    value: Expr,
    grad: [Expr; 3],
    lap: Expr,
    dt: Expr,
}

impl ExprJet {
    fn new(e: Expr, dim: usize) -> Self {
        let zero = Expr::constant(0.0);
        let grad = [
            e.diff(Var::X),
            e.diff(Var::Y),
            if dim == 3 { e.diff(Var::Z) } else { zero },
        ];
        ExprJet {
            lap: e.laplacian(dim),
            dt: e.diff(Var::T),
            value: e,
            grad,
        }
    }

    fn eval(&self, x: [f64; 3], t: f64) -> Jet {
        Jet {
            value: self.value.eval(x, t),
            grad: [self.grad[0].eval(x, t), self.grad[1].eval(x, t), self.grad[2].eval(x, t)],
            lap: self.lap.eval(x, t),
            dt: self.dt.eval(x, t),
        }
    }
}

/// User-supplied analytic homogenizers; derivatives are formed symbolically.
#[derive(Debug, Clone)]
pub struct AnalyticHomogenizers {
    g1: ExprJet,
    g2: ExprJet,
}

#[derive(Debug, Clone)]
pub enum Homogenizers {
    Cutoff(CutoffHomogenizers),
    Analytic(AnalyticHomogenizers),
}

/// Homogenizers sampled on the grid at one instant.
#[derive(Debug, Clone)]
pub struct HomogenizerSample {
    pub g1: Vec<Jet>,
    pub g2: Vec<Jet>,
    /// Per axis, per face: `(g1, dg1/dx_axis, dg2/dx_axis)`.
    pub faces: Vec<Vec<[f64; 3]>>,
}

impl HomogenizerSample {
    /// `exp(-g1) (c - g2)` at every cell.
    pub fn to_homogeneous(&self, c: &ScalarField) -> ScalarField {
        let mut out = c.clone();
        for (v, (g1, g2)) in out.values_mut().iter_mut().zip(self.g1.iter().zip(&self.g2)) {
            *v = (-g1.value).exp() * (*v - g2.value);
        }
        out
    }

    /// `exp(g1) c~ + g2` at every cell.
    pub fn from_homogeneous(&self, c_tilde: &ScalarField) -> ScalarField {
        let mut out = c_tilde.clone();
        for (v, (g1, g2)) in out.values_mut().iter_mut().zip(self.g1.iter().zip(&self.g2)) {
            *v = g1.value.exp() * *v + g2.value;
        }
        out
    }
}

impl Homogenizers {
    pub fn analytic(g1: Expr, g2: Expr, dim: usize) -> Self {
        Homogenizers::Analytic(AnalyticHomogenizers {
            g1: ExprJet::new(g1, dim),
            g2: ExprJet::new(g2, dim),
        })
    }

    /// `g1 = g2 = 0`: the untransformed, zero-flux oxygen problem.
    pub fn zero(dim: usize) -> Self {
        Homogenizers::analytic(Expr::constant(0.0), Expr::constant(0.0), dim)
    }

    pub fn g1(&self, x: [f64; 3], t: f64) -> Jet {
        match self {
            Homogenizers::Cutoff(h) => h.g1(x, t),
            Homogenizers::Analytic(h) => h.g1.eval(x, t),
        }
    }

    pub fn g2(&self, x: [f64; 3], t: f64) -> Jet {
        match self {
            Homogenizers::Cutoff(h) => h.g2(t),
            Homogenizers::Analytic(h) => h.g2.eval(x, t),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            Homogenizers::Cutoff(h) => h.a1.is_time_independent() && h.a2.is_time_independent(),
            Homogenizers::Analytic(h) => {
                h.g1.value.is_time_independent() && h.g2.value.is_time_independent()
            }
        }
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> HomogenizerSample {
        let n = grid.cell_count();
        let mut g1 = Vec::with_capacity(n);
        let mut g2 = Vec::with_capacity(n);
        for c in 0..n {
            let x = grid.cell_center(c);
            g1.push(self.g1(x, t));
            g2.push(self.g2(x, t));
        }
        let faces = (0..grid.dim())
            .map(|d| {
                (0..grid.face_count(d))
                    .map(|f| {
                        let x = grid.face_center(d, f);
                        let j1 = self.g1(x, t);
                        let j2 = self.g2(x, t);
                        [j1.value, j1.grad[d], j2.grad[d]]
                    })
                    .collect()
            })
            .collect();
        HomogenizerSample { g1, g2, faces }
    }

    /// `c~ = exp(-g1) (c - g2)` at time `t`.
    pub fn to_homogeneous(&self, c: &ScalarField, t: f64) -> ScalarField {
        let mut out = c.clone();
        let g = c.grid().clone();
        for (idx, v) in out.values_mut().iter_mut().enumerate() {
            let x = g.cell_center(idx);
            *v = (-self.g1(x, t).value).exp() * (*v - self.g2(x, t).value);
        }
        out
    }

    /// `c = exp(g1) c~ + g2` at time `t`.
    pub fn from_homogeneous(&self, c_tilde: &ScalarField, t: f64) -> ScalarField {
        let mut out = c_tilde.clone();
        let g = c_tilde.grid().clone();
        for (idx, v) in out.values_mut().iter_mut().enumerate() {
            let x = g.cell_center(idx);
            *v = self.g1(x, t).value.exp() * *v + self.g2(x, t).value;
        }
        out
    }

    /// Supremum of `g2` over cell and boundary samples at `4 TIME_SAMPLES`
    /// times.
    pub fn g2_sup(&self, grid: &Grid, period: f64) -> f64 {
        let fine = 4 * TIME_SAMPLES;
        let mut sup = f64::NEG_INFINITY;
        for i in 0..fine {
            let t = period * i as f64 / fine as f64;
            for c in 0..grid.cell_count() {
                sup = sup.max(self.g2(grid.cell_center(c), t).value);
            }
            for bf in grid.boundary_faces() {
                sup = sup.max(self.g2(grid.face_center(bf.axis, bf.index), t).value);
            }
        }
        sup
    }
}

/// Builds the cutoff homogenizers.
///
/// `g1 = sum_sides a1_side(t) psi(d_side(x))` with cutoff width `L/4`;
/// `g2 = a2/a1`, which must be one function of time shared by all sides,
/// since `g2` has to be continuous across box edges.
pub fn build_homogenizers(robin: &RobinData, grid: &Arc<Grid>, period: f64) -> Result<Homogenizers> {
    let tol = 1e-12;
    let boundary = grid.boundary_faces();
    let mut sides = Vec::new();
    for side in grid.sides() {
        let faces: Vec<_> = boundary.iter().filter(|bf| bf.side == side).collect();
        for t in sample_times(period) {
            let mut lo_a1 = f64::INFINITY;
            let mut hi_a1 = f64::NEG_INFINITY;
            let mut lo_r = f64::INFINITY;
            let mut hi_r = f64::NEG_INFINITY;
            for bf in &faces {
                let x = grid.face_center(bf.axis, bf.index);
                let a1 = robin.a1.eval(x, t);
                if !(a1 > 0.0) {
                    return Err(Error::NonPositiveLeavingRate {
                        value: a1,
                        location: format!("x = {x:?}, t = {t}"),
                    });
                }
                let a2 = robin.a2.eval(x, t);
                if !(a2 >= 0.0) {
                    return Err(Error::NegativeIncomingRate {
                        value: a2,
                        location: format!("x = {x:?}, t = {t}"),
                    });
                }
                lo_a1 = lo_a1.min(a1);
                hi_a1 = hi_a1.max(a1);
                lo_r = lo_r.min(a2 / a1);
                hi_r = hi_r.max(a2 / a1);
            }
            if hi_a1 - lo_a1 > tol * hi_a1.abs().max(1.0) {
                return Err(Error::NonConstantPerFace {
                    coefficient: "a1",
                    face: side.label(),
                    variation: hi_a1 - lo_a1,
                });
            }
            if hi_r - lo_r > tol * hi_r.abs().max(1.0) {
                return Err(Error::NonConstantPerFace {
                    coefficient: "a2/a1",
                    face: side.label(),
                    variation: hi_r - lo_r,
                });
            }
        }
        let first = faces[0];
        let anchor = grid.face_center(first.axis, first.index);
        sides.push(SideRate {
            side,
            anchor,
            cutoff: Cutoff { width: grid.lengths()[side.axis] / 4.0 },
        });
    }
    // Ratio must agree between sides.
    for t in sample_times(period) {
        let r0 = robin.a2.eval(sides[0].anchor, t) / robin.a1.eval(sides[0].anchor, t);
        for s in &sides[1..] {
            let r = robin.a2.eval(s.anchor, t) / robin.a1.eval(s.anchor, t);
            if (r - r0).abs() > tol * r0.abs().max(1.0) {
                return Err(Error::DiscontinuousRobinRatio { first: r0, second: r });
            }
        }
    }
    let ratio_anchor = sides[0].anchor;
    Ok(Homogenizers::Cutoff(CutoffHomogenizers {
        grid: grid.clone(),
        sides,
        a1_t: robin.a1.diff(Var::T),
        a1: robin.a1.clone(),
        a2_t: robin.a2.diff(Var::T),
        a2: robin.a2.clone(),
        ratio_anchor,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizerReport {
    /// max |dg1/dnu + a1|
    pub g1_normal: f64,
    /// max |g2 - a2/a1|
    pub g2_value: f64,
    /// max |dg2/dnu|
    pub g2_normal: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl HomogenizerReport {
    pub fn max_violation(&self) -> f64 {
        self.g1_normal.max(self.g2_value).max(self.g2_normal)
    }
}

/// Samples the three boundary conditions on every boundary face centre at
/// `TIME_SAMPLES` times in `[0, T)`.
pub fn validate_homogenizers(
    h: &Homogenizers,
    robin: &RobinData,
    grid: &Grid,
    period: f64,
    tol: f64,
) -> HomogenizerReport {
    let mut rep = HomogenizerReport {
        g1_normal: 0.0,
        g2_value: 0.0,
        g2_normal: 0.0,
        tolerance: tol,
        passed: false,
    };
    for t in sample_times(period) {
        for bf in grid.boundary_faces() {
            let x = grid.face_center(bf.axis, bf.index);
            let a1 = robin.a1.eval(x, t);
            let a2 = robin.a2.eval(x, t);
            let g1 = h.g1(x, t);
            let g2 = h.g2(x, t);
            let dn1 = bf.outward * g1.grad[bf.axis];
            let dn2 = bf.outward * g2.grad[bf.axis];
            rep.g1_normal = rep.g1_normal.max((dn1 + a1).abs());
            rep.g2_value = rep.g2_value.max((g2.value - a2 / a1).abs());
            rep.g2_normal = rep.g2_normal.max(dn2.abs());
        }
    }
    rep.passed = rep.max_violation() <= tol;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::square(n, 1.0).unwrap())
    }

    fn robin(a1: &str, a2: &str) -> RobinData {
        RobinData::new(Expr::parse(a1).unwrap(), Expr::parse(a2).unwrap())
    }

    #[test]
    fn cutoff_profile_properties() {
        let c = Cutoff { width: 0.25 };
        assert_eq!(c.value(0.0), 0.0);
        assert_eq!(c.slope(0.0), 1.0);
        assert!(c.slope(0.25).abs() < 1e-15);
        assert!(c.curvature(0.25).abs() < 1e-15);
        assert!((c.value(0.4) - 0.125).abs() < 1e-15);
        // psi' is the derivative of psi
        for d in [0.03, 0.1, 0.2] {
            let fd = (c.value(d + 1e-6) - c.value(d - 1e-6)) / 2e-6;
            assert!((fd - c.slope(d)).abs() < 1e-8);
            let fd2 = (c.slope(d + 1e-6) - c.slope(d - 1e-6)) / 2e-6;
            assert!((fd2 - c.curvature(d)).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_source_homogenizers() {
        let g = grid(32);
        let r = robin("1", "0");
        let h = build_homogenizers(&r, &g, 1.0).unwrap();
        let rep = validate_homogenizers(&h, &r, &g, 1.0, 1e-10);
        assert!(rep.passed, "{rep:?}");
        for bf in g.boundary_faces() {
            let x = g.face_center(bf.axis, bf.index);
            assert_eq!(h.g2(x, 0.3).value, 0.0);
            assert!((bf.outward * h.g1(x, 0.3).grad[bf.axis] + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_ratio_gives_unit_g2() {
        let g = grid(32);
        let r = robin("1", "1");
        let h = build_homogenizers(&r, &g, 1.0).unwrap();
        for bf in g.boundary_faces() {
            assert_eq!(h.g2(g.face_center(bf.axis, bf.index), 0.0).value, 1.0);
        }
        assert!(validate_homogenizers(&h, &r, &g, 1.0, 1e-10).passed);
    }

    #[test]
    fn time_periodic_per_face_rates_validate() {
        let g = Arc::new(Grid::new(&[32, 40], &[1.0, 1.5]).unwrap());
        let r = robin("1 + 0.5*sin(2*pi*t)", "2*(1 + 0.5*sin(2*pi*t))");
        let h = build_homogenizers(&r, &g, 1.0).unwrap();
        let rep = validate_homogenizers(&h, &r, &g, 1.0, 1e-8);
        assert!(rep.passed, "{rep:?}");
        // g2 = 2 always; g1 time derivative present
        assert!((h.g2([0.3, 0.4, 0.0], 0.1).value - 2.0).abs() < 1e-14);
        assert!(h.g1([0.01, 0.5, 0.0], 0.1).dt.abs() > 0.0);
    }

    #[test]
    fn linear_rate_varies_along_the_y_sides() {
        let g = grid(16);
        let err = build_homogenizers(&robin("1 + x", "1"), &g, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonConstantPerFace { .. }), "{err}");
    }

    #[test]
    fn varying_along_face_is_rejected() {
        let g = grid(16);
        let err = build_homogenizers(&robin("1 + 0.1*sin(pi*x)", "1"), &g, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonConstantPerFace { coefficient: "a1", .. }));
        let err = build_homogenizers(&robin("1", "1 + 0.1*sin(pi*y)"), &g, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonConstantPerFace { coefficient: "a2/a1", .. }));
    }

    #[test]
    fn sign_violations_are_rejected() {
        let g = grid(16);
        let err = build_homogenizers(&robin("-1", "1"), &g, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonPositiveLeavingRate { .. }));
        let err = build_homogenizers(&robin("0", "1"), &g, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonPositiveLeavingRate { .. }));
        assert!(robin("1", "-1").validate(&g, 1.0).is_err());
        assert!(robin("1", "1").validate(&g, 1.0).is_ok());
    }

    #[test]
    fn zero_g1_fails_validation() {
        let g = grid(16);
        let r = robin("1", "1");
        let h = Homogenizers::analytic(Expr::constant(0.0), Expr::constant(1.0), 2);
        let rep = validate_homogenizers(&h, &r, &g, 1.0, 1e-8);
        assert!(!rep.passed);
        assert_eq!(rep.g1_normal, 1.0);
        assert_eq!(rep.g2_normal, 0.0);
        assert_eq!(rep.g2_value, 0.0);
    }

    #[test]
    fn analytic_quadratic_homogenizer_validates() {
        let g = grid(32);
        let r = robin("1 + 0.5*cos(2*pi*t)", "1 + 0.5*cos(2*pi*t)");
        let g1 = Expr::parse("(1 + 0.5*cos(2*pi*t))*(x - x^2 + y - y^2)").unwrap();
        let h = Homogenizers::analytic(g1, Expr::constant(1.0), 2);
        let rep = validate_homogenizers(&h, &r, &g, 1.0, 1e-12);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn three_d_homogenizers_validate() {
        let g = Arc::new(Grid::cube(8, 1.0).unwrap());
        let r = robin("1.5", "3");
        let h = build_homogenizers(&r, &g, 1.0).unwrap();
        let rep = validate_homogenizers(&h, &r, &g, 1.0, 1e-12);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn transform_examples() {
        let g = grid(8);
        // c = g2 gives c~ = 0
        let h = build_homogenizers(&robin("1", "1"), &g, 1.0).unwrap();
        let c = ScalarField::constant(&g, 1.0);
        assert!(h.to_homogeneous(&c, 0.2).max_abs() < 1e-15);
        // g1 = 0: c~ = c - g2
        let h0 = Homogenizers::analytic(Expr::constant(0.0), Expr::parse("0.5 + x").unwrap(), 2);
        let c = ScalarField::from_fn(&g, |x| 3.0 * x[1]);
        let ct = h0.to_homogeneous(&c, 0.0);
        for idx in 0..g.cell_count() {
            let x = g.cell_center(idx);
            assert!((ct.values()[idx] - (3.0 * x[1] - 0.5 - x[0])).abs() < 1e-15);
        }
        // c = 2, g1 = ln 2, g2 = 1 -> 0.5
        let h1 = Homogenizers::analytic(Expr::constant(2f64.ln()), Expr::constant(1.0), 2);
        let ct = h1.to_homogeneous(&ScalarField::constant(&g, 2.0), 0.0);
        assert!((ct.values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hypotheses_catch_negative_source_and_aperiodic_data() {
        let g = grid(8);
        let e = |s: &str| Expr::parse(s).unwrap();
        let ok = Coefficients::new(e("1 + 0.5*sin(2*pi*t)"), e("0"), e("-y"), 0.1, 1.0, 2.0, 1.0).unwrap();
        assert!(ok.check_hypotheses(&g).is_ok());
        let neg = Coefficients::new(e("1"), e("x - 0.5"), e("0"), 0.1, 1.0, 2.0, 1.0).unwrap();
        let msg = neg.check_hypotheses(&g).unwrap_err().to_string();
        assert!(msg.contains("g >= 0"), "{msg}");
        let aperiodic = Coefficients::new(e("1 + t"), e("0"), e("0"), 0.1, 1.0, 2.0, 1.0).unwrap();
        assert!(aperiodic.check_hypotheses(&g).is_err());
        assert!(Coefficients::new(e("1"), e("0"), e("0"), 0.1, 1.0, 1.0, 1.0).is_err());
        assert!(Coefficients::new(e("1"), e("0"), e("0"), 0.1, 1.0, 2.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn transform_round_trip(vals in proptest::collection::vec(-50.0f64..50.0, 64), t in 0.0f64..1.0) {
            let g = grid(8);
            let h = build_homogenizers(&robin("1 + 0.5*sin(2*pi*t)", "2 + sin(2*pi*t)"), &g, 1.0).unwrap();
            let c = ScalarField::from_values(&g, vals).unwrap();
            let back = h.from_homogeneous(&h.to_homogeneous(&c, t), t);
            for (a, b) in back.values().iter().zip(c.values()) {
                prop_assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
            }
        }

        #[test]
        fn built_homogenizers_are_periodic(t in 0.0f64..1.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let g = grid(32);
            let h = build_homogenizers(&robin("1 + 0.5*sin(2*pi*t)", "1 + 0.5*sin(2*pi*t)"), &g, 1.0).unwrap();
            let p = [x, y, 0.0];
            prop_assert!((h.g1(p, t).value - h.g1(p, t + 1.0).value).abs() < 1e-12);
            prop_assert!((h.g2(p, t).value - h.g2(p, t + 1.0).value).abs() < 1e-12);
        }
    }
}
