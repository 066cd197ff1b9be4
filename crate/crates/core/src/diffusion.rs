//! Porous-medium and linear diffusion, the biharmonic regularizer, and the
//! backward-Euler solves that treat them implicitly.
//!
//! All operators are in flux form on the cell-centred grid with zero flux
//! through the box walls, so every output sums (volume-weighted) to zero.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{neumann_laplacian, Grid, ScalarField};
use crate::linalg::{conjugate_gradient, CgOptions, CgStats, SeparableSolver};

/// Parameters of the fourth-order regularized cell equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    /// Mobility floor in `m (|n| + eps)^(m-1)`.
    pub eps: f64,
    /// Weight of the `delta * Lap^2 n` term.
    pub delta: f64,
    /// Exponent of the `-eps_penalty |n|^s n` penalty.
    pub s: f64,
    /// Magnitude `A` of the negative-part penalty `2 A n_-`.
    pub a_penalty: f64,
    pub eps_penalty: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::off()
    }
}

impl Regularization {
    pub fn off() -> Self {
        Regularization { eps: 0.0, delta: 0.0, s: 0.0, a_penalty: 0.0, eps_penalty: 0.0 }
    }

    pub fn penalties_active(&self) -> bool {
        self.eps_penalty > 0.0 || self.a_penalty > 0.0
    }

    /// Admissible range of the penalty exponent for diffusion exponent `m`.
    pub fn s_range(m: f64) -> (f64, f64) {
        ((2.0 * (m - 1.0)).max(2.0), 5.0 * m - 1.0)
    }

    pub fn validate(&self, m: f64) -> Result<()> {
        for (name, v) in [
            ("eps", self.eps),
            ("delta", self.delta),
            ("a_penalty", self.a_penalty),
            ("eps_penalty", self.eps_penalty),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.eps_penalty > 0.0 {
            let (lo, hi) = Regularization::s_range(m);
            if !(self.s > lo && self.s <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "penalty exponent s = {} outside ({lo}, {hi}] for m = {m}",
                    self.s
                )));
            }
        }
        Ok(())
    }
}

/// Nonnegative coefficients on the interior faces of each axis.
#[derive(Debug, Clone)]
pub struct FaceCoefficients {
    grid: Arc<Grid>,
    /// Per axis: `(lo, hi)` cells of every interior face.
    pairs: Vec<Vec<(usize, usize)>>,
    /// Per axis, parallel to `pairs`.
    coef: Vec<Vec<f64>>,
    /// Set when every coefficient equals this value.
    uniform: Option<f64>,
}

fn interior_pairs(grid: &Grid) -> Vec<Vec<(usize, usize)>> {
    let cells = grid.cells();
    (0..grid.dim())
        .map(|d| {
            let stride = grid.cell_stride(d);
            (0..grid.cell_count())
                .filter(|&c| grid.cell_ijk(c)[d] + 1 < cells[d])
                .map(|c| (c, c + stride))
                .collect()
        })
        .collect()
}

impl FaceCoefficients {
    /// Unit coefficient on every interior face (the plain Laplacian).
    pub fn unit(grid: &Arc<Grid>) -> Self {
        let pairs = interior_pairs(grid);
        let coef = pairs.iter().map(|p| vec![1.0; p.len()]).collect();
        FaceCoefficients { grid: grid.clone(), pairs, coef, uniform: Some(1.0) }
    }

    /// Porous-medium mobility: arithmetic mean of `m (|n| + eps)^(m-1)`.
    pub fn porous_medium(n: &ScalarField, m: f64, eps: f64) -> Self {
        let cell: Vec<f64> = n.values().iter().map(|&v| m * (v.abs() + eps).powf(m - 1.0)).collect();
        let pairs = interior_pairs(n.grid());
        let coef = pairs
            .iter()
            .map(|p| p.iter().map(|&(lo, hi)| 0.5 * (cell[lo] + cell[hi])).collect())
            .collect();
        FaceCoefficients { grid: n.grid().clone(), pairs, coef, uniform: None }
    }

    /// Coefficients of the interior faces along axis `d`, ordered by the
    /// lower cell index.
    pub fn axis(&self, d: usize) -> &[f64] {
        &self.coef[d]
    }

    /// Face-count-weighted mean coefficient.
    pub fn mean(&self) -> f64 {
        let total: usize = self.coef.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        self.coef.iter().flatten().sum::<f64>() / total as f64
    }

    /// `out = div(k grad x)` with zero wall flux.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        out.iter_mut().for_each(|v| *v = 0.0);
        for d in 0..g.dim() {
            let inv_h2 = 1.0 / (g.h()[d] * g.h()[d]);
            for (&(lo, hi), &k) in self.pairs[d].iter().zip(&self.coef[d]) {
                let flux = k * (x[hi] - x[lo]) * inv_h2;
                out[lo] += flux;
                out[hi] -= flux;
            }
        }
    }

    /// Diagonal of the operator in `apply`.
    pub fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut diag = vec![0.0; g.cell_count()];
        for d in 0..g.dim() {
            let inv_h2 = 1.0 / (g.h()[d] * g.h()[d]);
            for (&(lo, hi), &k) in self.pairs[d].iter().zip(&self.coef[d]) {
                diag[lo] -= k * inv_h2;
                diag[hi] -= k * inv_h2;
            }
        }
        diag
    }
}

/// Flux-form porous-medium operator `div(m (|n| + eps)^(m-1) grad n)`.
pub fn pme_apply(n: &ScalarField, m: f64, eps: f64) -> ScalarField {
    let k = FaceCoefficients::porous_medium(n, m, eps);
    let mut out = vec![0.0; n.values().len()];
    k.apply(n.values(), &mut out);
    ScalarField::from_values(n.grid(), out).expect("sizes match")
}

/// `delta * Lap_h(Lap_h n)` with reflecting ghosts for `n` and for `Lap_h n`.
pub fn biharmonic_apply(n: &ScalarField, delta: f64) -> ScalarField {
    if delta == 0.0 {
        return ScalarField::zeros(n.grid());
    }
    neumann_laplacian(&neumann_laplacian(n)).map(|v| delta * v)
}

/// Backward-Euler system `(I + dt*diag_extra - dt div(k grad) + dt delta Lap^2) x = b`.
///
/// `extra_diag` holds nonnegative per-cell rates (e.g. Robin wall losses);
/// the matrix is symmetric positive definite. With uniform coefficients and
/// no extra rates it is diagonal in the cosine basis and solved exactly;
/// otherwise PCG runs with that constant-coefficient operator, built from
/// the mean coefficient and rate, as preconditioner.
pub struct ImplicitSystem<'a> {
    pub coefficients: &'a FaceCoefficients,
    pub dt: f64,
    pub delta: f64,
    pub extra_diag: Option<&'a [f64]>,
    pub rtol: f64,
}

impl ImplicitSystem<'_> {
    pub fn solve(&self, b: &ScalarField, solver: &'static str) -> Result<(ScalarField, CgStats)> {
        let grid = b.grid().clone();
        let n = grid.cell_count();
        let dt = self.dt;
        let delta = self.delta;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be > 0, got {dt}")));
        }
        b.check_finite(solver)?;
        let spectral = SeparableSolver::cells(&grid);
        if let (Some(k), None) = (self.coefficients.uniform, self.extra_diag) {
            let x = spectral.apply_spectral(b.values(), |l| 1.0 / (1.0 - dt * k * l + dt * delta * l * l));
            let stats = CgStats { iterations: 0, relative_residual: 0.0 };
            return Ok((ScalarField::from_values(&grid, x)?, stats));
        }
        let k_mean = self.coefficients.mean();
        let rate_mean = self.extra_diag.map_or(0.0, |e| e.iter().sum::<f64>() / n as f64);
        let unit = FaceCoefficients::unit(&grid);
        let apply = |x: &[f64], out: &mut [f64]| {
            self.coefficients.apply(x, out);
            for i in 0..n {
                out[i] = x[i] - dt * out[i];
            }
            if let Some(extra) = self.extra_diag {
                for i in 0..n {
                    out[i] += dt * extra[i] * x[i];
                }
            }
            if delta > 0.0 {
                let mut lap = vec![0.0; n];
                unit.apply(x, &mut lap);
                let mut bi = vec![0.0; n];
                unit.apply(&lap, &mut bi);
                for (o, v) in out.iter_mut().zip(&bi) {
                    *o += dt * delta * v;
                }
            }
        };
        let precond = |r: &[f64], z: &mut [f64]| {
            let y = spectral.apply_spectral(r, |l| 1.0 / (1.0 + dt * rate_mean - dt * k_mean * l + dt * delta * l * l));
            z.copy_from_slice(&y);
        };
        let mut x = b.values().to_vec();
        let stats = conjugate_gradient(apply, precond, b.values(), &mut x, CgOptions::for_size(self.rtol, n), solver)?;
        Ok((ScalarField::from_values(&grid, x)?, stats))
    }
}

/// Default relative tolerance of the implicit solves.
pub const SOLVE_RTOL: f64 = 1e-12;

/// One backward-Euler step of the porous-medium (+ biharmonic) diffusion with
/// mobility frozen at `n`.
pub fn implicit_diffuse_n(n: &ScalarField, dt: f64, m: f64, eps: f64, delta: f64) -> Result<ScalarField> {
    let k = FaceCoefficients::porous_medium(n, m, eps);
    let sys = ImplicitSystem { coefficients: &k, dt, delta, extra_diag: None, rtol: SOLVE_RTOL };
    Ok(sys.solve(n, "implicit_diffuse_n")?.0)
}

/// One backward-Euler step of unit-coefficient Neumann diffusion.
pub fn implicit_diffuse_c(c: &ScalarField, dt: f64) -> Result<ScalarField> {
    let k = FaceCoefficients::unit(c.grid());
    let sys = ImplicitSystem { coefficients: &k, dt, delta: 0.0, extra_diag: None, rtol: SOLVE_RTOL };
    Ok(sys.solve(c, "implicit_diffuse_c")?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::square(n, 1.0).unwrap())
    }

    /// Long thin grid standing in for 1D.
    fn strip(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(&[n, 4], &[1.0, 4.0 / n as f64]).unwrap())
    }

    fn mass(f: &ScalarField) -> f64 {
        f.integral()
    }

    #[test]
    fn constant_fields_are_steady() {
        let g = grid(12);
        let n = ScalarField::constant(&g, 0.7);
        assert!(pme_apply(&n, 2.0, 0.0).max_abs() < 1e-12);
        assert!(biharmonic_apply(&n, 0.3).max_abs() < 1e-9);
        let out = implicit_diffuse_n(&n, 0.1, 2.0, 0.0, 0.01).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
        let out = implicit_diffuse_c(&n, 0.1).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn zero_delta_switches_biharmonic_off() {
        let g = grid(8);
        let n = ScalarField::from_fn(&g, |x| (7.0 * x[0]).sin() + x[1]);
        assert_eq!(biharmonic_apply(&n, 0.0).max_abs(), 0.0);
    }

    #[test]
    fn linear_limit_matches_laplacian() {
        let g = grid(16);
        let n = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * (PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
        let a = pme_apply(&n, 1.0 + 1e-15, 0.0);
        let b = neumann_laplacian(&n);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12 * y.abs().max(1.0) * 100.0, "{x} {y}");
        }
    }

    #[test]
    fn porous_medium_second_order_on_quadratic() {
        // n = x^2, m = 2: (n^2)'' = 12 x^2 away from the walls.
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let g = strip(n);
            let f = ScalarField::from_fn(&g, |x| x[0] * x[0]);
            let out = pme_apply(&f, 2.0, 0.0);
            let mut err: f64 = 0.0;
            for c in 0..g.cell_count() {
                let x = g.cell_center(c)[0];
                if (0.25..=0.75).contains(&x) {
                    err = err.max((out.values()[c] - 12.0 * x * x).abs());
                }
            }
            errs.push(err);
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!((order - 2.0).abs() <= 0.2, "order {order}, errs {errs:?}");
    }

    #[test]
    fn biharmonic_second_order_on_eigenfunction() {
        let delta = 0.5;
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let g = strip(n);
            let f = ScalarField::from_fn(&g, |x| (PI * x[0]).cos());
            let out = biharmonic_apply(&f, delta);
            let err = (0..g.cell_count())
                .map(|c| (out.values()[c] - delta * PI.powi(4) * (PI * g.cell_center(c)[0]).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!((order - 2.0).abs() <= 0.3, "order {order}, errs {errs:?}");
    }

    #[test]
    fn operators_conserve() {
        let g = Arc::new(Grid::new(&[9, 7, 5], &[1.0, 0.8, 0.6]).unwrap());
        let n = ScalarField::from_fn(&g, |x| (3.0 * x[0] + x[1] * x[2]).sin().abs() + 0.1);
        let l1 = n.values().iter().map(|v| v.abs()).sum::<f64>() * g.cell_volume();
        assert!(mass(&pme_apply(&n, 2.5, 1e-3)).abs() < 1e-12 * l1 * 1e3);
        assert!(mass(&biharmonic_apply(&n, 1.0)).abs() < 1e-12 * l1 * 1e6);
        let out = implicit_diffuse_n(&n, 0.05, 2.5, 0.0, 1e-4).unwrap();
        assert!((mass(&out) - mass(&n)).abs() <= 1e-10 * mass(&n));
        let out = implicit_diffuse_c(&n, 0.05).unwrap();
        assert!((mass(&out) - mass(&n)).abs() <= 1e-10 * mass(&n));
    }

    #[test]
    fn heat_mode_decay() {
        // Backward Euler on cos(pi x) cos(pi y): factor 1/(1 + dt*lambda_h).
        let g = grid(32);
        let f = ScalarField::from_fn(&g, |x| (PI * x[0]).cos() * (PI * x[1]).cos());
        let dt = 1e-3;
        let out = implicit_diffuse_c(&f, dt).unwrap();
        let lam_h = 2.0 * 4.0 / (g.h()[0] * g.h()[0]) * (PI * g.h()[0] / 2.0).sin().powi(2);
        let expected = 1.0 / (1.0 + dt * lam_h);
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - expected * b).abs() < 1e-10);
        }
        // Exact continuous decay differs by O(dt) + O(h^2).
        let exact = (-2.0 * PI * PI * dt).exp();
        assert!((expected - exact).abs() < 2.0 * (dt + g.h()[0] * g.h()[0]));
    }

    #[test]
    fn small_eps_changes_little() {
        let g = grid(16);
        let n = ScalarField::from_fn(&g, |x| 0.5 + 0.3 * (PI * x[0]).cos());
        let a = pme_apply(&n, 2.0, 1e-3);
        let b = pme_apply(&n, 2.0, 5e-4);
        let c = pme_apply(&n, 2.0, 0.0);
        let dab = a.zip_map(&b, |x, y| x - y).unwrap().max_abs();
        let dbc = b.zip_map(&c, |x, y| x - y).unwrap().max_abs();
        assert!(dab < 1e-3 * 40.0);
        assert!((dab / dbc - 1.0).abs() < 1e-3, "linear in eps for m = 2");
    }

    #[test]
    fn symmetric_data_stays_symmetric() {
        let g = strip(24);
        let f = ScalarField::from_fn(&g, |x| 0.2 + (x[0] - 0.5).powi(2));
        let out = implicit_diffuse_n(&f, 0.01, 2.0, 0.0, 1e-4).unwrap();
        let nx = g.cells()[0];
        for j in 0..g.cells()[1] {
            for i in 0..nx / 2 {
                let a = out.values()[g.cell_index(i, j, 0)];
                let b = out.values()[g.cell_index(nx - 1 - i, j, 0)];
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn regularization_ranges() {
        let mut r = Regularization::off();
        assert!(r.validate(2.0).is_ok());
        r.eps_penalty = 1.0;
        r.s = 2.0;
        assert!(r.validate(2.0).is_err());
        r.s = 3.0;
        assert!(r.validate(2.0).is_ok());
        r.s = 9.5;
        assert!(r.validate(2.0).is_err());
        assert_eq!(Regularization::s_range(4.0), (6.0, 19.0));
        r.delta = -1.0;
        assert!(r.validate(2.0).is_err());
    }

    proptest! {
        #[test]
        fn nonnegative_input_stays_nonnegative(vals in proptest::collection::vec(0.0f64..3.0, 64), dt in 1e-4f64..1.0, m in 1.1f64..3.0) {
            let g = grid(8);
            let n = ScalarField::from_values(&g, vals).unwrap();
            let out = implicit_diffuse_n(&n, dt, m, 1e-6, 0.0).unwrap();
            prop_assert!(out.min() >= -1e-12 * n.max().max(1e-300));
        }
    }
}
