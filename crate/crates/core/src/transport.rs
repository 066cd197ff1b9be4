//! Advection by the fluid, the chemotactic drift written through the
//! homogenizers, and the zero-order reaction terms.
//!
//! Cell transport is conservative first-order upwind on face velocities, so
//! an explicit update is a convex combination whenever the positivity number
//! `dt * max_cell sum(outflow rates)` stays below one.

use std::sync::Arc;

use crate::coeffs::{CoefficientSample, HomogenizerSample, Homogenizers};
use crate::diffusion::Regularization;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};

/// Face-normal velocities on the MAC faces, boundary faces included.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    grid: Arc<Grid>,
    faces: Vec<Vec<f64>>,
}

impl DriftField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        DriftField {
            grid: grid.clone(),
            faces: (0..grid.dim()).map(|d| vec![0.0; grid.face_count(d)]).collect(),
        }
    }

    pub fn from_velocity(u: &VectorField) -> Self {
        DriftField { grid: u.grid().clone(), faces: u.components().to_vec() }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn component(&self, d: usize) -> &[f64] {
        &self.faces[d]
    }

    pub fn max_abs(&self) -> f64 {
        self.faces.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.faces.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest total outflow rate of any cell (units 1/time).
    pub fn max_outflow_rate(&self) -> f64 {
        outflow_rates(&self.grid, &[self]).into_iter().fold(0.0, f64::max)
    }
}

/// Per-cell sum of outgoing face speeds divided by the cell width.
pub fn outflow_rates(grid: &Grid, fields: &[&DriftField]) -> Vec<f64> {
    let mut out = vec![0.0; grid.cell_count()];
    for field in fields {
        for d in 0..grid.dim() {
            let inv_h = 1.0 / grid.h()[d];
            for (idx, &v) in field.faces[d].iter().enumerate() {
                let (lo, hi) = grid.face_cells(d, idx);
                if v > 0.0 {
                    if let Some(lo) = lo {
                        out[lo] += v * inv_h;
                    }
                } else if v < 0.0 {
                    if let Some(hi) = hi {
                        out[hi] -= v * inv_h;
                    }
                }
            }
        }
    }
    out
}

/// Chemotactic drift `chi (exp(g1) dc~/dx + exp(g1) c~ dg1/dx + dg2/dx)` on
/// every face. Interior faces average `c~` over the two cells; wall faces use
/// the adjacent cell, and there `dc~/dnu = 0`.
pub fn chemo_drift(c_tilde: &ScalarField, sample: &HomogenizerSample, chi: f64) -> DriftField {
    let grid = c_tilde.grid().clone();
    let vals = c_tilde.values();
    let mut out = DriftField::zeros(&grid);
    if chi == 0.0 {
        return out;
    }
    for d in 0..grid.dim() {
        let inv_h = 1.0 / grid.h()[d];
        for (idx, slot) in out.faces[d].iter_mut().enumerate() {
            let [g1, dg1, dg2] = sample.faces[d][idx];
            let e = g1.exp();
            let (c_face, dc) = match grid.face_cells(d, idx) {
                (Some(lo), Some(hi)) => (0.5 * (vals[lo] + vals[hi]), (vals[hi] - vals[lo]) * inv_h),
                (Some(c), None) | (None, Some(c)) => (vals[c], 0.0),
                (None, None) => (0.0, 0.0),
            };
            *slot = chi * (e * dc + e * c_face * dg1 + dg2);
        }
    }
    out
}

/// Convenience form sampling the homogenizers at time `t`.
pub fn chemo_drift_at(c_tilde: &ScalarField, h: &Homogenizers, chi: f64, t: f64) -> DriftField {
    chemo_drift(c_tilde, &h.sample(c_tilde.grid(), t), chi)
}

/// Drift `chi grad c` of the untransformed equation (zero on walls).
pub fn untransformed_drift(c: &ScalarField, chi: f64) -> DriftField {
    let mut d = DriftField::from_velocity(&crate::grid::gradient(c));
    d.faces.iter_mut().flatten().for_each(|v| *v *= chi);
    d
}

/// Upwind face fluxes `v q_upwind`. At a wall the ghost value equals the
/// adjacent cell, so the flux is `v q_cell` whatever the direction.
/// With `positive_part`, `q` is replaced by `max(q, 0)`.
pub fn upwind_fluxes(q: &ScalarField, v: &DriftField, positive_part: bool) -> Vec<Vec<f64>> {
    let grid = q.grid();
    let vals = q.values();
    let val = |c: usize| if positive_part { vals[c].max(0.0) } else { vals[c] };
    (0..grid.dim())
        .map(|d| {
            v.faces[d]
                .iter()
                .enumerate()
                .map(|(idx, &w)| {
                    if w == 0.0 {
                        return 0.0;
                    }
                    let upwind = match grid.face_cells(d, idx) {
                        (Some(lo), Some(hi)) => {
                            if w > 0.0 {
                                lo
                            } else {
                                hi
                            }
                        }
                        (Some(c), None) | (None, Some(c)) => c,
                        (None, None) => return 0.0,
                    };
                    w * val(upwind)
                })
                .collect()
        })
        .collect()
}

/// `-div F` per cell.
pub fn flux_divergence(grid: &Arc<Grid>, fluxes: &[Vec<f64>]) -> ScalarField {
    let mut out = vec![0.0; grid.cell_count()];
    for d in 0..grid.dim() {
        let inv_h = 1.0 / grid.h()[d];
        for (idx, &f) in fluxes[d].iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let (lo, hi) = grid.face_cells(d, idx);
            if let Some(lo) = lo {
                out[lo] -= f * inv_h;
            }
            if let Some(hi) = hi {
                out[hi] += f * inv_h;
            }
        }
    }
    ScalarField::from_values(grid, out).expect("sizes match")
}

/// Net flux leaving the box, `sum over wall faces of F . nu * area`.
pub fn boundary_outflux(grid: &Grid, fluxes: &[Vec<f64>]) -> f64 {
    grid.boundary_faces()
        .iter()
        .map(|bf| bf.outward * fluxes[bf.axis][bf.index] * grid.face_area(bf.axis))
        .sum()
}

/// Conservative upwind increment `-div(v q)`; checks `dt * outflow <= 1`.
pub fn advect_upwind(q: &ScalarField, v: &DriftField, dt: f64) -> Result<ScalarField> {
    let cfl = dt * v.max_outflow_rate();
    if cfl > 1.0 {
        return Err(Error::CflViolation { cfl, limit: 1.0 });
    }
    Ok(flux_divergence(q.grid(), &upwind_fluxes(q, v, false)))
}

/// `mu n (a - n) + g - eps_pen |n|^s n + 2 A max(-n, 0)` per cell.
pub fn reactions_n(n: &ScalarField, coeffs: &CoefficientSample, mu: f64, reg: &Regularization) -> ScalarField {
    let vals: Vec<f64> = n
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| reaction_value(v, coeffs.a[i], coeffs.g[i], mu, reg))
        .collect();
    ScalarField::from_values(n.grid(), vals).expect("sizes match")
}

#[inline]
pub fn reaction_value(n: f64, a: f64, g: f64, mu: f64, reg: &Regularization) -> f64 {
    let mut r = mu * n * (a - n) + g;
    if reg.eps_penalty > 0.0 {
        r -= reg.eps_penalty * n.abs().powf(reg.s) * n;
    }
    if reg.a_penalty > 0.0 {
        r += 2.0 * reg.a_penalty * (-n).max(0.0);
    }
    r
}

/// `w . grad c` at cells. Along each axis the difference is central where
/// the cell Peclet number `|w| h` (unit diffusivity) is at most 2 and upwind
/// elsewhere; walls use the reflecting ghost.
pub fn advective_derivative(c: &ScalarField, w: &[[f64; 3]]) -> Vec<f64> {
    let g = c.grid();
    let vals = c.values();
    let cells = g.cells();
    let mut out = vec![0.0; vals.len()];
    for d in 0..g.dim() {
        let stride = g.cell_stride(d);
        let h = g.h()[d];
        for (idx, slot) in out.iter_mut().enumerate() {
            let wd = w[idx][d];
            if wd == 0.0 {
                continue;
            }
            let i = g.cell_ijk(idx)[d];
            let here = vals[idx];
            let lo = if i > 0 { vals[idx - stride] } else { here };
            let hi = if i + 1 < cells[d] { vals[idx + stride] } else { here };
            let grad = if wd.abs() * h <= 2.0 {
                (hi - lo) / (2.0 * h)
            } else if wd > 0.0 {
                (here - lo) / h
            } else {
                (hi - here) / h
            };
            *slot += wd * grad;
        }
    }
    out
}

/// Right-hand side of the transformed oxygen equation without diffusion:
///
/// ```text
/// -(u - 2 grad g1) . grad c~ + (|grad g1|^2 + Lap g1 - n - u . grad g1 - g1_t) c~
///     + (Lap g2 - u . grad g2 - n g2 - g2_t) exp(-g1)
/// ```
pub fn rhs_c(c_tilde: &ScalarField, n: &ScalarField, u: &VectorField, sample: &HomogenizerSample) -> ScalarField {
    let grid = c_tilde.grid().clone();
    let uc = u.cell_centered();
    let w: Vec<[f64; 3]> = uc
        .iter()
        .zip(&sample.g1)
        .map(|(u, g1)| [u[0] - 2.0 * g1.grad[0], u[1] - 2.0 * g1.grad[1], u[2] - 2.0 * g1.grad[2]])
        .collect();
    let adv = advective_derivative(c_tilde, &w);
    let vals: Vec<f64> = (0..grid.cell_count())
        .map(|i| {
            let g1 = &sample.g1[i];
            let g2 = &sample.g2[i];
            let ui = uc[i];
            let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let ni = n.values()[i];
            let k = dot(g1.grad, g1.grad) + g1.lap - ni - dot(ui, g1.grad) - g1.dt;
            let s = (g2.lap - dot(ui, g2.grad) - ni * g2.value - g2.dt) * (-g1.value).exp();
            -adv[i] + k * c_tilde.values()[i] + s
        })
        .collect();
    ScalarField::from_values(&grid, vals).expect("sizes match")
}
