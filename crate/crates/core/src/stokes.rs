//! Unsteady Stokes flow on the MAC grid with no-slip walls.
//!
//! A step is fully implicit (backward Euler in velocity and pressure), so it
//! is stable for any time step and reproduces steady discrete Stokes
//! solutions. The pressure comes from an iterative Schur-complement solve;
//! a final projection removes the divergence left by its tolerance, and the
//! projection potential is added back to the pressure.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, Grid, ScalarField, VectorField};
use crate::linalg::{conjugate_gradient, CgOptions, NeumannPoisson, SeparableSolver};

#[derive(Debug, Clone)]
pub struct StokesSolver {
    grid: Arc<Grid>,
    poisson: NeumannPoisson,
    viscous: Vec<SeparableSolver>,
    /// Relative tolerance of the pressure solve.
    pub rtol: f64,
    /// Pressure from the most recent step (zero mean).
    pub pressure: ScalarField,
}

impl StokesSolver {
    pub fn new(grid: &Arc<Grid>) -> Self {
        StokesSolver {
            grid: grid.clone(),
            poisson: NeumannPoisson::new(grid),
            viscous: (0..grid.dim()).map(|d| SeparableSolver::velocity(grid, d)).collect(),
            rtol: 1e-10,
            pressure: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Helmholtz–Leray projection: returns `v - grad p` and `p`, where `p`
    /// has zero mean and `Lap_h p = div v`. Wall-normal components of `v`
    /// are treated as zero.
    pub fn leray_project(&self, v: &VectorField) -> Result<(VectorField, ScalarField)> {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "velocity before projection".into() });
        }
        let mut out = v.clone();
        out.zero_boundary_normals();
        let mut p = vec![0.0; self.grid.cell_count()];
        // One pass of iterative refinement recovers the digits lost in the
        // dense transforms.
        for _ in 0..2 {
            let div = divergence(&out);
            let q = self.poisson.solve(div.values());
            let qf = ScalarField::from_values(&self.grid, q)?;
            out.axpy(-1.0, &gradient(&qf));
            for (a, b) in p.iter_mut().zip(qf.values()) {
                *a += b;
            }
        }
        Ok((out, ScalarField::from_values(&self.grid, p)?))
    }

    /// Face force `n_face (phi_hi - phi_lo) / h` on interior faces.
    pub fn body_force(&self, n: &ScalarField, phi: &[f64]) -> VectorField {
        let g = &self.grid;
        let nv = n.values();
        VectorField::from_components(
            g,
            (0..g.dim())
                .map(|d| {
                    (0..g.face_count(d))
                        .map(|idx| match g.face_cells(d, idx) {
                            (Some(lo), Some(hi)) => 0.5 * (nv[lo] + nv[hi]) * (phi[hi] - phi[lo]) / g.h()[d],
                            _ => 0.0,
                        })
                        .collect()
                })
                .collect(),
        )
        .expect("sizes match")
    }

    /// One step driven by `n grad(phi)` with `phi` sampled at cell centres.
    pub fn stokes_step(&mut self, u: &VectorField, n: &ScalarField, phi: &[f64], dt: f64) -> Result<(VectorField, ScalarField)> {
        let f = self.body_force(n, phi);
        self.step_with_force(u, &f, dt)
    }

    /// One step with a given face force.
    ///
    /// The pressure solves the Schur complement `D V^-1 G pi = D V^-1 (u + dt f) / dt`
    /// of the implicit system, `V = I - dt Lap_h`, by PCG preconditioned with
    /// `(-Lap_h)^-1 + dt`. The previous explicit estimate warm-starts it.
    pub fn step_with_force(&mut self, u: &VectorField, f: &VectorField, dt: f64) -> Result<(VectorField, ScalarField)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be > 0, got {dt}")));
        }
        let g = self.grid.clone();
        let mut f = f.clone();
        f.zero_boundary_normals();
        // warm start from Lap_h pe = div(f + Lap_h u)
        let mut drive = vector_laplacian(u);
        drive.axpy(1.0, &f);
        let mut pi = self.poisson.solve(divergence(&drive).values());

        let mut r = u.clone();
        r.axpy(dt, &f);
        r.zero_boundary_normals();
        let vr = self.viscous_solve(&r, dt)?;
        let b: Vec<f64> = divergence(&vr).values().iter().map(|v| -v / dt).collect();
        let schur = |x: &[f64], out: &mut [f64]| {
            let xf = ScalarField::from_values(&g, x.to_vec()).expect("sizes match");
            let w = self.viscous_solve(&gradient(&xf), dt).expect("finite input");
            for (o, v) in out.iter_mut().zip(divergence(&w).values()) {
                *o = -v;
            }
        };
        let precond = |res: &[f64], z: &mut [f64]| {
            let q = self.poisson.solve(res);
            let mean = res.iter().sum::<f64>() / res.len() as f64;
            for i in 0..z.len() {
                z[i] = -q[i] + dt * (res[i] - mean);
            }
        };
        let opts = CgOptions::for_size(self.rtol, pi.len());
        conjugate_gradient(schur, precond, &b, &mut pi, opts, "Stokes pressure")?;

        let pe = ScalarField::from_values(&g, pi)?;
        let mut rhs = r;
        rhs.axpy(-dt, &gradient(&pe));
        let star = self.viscous_solve(&rhs, dt)?;
        let (next, phi) = self.leray_project(&star)?;
        let pressure = pe.zip_map(&phi, |a, b| a + b / dt)?;
        if !next.is_finite() {
            return Err(Error::NonFinite { what: "velocity".into() });
        }
        self.pressure = pressure.clone();
        Ok((next, pressure))
    }

    /// Solves `(I - dt Lap_h) x = rhs` on interior faces, wall-normal faces 0.
    /// Each component is diagonalised exactly by its sine basis.
    pub fn viscous_solve(&self, rhs: &VectorField, dt: f64) -> Result<VectorField> {
        let g = &self.grid;
        let mut out = VectorField::zeros(g);
        for (d, solver) in self.viscous.iter().enumerate() {
            let dims = solver.dims();
            let fdims = g.face_dims(d);
            let index = |a: usize, b: usize, c: usize| {
                let mut ijk = [a, b, c];
                ijk[d] += 1;
                ijk[0] + fdims[0] * (ijk[1] + fdims[1] * ijk[2])
            };
            let src = rhs.component(d);
            let mut compact = Vec::with_capacity(dims.iter().product());
            for c in 0..dims[2] {
                for b in 0..dims[1] {
                    for a in 0..dims[0] {
                        compact.push(src[index(a, b, c)]);
                    }
                }
            }
            let solved = solver.solve_shifted(&compact, dt);
            let dst = out.component_mut(d);
            let mut it = solved.into_iter();
            for c in 0..dims[2] {
                for b in 0..dims[1] {
                    for a in 0..dims[0] {
                        dst[index(a, b, c)] = it.next().expect("sizes match");
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Componentwise Laplacian of a MAC velocity with no-slip walls.
///
/// Along its own axis a component couples to neighbouring faces (wall faces
/// hold 0); across other axes a missing neighbour is the ghost `-u`, which
/// puts the zero on the wall. Wall-normal faces return 0.
pub fn vector_laplacian(u: &VectorField) -> VectorField {
    let g = u.grid().clone();
    let cells = g.cells();
    let comps = (0..g.dim())
        .map(|d| {
            let src = u.component(d);
            let fd = g.face_dims(d);
            let strides = [1, fd[0], fd[0] * fd[1]];
            (0..g.face_count(d))
                .map(|idx| {
                    if g.is_boundary_face(d, idx) {
                        return 0.0;
                    }
                    let ijk = g.face_ijk(d, idx);
                    let here = src[idx];
                    let mut s = 0.0;
                    for e in 0..g.dim() {
                        let w = 1.0 / (g.h()[e] * g.h()[e]);
                        let st = strides[e];
                        if e == d {
                            let lo = if ijk[d] - 1 == 0 { 0.0 } else { src[idx - st] };
                            let hi = if ijk[d] + 1 == cells[d] { 0.0 } else { src[idx + st] };
                            s += (lo + hi - 2.0 * here) * w;
                        } else {
                            let lo = if ijk[e] == 0 { -here } else { src[idx - st] };
                            let hi = if ijk[e] + 1 == cells[e] { -here } else { src[idx + st] };
                            s += (lo + hi - 2.0 * here) * w;
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    VectorField::from_components(&g, comps).expect("sizes match")
}
