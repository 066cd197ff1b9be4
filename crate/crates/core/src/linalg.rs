//! Preconditioned conjugate gradients and exact separable solvers.
//!
//! Constant-coefficient operators on the box (the Neumann Laplacian on
//! cells, and each velocity component's Laplacian with no-slip walls) are
//! diagonalised by tensor products of 1D sine/cosine bases. Those solves are
//! done exactly; the same transforms precondition variable-coefficient
//! problems.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rtol: f64,
    pub max_iter: usize,
}

impl CgOptions {
    /// Relative tolerance `rtol`, at most `10 * unknowns` iterations.
    pub fn for_size(rtol: f64, unknowns: usize) -> Self {
        CgOptions {
            rtol,
            max_iter: 10 * unknowns.max(10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Diagonal (Jacobi) preconditioner.
pub fn jacobi(diag: &[f64]) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |r: &[f64], z: &mut [f64]| {
        for i in 0..r.len() {
            z[i] = if diag[i] != 0.0 { r[i] / diag[i] } else { r[i] };
        }
    }
}

/// Solves `A x = b` for symmetric positive definite `A` given as a closure
/// `apply(x, out)`, preconditioned by the SPD closure `precond(r, z)`.
/// `x` holds the initial guess on entry.
///
/// The stopping test uses the true residual, recomputed whenever the
/// recursive one claims convergence.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
    solver: &'static str,
) -> Result<CgStats> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let target = opts.rtol * b_norm;

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut res_norm;

    for _restart in 0..4 {
        apply(x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        res_norm = dot(&r, &r).sqrt();
        if res_norm <= target {
            return Ok(CgStats { iterations, relative_residual: res_norm / b_norm });
        }
        precond(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < opts.max_iter {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            res_norm = dot(&r, &r).sqrt();
            if !res_norm.is_finite() {
                return Err(Error::SolverDivergence { solver, iterations, residual: f64::NAN });
            }
            if res_norm <= target {
                break;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
    }
    apply(x, &mut ap);
    let true_res = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai) * (bi - ai)).sum::<f64>().sqrt();
    if true_res <= target {
        Ok(CgStats { iterations, relative_residual: true_res / b_norm })
    } else {
        Err(Error::SolverDivergence { solver, iterations, residual: true_res / b_norm })
    }
}

/// Boundary treatment of a 1D second-difference operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// `n` cells, reflecting ghosts: `cos(pi k (i + 1/2) / n)`, `k = 0..n`.
    Neumann,
    /// The `n - 1` interior faces of `n` cells, zero at both walls:
    /// `sin(pi k i / n)`, `i, k = 1..n`.
    DirichletFaces,
    /// `n` cells, ghosts `-u` (zero on the wall faces):
    /// `sin(pi (k + 1) (i + 1/2) / n)`, `k = 0..n`.
    DirichletCells,
}

/// Orthogonal eigenbasis of one 1D operator.
#[derive(Debug, Clone)]
struct Transform1D {
    len: usize,
    /// forward[k * len + i] = v_k(i) / |v_k|^2
    forward: Vec<f64>,
    /// inverse[i * len + k] = v_k(i)
    inverse: Vec<f64>,
    eigen: Vec<f64>,
}

impl Transform1D {
    fn new(kind: Basis, cells: usize, h: f64) -> Self {
        let nf = cells as f64;
        let len = match kind {
            Basis::DirichletFaces => cells - 1,
            _ => cells,
        };
        let mut forward = vec![0.0; len * len];
        let mut inverse = vec![0.0; len * len];
        let mut eigen = Vec::with_capacity(len);
        for k in 0..len {
            let (freq, shift) = match kind {
                Basis::Neumann => (k as f64, 0.5),
                Basis::DirichletFaces => ((k + 1) as f64, 1.0),
                Basis::DirichletCells => ((k + 1) as f64, 0.5),
            };
            let s = (PI * freq / (2.0 * nf)).sin();
            eigen.push(-4.0 * s * s / (h * h));
            let v: Vec<f64> = (0..len)
                .map(|i| {
                    let arg = PI * freq * (i as f64 + shift) / nf;
                    match kind {
                        Basis::Neumann => arg.cos(),
                        _ => arg.sin(),
                    }
                })
                .collect();
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            for i in 0..len {
                forward[k * len + i] = v[i] / norm2;
                inverse[i * len + k] = v[i];
            }
        }
        Transform1D { len, forward, inverse, eigen }
    }
}

/// Exact solver for `f(Lap_h) x = b` where `Lap_h` is a sum of 1D second
/// differences with the given per-axis boundary treatment, acting on a
/// compact `dims[0] x dims[1] x dims[2]` array.
#[derive(Debug, Clone)]
pub struct SeparableSolver {
    dims: [usize; 3],
    dim: usize,
    axes: Vec<Transform1D>,
    /// Sum of the per-axis eigenvalues at each compact index.
    lambda: Vec<f64>,
}

impl SeparableSolver {
    pub fn new(grid: &Grid, bases: &[Basis]) -> Self {
        let cells = grid.cells();
        let axes: Vec<Transform1D> = (0..grid.dim()).map(|d| Transform1D::new(bases[d], cells[d], grid.h()[d])).collect();
        let mut dims = [1usize; 3];
        for (d, a) in axes.iter().enumerate() {
            dims[d] = a.len;
        }
        let total = dims[0] * dims[1] * dims[2];
        let lambda = (0..total)
            .map(|idx| {
                let i = idx % dims[0];
                let j = (idx / dims[0]) % dims[1];
                let k = idx / (dims[0] * dims[1]);
                let mut l = axes[0].eigen[i] + axes[1].eigen[j];
                if grid.dim() == 3 {
                    l += axes[2].eigen[k];
                }
                l
            })
            .collect();
        SeparableSolver { dims, dim: grid.dim(), axes, lambda }
    }

    /// Neumann Laplacian on cell centres.
    pub fn cells(grid: &Grid) -> Self {
        SeparableSolver::new(grid, &[Basis::Neumann; 3])
    }

    /// No-slip Laplacian of velocity component `axis` on its interior faces.
    pub fn velocity(grid: &Grid, axis: usize) -> Self {
        let mut bases = [Basis::DirichletCells; 3];
        bases[axis] = Basis::DirichletFaces;
        SeparableSolver::new(grid, &bases)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn transform(&self, data: &mut [f64], axis: usize, forward: bool) {
        let t = &self.axes[axis];
        let matrix = if forward { &t.forward } else { &t.inverse };
        let n = self.dims[axis];
        let stride = match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        };
        let total = data.len();
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for start in 0..total {
            if (start / stride) % n != 0 {
                continue;
            }
            for i in 0..n {
                line[i] = data[start + i * stride];
            }
            for (row, o) in out.iter_mut().enumerate() {
                let m = &matrix[row * n..(row + 1) * n];
                *o = m.iter().zip(&line).map(|(a, b)| a * b).sum();
            }
            for i in 0..n {
                data[start + i * stride] = out[i];
            }
        }
    }

    /// Multiplies each eigencomponent of `rhs` by `f(lambda)`.
    pub fn apply_spectral(&self, rhs: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut data = rhs.to_vec();
        for d in 0..self.dim {
            self.transform(&mut data, d, true);
        }
        for (v, &l) in data.iter_mut().zip(&self.lambda) {
            *v *= f(l);
        }
        for d in 0..self.dim {
            self.transform(&mut data, d, false);
        }
        data
    }

    /// Solves `(I - dt Lap_h) x = rhs`.
    pub fn solve_shifted(&self, rhs: &[f64], dt: f64) -> Vec<f64> {
        self.apply_spectral(rhs, |l| 1.0 / (1.0 - dt * l))
    }
}

/// Exact solver for the cell-centred Neumann Laplacian; the mean of the
/// right-hand side (its incompatible part) is discarded and the solution
/// has zero mean.
#[derive(Debug, Clone)]
pub struct NeumannPoisson {
    inner: SeparableSolver,
}

impl NeumannPoisson {
    pub fn new(grid: &Grid) -> Self {
        NeumannPoisson { inner: SeparableSolver::cells(grid) }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.inner.apply_spectral(rhs, |l| if l == 0.0 { 0.0 } else { 1.0 / l })
    }
}
