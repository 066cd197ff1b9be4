//! Steady Stokes flow against a dense direct solve.
//!
//! The MAC saddle-point system `-Lap u + grad p = f`, `div u = 0`, with
//! no-slip walls and a zero-mean pressure is assembled here entry by entry
//! and solved with a dense LU factorisation. Implicit time steps of the
//! library solver must converge to the same discrete solution.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use chemostokes::grid::{divergence, Grid, VectorField};
use chemostokes::stokes::StokesSolver;

/// Unknown numbering: interior faces of each axis, then cells, then one
/// multiplier for the pressure mean.
struct Numbering {
    grid: Arc<Grid>,
    faces: Vec<Vec<Option<usize>>>,
    cell0: usize,
    total: usize,
}

impl Numbering {
    fn new(grid: &Arc<Grid>) -> Self {
        let mut next = 0;
        let faces = (0..grid.dim())
            .map(|d| {
                (0..grid.face_count(d))
                    .map(|f| {
                        if grid.is_boundary_face(d, f) {
                            None
                        } else {
                            next += 1;
                            Some(next - 1)
                        }
                    })
                    .collect()
            })
            .collect();
        let cell0 = next;
        Numbering { grid: grid.clone(), faces, cell0, total: cell0 + grid.cell_count() + 1 }
    }

    fn face(&self, d: usize, ijk: [isize; 3]) -> Option<Option<usize>> {
        let g = &self.grid;
        let fd = g.face_dims(d);
        for a in 0..3 {
            if ijk[a] < 0 || ijk[a] as usize >= fd[a] {
                return None;
            }
        }
        Some(self.faces[d][g.face_index(d, [ijk[0] as usize, ijk[1] as usize, ijk[2] as usize])])
    }
}

fn assemble(num: &Numbering, f: &VectorField) -> (DMatrix<f64>, DVector<f64>) {
    let g = &num.grid;
    let h = g.h();
    let mut a = DMatrix::zeros(num.total, num.total);
    let mut b = DVector::zeros(num.total);
    for d in 0..g.dim() {
        for fidx in 0..g.face_count(d) {
            let Some(row) = num.faces[d][fidx] else { continue };
            let ijk = g.face_ijk(d, fidx);
            let at = [ijk[0] as isize, ijk[1] as isize, ijk[2] as isize];
            b[row] = f.component(d)[fidx];
            for e in 0..g.dim() {
                let w = 1.0 / (h[e] * h[e]);
                a[(row, row)] += 2.0 * w;
                for step in [-1isize, 1] {
                    let mut nb = at;
                    nb[e] += step;
                    match num.face(d, nb) {
                        Some(Some(col)) => a[(row, col)] -= w,
                        // wall-normal face: value zero
                        Some(None) => {}
                        // beyond a wall parallel to the face: ghost = -u
                        None => a[(row, row)] += w,
                    }
                }
            }
            // grad p across the face
            if let (Some(lo), Some(hi)) = g.face_cells(d, fidx) {
                a[(row, num.cell0 + hi)] += 1.0 / h[d];
                a[(row, num.cell0 + lo)] -= 1.0 / h[d];
            }
        }
    }
    // -div u = 0 on cells, which makes the matrix symmetric
    for c in 0..g.cell_count() {
        let row = num.cell0 + c;
        let ijk = g.cell_ijk(c);
        for d in 0..g.dim() {
            let (lo, hi) = g.cell_faces(d, ijk);
            if let Some(col) = num.faces[d][hi] {
                a[(row, col)] -= 1.0 / h[d];
            }
            if let Some(col) = num.faces[d][lo] {
                a[(row, col)] += 1.0 / h[d];
            }
        }
        a[(row, num.total - 1)] = 1.0;
        a[(num.total - 1, row)] = 1.0;
    }
    (a, b)
}

fn force(g: &Arc<Grid>) -> VectorField {
    VectorField::from_fn(g, |axis, x| match axis {
        0 => (PI * x[1]).sin() * (2.0 * PI * x[0]).cos() + x[1] * x[1],
        1 => x[0] * (1.0 - x[0]) * (3.0 * x[2] + 1.0),
        _ => (PI * x[0]).cos() * x[1],
    })
}

fn check(grid: Grid) {
    let g = Arc::new(grid);
    let f = force(&g);
    let num = Numbering::new(&g);
    let (a, b) = assemble(&num, &f);
    let sol = a.lu().solve(&b).expect("saddle system is nonsingular");

    let mut solver = StokesSolver::new(&g);
    let mut u = VectorField::zeros(&g);
    for _ in 0..12 {
        u = solver.step_with_force(&u, &f, 50.0).unwrap().0;
    }

    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for d in 0..g.dim() {
        for fidx in 0..g.face_count(d) {
            match num.faces[d][fidx] {
                Some(row) => {
                    scale = scale.max(sol[row].abs());
                    worst = worst.max((u.component(d)[fidx] - sol[row]).abs());
                }
                None => assert_eq!(u.component(d)[fidx], 0.0),
            }
        }
    }
    assert!(scale > 1e-3, "the forcing drives a nontrivial flow");
    assert!(worst <= 1e-8 * scale, "velocity differs by {worst:e} (scale {scale:e})");
    assert!(divergence(&u).max_abs() <= 1e-10 * u.max_abs().max(1.0));

    // pressures agree up to the time-step lag of order 1/dt^k
    let p = &solver.pressure;
    let p_max = (0..g.cell_count()).map(|c| sol[num.cell0 + c].abs()).fold(0.0, f64::max);
    for c in 0..g.cell_count() {
        assert_relative_eq!(p.values()[c], sol[num.cell0 + c], epsilon = 1e-6 * p_max.max(1.0));
    }
}

#[test]
fn steady_flow_matches_direct_solve_2d() {
    check(Grid::new(&[10, 7], &[1.0, 0.8]).unwrap());
}

#[test]
fn steady_flow_matches_direct_solve_3d() {
    check(Grid::new(&[5, 4, 4], &[1.0, 1.0, 0.7]).unwrap());
}
