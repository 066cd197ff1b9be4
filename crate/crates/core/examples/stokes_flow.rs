//! Drives a no-slip Stokes flow with the buoyancy force `n grad(phi)` of a
//! lopsided cell density, and Leray-projects an arbitrary face field.

use std::sync::Arc;

use chemostokes::grid::{divergence, Grid, ScalarField, VectorField};
use chemostokes::stokes::StokesSolver;

fn main() -> chemostokes::Result<()> {
    let grid = Arc::new(Grid::new(&[48, 32], &[1.5, 1.0])?);
    let mut solver = StokesSolver::new(&grid);

    let n = ScalarField::from_fn(&grid, |x| 1.0 + (-20.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.4).powi(2))).exp());
    let phi: Vec<f64> = (0..grid.cell_count()).map(|c| -grid.cell_center(c)[1]).collect();

    let mut u = VectorField::zeros(&grid);
    for step in 1..=20 {
        let (next, _) = solver.stokes_step(&u, &n, &phi, 0.05)?;
        let change = {
            let mut d = next.clone();
            d.axpy(-1.0, &u);
            d.max_abs()
        };
        u = next;
        if step % 5 == 0 {
            println!(
                "step {step:>2}: |u|_inf = {:.6e}  |du|_inf = {change:.2e}  |div u|_inf = {:.2e}",
                u.max_abs(),
                divergence(&u).max_abs()
            );
        }
    }

    let v = VectorField::from_fn(&grid, |axis, x| if axis == 0 { x[0] * x[1] } else { (3.0 * x[0]).sin() });
    let (w, p) = solver.leray_project(&v)?;
    println!(
        "projection: |div v| = {:.3e} -> |div w| = {:.3e}, pressure range {:.4}",
        divergence(&v).max_abs(),
        divergence(&w).max_abs(),
        p.max() - p.min()
    );
    Ok(())
}
