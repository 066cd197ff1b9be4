//! Conservative first-order upwind transport of a density by a rotating,
//! divergence-free velocity: no new extrema, exact mass balance.

use std::f64::consts::PI;
use std::sync::Arc;

use chemostokes::grid::{Grid, ScalarField, VectorField};
use chemostokes::transport::{advect_upwind, DriftField};

fn main() -> chemostokes::Result<()> {
    let grid = Arc::new(Grid::square(64, 1.0)?);
    // curl of sin^2(pi x) sin^2(pi y) / pi
    let u = VectorField::from_fn(&grid, |axis, x| {
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        if axis == 0 {
            sx * sx * (2.0 * PI * x[1]).sin()
        } else {
            -(2.0 * PI * x[0]).sin() * sy * sy
        }
    });
    let drift = DriftField::from_velocity(&u);
    let dt = 0.9 / drift.max_outflow_rate();

    let mut q = ScalarField::from_fn(&grid, |x| if (x[0] - 0.3).abs() < 0.1 && (x[1] - 0.5).abs() < 0.1 { 1.0 } else { 0.0 });
    let mass0 = q.integral();
    let steps = (0.5 / dt).ceil() as usize;
    for _ in 0..steps {
        let inc = advect_upwind(&q, &drift, dt)?;
        q = q.zip_map(&inc, |a, b| a + dt * b)?;
    }
    println!("steps {steps}, dt {dt:.3e}");
    println!("min {:.3e}  max {:.6}  mass drift {:.2e}", q.min(), q.max(), (q.integral() - mass0).abs() / mass0);
    Ok(())
}
