//! Degenerate porous-medium diffusion of a compactly supported bump: the
//! support spreads at finite speed and the mass is conserved.

use std::sync::Arc;

use chemostokes::diffusion::implicit_diffuse_n;
use chemostokes::grid::{Grid, ScalarField};

fn support_radius(n: &ScalarField) -> f64 {
    let g = n.grid();
    (0..g.cell_count())
        .filter(|&c| n.values()[c] > 1e-6)
        .map(|c| {
            let x = g.cell_center(c);
            ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

fn main() -> chemostokes::Result<()> {
    let grid = Arc::new(Grid::square(64, 1.0)?);
    let m = 2.0;
    let mut n = ScalarField::from_fn(&grid, |x| {
        let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
        (1.0 - r2 / 0.01).max(0.0)
    });
    let mass0 = n.integral();
    let dt = 2e-4;
    println!("{:>8} {:>10} {:>12} {:>12}", "t", "radius", "max n", "mass error");
    for k in 0..=200 {
        if k % 40 == 0 {
            println!(
                "{:>8.4} {:>10.4} {:>12.6} {:>12.2e}",
                k as f64 * dt,
                support_radius(&n),
                n.max(),
                (n.integral() - mass0).abs() / mass0
            );
        }
        n = implicit_diffuse_n(&n, dt, m, 0.0, 0.0)?;
    }
    Ok(())
}
