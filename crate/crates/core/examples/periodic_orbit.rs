//! Locates the time-periodic solution of a small chemotaxis-Stokes problem
//! as a fixed point of the period map, then re-simulates one period from it.
//!
//! Run with `cargo run --release --example periodic_orbit`.

use chemostokes::config::RunConfig;
use chemostokes::integrator::Integrator;
use chemostokes::periodic::{find_periodic, relative_residual};

const CONFIG: &str = r#"
[grid]
cells = 24

[physics]
m = 1.5
chi = 0.2
mu = 1.0
period = 1.0

[coefficients]
a = "1 + 0.3*cos(pi*x)*cos(pi*y) + 0.2*sin(2*pi*t)"
g = "0.05"
phi = "-y"

[boundary]
mode = "robin"
a1 = "1"
a2 = "0.8"

[integrator]
dt = 0.01

[fixed_point]
max_iters = 30
tol_rel = 1e-9
anderson_depth = 3
"#;

fn main() -> chemostokes::Result<()> {
    let setup = RunConfig::from_toml(CONFIG)?.build()?;
    let report = find_periodic(&setup.problem, &setup.initial, setup.step, setup.fixed_point)?;
    for (k, r) in report.residual_history.iter().enumerate() {
        println!("iteration {:>2}: residual {r:.3e}", k + 1);
    }
    println!("converged: {} in {:.2?}", report.converged, report.wall_time);

    let orbit = &report.final_state;
    let image = Integrator::new(&setup.problem, setup.step)?.poincare_map(orbit)?;
    println!("re-simulated residual: {:.3e}", relative_residual(orbit, &image));
    println!("orbit: mass {:.6}, n in [{:.4}, {:.4}], |u|_inf {:.3e}", orbit.n.integral(), orbit.n.min(), orbit.n.max(), orbit.u.max_abs());
    Ok(())
}
