//! Writes legacy VTK and CSV snapshots of a short run into a directory
//! (default `out/snapshot_example`, or the first argument).

use std::path::PathBuf;

use chemostokes::config::RunConfig;
use chemostokes::integrator::Integrator;
use chemostokes::output::write_snapshot;

fn main() -> chemostokes::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("out/snapshot_example"), PathBuf::from);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let setup = RunConfig::load(&path)?.build()?;
    let mut integ = Integrator::new(&setup.problem, setup.step)?;
    let mut state = setup.initial.clone();
    let quarter = integ.steps_per_period() / 4;
    for k in 0..4 {
        let c = setup.problem.homogenizers.from_homogeneous(&state.c_tilde, state.t);
        let stem = format!("quarter{k}");
        write_snapshot(&dir, &stem, &state, &c)?;
        println!("wrote {}/{stem}_*.vtk at t = {:.3}", dir.display(), state.t);
        state = integ.simulate_steps(&state, quarter, &mut chemostokes::integrator::no_hook())?;
    }
    Ok(())
}
