//! Runs three periods of the small reference problem with the diagnostics
//! ledger attached and prints the verdict suite and the Moser table.

use std::path::PathBuf;

use chemostokes::config::RunConfig;
use chemostokes::diagnostics::{moser_escalation, stationarity, verdict_suite, DiagnosticsLedger};
use chemostokes::integrator::Integrator;

fn main() -> chemostokes::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let cfg = RunConfig::load(&path)?;
    let setup = cfg.build()?;

    let mut ledger = DiagnosticsLedger::new(&setup.problem, &setup.initial, setup.ledger);
    let mut integ = Integrator::new(&setup.problem, setup.step)?;
    let mut state = setup.initial.clone();
    for _ in 0..cfg.run.periods {
        state = integ.simulate_period(&state, &mut ledger)?;
    }

    for v in verdict_suite(&ledger, setup.step.clip_negative, false) {
        println!("{:<18} {}  value {:.3e}  {}", v.name, if v.passed { "PASS" } else { "FAIL" }, v.value, v.detail);
    }

    let table = moser_escalation(&ledger, ledger.m);
    println!("\nMoser ladder (r0 = 2m + 2/3 = {:.4})", table.exponents[0]);
    for (j, (r, s)) in table.exponents.iter().zip(&table.suprema).enumerate() {
        println!("  j = {j}: r = {r:>9.3}  sup ||n||_r = {s:.6}");
    }
    println!("  sup ||n||_inf = {:.6}, top gap {:.2}%", table.linf_sup, 100.0 * table.top_gap);

    println!("\nperiod-over-period change (not on the orbit, so still drifting):");
    for (name, change) in stationarity(&ledger).iter().take(6) {
        println!("  {name:<20} {change:.3e}");
    }
    Ok(())
}
