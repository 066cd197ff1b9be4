//! Manufactured-solution convergence ladders for the heat, advection and
//! fully coupled cases.

use chemostokes::mms::{run_convergence, ManufacturedCase};

fn main() -> chemostokes::Result<()> {
    for case in ManufacturedCase::standard() {
        let table = run_convergence(&case, &case.ladder)?;
        println!("case {} (judged on {}, needs {})", case.name, table.judged_field, table.criterion);
        for row in &table.rows {
            let errs: Vec<String> = row.errors.iter().map(|e| format!("{} {:.3e}", e.field, e.l2)).collect();
            println!("  {:>4} cells  {}", row.cells, errs.join("  "));
        }
        for (field, l2, linf) in &table.orders {
            println!("  order {field:<6} L2 {l2:.3}  Linf {linf:.3}");
        }
        println!("  {}\n", if table.passed { "PASS" } else { "FAIL" });
    }
    Ok(())
}
