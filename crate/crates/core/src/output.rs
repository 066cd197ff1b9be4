//! File output: VTK legacy snapshots, CSV tables and the key: value summary.
//!
//! Every float is written with 17 significant digits so that runs can be
//! compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diagnostics::{DiagnosticsLedger, LedgerConfig, Monitors, MoserTable, StepRecord, Verdict, SUPREMUM_FAMILIES};
use crate::error::Result;
use crate::grid::{ScalarField, State, VectorField};
use crate::mms::OrderTable;

/// Formats `v` with 17 significant digits.
/// Negative zero prints as zero.
pub fn fmt17(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn vtk_header(out: &mut String, title: &str, grid: &crate::grid::Grid) {
    let cells = grid.cells();
    let h = grid.h();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{title}");
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", cells[0] + 1, cells[1] + 1, cells[2] + 1);
    out.push_str("ORIGIN 0 0 0\n");
    let hz = if grid.dim() == 3 { h[2] } else { 1.0 };
    let _ = writeln!(out, "SPACING {} {} {}", fmt17(h[0]), fmt17(h[1]), fmt17(hz));
    let _ = writeln!(out, "CELL_DATA {}", grid.cell_count());
}

/// Cell scalar as a VTK legacy STRUCTURED_POINTS file.
pub fn vtk_scalar(field: &ScalarField, name: &str) -> String {
    let mut out = String::new();
    vtk_header(&mut out, name, field.grid());
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in field.values() {
        out.push_str(&fmt17(*v));
        out.push('\n');
    }
    out
}

/// Face velocity averaged to cell centres, as VTK VECTORS.
pub fn vtk_vector(field: &VectorField, name: &str) -> String {
    let mut out = String::new();
    vtk_header(&mut out, name, field.grid());
    let _ = writeln!(out, "VECTORS {name} double");
    for v in field.cell_centered() {
        let _ = writeln!(out, "{} {} {}", fmt17(v[0]), fmt17(v[1]), fmt17(v[2]));
    }
    out
}

/// `cell,x,y,z,value` rows.
pub fn csv_scalar(field: &ScalarField) -> String {
    let g = field.grid();
    let mut out = String::from("cell,x,y,z,value\n");
    for (c, v) in field.values().iter().enumerate() {
        let x = g.cell_center(c);
        let _ = writeln!(out, "{c},{},{},{},{}", fmt17(x[0]), fmt17(x[1]), fmt17(x[2]), fmt17(*v));
    }
    out
}

/// Writes `n`, `c` (reconstructed) and `u` of one snapshot under `dir`,
/// named `<stem>_<field>.vtk` / `.csv`.
pub fn write_snapshot(dir: &Path, stem: &str, state: &State, c: &ScalarField) -> Result<()> {
    write_file(&dir.join(format!("{stem}_n.vtk")), &vtk_scalar(&state.n, "n"))?;
    write_file(&dir.join(format!("{stem}_c.vtk")), &vtk_scalar(c, "c"))?;
    write_file(&dir.join(format!("{stem}_c_tilde.vtk")), &vtk_scalar(&state.c_tilde, "c_tilde"))?;
    write_file(&dir.join(format!("{stem}_u.vtk")), &vtk_vector(&state.u, "u"))?;
    write_file(&dir.join(format!("{stem}_n.csv")), &csv_scalar(&state.n))?;
    write_file(&dir.join(format!("{stem}_c.csv")), &csv_scalar(c))?;
    Ok(())
}

pub const STEP_COLUMNS: &[&str] = &[
    "t",
    "dt",
    "mass",
    "budget_residual",
    "boundary_outflux",
    "reaction_integral",
    "clipped_mass",
    "min_before_clip",
    "n_max",
    "u_inf",
    "divergence",
    "positivity_number",
    "substeps",
];

pub const MONITOR_COLUMNS: &[&str] = &[
    "t",
    "n_min",
    "n_max",
    "c_min",
    "c_max",
    "mass",
    "entropy",
    "entropy_dissipation",
    "grad_nm",
    "grad_sqrt_n",
    "grad_n_quarter_m",
    "quartic",
    "nt_sq",
    "lap_nm_sq",
    "u_inf",
    "grad_u_inf",
    "c_tilde_w1inf",
    "divergence",
];

fn csv_line(values: impl IntoIterator<Item = String>) -> String {
    let mut s = values.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Per-step mass bookkeeping.
pub fn steps_csv(ledger: &DiagnosticsLedger) -> String {
    let mut out = csv_line(STEP_COLUMNS.iter().map(|s| s.to_string()));
    for s in &ledger.steps {
        let vals = [
            s.t,
            s.dt,
            s.mass,
            s.budget_residual,
            s.boundary_outflux,
            s.reaction_integral,
            s.clipped_mass,
            s.min_before_clip,
            s.n_max,
            s.u_inf,
            s.divergence,
            s.positivity_number,
        ];
        let mut row: Vec<String> = vals.iter().map(|v| fmt17(*v)).collect();
        row.push(s.substeps.to_string());
        out.push_str(&csv_line(row));
    }
    out
}

/// Extrema, entropy, energies and sup norms.
pub fn monitors_csv(ledger: &DiagnosticsLedger) -> String {
    let mut out = csv_line(MONITOR_COLUMNS.iter().map(|s| s.to_string()));
    for r in &ledger.monitors {
        let vals = [
            r.t,
            r.n_min,
            r.n_max,
            r.c_min,
            r.c_max,
            r.mass,
            r.entropy,
            r.entropy_dissipation,
            r.grad_nm,
            r.grad_sqrt_n,
            r.grad_n_quarter_m,
            r.quartic,
            r.nt_sq,
            r.lap_nm_sq,
            r.u_inf,
            r.grad_u_inf,
            r.c_tilde_w1inf,
            r.divergence,
        ];
        out.push_str(&csv_line(vals.iter().map(|v| fmt17(*v))));
    }
    out
}

/// `t` followed by `||n||_{L^r}` for each ladder exponent.
pub fn lp_csv(ledger: &DiagnosticsLedger) -> String {
    let mut head = vec!["t".to_string()];
    head.extend(ledger.ladder.iter().map(|r| format!("L{}", fmt17(*r))));
    let mut out = csv_line(head);
    for r in &ledger.monitors {
        let mut row = vec![fmt17(r.t)];
        row.extend(r.lp.iter().map(|v| fmt17(*v)));
        out.push_str(&csv_line(row));
    }
    out
}

pub fn suprema_csv(ledger: &DiagnosticsLedger) -> String {
    let mut head = vec!["period".to_string()];
    head.extend(SUPREMUM_FAMILIES.iter().map(|s| s.to_string()));
    let mut out = csv_line(head);
    for (k, row) in ledger.period_suprema().iter().enumerate() {
        let mut line = vec![k.to_string()];
        line.extend(row.iter().map(|v| fmt17(*v)));
        out.push_str(&csv_line(line));
    }
    out
}

pub fn moser_csv(table: &MoserTable) -> String {
    let mut out = String::from("level,exponent,sup_norm,ratio\n");
    for (j, (r, m)) in table.exponents.iter().zip(&table.suprema).enumerate() {
        let ratio = if j == 0 { String::new() } else { fmt17(table.ratios[j - 1]) };
        out.push_str(&csv_line([j.to_string(), fmt17(*r), fmt17(*m), ratio]));
    }
    out
}

/// Ledger constants needed to re-render the verdicts from the CSVs.
pub fn ledger_meta(ledger: &DiagnosticsLedger) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "m: {}", fmt17(ledger.m));
    let _ = writeln!(out, "eps: {}", fmt17(ledger.eps));
    let _ = writeln!(out, "period: {}", fmt17(ledger.period));
    let _ = writeln!(out, "t_start: {}", fmt17(ledger.t_start));
    let _ = writeln!(out, "c0_max: {}", fmt17(ledger.c0_max));
    let _ = writeln!(out, "g2_sup: {}", fmt17(ledger.g2_sup));
    let _ = writeln!(out, "stride: {}", ledger.config.stride);
    let _ = writeln!(out, "moser_levels: {}", ledger.config.moser_levels);
    out
}

/// Writes every ledger table into `dir`.
pub fn write_ledger(dir: &Path, ledger: &DiagnosticsLedger, moser: &MoserTable) -> Result<()> {
    write_file(&dir.join("steps.csv"), &steps_csv(ledger))?;
    write_file(&dir.join("monitors.csv"), &monitors_csv(ledger))?;
    write_file(&dir.join("lp_norms.csv"), &lp_csv(ledger))?;
    write_file(&dir.join("period_suprema.csv"), &suprema_csv(ledger))?;
    write_file(&dir.join("moser.csv"), &moser_csv(moser))?;
    write_file(&dir.join("ledger_meta.txt"), &ledger_meta(ledger))?;
    Ok(())
}

pub fn residuals_csv(history: &[f64]) -> String {
    let mut out = String::from("iteration,residual\n");
    for (i, r) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, fmt17(*r));
    }
    out
}

pub fn order_csv(table: &OrderTable) -> String {
    let mut head = vec!["cells".to_string(), "h".into(), "dt".into(), "steps".into()];
    for e in &table.rows[0].errors {
        head.push(format!("{}_l2", e.field));
        head.push(format!("{}_linf", e.field));
    }
    let mut out = csv_line(head);
    for r in &table.rows {
        let mut line = vec![r.cells.to_string(), fmt17(r.h), fmt17(r.dt), r.steps.to_string()];
        for e in &r.errors {
            line.push(fmt17(e.l2));
            line.push(fmt17(e.linf));
        }
        out.push_str(&csv_line(line));
    }
    out
}

/// Line-oriented summary: `key: value` entries, then one verdict per line
/// as `check <name>: PASS|FAIL value=<v> limit=<l> [detail]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
    pub verdicts: Vec<Verdict>,
}

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, fmt17(value));
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}: {v}");
        }
        for v in &self.verdicts {
            let _ = write!(
                out,
                "check {}: {} value={} limit={}",
                v.name,
                if v.passed { "PASS" } else { "FAIL" },
                fmt17(v.value),
                fmt17(v.limit)
            );
            if !v.detail.is_empty() {
                let _ = write!(out, " [{}]", v.detail);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

/// Parses a CSV written by this module into its header and numeric rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| crate::Error::Config("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    if v.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        v.parse::<f64>().map_err(|e| crate::Error::Config(format!("bad CSV value `{v}`: {e}")))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| crate::Error::Config(format!("missing CSV column `{name}`")))
}

fn read_table(dir: &Path, name: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path)
        .map_err(|e| crate::Error::Config(format!("cannot read {}: {e}", path.display())))?;
    read_csv(&text)
}

/// Parses a `key: value` text file.
pub fn read_key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Rebuilds a ledger from the tables written by [`write_ledger`].
pub fn read_ledger(dir: &Path) -> Result<DiagnosticsLedger> {
    let meta_path = dir.join("ledger_meta.txt");
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|e| crate::Error::Config(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta = read_key_values(&meta_text);
    let get = |key: &str| -> Result<f64> {
        meta.iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| crate::Error::Config(format!("ledger_meta.txt lacks `{key}`")))?
            .1
            .parse::<f64>()
            .map_err(|e| crate::Error::Config(format!("ledger_meta.txt `{key}`: {e}")))
    };
    let config = LedgerConfig { stride: get("stride")? as usize, moser_levels: get("moser_levels")? as usize };

    let (head, rows) = read_table(dir, "steps.csv")?;
    let idx: Vec<usize> = STEP_COLUMNS.iter().map(|c| column(&head, c)).collect::<Result<_>>()?;
    let steps = rows
        .iter()
        .map(|r| {
            let v = |i: usize| r[idx[i]];
            StepRecord {
                t: v(0),
                dt: v(1),
                mass: v(2),
                budget_residual: v(3),
                boundary_outflux: v(4),
                reaction_integral: v(5),
                clipped_mass: v(6),
                min_before_clip: v(7),
                n_max: v(8),
                u_inf: v(9),
                divergence: v(10),
                positivity_number: v(11),
                substeps: v(12) as usize,
            }
        })
        .collect();

    let (head, rows) = read_table(dir, "monitors.csv")?;
    let (_, lp_rows) = read_table(dir, "lp_norms.csv")?;
    if lp_rows.len() != rows.len() {
        return Err(crate::Error::Config("monitors.csv and lp_norms.csv differ in length".into()));
    }
    let idx: Vec<usize> = MONITOR_COLUMNS.iter().map(|c| column(&head, c)).collect::<Result<_>>()?;
    let monitors = rows
        .iter()
        .zip(&lp_rows)
        .map(|(r, lp)| {
            let v = |i: usize| r[idx[i]];
            Monitors {
                t: v(0),
                n_min: v(1),
                n_max: v(2),
                c_min: v(3),
                c_max: v(4),
                mass: v(5),
                entropy: v(6),
                entropy_dissipation: v(7),
                grad_nm: v(8),
                grad_sqrt_n: v(9),
                grad_n_quarter_m: v(10),
                quartic: v(11),
                nt_sq: v(12),
                lap_nm_sq: v(13),
                u_inf: v(14),
                grad_u_inf: v(15),
                c_tilde_w1inf: v(16),
                divergence: v(17),
                lp: lp[1..].to_vec(),
            }
        })
        .collect();

    Ok(DiagnosticsLedger::from_records(
        config,
        get("m")?,
        get("eps")?,
        get("period")?,
        get("t_start")?,
        get("c0_max")?,
        get("g2_sup")?,
        steps,
        monitors,
    ))
}
