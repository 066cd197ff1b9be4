//! Runtime audit of the a-priori bounds on cell density, oxygen and flow.
//!
//! A [`DiagnosticsLedger`] is a step hook. After every step it stores the
//! mass bookkeeping of the cell equation and, at a fixed stride, a row of
//! [`Monitors`]: extrema, entropy, the `L^r` norms of the Moser exponent
//! ladder, gradient energies and discrete sup norms. Verdict functions turn
//! the series into PASS/FAIL lines.
//!
//! The estimates being audited have unknown constants, so the verdicts test
//! signs, bookkeeping identities and period-over-period boundedness rather
//! than specific values.

use std::sync::Arc;

use crate::coeffs::HomogenizerSample;
use crate::error::Result;
use crate::grid::{cell_gradient, divergence, neumann_laplacian, Grid, ScalarField, State, VectorField};
use crate::integrator::{Problem, StepContext, StepFluxes, StepHook};

/// Floor applied to `n` inside logarithms and negative powers.
pub const LOG_FLOOR: f64 = 1e-14;

/// Exponents `r_0 = 2m + 2/3`, `r_{j+1} = 3 r_j / 2`, for `j = 0..=levels`.
pub fn moser_ladder(m: f64, levels: usize) -> Vec<f64> {
    let mut r = 2.0 * m + 2.0 / 3.0;
    let mut out = Vec::with_capacity(levels + 1);
    for _ in 0..=levels {
        out.push(r);
        r *= 1.5;
    }
    out
}

/// `(sum |f|^r vol)^(1/r)`, evaluated with the maximum factored out so large
/// exponents do not overflow.
pub fn lp_norm(f: &ScalarField, r: f64) -> f64 {
    let max = f.max_abs();
    if max == 0.0 {
        return 0.0;
    }
    let vol = f.grid().cell_volume();
    let s: f64 = f.values().iter().map(|v| (v.abs() / max).powf(r)).sum::<f64>() * vol;
    max * s.powf(1.0 / r)
}

/// One row of monitored quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitors {
    pub t: f64,
    pub n_min: f64,
    pub n_max: f64,
    /// Extremes of the reconstructed oxygen `c = e^g1 c~ + g2`.
    pub c_min: f64,
    pub c_max: f64,
    pub mass: f64,
    /// `int n ln n`.
    pub entropy: f64,
    /// `int (n + eps)^(m-1) |grad sqrt(n)|^2`.
    pub entropy_dissipation: f64,
    /// `||grad n^m||_2`.
    pub grad_nm: f64,
    /// `||grad sqrt(n)||_2`.
    pub grad_sqrt_n: f64,
    /// `||grad n^(m/4)||_2^2`.
    pub grad_n_quarter_m: f64,
    /// `int (n + eps)^(m-4) |grad n|^4`.
    pub quartic: f64,
    /// `||n_t||_2^2` from the last step's difference quotient.
    pub nt_sq: f64,
    /// `||Lap_h n^m||_2^2`.
    pub lap_nm_sq: f64,
    pub u_inf: f64,
    pub grad_u_inf: f64,
    pub c_tilde_w1inf: f64,
    pub divergence: f64,
    /// `||n||_{L^r}` along the Moser ladder.
    pub lp: Vec<f64>,
}

/// Families with a per-period supremum, in CSV column order.
pub const SUPREMUM_FAMILIES: &[&str] = &[
    "n_max",
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
    "u_w1inf",
    "c_tilde_w1inf",
    "divergence",
];

impl Monitors {
    /// Value of a family from [`SUPREMUM_FAMILIES`].
    pub fn family(&self, name: &str) -> Option<f64> {
        Some(match name {
            "n_max" => self.n_max,
            "c_max" => self.c_max,
            "mass" => self.mass,
            "entropy" => self.entropy,
            "entropy_dissipation" => self.entropy_dissipation,
            "grad_nm" => self.grad_nm,
            "grad_sqrt_n" => self.grad_sqrt_n,
            "grad_n_quarter_m" => self.grad_n_quarter_m,
            "quartic" => self.quartic,
            "nt_sq" => self.nt_sq,
            "lap_nm_sq" => self.lap_nm_sq,
            "u_inf" => self.u_inf,
            "u_w1inf" => self.u_inf.max(self.grad_u_inf),
            "c_tilde_w1inf" => self.c_tilde_w1inf,
            "divergence" => self.divergence,
            _ => return None,
        })
    }

    pub fn is_finite(&self) -> bool {
        SUPREMUM_FAMILIES.iter().all(|f| self.family(f).is_some_and(f64::is_finite))
            && [self.n_min, self.c_min].iter().all(|v| v.is_finite())
            && self.lp.iter().all(|v| v.is_finite())
    }
}

/// Sum over interior faces of `weight(lo, hi) * ((f_hi - f_lo) / h)^2 * vol`.
fn face_energy(grid: &Grid, f: &[f64], weight: impl Fn(usize, usize) -> f64) -> f64 {
    let cells = grid.cells();
    let vol = grid.cell_volume();
    let mut total = 0.0;
    for d in 0..grid.dim() {
        let stride = grid.cell_stride(d);
        let h = grid.h()[d];
        for c in 0..grid.cell_count() {
            if grid.cell_ijk(c)[d] + 1 < cells[d] {
                let diff = (f[c + stride] - f[c]) / h;
                if diff != 0.0 {
                    total += weight(c, c + stride) * diff * diff * vol;
                }
            }
        }
    }
    total
}

/// Largest one-sided difference quotient of a cell field.
fn cell_lipschitz(f: &ScalarField) -> f64 {
    let g = f.grid();
    let v = f.values();
    let cells = g.cells();
    let mut out: f64 = 0.0;
    for d in 0..g.dim() {
        let stride = g.cell_stride(d);
        for c in 0..g.cell_count() {
            if g.cell_ijk(c)[d] + 1 < cells[d] {
                out = out.max((v[c + stride] - v[c]).abs() / g.h()[d]);
            }
        }
    }
    out
}

/// Largest difference quotient of the face components, with the no-slip
/// wall value entering as `2 |u| / h` next to tangential walls.
pub fn velocity_lipschitz(u: &VectorField) -> f64 {
    let g = u.grid();
    let cells = g.cells();
    let mut out: f64 = 0.0;
    for d in 0..g.dim() {
        let comp = u.component(d);
        let fdims = g.face_dims(d);
        for (idx, &val) in comp.iter().enumerate() {
            let ijk = g.face_ijk(d, idx);
            for e in 0..g.dim() {
                let h = g.h()[e];
                if ijk[e] + 1 < fdims[e] {
                    let mut next = ijk;
                    next[e] += 1;
                    out = out.max((comp[g.face_index(d, next)] - val).abs() / h);
                }
                if e != d && (ijk[e] == 0 || ijk[e] + 1 == cells[e]) {
                    out = out.max(2.0 * val.abs() / h);
                }
            }
        }
    }
    out
}

/// Computes every monitor of `state`. `previous` is the state one step of
/// length `dt` earlier, used for `n_t`.
pub fn compute_monitors(
    state: &State,
    previous: Option<(&State, f64)>,
    homog: &HomogenizerSample,
    m: f64,
    eps: f64,
    ladder: &[f64],
) -> Monitors {
    let g = state.grid().clone();
    let n = &state.n;
    let nv = n.values();
    let pos: Vec<f64> = nv.iter().map(|v| v.max(0.0)).collect();
    let vol = g.cell_volume();
    let c = homog.from_homogeneous(&state.c_tilde);

    let entropy = pos.iter().map(|&v| v * v.max(LOG_FLOOR).ln()).sum::<f64>() * vol;
    let sqrt_n: Vec<f64> = pos.iter().map(|v| v.sqrt()).collect();
    let mobility: Vec<f64> = pos.iter().map(|v| (v + eps).max(LOG_FLOOR).powf(m - 1.0)).collect();
    let entropy_dissipation = face_energy(&g, &sqrt_n, |lo, hi| 0.5 * (mobility[lo] + mobility[hi]));
    let nm: Vec<f64> = pos.iter().map(|v| v.powf(m)).collect();
    let grad_nm = face_energy(&g, &nm, |_, _| 1.0).sqrt();
    let grad_sqrt_n = face_energy(&g, &sqrt_n, |_, _| 1.0).sqrt();
    let quarter: Vec<f64> = pos.iter().map(|v| v.powf(0.25 * m)).collect();
    let grad_n_quarter_m = face_energy(&g, &quarter, |_, _| 1.0);
    let quartic = cell_gradient(n)
        .iter()
        .zip(&pos)
        .map(|(gr, &v)| {
            let s = gr[0] * gr[0] + gr[1] * gr[1] + gr[2] * gr[2];
            if s == 0.0 {
                0.0
            } else {
                (v + eps).max(LOG_FLOOR).powf(m - 4.0) * s * s
            }
        })
        .sum::<f64>()
        * vol;
    let nt_sq = match previous {
        Some((prev, dt)) if dt > 0.0 => {
            nv.iter().zip(prev.n.values()).map(|(a, b)| ((a - b) / dt).powi(2)).sum::<f64>() * vol
        }
        _ => 0.0,
    };
    let nm_field = ScalarField::from_values(&g, nm).expect("sizes match");
    let lap_nm_sq = neumann_laplacian(&nm_field).l2_norm().powi(2);

    Monitors {
        t: state.t,
        n_min: n.min(),
        n_max: n.max(),
        c_min: c.min(),
        c_max: c.max(),
        mass: n.integral(),
        entropy,
        entropy_dissipation,
        grad_nm,
        grad_sqrt_n,
        grad_n_quarter_m,
        quartic,
        nt_sq,
        lap_nm_sq,
        u_inf: state.u.max_abs(),
        grad_u_inf: velocity_lipschitz(&state.u),
        c_tilde_w1inf: state.c_tilde.max_abs().max(cell_lipschitz(&state.c_tilde)),
        divergence: divergence(&state.u).max_abs(),
        lp: ladder.iter().map(|&r| lp_norm(n, r)).collect(),
    }
}

/// Monitors of a sequence of states at uniform spacing `dt`.
pub fn energy_monitors(states: &[State], problem: &Problem, dt: f64, levels: usize) -> Vec<Monitors> {
    let ladder = moser_ladder(problem.coeffs.m, levels);
    let eps = problem.regularization.eps;
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let homog = problem.homogenizers.sample(&problem.grid, s.t);
            let prev = if i > 0 { Some((&states[i - 1], dt)) } else { None };
            compute_monitors(s, prev, &homog, problem.coeffs.m, eps, &ladder)
        })
        .collect()
}

/// Relative residual of the cell mass balance over one step:
/// `dM - dt (-outflux + reactions) - clipped`, divided by the mass before.
pub fn mass_budget(before: &State, after: &State, fluxes: &StepFluxes, dt: f64) -> f64 {
    let m0 = before.n.integral();
    let m1 = after.n.integral();
    let residual = (m1 - m0) - dt * (fluxes.reaction_integral - fluxes.boundary_outflux) - fluxes.clipped_mass;
    let scale = m0.abs().max(m1.abs());
    if scale == 0.0 {
        residual.abs()
    } else {
        residual.abs() / scale
    }
}

/// Bookkeeping of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub budget_residual: f64,
    pub boundary_outflux: f64,
    pub reaction_integral: f64,
    pub clipped_mass: f64,
    pub min_before_clip: f64,
    pub n_max: f64,
    pub u_inf: f64,
    pub divergence: f64,
    pub positivity_number: f64,
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerConfig {
    /// Record monitors every `stride` steps.
    pub stride: usize,
    /// Highest Moser level `J`.
    pub moser_levels: usize,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig { stride: 1, moser_levels: 8 }
    }
}

/// Time series of everything audited, filled by the step hook.
#[derive(Debug, Clone)]
pub struct DiagnosticsLedger {
    pub config: LedgerConfig,
    pub m: f64,
    pub eps: f64,
    pub period: f64,
    pub ladder: Vec<f64>,
    /// Time at which recording started; periods are counted from here.
    pub t_start: f64,
    /// Largest reconstructed oxygen value of the initial state.
    pub c0_max: f64,
    pub g2_sup: f64,
    pub steps: Vec<StepRecord>,
    pub monitors: Vec<Monitors>,
    cached_homog: Option<Arc<HomogenizerSample>>,
}

impl DiagnosticsLedger {
    /// Starts a ledger at `initial`, recording its monitors.
    pub fn new(problem: &Problem, initial: &State, config: LedgerConfig) -> Self {
        let ladder = moser_ladder(problem.coeffs.m, config.moser_levels);
        let mut ledger = DiagnosticsLedger {
            config,
            m: problem.coeffs.m,
            eps: problem.regularization.eps,
            period: problem.period(),
            ladder,
            t_start: initial.t,
            c0_max: 0.0,
            g2_sup: problem.g2_sup(),
            steps: Vec::new(),
            monitors: Vec::new(),
            cached_homog: None,
        };
        let homog = ledger.homog(problem, initial.t);
        let row = compute_monitors(initial, None, &homog, ledger.m, ledger.eps, &ledger.ladder);
        ledger.c0_max = row.c_max;
        ledger.monitors.push(row);
        ledger
    }

    /// Rebuilds a ledger from stored records (for re-rendering verdicts).
    #[allow(clippy::too_many_arguments)]
    pub fn from_records(
        config: LedgerConfig,
        m: f64,
        eps: f64,
        period: f64,
        t_start: f64,
        c0_max: f64,
        g2_sup: f64,
        steps: Vec<StepRecord>,
        monitors: Vec<Monitors>,
    ) -> Self {
        DiagnosticsLedger {
            config,
            m,
            eps,
            period,
            ladder: moser_ladder(m, config.moser_levels),
            t_start,
            c0_max,
            g2_sup,
            steps,
            monitors,
            cached_homog: None,
        }
    }

    fn homog(&mut self, problem: &Problem, t: f64) -> Arc<HomogenizerSample> {
        if let Some(h) = &self.cached_homog {
            return h.clone();
        }
        let h = Arc::new(problem.homogenizers.sample(&problem.grid, t));
        if problem.homogenizers.is_time_independent() {
            self.cached_homog = Some(h.clone());
        }
        h
    }

    /// Index of the period containing time `t` (the initial row gets `None`).
    pub fn period_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t_start) / self.period;
        if x <= 1e-9 {
            None
        } else {
            Some(((x - 1e-9).floor()) as usize)
        }
    }

    /// Number of complete or partial periods with recorded rows.
    pub fn period_count(&self) -> usize {
        self.monitors.iter().filter_map(|r| self.period_of(r.t)).max().map_or(0, |k| k + 1)
    }

    /// Rows belonging to period `k`.
    pub fn period_rows(&self, k: usize) -> impl Iterator<Item = &Monitors> {
        self.monitors.iter().filter(move |r| self.period_of(r.t) == Some(k))
    }

    /// Per-period supremum of each family in [`SUPREMUM_FAMILIES`].
    pub fn period_suprema(&self) -> Vec<Vec<f64>> {
        (0..self.period_count())
            .map(|k| {
                SUPREMUM_FAMILIES
                    .iter()
                    .map(|f| self.period_rows(k).filter_map(|r| r.family(f)).fold(f64::NEG_INFINITY, f64::max))
                    .collect()
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.monitors.iter().all(Monitors::is_finite)
            && self
                .steps
                .iter()
                .all(|s| s.budget_residual.is_finite() && s.mass.is_finite() && s.n_max.is_finite())
    }
}

impl StepHook for DiagnosticsLedger {
    fn on_step(&mut self, ctx: &StepContext<'_>) -> Result<()> {
        let after = ctx.after;
        self.steps.push(StepRecord {
            t: after.t,
            dt: ctx.dt,
            mass: after.n.integral(),
            budget_residual: mass_budget(ctx.before, after, ctx.fluxes, ctx.dt),
            boundary_outflux: ctx.fluxes.boundary_outflux,
            reaction_integral: ctx.fluxes.reaction_integral,
            clipped_mass: ctx.fluxes.clipped_mass,
            min_before_clip: ctx.fluxes.min_before_clip,
            n_max: after.n.max(),
            u_inf: after.u.max_abs(),
            divergence: ctx.fluxes.divergence,
            positivity_number: ctx.fluxes.positivity_number,
            substeps: ctx.fluxes.substeps,
        });
        if self.steps.len().is_multiple_of(self.config.stride.max(1)) {
            let homog = self.homog(ctx.problem, ctx.phase_after);
            let row = compute_monitors(after, Some((ctx.before, ctx.dt)), &homog, self.m, self.eps, &self.ladder);
            self.monitors.push(row);
        }
        Ok(())
    }
}

/// One PASS/FAIL line.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// The audited quantity (worst case).
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, value: f64, limit: f64, detail: String) -> Self {
        Verdict { name: name.into(), passed, value, limit, detail }
    }

    fn at_most(name: &str, value: f64, limit: f64, detail: String) -> Self {
        Verdict::new(name, value <= limit, value, limit, detail)
    }
}

/// Largest relative step residual of the mass balance.
pub fn mass_budget_check(ledger: &DiagnosticsLedger, tol: f64) -> Verdict {
    let mut worst = 0.0f64;
    let mut detail = String::from("all steps balance exactly");
    for s in &ledger.steps {
        if s.budget_residual > worst || s.budget_residual.is_nan() {
            worst = s.budget_residual;
            detail = format!("worst step at t = {}", s.t);
            if worst.is_nan() {
                break;
            }
        }
    }
    Verdict::new("mass_budget", worst <= tol, worst, tol, detail)
}

/// Oxygen bounds: `min c >= -tau` and `max c <= max(c0_max, g2_sup) + tau`;
/// with `on_orbit` the upper bound is `g2_sup + tau`.
pub fn maximum_principle_check(ledger: &DiagnosticsLedger, g2_sup: f64, c0_max: f64, on_orbit: bool) -> Verdict {
    let tau = 1e-8 * g2_sup.max(1.0);
    let upper = if on_orbit { g2_sup } else { c0_max.max(g2_sup) } + tau;
    let mut worst = 0.0f64;
    let mut detail = String::from("no violation");
    for r in &ledger.monitors {
        let over = r.c_max - upper;
        let under = -tau - r.c_min;
        if over > worst {
            worst = over;
            detail = format!("max c = {} exceeds {} at t = {}", r.c_max, upper, r.t);
        }
        if under > worst {
            worst = under;
            detail = format!("min c = {} below {} at t = {}", r.c_min, -tau, r.t);
        }
    }
    let name = if on_orbit { "oxygen_bound_orbit" } else { "oxygen_bound" };
    Verdict::new(name, worst <= 0.0, worst, 0.0, detail)
}

/// Nonnegativity of the cell density before clipping:
/// `min n >= -1e-12 max n` at every step.
pub fn nonnegativity_check(ledger: &DiagnosticsLedger) -> Verdict {
    let mut worst = 0.0f64;
    let mut detail = String::from("no violation");
    for s in &ledger.steps {
        let rel = -s.min_before_clip / s.n_max.abs().max(f64::MIN_POSITIVE);
        if s.min_before_clip < 0.0 && rel > worst {
            worst = rel;
            detail = format!("min n = {} at t = {}", s.min_before_clip, s.t);
        }
    }
    Verdict::at_most("nonnegativity", worst, 1e-12, detail)
}

/// Regularized runs without clipping: from the end of the first period on,
/// the recorded `min n` must stay above `-tol`.
pub fn penalty_recovery_check(ledger: &DiagnosticsLedger, tol: f64) -> Verdict {
    let after = ledger.t_start + ledger.period * (1.0 - 1e-9);
    let rows: Vec<&Monitors> = ledger.monitors.iter().filter(|r| r.t >= after).collect();
    if rows.is_empty() {
        return Verdict::new("penalty_recovery", false, f64::NAN, -tol, "no full period recorded".into());
    }
    let (worst, t) = rows.iter().fold((f64::INFINITY, f64::NAN), |(w, t), r| if r.n_min < w { (r.n_min, r.t) } else { (w, t) });
    let first = ledger.monitors.first().map_or(f64::NAN, |r| r.n_min);
    Verdict::new(
        "penalty_recovery",
        worst >= -tol,
        worst,
        -tol,
        format!("initial min n = {first}, worst after one period at t = {t}"),
    )
}

/// Clipped mass per period relative to the mass at the period's end.
pub fn clipped_mass_check(ledger: &DiagnosticsLedger, tol: f64) -> Verdict {
    let mut worst = 0.0f64;
    let periods = ledger.steps.iter().filter_map(|s| ledger.period_of(s.t)).max().map_or(0, |k| k + 1);
    for k in 0..periods {
        let rows: Vec<&StepRecord> = ledger.steps.iter().filter(|s| ledger.period_of(s.t) == Some(k)).collect();
        let clipped: f64 = rows.iter().map(|s| s.clipped_mass).sum();
        let mass = rows.last().map_or(0.0, |s| s.mass.abs());
        let rel = if mass > 0.0 { clipped / mass } else { clipped };
        worst = worst.max(rel);
    }
    Verdict::at_most("clipped_mass", worst, tol, format!("{periods} periods"))
}

/// `||div u||_inf <= 1e-10 max(1, ||u||_inf)` after every step.
pub fn divergence_check(ledger: &DiagnosticsLedger) -> Verdict {
    let worst = ledger.steps.iter().map(|s| s.divergence / s.u_inf.max(1.0)).fold(0.0, f64::max);
    Verdict::at_most("divergence_free", worst, 1e-10, String::new())
}

/// Suprema of the Moser ladder norms and the escalation verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct MoserTable {
    pub exponents: Vec<f64>,
    /// `sup_t ||n||_{L^{r_j}}`.
    pub suprema: Vec<f64>,
    /// `M_j / M_{j-1}` for `j >= 1`.
    pub ratios: Vec<f64>,
    pub linf_sup: f64,
    /// `|M_J - sup ||n||_inf| / sup ||n||_inf`.
    pub top_gap: f64,
    pub passed: bool,
}

/// Ratios must stay below `1 + 0.5 / j^1.1` and the top level must be within
/// 5% of the sup norm.
pub fn moser_escalation(ledger: &DiagnosticsLedger, m: f64) -> MoserTable {
    let exponents = moser_ladder(m, ledger.config.moser_levels);
    let rows: Vec<&Monitors> = ledger.monitors.iter().collect();
    let suprema: Vec<f64> = (0..exponents.len())
        .map(|j| rows.iter().filter_map(|r| r.lp.get(j).copied()).fold(0.0, f64::max))
        .collect();
    let ratios: Vec<f64> = suprema
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 1.0 })
        .collect();
    let linf_sup = rows.iter().map(|r| r.n_max.abs().max(r.n_min.abs())).fold(0.0, f64::max);
    let top = suprema.last().copied().unwrap_or(0.0);
    let top_gap = if linf_sup > 0.0 { (top - linf_sup).abs() / linf_sup } else { 0.0 };
    let ratios_ok = ratios.iter().enumerate().all(|(i, &q)| {
        let j = (i + 1) as f64;
        q <= 1.0 + 0.5 / j.powf(1.1)
    });
    MoserTable { passed: ratios_ok && top_gap <= 0.05, exponents, suprema, ratios, linf_sup, top_gap }
}

/// Largest period-over-period change of each family's supremum, after
/// discarding the first period, relative to the earlier supremum.
pub fn stationarity(ledger: &DiagnosticsLedger) -> Vec<(String, f64)> {
    let sup = ledger.period_suprema();
    SUPREMUM_FAMILIES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let worst = sup
                .windows(2)
                .skip(1)
                .map(|w| {
                    let (a, b) = (w[0][i], w[1][i]);
                    let diff = (b - a).abs();
                    if diff <= 1e-10 {
                        0.0
                    } else {
                        diff / a.abs().max(1e-300)
                    }
                })
                .fold(0.0, f64::max);
            (name.to_string(), worst)
        })
        .collect()
}

/// One-sided boundedness: `S_{k+1} <= S_k + 1e-3 |S_k| + 1e-10` for every
/// family and consecutive periods after the first (entropy can be negative).
pub fn boundedness_check(ledger: &DiagnosticsLedger) -> Verdict {
    let sup = ledger.period_suprema();
    let mut worst = 0.0f64;
    let mut detail = format!("{} periods", sup.len());
    for w in sup.windows(2).skip(1) {
        for (i, name) in SUPREMUM_FAMILIES.iter().enumerate() {
            let (a, b) = (w[0][i], w[1][i]);
            let excess = b - (a + 1e-3 * a.abs() + 1e-10);
            if excess > worst {
                worst = excess;
                detail = format!("{name} grew from {a} to {b}");
            }
        }
    }
    if sup.len() < 3 {
        detail = format!("only {} periods recorded; need 3", sup.len());
        return Verdict::new("boundedness", false, worst, 0.0, detail);
    }
    Verdict::new("boundedness", worst <= 0.0, worst, 0.0, detail)
}

pub fn finiteness_check(ledger: &DiagnosticsLedger) -> Verdict {
    let ok = ledger.is_finite();
    Verdict::new("finite", ok, if ok { 0.0 } else { 1.0 }, 0.0, String::new())
}

/// The whole verdict suite. With clipping on, the scheme must keep `n`
/// nonnegative; with it off (regularized runs), the penalties must restore
/// `n >= -1e-6` within a period. `on_orbit` adds the periodic-orbit checks.
pub fn verdict_suite(ledger: &DiagnosticsLedger, clip_on: bool, on_orbit: bool) -> Vec<Verdict> {
    let mut out = vec![
        finiteness_check(ledger),
        mass_budget_check(ledger, 1e-9),
        maximum_principle_check(ledger, ledger.g2_sup, ledger.c0_max, false),
        divergence_check(ledger),
    ];
    if clip_on {
        out.push(nonnegativity_check(ledger));
        out.push(clipped_mass_check(ledger, 1e-8));
    } else {
        out.push(penalty_recovery_check(ledger, 1e-6));
    }
    if on_orbit {
        out.push(maximum_principle_check(ledger, ledger.g2_sup, ledger.c0_max, true));
        out.push(boundedness_check(ledger));
        let table = moser_escalation(ledger, ledger.m);
        out.push(Verdict::new(
            "moser_escalation",
            table.passed,
            table.top_gap,
            0.05,
            format!("r0 = {}, top ratio {:?}", table.exponents[0], table.ratios.last()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{build_homogenizers, Coefficients, Homogenizers, RobinData};
    use crate::diffusion::Regularization;
    use crate::expr::Expr;
    use crate::integrator::{Integrator, StepConfig};

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::square(n, 1.0).unwrap())
    }

    #[test]
    fn ladder_starts_at_two_m_plus_two_thirds() {
        let r = moser_ladder(4.0 / 3.0, 8);
        assert!((r[0] - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.len(), 9);
        assert!((r[8] / r[0] - 1.5f64.powi(8)).abs() < 1e-12);
    }

    #[test]
    fn constant_density_monitors() {
        let g = Arc::new(Grid::new(&[8, 8], &[0.5, 0.5]).unwrap());
        let s = State { n: ScalarField::constant(&g, 1.0), ..State::zeros(&g) };
        let h = Homogenizers::zero(2).sample(&g, 0.0);
        let r = compute_monitors(&s, None, &h, 2.0, 0.0, &moser_ladder(2.0, 8));
        assert_eq!(r.entropy, 0.0);
        assert_eq!(r.grad_nm, 0.0);
        assert_eq!(r.quartic, 0.0);
        assert_eq!(r.lap_nm_sq, 0.0);
        for (norm, &rr) in r.lp.iter().zip(&moser_ladder(2.0, 8)) {
            assert!((norm - 0.25f64.powf(1.0 / rr)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_density_monitors_vanish() {
        let g = grid(8);
        let s = State::zeros(&g);
        let h = Homogenizers::zero(2).sample(&g, 0.0);
        let r = compute_monitors(&s, Some((&s, 0.1)), &h, 1.25, 0.0, &moser_ladder(1.25, 8));
        assert!(r.is_finite());
        for f in SUPREMUM_FAMILIES {
            assert_eq!(r.family(f), Some(0.0), "{f}");
        }
    }

    #[test]
    fn lp_norms_approach_sup_norm() {
        let g = grid(64);
        let f = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * (3.0 * x[0]).sin() * x[1]);
        let sup = f.max_abs();
        let mut prev = 0.0;
        for r in moser_ladder(2.0, 12) {
            let v = lp_norm(&f, r);
            assert!(v >= prev - 1e-14 && v <= sup * (1.0 + 1e-14));
            prev = v;
        }
        assert!((sup - prev) / sup < 0.05);
    }

    #[test]
    fn injected_oxygen_violation_fails() {
        let g = grid(8);
        let p = Problem::zero_flux(g.clone(), Coefficients::new(e("0"), e("0"), e("0"), 0.0, 0.0, 2.0, 1.0).unwrap(), Regularization::off()).unwrap();
        let mut s = State::zeros(&g);
        s.c_tilde = ScalarField::constant(&g, 0.5);
        let mut ledger = DiagnosticsLedger::new(&p, &s, LedgerConfig::default());
        assert!(maximum_principle_check(&ledger, 0.5, ledger.c0_max, true).passed);
        let mut bad = ledger.monitors[0].clone();
        bad.t = 0.5;
        bad.c_max = 1.5;
        ledger.monitors.push(bad);
        let v = maximum_principle_check(&ledger, 0.5, 0.5, true);
        assert!(!v.passed);
        assert!((v.value - (1.0 - 1e-8)).abs() < 1e-12);
        assert!(v.detail.contains("t = 0.5"));
    }

    #[test]
    fn pure_transport_conserves_mass_to_round_off() {
        let g = grid(16);
        let coeffs = Coefficients::new(e("0"), e("0"), e("-y + x*x"), 0.0, 0.0, 2.0, 0.2).unwrap();
        let p = Problem::zero_flux(g.clone(), coeffs, Regularization::off()).unwrap();
        let mut s = State::zeros(&g);
        s.n = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * (3.0 * x[0]).cos() * (2.0 * x[1]).sin());
        let mut ledger = DiagnosticsLedger::new(&p, &s, LedgerConfig::default());
        let mut it = Integrator::new(&p, StepConfig::new(0.01, &p.regularization)).unwrap();
        it.simulate_period(&s, &mut ledger).unwrap();
        assert!(mass_budget_check(&ledger, 1e-12).passed, "{:?}", mass_budget_check(&ledger, 1e-12));
    }

    #[test]
    fn uniform_logistic_budget_closes() {
        let g = grid(8);
        let coeffs = Coefficients::new(e("2"), e("0.1"), e("0"), 0.0, 1.5, 2.0, 0.5).unwrap();
        let p = Problem::zero_flux(g.clone(), coeffs, Regularization::off()).unwrap();
        let s = State { n: ScalarField::constant(&g, 0.3), ..State::zeros(&g) };
        let mut ledger = DiagnosticsLedger::new(&p, &s, LedgerConfig::default());
        let mut it = Integrator::new(&p, StepConfig::new(0.01, &p.regularization)).unwrap();
        it.simulate_period(&s, &mut ledger).unwrap();
        assert!(mass_budget_check(&ledger, 1e-10).passed);
    }

    #[test]
    fn oxygen_above_supply_decays_toward_it() {
        // n = 0, c0 = 2 g2: c relaxes monotonically toward g2 = 1.
        let g = grid(16);
        let coeffs = Coefficients::new(e("0"), e("0"), e("0"), 0.0, 0.0, 2.0, 0.25).unwrap();
        let robin = RobinData::new(e("1"), e("1"));
        let h = build_homogenizers(&robin, &g, 0.25).unwrap();
        let p = Problem::new(g.clone(), coeffs, robin, h, Regularization::off()).unwrap();
        let c0 = ScalarField::constant(&g, 2.0);
        let s = State { c_tilde: p.homogenizers.to_homogeneous(&c0, 0.0), ..State::zeros(&g) };
        let mut ledger = DiagnosticsLedger::new(&p, &s, LedgerConfig::default());
        let mut it = Integrator::new(&p, StepConfig::new(0.01, &p.regularization)).unwrap();
        it.simulate_steps(&s, 100, &mut ledger).unwrap();
        assert!(maximum_principle_check(&ledger, 1.0, 2.0, false).passed);
        let maxes: Vec<f64> = ledger.monitors.iter().map(|r| r.c_max).collect();
        assert!(maxes.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*maxes.last().unwrap() < 1.2);
    }

    #[test]
    fn velocity_lipschitz_sees_wall_shear() {
        let g = grid(4);
        let mut u = VectorField::zeros(&g);
        // one tangential face next to the bottom wall
        let idx = g.face_index(0, [2, 0, 0]);
        u.component_mut(0)[idx] = 1.0;
        assert!((velocity_lipschitz(&u) - 8.0).abs() < 1e-12);
    }
}
