//! TOML run configuration.
//!
//! Every section rejects unknown keys. Space-time functions are strings in
//! the expression grammar of [`crate::expr`]. [`RunConfig::build`] validates
//! everything before any field is allocated.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{build_homogenizers, Coefficients, Homogenizers, RobinData};
use crate::diagnostics::LedgerConfig;
use crate::diffusion::Regularization;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Grid, ScalarField, State, VectorField};
use crate::integrator::{default_initial_state, Problem, StepConfig};
use crate::periodic::FixedPointConfig;

/// A scalar applied to every axis, or one value per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Copy> PerAxis<T> {
    fn expand(&self, dim: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerAxis::All(v) => Ok(vec![*v; dim]),
            PerAxis::Each(v) if v.len() == dim => Ok(v.clone()),
            PerAxis::Each(v) => Err(Error::Config(format!("grid.{what} has {} entries for dimension {dim}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub cells: PerAxis<usize>,
    #[serde(default = "default_length")]
    pub lengths: PerAxis<f64>,
}

fn default_dim() -> usize {
    2
}

fn default_length() -> PerAxis<f64> {
    PerAxis::All(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub m: f64,
    pub chi: f64,
    pub mu: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub a: String,
    pub g: String,
    pub phi: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Robin data with homogenizers built by the cutoff construction.
    Robin,
    /// Robin data with user-supplied `g1`, `g2` (validated).
    Analytic,
    /// Zero-flux oxygen, `g1 = g2 = 0`.
    ZeroFlux,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub mode: BoundaryMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub a_penalty: f64,
    #[serde(default)]
    pub eps_penalty: f64,
    /// Clip negative densities; defaults to on unless penalties are active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<bool>,
}

impl Default for RegularizationSection {
    fn default() -> Self {
        RegularizationSection { eps: 0.0, delta: 0.0, s: 0.0, a_penalty: 0.0, eps_penalty: 0.0, clip: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `n` = mean of `a` at `t = 0`, `c = g2`, `u = 0`.
    Default,
    /// `n` and `c` from expressions, `u = 0`.
    Expressions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    /// Oxygen in the original variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<String>,
    /// Amplitude of seeded uniform noise added to `n`.
    #[serde(default)]
    pub noise: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection { kind: InitialKind::Default, n: None, c: None, noise: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_substeps")]
    pub max_substeps: usize,
}

fn default_cfl() -> f64 {
    0.9
}

fn default_substeps() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSection {
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol_rel: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_depth")]
    pub anderson_depth: usize,
}

fn default_iters() -> usize {
    50
}

fn default_tol() -> f64 {
    1e-8
}

fn default_damping() -> f64 {
    1.0
}

fn default_depth() -> usize {
    3
}

impl Default for FixedPointSection {
    fn default() -> Self {
        FixedPointSection {
            max_iters: default_iters(),
            tol_rel: default_tol(),
            damping: default_damping(),
            anderson_depth: default_depth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Snapshot every this many steps; 0 writes only the final state.
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Record monitors every this many steps.
    #[serde(default = "default_one")]
    pub monitor_stride: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_one() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out(), snapshot_stride: 0, monitor_stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
}

fn default_periods() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { periods: default_periods(), seed: 0, deterministic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Locate the periodic orbit first and audit the periods that follow it.
    #[serde(default = "default_true")]
    pub orbit: bool,
    /// Self-test of the verdict machinery:
    /// Added to every recorded oxygen maximum before the verdicts run.
    #[serde(default)]
    pub inject_oxygen_excess: f64,
}

fn default_true() -> bool {
    true
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { orbit: true, inject_oxygen_excess: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsSection {
    #[serde(default = "default_cases")]
    pub cases: Vec<String>,
}

fn default_cases() -> Vec<String> {
    vec!["heat".into(), "advection".into(), "coupled".into()]
}

impl Default for MmsSection {
    fn default() -> Self {
        MmsSection { cases: default_cases() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub coefficients: CoefficientSection,
    pub boundary: BoundarySection,
    #[serde(default)]
    pub regularization: RegularizationSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub fixed_point: FixedPointSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub mms: MmsSection,
}

/// Everything needed to run, built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub initial: State,
    pub step: StepConfig,
    pub fixed_point: FixedPointConfig,
    pub ledger: LedgerConfig,
}

fn expr(section: &str, key: &str, text: &str) -> Result<Expr> {
    Expr::parse(text).map_err(|e| Error::Config(format!("{section}.{key}: {e}")))
}

fn required<'a>(value: &'a Option<String>, section: &str, key: &str) -> Result<&'a str> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{section}.{key} is required here")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn regularization(&self) -> Regularization {
        let r = &self.regularization;
        Regularization { eps: r.eps, delta: r.delta, s: r.s, a_penalty: r.a_penalty, eps_penalty: r.eps_penalty }
    }

    /// Checks every range and builds the problem, initial state and solver
    /// settings. Any failure here is a configuration error.
    pub fn build(&self) -> Result<Setup> {
        self.build_inner().map_err(|e| match e {
            Error::Config(_) | Error::NonFinite { .. } => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn build_inner(&self) -> Result<Setup> {
        let dim = self.grid.dim;
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!("grid.dim must be 2 or 3, got {dim}")));
        }
        let cells = self.grid.cells.expand(dim, "cells")?;
        let lengths = self.grid.lengths.expand(dim, "lengths")?;
        let ph = &self.physics;
        if !(ph.chi >= 0.0) || !(ph.mu >= 0.0) {
            return Err(Error::Config("physics.chi and physics.mu must be >= 0".into()));
        }
        let reg = self.regularization();
        reg.validate(ph.m)?;
        if !(self.integrator.dt > 0.0) {
            return Err(Error::Config(format!("integrator.dt must be > 0, got {}", self.integrator.dt)));
        }
        let c = &self.coefficients;
        let coeffs = Coefficients::new(
            expr("coefficients", "a", &c.a)?,
            expr("coefficients", "g", &c.g)?,
            expr("coefficients", "phi", &c.phi)?,
            ph.chi,
            ph.mu,
            ph.m,
            ph.period,
        )?;
        let step = StepConfig {
            dt: self.integrator.dt,
            cfl_target: self.integrator.cfl,
            max_substeps: self.integrator.max_substeps,
            clip_negative: self.regularization.clip.unwrap_or(!reg.penalties_active()),
        };
        step.validate()?;
        let fp = &self.fixed_point;
        let fixed_point = FixedPointConfig {
            max_iters: fp.max_iters,
            tol_rel: fp.tol_rel,
            damping: fp.damping,
            anderson_depth: fp.anderson_depth,
        };
        fixed_point.validate()?;
        if self.output.monitor_stride == 0 {
            return Err(Error::Config("output.monitor_stride must be >= 1".into()));
        }
        for case in &self.mms.cases {
            if crate::mms::ManufacturedCase::by_name(case).is_none() {
                return Err(Error::Config(format!("unknown mms case `{case}`")));
            }
        }

        let grid = Arc::new(Grid::new(&cells, &lengths)?);
        let b = &self.boundary;
        let problem = match b.mode {
            BoundaryMode::ZeroFlux => Problem::zero_flux(grid.clone(), coeffs, reg)?,
            BoundaryMode::Robin | BoundaryMode::Analytic => {
                let robin = RobinData::new(
                    expr("boundary", "a1", required(&b.a1, "boundary", "a1")?)?,
                    expr("boundary", "a2", required(&b.a2, "boundary", "a2")?)?,
                );
                let homog = if b.mode == BoundaryMode::Robin {
                    build_homogenizers(&robin, &grid, ph.period)?
                } else {
                    Homogenizers::analytic(
                        expr("boundary", "g1", required(&b.g1, "boundary", "g1")?)?,
                        expr("boundary", "g2", required(&b.g2, "boundary", "g2")?)?,
                        dim,
                    )
                };
                Problem::new(grid.clone(), coeffs, robin, homog, reg)?
            }
        };
        let initial = self.initial_state(&problem)?;
        Ok(Setup {
            problem,
            initial,
            step,
            fixed_point,
            ledger: LedgerConfig { stride: self.output.monitor_stride, moser_levels: 8 },
        })
    }

    fn initial_state(&self, problem: &Problem) -> Result<State> {
        let g = &problem.grid;
        let init = &self.initial;
        let mut state = match init.kind {
            InitialKind::Default => default_initial_state(problem),
            InitialKind::Expressions => {
                let n = expr("initial", "n", required(&init.n, "initial", "n")?)?;
                let n = ScalarField::from_fn(g, |x| n.eval(x, 0.0));
                let c_tilde = match &init.c {
                    Some(text) => {
                        let c = expr("initial", "c", text)?;
                        let c = ScalarField::from_fn(g, |x| c.eval(x, 0.0));
                        problem.homogenizers.to_homogeneous(&c, 0.0)
                    }
                    None => ScalarField::zeros(g),
                };
                State { n, c_tilde, u: VectorField::zeros(g), t: 0.0 }
            }
        };
        if init.noise != 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.run.seed);
            for v in state.n.values_mut() {
                *v += init.noise * rng.gen_range(-1.0..1.0);
            }
        }
        state.check_finite()?;
        Ok(state)
    }
}
