//! Time-periodic solutions as fixed points of the period map.
//!
//! The iteration is damped Picard, optionally accelerated by Anderson mixing
//! over the last few residuals. Non-convergence is reported, not raised.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::grid::State;
use crate::integrator::{Integrator, Problem, StepConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub max_iters: usize,
    /// Target for the relative residual.
    pub tol_rel: f64,
    /// Damping `theta` in `(0, 1]`.
    pub damping: f64,
    /// Number of previous residuals used for Anderson mixing (0 to 5).
    pub anderson_depth: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            max_iters: 50,
            tol_rel: 1e-8,
            damping: 1.0,
            anderson_depth: 3,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(Error::InvalidParameter(format!("tol_rel must be > 0, got {}", self.tol_rel)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.anderson_depth > 5 {
            return Err(Error::InvalidParameter(format!(
                "anderson_depth must be at most 5, got {}",
                self.anderson_depth
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub converged: bool,
    /// Number of period-map evaluations.
    pub iterations: usize,
    /// `||P(x_k) - x_k||` relative, one entry per evaluation.
    pub residual_history: Vec<f64>,
    /// The last iterate whose image was computed; its residual is the last
    /// entry of `residual_history`.
    pub final_state: State,
    /// Image of `final_state` under the period map.
    pub final_image: State,
    pub wall_time: Duration,
}

impl FixedPointReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }
}

/// Stacked relative residual of `image - x`: each of `n`, `c~`, `u` is
/// measured in L2 and divided by `max(||x_field||, 1)`.
pub fn relative_residual(x: &State, image: &State) -> f64 {
    let vol = x.grid().cell_volume();
    let mut total = 0.0;
    let mut add = |a: &[f64], b: &[f64]| {
        let diff: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * vol;
        let norm: f64 = a.iter().map(|p| p * p).sum::<f64>() * vol;
        total += diff / norm.max(1.0);
    };
    add(x.n.values(), image.n.values());
    add(x.c_tilde.values(), image.c_tilde.values());
    let xu: Vec<f64> = x.u.components().iter().flatten().copied().collect();
    let iu: Vec<f64> = image.u.components().iter().flatten().copied().collect();
    add(&xu, &iu);
    total.sqrt()
}

/// Applies the period map once, resetting the clock modulo `T`.
pub fn poincare_map(state: &State, problem: &Problem, cfg: StepConfig) -> Result<State> {
    Integrator::new(problem, cfg)?.poincare_map(state)
}

struct Packing {
    n: usize,
    c: usize,
    weights: [f64; 3],
}

impl Packing {
    fn new(x: &State) -> Self {
        let vol = x.grid().cell_volume();
        let norm = |v: &[f64]| (v.iter().map(|p| p * p).sum::<f64>() * vol).sqrt().max(1.0);
        let u: Vec<f64> = x.u.components().iter().flatten().copied().collect();
        Packing {
            n: x.n.values().len(),
            c: x.c_tilde.values().len(),
            weights: [
                vol.sqrt() / norm(x.n.values()),
                vol.sqrt() / norm(x.c_tilde.values()),
                vol.sqrt() / norm(&u),
            ],
        }
    }

    fn pack(&self, s: &State) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n);
        out.extend(s.n.values().iter().map(|v| v * self.weights[0]));
        out.extend(s.c_tilde.values().iter().map(|v| v * self.weights[1]));
        for comp in s.u.components() {
            out.extend(comp.iter().map(|v| v * self.weights[2]));
        }
        out
    }

    fn unpack(&self, v: &[f64], template: &State) -> State {
        let mut s = template.clone();
        for (dst, src) in s.n.values_mut().iter_mut().zip(&v[..self.n]) {
            *dst = src / self.weights[0];
        }
        for (dst, src) in s.c_tilde.values_mut().iter_mut().zip(&v[self.n..self.n + self.c]) {
            *dst = src / self.weights[1];
        }
        let mut off = self.n + self.c;
        let g = template.grid().clone();
        for d in 0..g.dim() {
            let comp = s.u.component_mut(d);
            for dst in comp.iter_mut() {
                *dst = v[off] / self.weights[2];
                off += 1;
            }
        }
        s
    }
}

/// Least squares `min ||f - F gamma||` by modified Gram–Schmidt; columns
/// that are numerically dependent get zero weight.
fn least_squares(cols: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    let m = cols.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = vec![vec![0.0; m]; m];
    let mut keep = vec![true; m];
    for j in 0..m {
        let mut v = cols[j].clone();
        let orig = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (i, qi) in q.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let d: f64 = qi.iter().zip(&v).map(|(a, b)| a * b).sum();
            r[i][j] = d;
            v.iter_mut().zip(qi).for_each(|(x, y)| *x -= d * y);
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv <= 1e-12 * orig || nv == 0.0 {
            keep[j] = false;
            q.push(vec![0.0; v.len()]);
            continue;
        }
        r[j][j] = nv;
        v.iter_mut().for_each(|x| *x /= nv);
        q.push(v);
    }
    let qtf: Vec<f64> = q.iter().map(|qi| qi.iter().zip(f).map(|(a, b)| a * b).sum()).collect();
    let mut gamma = vec![0.0; m];
    for j in (0..m).rev() {
        if !keep[j] {
            continue;
        }
        let mut s = qtf[j];
        for k in j + 1..m {
            if keep[k] {
                s -= r[j][k] * gamma[k];
            }
        }
        gamma[j] = s / r[j][j];
    }
    gamma
}

/// Iterates `x <- x + theta (P(x) - x)`, with Anderson mixing when
/// `anderson_depth > 0`, until the relative residual drops below `tol_rel`.
pub fn find_periodic(problem: &Problem, init: &State, step: StepConfig, cfg: FixedPointConfig) -> Result<FixedPointReport> {
    cfg.validate()?;
    if init.grid().as_ref() != problem.grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    let start = Instant::now();
    let mut integrator = Integrator::new(problem, step)?;
    let mut x = init.clone();
    x.t = 0.0;
    let packing = Packing::new(&x);
    let theta = cfg.damping;
    let mut history = Vec::new();
    let mut dx: Vec<Vec<f64>> = Vec::new();
    let mut df: Vec<Vec<f64>> = Vec::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut best = f64::INFINITY;
    loop {
        let image = integrator.poincare_map(&x)?;
        image.check_finite()?;
        let res = relative_residual(&x, &image);
        if !res.is_finite() {
            return Err(Error::NonFinite { what: "fixed-point residual".into() });
        }
        history.push(res);
        best = best.min(res);
        let done = res <= cfg.tol_rel;
        if done || history.len() >= cfg.max_iters {
            return Ok(FixedPointReport {
                converged: done,
                iterations: history.len(),
                residual_history: history,
                final_state: x,
                final_image: image,
                wall_time: start.elapsed(),
            });
        }
        let xv = packing.pack(&x);
        let fv: Vec<f64> = packing.pack(&image).iter().zip(&xv).map(|(p, q)| p - q).collect();
        if cfg.anderson_depth > 0 {
            if res > 10.0 * best {
                // a bad extrapolation: restart the mixing history
                dx.clear();
                df.clear();
                prev = None;
            }
            if let Some((px, pf)) = &prev {
                dx.push(xv.iter().zip(px).map(|(a, b)| a - b).collect());
                df.push(fv.iter().zip(pf).map(|(a, b)| a - b).collect());
                if dx.len() > cfg.anderson_depth {
                    dx.remove(0);
                    df.remove(0);
                }
            }
            prev = Some((xv.clone(), fv.clone()));
        }
        let mut next: Vec<f64> = xv.iter().zip(&fv).map(|(a, b)| a + theta * b).collect();
        if !df.is_empty() {
            let gamma = least_squares(&df, &fv);
            for (j, g) in gamma.iter().enumerate() {
                for i in 0..next.len() {
                    next[i] -= g * (dx[j][i] + theta * df[j][i]);
                }
            }
        }
        let mut state = packing.unpack(&next, &x);
        if !problem.regularization.penalties_active() {
            state.n.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        state.t = 0.0;
        x = state;
    }
}
