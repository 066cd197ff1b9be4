//! Shared helpers for the integration tests: config loading and a direct
//! banded solver for the steady Robin problem.

#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

use chemostokes::config::RunConfig;
use chemostokes::grid::Grid;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn load_config(name: &str) -> RunConfig {
    RunConfig::load(&configs_dir().join(format!("{name}.toml"))).expect("shipped config parses")
}

/// Symmetric positive definite band matrix stored by lower diagonals:
/// `band[i][k]` is entry `(i, i - k)`.
pub struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    pub band: Vec<Vec<f64>>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, band: vec![vec![0.0; bw + 1]; n] }
    }

    /// Adds `v` at `(i, j)` for `j <= i`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i && i - j <= self.bw);
        self.band[i][i - j] += v;
    }

    /// Cholesky factorisation and solve, consuming the matrix.
    pub fn solve(mut self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let l = &mut self.band;
        for i in 0..n {
            for k in (0..=bw.min(i)).rev() {
                let j = i - k;
                let mut s = l[i][k];
                let lo = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for p in lo..j {
                    s -= l[i][i - p] * l[j][j - p];
                }
                if k == 0 {
                    assert!(s > 0.0, "matrix is not positive definite");
                    l[i][0] = s.sqrt();
                } else {
                    l[i][k] = s / l[j][0];
                }
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 1..=bw.min(i) {
                y[i] -= l[i][k] * y[i - k];
            }
            y[i] /= l[i][0];
        }
        for i in (0..n).rev() {
            for k in 1..=bw.min(n - 1 - i) {
                y[i] -= l[i + k][k] * y[i + k];
            }
            y[i] /= l[i][0];
        }
        y
    }
}

/// Steady `-Lap c + k c = 0` on the box with constant Robin data
/// `dc/dnu = -a1 c + a2`, discretised with five-point (seven-point in 3D)
/// differences and a ghost cell on each wall face that satisfies the Robin
/// relation at the face midpoint.
pub fn robin_helmholtz(grid: &Grid, k: f64, a1: f64, a2: f64) -> Vec<f64> {
    let cells = grid.cells();
    let n = grid.cell_count();
    let bw = cells[0] * if grid.dim() == 3 { cells[1] } else { 1 };
    let mut m = BandMatrix::zeros(n, bw);
    let mut rhs = vec![0.0; n];
    for idx in 0..n {
        m.add(idx, idx, k);
        let ijk = grid.cell_ijk(idx);
        for d in 0..grid.dim() {
            let h = grid.h()[d];
            let s = grid.cell_stride(d);
            for side in [0usize, 1] {
                let interior = if side == 0 { ijk[d] > 0 } else { ijk[d] + 1 < cells[d] };
                if interior {
                    m.add(idx, idx, 1.0 / (h * h));
                    if side == 0 {
                        m.add(idx, idx - s, -1.0 / (h * h));
                    }
                } else {
                    let denom = h * (1.0 + 0.5 * a1 * h);
                    m.add(idx, idx, a1 / denom);
                    rhs[idx] += a2 / denom;
                }
            }
        }
    }
    m.solve(&rhs)
}
