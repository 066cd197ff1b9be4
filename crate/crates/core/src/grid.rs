//! Uniform box grids, cell-centred scalar fields, MAC-staggered vector fields
//! and the discrete gradient/divergence pair.
//!
//! 2D grids are stored as 3D grids with a single layer of unit thickness in
//! `z`, so every stencil is written once for both dimensions.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 3],
    lengths: [f64; 3],
    h: [f64; 3],
}

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 4;

impl Grid {
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = cells.len();
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} extents given for a {dim}D grid",
                lengths.len()
            )));
        }
        let mut c = [1usize; 3];
        let mut l = [1.0f64; 3];
        let mut h = [1.0f64; 3];
        for d in 0..dim {
            if cells[d] < MIN_CELLS {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} has {} cells, need at least {MIN_CELLS}",
                    cells[d]
                )));
            }
            if !(lengths[d].is_finite() && lengths[d] > 0.0) {
                return Err(Error::InvalidGrid(format!("axis {d} extent {} is not positive", lengths[d])));
            }
            c[d] = cells[d];
            l[d] = lengths[d];
            h[d] = lengths[d] / cells[d] as f64;
        }
        Ok(Grid {
            dim,
            cells: c,
            lengths: l,
            h,
        })
    }

    pub fn square(n: usize, length: f64) -> Result<Self> {
        Grid::new(&[n, n], &[length, length])
    }

    pub fn cube(n: usize, length: f64) -> Result<Self> {
        Grid::new(&[n, n, n], &[length, length, length])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis; the third entry is 1 for 2D grids.
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn h(&self) -> [f64; 3] {
        self.h
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Measure of the domain (area in 2D).
    pub fn domain_measure(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    /// Area (length in 2D) of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.h[axis]
    }

    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.cells;
        d[axis] += 1;
        d
    }

    pub fn face_count(&self, axis: usize) -> usize {
        self.face_dims(axis).iter().product()
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    #[inline]
    pub fn cell_ijk(&self, idx: usize) -> [usize; 3] {
        let nx = self.cells[0];
        let ny = self.cells[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn face_index(&self, axis: usize, ijk: [usize; 3]) -> usize {
        let d = self.face_dims(axis);
        ijk[0] + d[0] * (ijk[1] + d[1] * ijk[2])
    }

    #[inline]
    pub fn face_ijk(&self, axis: usize, idx: usize) -> [usize; 3] {
        let d = self.face_dims(axis);
        [idx % d[0], (idx / d[0]) % d[1], idx / (d[0] * d[1])]
    }

    /// Index stride of a unit step along `axis` in cell storage.
    #[inline]
    pub fn cell_stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.cells[0],
            _ => self.cells[0] * self.cells[1],
        }
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let ijk = self.cell_ijk(idx);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = (ijk[d] as f64 + 0.5) * self.h[d];
        }
        x
    }

    pub fn face_center(&self, axis: usize, idx: usize) -> [f64; 3] {
        let ijk = self.face_ijk(axis, idx);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = if d == axis {
                ijk[d] as f64 * self.h[d]
            } else {
                (ijk[d] as f64 + 0.5) * self.h[d]
            };
        }
        x
    }

    /// Cells on either side of a face: `(lower, upper)`; `None` outside the box.
    #[inline]
    pub fn face_cells(&self, axis: usize, idx: usize) -> (Option<usize>, Option<usize>) {
        let ijk = self.face_ijk(axis, idx);
        let f = ijk[axis];
        let mut c = ijk;
        let upper = (f < self.cells[axis]).then(|| {
            c[axis] = f;
            self.cell_index(c[0], c[1], c[2])
        });
        let lower = (f > 0).then(|| {
            c[axis] = f - 1;
            self.cell_index(c[0], c[1], c[2])
        });
        (lower, upper)
    }

    pub fn is_boundary_face(&self, axis: usize, idx: usize) -> bool {
        let f = self.face_ijk(axis, idx)[axis];
        f == 0 || f == self.cells[axis]
    }

    /// Faces `(low, high)` bounding a cell along `axis`.
    #[inline]
    pub fn cell_faces(&self, axis: usize, ijk: [usize; 3]) -> (usize, usize) {
        let lo = self.face_index(axis, ijk);
        let mut up = ijk;
        up[axis] += 1;
        (lo, self.face_index(axis, up))
    }

    /// Every boundary face of the box, with its axis and outward sign.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let mut out = Vec::new();
        for axis in 0..self.dim {
            for idx in 0..self.face_count(axis) {
                let ijk = self.face_ijk(axis, idx);
                if ijk[axis] == 0 {
                    out.push(BoundaryFace { axis, index: idx, outward: -1.0, side: BoxSide { axis, high: false } });
                } else if ijk[axis] == self.cells[axis] {
                    out.push(BoundaryFace { axis, index: idx, outward: 1.0, side: BoxSide { axis, high: true } });
                }
            }
        }
        out
    }

    /// Sides of the box (4 in 2D, 6 in 3D).
    pub fn sides(&self) -> Vec<BoxSide> {
        (0..self.dim)
            .flat_map(|axis| [BoxSide { axis, high: false }, BoxSide { axis, high: true }])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoxSide {
    pub axis: usize,
    pub high: bool,
}

impl BoxSide {
    /// Distance from `x` to this side.
    pub fn distance(&self, grid: &Grid, x: [f64; 3]) -> f64 {
        if self.high {
            grid.lengths()[self.axis] - x[self.axis]
        } else {
            x[self.axis]
        }
    }

    /// Sign of the outward normal along the side's axis.
    pub fn outward(&self) -> f64 {
        if self.high {
            1.0
        } else {
            -1.0
        }
    }

    pub fn label(&self) -> String {
        let axis = ["x", "y", "z"][self.axis];
        format!("{axis}{}", if self.high { "=L" } else { "=0" })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    pub axis: usize,
    pub index: usize,
    /// +1 on the high side, -1 on the low side.
    pub outward: f64,
    pub side: BoxSide,
}

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.cell_count()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![value; grid.cell_count()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::SizeMismatch {
                expected: grid.cell_count(),
                found: values.len(),
            });
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.cell_count()).map(|c| f(grid.cell_center(c))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { what: what.to_string() })
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Volume-weighted sum.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// Face-normal velocity components on the MAC faces, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<Grid>,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let comps = (0..grid.dim()).map(|d| vec![0.0; grid.face_count(d)]).collect();
        VectorField {
            grid: grid.clone(),
            comps,
        }
    }

    pub fn from_components(grid: &Arc<Grid>, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::SizeMismatch {
                expected: grid.dim(),
                found: comps.len(),
            });
        }
        for (d, c) in comps.iter().enumerate() {
            if c.len() != grid.face_count(d) {
                return Err(Error::SizeMismatch {
                    expected: grid.face_count(d),
                    found: c.len(),
                });
            }
        }
        Ok(VectorField {
            grid: grid.clone(),
            comps,
        })
    }

    /// Samples `f(axis, face_center)` on every face.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        let comps = (0..grid.dim())
            .map(|d| (0..grid.face_count(d)).map(|i| f(d, grid.face_center(d, i))).collect())
            .collect();
        VectorField {
            grid: grid.clone(),
            comps,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L2 norm with each face weighted by a cell volume.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.comps.iter().flatten().map(|v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// Face-weighted inner product.
    pub fn dot(&self, other: &VectorField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        let s: f64 = self
            .comps
            .iter()
            .flatten()
            .zip(other.comps.iter().flatten())
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn zero_boundary_normals(&mut self) {
        for d in 0..self.grid.dim() {
            let dims = self.grid.face_dims(d);
            let n = self.grid.cells()[d];
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let ijk = [i, j, k];
                        if ijk[d] == 0 || ijk[d] == n {
                            let idx = self.grid.face_index(d, ijk);
                            self.comps[d][idx] = 0.0;
                        }
                    }
                }
            }
        }
    }

    /// Velocity averaged to cell centres.
    pub fn cell_centered(&self) -> Vec<[f64; 3]> {
        let g = &self.grid;
        let mut out = vec![[0.0; 3]; g.cell_count()];
        for (c, slot) in out.iter_mut().enumerate() {
            let ijk = g.cell_ijk(c);
            for d in 0..g.dim() {
                let (lo, hi) = g.cell_faces(d, ijk);
                slot[d] = 0.5 * (self.comps[d][lo] + self.comps[d][hi]);
            }
        }
        out
    }

    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }
}

/// The unknown triple and the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub n: ScalarField,
    pub c_tilde: ScalarField,
    pub u: VectorField,
    pub t: f64,
}

impl State {
    pub fn new(n: ScalarField, c_tilde: ScalarField, u: VectorField, t: f64) -> Result<Self> {
        same_grid(n.grid(), c_tilde.grid())?;
        same_grid(n.grid(), u.grid())?;
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("state time must be >= 0, got {t}")));
        }
        Ok(State { n, c_tilde, u, t })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        State {
            n: ScalarField::zeros(grid),
            c_tilde: ScalarField::zeros(grid),
            u: VectorField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.n.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.n.is_finite() && self.c_tilde.is_finite() && self.u.is_finite() && self.t.is_finite()
    }

    pub fn check_finite(&self) -> Result<()> {
        self.n.check_finite("n")?;
        self.c_tilde.check_finite("c_tilde")?;
        if !self.u.is_finite() {
            return Err(Error::NonFinite { what: "u".into() });
        }
        Ok(())
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Face-difference gradient; boundary faces carry zero (no-flux).
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid().clone();
    let mut out = VectorField::zeros(&g);
    let vals = f.values();
    for d in 0..g.dim() {
        let inv_h = 1.0 / g.h()[d];
        let comp = out.component_mut(d);
        for (idx, slot) in comp.iter_mut().enumerate() {
            if let (Some(lo), Some(hi)) = g.face_cells(d, idx) {
                *slot = (vals[hi] - vals[lo]) * inv_h;
            }
        }
    }
    out
}

/// Per-cell sum of face-difference fluxes.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid().clone();
    let mut out = ScalarField::zeros(&g);
    let vals = out.values_mut();
    for (c, slot) in vals.iter_mut().enumerate() {
        let ijk = g.cell_ijk(c);
        let mut s = 0.0;
        for d in 0..g.dim() {
            let (lo, hi) = g.cell_faces(d, ijk);
            s += (v.component(d)[hi] - v.component(d)[lo]) / g.h()[d];
        }
        *slot = s;
    }
    out
}

/// Two-cell average on interior faces; boundary faces take the adjacent cell.
pub fn face_average(f: &ScalarField, axis: usize) -> Vec<f64> {
    let g = f.grid();
    let vals = f.values();
    (0..g.face_count(axis))
        .map(|idx| match g.face_cells(axis, idx) {
            (Some(lo), Some(hi)) => 0.5 * (vals[lo] + vals[hi]),
            (Some(c), None) | (None, Some(c)) => vals[c],
            (None, None) => 0.0,
        })
        .collect()
}

/// Standard cell-centred Laplacian with reflecting (homogeneous Neumann)
/// ghost cells.
pub fn neumann_laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid().clone();
    let vals = f.values();
    let mut out = vec![0.0; vals.len()];
    let cells = g.cells();
    for d in 0..g.dim() {
        let inv_h2 = 1.0 / (g.h()[d] * g.h()[d]);
        let stride = g.cell_stride(d);
        for (c, slot) in out.iter_mut().enumerate() {
            let i = g.cell_ijk(c)[d];
            let mut s = 0.0;
            if i > 0 {
                s += vals[c - stride] - vals[c];
            }
            if i + 1 < cells[d] {
                s += vals[c + stride] - vals[c];
            }
            *slot += s * inv_h2;
        }
    }
    ScalarField { grid: g, values: out }
}

/// Central cell gradient with reflecting ghosts (one-sided halves at walls).
pub fn cell_gradient(f: &ScalarField) -> Vec<[f64; 3]> {
    let g = f.grid();
    let vals = f.values();
    let cells = g.cells();
    let mut out = vec![[0.0; 3]; vals.len()];
    for d in 0..g.dim() {
        let stride = g.cell_stride(d);
        let h = g.h()[d];
        for (c, slot) in out.iter_mut().enumerate() {
            let i = g.cell_ijk(c)[d];
            let lo = if i > 0 { vals[c - stride] } else { vals[c] };
            let hi = if i + 1 < cells[d] { vals[c + stride] } else { vals[c] };
            slot[d] = (hi - lo) / (2.0 * h);
        }
    }
    out
}
