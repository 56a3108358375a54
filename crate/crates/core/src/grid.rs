//! Uniform tensor grids on a truncated box with stencils, quadrature,
//! interpolation and one-dimensional Wasserstein-1 distances.

use crate::error::{Error, Result};
use crate::model::ProblemConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if points < 3 {
            return Err(Error::Config(format!("an axis needs at least 3 points, got {points}")));
        }
        if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Config(format!("empty axis [{lower}, {upper}]")));
        }
        Ok(Axis { lower, upper, points })
    }

    /// Axis over `[lower, upper]` whose spacing is as close as possible to `step`.
    pub fn with_spacing(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("grid spacing must be positive, got {step}")));
        }
        let cells = ((upper - lower) / step).round().max(2.0) as usize;
        Axis::new(lower, upper, cells + 1)
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    /// Cell index and fractional offset for linear interpolation, clamped to the axis.
    fn locate(&self, x: f64) -> (usize, f64) {
        if x <= self.lower {
            return (0, 0.0);
        }
        if x >= self.upper {
            return (self.points - 2, 1.0);
        }
        let s = (x - self.lower) / self.spacing();
        let i = (s.floor() as usize).min(self.points - 2);
        (i, (s - i as f64).clamp(0.0, 1.0))
    }
}

/// Uniform grid in one or two dimensions. Values are stored with the last
/// axis varying fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    axes: [Axis; 2],
}

impl Grid {
    pub fn new_1d(axis: Axis) -> Self {
        Grid {
            dim: 1,
            axes: [axis, axis],
        }
    }

    pub fn new_2d(a0: Axis, a1: Axis) -> Self {
        Grid { dim: 2, axes: [a0, a1] }
    }

    pub fn uniform_1d(lower: f64, upper: f64, points: usize) -> Result<Self> {
        Ok(Grid::new_1d(Axis::new(lower, upper, points)?))
    }

    /// Box around the killing domain, inflated by `6 sigma sqrt(T) + epsilon`
    /// (and widened if needed so that the initial mean lies well inside).
    pub fn truncation_box(config: &ProblemConfig, spacing: f64) -> Result<Self> {
        config.validate()?;
        let margin = 6.0 * config.sigma * config.horizon.sqrt() + config.potential.epsilon;
        let dom = &config.potential.domain;
        let mut axes = Vec::with_capacity(config.dim);
        for k in 0..config.dim {
            let c = dom.center()[k];
            let h = dom.half_width(k);
            let x0 = config.initial.mean()[k];
            let lo = (c - h - margin).min(x0 - margin);
            let hi = (c + h + margin).max(x0 + margin);
            axes.push(Axis::with_spacing(lo, hi, spacing)?);
        }
        Ok(if config.dim == 1 {
            Grid::new_1d(axes[0])
        } else {
            Grid::new_2d(axes[0], axes[1])
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis(&self, k: usize) -> &Axis {
        assert!(k < self.dim, "axis {k} out of range");
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        match self.dim {
            1 => self.axes[0].points,
            _ => self.axes[0].points * self.axes[1].points,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axis(k).spacing()
    }

    /// Number of nodes along the last axis (stride of axis 0).
    pub(crate) fn inner_len(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.axes[1].points
        }
    }

    /// Multi-index of a flat index.
    pub fn split(&self, idx: usize) -> (usize, usize) {
        if self.dim == 1 {
            (idx, 0)
        } else {
            (idx / self.axes[1].points, idx % self.axes[1].points)
        }
    }

    pub fn flat(&self, i0: usize, i1: usize) -> usize {
        if self.dim == 1 {
            i0
        } else {
            i0 * self.axes[1].points + i1
        }
    }

    /// Coordinates of node `idx` written into `out` (length `dim`).
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let (i0, i1) = self.split(idx);
        out[0] = self.axes[0].coord(i0);
        if self.dim == 2 {
            out[1] = self.axes[1].coord(i1);
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i0, i1) = self.split(idx);
        let b0 = i0 == 0 || i0 + 1 == self.axes[0].points;
        if self.dim == 1 {
            b0
        } else {
            b0 || i1 == 0 || i1 + 1 == self.axes[1].points
        }
    }

    pub fn trapezoid_weight(&self, idx: usize) -> f64 {
        let (i0, i1) = self.split(idx);
        let w = self.axes[0].trapezoid_weight(i0);
        if self.dim == 1 {
            w
        } else {
            w * self.axes[1].trapezoid_weight(i1)
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.trapezoid_weight(i)).collect()
    }

    /// Trapezoidal `sum w_i a_i b_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        let mut s = 0.0;
        for i in 0..a.len() {
            s += self.trapezoid_weight(i) * a[i] * b[i];
        }
        s
    }

    pub fn integrate_values(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, x) in v.iter().enumerate() {
            s += self.trapezoid_weight(i) * x;
        }
        s
    }

    /// Multilinear interpolation with constant extrapolation outside the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let (i, s) = self.axes[0].locate(x[0]);
        if self.dim == 1 {
            return values[i] * (1.0 - s) + values[i + 1] * s;
        }
        let (j, r) = self.axes[1].locate(x[1]);
        let n1 = self.axes[1].points;
        let v00 = values[i * n1 + j];
        let v01 = values[i * n1 + j + 1];
        let v10 = values[(i + 1) * n1 + j];
        let v11 = values[(i + 1) * n1 + j + 1];
        (1.0 - s) * ((1.0 - r) * v00 + r * v01) + s * ((1.0 - r) * v10 + r * v11)
    }
}

/// Real values on the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Contract(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridField {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut p = [0.0; 2];
        let values = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut p);
                f(&p[..grid.dim()])
            })
            .collect();
        GridField { grid, values }
    }

    pub fn integral(&self) -> f64 {
        integrate(self)
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Marginal on axis 0 of a two-dimensional field (trapezoid over axis 1).
    pub fn marginal_axis0(&self) -> GridField {
        if self.grid.dim() == 1 {
            return self.clone();
        }
        let a0 = *self.grid.axis(0);
        let a1 = *self.grid.axis(1);
        let n1 = a1.points;
        let values = (0..a0.points)
            .map(|i| {
                let row = &self.values[i * n1..(i + 1) * n1];
                row.iter().enumerate().map(|(j, v)| a1.trapezoid_weight(j) * v).sum()
            })
            .collect();
        GridField {
            grid: Grid::new_1d(a0),
            values,
        }
    }
}

/// Derivative along `axis`: central in the interior, second-order one-sided at the ends.
pub(crate) fn derivative_along(grid: &Grid, values: &[f64], axis: usize, out: &mut [f64]) {
    let ax = grid.axis(axis);
    let n = ax.points;
    let h = ax.spacing();
    let (stride, lines) = if axis == 0 {
        (grid.inner_len(), grid.inner_len())
    } else {
        (1, grid.axis(0).points)
    };
    for line in 0..lines {
        let base = if axis == 0 { line } else { line * n };
        let at = |i: usize| values[base + i * stride];
        out[base] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        for i in 1..n - 1 {
            out[base + i * stride] = (at(i + 1) - at(i - 1)) / (2.0 * h);
        }
        out[base + (n - 1) * stride] = (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
    }
}

/// Gradient as one field per axis.
pub fn gradient(field: &GridField) -> Vec<GridField> {
    (0..field.grid.dim())
        .map(|k| {
            let mut out = vec![0.0; field.values.len()];
            derivative_along(&field.grid, &field.values, k, &mut out);
            GridField {
                grid: field.grid,
                values: out,
            }
        })
        .collect()
}

/// Standard 3-point / 5-point Laplacian; boundary nodes are left at zero.
pub fn laplacian(field: &GridField) -> GridField {
    let g = field.grid;
    let v = &field.values;
    let mut out = vec![0.0; v.len()];
    for idx in 0..v.len() {
        if g.is_boundary(idx) {
            continue;
        }
        let mut s = 0.0;
        for k in 0..g.dim() {
            let h = g.spacing(k);
            let stride = if k == 0 { g.inner_len() } else { 1 };
            s += (v[idx + stride] - 2.0 * v[idx] + v[idx - stride]) / (h * h);
        }
        out[idx] = s;
    }
    GridField { grid: g, values: out }
}

/// Trapezoidal rule over the box.
pub fn integrate(field: &GridField) -> f64 {
    field.grid.integrate_values(&field.values)
}

/// `integral |f - g|`.
pub fn l1_distance(f: &GridField, g: &GridField) -> f64 {
    let grid = f.grid;
    let mut s = 0.0;
    for i in 0..f.values.len() {
        s += grid.trapezoid_weight(i) * (f.values[i] - g.values[i]).abs();
    }
    s
}

fn check_density(field: &GridField, what: &str) -> Result<()> {
    if field.grid.dim() != 1 {
        return Err(Error::Contract(format!(
            "{what}: Wasserstein-1 is one-dimensional only"
        )));
    }
    let m = integrate(field);
    if (m - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "{what}: density integrates to {m}, expected 1"
        )));
    }
    Ok(())
}

/// Trapezoid cumulative distribution at the nodes.
fn node_cdf(field: &GridField) -> Vec<f64> {
    let h = field.grid.spacing(0);
    let v = &field.values;
    let mut f = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    f.push(0.0);
    for i in 1..v.len() {
        acc += 0.5 * h * (v[i - 1] + v[i]);
        f.push(acc);
    }
    f
}

/// `W1(mu, nu) = integral |F_mu - F_nu|` for two densities on the same 1-D grid.
pub fn wasserstein1_1d(mu: &GridField, nu: &GridField) -> Result<f64> {
    check_density(mu, "wasserstein1_1d(mu)")?;
    check_density(nu, "wasserstein1_1d(nu)")?;
    if mu.grid != nu.grid {
        return Err(Error::Contract("wasserstein1_1d: grids differ".into()));
    }
    let fm = node_cdf(mu);
    let fn_ = node_cdf(nu);
    let diff: Vec<f64> = fm.iter().zip(&fn_).map(|(a, b)| (a - b).abs()).collect();
    Ok(mu.grid.integrate_values(&diff))
}

/// Exact `integral_p^q |l(x) - c|` for `l` linear from `a` to `b`.
fn abs_linear_integral(len: f64, a: f64, b: f64) -> f64 {
    let (x, y) = (a, b);
    if x * y >= 0.0 {
        0.5 * len * (x.abs() + y.abs())
    } else {
        let (p, q) = (x.abs(), y.abs());
        0.5 * len * (p * p + q * q) / (p + q)
    }
}

/// W1 between a grid density and a weighted point cloud on the real line.
///
/// The density's CDF is the piecewise-linear interpolant of its trapezoid
/// node CDF; weights are normalized internally.
pub fn wasserstein1_atoms(mu: &GridField, positions: &[f64], weights: &[f64]) -> Result<f64> {
    check_density(mu, "wasserstein1_atoms")?;
    if positions.len() != weights.len() || positions.is_empty() {
        return Err(Error::Contract(
            "wasserstein1_atoms: positions and weights must be non-empty and equal length".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Contract("wasserstein1_atoms: bad weights".into()));
    }
    let mut atoms: Vec<(f64, f64)> = positions.iter().zip(weights).map(|(x, w)| (*x, *w / total)).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));

    let ax = *mu.grid.axis(0);
    let cdf = node_cdf(mu);
    let f_grid = |x: f64| -> f64 {
        if x <= ax.lower {
            0.0
        } else if x >= ax.upper {
            cdf[cdf.len() - 1]
        } else {
            let s = (x - ax.lower) / ax.spacing();
            let i = (s.floor() as usize).min(ax.points - 2);
            let r = s - i as f64;
            cdf[i] * (1.0 - r) + cdf[i + 1] * r
        }
    };

    let mut breaks: Vec<f64> = ax.coords();
    breaks.extend(atoms.iter().map(|a| a.0));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut w1 = 0.0;
    let mut k = 0;
    let mut fe = 0.0;
    for win in breaks.windows(2) {
        let (p, q) = (win[0], win[1]);
        while k < atoms.len() && atoms[k].0 <= p {
            fe += atoms[k].1;
            k += 1;
        }
        w1 += abs_linear_integral(q - p, f_grid(p) - fe, f_grid(q) - fe);
    }
    Ok(w1)
}

/// Tridiagonal system with constant bands, factored once and solved many times.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper_mod: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` multiplies `x[i-1]`, `upper[i]` multiplies `x[i+1]` in row `i`.
    pub(crate) fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        let mut inv_pivot = vec![0.0; n];
        let mut upper_mod = vec![0.0; n];
        let mut piv = diag[0];
        inv_pivot[0] = 1.0 / piv;
        upper_mod[0] = upper[0] * inv_pivot[0];
        for i in 1..n {
            piv = diag[i] - lower[i] * upper_mod[i - 1];
            inv_pivot[i] = 1.0 / piv;
            upper_mod[i] = upper[i] * inv_pivot[i];
        }
        Tridiagonal {
            lower,
            inv_pivot,
            upper_mod,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    /// Solves in place along a strided line.
    pub(crate) fn solve_strided(&self, x: &mut [f64], offset: usize, stride: usize) {
        let n = self.len();
        let at = |i: usize| offset + i * stride;
        x[at(0)] *= self.inv_pivot[0];
        for i in 1..n {
            x[at(i)] = (x[at(i)] - self.lower[i] * x[at(i - 1)]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[at(i)] -= self.upper_mod[i] * x[at(i + 1)];
        }
    }
}
