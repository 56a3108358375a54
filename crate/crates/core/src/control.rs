//! Feedback control evaluators shared by the PDE solvers, the particle
//! engine and the trained policies.

use crate::grid::{Grid, GridField};

/// A feedback control `phi(t, x)` or, for the extended class, `psi(t, x, a)`
/// where `a` is the accumulated potential. Markovian controls ignore `a`.
pub trait Control: Sync {
    /// Output dimension (equal to the state dimension).
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64], a: f64, out: &mut [f64]);

    fn depends_on_a(&self) -> bool {
        false
    }
}

impl<C: Control + ?Sized> Control for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, x: &[f64], a: f64, out: &mut [f64]) {
        (**self).eval(t, x, a, out)
    }
    fn depends_on_a(&self) -> bool {
        (**self).depends_on_a()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroControl {
    pub dim: usize,
}

impl Control for ZeroControl {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, _x: &[f64], _a: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Control backed by a closure `f(t, x, a, out)`.
pub struct FnControl<F> {
    dim: usize,
    extended: bool,
    f: F,
}

impl<F> FnControl<F>
where
    F: Fn(f64, &[f64], f64, &mut [f64]) + Sync,
{
    pub fn markovian(dim: usize, f: F) -> Self {
        FnControl {
            dim,
            extended: false,
            f,
        }
    }

    pub fn extended(dim: usize, f: F) -> Self {
        FnControl { dim, extended: true, f }
    }
}

impl<F> Control for FnControl<F>
where
    F: Fn(f64, &[f64], f64, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], a: f64, out: &mut [f64]) {
        (self.f)(t, x, a, out)
    }
    fn depends_on_a(&self) -> bool {
        self.extended
    }
}

/// Control stored on a grid at the nodes of a uniform time mesh:
/// multilinear in space, piecewise constant in time (value at `t_n` on
/// `[t_n, t_{n+1})`), constant extrapolation outside the box.
///
/// For the extended class the grid is over `(x, a)` and `dim` is 1.
#[derive(Debug, Clone)]
pub struct GridControl {
    pub grid: Grid,
    pub dt: f64,
    pub extended: bool,
    /// `fields[n][k]`: component `k` at time `t_n`.
    pub fields: Vec<Vec<GridField>>,
}

impl GridControl {
    pub fn new(grid: Grid, dt: f64, extended: bool, fields: Vec<Vec<GridField>>) -> Self {
        GridControl {
            grid,
            dt,
            extended,
            fields,
        }
    }

    pub fn steps(&self) -> usize {
        self.fields.len()
    }

    pub fn time_index(&self, t: f64) -> usize {
        let n = (t / self.dt + 1e-9).floor();
        if n <= 0.0 {
            0
        } else {
            (n as usize).min(self.fields.len() - 1)
        }
    }

    /// Largest absolute component over all nodes and times.
    pub fn sup_norm(&self) -> f64 {
        self.fields.iter().flatten().fold(0.0, |m, f| m.max(f.sup_norm()))
    }
}

impl Control for GridControl {
    fn dim(&self) -> usize {
        self.fields[0].len()
    }

    fn eval(&self, t: f64, x: &[f64], a: f64, out: &mut [f64]) {
        let n = self.time_index(t);
        if self.extended {
            let p = [x[0], a];
            for (k, o) in out.iter_mut().enumerate() {
                *o = self.fields[n][k].interpolate(&p);
            }
        } else {
            for (k, o) in out.iter_mut().enumerate() {
                *o = self.fields[n][k].interpolate(x);
            }
        }
    }

    fn depends_on_a(&self) -> bool {
        self.extended
    }
}

/// `alpha * 1{|alpha| <= K}` on the Euclidean norm of the control vector.
pub struct Truncated<C> {
    pub inner: C,
    pub bound: f64,
}

impl<C: Control> Control for Truncated<C> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, t: f64, x: &[f64], a: f64, out: &mut [f64]) {
        self.inner.eval(t, x, a, out);
        let n2: f64 = out.iter().map(|v| v * v).sum();
        if n2 > self.bound * self.bound {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }
    fn depends_on_a(&self) -> bool {
        self.inner.depends_on_a()
    }
}

/// `base + eps * direction`.
pub struct Perturbed<A, B> {
    pub base: A,
    pub direction: B,
    pub eps: f64,
}

impl<A: Control, B: Control> Control for Perturbed<A, B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, t: f64, x: &[f64], a: f64, out: &mut [f64]) {
        self.base.eval(t, x, a, out);
        let mut d = [0.0; 2];
        let d = &mut d[..out.len()];
        self.direction.eval(t, x, a, d);
        for (o, v) in out.iter_mut().zip(d.iter()) {
            *o += self.eps * v;
        }
    }
    fn depends_on_a(&self) -> bool {
        self.base.depends_on_a() || self.direction.depends_on_a()
    }
}

/// Samples a control on every node of `grid` at time `t`, one vector per component.
///
/// With `extended`, the grid is over `(x, a)` and the second coordinate is
/// passed as `a`.
pub fn sample_on_grid(control: &dyn Control, grid: &Grid, t: f64, extended: bool) -> Vec<Vec<f64>> {
    let dim = control.dim();
    let mut out = vec![vec![0.0; grid.len()]; dim];
    let mut p = [0.0; 2];
    let mut v = [0.0; 2];
    for idx in 0..grid.len() {
        grid.point(idx, &mut p);
        if extended {
            control.eval(t, &p[..1], p[1], &mut v[..dim]);
        } else {
            control.eval(t, &p[..grid.dim()], 0.0, &mut v[..dim]);
        }
        for k in 0..dim {
            out[k][idx] = v[k];
        }
    }
    out
}
