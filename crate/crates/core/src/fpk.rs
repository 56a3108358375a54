//! Forward equation for the Gibbs-conditioned law.
//!
//! The non-local equation for `mu_t` is never discretized directly. Instead the
//! linear killed equation for the unnormalized flow `gamma_t` is advanced one
//! step and the result is renormalized; the log of the accumulated mass ratios
//! is kept alongside.
//!
//! One step applies `E D A E` to the current density, where `E` is the exact
//! reaction factor `exp(-V dt / 2)`, `D` is Crank-Nicolson diffusion with
//! homogeneous Dirichlet data on the spatial boundary and `A` is explicit
//! conservative upwind advection (plus, on `(x, a)` grids, upwind transport in
//! `a` with speed `V(x)`). The first steps replace Crank-Nicolson by pairs of
//! implicit Euler half steps to damp the point-mass initial data.

use crate::control::{sample_on_grid, Control};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid, GridField, Tridiagonal};
use crate::model::{InitialMeasure, ProblemConfig};

/// Largest admissible Courant number for the explicit advection.
pub const CFL_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, Copy)]
pub struct FpkOptions {
    /// Number of initial steps taken as two implicit Euler half steps.
    pub rannacher_steps: usize,
}

impl Default for FpkOptions {
    fn default() -> Self {
        FpkOptions { rannacher_steps: 2 }
    }
}

/// Discrete Gibbs flow `mu_0, ..., mu_K` on a uniform time mesh.
#[derive(Debug, Clone)]
pub struct GibbsFlow {
    pub grid: Grid,
    /// `true` when the grid is over `(x, a)`.
    pub extended: bool,
    pub dt: f64,
    pub times: Vec<f64>,
    pub mu: Vec<GridField>,
    /// `log integral gamma_t`, starting at 0.
    pub log_gamma_mass: Vec<f64>,
    /// One-step mass ratios `integral gamma_{n+1} / integral gamma_n`.
    pub mass_ratio: Vec<f64>,
    /// Largest Courant number met during the solve.
    pub max_courant: f64,
}

impl GibbsFlow {
    pub fn steps(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `<mu_n, f>` for a field on the flow grid.
    pub fn bracket(&self, n: usize, values: &[f64]) -> f64 {
        self.grid.inner(&self.mu[n].values, values)
    }

    /// Marginal on `x` (identity for non-extended flows).
    pub fn x_marginal(&self, n: usize) -> GridField {
        self.mu[n].marginal_axis0()
    }
}

pub(crate) fn mesh_times(horizon: f64, steps: usize) -> Vec<f64> {
    let dt = horizon / steps as f64;
    (0..=steps)
        .map(|n| if n == steps { horizon } else { n as f64 * dt })
        .collect()
}

/// `(x, a)` grid for the extended forward equation: the given `x` axis and an
/// `a` axis covering `[0, T sup V]` with spacing close to `a_step`.
pub fn extended_grid(config: &ProblemConfig, x_axis: Axis, a_step: f64) -> Result<Grid> {
    if config.dim != 1 {
        return Err(Error::Config("the extended class requires d = 1".into()));
    }
    let mut a_max = config.horizon * config.potential.sup();
    if a_max <= 0.0 {
        a_max = config.horizon;
    }
    let cells = ((a_max / a_step).ceil() as usize).max(2);
    Ok(Grid::new_2d(x_axis, Axis::new(0.0, a_max, cells + 1)?))
}

/// Node values of the initial law, normalized to unit trapezoid mass.
pub fn initial_density(config: &ProblemConfig, grid: &Grid, extended: bool) -> Result<GridField> {
    let sdim = if extended { 1 } else { grid.dim() };
    if sdim != config.dim {
        return Err(Error::Contract(format!(
            "grid has {sdim} spatial axes, problem has dimension {}",
            config.dim
        )));
    }
    let mut out = GridField::zeros(*grid);
    let n1 = grid.inner_len();
    match &config.initial {
        InitialMeasure::PointMass(x0) => {
            // linear (hat) projection conserves mass and first moment
            let spread = |axis: usize| -> Result<[(usize, f64); 2]> {
                let ax = grid.axis(axis);
                let h = ax.spacing();
                let s = (x0[axis] - ax.lower) / h;
                if s < 1.0 || s > (ax.points - 2) as f64 {
                    return Err(Error::Contract(format!(
                        "initial point {} too close to the truncation box",
                        x0[axis]
                    )));
                }
                let i = s.floor() as usize;
                let r = s - i as f64;
                Ok([(i, (1.0 - r) / h), (i + 1, r / h)])
            };
            let w0 = spread(0)?;
            if extended {
                let da = grid.spacing(1);
                for (i, w) in w0 {
                    out.values[i * n1] += w * 2.0 / da;
                }
            } else if grid.dim() == 1 {
                for (i, w) in w0 {
                    out.values[i] += w;
                }
            } else {
                let w1 = spread(1)?;
                for (i, wi) in w0 {
                    for (j, wj) in w1 {
                        out.values[i * n1 + j] += wi * wj;
                    }
                }
            }
        }
        InitialMeasure::Gaussian { mean, std } => {
            let mut p = [0.0; 2];
            for idx in 0..grid.len() {
                grid.point(idx, &mut p);
                if grid.is_boundary(idx) && !extended {
                    continue;
                }
                let (i0, i1) = grid.split(idx);
                if extended && (i1 != 0 || i0 == 0 || i0 + 1 == grid.axis(0).points) {
                    continue;
                }
                let mut e = 0.0;
                for k in 0..config.dim {
                    let z = (p[k] - mean[k]) / std[k];
                    e += z * z;
                }
                out.values[idx] = (-0.5 * e).exp();
            }
        }
    }
    let m = out.integral();
    if !(m > 0.0) {
        return Err(Error::Contract("initial law has no mass on the grid".into()));
    }
    out.values.iter_mut().for_each(|v| *v /= m);
    Ok(out)
}

/// Crank-Nicolson (or implicit Euler) diffusion along one axis with
/// homogeneous Dirichlet data.
#[derive(Debug, Clone)]
struct AxisDiffusion {
    axis: usize,
    lambda: f64,
    /// `I - lambda L` on the interior; CN and the implicit Euler half step share it.
    band: Tridiagonal,
}

impl AxisDiffusion {
    fn new(grid: &Grid, axis: usize, kappa: f64, dt: f64) -> Self {
        let h = grid.spacing(axis);
        let m = grid.axis(axis).points - 2;
        let l = 0.5 * kappa * dt / (h * h);
        AxisDiffusion {
            axis,
            lambda: l,
            band: Tridiagonal::new(vec![-l; m], vec![1.0 + 2.0 * l; m], vec![-l; m]),
        }
    }

    /// Applies the step to every line along the axis. Boundary nodes on this
    /// axis are ignored on input and zero on output.
    fn apply(&self, grid: &Grid, v: &mut [f64], rannacher: bool, scratch: &mut Vec<f64>) {
        let n = grid.axis(self.axis).points;
        let (stride, lines) = if self.axis == 0 {
            (grid.inner_len(), grid.inner_len())
        } else {
            (1, grid.axis(0).points)
        };
        scratch.resize(n - 2, 0.0);
        for line in 0..lines {
            let base = if self.axis == 0 { line } else { line * n };
            let at = |i: usize| base + i * stride;
            if rannacher {
                for i in 1..n - 1 {
                    scratch[i - 1] = v[at(i)];
                }
                self.band.solve_strided(scratch, 0, 1);
                self.band.solve_strided(scratch, 0, 1);
            } else {
                let l = self.lambda;
                for i in 1..n - 1 {
                    let left = if i > 1 { v[at(i - 1)] } else { 0.0 };
                    let right = if i + 2 < n { v[at(i + 1)] } else { 0.0 };
                    scratch[i - 1] = v[at(i)] + l * (left - 2.0 * v[at(i)] + right);
                }
                self.band.solve_strided(scratch, 0, 1);
            }
            v[at(0)] = 0.0;
            v[at(n - 1)] = 0.0;
            for i in 1..n - 1 {
                v[at(i)] = scratch[i - 1];
            }
        }
    }
}

/// The pieces of one forward step, reused by the discrete adjoint.
#[derive(Debug, Clone)]
pub(crate) struct StepOperator {
    pub(crate) grid: Grid,
    pub(crate) extended: bool,
    pub(crate) dt: f64,
    pub(crate) potential: Vec<f64>,
    half_reaction: Vec<f64>,
    diffusion: Vec<AxisDiffusion>,
    dirichlet: Vec<bool>,
    pub(crate) weights: Vec<f64>,
}

impl StepOperator {
    pub(crate) fn new(config: &ProblemConfig, grid: &Grid, extended: bool, dt: f64) -> Result<Self> {
        config.validate()?;
        if extended && grid.dim() != 2 {
            return Err(Error::Contract("extended flows need an (x, a) grid".into()));
        }
        if !extended && grid.dim() != config.dim {
            return Err(Error::Contract("grid and problem dimension differ".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let mut p = [0.0; 2];
        let sdim = config.dim;
        let potential: Vec<f64> = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut p);
                config.potential.value(&p[..sdim])
            })
            .collect();
        let half_reaction = potential.iter().map(|v| (-0.5 * v * dt).exp()).collect();
        let kappa = 0.5 * config.sigma * config.sigma;
        let diffusion = (0..sdim).map(|k| AxisDiffusion::new(grid, k, kappa, dt)).collect();
        let dirichlet = (0..grid.len())
            .map(|idx| {
                let (i0, i1) = grid.split(idx);
                let b0 = i0 == 0 || i0 + 1 == grid.axis(0).points;
                if grid.dim() == 2 && !extended {
                    b0 || i1 == 0 || i1 + 1 == grid.axis(1).points
                } else {
                    b0
                }
            })
            .collect();
        Ok(StepOperator {
            grid: *grid,
            extended,
            dt,
            potential,
            half_reaction,
            diffusion,
            dirichlet,
            weights: grid.weights(),
        })
    }

    pub(crate) fn react_half(&self, v: &mut [f64]) {
        for (x, e) in v.iter_mut().zip(&self.half_reaction) {
            *x *= e;
        }
    }

    pub(crate) fn diffuse(&self, v: &mut [f64], rannacher: bool) {
        let mut scratch = Vec::new();
        for d in &self.diffusion {
            d.apply(&self.grid, v, rannacher, &mut scratch);
        }
    }

    /// Courant number of the explicit part for the given node drifts.
    pub(crate) fn courant(&self, drift: &[Vec<f64>]) -> f64 {
        let mut c = 0.0;
        for (k, b) in drift.iter().enumerate() {
            let m = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            c += m * self.dt / self.grid.spacing(k);
        }
        if self.extended {
            let vmax = self.potential.iter().fold(0.0f64, |m, v| m.max(*v));
            c += 2.0 * vmax * self.dt / self.grid.spacing(1);
        }
        c
    }

    /// Visits every flux face as `(left, right, c_l, c_r, volume_left,
    /// volume_right)`: the face carries `c_l * v[left] + c_r * v[right]` from
    /// `left` to `right`. The `a` axis has no inflow at 0 and no outflow at
    /// its top, so transport in `a` conserves each `x` column.
    fn for_each_face(
        &self,
        drift: &[Vec<f64>],
        beta: Option<&[Vec<f64>]>,
        mut visit: impl FnMut(usize, usize, f64, f64, f64, f64),
    ) {
        let g = &self.grid;
        let dt = self.dt;
        let xdims = if self.extended { 1 } else { g.dim() };
        for k in 0..xdims {
            let stride = if k == 0 { g.inner_len() } else { 1 };
            let vol = g.spacing(k);
            for l in 0..g.len() {
                let (i0, i1) = g.split(l);
                let last = if k == 0 {
                    i0 + 1 == g.axis(0).points
                } else {
                    i1 + 1 == g.axis(1).points
                };
                if last {
                    continue;
                }
                let r = l + stride;
                let b = 0.5 * (drift[k][l] + drift[k][r]);
                let (cl, cr) = match beta {
                    None => (dt * b.max(0.0), dt * b.min(0.0)),
                    Some(beta) => {
                        let db = 0.5 * (beta[k][l] + beta[k][r]);
                        if b > 0.0 || (b == 0.0 && db >= 0.0) {
                            (dt * db, 0.0)
                        } else {
                            (0.0, dt * db)
                        }
                    }
                };
                let cl = if self.dirichlet[l] { 0.0 } else { cl };
                let cr = if self.dirichlet[r] { 0.0 } else { cr };
                if cl != 0.0 || cr != 0.0 {
                    visit(l, r, cl, cr, vol, vol);
                }
            }
        }
        if self.extended && beta.is_none() {
            let na = g.axis(1).points;
            let da = g.spacing(1);
            for l in 0..g.len() {
                if self.dirichlet[l] {
                    continue;
                }
                let (_, j) = g.split(l);
                let c = dt * self.potential[l];
                if c == 0.0 {
                    continue;
                }
                if j + 1 == na {
                    continue;
                }
                let vl = if j == 0 { 0.5 * da } else { da };
                let vr = if j + 2 == na { 0.5 * da } else { da };
                visit(l, l + 1, c, 0.0, vl, vr);
            }
        }
    }

    /// Explicit upwind advection `out = A(drift) v`.
    pub(crate) fn advect(&self, v: &[f64], drift: &[Vec<f64>], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] = if self.dirichlet[i] { 0.0 } else { v[i] };
        }
        self.for_each_face(drift, None, |l, r, cl, cr, vl, vr| {
            let f = cl * v[l] + cr * v[r];
            out[l] -= f / vl;
            out[r] += f / vr;
        });
        for i in 0..v.len() {
            if self.dirichlet[i] {
                out[i] = 0.0;
            }
        }
    }

    /// Plain matrix transpose of [`Self::advect`].
    pub(crate) fn advect_transpose(&self, v: &[f64], drift: &[Vec<f64>], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] = if self.dirichlet[i] { 0.0 } else { v[i] };
        }
        self.for_each_face(drift, None, |l, r, cl, cr, vl, vr| {
            let g = v[r] / vr - v[l] / vl;
            out[l] += cl * g;
            out[r] += cr * g;
        });
        for i in 0..v.len() {
            if self.dirichlet[i] {
                out[i] = 0.0;
            }
        }
    }

    /// One-sided directional derivative of `A(drift) v` along `beta`.
    pub(crate) fn advect_derivative(&self, v: &[f64], drift: &[Vec<f64>], beta: &[Vec<f64>], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.for_each_face(drift, Some(beta), |l, r, cl, cr, vl, vr| {
            let f = cl * v[l] + cr * v[r];
            out[l] -= f / vl;
            out[r] += f / vr;
        });
        for i in 0..v.len() {
            if self.dirichlet[i] {
                out[i] = 0.0;
            }
        }
    }

    /// `E D A E v`.
    pub(crate) fn apply(&self, v: &[f64], drift: &[Vec<f64>], rannacher: bool) -> Vec<f64> {
        let mut a = v.to_vec();
        self.react_half(&mut a);
        let mut b = vec![0.0; v.len()];
        self.advect(&a, drift, &mut b);
        self.diffuse(&mut b, rannacher);
        self.react_half(&mut b);
        b
    }
}

/// One step of the linear killed equation for the unnormalized flow.
pub fn step_gamma(config: &ProblemConfig, gamma: &GridField, drift: &[Vec<f64>], dt: f64) -> Result<GridField> {
    let op = StepOperator::new(config, &gamma.grid, false, dt)?;
    step_with(&op, gamma, drift, false)
}

fn step_with(op: &StepOperator, gamma: &GridField, drift: &[Vec<f64>], rannacher: bool) -> Result<GridField> {
    if drift.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("drift is not finite".into()));
    }
    let courant = op.courant(drift);
    if courant > CFL_LIMIT {
        // the courant number is linear in dt
        return Err(Error::Cfl {
            courant,
            max_dt: CFL_LIMIT * op.dt / courant,
        });
    }
    Ok(GridField {
        grid: gamma.grid,
        values: op.apply(&gamma.values, drift, rannacher),
    })
}

fn solve(
    config: &ProblemConfig,
    control: &dyn Control,
    grid: &Grid,
    steps: usize,
    extended: bool,
    opts: FpkOptions,
) -> Result<GibbsFlow> {
    if steps == 0 {
        return Err(Error::Config("need at least one time step".into()));
    }
    if control.dim() != config.dim {
        return Err(Error::Contract("control dimension differs from the state".into()));
    }
    let dt = config.horizon / steps as f64;
    let op = StepOperator::new(config, grid, extended, dt)?;
    let times = mesh_times(config.horizon, steps);
    let mu0 = initial_density(config, grid, extended)?;
    let mut mu = Vec::with_capacity(steps + 1);
    let mut log_mass = Vec::with_capacity(steps + 1);
    let mut ratios = Vec::with_capacity(steps);
    let mut max_courant = 0.0f64;
    mu.push(mu0);
    log_mass.push(0.0);
    for n in 0..steps {
        let drift = sample_on_grid(control, grid, times[n], extended);
        max_courant = max_courant.max(op.courant(&drift));
        let next = step_with(&op, &mu[n], &drift, n < opts.rannacher_steps)?;
        let c = next.integral();
        let lm = log_mass[n] + c.ln();
        if !(c > 0.0) || lm < (1e-300f64).ln() {
            return Err(Error::MassUnderflow {
                time: times[n + 1],
                log_mass: lm,
            });
        }
        let mut next = next;
        next.values.iter_mut().for_each(|v| *v /= c);
        if !next.is_finite() {
            return Err(Error::Contract(format!("non-finite density at t={}", times[n + 1])));
        }
        mu.push(next);
        log_mass.push(lm);
        ratios.push(c);
    }
    Ok(GibbsFlow {
        grid: *grid,
        extended,
        dt,
        times,
        mu,
        log_gamma_mass: log_mass,
        mass_ratio: ratios,
        max_courant,
    })
}

/// Gibbs flow driven by a Markovian feedback `phi(t, x)`.
pub fn solve_fpk(
    config: &ProblemConfig,
    control: &dyn Control,
    grid: &Grid,
    steps: usize,
    opts: FpkOptions,
) -> Result<GibbsFlow> {
    solve(config, control, grid, steps, false, opts)
}

/// Gibbs flow on `(x, a)` driven by an extended feedback `psi(t, x, a)`.
pub fn solve_fpk_extended(
    config: &ProblemConfig,
    control: &dyn Control,
    grid_xa: &Grid,
    steps: usize,
    opts: FpkOptions,
) -> Result<GibbsFlow> {
    if config.dim != 1 {
        return Err(Error::Config("the extended class requires d = 1".into()));
    }
    solve(config, control, grid_xa, steps, true, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{FnControl, ZeroControl};
    use crate::grid::l1_distance;
    use crate::model::Potential;

    fn gauss_cfg(s: f64) -> ProblemConfig {
        ProblemConfig::benchmark(0.0)
            .with_potential(Potential::constant(1, 0.0))
            .with_initial(InitialMeasure::Gaussian {
                mean: vec![0.0],
                std: vec![s],
            })
    }

    fn gauss_field(grid: Grid, var: f64) -> GridField {
        GridField::from_fn(grid, |x| {
            (-0.5 * x[0] * x[0] / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        })
    }

    #[test]
    fn heat_kernel_spreading() {
        let cfg = gauss_cfg(0.5);
        let grid = Grid::uniform_1d(-8.0, 8.0, 801).unwrap();
        let flow = solve_fpk(&cfg, &ZeroControl { dim: 1 }, &grid, 200, FpkOptions::default()).unwrap();
        for n in [50, 100, 200] {
            let exact = gauss_field(grid, 0.25 + flow.times[n]);
            assert!(l1_distance(&flow.mu[n], &exact) < 2e-3);
        }
    }

    #[test]
    fn constant_reaction_is_exact() {
        let cfg = gauss_cfg(0.5).with_potential(Potential::constant(1, 0.7));
        let grid = Grid::uniform_1d(-8.0, 8.0, 321).unwrap();
        let g0 = initial_density(&cfg, &grid, false).unwrap();
        let drift = vec![vec![0.0; grid.len()]];
        let g1 = step_gamma(&cfg, &g0, &drift, 0.01).unwrap();
        let r = g1.integral() / g0.integral();
        assert!((r - (-0.7f64 * 0.01).exp()).abs() < 1e-10);
        let zero = GridField::zeros(grid);
        assert!(step_gamma(&cfg, &zero, &drift, 0.01)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let cfg = gauss_cfg(0.5);
        let grid = Grid::uniform_1d(-1.0, 1.0, 21).unwrap();
        let g0 = initial_density(&cfg, &grid, false).unwrap();
        let drift = vec![vec![10.0; grid.len()]];
        match step_gamma(&cfg, &g0, &drift, 0.1) {
            Err(Error::Cfl { courant, max_dt }) => {
                assert!(courant > 0.9);
                assert!((max_dt - 0.009).abs() < 1e-12);
            }
            other => panic!("expected a CFL error, got {other:?}"),
        }
    }

    #[test]
    fn log_mass_tracks_mean_potential() {
        let cfg = ProblemConfig::benchmark(-1.0).with_amplitude(3.0);
        let grid = Grid::truncation_box(&cfg, 0.02).unwrap();
        let flow = solve_fpk(&cfg, &ZeroControl { dim: 1 }, &grid, 400, FpkOptions::default()).unwrap();
        let v = GridField::from_fn(grid, |x| cfg.potential.value(x));
        for n in 0..400 {
            let slope = (flow.log_gamma_mass[n + 1] - flow.log_gamma_mass[n]) / flow.dt;
            let m = 0.5 * (flow.bracket(n, &v.values) + flow.bracket(n + 1, &v.values));
            assert!((slope + m).abs() < 5e-2 * (1.0 + m), "n={n}: {slope} vs {m}");
            assert!(flow.log_gamma_mass[n + 1] <= flow.log_gamma_mass[n]);
            assert!((flow.mu[n + 1].integral() - 1.0).abs() < 1e-12);
            assert!(flow.mu[n + 1].values.iter().all(|v| *v >= -1e-12));
        }
    }

    #[test]
    fn extended_a_marginal_moves_with_constant_speed() {
        let c = 1.5;
        let cfg = gauss_cfg(0.5).with_potential(Potential::constant(1, c));
        let xa = Axis::new(-6.0, 6.0, 121).unwrap();
        let grid = extended_grid(&cfg, xa, 0.05).unwrap();
        let da = grid.spacing(1);
        let ctrl = FnControl::extended(1, |_t, x: &[f64], _a, o: &mut [f64]| o[0] = -0.3 * x[0]);
        let flow = solve_fpk_extended(&cfg, &ctrl, &grid, 100, FpkOptions::default()).unwrap();
        for n in [20, 50, 80] {
            let mut mean_a = 0.0;
            for idx in 0..grid.len() {
                let (_, j) = grid.split(idx);
                mean_a += grid.trapezoid_weight(idx) * flow.mu[n].values[idx] * grid.axis(1).coord(j);
            }
            assert!(
                (mean_a - c * flow.times[n]).abs() <= da,
                "{mean_a} vs {}",
                c * flow.times[n]
            );
        }
    }

    #[test]
    fn extended_marginal_matches_markovian_flow() {
        let cfg = ProblemConfig::benchmark(-0.5);
        let xa = Axis::with_spacing(-7.1, 7.1, 0.05).unwrap();
        let grid = extended_grid(&cfg, xa, 0.1).unwrap();
        let ctrl = FnControl::markovian(1, |t, x: &[f64], _a, o: &mut [f64]| o[0] = -(1.0 - t) * x[0].tanh());
        let ext = solve_fpk_extended(&cfg, &ctrl, &grid, 200, FpkOptions::default()).unwrap();
        let flat = solve_fpk(&cfg, &ctrl, &Grid::new_1d(xa), 200, FpkOptions::default()).unwrap();
        for n in [0, 100, 200] {
            assert!(l1_distance(&ext.x_marginal(n), &flat.mu[n]) < 1e-10);
        }
    }

    #[test]
    fn zero_potential_keeps_a_at_origin() {
        let cfg = ProblemConfig::benchmark(0.0).with_potential(Potential::constant(1, 0.0));
        let xa = Axis::with_spacing(-7.0, 7.0, 0.1).unwrap();
        let grid = extended_grid(&cfg, xa, 0.25).unwrap();
        let flow = solve_fpk_extended(&cfg, &ZeroControl { dim: 1 }, &grid, 50, FpkOptions::default()).unwrap();
        let mu = &flow.mu[50];
        for idx in 0..grid.len() {
            if grid.split(idx).1 > 0 {
                assert_eq!(mu.values[idx], 0.0);
            }
        }
    }

    #[test]
    fn two_dimensional_heat_mass() {
        let mut cfg = gauss_cfg(0.5);
        cfg.dim = 2;
        cfg.potential = Potential::constant(2, 0.0);
        cfg.costs = crate::model::CostSpec::distance_to(vec![0.0, 0.0]);
        cfg.initial = InitialMeasure::Gaussian {
            mean: vec![0.0, 0.0],
            std: vec![0.5, 0.5],
        };
        let ax = Axis::new(-6.0, 6.0, 121).unwrap();
        let grid = Grid::new_2d(ax, ax);
        let flow = solve_fpk(&cfg, &ZeroControl { dim: 2 }, &grid, 50, FpkOptions::default()).unwrap();
        let var = 0.25 + 1.0;
        let exact = GridField::from_fn(grid, |x| {
            (-0.5 * (x[0] * x[0] + x[1] * x[1]) / var).exp() / (2.0 * std::f64::consts::PI * var)
        });
        assert!(l1_distance(&flow.mu[50], &exact) < 5e-3);
    }
}
