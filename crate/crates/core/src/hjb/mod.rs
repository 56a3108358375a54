//! Backward non-local equation for the co-state `u`:
//!
//! `0 = du + sigma^2/2 Lap u - |grad u|^2 / 2 - (V - <mu, V>) u + V <mu, u> + f~`,
//! `u_T = g`.
//!
//! The quadratic part is handled by the Hopf-Cole substitution
//! `w = exp(-u / sigma^2)`, which turns it into the backward heat equation,
//! and the zero-order part (with `<mu_t, V>` and the frozen scalar
//! `s(t) = <mu_t, u_t>`) is integrated exactly in `u`. The non-local scalar
//! is then found by damped Picard iteration.

mod adjoint;
pub mod oracle;

pub use adjoint::{solve_discrete_adjoint, DiscreteAdjoint};

use crate::error::{Error, Result};
use crate::fpk::GibbsFlow;
use crate::grid::{derivative_along, Grid, GridField, Tridiagonal};
use crate::model::ProblemConfig;

/// Floor applied to the Hopf-Cole variable before taking logarithms.
pub const W_FLOOR: f64 = 1e-150;

#[derive(Debug, Clone, Copy)]
pub struct HjbOptions {
    /// Relaxation factor of the Picard update on `s(t)`.
    pub damping: f64,
    /// Stop when `sup_t |s_new - s_old|` falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Viscosity in `a` added to the Hopf-Cole variable on `(x, a)` grids.
    pub a_viscosity: f64,
    /// Number of steps next to the terminal time taken as implicit Euler half steps.
    pub rannacher_steps: usize,
}

impl Default for HjbOptions {
    fn default() -> Self {
        HjbOptions {
            damping: 0.5,
            tolerance: 1e-8,
            max_iter: 200,
            a_viscosity: 0.0,
            rannacher_steps: 2,
        }
    }
}

/// Co-state on the same space-time mesh as a [`GibbsFlow`].
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: Grid,
    pub extended: bool,
    pub dt: f64,
    pub times: Vec<f64>,
    pub u: Vec<GridField>,
    /// The scalar `s(t_n)` used in the last backward sweep.
    pub nonlocal: Vec<f64>,
    /// Picard residuals `sup_t |s_new - s_old|`, one per iteration.
    pub residuals: Vec<f64>,
    /// Number of nodes where the Hopf-Cole floor was active.
    pub floor_hits: usize,
}

impl ValueField {
    pub fn steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    /// `w = exp(-u)` at time index `n`.
    pub fn w(&self, n: usize) -> GridField {
        GridField {
            grid: self.grid,
            values: self.u[n].values.iter().map(|u| (-u).exp()).collect(),
        }
    }

    /// Spatial gradient of `u_n` along `x` axes (one vector per state axis).
    pub fn gradient(&self, n: usize) -> Vec<Vec<f64>> {
        let sdim = if self.extended { 1 } else { self.grid.dim() };
        (0..sdim)
            .map(|k| {
                let mut out = vec![0.0; self.grid.len()];
                derivative_along(&self.grid, &self.u[n].values, k, &mut out);
                out
            })
            .collect()
    }

    /// Largest spread `max_a u - min_a u` over `(t, x)` on an `(x, a)` grid.
    pub fn a_range(&self) -> f64 {
        if !self.extended {
            return 0.0;
        }
        let na = self.grid.axis(1).points;
        let mut worst = 0.0f64;
        for u in &self.u {
            for row in u.values.chunks(na) {
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(hi - lo);
            }
        }
        worst
    }
}

/// Neumann Crank-Nicolson (or implicit Euler) along one axis for `w`.
struct NeumannDiffusion {
    axis: usize,
    lambda: f64,
    band: Tridiagonal,
}

impl NeumannDiffusion {
    /// Step for `dw/dtau = kappa d^2w/dx^2`.
    fn new(grid: &Grid, axis: usize, kappa: f64, dt: f64) -> Self {
        let h = grid.spacing(axis);
        let n = grid.axis(axis).points;
        let l = 0.5 * kappa * dt / (h * h);
        let mut lower = vec![-l; n];
        let mut upper = vec![-l; n];
        upper[0] = -2.0 * l;
        lower[n - 1] = -2.0 * l;
        NeumannDiffusion {
            axis,
            lambda: l,
            band: Tridiagonal::new(lower, vec![1.0 + 2.0 * l; n], upper),
        }
    }

    fn apply(&self, grid: &Grid, v: &mut [f64], rannacher: bool, scratch: &mut Vec<f64>) {
        let n = grid.axis(self.axis).points;
        let (stride, lines) = if self.axis == 0 {
            (grid.inner_len(), grid.inner_len())
        } else {
            (1, grid.axis(0).points)
        };
        scratch.resize(n, 0.0);
        let l = self.lambda;
        for line in 0..lines {
            let base = if self.axis == 0 { line } else { line * n };
            let at = |i: usize| base + i * stride;
            if rannacher {
                for i in 0..n {
                    scratch[i] = v[at(i)];
                }
                self.band.solve_strided(scratch, 0, 1);
                self.band.solve_strided(scratch, 0, 1);
            } else {
                scratch[0] = v[at(0)] + 2.0 * l * (v[at(1)] - v[at(0)]);
                for i in 1..n - 1 {
                    scratch[i] = v[at(i)] + l * (v[at(i - 1)] - 2.0 * v[at(i)] + v[at(i + 1)]);
                }
                scratch[n - 1] = v[at(n - 1)] + 2.0 * l * (v[at(n - 2)] - v[at(n - 1)]);
                self.band.solve_strided(scratch, 0, 1);
            }
            for i in 0..n {
                v[at(i)] = scratch[i];
            }
        }
    }
}

/// `(1 - exp(-k h)) / k`, continuous at `k = 0`.
fn phi1(k: f64, h: f64) -> f64 {
    let kh = k * h;
    if kh.abs() < 1e-12 {
        h
    } else {
        -(-kh).exp_m1() / k
    }
}

struct BackwardSweep<'a> {
    config: &'a ProblemConfig,
    flow: &'a GibbsFlow,
    opts: HjbOptions,
    potential: Vec<f64>,
    state_cost: Vec<f64>,
    terminal: Vec<f64>,
    potential_mean: Vec<f64>,
    x_diffusion: Vec<NeumannDiffusion>,
    a_diffusion: Option<NeumannDiffusion>,
}

impl<'a> BackwardSweep<'a> {
    fn new(flow: &'a GibbsFlow, config: &'a ProblemConfig, opts: HjbOptions) -> Result<Self> {
        config.validate()?;
        let grid = flow.grid;
        let sdim = if flow.extended { 1 } else { grid.dim() };
        if sdim != config.dim {
            return Err(Error::Contract("flow grid and problem dimension differ".into()));
        }
        for (n, mu) in flow.mu.iter().enumerate() {
            let m = mu.integral();
            if (m - 1.0).abs() > 1e-6 {
                return Err(Error::Contract(format!(
                    "flow density at step {n} has mass {m}, expected 1"
                )));
            }
        }
        if flow.extended && opts.a_viscosity < 0.0 {
            return Err(Error::Config("a-viscosity must be non-negative".into()));
        }
        let mut p = [0.0; 2];
        let mut potential = Vec::with_capacity(grid.len());
        let mut state_cost = Vec::with_capacity(grid.len());
        let mut terminal = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            grid.point(i, &mut p);
            let x = &p[..sdim];
            potential.push(config.potential.value(x));
            state_cost.push(config.costs.state.value(x));
            terminal.push(config.costs.terminal.value(x));
        }
        let potential_mean = (0..flow.mu.len()).map(|n| flow.bracket(n, &potential)).collect();
        let s2 = config.sigma * config.sigma;
        let x_diffusion = (0..sdim)
            .map(|k| NeumannDiffusion::new(&grid, k, 0.5 * s2, flow.dt))
            .collect();
        let a_diffusion = (flow.extended && opts.a_viscosity > 0.0)
            .then(|| NeumannDiffusion::new(&grid, 1, opts.a_viscosity, flow.dt));
        if flow.extended {
            let vmax = potential.iter().cloned().fold(0.0, f64::max);
            let c = vmax * flow.dt / grid.spacing(1);
            if c > 1.0 {
                return Err(Error::Cfl {
                    courant: c,
                    max_dt: grid.spacing(1) / vmax,
                });
            }
        }
        Ok(BackwardSweep {
            config,
            flow,
            opts,
            potential,
            state_cost,
            terminal,
            potential_mean,
            x_diffusion,
            a_diffusion,
        })
    }

    fn react(&self, u: &mut [f64], m: f64, s: f64, h: f64) {
        for i in 0..u.len() {
            let k = self.potential[i] - m;
            let src = self.potential[i] * s + self.state_cost[i];
            u[i] = u[i] * (-k * h).exp() + src * phi1(k, h);
        }
    }

    /// Backward upwind transport `du/dtau = V du/da`, zero gradient at the top of `a`.
    fn transport_a(&self, u: &mut [f64]) {
        let grid = &self.flow.grid;
        let na = grid.axis(1).points;
        let c = self.flow.dt / grid.spacing(1);
        for row in 0..grid.axis(0).points {
            let base = row * na;
            for j in 0..na - 1 {
                let i = base + j;
                u[i] += c * self.potential[i] * (u[i + 1] - u[i]);
            }
        }
    }

    /// Backward heat step on `w = exp(-(u - min u) / sigma^2)`; returns floor hits.
    fn hopf_cole(&self, u: &mut [f64], rannacher: bool, time: f64) -> Result<usize> {
        let grid = &self.flow.grid;
        let s2 = self.config.sigma * self.config.sigma;
        let shift = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut w: Vec<f64> = u.iter().map(|v| (-(v - shift) / s2).exp()).collect();
        let mut scratch = Vec::new();
        for d in &self.x_diffusion {
            d.apply(grid, &mut w, rannacher, &mut scratch);
        }
        if let Some(d) = &self.a_diffusion {
            d.apply(grid, &mut w, rannacher, &mut scratch);
        }
        let mut hits = 0;
        for (ui, wi) in u.iter_mut().zip(&w) {
            if !(*wi > W_FLOOR) {
                hits += 1;
            }
            *ui = shift - s2 * wi.max(W_FLOOR).ln();
        }
        if hits > 0 {
            let n = (time / self.flow.dt).round() as usize;
            let mu = &self.flow.mu[n.min(self.flow.steps())];
            let supported = w
                .iter()
                .zip(&mu.values)
                .filter(|(w, m)| !(**w > W_FLOOR) && **m > 1e-10)
                .count();
            if supported > 0 {
                return Err(Error::ValueUnderflow {
                    time,
                    floor: W_FLOOR,
                    count: supported,
                });
            }
        }
        Ok(hits)
    }

    fn run(&self, nonlocal: &[f64]) -> Result<ValueField> {
        let flow = self.flow;
        let k = flow.steps();
        if nonlocal.len() != k + 1 {
            return Err(Error::Contract(format!(
                "frozen non-local sequence has {} entries for {} steps",
                nonlocal.len(),
                k
            )));
        }
        let mut u = vec![GridField::zeros(flow.grid); k + 1];
        u[k].values.clone_from(&self.terminal);
        let mut floor_hits = 0;
        let dt = flow.dt;
        for n in (0..k).rev() {
            let mut v = u[n + 1].values.clone();
            let (m, s) = (self.potential_mean[n], nonlocal[n]);
            self.react(&mut v, m, s, 0.5 * dt);
            if flow.extended {
                self.transport_a(&mut v);
            }
            let rannacher = k - 1 - n < self.opts.rannacher_steps;
            floor_hits += self.hopf_cole(&mut v, rannacher, flow.times[n])?;
            self.react(&mut v, m, s, 0.5 * dt);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Contract(format!("non-finite co-state at t={}", flow.times[n])));
            }
            u[n].values = v;
        }
        Ok(ValueField {
            grid: flow.grid,
            extended: flow.extended,
            dt,
            times: flow.times.clone(),
            u,
            nonlocal: nonlocal.to_vec(),
            residuals: Vec::new(),
            floor_hits,
        })
    }
}

/// One backward sweep with the non-local scalar `s(t_n)` frozen.
pub fn solve_linear_hopfcole(
    flow: &GibbsFlow,
    frozen_nonlocal: &[f64],
    config: &ProblemConfig,
    opts: HjbOptions,
) -> Result<ValueField> {
    BackwardSweep::new(flow, config, opts)?.run(frozen_nonlocal)
}

/// Fixed point in `s(t) = <mu_t, u_t>`, optionally warm-started.
pub fn solve_hjb_nonlocal_from(
    flow: &GibbsFlow,
    config: &ProblemConfig,
    opts: HjbOptions,
    start: Option<&[f64]>,
) -> Result<ValueField> {
    let sweep = BackwardSweep::new(flow, config, opts)?;
    let k = flow.steps();
    let mut s = match start {
        Some(s0) if s0.len() == k + 1 => s0.to_vec(),
        _ => vec![flow.bracket(k, &sweep.terminal); k + 1],
    };
    let rho = opts.damping;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("damping must lie in (0, 1], got {rho}")));
    }
    let mut residuals = Vec::new();
    for _ in 0..opts.max_iter.max(1) {
        let mut vf = sweep.run(&s)?;
        if config.potential.is_zero() {
            // the scalar only enters through V
            residuals.push(0.0);
            vf.residuals = residuals;
            return Ok(vf);
        }
        let mut res = 0.0f64;
        for n in 0..=k {
            let target = flow.bracket(n, &vf.u[n].values);
            let ds = rho * (target - s[n]);
            res = res.max(ds.abs());
            s[n] += ds;
        }
        residuals.push(res);
        if res < opts.tolerance {
            vf.residuals = residuals;
            return Ok(vf);
        }
    }
    let last = *residuals.last().unwrap_or(&f64::NAN);
    Err(Error::NonConvergence {
        what: "non-local co-state iteration",
        iterations: residuals.len(),
        last,
        residuals,
    })
}

pub fn solve_hjb_nonlocal(flow: &GibbsFlow, config: &ProblemConfig, opts: HjbOptions) -> Result<ValueField> {
    solve_hjb_nonlocal_from(flow, config, opts, None)
}

/// Co-state on `(x, a)` for an extended flow.
pub fn solve_hjb_extended(flow_xa: &GibbsFlow, config: &ProblemConfig, opts: HjbOptions) -> Result<ValueField> {
    if !flow_xa.extended || config.dim != 1 {
        return Err(Error::Contract(
            "solve_hjb_extended needs a d = 1 flow on (x, a)".into(),
        ));
    }
    solve_hjb_nonlocal(flow_xa, config, opts)
}

/// Check of the two printed a-priori bounds at every stored time.
#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub times: Vec<f64>,
    /// `|<mu_t, u_t>|`.
    pub bracket: Vec<f64>,
    pub weak_bound: Vec<f64>,
    /// `sup |u_t|`.
    pub sup_norm: Vec<f64>,
    pub strong_bound: Vec<f64>,
    /// Control energy `int int |phi|^2 dmu dt` entering both bounds.
    pub k_phi: f64,
    /// The bounds are derived for `0 <= V <= 1`.
    pub applicable: bool,
}

impl AprioriReport {
    pub fn weak_margin(&self) -> Vec<f64> {
        self.weak_bound.iter().zip(&self.bracket).map(|(b, l)| b - l).collect()
    }

    pub fn strong_margin(&self) -> Vec<f64> {
        self.strong_bound
            .iter()
            .zip(&self.sup_norm)
            .map(|(b, l)| b - l)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.weak_margin().iter().all(|m| *m >= 0.0) && self.strong_margin().iter().all(|m| *m >= 0.0)
    }
}

/// Discrete `sum_n dt <|grad u_n|^2, mu_n>`.
pub fn control_energy(vf: &ValueField, flow: &GibbsFlow) -> f64 {
    let mut e = 0.0;
    for n in 0..vf.steps() {
        let g = vf.gradient(n);
        let sq: Vec<f64> = (0..vf.grid.len())
            .map(|i| g.iter().map(|c| c[i] * c[i]).sum())
            .collect();
        e += vf.dt * flow.bracket(n, &sq);
    }
    e
}

/// A-priori bounds with `K_phi` estimated from `vf` itself.
pub fn apriori_bounds(vf: &ValueField, flow: &GibbsFlow, config: &ProblemConfig) -> AprioriReport {
    apriori_bounds_with_energy(vf, flow, config, control_energy(vf, flow))
}

/// A-priori bounds for a co-state generated by a control of energy `k_phi`:
///
/// `|<mu_t,u_t>| <= e^{2(T-t)} (|f~| + |g|) + e^T k_phi / 4 (e^{2(T-t)} + 1)` and
/// `|u_t| <= e^t / 2 (e^{2(T-t)} - 1) |f~| + e^{2T} / 2 k_phi + e^T |g|`,
/// with sup norms over the grid.
pub fn apriori_bounds_with_energy(
    vf: &ValueField,
    flow: &GibbsFlow,
    config: &ProblemConfig,
    k_phi: f64,
) -> AprioriReport {
    let grid = vf.grid;
    let sdim = if vf.extended { 1 } else { grid.dim() };
    let mut p = [0.0; 2];
    let (mut g_sup, mut f_sup) = (0.0f64, 0.0f64);
    for i in 0..grid.len() {
        grid.point(i, &mut p);
        g_sup = g_sup.max(config.costs.terminal.value(&p[..sdim]).abs());
        f_sup = f_sup.max(config.costs.state.value(&p[..sdim]).abs());
    }
    let t_end = config.horizon;
    let mut report = AprioriReport {
        times: vf.times.clone(),
        bracket: Vec::new(),
        weak_bound: Vec::new(),
        sup_norm: Vec::new(),
        strong_bound: Vec::new(),
        k_phi,
        applicable: config.potential.sup() <= 1.0,
    };
    for (n, &t) in vf.times.iter().enumerate() {
        let e2 = (2.0 * (t_end - t)).exp();
        report.bracket.push(flow.bracket(n, &vf.u[n].values).abs());
        report
            .weak_bound
            .push(e2 * (f_sup + g_sup) + t_end.exp() * k_phi / 4.0 * (e2 + 1.0));
        report.sup_norm.push(vf.u[n].sup_norm());
        report
            .strong_bound
            .push(0.5 * t.exp() * (e2 - 1.0) * f_sup + 0.5 * (2.0 * t_end).exp() * k_phi + t_end.exp() * g_sup);
    }
    report
}
