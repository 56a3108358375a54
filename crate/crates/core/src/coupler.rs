//! Forward-backward coupling of the Gibbs flow and the co-state, control
//! extraction, first-order optimality diagnostics and the short-time
//! certificate constants.

use crate::control::{sample_on_grid, Control, GridControl};
use crate::error::{Error, Result};
use crate::fpk::{extended_grid, solve_fpk, solve_fpk_extended, FpkOptions, GibbsFlow};
use crate::grid::{l1_distance, wasserstein1_1d, Grid, GridField};
use crate::hjb::{solve_hjb_nonlocal_from, HjbOptions, ValueField};
use crate::model::{eval_costs, ActionSet, ProblemConfig, StateCost};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Feedback on `(t, x)`.
    Markovian,
    /// Feedback on `(t, x, a)` with `a` the accumulated potential (d = 1).
    Extended,
}

#[derive(Debug, Clone, Copy)]
pub struct FbOptions {
    /// Relaxation of the control update.
    pub relaxation: f64,
    /// Tolerance on `sup_t W1(mu^k, mu^{k+1})` (L1 on 2-D and `(x, a)` grids).
    pub tol_measure: f64,
    /// Tolerance on `sup |u^k - u^{k+1}|`.
    pub tol_value: f64,
    pub max_outer: usize,
    /// Smallest relaxation reached by halving on a plateau.
    pub min_relaxation: f64,
    /// Iterations without progress before the relaxation is halved.
    pub plateau: usize,
    /// Grid step along `a`; defaults to the `x` spacing.
    pub a_step: Option<f64>,
    pub hjb: HjbOptions,
    pub fpk: FpkOptions,
}

impl Default for FbOptions {
    fn default() -> Self {
        FbOptions {
            relaxation: 0.5,
            tol_measure: 1e-6,
            tol_value: 1e-6,
            max_outer: 100,
            min_relaxation: 1.0 / 16.0,
            plateau: 10,
            a_step: None,
            hjb: HjbOptions::default(),
            fpk: FpkOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterResidual {
    pub iteration: usize,
    /// W1 (1-D) or L1 distance between consecutive flows, sup over time.
    pub measure: f64,
    pub value: f64,
    pub relaxation: f64,
}

#[derive(Debug, Clone)]
pub struct FbSolution {
    pub mode: Mode,
    pub flow: GibbsFlow,
    pub value: ValueField,
    /// `Pi_A(-grad u)` at every stored time of `value`.
    pub control: GridControl,
    pub residual_history: Vec<OuterResidual>,
    pub converged: bool,
}

impl FbSolution {
    pub fn cost(&self, config: &ProblemConfig) -> f64 {
        cost_from_flow(&self.flow, &self.control, config)
    }
}

/// `Pi_A(-grad u)` on the grid of `vf`, one field per state component and time.
pub fn extract_control(vf: &ValueField, actions: &ActionSet) -> GridControl {
    let fields = (0..=vf.steps())
        .map(|n| {
            vf.gradient(n)
                .into_iter()
                .enumerate()
                .map(|(k, g)| GridField {
                    grid: vf.grid,
                    values: g.iter().map(|v| actions.project_component(k, -v)).collect(),
                })
                .collect()
        })
        .collect();
    GridControl::new(vf.grid, vf.dt, vf.extended, fields)
}

fn relax(old: &GridControl, new: &GridControl, rho: f64) -> GridControl {
    let fields = old
        .fields
        .iter()
        .zip(&new.fields)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(fa, fb)| GridField {
                    grid: fa.grid,
                    values: fa
                        .values
                        .iter()
                        .zip(&fb.values)
                        .map(|(x, y)| x + rho * (y - x))
                        .collect(),
                })
                .collect()
        })
        .collect();
    GridControl::new(old.grid, old.dt, old.extended, fields)
}

fn flow_distance(a: &GibbsFlow, b: &GibbsFlow) -> Result<f64> {
    let mut worst = 0.0f64;
    for (ma, mb) in a.mu.iter().zip(&b.mu) {
        let d = if !a.extended && a.grid.dim() == 1 {
            wasserstein1_1d(ma, mb)?
        } else {
            l1_distance(ma, mb)
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

fn value_distance(a: &ValueField, b: &ValueField) -> f64 {
    a.u.iter()
        .zip(&b.u)
        .flat_map(|(x, y)| x.values.iter().zip(&y.values).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Damped Picard iteration on the forward-backward system, starting from the
/// zero control. `grid` is the state grid; in extended mode it is the `x`
/// axis of the `(x, a)` grid.
pub fn fb_solve(config: &ProblemConfig, grid: &Grid, steps: usize, mode: Mode, opts: FbOptions) -> Result<FbSolution> {
    config.validate()?;
    if !(opts.relaxation > 0.0 && opts.relaxation <= 1.0) {
        return Err(Error::Config(format!(
            "relaxation must lie in (0, 1], got {}",
            opts.relaxation
        )));
    }
    let work_grid = match mode {
        Mode::Markovian => *grid,
        Mode::Extended => {
            if config.dim != 1 || grid.dim() != 1 {
                return Err(Error::Config("the extended class requires d = 1".into()));
            }
            let step = opts.a_step.unwrap_or(grid.spacing(0));
            extended_grid(config, *grid.axis(0), step)?
        }
    };
    let extended = mode == Mode::Extended;
    let dt = config.horizon / steps.max(1) as f64;
    let zero_fields = vec![vec![GridField::zeros(work_grid); config.dim]; steps + 1];
    let mut control = GridControl::new(work_grid, dt, extended, zero_fields);
    let forward = |c: &GridControl| -> Result<GibbsFlow> {
        if extended {
            solve_fpk_extended(config, c, &work_grid, steps, opts.fpk)
        } else {
            solve_fpk(config, c, &work_grid, steps, opts.fpk)
        }
    };

    let mut rho = opts.relaxation;
    let mut last_change = 0usize;
    let mut history: Vec<OuterResidual> = Vec::new();
    let mut prev: Option<(GibbsFlow, ValueField)> = None;
    let mut combined: Vec<f64> = Vec::new();
    for it in 1..=opts.max_outer {
        let flow = forward(&control)?;
        let start = prev.as_ref().map(|(_, v)| v.nonlocal.clone());
        let value = solve_hjb_nonlocal_from(&flow, config, opts.hjb, start.as_deref())?;
        let (rm, ru) = match &prev {
            Some((pf, pv)) => (flow_distance(pf, &flow)?, value_distance(pv, &value)),
            None => (f64::INFINITY, f64::INFINITY),
        };
        history.push(OuterResidual {
            iteration: it,
            measure: rm,
            value: ru,
            relaxation: rho,
        });
        combined.push((rm / opts.tol_measure).max(ru / opts.tol_value));
        let target = extract_control(&value, &config.costs.actions);
        if rm < opts.tol_measure && ru < opts.tol_value {
            let flow = forward(&target)?;
            return Ok(FbSolution {
                mode,
                flow,
                value,
                control: target,
                residual_history: history,
                converged: true,
            });
        }
        let p = opts.plateau;
        if it > last_change + p && combined.len() > p && rho > opts.min_relaxation {
            let now = combined[combined.len() - 1];
            let before = combined[combined.len() - 1 - p];
            if before.is_finite() && now >= 0.95 * before {
                rho = (0.5 * rho).max(opts.min_relaxation);
                last_change = it;
            }
        }
        control = relax(&control, &target, rho);
        prev = Some((flow, value));
    }
    let last = combined.last().copied().unwrap_or(f64::NAN);
    Err(Error::NonConvergence {
        what: "forward-backward iteration",
        iterations: history.len(),
        last,
        residuals: combined,
    })
}

/// `sum_n dt <beta_n . (grad u_n + phi_n), mu_n>` over the left time nodes.
pub fn gateaux_derivative(sol: &FbSolution, beta: &dyn Control) -> f64 {
    let grid = sol.flow.grid;
    let mut total = 0.0;
    let mut integrand = vec![0.0; grid.len()];
    for n in 0..sol.flow.steps() {
        let t = sol.flow.times[n];
        let b = sample_on_grid(beta, &grid, t, sol.flow.extended);
        let phi = sample_on_grid(&sol.control, &grid, t, sol.flow.extended);
        let g = sol.value.gradient(n);
        for i in 0..grid.len() {
            integrand[i] = (0..g.len()).map(|k| b[k][i] * (g[k][i] + phi[k][i])).sum();
        }
        total += sol.flow.dt * sol.flow.bracket(n, &integrand);
    }
    total
}

/// `sum_{n<K} dt <f(., phi_n), mu_n> + <g, mu_K>` for a flow driven by `control`.
pub fn cost_from_flow(flow: &GibbsFlow, control: &dyn Control, config: &ProblemConfig) -> f64 {
    let grid = flow.grid;
    let sdim = config.dim;
    let mut p = [0.0; 2];
    let mut alpha = [0.0; 2];
    let mut running = vec![0.0; grid.len()];
    let mut total = 0.0;
    for n in 0..flow.steps() {
        let a = sample_on_grid(control, &grid, flow.times[n], flow.extended);
        for (i, r) in running.iter_mut().enumerate() {
            grid.point(i, &mut p);
            for k in 0..sdim {
                alpha[k] = a[k][i];
            }
            *r = eval_costs(config, &p[..sdim], &alpha[..sdim]).0;
        }
        total += flow.dt * flow.bracket(n, &running);
    }
    let terminal: Vec<f64> = (0..grid.len())
        .map(|i| {
            grid.point(i, &mut p);
            config.costs.terminal.value(&p[..sdim])
        })
        .collect();
    total + flow.bracket(flow.steps(), &terminal)
}

/// Geometric-mean ratio of consecutive value residuals over the recorded tail.
pub fn contraction_rate(history: &[OuterResidual]) -> Option<f64> {
    let r: Vec<f64> = history
        .iter()
        .map(|h| h.value)
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    if r.len() < 3 {
        return None;
    }
    let tail = &r[r.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    let k = (tail.len() - 1) as f64;
    Some((tail[tail.len() - 1] / tail[0]).powf(1.0 / k))
}

/// Bounds on the data entering the short-time existence constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortTimeConstants {
    pub horizon: f64,
    pub c_g: f64,
    pub c_f: f64,
    pub c_grad_f: f64,
    pub c_hess_f: f64,
    pub c_grad_v: f64,
    pub c_hess_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortTimeCertificate {
    pub constants: ShortTimeConstants,
    pub gamma2: f64,
    /// `C_3(Gamma_2)`.
    pub c3: f64,
    /// `Gamma_3(Gamma_2) = Gamma_2 + C_3(Gamma_2)`.
    pub gamma3: f64,
    pub k: f64,
    pub satisfied: bool,
    pub contraction_rate: Option<f64>,
}

pub fn gamma2(c_g: f64) -> f64 {
    3.0 * (c_g + 1.0).powi(2) * (6.0 * c_g).exp()
}

pub fn c3(c: &ShortTimeConstants, c2: f64) -> f64 {
    let a = 2.0 * c2 + c.c_f;
    let b = 2.0 * c.c_grad_v * c2 + c2 + c.c_grad_f;
    let d = 2.0 * c.c_hess_v * c2 + 2.0 * c.c_grad_v * c2 + c2 + c.c_hess_f;
    a.max(b).max(d)
}

pub fn certificate_from_constants(c: ShortTimeConstants) -> ShortTimeCertificate {
    let g2 = gamma2(c.c_g);
    let c3v = c3(&c, g2);
    let tc3 = if c.horizon == 0.0 { 0.0 } else { c.horizon * c3v };
    let e = tc3 + c.c_g;
    let k = (3.0 * e).exp() * e;
    ShortTimeCertificate {
        constants: c,
        gamma2: g2,
        c3: c3v,
        gamma3: g2 + c3v,
        k,
        satisfied: k <= g2,
        contraction_rate: None,
    }
}

/// Constants for `config`, with `sup |g|` taken over the nodes of `grid`.
pub fn shorttime_constants(config: &ProblemConfig, grid: &Grid) -> ShortTimeConstants {
    let sdim = config.dim;
    let mut p = [0.0; 2];
    let mut c_g = 0.0f64;
    for i in 0..grid.len() {
        grid.point(i, &mut p);
        c_g = c_g.max(config.costs.terminal.value(&p[..sdim]).abs());
    }
    let (c_f, c_grad_f, c_hess_f) = match &config.costs.state {
        StateCost::Zero => (0.0, 0.0, 0.0),
        StateCost::Constant(c) => (c.abs(), 0.0, 0.0),
        StateCost::Bump { height, width, .. } => {
            let h = height.abs();
            (h, h * (-0.5f64).exp() / width, h / (width * width))
        }
    };
    ShortTimeConstants {
        horizon: config.horizon,
        c_g,
        c_f,
        c_grad_f,
        c_hess_f,
        c_grad_v: config.potential.lipschitz(),
        c_hess_v: config.potential.hessian_bound(),
    }
}

pub fn shorttime_certificate(config: &ProblemConfig, grid: &Grid) -> ShortTimeCertificate {
    certificate_from_constants(shorttime_constants(config, grid))
}

impl ShortTimeCertificate {
    /// Attaches the measured outer contraction rate of a solve.
    pub fn with_measured_rate(mut self, sol: &FbSolution) -> Self {
        self.contraction_rate = contraction_rate(&sol.residual_history);
        self
    }
}
