//! Exact adjoint of the discrete forward scheme for a fixed control.
//!
//! For `mu_{n+1} = M_n mu_n / c_n` with `M_n = E D A(phi_n) E` and the
//! discrete cost `sum_n dt <f_n, mu_n> + <g, mu_K>`, the co-state
//!
//! `p_n = dt f_n + M_n^* ((p_{n+1} - s_{n+1}) / c_n) + s_{n+1} / c_n`,
//! `s_{n+1} = <mu_{n+1}, p_{n+1}>`, `p_K = g`
//!
//! is the discrete counterpart of the linear adjoint equation (the additive
//! constant fixes the same gauge). Adjoints are taken in the trapezoid inner
//! product. Differentiating through this recursion gives the derivative of the
//! discrete cost along any control perturbation.

use crate::control::{sample_on_grid, Control};
use crate::error::{Error, Result};
use crate::fpk::{FpkOptions, GibbsFlow, StepOperator};
use crate::grid::{Grid, GridField};
use crate::model::ProblemConfig;

#[derive(Debug, Clone)]
pub struct DiscreteAdjoint {
    pub grid: Grid,
    pub dt: f64,
    pub p: Vec<GridField>,
    /// `D E q_n`: the co-state paired with the output of the advection at step `n`.
    pre_advection: Vec<Vec<f64>>,
    drift: Vec<Vec<Vec<f64>>>,
    op: StepOperator,
}

/// Co-state of the discrete forward scheme driven by `control`.
pub fn solve_discrete_adjoint(
    config: &ProblemConfig,
    flow: &GibbsFlow,
    control: &dyn Control,
    opts: FpkOptions,
) -> Result<DiscreteAdjoint> {
    let grid = flow.grid;
    let op = StepOperator::new(config, &grid, flow.extended, flow.dt)?;
    let k = flow.steps();
    let sdim = config.dim;
    let mut p_node = [0.0; 2];
    let mut g = vec![0.0; grid.len()];
    let mut ft = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        grid.point(i, &mut p_node);
        g[i] = config.costs.terminal.value(&p_node[..sdim]);
        ft[i] = config.costs.state.value(&p_node[..sdim]);
    }
    let drift: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|n| sample_on_grid(control, &grid, flow.times[n], flow.extended))
        .collect();
    let w = &op.weights;
    let mut p = vec![GridField::zeros(grid); k + 1];
    let mut pre = vec![Vec::new(); k];
    p[k].values = g;
    for n in (0..k).rev() {
        let c = flow.mass_ratio[n];
        if !(c > 0.0) {
            return Err(Error::Contract("flow has a non-positive mass ratio".into()));
        }
        let s = flow.bracket(n + 1, &p[n + 1].values);
        let mut q: Vec<f64> = p[n + 1].values.iter().map(|v| (v - s) / c).collect();
        op.react_half(&mut q);
        op.diffuse(&mut q, n < opts.rannacher_steps);
        // weighted transpose of the advection
        let wq: Vec<f64> = q.iter().zip(w).map(|(a, b)| a * b).collect();
        let mut at = vec![0.0; grid.len()];
        op.advect_transpose(&wq, &drift[n], &mut at);
        for (a, b) in at.iter_mut().zip(w) {
            *a /= b;
        }
        op.react_half(&mut at);
        let pn: Vec<f64> = (0..grid.len())
            .map(|i| {
                let kin: f64 = drift[n].iter().map(|b| 0.5 * b[i] * b[i]).sum();
                flow.dt * (kin + ft[i]) + at[i] + s / c
            })
            .collect();
        p[n].values = pn;
        pre[n] = q;
    }
    Ok(DiscreteAdjoint {
        grid,
        dt: flow.dt,
        p,
        pre_advection: pre,
        drift,
        op,
    })
}

impl DiscreteAdjoint {
    /// Directional derivative of the discrete cost along the control
    /// perturbation `beta` (one-sided where the upwind direction flips).
    pub fn cost_derivative(&self, flow: &GibbsFlow, beta: &dyn Control) -> f64 {
        let grid = self.grid;
        let mut total = 0.0;
        let mut out = vec![0.0; grid.len()];
        for n in 0..self.drift.len() {
            let b = sample_on_grid(beta, &grid, flow.times[n], flow.extended);
            let direct: Vec<f64> = (0..grid.len())
                .map(|i| self.drift[n].iter().zip(&b).map(|(p, q)| p[i] * q[i]).sum())
                .collect();
            total += self.dt * flow.bracket(n, &direct);
            let mut nu = flow.mu[n].values.clone();
            self.op.react_half(&mut nu);
            self.op.advect_derivative(&nu, &self.drift[n], &b, &mut out);
            total += grid.inner(&self.pre_advection[n], &out);
        }
        total
    }
}
