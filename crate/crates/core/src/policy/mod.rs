//! Neural feedback controls for the two control classes, trained on the
//! self-normalized particle cost with exact pathwise gradients.

pub mod io;
pub mod mlp;
mod train;

pub use train::{loss_and_gradient, train, LossGradient, TrainOptions, TrainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{Control, GridControl};
use crate::error::{Error, Result};
use crate::fpk::GibbsFlow;
use crate::grid::{Grid, GridField};
use crate::model::ProblemConfig;
use mlp::{Shape, Tape};

pub const HIDDEN: [usize; 2] = [32, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyClass {
    /// Inputs `(t, x)`.
    Markovian,
    /// Inputs `(t, x, a)`.
    Extended,
}

/// Affine input map: `t / T`, `(x - c) / h` with `D`'s centre and half
/// widths, `a / a_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub t_scale: f64,
    pub x_center: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub a_scale: f64,
}

impl Normalization {
    pub fn from_config(config: &ProblemConfig) -> Self {
        let d = config.dim;
        let dom = &config.potential.domain;
        let a_max = config.horizon * config.potential.sup();
        Normalization {
            t_scale: 1.0 / config.horizon,
            x_center: dom.center().to_vec(),
            x_scale: (0..d).map(|k| 1.0 / dom.half_width(k)).collect(),
            a_scale: if a_max > 0.0 { 1.0 / a_max } else { 1.0 / config.horizon },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub class: PolicyClass,
    pub dim: usize,
    pub shape: Shape,
    pub params: Vec<f64>,
    pub norm: Normalization,
}

/// Shape of the network for `class` in dimension `dim`.
pub fn shape_for(class: PolicyClass, dim: usize) -> Shape {
    let extra = match class {
        PolicyClass::Markovian => 1,
        PolicyClass::Extended => 2,
    };
    Shape {
        inputs: dim + extra,
        hidden: HIDDEN,
        outputs: dim,
    }
}

/// Uniform `+-1/sqrt(fan_in)` initialization, deterministic per seed.
pub fn init_policy(class: PolicyClass, config: &ProblemConfig, seed: u64) -> Policy {
    let shape = shape_for(class, config.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..shape.param_count())
        .map(|i| {
            let b = 1.0 / (shape.fan_in(i) as f64).sqrt();
            rng.random_range(-b..b)
        })
        .collect();
    Policy {
        class,
        dim: config.dim,
        shape,
        params,
        norm: Normalization::from_config(config),
    }
}

/// Policy whose output is identically zero.
pub fn zero_policy(class: PolicyClass, config: &ProblemConfig) -> Policy {
    let mut p = init_policy(class, config, 0);
    p.params.iter_mut().for_each(|v| *v = 0.0);
    p
}

impl Policy {
    pub(crate) fn encode(&self, t: f64, x: &[f64], a: f64, input: &mut [f64]) {
        input[0] = t * self.norm.t_scale;
        for k in 0..self.dim {
            input[1 + k] = (x[k] - self.norm.x_center[k]) * self.norm.x_scale[k];
        }
        if self.class == PolicyClass::Extended {
            input[1 + self.dim] = a * self.norm.a_scale;
        }
    }

    pub(crate) fn forward(&self, t: f64, x: &[f64], a: f64, tape: &mut Tape, out: &mut [f64]) {
        let mut input = [0.0; 4];
        let ni = self.shape.inputs;
        self.encode(t, x, a, &mut input[..ni]);
        self.shape.forward(&self.params, &input[..ni], tape, out);
    }

    /// The same control as an extended policy that ignores `a`.
    pub fn lift(&self) -> Policy {
        if self.class == PolicyClass::Extended {
            return self.clone();
        }
        let shape = shape_for(PolicyClass::Extended, self.dim);
        let old = self.shape;
        let mut params = Vec::with_capacity(shape.param_count());
        let h1 = old.hidden[0];
        for j in 0..h1 {
            params.extend_from_slice(&self.params[j * old.inputs..(j + 1) * old.inputs]);
            params.push(0.0);
        }
        params.extend_from_slice(&self.params[h1 * old.inputs..]);
        Policy {
            class: PolicyClass::Extended,
            dim: self.dim,
            shape,
            params,
            norm: self.norm.clone(),
        }
    }
}

impl Control for Policy {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64], a: f64, out: &mut [f64]) {
        let mut tape = self.shape.new_tape();
        self.forward(t, x, a, &mut tape, out);
    }

    fn depends_on_a(&self) -> bool {
        self.class == PolicyClass::Extended
    }
}

/// Probe points for [`a_dependence_metric`].
#[derive(Debug, Clone)]
pub struct Probe {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub a_points: usize,
}

impl Probe {
    /// `nt` times on `[0, T)`, `nx` points across `D` widened by `epsilon`.
    pub fn uniform(config: &ProblemConfig, nt: usize, nx: usize, na: usize) -> Self {
        let c = config.potential.domain.center()[0];
        let r = config.potential.domain.half_width(0) + config.potential.epsilon;
        Probe {
            times: (0..nt).map(|i| config.horizon * i as f64 / nt as f64).collect(),
            xs: (0..nx)
                .map(|i| c - r + 2.0 * r * i as f64 / (nx.max(2) - 1) as f64)
                .collect(),
            a_points: na.max(2),
        }
    }
}

/// Largest output range over `a in [0, T sup V]` at a probe `(t, x)`,
/// relative to the output range over all probes.
pub fn a_dependence_metric(policy: &Policy, config: &ProblemConfig, probe: &Probe) -> Result<f64> {
    if policy.class != PolicyClass::Extended || policy.dim != 1 {
        return Err(Error::Contract("a-dependence needs a 1-D extended policy".into()));
    }
    let a_max = config.horizon * config.potential.sup();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst = 0.0f64;
    let mut out = [0.0];
    for &t in &probe.times {
        for &x in &probe.xs {
            let (mut l, mut h) = (f64::INFINITY, f64::NEG_INFINITY);
            for j in 0..probe.a_points {
                let a = a_max * j as f64 / (probe.a_points - 1) as f64;
                policy.eval(t, &[x], a, &mut out);
                l = l.min(out[0]);
                h = h.max(out[0]);
            }
            worst = worst.max(h - l);
            lo = lo.min(l);
            hi = hi.max(h);
        }
    }
    let overall = hi - lo;
    Ok(if overall > 0.0 { worst / overall } else { 0.0 })
}

/// `phi(t, x) = int psi(t, x, a) mu_t(x, da) / mu_t(x)` on the `x` nodes of
/// an `(x, a)` flow; zero where the `x`-marginal is below `1e-12`.
pub fn average_out_a(psi: &dyn Control, flow_xa: &GibbsFlow) -> Result<GridControl> {
    if !flow_xa.extended {
        return Err(Error::Contract("average_out_a needs a flow on (x, a)".into()));
    }
    let grid = flow_xa.grid;
    let (ax, aa) = (*grid.axis(0), *grid.axis(1));
    let xgrid = Grid::new_1d(ax);
    let wa: Vec<f64> = (0..aa.points)
        .map(|j| {
            if j == 0 || j + 1 == aa.points {
                0.5 * aa.spacing()
            } else {
                aa.spacing()
            }
        })
        .collect();
    let mut fields = Vec::with_capacity(flow_xa.steps() + 1);
    let mut out = [0.0];
    for (n, mu) in flow_xa.mu.iter().enumerate() {
        let t = flow_xa.times[n];
        let values = (0..ax.points)
            .map(|i| {
                let x = ax.coord(i);
                let (mut num, mut den) = (0.0, 0.0);
                for j in 0..aa.points {
                    let m = mu.values[grid.flat(i, j)] * wa[j];
                    if m != 0.0 {
                        psi.eval(t, &[x], aa.coord(j), &mut out);
                        num += m * out[0];
                    }
                    den += m;
                }
                if den < 1e-12 {
                    0.0
                } else {
                    num / den
                }
            })
            .collect();
        fields.push(vec![GridField { grid: xgrid, values }]);
    }
    Ok(GridControl::new(xgrid, flow_xa.dt, false, fields))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::FnControl;
    use crate::fpk::{extended_grid, solve_fpk_extended, FpkOptions};
    use crate::grid::Axis;
    use crate::model::Potential;

    fn cfg() -> ProblemConfig {
        ProblemConfig::benchmark(-1.0)
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_policy(PolicyClass::Markovian, &cfg(), 4);
        let b = init_policy(PolicyClass::Markovian, &cfg(), 4);
        let c = init_policy(PolicyClass::Markovian, &cfg(), 5);
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
        assert_eq!(a.params.len(), 2 * 32 + 32 + 32 * 32 + 32 + 32 + 1);
        let bound = 1.0 / 2f64.sqrt();
        assert!(a.params[..64].iter().all(|p| p.abs() <= bound));
    }

    #[test]
    fn zero_policy_outputs_zero() {
        let p = zero_policy(PolicyClass::Extended, &cfg());
        let mut o = [1.0];
        for x in [-3.0, 0.0, 2.5] {
            p.eval(0.4, &[x], 0.7, &mut o);
            assert_eq!(o[0], 0.0);
        }
    }

    #[test]
    fn lifted_policy_agrees_bitwise() {
        let p = init_policy(PolicyClass::Markovian, &cfg(), 1);
        let q = p.lift();
        let (mut a, mut b) = ([0.0], [0.0]);
        for i in 0..20 {
            let x = [i as f64 * 0.3 - 3.0];
            p.eval(0.1 * i as f64 / 2.0, &x, 0.0, &mut a);
            q.eval(0.1 * i as f64 / 2.0, &x, 0.37 * i as f64, &mut b);
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn a_metric_detects_dependence() {
        let config = cfg();
        let probe = Probe::uniform(&config, 5, 11, 9);
        let mut p = init_policy(PolicyClass::Extended, &config, 2);
        assert!(a_dependence_metric(&p, &config, &probe).unwrap() > 0.0);
        for idx in p.shape.input_weights(2) {
            p.params[idx] = 0.0;
        }
        assert_eq!(a_dependence_metric(&p, &config, &probe).unwrap(), 0.0);
    }

    #[test]
    fn averaging_an_a_free_control_is_exact() {
        let config = cfg();
        let g = extended_grid(&config, Axis::new(-3.0, 3.0, 121).unwrap(), 0.05).unwrap();
        let psi = FnControl::extended(1, |t, x: &[f64], _a, o: &mut [f64]| o[0] = -x[0] * (1.0 - t));
        let flow = solve_fpk_extended(&config, &psi, &g, 200, FpkOptions::default()).unwrap();
        let phi = average_out_a(&psi, &flow).unwrap();
        for n in [40, 120, 200] {
            let m = flow.x_marginal(n);
            for i in 0..121 {
                let x = g.axis(0).coord(i);
                let v = phi.fields[n][0].values[i];
                if m.values[i] > 1e-12 {
                    assert!((v + x * (1.0 - flow.times[n])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn averaging_a_itself_tracks_the_accumulated_potential() {
        let c = 0.8;
        let config = cfg().with_potential(Potential::constant(1, c));
        let g = extended_grid(&config, Axis::new(-4.0, 2.0, 121).unwrap(), 0.01).unwrap();
        let zero = FnControl::extended(1, |_t, _x: &[f64], _a, o: &mut [f64]| o[0] = 0.0);
        let flow = solve_fpk_extended(&config, &zero, &g, 400, FpkOptions::default()).unwrap();
        let psi = FnControl::extended(1, |_t, _x: &[f64], a, o: &mut [f64]| o[0] = a);
        let phi = average_out_a(&psi, &flow).unwrap();
        for n in [40, 80, 120] {
            let t = flow.times[n];
            let i = g.axis(0).points / 2;
            let v = phi.fields[n][0].values[i];
            assert!((v - c * t).abs() < 2.0 * g.spacing(1), "{v} {}", c * t);
        }
    }
}
