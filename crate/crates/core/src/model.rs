//! Problem definition: the killing potential, costs, action set and initial law.

use crate::error::{Error, Result};

/// Closed target domain `D`. Only balls and axis-aligned boxes are supported
/// because the distance to them has a closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { center: Vec<f64>, half_widths: Vec<f64> },
}

impl Domain {
    /// Symmetric interval `[c - h, c + h]`.
    pub fn interval(center: f64, half_width: f64) -> Self {
        Domain::Box {
            center: vec![center],
            half_widths: vec![half_width],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { center, .. } | Domain::Box { center, .. } => center.len(),
        }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Domain::Ball { center, .. } | Domain::Box { center, .. } => center,
        }
    }

    /// Half extent of the bounding box along `axis`.
    pub fn half_width(&self, axis: usize) -> f64 {
        match self {
            Domain::Ball { radius, .. } => *radius,
            Domain::Box { half_widths, .. } => half_widths[axis],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance(x) <= 0.0
    }

    /// Euclidean distance from `x` to the domain, zero inside.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                (r2.sqrt() - radius).max(0.0)
            }
            Domain::Box { center, half_widths } => {
                let mut s = 0.0;
                for ((a, c), h) in x.iter().zip(center).zip(half_widths) {
                    let e = ((a - c).abs() - h).max(0.0);
                    s += e * e;
                }
                s.sqrt()
            }
        }
    }

    /// Gradient of the distance function (zero inside the domain).
    pub fn distance_gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.distance(x);
        out.iter_mut().for_each(|o| *o = 0.0);
        if d <= 0.0 {
            return;
        }
        match self {
            Domain::Ball { center, .. } => {
                let r: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                for k in 0..out.len() {
                    out[k] = (x[k] - center[k]) / r;
                }
            }
            Domain::Box { center, half_widths } => {
                for k in 0..out.len() {
                    let off = x[k] - center[k];
                    let e = (off.abs() - half_widths[k]).max(0.0);
                    out[k] = e * off.signum() / d;
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Domain::Ball { radius, center } => {
                if !(*radius >= 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config(format!("invalid ball radius {radius}")));
                }
            }
            Domain::Box { center, half_widths } => {
                if center.len() != half_widths.len() {
                    return Err(Error::Config("box center and half-widths differ in length".into()));
                }
                if half_widths.iter().any(|h| !(*h >= 0.0)) {
                    return Err(Error::Config("negative box half-width".into()));
                }
            }
        }
        Ok(())
    }
}

/// Profile of the ramp `chi` between the domain and the full-amplitude region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ramp {
    #[default]
    Linear,
    /// C1 smoothstep `3s^2 - 2s^3`; Lipschitz constant is 1.5 times the linear one.
    Smoothstep,
}

/// Soft killing potential `V(x) = shift + amplitude * chi(d(x, D) / epsilon)`.
///
/// `shift` is zero for the killing family; a constant offset is used to check
/// that self-normalized quantities ignore it.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub domain: Domain,
    pub epsilon: f64,
    pub amplitude: f64,
    pub shift: f64,
    pub ramp: Ramp,
}

impl Potential {
    pub fn new(domain: Domain, epsilon: f64, amplitude: f64) -> Result<Self> {
        let p = Potential {
            domain,
            epsilon,
            amplitude,
            shift: 0.0,
            ramp: Ramp::Linear,
        };
        p.validate()?;
        Ok(p)
    }

    /// Spatially constant potential `V = c` (no killing geometry).
    pub fn constant(dim: usize, c: f64) -> Self {
        Potential {
            domain: Domain::Box {
                center: vec![0.0; dim],
                half_widths: vec![0.0; dim],
            },
            epsilon: 1.0,
            amplitude: 0.0,
            shift: c,
            ramp: Ramp::Linear,
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Potential {
            amplitude,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "potential epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Config(format!(
                "potential amplitude must be finite and >= 0, got {}",
                self.amplitude
            )));
        }
        if !(self.shift >= 0.0) || !self.shift.is_finite() {
            return Err(Error::Config("potential shift must be finite and >= 0".into()));
        }
        self.domain.validate()
    }

    fn chi(&self, d: f64) -> f64 {
        let s = (d / self.epsilon).clamp(0.0, 1.0);
        match self.ramp {
            Ramp::Linear => s,
            Ramp::Smoothstep => s * s * (3.0 - 2.0 * s),
        }
    }

    fn chi_prime(&self, d: f64) -> f64 {
        if d <= 0.0 || d >= self.epsilon {
            return 0.0;
        }
        let s = d / self.epsilon;
        match self.ramp {
            Ramp::Linear => 1.0 / self.epsilon,
            Ramp::Smoothstep => 6.0 * s * (1.0 - s) / self.epsilon,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.shift + self.amplitude * self.chi(self.domain.distance(x))
    }

    /// Gradient of `V` (a.e.; the kinks of the linear ramp take the inner one-sided value).
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.domain.distance(x);
        let c = self.amplitude * self.chi_prime(d);
        if c == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        self.domain.distance_gradient(x, out);
        out.iter_mut().for_each(|o| *o *= c);
    }

    pub fn sup(&self) -> f64 {
        self.shift + self.amplitude
    }

    pub fn lipschitz(&self) -> f64 {
        let k = match self.ramp {
            Ramp::Linear => 1.0,
            Ramp::Smoothstep => 1.5,
        };
        k * self.amplitude / self.epsilon
    }

    /// Bound on the Hessian of `V`; infinite for the linear ramp.
    pub fn hessian_bound(&self) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        match self.ramp {
            Ramp::Linear => f64::INFINITY,
            Ramp::Smoothstep => 6.0 * self.amplitude / (self.epsilon * self.epsilon),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 && self.shift == 0.0
    }

    pub fn is_constant(&self) -> bool {
        self.amplitude == 0.0
    }
}

/// Bounded state running cost `f~(x)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StateCost {
    #[default]
    Zero,
    Constant(f64),
    /// `height * exp(-|x - center|^2 / (2 width^2))`.
    Bump {
        height: f64,
        center: Vec<f64>,
        width: f64,
    },
}

impl StateCost {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            StateCost::Zero => 0.0,
            StateCost::Constant(c) => *c,
            StateCost::Bump { height, center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                height * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            StateCost::Zero | StateCost::Constant(_) => out.iter_mut().for_each(|o| *o = 0.0),
            StateCost::Bump { center, width, .. } => {
                let v = self.value(x);
                for k in 0..out.len() {
                    out[k] = -v * (x[k] - center[k]) / (width * width);
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, StateCost::Zero) || matches!(self, StateCost::Constant(c) if *c == 0.0)
    }
}

/// Terminal cost `g(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCost {
    /// `|x - target|`.
    Distance {
        target: Vec<f64>,
    },
    Constant(f64),
    /// `slope . x`.
    Linear {
        slope: Vec<f64>,
    },
}

impl TerminalCost {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TerminalCost::Distance { target } => {
                x.iter().zip(target).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
            }
            TerminalCost::Constant(c) => *c,
            TerminalCost::Linear { slope } => x.iter().zip(slope).map(|(a, s)| a * s).sum(),
        }
    }

    /// Gradient (the distance kink at the target takes the zero subgradient).
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            TerminalCost::Distance { target } => {
                let r = self.value(x);
                for k in 0..out.len() {
                    out[k] = if r > 0.0 { (x[k] - target[k]) / r } else { 0.0 };
                }
            }
            TerminalCost::Constant(_) => out.iter_mut().for_each(|o| *o = 0.0),
            TerminalCost::Linear { slope } => out.copy_from_slice(slope),
        }
    }
}

/// Admissible action set `A`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ActionSet {
    #[default]
    Whole,
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl ActionSet {
    /// Symmetric box `[-bound, bound]^d`.
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        ActionSet::Box {
            lower: vec![-bound; dim],
            upper: vec![bound; dim],
        }
    }

    /// Euclidean projection onto `A` (componentwise clamp for boxes).
    pub fn project(&self, a: &mut [f64]) {
        if let ActionSet::Box { lower, upper } = self {
            for k in 0..a.len() {
                a[k] = a[k].clamp(lower[k], upper[k]);
            }
        }
    }

    pub fn project_component(&self, axis: usize, v: f64) -> f64 {
        match self {
            ActionSet::Whole => v,
            ActionSet::Box { lower, upper } => v.clamp(lower[axis], upper[axis]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub state: StateCost,
    pub terminal: TerminalCost,
    pub actions: ActionSet,
}

impl CostSpec {
    /// `f~ = 0`, `g = |x - target|`, unconstrained actions.
    pub fn distance_to(target: Vec<f64>) -> Self {
        CostSpec {
            state: StateCost::Zero,
            terminal: TerminalCost::Distance { target },
            actions: ActionSet::Whole,
        }
    }
}

/// Initial law of the state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMeasure {
    PointMass(Vec<f64>),
    /// Gaussian with diagonal covariance.
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
}

impl InitialMeasure {
    pub fn mean(&self) -> &[f64] {
        match self {
            InitialMeasure::PointMass(x) => x,
            InitialMeasure::Gaussian { mean, .. } => mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub dim: usize,
    pub horizon: f64,
    pub sigma: f64,
    pub initial: InitialMeasure,
    pub potential: Potential,
    pub costs: CostSpec,
}

impl ProblemConfig {
    /// One-dimensional benchmark: `T = 1`, `sigma = 1`, `D = [-1, 1]`,
    /// `epsilon = 0.1`, unit amplitude, `g = |x|`, started from `x0`.
    pub fn benchmark(x0: f64) -> Self {
        ProblemConfig {
            dim: 1,
            horizon: 1.0,
            sigma: 1.0,
            initial: InitialMeasure::PointMass(vec![x0]),
            potential: Potential {
                domain: Domain::interval(0.0, 1.0),
                epsilon: 0.1,
                amplitude: 1.0,
                shift: 0.0,
                ramp: Ramp::Linear,
            },
            costs: CostSpec::distance_to(vec![0.0]),
        }
    }

    pub fn with_potential(&self, potential: Potential) -> Self {
        ProblemConfig {
            potential,
            ..self.clone()
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        self.with_potential(self.potential.with_amplitude(amplitude))
    }

    pub fn with_initial(&self, initial: InitialMeasure) -> Self {
        ProblemConfig {
            initial,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {}", self.dim)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        self.potential.validate()?;
        if self.potential.domain.dim() != self.dim {
            return Err(Error::Config("domain dimension mismatch".into()));
        }
        match &self.initial {
            InitialMeasure::PointMass(x) => {
                if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("initial point has wrong dimension".into()));
                }
            }
            InitialMeasure::Gaussian { mean, std } => {
                if mean.len() != self.dim || std.len() != self.dim {
                    return Err(Error::Config("initial Gaussian has wrong dimension".into()));
                }
                if std.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Config(
                        "initial Gaussian covariance must be positive definite".into(),
                    ));
                }
            }
        }
        let dims_ok = match &self.costs.terminal {
            TerminalCost::Distance { target } => target.len() == self.dim,
            TerminalCost::Linear { slope } => slope.len() == self.dim,
            TerminalCost::Constant(_) => true,
        };
        if !dims_ok {
            return Err(Error::Config("terminal cost has wrong dimension".into()));
        }
        if let ActionSet::Box { lower, upper } = &self.costs.actions {
            if lower.len() != self.dim || upper.len() != self.dim || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                return Err(Error::Config("invalid action box".into()));
            }
        }
        Ok(())
    }
}

/// Validates the configuration and returns its killing potential.
pub fn build_soft_potential(config: &ProblemConfig) -> Result<Potential> {
    config.validate()?;
    Ok(config.potential.clone())
}

/// `(1/2 |alpha|^2 + f~(x), g(x))`.
pub fn eval_costs(config: &ProblemConfig, x: &[f64], alpha: &[f64]) -> (f64, f64) {
    let kinetic: f64 = 0.5 * alpha.iter().map(|a| a * a).sum::<f64>();
    (kinetic + config.costs.state.value(x), config.costs.terminal.value(x))
}
