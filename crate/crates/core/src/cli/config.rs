//! Experiment configuration: a sectioned TOML file with `--set` overrides.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupler::{FbOptions, Mode};
use crate::error::{Error, Result};
use crate::hjb::HjbOptions;
use crate::model::{
    ActionSet, CostSpec, Domain, InitialMeasure, Potential, ProblemConfig, Ramp, StateCost, TerminalCost,
};
use crate::policy::TrainOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub dim: usize,
    pub horizon: f64,
    pub sigma: f64,
    pub x0: Vec<f64>,
    /// Standard deviations of a Gaussian start around `x0`; a point mass when empty.
    pub initial_std: Vec<f64>,
    /// `box` or `ball`.
    pub domain: String,
    pub domain_center: Vec<f64>,
    /// Half widths of the box, or the radius (first entry) of the ball.
    pub domain_half_width: Vec<f64>,
    pub epsilon: f64,
    pub amplitude: f64,
    pub potential_shift: f64,
    /// `linear` or `smoothstep`.
    pub ramp: String,
    /// `distance`, `constant` or `linear`.
    pub terminal: String,
    pub terminal_target: Vec<f64>,
    pub terminal_constant: f64,
    pub terminal_slope: Vec<f64>,
    /// `zero`, `constant` or `bump`.
    pub state_cost: String,
    pub state_height: f64,
    pub state_center: Vec<f64>,
    pub state_width: f64,
    /// Symmetric action box `[-b, b]^d`; unconstrained when zero.
    pub action_bound: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            dim: 1,
            horizon: 1.0,
            sigma: 1.0,
            x0: vec![-1.0],
            initial_std: vec![],
            domain: "box".into(),
            domain_center: vec![0.0],
            domain_half_width: vec![1.0],
            epsilon: 0.1,
            amplitude: 1.0,
            potential_shift: 0.0,
            ramp: "linear".into(),
            terminal: "distance".into(),
            terminal_target: vec![0.0],
            terminal_constant: 0.0,
            terminal_slope: vec![1.0],
            state_cost: "zero".into(),
            state_height: 0.0,
            state_center: vec![0.0],
            state_width: 1.0,
            action_bound: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dx: f64,
    pub steps: usize,
    /// `markovian` or `extended`.
    pub mode: String,
    /// Grid step along `a`; the `x` spacing when zero.
    pub a_step: f64,
    pub relaxation: f64,
    pub tol_measure: f64,
    pub tol_value: f64,
    pub max_outer: usize,
    pub hjb_damping: f64,
    pub hjb_tolerance: f64,
    pub hjb_max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let fb = FbOptions::default();
        SolverSection {
            dx: 0.02,
            steps: 200,
            mode: "markovian".into(),
            a_step: 0.0,
            relaxation: fb.relaxation,
            tol_measure: fb.tol_measure,
            tol_value: fb.tol_value,
            max_outer: fb.max_outer,
            hjb_damping: fb.hjb.damping,
            hjb_tolerance: fb.hjb.tolerance,
            hjb_max_iter: fb.hjb.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_train: usize,
    pub n_test: usize,
    /// Euler steps for training and testing.
    pub steps: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub decay: f64,
    /// Particles for `simulate` and `limit-sweep`.
    pub particles: usize,
    /// Euler steps for `simulate` and `limit-sweep`.
    pub sim_steps: usize,
    /// Control simulated by `simulate`: `feedback` (solved optimum) or `zero`.
    pub control: String,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_train: 100,
            n_test: 1000,
            steps: 20,
            seed: 0,
            repetitions: 5,
            iterations: 300,
            learning_rate: 1e-2,
            decay: 0.995,
            particles: 10_000,
            sim_steps: 200,
            control: "feedback".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub x0: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub truncation: Vec<f64>,
    pub limit_amplitudes: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            x0: vec![-1.25, -1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25],
            amplitudes: vec![1.0],
            truncation: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            limit_amplitudes: vec![1.0, 5.0, 25.0, 125.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Write every `time_stride`-th stored time in field files.
    pub time_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            time_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub mc: McSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{text}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn apply(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, head) = path.split_last().unwrap();
    let mut cur = table;
    for p in head {
        cur = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses `text` and applies `key=value` overrides with dotted keys.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply(&mut table, &path, value)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// First 16 hex digits of the SHA-256 of the resolved configuration,
    /// with the output directory left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir.clear();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.problem()?.validate()?;
        let s = &self.sweep;
        for (name, list) in [
            ("sweep.x0", &s.x0),
            ("sweep.amplitudes", &s.amplitudes),
            ("sweep.truncation", &s.truncation),
            ("sweep.limit_amplitudes", &s.limit_amplitudes),
        ] {
            if list.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
        }
        if !(self.solver.dx > 0.0) || self.solver.steps == 0 || self.mc.steps == 0 || self.mc.sim_steps == 0 {
            return Err(Error::Config("grid spacing and step counts must be positive".into()));
        }
        if self.mc.repetitions == 0 || self.mc.n_test < 2 || self.mc.n_train < 2 || self.mc.particles < 2 {
            return Err(Error::Config("need at least one repetition and two particles".into()));
        }
        if self.output.time_stride == 0 {
            return Err(Error::Config("output.time_stride must be positive".into()));
        }
        self.mode()?;
        if !matches!(self.mc.control.as_str(), "feedback" | "zero") {
            return Err(Error::Config(format!("unknown mc.control `{}`", self.mc.control)));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemConfig> {
        let p = &self.problem;
        let bad = |m: String| Error::Config(m);
        let domain = match p.domain.as_str() {
            "box" => Domain::Box {
                center: p.domain_center.clone(),
                half_widths: p.domain_half_width.clone(),
            },
            "ball" => Domain::Ball {
                center: p.domain_center.clone(),
                radius: *p
                    .domain_half_width
                    .first()
                    .ok_or_else(|| bad("ball needs a radius".into()))?,
            },
            other => return Err(bad(format!("unknown domain `{other}`"))),
        };
        let ramp = match p.ramp.as_str() {
            "linear" => Ramp::Linear,
            "smoothstep" => Ramp::Smoothstep,
            other => return Err(bad(format!("unknown ramp `{other}`"))),
        };
        let terminal = match p.terminal.as_str() {
            "distance" => TerminalCost::Distance {
                target: p.terminal_target.clone(),
            },
            "constant" => TerminalCost::Constant(p.terminal_constant),
            "linear" => TerminalCost::Linear {
                slope: p.terminal_slope.clone(),
            },
            other => return Err(bad(format!("unknown terminal cost `{other}`"))),
        };
        let state = match p.state_cost.as_str() {
            "zero" => StateCost::Zero,
            "constant" => StateCost::Constant(p.state_height),
            "bump" => StateCost::Bump {
                height: p.state_height,
                center: p.state_center.clone(),
                width: p.state_width,
            },
            other => return Err(bad(format!("unknown state cost `{other}`"))),
        };
        let actions = if p.action_bound > 0.0 {
            ActionSet::symmetric(p.dim, p.action_bound)
        } else {
            ActionSet::Whole
        };
        let initial = if p.initial_std.is_empty() {
            InitialMeasure::PointMass(p.x0.clone())
        } else {
            InitialMeasure::Gaussian {
                mean: p.x0.clone(),
                std: p.initial_std.clone(),
            }
        };
        let cfg = ProblemConfig {
            dim: p.dim,
            horizon: p.horizon,
            sigma: p.sigma,
            initial,
            potential: Potential {
                domain,
                epsilon: p.epsilon,
                amplitude: p.amplitude,
                shift: p.potential_shift,
                ramp,
            },
            costs: CostSpec {
                state,
                terminal,
                actions,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The problem started from `x0` (first coordinate in 1-D) with amplitude `n`.
    pub fn problem_at(&self, x0: f64, amplitude: f64) -> Result<ProblemConfig> {
        let mut cfg = self.problem()?.with_amplitude(amplitude);
        let mut start = cfg.initial.mean().to_vec();
        start[0] = x0;
        cfg.initial = match cfg.initial {
            InitialMeasure::PointMass(_) => InitialMeasure::PointMass(start),
            InitialMeasure::Gaussian { std, .. } => InitialMeasure::Gaussian { mean: start, std },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mode(&self) -> Result<Mode> {
        match self.solver.mode.as_str() {
            "markovian" => Ok(Mode::Markovian),
            "extended" => Ok(Mode::Extended),
            other => Err(Error::Config(format!("unknown solver mode `{other}`"))),
        }
    }

    pub fn fb_options(&self) -> FbOptions {
        let s = &self.solver;
        FbOptions {
            relaxation: s.relaxation,
            tol_measure: s.tol_measure,
            tol_value: s.tol_value,
            max_outer: s.max_outer,
            a_step: (s.a_step > 0.0).then_some(s.a_step),
            hjb: HjbOptions {
                damping: s.hjb_damping,
                tolerance: s.hjb_tolerance,
                max_iter: s.hjb_max_iter,
                ..HjbOptions::default()
            },
            ..FbOptions::default()
        }
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        let m = &self.mc;
        TrainOptions {
            iterations: m.iterations,
            batch: m.n_train,
            steps: m.steps,
            learning_rate: m.learning_rate,
            decay: m.decay,
            seed,
            ..TrainOptions::default()
        }
    }
}
