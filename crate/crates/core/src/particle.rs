//! Weighted Monte-Carlo engine: Euler-Maruyama trajectories carrying the
//! accumulated potential `A`, self-normalized estimators with Gibbs weights
//! `exp(-A)`, and the hard-killing reference.
//!
//! Trajectory `i` draws its noise from stream `i` of a ChaCha generator keyed
//! by the seed, so results do not depend on how work is split across threads.
//! Particles are grouped into contiguous blocks whose sums are merged in a
//! fixed order; the spread of the per-block estimates gives the standard error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::control::{Control, Truncated};
use crate::error::{Error, Result};
use crate::grid::{wasserstein1_atoms, GridField};
use crate::model::{eval_costs, InitialMeasure, ProblemConfig};

/// Number of contiguous particle blocks used for standard errors.
pub const SEED_BLOCKS: usize = 20;

/// Noise of one trajectory: the initial draw (Gaussian start only) followed by
/// one standard normal vector per step.
pub struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        Noise { rng }
    }

    pub fn start(&mut self, initial: &InitialMeasure, out: &mut [f64]) {
        match initial {
            InitialMeasure::PointMass(x) => out.copy_from_slice(x),
            InitialMeasure::Gaussian { mean, std } => {
                for k in 0..out.len() {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    out[k] = mean[k] + std[k] * z;
                }
            }
        }
    }

    pub fn increment(&mut self, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Runs one trajectory, calling `visit(n, x_n, a_n, alpha_n)` for
/// `n = 0..steps` and `visit(steps, x_K, a_K, &[])` at the end.
fn walk(
    config: &ProblemConfig,
    control: &dyn Control,
    steps: usize,
    noise: &mut Noise,
    mut visit: impl FnMut(usize, &[f64], f64, &[f64]),
) {
    let d = config.dim;
    let dt = config.horizon / steps as f64;
    let scale = config.sigma * dt.sqrt();
    let mut x = [0.0; 2];
    let mut alpha = [0.0; 2];
    let mut xi = [0.0; 2];
    noise.start(&config.initial, &mut x[..d]);
    let mut a = 0.0;
    for n in 0..steps {
        let t = n as f64 * dt;
        control.eval(t, &x[..d], a, &mut alpha[..d]);
        visit(n, &x[..d], a, &alpha[..d]);
        a += config.potential.value(&x[..d]) * dt;
        noise.increment(&mut xi[..d]);
        for k in 0..d {
            x[k] += alpha[k] * dt + scale * xi[k];
        }
    }
    visit(steps, &x[..d], a, &[]);
}

fn check_run(config: &ProblemConfig, control: &dyn Control, particles: usize, steps: usize) -> Result<()> {
    config.validate()?;
    if particles < 2 || steps < 1 {
        return Err(Error::Config("need at least 2 particles and 1 step".into()));
    }
    if control.dim() != config.dim {
        return Err(Error::Contract("control dimension differs from the state".into()));
    }
    Ok(())
}

fn block_ranges(particles: usize) -> Vec<(usize, usize)> {
    let b = SEED_BLOCKS.min(particles);
    (0..b).map(|k| (k * particles / b, (k + 1) * particles / b)).collect()
}

/// Stored trajectories at a subset of the mesh times.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub particles: usize,
    pub dim: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    /// Mesh indices kept; always starts at 0 and ends at `steps`.
    pub record_steps: Vec<usize>,
    /// `x[(i * records + r) * dim + k]`.
    pub x: Vec<f64>,
    /// `a[i * records + r]`.
    pub a: Vec<f64>,
    /// First mesh index at which each particle was killed (hard-kill runs).
    pub killed_at: Option<Vec<usize>>,
}

impl ParticleEnsemble {
    pub fn records(&self) -> usize {
        self.record_steps.len()
    }

    pub fn position(&self, i: usize, r: usize) -> &[f64] {
        let o = (i * self.records() + r) * self.dim;
        &self.x[o..o + self.dim]
    }

    pub fn accumulated(&self, i: usize, r: usize) -> f64 {
        self.a[i * self.records() + r]
    }

    pub fn record_time(&self, r: usize) -> f64 {
        self.record_steps[r] as f64 * self.dt
    }

    /// Index of the record holding mesh step `n`.
    pub fn record_of(&self, n: usize) -> Option<usize> {
        self.record_steps.binary_search(&n).ok()
    }

    fn weight(&self, i: usize, r: usize) -> f64 {
        match &self.killed_at {
            Some(k) => {
                if self.record_steps[r] < k[i] {
                    1.0
                } else {
                    0.0
                }
            }
            None => (-self.accumulated(i, r)).exp(),
        }
    }
}

fn record_steps(steps: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut r: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *r.last().unwrap() != steps {
        r.push(steps);
    }
    r
}

/// Simulates `particles` trajectories and stores every mesh time.
pub fn simulate_ensemble(
    config: &ProblemConfig,
    control: &dyn Control,
    particles: usize,
    steps: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    simulate_ensemble_recorded(config, control, particles, steps, seed, 1)
}

/// As [`simulate_ensemble`], keeping every `stride`-th mesh time and the last.
pub fn simulate_ensemble_recorded(
    config: &ProblemConfig,
    control: &dyn Control,
    particles: usize,
    steps: usize,
    seed: u64,
    stride: usize,
) -> Result<ParticleEnsemble> {
    check_run(config, control, particles, steps)?;
    let d = config.dim;
    let rec = record_steps(steps, stride);
    let nr = rec.len();
    let mut x = vec![0.0; particles * nr * d];
    let mut a = vec![0.0; particles * nr];
    x.par_chunks_mut(nr * d)
        .zip(a.par_chunks_mut(nr))
        .enumerate()
        .for_each(|(i, (xs, as_))| {
            let mut noise = Noise::new(seed, i as u64);
            let mut r = 0;
            walk(config, control, steps, &mut noise, |n, xn, an, _| {
                if r < nr && rec[r] == n {
                    xs[r * d..(r + 1) * d].copy_from_slice(xn);
                    as_[r] = an;
                    r += 1;
                }
            });
        });
    Ok(ParticleEnsemble {
        particles,
        dim: d,
        steps,
        dt: config.horizon / steps as f64,
        seed,
        record_steps: rec,
        x,
        a,
        killed_at: None,
    })
}

/// Per-block weighted sums of the running and terminal costs.
#[derive(Debug, Clone)]
struct BlockSums {
    running: Vec<f64>,
    weight: Vec<f64>,
    terminal: f64,
    max_a: f64,
    alive: Vec<usize>,
}

impl BlockSums {
    fn new(steps: usize) -> Self {
        BlockSums {
            running: vec![0.0; steps],
            weight: vec![0.0; steps + 1],
            terminal: 0.0,
            max_a: 0.0,
            alive: vec![0; steps + 1],
        }
    }

    fn add(&mut self, n: usize, w: f64, running: f64, terminal: f64, a: f64) {
        self.weight[n] += w;
        if n < self.running.len() {
            self.running[n] += w * running;
        } else {
            self.terminal += w * terminal;
        }
        if w > 0.0 {
            self.alive[n] += 1;
        }
        self.max_a = self.max_a.max(a);
    }

    fn merge(&mut self, other: &BlockSums) {
        for (a, b) in self.running.iter_mut().zip(&other.running) {
            *a += b;
        }
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.alive.iter_mut().zip(&other.alive) {
            *a += b;
        }
        self.terminal += other.terminal;
        self.max_a = self.max_a.max(other.max_a);
    }

    fn estimate(&self, dt: f64) -> std::result::Result<f64, usize> {
        let mut j = 0.0;
        for (n, (r, w)) in self.running.iter().zip(&self.weight).enumerate() {
            if !(*w > 0.0) {
                return Err(n);
            }
            j += dt * (r / w);
        }
        let k = self.running.len();
        if !(self.weight[k] > 0.0) {
            return Err(k);
        }
        Ok(j + self.terminal / self.weight[k])
    }
}

#[derive(Debug, Clone)]
pub struct CostEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Estimates from each particle block.
    pub blocks: Vec<f64>,
    pub particles: usize,
}

#[derive(Debug, Clone)]
pub struct KilledEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Fraction of particles alive at every mesh time.
    pub survival: Vec<f64>,
}

fn block_stderr(blocks: &[f64]) -> f64 {
    let ok: Vec<f64> = blocks.iter().cloned().filter(|v| v.is_finite()).collect();
    let b = ok.len() as f64;
    if ok.len() < 2 {
        return f64::NAN;
    }
    let mean = ok.iter().sum::<f64>() / b;
    let var = ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

fn combine(sums: &[BlockSums], dt: f64, particles: usize, killed: bool) -> Result<(CostEstimate, BlockSums)> {
    let mut total = sums[0].clone();
    for s in &sums[1..] {
        total.merge(s);
    }
    let value = total.estimate(dt).map_err(|step| {
        if killed {
            Error::ConditioningOnNull { time: step as f64 * dt }
        } else {
            Error::EstimatorDegenerate {
                step,
                max_a: total.max_a,
            }
        }
    })?;
    let blocks: Vec<f64> = sums.iter().map(|s| s.estimate(dt).unwrap_or(f64::NAN)).collect();
    Ok((
        CostEstimate {
            value,
            stderr: block_stderr(&blocks),
            blocks,
            particles,
        },
        total,
    ))
}

/// Self-normalized cost estimate from a stored ensemble (every mesh time must
/// be recorded).
pub fn estimate_cost(ens: &ParticleEnsemble, config: &ProblemConfig, control: &dyn Control) -> Result<CostEstimate> {
    if ens.records() != ens.steps + 1 {
        return Err(Error::Contract("estimate_cost needs every mesh time recorded".into()));
    }
    let d = ens.dim;
    let sums: Vec<BlockSums> = block_ranges(ens.particles)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut s = BlockSums::new(ens.steps);
            let mut alpha = [0.0; 2];
            for i in lo..hi {
                for n in 0..=ens.steps {
                    let x = ens.position(i, n);
                    let a = ens.accumulated(i, n);
                    let w = ens.weight(i, n);
                    if n < ens.steps {
                        control.eval(n as f64 * ens.dt, x, a, &mut alpha[..d]);
                        let f = eval_costs(config, x, &alpha[..d]).0;
                        s.add(n, w, f, 0.0, a);
                    } else {
                        s.add(n, w, 0.0, config.costs.terminal.value(x), a);
                    }
                }
            }
            s
        })
        .collect();
    Ok(combine(&sums, ens.dt, ens.particles, ens.killed_at.is_some())?.0)
}

/// Same estimator as [`estimate_cost`] without storing trajectories.
pub fn estimate_cost_streaming(
    config: &ProblemConfig,
    control: &dyn Control,
    particles: usize,
    steps: usize,
    seed: u64,
) -> Result<CostEstimate> {
    check_run(config, control, particles, steps)?;
    let dt = config.horizon / steps as f64;
    let sums: Vec<BlockSums> = block_ranges(particles)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut s = BlockSums::new(steps);
            for i in lo..hi {
                let mut noise = Noise::new(seed, i as u64);
                walk(config, control, steps, &mut noise, |n, x, a, alpha| {
                    let w = (-a).exp();
                    if n < steps {
                        s.add(n, w, eval_costs(config, x, alpha).0, 0.0, a);
                    } else {
                        s.add(n, w, 0.0, config.costs.terminal.value(x), a);
                    }
                });
            }
            s
        })
        .collect();
    Ok(combine(&sums, dt, particles, false)?.0)
}

/// Conditional cost given survival in `D`, with particles killed at the first
/// mesh time they are found outside `D`.
pub fn hard_kill_cost(
    config: &ProblemConfig,
    control: &dyn Control,
    particles: usize,
    steps: usize,
    seed: u64,
) -> Result<KilledEstimate> {
    check_run(config, control, particles, steps)?;
    let domain = &config.potential.domain;
    if let InitialMeasure::PointMass(x0) = &config.initial {
        if !domain.contains(x0) {
            return Err(Error::Contract("hard killing needs the start inside D".into()));
        }
    }
    let dt = config.horizon / steps as f64;
    let sums: Vec<BlockSums> = block_ranges(particles)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut s = BlockSums::new(steps);
            for i in lo..hi {
                let mut noise = Noise::new(seed, i as u64);
                let mut alive = true;
                walk(config, control, steps, &mut noise, |n, x, a, alpha| {
                    alive = alive && domain.contains(x);
                    let w = if alive { 1.0 } else { 0.0 };
                    if n < steps {
                        s.add(n, w, eval_costs(config, x, alpha).0, 0.0, a);
                    } else {
                        s.add(n, w, 0.0, config.costs.terminal.value(x), a);
                    }
                });
            }
            s
        })
        .collect();
    let (est, total) = combine(&sums, dt, particles, true)?;
    Ok(KilledEstimate {
        value: est.value,
        stderr: est.stderr,
        survival: total.alive.iter().map(|c| *c as f64 / particles as f64).collect(),
    })
}

/// Hard-killed ensemble: positions stored as in [`simulate_ensemble_recorded`]
/// with the kill index of every particle.
pub fn simulate_killed_ensemble(
    config: &ProblemConfig,
    control: &dyn Control,
    particles: usize,
    steps: usize,
    seed: u64,
    stride: usize,
) -> Result<ParticleEnsemble> {
    let mut ens = simulate_ensemble_recorded(config, control, particles, steps, seed, stride)?;
    let domain = &config.potential.domain;
    let killed: Vec<usize> = (0..particles)
        .into_par_iter()
        .map(|i| {
            let mut noise = Noise::new(seed, i as u64);
            let mut at = usize::MAX;
            walk(config, control, steps, &mut noise, |n, x, _, _| {
                if at == usize::MAX && !domain.contains(x) {
                    at = n;
                }
            });
            at
        })
        .collect();
    ens.killed_at = Some(killed);
    Ok(ens)
}

/// Weighted empirical measure with normalized weights.
#[derive(Debug, Clone)]
pub struct WeightedAtoms {
    pub dim: usize,
    /// `positions[i * dim + k]`.
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedAtoms {
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for k in 0..self.dim {
                m[k] += w * self.positions[i * self.dim + k];
            }
        }
        m
    }

    /// W1 distance to a 1-D grid density.
    pub fn wasserstein1(&self, mu: &GridField) -> Result<f64> {
        if self.dim != 1 || mu.grid.dim() != 1 {
            return Err(Error::Contract("W1 against atoms is one-dimensional".into()));
        }
        wasserstein1_atoms(mu, &self.positions, &self.weights)
    }
}

/// Atoms `X_i(t)` with weights `exp(-A_i(t))` normalized (indicator of
/// survival for killed ensembles) at record `r`.
pub fn estimate_gibbs_measure(ens: &ParticleEnsemble, r: usize) -> Result<WeightedAtoms> {
    if r >= ens.records() {
        return Err(Error::Contract(format!("record {r} out of range")));
    }
    let raw: Vec<f64> = (0..ens.particles).map(|i| ens.weight(i, r)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        let max_a = (0..ens.particles).map(|i| ens.accumulated(i, r)).fold(0.0, f64::max);
        return Err(if ens.killed_at.is_some() {
            Error::ConditioningOnNull {
                time: ens.record_time(r),
            }
        } else {
            Error::EstimatorDegenerate {
                step: ens.record_steps[r],
                max_a,
            }
        });
    }
    let mut positions = Vec::with_capacity(ens.particles * ens.dim);
    for i in 0..ens.particles {
        positions.extend_from_slice(ens.position(i, r));
    }
    Ok(WeightedAtoms {
        dim: ens.dim,
        positions,
        weights: raw.iter().map(|w| w / total).collect(),
    })
}

/// `alpha * 1{|alpha| <= K}`.
pub fn truncate_control<C: Control>(control: C, bound: f64) -> Result<Truncated<C>> {
    if !(bound > 0.0) {
        return Err(Error::Config(format!("truncation level must be positive, got {bound}")));
    }
    Ok(Truncated { inner: control, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{FnControl, ZeroControl};
    use crate::model::{Domain, Potential, TerminalCost};

    fn zero() -> ZeroControl {
        ZeroControl { dim: 1 }
    }

    #[test]
    fn constant_potential_accumulates_exactly() {
        let cfg = ProblemConfig::benchmark(0.0).with_potential(Potential::constant(1, 1.0));
        let ens = simulate_ensemble(&cfg, &zero(), 50, 64, 3).unwrap();
        for i in 0..50 {
            assert!((ens.accumulated(i, 64) - 1.0).abs() < 1e-14);
            assert_eq!(ens.accumulated(i, 0), 0.0);
        }
    }

    #[test]
    fn uncontrolled_mean_is_centered() {
        let cfg = ProblemConfig::benchmark(0.0);
        let n = 20_000;
        let ens = simulate_ensemble_recorded(&cfg, &zero(), n, 50, 11, 50).unwrap();
        let m: f64 = (0..n).map(|i| ens.position(i, 1)[0]).sum::<f64>() / n as f64;
        assert!(m.abs() < 4.0 / (n as f64).sqrt(), "{m}");
    }

    #[test]
    fn a_feedback_is_inert_without_potential() {
        let cfg = ProblemConfig::benchmark(0.3).with_potential(Potential::constant(1, 0.0));
        let psi = FnControl::extended(1, |_t, _x: &[f64], a, o: &mut [f64]| o[0] = a);
        let e1 = simulate_ensemble(&cfg, &psi, 30, 40, 5).unwrap();
        let e0 = simulate_ensemble(&cfg, &zero(), 30, 40, 5).unwrap();
        assert!(e1.x.iter().zip(&e0.x).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn weights_cancel_under_constant_potential() {
        let base = ProblemConfig::benchmark(-0.4);
        let phi = FnControl::markovian(1, |_t, x: &[f64], _a, o: &mut [f64]| o[0] = -0.7 * x[0]);
        let c0 = base.with_potential(Potential::constant(1, 0.0));
        let c1 = base.with_potential(Potential::constant(1, 1.7));
        let j0 = estimate_cost_streaming(&c0, &phi, 400, 50, 9).unwrap();
        let j1 = estimate_cost_streaming(&c1, &phi, 400, 50, 9).unwrap();
        assert!((j0.value - j1.value).abs() < 1e-12);
        let mut c2 = base.clone();
        c2.costs.terminal = TerminalCost::Constant(1.0);
        let ens = simulate_ensemble(&c2, &zero(), 100, 20, 1).unwrap();
        assert!((estimate_cost(&ens, &c2, &zero()).unwrap().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn streaming_matches_stored_bitwise() {
        let cfg = ProblemConfig::benchmark(-1.0);
        let phi = FnControl::markovian(1, |t, x: &[f64], _a, o: &mut [f64]| o[0] = (t - x[0]).sin());
        let ens = simulate_ensemble(&cfg, &phi, 333, 30, 77).unwrap();
        let a = estimate_cost(&ens, &cfg, &phi).unwrap();
        let b = estimate_cost_streaming(&cfg, &phi, 333, 30, 77).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn mean_absolute_value_of_brownian_motion() {
        let cfg = ProblemConfig::benchmark(0.0).with_potential(Potential::constant(1, 0.0));
        let j = estimate_cost_streaming(&cfg, &zero(), 100_000, 10, 1).unwrap();
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        assert!((j.value - exact).abs() < 4.0 * j.stderr, "{} {}", j.value, j.stderr);
    }

    #[test]
    fn initial_measure_has_uniform_weights() {
        let cfg = ProblemConfig::benchmark(0.0).with_initial(InitialMeasure::Gaussian {
            mean: vec![0.0],
            std: vec![0.5],
        });
        let ens = simulate_ensemble_recorded(&cfg, &zero(), 64, 10, 2, 5).unwrap();
        let m = estimate_gibbs_measure(&ens, 0).unwrap();
        assert!(m.weights.iter().all(|w| *w == 1.0 / 64.0));
    }

    #[test]
    fn hard_kill_without_exits_matches_soft() {
        let mut cfg = ProblemConfig::benchmark(0.0);
        cfg.potential = Potential::new(Domain::interval(0.0, 1e3), 0.1, 1.0).unwrap();
        let k = hard_kill_cost(&cfg, &zero(), 2000, 20, 4).unwrap();
        let s = estimate_cost_streaming(&cfg, &zero(), 2000, 20, 4).unwrap();
        assert_eq!(k.value, s.value);
        assert!(k.survival.iter().all(|s| *s == 1.0));
    }

    #[test]
    fn survival_is_non_increasing() {
        let cfg = ProblemConfig::benchmark(0.5);
        let k = hard_kill_cost(&cfg, &zero(), 2000, 100, 8).unwrap();
        assert!(k.survival.windows(2).all(|w| w[1] <= w[0]));
        assert!(k.survival[100] < 0.9);
        let ens = simulate_killed_ensemble(&cfg, &zero(), 2000, 100, 8, 100).unwrap();
        let alive = ens.killed_at.as_ref().unwrap().iter().filter(|k| **k > 100).count();
        assert_eq!(alive as f64 / 2000.0, k.survival[100]);
    }

    #[test]
    fn everyone_dead_is_an_error() {
        let mut cfg = ProblemConfig::benchmark(0.0);
        cfg.potential = Potential::new(Domain::interval(0.0, 1e-3), 0.1, 1.0).unwrap();
        let r = hard_kill_cost(&cfg, &zero(), 50, 100, 1);
        assert!(matches!(r, Err(Error::ConditioningOnNull { .. })));
    }

    #[test]
    fn truncation_rejects_non_positive_levels() {
        assert!(truncate_control(zero(), 0.0).is_err());
        assert!(truncate_control(zero(), 1.0).is_ok());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = ProblemConfig::benchmark(-1.0);
        let phi = FnControl::markovian(1, |_t, x: &[f64], _a, o: &mut [f64]| o[0] = -x[0]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_cost_streaming(&cfg, &phi, 1000, 20, 5).unwrap().value)
        };
        assert_eq!(run(1).to_bits(), run(3).to_bits());
    }
}
