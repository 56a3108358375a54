use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Policy;
use crate::error::{Error, Result};
use crate::model::{eval_costs, ActionSet, ProblemConfig};
use crate::particle::{Noise, SEED_BLOCKS};

/// Batch loss and its gradient with respect to the policy parameters.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Largest `|V'(X_n) dt lambda_A(n+1)|` fed back into the state adjoint.
    pub a_path: f64,
}

/// One stored trajectory of the batch.
struct Path {
    x: Vec<f64>,
    a: Vec<f64>,
    alpha: Vec<f64>,
    running: Vec<f64>,
    terminal: f64,
}

fn simulate(policy: &Policy, config: &ProblemConfig, steps: usize, seed: u64, i: usize) -> Path {
    let d = config.dim;
    let dt = config.horizon / steps as f64;
    let scale = config.sigma * dt.sqrt();
    let mut noise = Noise::new(seed, i as u64);
    let mut tape = policy.shape.new_tape();
    let mut p = Path {
        x: vec![0.0; (steps + 1) * d],
        a: vec![0.0; steps + 1],
        alpha: vec![0.0; steps * d],
        running: vec![0.0; steps],
        terminal: 0.0,
    };
    noise.start(&config.initial, &mut p.x[..d]);
    let mut xi = [0.0; 2];
    for n in 0..steps {
        let (head, tail) = p.x.split_at_mut((n + 1) * d);
        let x = &head[n * d..];
        let al = &mut p.alpha[n * d..(n + 1) * d];
        policy.forward(n as f64 * dt, x, p.a[n], &mut tape, al);
        config.costs.actions.project(al);
        p.running[n] = eval_costs(config, x, al).0;
        p.a[n + 1] = p.a[n] + config.potential.value(x) * dt;
        noise.increment(&mut xi[..d]);
        for k in 0..d {
            tail[k] = x[k] + al[k] * dt + scale * xi[k];
        }
    }
    p.terminal = config.costs.terminal.value(&p.x[steps * d..]);
    p
}

fn saturated(actions: &ActionSet, k: usize, v: f64) -> bool {
    match actions {
        ActionSet::Whole => false,
        ActionSet::Box { lower, upper } => v <= lower[k] || v >= upper[k],
    }
}

/// Exact loss of the discretized self-normalized cost on a batch of `batch`
/// trajectories and its reverse-mode gradient. The noise of trajectory `i`
/// is stream `i` of `seed`, as in the particle engine.
pub fn loss_and_gradient(
    policy: &Policy,
    config: &ProblemConfig,
    batch: usize,
    steps: usize,
    seed: u64,
) -> Result<LossGradient> {
    config.validate()?;
    if batch < 2 || steps < 1 {
        return Err(Error::Config("need a batch of at least 2 and 1 step".into()));
    }
    let d = config.dim;
    let dt = config.horizon / steps as f64;
    let paths: Vec<Path> = (0..batch)
        .into_par_iter()
        .map(|i| simulate(policy, config, steps, seed, i))
        .collect();

    // weight sums and self-normalized means per time, summed in index order
    let mut wsum = vec![0.0; steps + 1];
    let mut mean = vec![0.0; steps + 1];
    for p in &paths {
        for n in 0..=steps {
            let w = (-p.a[n]).exp();
            wsum[n] += w;
            mean[n] += w * if n < steps { p.running[n] } else { p.terminal };
        }
    }
    for n in 0..=steps {
        if !(wsum[n] > 0.0) {
            let max_a = paths.iter().map(|p| p.a[n]).fold(0.0, f64::max);
            return Err(Error::EstimatorDegenerate { step: n, max_a });
        }
        mean[n] /= wsum[n];
    }
    let loss = dt * mean[..steps].iter().sum::<f64>() + mean[steps];

    let blocks = SEED_BLOCKS.min(batch);
    let np = policy.params.len();
    let parts: Vec<(Vec<f64>, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut grad = vec![0.0; np];
            let mut a_path = 0.0f64;
            let mut tape = policy.shape.new_tape();
            let mut out = [0.0; 2];
            let mut gin = [0.0; 4];
            let mut seed_out = [0.0; 2];
            let mut gv = [0.0; 2];
            let ni = policy.shape.inputs;
            for p in &paths[b * batch / blocks..(b + 1) * batch / blocks] {
                let xk = &p.x[steps * d..];
                let wk = (-p.a[steps]).exp();
                let mut lx = [0.0; 2];
                config.costs.terminal.gradient(xk, &mut gv[..d]);
                for k in 0..d {
                    lx[k] = wk / wsum[steps] * gv[k];
                }
                let mut la = -wk * (p.terminal - mean[steps]) / wsum[steps];
                for n in (0..steps).rev() {
                    let x = &p.x[n * d..(n + 1) * d];
                    let al = &p.alpha[n * d..(n + 1) * d];
                    let t = n as f64 * dt;
                    let w = (-p.a[n]).exp();
                    let df = dt * w / wsum[n];
                    // cost and transition seeds for alpha_n
                    for k in 0..d {
                        seed_out[k] = if saturated(&config.costs.actions, k, al[k]) {
                            0.0
                        } else {
                            lx[k] * dt + df * al[k]
                        };
                    }
                    policy.forward(t, x, p.a[n], &mut tape, &mut out[..d]);
                    policy
                        .shape
                        .backward(&policy.params, &tape, &seed_out[..d], &mut grad, &mut gin[..ni]);
                    // state adjoint
                    config.potential.gradient(x, &mut gv[..d]);
                    for k in 0..d {
                        let via_a = gv[k] * dt * la;
                        a_path = a_path.max(via_a.abs());
                        lx[k] += via_a + gin[1 + k] * policy.norm.x_scale[k];
                    }
                    config.costs.state.gradient(x, &mut gv[..d]);
                    for k in 0..d {
                        lx[k] += df * gv[k];
                    }
                    la += -w * dt * (p.running[n] - mean[n]) / wsum[n];
                    if policy.class == super::PolicyClass::Extended {
                        la += gin[1 + d] * policy.norm.a_scale;
                    }
                }
            }
            (grad, a_path)
        })
        .collect();
    let mut grad = vec![0.0; np];
    let mut a_path = 0.0f64;
    for (g, ap) in &parts {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
        a_path = a_path.max(*ap);
    }
    Ok(LossGradient { loss, grad, a_path })
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub iterations: usize,
    pub batch: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every iteration.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iterations: 2000,
            batch: 100,
            steps: 100,
            learning_rate: 1e-3,
            decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub policy: Policy,
    pub losses: Vec<f64>,
}

/// Adam on fresh batches; the noise seed of iteration `k` is drawn from `opts.seed`.
pub fn train(policy: &Policy, config: &ProblemConfig, opts: TrainOptions) -> Result<TrainReport> {
    let mut p = policy.clone();
    let np = p.params.len();
    let (mut m, mut v) = (vec![0.0; np], vec![0.0; np]);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut losses = Vec::with_capacity(opts.iterations);
    let mut lr = opts.learning_rate;
    let mut above = 0usize;
    for it in 0..opts.iterations {
        let batch_seed: u64 = rng.random();
        let lg = loss_and_gradient(&p, config, opts.batch, opts.steps, batch_seed)?;
        if !lg.loss.is_finite() || lg.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged {
                iteration: it,
                loss: lg.loss,
                initial: losses.first().copied().unwrap_or(f64::NAN),
            });
        }
        losses.push(lg.loss);
        if lg.loss > 10.0 * losses[0].abs() {
            above += 1;
            if above >= 50 {
                return Err(Error::TrainingDiverged {
                    iteration: it,
                    loss: lg.loss,
                    initial: losses[0],
                });
            }
        } else {
            above = 0;
        }
        let k = (it + 1) as i32;
        let (c1, c2) = (1.0 - opts.beta1.powi(k), 1.0 - opts.beta2.powi(k));
        for i in 0..np {
            let g = lg.grad[i];
            m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g;
            v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g * g;
            p.params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
        }
        lr *= opts.decay;
    }
    Ok(TrainReport { policy: p, losses })
}
