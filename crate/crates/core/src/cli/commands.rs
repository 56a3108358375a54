//! The subcommands. Each writes CSV artifacts into the output directory with
//! the configuration hash and the seed in the first two columns.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::csv::{emit_csv, Field};
use crate::control::{Control, ZeroControl};
use crate::coupler::{contraction_rate, fb_solve, shorttime_certificate, FbSolution, Mode};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ProblemConfig;
use crate::particle::{
    estimate_cost_streaming, estimate_gibbs_measure, hard_kill_cost, simulate_ensemble_recorded, truncate_control,
};
use crate::policy::io::save;
use crate::policy::{init_policy, train, Policy, PolicyClass};

/// Where artifacts go and what every row is stamped with.
pub struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
    pub seed: u64,
}

impl Artifacts {
    pub fn new(cfg: &ExperimentConfig, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            seed: cfg.mc.seed,
        })
    }

    pub fn write(&self, name: &str, columns: &[&str], rows: Vec<Vec<Field>>) -> Result<PathBuf> {
        let mut schema = vec!["config_hash", "seed"];
        schema.extend_from_slice(columns);
        let stamped: Vec<Vec<Field>> = rows
            .into_iter()
            .map(|r| {
                let mut s = vec![Field::from(self.hash.as_str()), Field::from(self.seed)];
                s.extend(r);
                s
            })
            .collect();
        let path = self.dir.join(name);
        emit_csv(&stamped, &schema, &path)?;
        Ok(path)
    }
}

fn solve_problem(cfg: &ExperimentConfig, problem: &ProblemConfig, art: &Artifacts) -> Result<FbSolution> {
    let grid = Grid::truncation_box(problem, cfg.solver.dx)?;
    match fb_solve(problem, &grid, cfg.solver.steps, cfg.mode()?, cfg.fb_options()) {
        Err(Error::NonConvergence {
            what,
            iterations,
            last,
            residuals,
        }) => {
            let rows = residuals
                .iter()
                .enumerate()
                .map(|(i, r)| vec![Field::from(i + 1), Field::from(*r)])
                .collect();
            art.write("residual_trace.csv", &["iteration", "combined_residual"], rows)?;
            Err(Error::NonConvergence {
                what,
                iterations,
                last,
                residuals,
            })
        }
        other => other,
    }
}

fn stored_times(steps: usize, stride: usize) -> Vec<usize> {
    let mut ns: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *ns.last().unwrap() != steps {
        ns.push(steps);
    }
    ns
}

/// `fields.csv` with `mu`, `u` and the feedback on the solver mesh,
/// `residuals.csv` with the outer iteration history and `solve.csv`.
pub fn solve(cfg: &ExperimentConfig, art: &Artifacts) -> Result<()> {
    let problem = cfg.problem()?;
    let sol = solve_problem(cfg, &problem, art)?;
    let grid = sol.flow.grid;
    let d = problem.dim;
    let coords: Vec<String> = if sol.flow.extended {
        vec!["x".into(), "a".into()]
    } else if d == 1 {
        vec!["x".into()]
    } else {
        (0..d).map(|k| format!("x{k}")).collect()
    };
    let alphas: Vec<String> = if d == 1 {
        vec!["alpha".into()]
    } else {
        (0..d).map(|k| format!("alpha{k}")).collect()
    };
    let mut columns: Vec<&str> = vec!["t"];
    columns.extend(coords.iter().map(String::as_str));
    columns.extend(["mu", "u"]);
    columns.extend(alphas.iter().map(String::as_str));

    let mut rows = Vec::new();
    let mut p = vec![0.0; grid.dim()];
    for n in stored_times(sol.flow.steps(), cfg.output.time_stride) {
        for idx in 0..grid.len() {
            grid.point(idx, &mut p);
            let mut r = vec![Field::from(sol.flow.times[n])];
            r.extend(p.iter().map(|v| Field::from(*v)));
            r.push(sol.flow.mu[n].values[idx].into());
            r.push(sol.value.u[n].values[idx].into());
            r.extend(sol.control.fields[n].iter().map(|f| Field::from(f.values[idx])));
            rows.push(r);
        }
    }
    art.write("fields.csv", &columns, rows)?;

    let rows = sol
        .residual_history
        .iter()
        .map(|h| {
            vec![
                h.iteration.into(),
                h.measure.into(),
                h.value.into(),
                h.relaxation.into(),
            ]
        })
        .collect();
    art.write("residuals.csv", &["iteration", "measure", "value", "relaxation"], rows)?;

    let rate = contraction_rate(&sol.residual_history).unwrap_or(f64::NAN);
    art.write(
        "solve.csv",
        &["mode", "cost", "outer_iterations", "contraction_rate", "a_range"],
        vec![vec![
            cfg.solver.mode.clone().into(),
            sol.cost(&problem).into(),
            sol.residual_history.len().into(),
            rate.into(),
            sol.value.a_range().into(),
        ]],
    )?;
    Ok(())
}

/// Particle ensemble under the solved feedback (or zero control):
/// `ensemble.csv` per stored time, `cost.csv`, and `truncation.csv` over the
/// truncation levels of the sweep.
pub fn simulate(cfg: &ExperimentConfig, art: &Artifacts) -> Result<()> {
    let problem = cfg.problem()?;
    let solved;
    let control: &dyn Control = if cfg.mc.control == "feedback" {
        solved = solve_problem(cfg, &problem, art)?;
        &solved.control
    } else {
        &ZeroControl { dim: problem.dim }
    };
    let (n, steps, seed) = (cfg.mc.particles, cfg.mc.sim_steps, cfg.mc.seed);
    let ens = simulate_ensemble_recorded(&problem, control, n, steps, seed, cfg.output.time_stride)?;
    let d = problem.dim;
    let means: Vec<String> = if d == 1 {
        vec!["mean".into()]
    } else {
        (0..d).map(|k| format!("mean{k}")).collect()
    };
    let mut columns: Vec<&str> = vec!["t"];
    columns.extend(means.iter().map(String::as_str));
    columns.extend(["ess", "mean_a", "max_a"]);
    let mut rows = Vec::new();
    for r in 0..ens.records() {
        let atoms = estimate_gibbs_measure(&ens, r)?;
        let ess = 1.0 / atoms.weights.iter().map(|w| w * w).sum::<f64>();
        let a: Vec<f64> = (0..n).map(|i| ens.accumulated(i, r)).collect();
        let mut row = vec![Field::from(ens.record_time(r))];
        row.extend(atoms.mean().into_iter().map(Field::from));
        row.push(ess.into());
        row.push((a.iter().sum::<f64>() / n as f64).into());
        row.push(a.iter().cloned().fold(0.0, f64::max).into());
        rows.push(row);
    }
    art.write("ensemble.csv", &columns, rows)?;

    let est = estimate_cost_streaming(&problem, control, n, steps, seed)?;
    art.write(
        "cost.csv",
        &["control", "particles", "steps", "value", "stderr"],
        vec![vec![
            cfg.mc.control.clone().into(),
            n.into(),
            steps.into(),
            est.value.into(),
            est.stderr.into(),
        ]],
    )?;

    let rows = cfg
        .sweep
        .truncation
        .iter()
        .map(|&k| {
            let e = estimate_cost_streaming(&problem, &truncate_control(control, k)?, n, steps, seed)?;
            Ok(vec![k.into(), e.value.into(), e.stderr.into()])
        })
        .collect::<Result<Vec<_>>>()?;
    art.write("truncation.csv", &["bound", "value", "stderr"], rows)?;
    Ok(())
}

/// Test value of one trained policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedValue {
    pub class: PolicyClass,
    pub repetition: usize,
    pub value: f64,
    pub stderr: f64,
    pub final_loss: f64,
    pub policy: Policy,
}

fn class_name(c: PolicyClass) -> &'static str {
    match c {
        PolicyClass::Markovian => "markovian",
        PolicyClass::Extended => "extended",
    }
}

/// Seed of the test particles; shared by both classes so the comparison
/// uses common random numbers.
pub fn test_seed(seed: u64) -> u64 {
    seed.wrapping_add(1 << 32)
}

/// Trains `mc.repetitions` policies of each class on `problem` and evaluates
/// them on `mc.n_test` fresh particles. Policies are saved into `save_dir`
/// when one is given.
pub fn optimize_point(
    cfg: &ExperimentConfig,
    problem: &ProblemConfig,
    seed: u64,
    save_dir: Option<&Path>,
) -> Result<Vec<TrainedValue>> {
    let jobs: Vec<(PolicyClass, usize)> = [PolicyClass::Markovian, PolicyClass::Extended]
        .into_iter()
        .flat_map(|c| (0..cfg.mc.repetitions).map(move |r| (c, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(class, rep)| {
            let s = seed.wrapping_add(rep as u64);
            let init = init_policy(class, problem, s);
            let report = train(&init, problem, cfg.train_options(s))?;
            if let Some(dir) = save_dir {
                save(
                    &report.policy,
                    &dir.join(format!("policy_{}_{rep}.bin", class_name(class))),
                )?;
            }
            let est = estimate_cost_streaming(problem, &report.policy, cfg.mc.n_test, cfg.mc.steps, test_seed(seed))?;
            Ok(TrainedValue {
                class,
                repetition: rep,
                value: est.value,
                stderr: est.stderr,
                final_loss: report.losses.last().copied().unwrap_or(f64::NAN),
                policy: report.policy,
            })
        })
        .collect()
}

/// Mean, standard error of the mean test value, min and max over repetitions.
pub fn summarize(values: &[TrainedValue], class: PolicyClass) -> (f64, f64, f64, f64) {
    let v: Vec<&TrainedValue> = values.iter().filter(|v| v.class == class).collect();
    let n = v.len() as f64;
    let mean = v.iter().map(|t| t.value).sum::<f64>() / n;
    let se = v.iter().map(|t| t.stderr * t.stderr).sum::<f64>().sqrt() / n;
    let min = v.iter().map(|t| t.value).fold(f64::INFINITY, f64::min);
    let max = v.iter().map(|t| t.value).fold(f64::NEG_INFINITY, f64::max);
    (mean, se, min, max)
}

/// `values.csv`: every trained policy of both classes at the configured start.
pub fn optimize(cfg: &ExperimentConfig, art: &Artifacts) -> Result<()> {
    let problem = cfg.problem()?;
    let values = optimize_point(cfg, &problem, cfg.mc.seed, Some(&art.dir))?;
    let rows = values
        .iter()
        .map(|v| {
            vec![
                class_name(v.class).into(),
                v.repetition.into(),
                v.value.into(),
                v.stderr.into(),
                v.final_loss.into(),
            ]
        })
        .collect();
    art.write(
        "values.csv",
        &["class", "repetition", "value", "stderr", "final_loss"],
        rows,
    )?;
    Ok(())
}

/// `compare.csv`: both classes over the `x0` and amplitude sweeps, averaged
/// over repetitions. One file per sweep point goes into `points/`.
pub fn compare(cfg: &ExperimentConfig, art: &Artifacts) -> Result<()> {
    let points: Vec<(f64, f64)> = cfg
        .sweep
        .x0
        .iter()
        .flat_map(|&x| cfg.sweep.amplitudes.iter().map(move |&n| (x, n)))
        .collect();
    let points_dir = art.dir.join("points");
    std::fs::create_dir_all(&points_dir).map_err(|e| Error::io(&points_dir, e))?;
    let columns = ["x0", "amplitude", "class", "value", "stderr", "value_min", "value_max"];
    let results = points
        .par_iter()
        .map(|&(x0, n)| {
            let problem = cfg.problem_at(x0, n)?;
            let values = optimize_point(cfg, &problem, cfg.mc.seed, None)?;
            let rows: Vec<Vec<Field>> = [PolicyClass::Markovian, PolicyClass::Extended]
                .into_iter()
                .map(|c| {
                    let (mean, se, min, max) = summarize(&values, c);
                    vec![
                        x0.into(),
                        n.into(),
                        class_name(c).into(),
                        mean.into(),
                        se.into(),
                        min.into(),
                        max.into(),
                    ]
                })
                .collect();
            let point = Artifacts {
                dir: points_dir.clone(),
                hash: art.hash.clone(),
                seed: art.seed,
            };
            point.write(&format!("compare_x0_{x0}_n_{n}.csv"), &columns, rows.clone())?;
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    art.write("compare.csv", &columns, results.into_iter().flatten().collect())?;
    Ok(())
}

/// `limit_sweep.csv`: the soft-killed cost of the zero control for every
/// amplitude against the hard-killed cost, and `survival.csv`.
pub fn limit_sweep(cfg: &ExperimentConfig, art: &Artifacts) -> Result<()> {
    let problem = cfg.problem()?;
    let zero = ZeroControl { dim: problem.dim };
    let (n, steps, seed) = (cfg.mc.particles, cfg.mc.sim_steps, cfg.mc.seed);
    let exit = hard_kill_cost(&problem, &zero, n, steps, seed)?;
    let rows = cfg
        .sweep
        .limit_amplitudes
        .iter()
        .map(|&amp| {
            let e = estimate_cost_streaming(&problem.with_amplitude(amp), &zero, n, steps, seed)?;
            Ok(vec![
                amp.into(),
                e.value.into(),
                e.stderr.into(),
                exit.value.into(),
                exit.stderr.into(),
                (e.value - exit.value).abs().into(),
                e.stderr.hypot(exit.stderr).into(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    art.write(
        "limit_sweep.csv",
        &[
            "amplitude",
            "value",
            "stderr",
            "exit_value",
            "exit_stderr",
            "gap",
            "gap_stderr",
        ],
        rows,
    )?;
    let dt = problem.horizon / steps as f64;
    let rows = exit
        .survival
        .iter()
        .enumerate()
        .step_by(cfg.output.time_stride)
        .map(|(k, s)| vec![(k as f64 * dt).into(), (*s).into()])
        .collect();
    art.write("survival.csv", &["t", "survival"], rows)?;
    Ok(())
}

/// `certificate.csv`: the short-time constants, whether the smallness
/// condition holds, and the contraction rate measured by the solver.
pub fn certify(cfg: &ExperimentConfig, art: &Artifacts) -> Result<()> {
    let problem = cfg.problem()?;
    let grid = Grid::truncation_box(&problem, cfg.solver.dx)?;
    let mut cert = shorttime_certificate(&problem, &grid);
    if cfg.mode()? == Mode::Markovian {
        let sol = solve_problem(cfg, &problem, art)?;
        cert = cert.with_measured_rate(&sol);
    }
    let c = cert.constants;
    art.write(
        "certificate.csv",
        &[
            "horizon",
            "c_g",
            "c_f",
            "c_grad_f",
            "c_hess_f",
            "c_grad_v",
            "c_hess_v",
            "gamma2",
            "c3",
            "gamma3",
            "k",
            "satisfied",
            "contraction_rate",
        ],
        vec![vec![
            c.horizon.into(),
            c.c_g.into(),
            c.c_f.into(),
            c.c_grad_f.into(),
            c.c_hess_f.into(),
            c.c_grad_v.into(),
            c.c_hess_v.into(),
            cert.gamma2.into(),
            cert.c3.into(),
            cert.gamma3.into(),
            cert.k.into(),
            cert.satisfied.into(),
            cert.contraction_rate.unwrap_or(f64::NAN).into(),
        ]],
    )?;
    Ok(())
}
