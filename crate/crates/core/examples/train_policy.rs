//! Trains a Markovian and an extended policy from the same start and compares
//! their test costs on common particles.

use gibbsctrl::model::ProblemConfig;
use gibbsctrl::particle::estimate_cost_streaming;
use gibbsctrl::policy::{a_dependence_metric, init_policy, train, PolicyClass, Probe, TrainOptions};

fn main() -> gibbsctrl::Result<()> {
    let cfg = ProblemConfig::benchmark(-1.0);
    let opts = TrainOptions {
        iterations: 300,
        steps: 20,
        learning_rate: 1e-2,
        decay: 0.995,
        ..TrainOptions::default()
    };
    for class in [PolicyClass::Markovian, PolicyClass::Extended] {
        let report = train(&init_policy(class, &cfg, 0), &cfg, opts)?;
        let test = estimate_cost_streaming(&cfg, &report.policy, 1000, opts.steps, 99)?;
        println!(
            "{class:?}: loss {:.4} -> {:.4}, test {:.4} +- {:.4}",
            report.losses[0],
            report.losses.last().unwrap(),
            test.value,
            test.stderr
        );
        if class == PolicyClass::Extended {
            let m = a_dependence_metric(&report.policy, &cfg, &Probe::uniform(&cfg, 10, 21, 11))?;
            println!("a-dependence {m:.3}");
        }
    }
    Ok(())
}
