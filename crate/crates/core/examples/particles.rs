//! Self-normalized particle costs for growing potential amplitudes against
//! the hard-killed conditional cost.

use gibbsctrl::control::ZeroControl;
use gibbsctrl::model::ProblemConfig;
use gibbsctrl::particle::{estimate_cost_streaming, hard_kill_cost};

fn main() -> gibbsctrl::Result<()> {
    let cfg = ProblemConfig::benchmark(-0.5);
    let zero = ZeroControl { dim: 1 };
    let (n, steps, seed) = (20_000, 500, 1);
    let exit = hard_kill_cost(&cfg, &zero, n, steps, seed)?;
    println!(
        "hard killing: {:.4} +- {:.4}, survival {:.3}",
        exit.value,
        exit.stderr,
        exit.survival.last().unwrap()
    );
    for amp in [1.0, 5.0, 25.0, 125.0] {
        let e = estimate_cost_streaming(&cfg.with_amplitude(amp), &zero, n, steps, seed)?;
        println!("amplitude {amp:>5}: {:.4} +- {:.4}", e.value, e.stderr);
    }
    Ok(())
}
