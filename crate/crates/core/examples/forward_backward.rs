//! Optimal feedback of the benchmark from the coupled FPK/HJB iteration, with
//! the short-time certificate and the measured contraction.

use gibbsctrl::coupler::{fb_solve, shorttime_certificate, FbOptions, Mode};
use gibbsctrl::grid::Grid;
use gibbsctrl::model::ProblemConfig;

fn main() -> gibbsctrl::Result<()> {
    let cfg = ProblemConfig::benchmark(-1.0);
    let grid = Grid::truncation_box(&cfg, 0.02)?;
    let sol = fb_solve(&cfg, &grid, 200, Mode::Markovian, FbOptions::default())?;
    for r in &sol.residual_history {
        println!(
            "iteration {:>3}  measure {:.3e}  value {:.3e}  relaxation {}",
            r.iteration, r.measure, r.value, r.relaxation
        );
    }
    println!("cost {:.6}", sol.cost(&cfg));
    let cert = shorttime_certificate(&cfg, &grid).with_measured_rate(&sol);
    println!(
        "certificate: gamma2 {:.3e}, k {:.3e}, satisfied {}, measured rate {:?}",
        cert.gamma2, cert.k, cert.satisfied, cert.contraction_rate
    );
    let x = grid.axis(0);
    for xv in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let i = ((xv - x.lower) / x.spacing()).round() as usize;
        println!("alpha(0, {xv:+.1}) = {:+.4}", sol.control.fields[0][0].values[i]);
    }
    Ok(())
}
