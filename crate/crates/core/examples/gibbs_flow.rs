//! Gibbs-conditioned flow of the uncontrolled benchmark: the killing weight
//! drains mass outside D and the conditioned law stays concentrated near D.

use gibbsctrl::control::ZeroControl;
use gibbsctrl::fpk::{solve_fpk, FpkOptions};
use gibbsctrl::grid::Grid;
use gibbsctrl::model::ProblemConfig;

fn main() -> gibbsctrl::Result<()> {
    let cfg = ProblemConfig::benchmark(-1.0);
    let grid = Grid::truncation_box(&cfg, 0.02)?;
    let flow = solve_fpk(&cfg, &ZeroControl { dim: 1 }, &grid, 200, FpkOptions::default())?;
    let xs: Vec<f64> = grid.axis(0).coords();
    println!("{:>6} {:>10} {:>10} {:>12}", "t", "mean", "in D", "log mass");
    for n in (0..=flow.steps()).step_by(40) {
        let mean = flow.bracket(n, &xs);
        let inside: Vec<f64> = xs.iter().map(|x| (x.abs() <= 1.0) as u8 as f64).collect();
        println!(
            "{:>6.2} {:>10.4} {:>10.4} {:>12.4}",
            flow.times[n],
            mean,
            flow.bracket(n, &inside),
            flow.log_gamma_mass[n]
        );
    }
    Ok(())
}
