//! Value function without a potential against the Gauss-Legendre reference.

use gibbsctrl::control::ZeroControl;
use gibbsctrl::fpk::{solve_fpk, FpkOptions};
use gibbsctrl::grid::{Axis, Grid};
use gibbsctrl::hjb::oracle::heat_value;
use gibbsctrl::hjb::{solve_hjb_nonlocal, HjbOptions};
use gibbsctrl::model::{Potential, ProblemConfig};

fn main() -> gibbsctrl::Result<()> {
    let cfg = ProblemConfig::benchmark(0.0).with_potential(Potential::constant(1, 0.0));
    let grid = Grid::new_1d(Axis::with_spacing(-8.0, 8.0, 0.01)?);
    let flow = solve_fpk(&cfg, &ZeroControl { dim: 1 }, &grid, 1000, FpkOptions::default())?;
    let vf = solve_hjb_nonlocal(&flow, &cfg, HjbOptions::default())?;
    println!("{:>6} {:>6} {:>12} {:>12}", "t", "x", "u", "reference");
    for n in [0, 500, 900] {
        for x in [-2.0, -0.5, 0.0, 0.5, 2.0] {
            let i = ((x - grid.axis(0).lower) / grid.spacing(0)).round() as usize;
            let exact = heat_value(f64::abs, cfg.sigma, 1.0 - flow.times[n], x, &[0.0]);
            println!(
                "{:>6.2} {:>6.2} {:>12.6} {:>12.6}",
                flow.times[n], x, vf.u[n].values[i], exact
            );
        }
    }
    Ok(())
}
