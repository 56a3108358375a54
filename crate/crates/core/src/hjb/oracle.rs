//! Quadrature reference for the uncontrolled-potential value function.
//!
//! With `V = 0` and `f~ = 0` the value solves
//! `du + sigma^2/2 Lap u - |grad u|^2 / 2 = 0`, so
//! `u(t, x) = -sigma^2 log E[exp(-g(x + sigma W_tau) / sigma^2)]` with
//! `tau = T - t`. The expectation is evaluated with composite Gauss-Legendre
//! panels on the standard normal variable, split at the kinks of `g`.

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; order];
    let mut w = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..order {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = order as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[order - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[order - 1 - i] = w[i];
    }
    (x, w)
}

/// `-sigma^2 log E exp(-g(x + sigma sqrt(tau) Z) / sigma^2)` for standard
/// normal `Z`. `kinks` lists points where `g` is not smooth.
pub fn heat_value(g: impl Fn(f64) -> f64, sigma: f64, tau: f64, x: f64, kinks: &[f64]) -> f64 {
    if tau <= 0.0 {
        return g(x);
    }
    let scale = sigma * tau.sqrt();
    let half = 12.0;
    let panels = 96;
    let mut cuts: Vec<f64> = (0..=panels)
        .map(|i| -half + 2.0 * half * i as f64 / panels as f64)
        .collect();
    for k in kinks {
        let z = (k - x) / scale;
        if z.abs() < half {
            cuts.push(z);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (nodes, weights) = gauss_legendre(24);
    let s2 = sigma * sigma;
    let mut terms = Vec::with_capacity(cuts.len() * nodes.len());
    for c in cuts.windows(2) {
        let (a, b) = (c[0], c[1]);
        let (mid, rad) = (0.5 * (a + b), 0.5 * (b - a));
        for (z0, w0) in nodes.iter().zip(&weights) {
            let z = mid + rad * z0;
            terms.push((w0 * rad).ln() - 0.5 * z * z - g(x + scale * z) / s2);
        }
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    let log_e = top + sum.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    -s2 * log_e
}
