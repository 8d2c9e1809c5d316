//! Oracles shared by the integration tests. Nothing here calls into the
//! library's estimators, so agreement is a real cross-check.
#![allow(dead_code)]

/// `X_0 exp((b − a²/2)t + a W_t) (1+v)^{N_t} exp(−v λ t)` for constant coefficients.
pub fn doleans(x0: f64, a: f64, b: f64, v: f64, lambda: f64, t: f64, w_t: f64, n_t: usize) -> f64 {
    x0 * ((b - 0.5 * a * a) * t + a * w_t - v * lambda * t).exp() * (1.0 + v).powi(n_t as i32)
}

/// `E|N(0, σ²)|^{2p} = σ^{2p} (2p − 1)!!` for integer `p`.
pub fn gaussian_abs_moment(sigma2: f64, p: u32) -> f64 {
    let double_factorial: f64 = (1..=p).map(|k| (2 * k - 1) as f64).product();
    sigma2.powi(p as i32) * double_factorial
}

/// Backward grid recursion `U_{k-1} = U_k − c tanh(U_{k-1}) Δ`, solved by bisection.
pub fn tanh_backward(c: f64, terminal: f64, dt: f64, steps: usize) -> Vec<f64> {
    let mut u = vec![0.0; steps + 1];
    u[steps] = terminal;
    for k in (1..=steps).rev() {
        let target = u[k];
        let (mut lo, mut hi) = (target - c.abs() * dt - 1.0, target + c.abs() * dt + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + c * dt * mid.tanh() - target > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        u[k - 1] = 0.5 * (lo + hi);
    }
    u
}

/// Continuum solution of `dU/dr = c tanh(U)` run backward from `U(T) = terminal` to `r`
/// (RK4 on a fine step).
pub fn tanh_backward_ode(c: f64, terminal: f64, span: f64) -> f64 {
    let n = 20_000;
    let h = span / n as f64;
    let f = |u: f64| -c * u.tanh();
    let mut u = terminal;
    for _ in 0..n {
        let k1 = f(u);
        let k2 = f(u + 0.5 * h * k1);
        let k3 = f(u + 0.5 * h * k2);
        let k4 = f(u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u
}

/// Sample mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn rel_err(x: f64, exact: f64) -> f64 {
    (x - exact).abs() / exact.abs().max(1e-300)
}
