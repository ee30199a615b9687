//! Normal-distribution special functions and Gauss-Legendre quadrature.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `ln Phi(x)`, accurate far into the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return normal_cdf(x).ln();
    }
    // asymptotic Mills-ratio expansion
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile, `u` in (0, 1).
pub fn normal_quantile(u: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * u);
    // one Halley step against the accurate CDF
    let pdf = normal_pdf(z);
    if pdf <= 0.0 || !z.is_finite() {
        return z;
    }
    let e = (normal_cdf(z) - u) / pdf;
    z - e / (1.0 + 0.5 * z * e)
}

/// Log-density of N(mean, var) at `z`.
pub fn gaussian_log_pdf(z: f64, mean: f64, var: f64) -> f64 {
    let d = z - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

/// Density of N(mean, var) at `z`.
pub fn gaussian_pdf(z: f64, mean: f64, var: f64) -> f64 {
    let d = z - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Order of the quantile-coupling grid used for continuous 1-D Wasserstein distances.
pub const QUANTILE_GRID_ORDER: usize = 4096;

/// Gauss-Legendre nodes and weights mapped to the unit interval (0, 1), cached.
pub fn unit_interval_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(QUANTILE_GRID_ORDER);
        (
            x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
            w.iter().map(|v| 0.5 * v).collect(),
        )
    })
}
