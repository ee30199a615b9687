//! Inaccuracy of estimated return distributions against ground truth.

use serde::{Deserialize, Serialize};

use crate::bellman::ReturnTable;
use crate::distributions::Distribution;
use crate::envs::{DpiSample, LqrTheta, StateAction};
use crate::error::{Error, Result};
use crate::metrics::{metric_extension, ExtensionSpec, MetricSpec};

/// One experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InaccuracyReport {
    pub method: String,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    /// `NaN` when the fit failed.
    pub inaccuracy: f64,
    pub t_used: usize,
    pub runtime_ms: f64,
    pub failed: bool,
}

/// Expectation-extended `W_p` (with `q = p`) between two LQR models.
///
/// Both models share the return variance, so each `W_p` is the mean gap `|mu - mu*|`.
pub fn lqr_inaccuracy(theta: &LqrTheta, theta_star: &LqrTheta, dpi: &DpiSample<StateAction>, p: f64) -> Result<f64> {
    if dpi.is_empty() || dpi.points.len() != dpi.weights.len() {
        return Err(Error::invalid("occupancy sample is empty or mis-weighted"));
    }
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("order {p} must be >= 1")));
    }
    let s: f64 = dpi
        .points
        .iter()
        .zip(&dpi.weights)
        .map(|((x, a), w)| w * (theta.mean(x, a) - theta_star.mean(x, a)).abs().powf(2.0 * p))
        .sum();
    Ok(s.powf(0.5 / p))
}

fn as_distributions(t: &ReturnTable) -> Vec<Distribution> {
    t.entries().iter().cloned().map(Distribution::Atomic).collect()
}

/// Extended metric between two return tables of the same shape.
pub fn table_distance(metric: &MetricSpec, ext: &ExtensionSpec, a: &ReturnTable, b: &ReturnTable) -> Result<f64> {
    if a.n_states() != b.n_states() || a.n_actions() != b.n_actions() {
        return Err(Error::invalid("tables are indexed differently"));
    }
    metric_extension(metric, ext, &as_distributions(a), &as_distributions(b))
}

/// `W_p` expectation-extended with order `q` and the given pair weights.
pub fn tabular_inaccuracy(u_hat: &ReturnTable, u_true: &ReturnTable, weights: &[f64], p: f64, q: f64) -> Result<f64> {
    let ext = ExtensionSpec::expectation(q, weights.to_vec())?;
    table_distance(&MetricSpec::wasserstein(p)?, &ext, u_hat, u_true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Atomic, Gaussian1D};
    use crate::envs::{estimate_dpi_lqr, lqr_true_params, LqrEnv};
    use crate::metrics::wasserstein_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lqr_zero_and_linear_perturbation() {
        let env = LqrEnv::default();
        let star = lqr_true_params(&env, 1e-12).unwrap();
        let dpi = estimate_dpi_lqr(&env, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(lqr_inaccuracy(&star, &star, &dpi, 1.0).unwrap(), 0.0);
        let mut bumped = star;
        bumped.m1 += nalgebra::Matrix2::identity() * 0.3;
        let one = DpiSample::uniform(vec![([1.0, 0.0], [1.0, 0.0])]);
        assert!((lqr_inaccuracy(&bumped, &star, &one, 1.0).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn lqr_matches_quantile_integral() {
        let env = LqrEnv::default();
        let star = lqr_true_params(&env, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = LqrTheta::from_slice(&star.to_vec().iter().map(|v| v + rng.random_range(-3.0..3.0)).collect::<Vec<_>>()).unwrap();
        let dpi = estimate_dpi_lqr(&env, 40, &mut rng).unwrap();
        let v = env.return_variance();
        let brute: f64 = dpi
            .points
            .iter()
            .zip(&dpi.weights)
            .map(|((x, a), w)| {
                let p = Distribution::Gaussian(Gaussian1D::new(theta.mean(x, a), v).unwrap());
                let q = Distribution::Gaussian(Gaussian1D::new(star.mean(x, a), v).unwrap());
                w * wasserstein_1d(1.0, &p, &q).unwrap().powi(2)
            })
            .sum::<f64>()
            .sqrt();
        let fast = lqr_inaccuracy(&theta, &star, &dpi, 1.0).unwrap();
        assert!((brute - fast).abs() < 1e-6, "{brute} vs {fast}");
        let mut rev = dpi.clone();
        rev.points.reverse();
        assert!((lqr_inaccuracy(&theta, &star, &rev, 1.0).unwrap() - fast).abs() < 1e-12);
    }

    #[test]
    fn tabular_cases() {
        let a = ReturnTable::new(1, 1, vec![Atomic::point(0.0)]).unwrap();
        let b = ReturnTable::new(1, 1, vec![Atomic::point(1.0)]).unwrap();
        assert_eq!(tabular_inaccuracy(&a, &a, &[1.0], 1.0, 1.0).unwrap(), 0.0);
        assert!((tabular_inaccuracy(&a, &b, &[1.0], 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let c = ReturnTable::new(1, 2, vec![Atomic::point(0.0), Atomic::point(0.0)]).unwrap();
        assert!(tabular_inaccuracy(&a, &c, &[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn tabular_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let table = |rng: &mut ChaCha8Rng| {
            let e = (0..6).map(|_| crate::metrics::random_atomic(rng, 5, -2.0, 2.0)).collect();
            ReturnTable::new(3, 2, e).unwrap()
        };
        for _ in 0..10 {
            let (u, v) = (table(&mut rng), table(&mut rng));
            let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let w: Vec<f64> = raw.iter().map(|x| x / raw.iter().sum::<f64>()).collect();
            let got = tabular_inaccuracy(&u, &v, &w, 2.0, 2.0).unwrap();
            let mut s = 0.0;
            for i in 0..6 {
                let d = crate::metrics::wasserstein_atomic(2.0, &u.entries()[i], &v.entries()[i]).unwrap();
                s += w[i] * d.powi(4);
            }
            assert!((got - s.powf(0.25)).abs() < 1e-12);
        }
    }
}
