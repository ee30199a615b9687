use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution as _, Geometric, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, LqrTransition};
use super::tabular::DpiSample;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// Number of rotation angles available to the behavior policy.
pub const N_ROTATIONS: usize = 5;

/// State-action pair of the LQR benchmark.
pub type StateAction = ([f64; 2], [f64; 2]);

/// Linear dynamics `x' = A x + B a` with quadratic reward `x'Qx + a'Ra + N(0, sigma0^2)`
/// and target policy `a = K x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrEnv {
    pub a: Matrix2<f64>,
    pub b: Matrix2<f64>,
    pub q: Matrix2<f64>,
    pub r: Matrix2<f64>,
    pub k: Matrix2<f64>,
    pub sigma0: f64,
    pub gamma: f64,
}

impl Default for LqrEnv {
    fn default() -> Self {
        Self {
            a: Matrix2::new(0.6, 0.0, 0.0, 0.8),
            b: Matrix2::new(0.2, 0.0, 0.0, 0.1),
            q: Matrix2::new(4.0, 1.0, 1.0, 4.0),
            r: Matrix2::new(2.0, 1.0, 1.0, 2.0),
            k: Matrix2::identity(),
            sigma0: 1.0,
            gamma: 0.99,
        }
    }
}

impl LqrEnv {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.q, self.r, self.k]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("LQR matrices must be finite"));
        }
        if !(self.sigma0 > 0.0) || !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid("LQR needs sigma0 > 0 and gamma in [0, 1)"));
        }
        Ok(())
    }

    /// Variance of the return noise, `sigma0^2 / (1 - gamma^2)`.
    pub fn return_variance(&self) -> f64 {
        self.sigma0 * self.sigma0 / (1.0 - self.gamma * self.gamma)
    }

    pub fn step(&self, x: &[f64; 2], a: &[f64; 2]) -> [f64; 2] {
        let n = self.a * v(x) + self.b * v(a);
        [n[0], n[1]]
    }

    pub fn mean_reward(&self, x: &[f64; 2], a: &[f64; 2]) -> f64 {
        let (x, a) = (v(x), v(a));
        x.dot(&(self.q * x)) + a.dot(&(self.r * a))
    }

    pub fn target_action(&self, x: &[f64; 2]) -> [f64; 2] {
        let a = self.k * v(x);
        [a[0], a[1]]
    }

    /// Spectral radius of the closed-loop matrix `A + B K`.
    pub fn closed_loop_radius(&self) -> f64 {
        let m = self.a + self.b * self.k;
        // eigenvalues of a real 2x2 matrix
        let tr = m.trace();
        let det = m.determinant();
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
        } else {
            det.abs().sqrt()
        }
    }
}

fn v(x: &[f64; 2]) -> Vector2<f64> {
    Vector2::new(x[0], x[1])
}

/// Rotation by `2 pi k / 5`.
pub fn rotation(k: usize) -> Matrix2<f64> {
    let t = 2.0 * PI * k as f64 / N_ROTATIONS as f64;
    Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos())
}

/// Parameters of the quadratic-mean Gaussian return model
/// `Z(x, a) = x'M1x + a'M2x + a'M3a + N(0, sigma_ret^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrTheta {
    pub m1: Matrix2<f64>,
    pub m2: Matrix2<f64>,
    pub m3: Matrix2<f64>,
}

impl LqrTheta {
    pub fn zeros() -> Self {
        Self {
            m1: Matrix2::zeros(),
            m2: Matrix2::zeros(),
            m3: Matrix2::zeros(),
        }
    }

    pub fn mean(&self, x: &[f64; 2], a: &[f64; 2]) -> f64 {
        let (x, a) = (v(x), v(a));
        x.dot(&(self.m1 * x)) + a.dot(&(self.m2 * x)) + a.dot(&(self.m3 * a))
    }

    /// Row-major `M1, M2, M3` entries.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(12);
        for m in [&self.m1, &self.m2, &self.m3] {
            for i in 0..2 {
                for j in 0..2 {
                    out.push(m[(i, j)]);
                }
            }
        }
        out
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() != 12 {
            return Err(Error::invalid(format!("theta needs 12 entries, got {}", p.len())));
        }
        let m = |o: usize| Matrix2::new(p[o], p[o + 1], p[o + 2], p[o + 3]);
        Ok(Self {
            m1: m(0),
            m2: m(4),
            m3: m(8),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    /// Features such that `mean(x, a) = <to_vec(), features(x, a)>`.
    pub fn features(x: &[f64; 2], a: &[f64; 2]) -> [f64; 12] {
        let mut f = [0.0; 12];
        for i in 0..2 {
            for j in 0..2 {
                f[2 * i + j] = x[i] * x[j];
                f[4 + 2 * i + j] = a[i] * x[j];
                f[8 + 2 * i + j] = a[i] * a[j];
            }
        }
        f
    }

    pub fn max_abs_diff(&self, other: &LqrTheta) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean parameters of `T^pi Z_theta` for the deterministic target `a = K x`.
    pub fn bellman_map(&self, env: &LqrEnv) -> LqrTheta {
        let (a, b, k, g) = (env.a, env.b, env.k, env.gamma);
        let n = self.m1 + k.transpose() * self.m2 + k.transpose() * self.m3 * k;
        LqrTheta {
            m1: env.q + a.transpose() * n * a * g,
            m2: b.transpose() * (n + n.transpose()) * a * g,
            m3: env.r + b.transpose() * n * b * g,
        }
    }
}

/// Fixed point of the parameter Bellman map, iterated from zero.
pub fn lqr_true_params(env: &LqrEnv, tol: f64) -> Result<LqrTheta> {
    lqr_true_params_from(env, tol, LqrTheta::zeros())
}

pub fn lqr_true_params_from(env: &LqrEnv, tol: f64, start: LqrTheta) -> Result<LqrTheta> {
    env.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let rho = env.closed_loop_radius();
    if env.gamma * rho * rho >= 1.0 {
        return Err(Error::invalid(format!(
            "gamma * rho(A + BK)^2 = {} >= 1: the return is unbounded",
            env.gamma * rho * rho
        )));
    }
    const MAX_ITERS: usize = 1_000_000;
    let mut theta = start;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let next = theta.bellman_map(env);
        change = next.max_abs_diff(&theta);
        theta = next;
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(theta);
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERS,
        residual: change,
    })
}

fn behavior_draw<R: Rng + ?Sized>(rng: &mut R, radius: Option<f64>) -> ([f64; 2], usize) {
    let r = radius.unwrap_or_else(|| rng.random::<f64>());
    let t = rng.random::<f64>() * 2.0 * PI;
    let k = rng.random_range(0..N_ROTATIONS);
    ([r * t.cos(), r * t.sin()], k)
}

fn rotate(k: usize, x: &[f64; 2]) -> [f64; 2] {
    let a = rotation(k) * v(x);
    [a[0], a[1]]
}

/// `n` transitions under the rotation behavior policy from states uniform on the unit disk
/// in polar coordinates (radius and angle uniform).
pub fn lqr_collect<R: Rng + ?Sized>(env: &LqrEnv, n: usize, rng: &mut R) -> Result<Dataset<LqrTransition>> {
    lqr_collect_with_radius(env, n, rng, None)
}

/// As [`lqr_collect`], optionally forcing every state radius to `radius`.
pub fn lqr_collect_with_radius<R: Rng + ?Sized>(
    env: &LqrEnv,
    n: usize,
    rng: &mut R,
    radius: Option<f64>,
) -> Result<Dataset<LqrTransition>> {
    env.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    let base: u64 = rng.random();
    let noise = Normal::new(0.0, env.sigma0).map_err(|e| Error::invalid(e.to_string()))?;
    let records = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(base, "transition", &[i]);
            let (x, k) = behavior_draw(&mut r, radius);
            let a = rotate(k, &x);
            LqrTransition {
                x,
                a,
                r: env.mean_reward(&x, &a) + noise.sample(&mut r),
                x_next: env.step(&x, &a),
            }
        })
        .collect();
    Dataset::new(records)
}

/// Draws from the normalized discounted occupancy of the target policy: a geometric
/// horizon `H`, then `H - 1` target-policy steps from a behavior-distributed start.
pub fn estimate_dpi_lqr<R: Rng + ?Sized>(env: &LqrEnv, n_points: usize, rng: &mut R) -> Result<DpiSample<StateAction>> {
    env.validate()?;
    if n_points == 0 {
        return Err(Error::invalid("n_points must be >= 1"));
    }
    let horizon = Geometric::new(1.0 - env.gamma).map_err(|e| Error::invalid(e.to_string()))?;
    let points = (0..n_points)
        .map(|_| {
            let (mut x, k) = behavior_draw(rng, None);
            let mut a = rotate(k, &x);
            let h = horizon.sample(rng) + 1;
            for _ in 1..h {
                x = env.step(&x, &a);
                a = env.target_action(&x);
            }
            (x, a)
        })
        .collect();
    Ok(DpiSample::uniform(points))
}

/// Monte Carlo mean and standard error of an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Discounted return from the pair `start`, following the target policy after the
/// first action, averaged over `n_traj` simulated trajectories of `horizon` steps.
pub fn lqr_discounted_return_mc(
    env: &LqrEnv,
    start: StateAction,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<McEstimate> {
    env.validate()?;
    if n_traj < 2 {
        return Err(Error::invalid("need at least two trajectories"));
    }
    let (sum, sum_sq) = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(derive_seed(seed, "rollout", &[]), "trajectory", &[i]);
            let (mut x, mut a) = start;
            let mut disc = 1.0;
            let mut ret = 0.0;
            for _ in 0..horizon {
                let e: f64 = StandardNormal.sample(&mut rng);
                ret += disc * (env.mean_reward(&x, &a) + env.sigma0 * e);
                x = env.step(&x, &a);
                a = env.target_action(&x);
                disc *= env.gamma;
            }
            (ret, ret * ret)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_traj as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    Ok(McEstimate {
        mean,
        std_err: (var.max(0.0) / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rollouts_match_true_params_at_an_off_policy_action() {
        let env = LqrEnv {
            gamma: 0.5,
            ..LqrEnv::default()
        };
        let star = lqr_true_params(&env, 1e-12).unwrap();
        let start = ([0.7, -0.4], [1.0, 0.3]);
        let mc = lqr_discounted_return_mc(&env, start, 20_000, 80, 3).unwrap();
        let exact = star.mean(&start.0, &start.1);
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_err, "{mc:?} vs {exact}");
        assert!(lqr_discounted_return_mc(&env, start, 1, 80, 3).is_err());
    }

    #[test]
    fn true_params_for_myopic_discount() {
        let env = LqrEnv {
            gamma: 0.0,
            ..LqrEnv::default()
        };
        let t = lqr_true_params(&env, 1e-12).unwrap();
        assert_eq!(t.m1, env.q);
        assert_eq!(t.m2, Matrix2::zeros());
        assert_eq!(t.m3, env.r);
    }

    #[test]
    fn true_params_are_a_fixed_point() {
        let env = LqrEnv::default();
        let t = lqr_true_params(&env, 1e-12).unwrap();
        assert!(t.bellman_map(&env).max_abs_diff(&t) <= 1e-12);
    }

    #[test]
    fn true_params_do_not_depend_on_the_start() {
        let env = LqrEnv::default();
        let base = lqr_true_params(&env, 1e-13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let random: Vec<f64> = (0..12).map(|_| rng.random_range(-0.5..0.5)).collect();
        for start in [
            LqrTheta {
                m1: env.q,
                m2: Matrix2::zeros(),
                m3: env.r,
            },
            LqrTheta::from_slice(&random).unwrap(),
        ] {
            let t = lqr_true_params_from(&env, 1e-13, start).unwrap();
            assert!(t.max_abs_diff(&base) <= 1e-10);
        }
    }

    #[test]
    fn unstable_closed_loop_is_rejected() {
        let env = LqrEnv {
            a: Matrix2::new(1.5, 0.0, 0.0, 0.8),
            ..LqrEnv::default()
        };
        assert!(matches!(lqr_true_params(&env, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn mapped_mean_is_exactly_quadratic() {
        let env = LqrEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
            let theta = LqrTheta::from_slice(&p).unwrap();
            let mapped = theta.bellman_map(&env);
            let mut rows = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..100 {
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let xn = env.step(&x, &a);
                let y = env.mean_reward(&x, &a) + env.gamma * theta.mean(&xn, &env.target_action(&xn));
                assert!((mapped.mean(&x, &a) - y).abs() <= 1e-10 * (1.0 + y.abs()));
                rows.extend(LqrTheta::features(&x, &a));
                ys.push(y);
            }
            let design = DMatrix::from_row_slice(100, 12, &rows);
            let y = DVector::from_vec(ys);
            let fit = design.clone().svd(true, true).solve(&y, 1e-12).unwrap();
            let resid = (design * fit - &y).amax();
            assert!(resid <= 1e-10 * (1.0 + y.amax()));
        }
    }

    #[test]
    fn collect_examples() {
        let env = LqrEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = lqr_collect_with_radius(&env, 1, &mut rng, Some(0.0)).unwrap();
        let t = d.records()[0];
        assert_eq!(t.x_next, [0.0, 0.0]);
        assert_eq!(t.x.iter().map(|v| v.abs()).sum::<f64>(), 0.0);

        let d = lqr_collect(&env, 100_000, &mut rng).unwrap();
        let mean_norm = d.iter().map(|t| (t.x[0].powi(2) + t.x[1].powi(2)).sqrt()).sum::<f64>() / 1e5;
        assert!((mean_norm - 0.5).abs() < 0.01);
        let mut counts = [0usize; N_ROTATIONS];
        for t in d.iter() {
            let k = (0..N_ROTATIONS)
                .min_by(|&i, &j| {
                    let e = |k: usize| {
                        let a = rotate(k, &t.x);
                        (a[0] - t.a[0]).abs() + (a[1] - t.a[1]).abs()
                    };
                    e(i).total_cmp(&e(j))
                })
                .unwrap();
            counts[k] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.2).abs() < 0.01);
        }
        // transitions follow the dynamics
        for t in d.iter().take(100) {
            let xn = env.step(&t.x, &t.a);
            assert_eq!(xn, t.x_next);
        }
    }

    #[test]
    fn zero_state_reward_is_pure_noise() {
        let env = LqrEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = lqr_collect_with_radius(&env, 20_000, &mut rng, Some(0.0)).unwrap();
        let n = d.len() as f64;
        let mean = d.iter().map(|t| t.r).sum::<f64>() / n;
        let var = d.iter().map(|t| (t.r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn collection_is_deterministic() {
        let env = LqrEnv::default();
        let a = lqr_collect(&env, 500, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = lqr_collect(&env, 500, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn features_reproduce_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let theta = LqrTheta::from_slice(&p).unwrap();
        assert_eq!(theta.to_vec(), p);
        let (x, a) = ([0.3, -0.7], [1.1, 0.4]);
        let f = LqrTheta::features(&x, &a);
        let dot: f64 = p.iter().zip(f).map(|(u, v)| u * v).sum();
        assert!((dot - theta.mean(&x, &a)).abs() < 1e-14);
    }

    #[test]
    fn myopic_occupancy_is_the_behavior_law() {
        let env = LqrEnv {
            gamma: 0.0,
            ..LqrEnv::default()
        };
        let s = estimate_dpi_lqr(&env, 200, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for (x, a) in &s.points {
            let r = (x[0].powi(2) + x[1].powi(2)).sqrt();
            assert!(r <= 1.0);
            assert!((0..N_ROTATIONS).any(|k| {
                let b = rotate(k, x);
                (b[0] - a[0]).abs() + (b[1] - a[1]).abs() < 1e-12
            }));
        }
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
