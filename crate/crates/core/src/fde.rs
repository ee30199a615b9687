//! Fitted distributional evaluation.
//!
//! Each iteration fits the model `Z_theta(x, a) ~ N(mu_theta(x, a), sigma_ret^2)` to the
//! single-sample backups `N(r + gamma mu_prev(x', K x'), gamma^2 sigma_ret^2)` of one data
//! fold by minimizing the mean divergence, starting from the previous fit.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{bellman_backup, Compaction, ReturnTable, TabularPolicy};
use crate::distributions::{Atomic, Gaussian1D};
use crate::divergences::{divergence_gaussian, divergence_gaussian_dmean, DivergenceKind, DivergenceSpec};
use crate::envs::{Dataset, LqrEnv, LqrTheta, LqrTransition, TabularTransition};
use crate::error::{Error, Result};
use crate::optim::{minimize, Objective, OptimizerOptions};
use crate::rng::stream;

/// Parameters of the iteration-count rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TSelectionParams {
    pub l: f64,
    pub delta: f64,
    pub c: f64,
    pub q: f64,
    pub alpha: f64,
    pub c_divide: f64,
}

impl Default for TSelectionParams {
    fn default() -> Self {
        Self {
            l: 5.0,
            delta: 1.0,
            c: 1.0,
            q: 1.0,
            alpha: 0.0,
            c_divide: 5.0,
        }
    }
}

impl TSelectionParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l >= 2.0
            && self.delta > 0.0
            && self.c > 0.0
            && self.q >= 1.0
            && self.alpha >= 0.0
            && self.c_divide > 0.0
            && self.c - 0.5 / self.q > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid T-selection parameters {self:?}")))
        }
    }
}

/// `floor(1/C_divide * 1/(c - 1/(2q)) * min(delta, 1/q)/(2(l-1) + alpha) * log_{1/gamma} N)`,
/// at least 1.
pub fn choose_t(n_total: usize, gamma: f64, p: &TSelectionParams) -> Result<usize> {
    p.validate()?;
    if n_total == 0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("choose_t needs n >= 1 and gamma in (0, 1)"));
    }
    let rate = p.delta.min(1.0 / p.q) / (2.0 * (p.l - 1.0) + p.alpha);
    let t = rate / (p.c - 0.5 / p.q) / p.c_divide * (n_total as f64).ln() / (1.0 / gamma).ln();
    Ok((t.floor() as usize).max(1))
}

/// `t` folds in input order; the last one also takes the `n mod t` leftovers.
pub fn split_dataset<T: Clone>(d: &Dataset<T>, t: usize) -> Result<Vec<Dataset<T>>> {
    let n = d.len();
    if t == 0 || n < t {
        return Err(Error::invalid(format!("cannot split {n} records into {t} folds")));
    }
    let size = n / t;
    let records = d.records();
    (0..t)
        .map(|i| {
            let end = if i + 1 == t { n } else { (i + 1) * size };
            Dataset::new(records[i * size..end].to_vec())
        })
        .collect()
}

/// Either the rule above or a fixed number of iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationCount {
    Rule(TSelectionParams),
    Fixed(usize),
}

impl Default for IterationCount {
    fn default() -> Self {
        IterationCount::Rule(TSelectionParams::default())
    }
}

impl IterationCount {
    pub fn resolve(&self, n_total: usize, gamma: f64) -> Result<usize> {
        match self {
            IterationCount::Rule(p) => choose_t(n_total, gamma, p),
            IterationCount::Fixed(0) => Err(Error::invalid("fixed iteration count must be >= 1")),
            IterationCount::Fixed(t) => Ok(*t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdeConfig {
    pub divergence: DivergenceSpec,
    pub iterations: IterationCount,
    pub optimizer: OptimizerOptions,
    pub warm_start: bool,
    /// Seed of the Monte Carlo draws used by `tvd_mc` and the likelihood baseline.
    pub seed: u64,
}

impl FdeConfig {
    pub fn new(divergence: DivergenceSpec) -> Self {
        Self {
            divergence,
            iterations: IterationCount::default(),
            optimizer: OptimizerOptions::default(),
            warm_start: true,
            seed: 0,
        }
    }

    pub fn with_iterations(mut self, t: usize) -> Self {
        self.iterations = IterationCount::Fixed(t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.divergence.validate()?;
        self.optimizer.validate()
    }
}

/// One fit of the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective at the warm start.
    pub start_value: f64,
    pub value: f64,
    pub grad_norm: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdeRun {
    pub theta: LqrTheta,
    pub trace: Vec<IterationRecord>,
}

impl FdeRun {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

enum Loss {
    Closed(DivergenceSpec),
    /// `E_Q (1 - p/q)_+` over fixed draws from each backup.
    Tvd { draws: Vec<Vec<f64>> },
    /// Gaussian negative log-likelihood of fixed backup draws.
    Likelihood { draws: Vec<Vec<f64>> },
}

/// Empirical objective of one iteration, with the backups precomputed.
pub struct FoldObjective {
    features: Vec<[f64; 12]>,
    targets: Vec<f64>,
    model_var: f64,
    target_var: f64,
    loss: Loss,
}

const CHUNK: usize = 512;

fn dot(theta: &[f64], f: &[f64; 12]) -> f64 {
    theta.iter().zip(f).map(|(a, b)| a * b).sum()
}

impl FoldObjective {
    fn build(fold: &Dataset<LqrTransition>, prev: &LqrTheta, env: &LqrEnv, loss: Loss) -> Result<Self> {
        if !prev.is_finite() {
            return Err(Error::invalid("previous parameters are not finite"));
        }
        let features = fold.iter().map(|t| LqrTheta::features(&t.x, &t.a)).collect();
        let targets = fold
            .iter()
            .map(|t| t.r + env.gamma * prev.mean(&t.x_next, &env.target_action(&t.x_next)))
            .collect();
        let model_var = env.return_variance();
        Ok(Self {
            features,
            targets,
            model_var,
            target_var: env.gamma * env.gamma * model_var,
            loss,
        })
    }

    /// Closed-form objective; `spec` must have a Gaussian closed form.
    pub fn closed(fold: &Dataset<LqrTransition>, prev: &LqrTheta, env: &LqrEnv, spec: &DivergenceSpec) -> Result<Self> {
        spec.validate()?;
        if !spec.has_gaussian_closed_form() {
            return Err(Error::unsupported(format!("{:?} has no Gaussian closed form", spec.kind)));
        }
        Self::build(fold, prev, env, Loss::Closed(*spec))
    }

    fn sampled<R: Rng + ?Sized>(
        fold: &Dataset<LqrTransition>,
        prev: &LqrTheta,
        env: &LqrEnv,
        b: usize,
        rng: &mut R,
        likelihood: bool,
    ) -> Result<Self> {
        if b == 0 {
            return Err(Error::invalid("need at least one Monte Carlo draw"));
        }
        let mut obj = Self::build(fold, prev, env, Loss::Closed(DivergenceSpec::kl()))?;
        let sd = obj.target_var.sqrt();
        let draws = obj
            .targets
            .iter()
            .map(|m| (0..b).map(|_| m + sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        obj.loss = if likelihood {
            Loss::Likelihood { draws }
        } else {
            Loss::Tvd { draws }
        };
        Ok(obj)
    }

    /// Likelihood objective over `b` backup draws per transition.
    pub fn likelihood<R: Rng + ?Sized>(
        fold: &Dataset<LqrTransition>,
        prev: &LqrTheta,
        env: &LqrEnv,
        b: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::sampled(fold, prev, env, b, rng, true)
    }

    /// Monte Carlo total-variation objective over `b` backup draws per transition.
    pub fn tvd_mc<R: Rng + ?Sized>(
        fold: &Dataset<LqrTransition>,
        prev: &LqrTheta,
        env: &LqrEnv,
        b: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::sampled(fold, prev, env, b, rng, false)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Per-transition loss and its derivative in the model mean.
    fn term(&self, i: usize, mu: f64) -> (f64, f64) {
        let (v, tv) = (self.model_var, self.target_var);
        match &self.loss {
            Loss::Closed(spec) => {
                let (Ok(p), Ok(q)) = (Gaussian1D::new(mu, v), Gaussian1D::new(self.targets[i], tv)) else {
                    return (f64::NAN, f64::NAN);
                };
                let val = divergence_gaussian(spec, &p, &q).unwrap_or(f64::NAN);
                let d = divergence_gaussian_dmean(spec, &p, &q).unwrap_or(f64::NAN);
                (val, d)
            }
            Loss::Likelihood { draws } => {
                let z = &draws[i];
                let n = z.len() as f64;
                let half_log = 0.5 * (2.0 * std::f64::consts::PI * v).ln();
                let sq: f64 = z.iter().map(|z| (z - mu) * (z - mu)).sum::<f64>() / n;
                let lin: f64 = z.iter().map(|z| mu - z).sum::<f64>() / n;
                (half_log + sq / (2.0 * v), lin / v)
            }
            Loss::Tvd { draws } => {
                // log p - log q at each draw; p is the model, q the backup
                let z = &draws[i];
                let n = z.len() as f64;
                let (mut val, mut d) = (0.0, 0.0);
                for &z in z {
                    let lr = -0.5 * (z - mu) * (z - mu) / v + 0.5 * (z - self.targets[i]).powi(2) / tv - 0.5 * (v / tv).ln();
                    let ratio = lr.exp();
                    if ratio < 1.0 {
                        val += 1.0 - ratio;
                        d -= ratio * (z - mu) / v;
                    }
                }
                (val / n, d / n)
            }
        }
    }

    fn accumulate(&self, theta: &[f64], with_grad: bool) -> (f64, [f64; 12]) {
        let n = self.len();
        let parts: Vec<(f64, [f64; 12])> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| {
                let mut v = 0.0;
                let mut g = [0.0; 12];
                for &i in idx {
                    let f = &self.features[i];
                    let (val, d) = self.term(i, dot(theta, f));
                    v += val;
                    if with_grad {
                        for k in 0..12 {
                            g[k] += d * f[k];
                        }
                    }
                }
                (v, g)
            })
            .collect();
        // fixed-order reduction keeps results independent of scheduling
        let mut v = 0.0;
        let mut g = [0.0; 12];
        for (pv, pg) in parts {
            v += pv;
            for k in 0..12 {
                g[k] += pg[k];
            }
        }
        let inv = 1.0 / n as f64;
        (v * inv, g.map(|x| x * inv))
    }

    pub fn value_at(&self, theta: &LqrTheta) -> f64 {
        self.value(&theta.to_vec())
    }
}

impl Objective for FoldObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.accumulate(x, false).0
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.accumulate(x, true).1.to_vec())
    }
}

/// Mean closed-form divergence between the model at `theta` and the backups of
/// `theta_prev` over `fold`.
pub fn fde_objective(
    fold: &Dataset<LqrTransition>,
    theta: &LqrTheta,
    theta_prev: &LqrTheta,
    env: &LqrEnv,
    spec: &DivergenceSpec,
) -> Result<f64> {
    env.validate()?;
    if !theta.is_finite() {
        return Err(Error::invalid("parameters are not finite"));
    }
    Ok(FoldObjective::closed(fold, theta_prev, env, spec)?.value_at(theta))
}

fn fit_sequence<F>(d: &Dataset<LqrTransition>, env: &LqrEnv, config: &FdeConfig, mut objective: F) -> Result<FdeRun>
where
    F: FnMut(usize, &Dataset<LqrTransition>, &LqrTheta) -> Result<FoldObjective>,
{
    env.validate()?;
    config.validate()?;
    let t_total = config.iterations.resolve(d.len(), env.gamma)?;
    let folds = split_dataset(d, t_total)?;
    let mut theta = LqrTheta::zeros();
    let mut trace = Vec::with_capacity(t_total);
    for (t, fold) in folds.iter().enumerate() {
        let iteration = t + 1;
        let obj = objective(iteration, fold, &theta)?;
        let start = if config.warm_start { theta } else { LqrTheta::zeros() };
        let m = minimize(&obj, &start.to_vec(), &config.optimizer).map_err(|e| match e {
            Error::OptimizationFailure { reason, .. } => Error::OptimizationFailure { iteration, reason },
            other => other,
        })?;
        let next = LqrTheta::from_slice(&m.x)?;
        if !next.is_finite() || !m.value.is_finite() {
            return Err(Error::OptimizationFailure {
                iteration,
                reason: "non-finite iterate".into(),
            });
        }
        trace.push(IterationRecord {
            iteration,
            start_value: obj.value_at(&start),
            value: m.value,
            grad_norm: m.grad_norm,
            evals: m.evals,
            converged: m.converged,
        });
        theta = next;
    }
    Ok(FdeRun { theta, trace })
}

/// Runs FDE from `theta_0 = 0`, one fold per iteration.
///
/// Closed-form divergences are minimized exactly as written; `tvd_mc` uses
/// `mc_samples` backup draws per transition, fixed within an iteration.
pub fn fde_run(d: &Dataset<LqrTransition>, env: &LqrEnv, config: &FdeConfig) -> Result<FdeRun> {
    let spec = config.divergence;
    fit_sequence(d, env, config, |t, fold, prev| match spec.kind {
        DivergenceKind::TvdMc => {
            let mut rng = stream(config.seed, "tvd_mc", &[t as u64]);
            FoldObjective::tvd_mc(fold, prev, env, spec.mc_samples, &mut rng)
        }
        _ => FoldObjective::closed(fold, prev, env, &spec),
    })
}

/// Fitted likelihood evaluation: the same loop, maximizing the Gaussian likelihood of
/// `mc_samples` draws from each backup. The divergence in `config` is ignored.
pub fn fle_run(d: &Dataset<LqrTransition>, env: &LqrEnv, config: &FdeConfig, mc_samples: usize) -> Result<FdeRun> {
    fit_sequence(d, env, config, |t, fold, prev| {
        let mut rng = stream(config.seed, "fle", &[t as u64]);
        FoldObjective::likelihood(fold, prev, env, mc_samples, &mut rng)
    })
}

/// Tabular FDE over an unrestricted atomic table.
///
/// For a Bregman divergence the minimizer of the mean divergence to a set of backups is
/// their mixture, so each iteration replaces every visited `(s, a)` by the average of its
/// backups from fold `t`; unvisited pairs keep the previous entry. Returns
/// `U_0, ..., U_T`.
pub fn tabular_fde_run(
    folds: &[Dataset<TabularTransition>],
    init: ReturnTable,
    pi: &TabularPolicy,
    gamma: f64,
    compaction: Compaction,
) -> Result<Vec<ReturnTable>> {
    let (ns, na) = (init.n_states(), init.n_actions());
    let mut out = vec![init];
    for fold in folds {
        let prev = out.last().expect("nonempty");
        let mut groups: Vec<Vec<&TabularTransition>> = vec![Vec::new(); ns * na];
        for tr in fold.iter() {
            if tr.s >= ns || tr.a >= na || tr.sp >= ns {
                return Err(Error::invalid(format!("transition {tr:?} outside the table")));
            }
            groups[tr.s * na + tr.a].push(tr);
        }
        let entries = groups
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                if g.is_empty() {
                    return Ok(prev.entries()[i].clone());
                }
                let w = 1.0 / g.len() as f64;
                let mut loc = Vec::new();
                let mut mass = Vec::new();
                for tr in g {
                    let b = bellman_backup(tr.r, tr.sp, prev, pi, gamma)?;
                    loc.extend_from_slice(b.locations());
                    mass.extend(b.masses().iter().map(|m| m * w));
                }
                Ok(compaction.compact(Atomic::from_raw(1, loc, mass)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ReturnTable::new(ns, na, entries)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::KernelSpec;
    use crate::envs::{lqr_collect, lqr_collect_with_radius};
    use crate::optim::{central_difference, GradientMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn closed_specs() -> Vec<DivergenceSpec> {
        vec![
            DivergenceSpec::cramer(),
            DivergenceSpec::energy(),
            DivergenceSpec::mmd(KernelSpec::Rbf { bandwidth: 1.0 }),
            DivergenceSpec::mmd(KernelSpec::Laplace { bandwidth: 1.0 }),
            DivergenceSpec::pdf_l2(),
            DivergenceSpec::kl(),
        ]
    }

    fn one(x: [f64; 2], a: [f64; 2], r: f64, xn: [f64; 2]) -> Dataset<LqrTransition> {
        Dataset::new(vec![LqrTransition { x, a, r, x_next: xn }]).unwrap()
    }

    /// `E|mu_a - mu_b|` over fresh behavior draws.
    fn mean_gap(a: &LqrTheta, b: &LqrTheta, seed: u64) -> f64 {
        let env = LqrEnv::default();
        let d = lqr_collect(&env, 4000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        d.iter().map(|t| (a.mean(&t.x, &t.a) - b.mean(&t.x, &t.a)).abs()).sum::<f64>() / d.len() as f64
    }

    #[test]
    fn t_rule() {
        let p = TSelectionParams::default();
        assert_eq!(choose_t(1000, 0.99, &p).unwrap(), 34);
        assert_eq!(choose_t(2, 0.5, &p).unwrap(), 1);
        let half = TSelectionParams { c_divide: 10.0, ..p };
        assert_eq!(choose_t(1000, 0.99, &half).unwrap(), 17);
        assert_eq!(choose_t(300, 0.99, &p).unwrap(), 28);
        let bad = TSelectionParams { c: 0.4, ..p };
        assert!(choose_t(1000, 0.99, &bad).is_err());
    }

    #[test]
    fn splitting() {
        let d = Dataset::new((0..1000).collect::<Vec<_>>()).unwrap();
        let f = split_dataset(&d, 34).unwrap();
        assert_eq!(f.len(), 34);
        assert!(f[..33].iter().all(|x| x.len() == 29));
        assert_eq!(f[33].len(), 43);
        let joined: Vec<i32> = f.iter().flat_map(|x| x.records().to_vec()).collect();
        assert_eq!(joined, d.records());
        let small = Dataset::new((0..10).collect::<Vec<_>>()).unwrap();
        assert_eq!(split_dataset(&small, 1).unwrap()[0].len(), 10);
        assert!(split_dataset(&small, 10).unwrap().iter().all(|x| x.len() == 1));
        assert!(matches!(split_dataset(&small, 11), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kl_objective_single_transition() {
        let env = LqrEnv::default();
        let fold = one([0.3, -0.2], [0.1, 0.4], 1.0, [0.5, 0.5]);
        let z = LqrTheta::zeros();
        let v = fde_objective(&fold, &z, &z, &env, &DivergenceSpec::kl()).unwrap();
        // -ln(0.99)
        assert!((v - 0.010_050_335_853_501_4).abs() < 1e-12, "{v}");
    }

    #[test]
    fn pdf_l2_objective_positive_at_matched_mean() {
        let env = LqrEnv::default();
        let fold = one([1.0, 0.0], [0.0, 0.0], 2.5, [0.0, 0.0]);
        let theta = LqrTheta::from_slice(&[2.5, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.]).unwrap();
        let v = fde_objective(&fold, &theta, &LqrTheta::zeros(), &env, &DivergenceSpec::pdf_l2()).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn objective_is_mean_of_terms_and_permutation_invariant() {
        let env = LqrEnv::default();
        let star = crate::envs::lqr_true_params(&env, 1e-12).unwrap();
        let d = lqr_collect(&env, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let spec = DivergenceSpec::energy();
        let v = fde_objective(&d, &star, &star, &env, &spec).unwrap();
        let manual: f64 = d
            .iter()
            .map(|t| {
                let p = Gaussian1D::new(star.mean(&t.x, &t.a), env.return_variance()).unwrap();
                let b = t.r + env.gamma * star.mean(&t.x_next, &env.target_action(&t.x_next));
                let q = Gaussian1D::new(b, env.gamma * env.gamma * env.return_variance()).unwrap();
                divergence_gaussian(&spec, &p, &q).unwrap()
            })
            .sum::<f64>()
            / 64.0;
        assert!((v - manual).abs() < 1e-12);
        let mut rev = d.records().to_vec();
        rev.reverse();
        let w = fde_objective(&Dataset::new(rev).unwrap(), &star, &star, &env, &spec).unwrap();
        assert!((v - w).abs() < 1e-12);
    }

    #[test]
    fn non_finite_theta_rejected() {
        let env = LqrEnv::default();
        let fold = one([1.0, 0.0], [0.0, 0.0], 1.0, [0.0, 0.0]);
        let mut bad = LqrTheta::zeros();
        bad.m1[(0, 0)] = f64::NAN;
        let z = LqrTheta::zeros();
        assert!(fde_objective(&fold, &bad, &z, &env, &DivergenceSpec::kl()).is_err());
        assert!(matches!(
            fde_objective(&fold, &z, &z, &env, &DivergenceSpec::tvd_mc()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let env = LqrEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = lqr_collect(&env, 50, &mut rng).unwrap();
        let prev = crate::envs::lqr_true_params(&env, 1e-10).unwrap();
        for spec in closed_specs() {
            let obj = FoldObjective::closed(&d, &prev, &env, &spec).unwrap();
            for _ in 0..20 {
                let theta: Vec<f64> = prev.to_vec().iter().map(|v| v + rng.random_range(-20.0..20.0)).collect();
                let g = obj.gradient(&theta).unwrap();
                let fd = central_difference(&obj, &theta, 1e-5);
                let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-4 * scale, "{:?}: {a} vs {b}", spec.kind);
                }
            }
        }
    }

    #[test]
    fn single_fit_recovers_one_step_map() {
        let env = LqrEnv::default();
        let d = lqr_collect(&env, 10_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let cfg = FdeConfig::new(DivergenceSpec::kl()).with_iterations(1);
        let run = fde_run(&d, &env, &cfg).unwrap();
        let target = LqrTheta::zeros().bellman_map(&env);
        assert!(mean_gap(&run.theta, &target, 99) <= 0.05);
        assert!(run.trace[0].value <= run.trace[0].start_value + 1e-12);
    }

    #[test]
    fn population_minimizer_is_the_fixed_point() {
        let env = LqrEnv::default();
        let star = crate::envs::lqr_true_params(&env, 1e-12).unwrap();
        let d = lqr_collect(&env, 100_000, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let opts = OptimizerOptions {
            gradient: GradientMode::Analytic,
            ..Default::default()
        };
        for spec in closed_specs() {
            let obj = FoldObjective::closed(&d, &star, &env, &spec).unwrap();
            let m = minimize(&obj, &vec![0.0; 12], &opts).unwrap();
            let fit = LqrTheta::from_slice(&m.x).unwrap();
            let gap = mean_gap(&fit, &star, 21);
            assert!(gap <= 0.05, "{:?}: {gap}", spec.kind);
        }
    }

    #[test]
    fn zero_design_leaves_parameters_at_warm_start() {
        let env = LqrEnv::default();
        let d = lqr_collect_with_radius(&env, 20, &mut ChaCha8Rng::seed_from_u64(1), Some(0.0)).unwrap();
        let obj = FoldObjective::closed(&d, &LqrTheta::zeros(), &env, &DivergenceSpec::kl()).unwrap();
        let start: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let g = obj.gradient(&start).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        let m = minimize(&obj, &start, &OptimizerOptions::default()).unwrap();
        assert_eq!(m.x, start);
    }

    #[test]
    fn trace_never_worse_than_warm_start_and_deterministic() {
        let env = LqrEnv::default();
        let d = lqr_collect(&env, 300, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for spec in [DivergenceSpec::pdf_l2(), DivergenceSpec::tvd_mc()] {
            let cfg = FdeConfig::new(spec);
            let a = fde_run(&d, &env, &cfg).unwrap();
            assert_eq!(a.iterations(), 28);
            assert!(a.trace.iter().all(|r| r.value <= r.start_value + 1e-12));
            assert_eq!(a, fde_run(&d, &env, &cfg).unwrap());
        }
    }

    #[test]
    fn likelihood_with_one_draw_is_plain_nll() {
        let env = LqrEnv::default();
        let fold = one([0.5, 0.5], [0.2, -0.1], 0.7, [0.1, 0.0]);
        let z = LqrTheta::zeros();
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let obj = FoldObjective::likelihood(&fold, &z, &env, 1, &mut r1).unwrap();
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let draw = 0.7 + env.gamma * env.return_variance().sqrt() * r2.sample::<f64, _>(StandardNormal);
        let theta = LqrTheta::from_slice(&[1.0; 12]).unwrap();
        let mu = theta.mean(&[0.5, 0.5], &[0.2, -0.1]);
        let nll = -crate::special::gaussian_log_pdf(draw, mu, env.return_variance());
        assert!((obj.value_at(&theta) - nll).abs() < 1e-12);
    }

    #[test]
    fn likelihood_argmin_approaches_kl_argmin() {
        let env = LqrEnv::default();
        let fold = one([0.6, -0.3], [0.2, 0.5], 1.5, [0.2, 0.1]);
        let z = LqrTheta::zeros();
        let b = 10_000;
        // one transition: both objectives depend on theta only through the mean
        let kl = FoldObjective::closed(&fold, &z, &env, &DivergenceSpec::kl()).unwrap();
        let fle = FoldObjective::likelihood(&fold, &z, &env, b, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let argmin = |o: &FoldObjective| {
            let mut best = (f64::INFINITY, 0.0);
            for k in -2000..=2000 {
                let mu = 1.5 + k as f64 * 1e-3;
                let v = o.term(0, mu).0;
                if v < best.0 {
                    best = (v, mu);
                }
            }
            best.1
        };
        assert!((argmin(&kl) - 1.5).abs() < 1e-12);
        // the likelihood argmin is the mean of the draws
        let se = env.gamma * env.return_variance().sqrt() / (b as f64).sqrt();
        assert!((argmin(&kl) - argmin(&fle)).abs() <= 3.0 * se);
    }

    #[test]
    fn tabular_fde_single_loop() {
        let pi = TabularPolicy::uniform(1, 1);
        let data = Dataset::new(vec![TabularTransition { s: 0, a: 0, r: 1.0, sp: 0 }; 3]).unwrap();
        let out = tabular_fde_run(&[data.clone(), data], ReturnTable::zeros(1, 1), &pi, 0.5, Compaction::default()).unwrap();
        assert_eq!(out.len(), 3);
        assert!((out[2].get(0, 0).mean()[0] - 1.5).abs() < 1e-15);
    }
}
