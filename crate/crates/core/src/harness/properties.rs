//! Randomized checks of the structural guarantees: contraction of the extended
//! metrics, the Bregman minimizer property, the metric constants, closed-form
//! divergences, the energy/Wasserstein sandwich and the error telescoping bound.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution as _, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bellman::{apply_bellman_with, dpi_exact, Compaction, ReturnTable, TabularMDP, TabularPolicy};
use crate::distributions::{Atomic, Gaussian1D, GaussianMixture1D, MixtureComponent};
use crate::divergences::{
    divergence_gaussian, divergence_gmm_closed, energy_distance_atomic, kl_gmm_quadrature, DivergenceKind, DivergenceSpec,
    KernelSpec,
};
use crate::envs::{tabular_collect, tabular_make_random};
use crate::error::{Error, Result};
use crate::evaluation::table_distance;
use crate::fde::{split_dataset, tabular_fde_run};
use crate::metrics::{
    contraction_factor, random_atomic, slc_property_check, wasserstein_atomic, ExtensionSpec, MetricKind, MetricSpec,
};
use crate::rng::{stream, StreamRng};
use crate::special::gaussian_log_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Contraction,
    Minimizer,
    Slc,
    ClosedForms,
    Sandwich,
    Telescoping,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Contraction,
        Suite::Minimizer,
        Suite::Slc,
        Suite::ClosedForms,
        Suite::Sandwich,
        Suite::Telescoping,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Contraction => "contraction",
            Suite::Minimizer => "minimizer",
            Suite::Slc => "slc",
            Suite::ClosedForms => "closed_forms",
            Suite::Sandwich => "sandwich",
            Suite::Telescoping => "telescoping",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub case: usize,
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: usize,
    pub counterexamples: Vec<Counterexample>,
    /// Summary figures worth printing alongside the verdict.
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite, seed: u64) -> Self {
        Self {
            suite,
            seed,
            checks: 0,
            counterexamples: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }

    /// Records the check `lhs <= rhs`.
    fn le(&mut self, case: usize, check: impl Into<String>, lhs: f64, rhs: f64) {
        self.checks += 1;
        if !(lhs <= rhs) {
            self.counterexamples.push(Counterexample {
                case,
                check: check.into(),
                lhs,
                rhs,
            });
        }
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{} seed={} {}: {} checks, {} counterexamples",
            self.suite,
            self.seed,
            verdict,
            self.checks,
            self.counterexamples.len()
        )?;
        for n in &self.notes {
            write!(f, "\n  {n}")?;
        }
        for c in self.counterexamples.iter().take(10) {
            write!(f, "\n  case {} {}: {} > {}", c.case, c.check, c.lhs, c.rhs)?;
        }
        Ok(())
    }
}

pub fn run_property_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Contraction => contraction_suite(seed, 100),
        Suite::Minimizer => minimizer_suite(seed),
        Suite::Slc => slc_suite(seed, false),
        Suite::ClosedForms => closed_form_suite(seed, 100, 1_000_000),
        Suite::Sandwich => sandwich_suite(seed, 500),
        Suite::Telescoping => telescoping_suite(seed, 20),
    }
}

fn random_policy(rng: &mut StreamRng, ns: usize, na: usize) -> Result<TabularPolicy> {
    let rows = (0..ns).map(|_| simplex(rng, na)).collect();
    TabularPolicy::new(rows)
}

fn simplex(rng: &mut StreamRng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let drift = 1.0 - p.iter().sum::<f64>();
    p[0] += drift;
    p
}

fn random_table(rng: &mut StreamRng, ns: usize, na: usize) -> Result<ReturnTable> {
    let entries = (0..ns * na).map(|_| random_atomic(rng, 4, -5.0, 5.0)).collect();
    ReturnTable::new(ns, na, entries)
}

const CONTRACTION_SLACK: f64 = 1e-9;

/// One exact Bellman application to random table pairs; the supremum-`W_1` and the
/// `d_pi`-weighted expectation-`W_p` (q = p) extensions must shrink by their factors.
pub fn contraction_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let results = (0..cases)
        .into_par_iter()
        .map(|case| -> Result<Vec<(String, f64, f64)>> {
            let mut rng = stream(seed, "contraction", &[case as u64]);
            let ns = rng.random_range(2..=4);
            let na = rng.random_range(1..=3);
            let gamma = rng.random_range(0.05..0.99);
            let mdp = tabular_make_random(ns, na, rng.random_range(1..=3), gamma, &mut rng)?;
            let pi = random_policy(&mut rng, ns, na)?;
            let (u, v) = (random_table(&mut rng, ns, na)?, random_table(&mut rng, ns, na)?);
            let rho = simplex(&mut rng, ns * na);
            let d = dpi_exact(&mdp, &pi, &rho)?;
            let (tu, tv) = (
                apply_bellman_with(&u, &mdp, &pi, Compaction::None)?,
                apply_bellman_with(&v, &mdp, &pi, Compaction::None)?,
            );
            let mut out = Vec::new();
            let w1 = MetricSpec::wasserstein(1.0)?;
            let zeta = contraction_factor(&w1, &ExtensionSpec::Supremum, gamma)?;
            out.push((
                "sup W1".to_string(),
                table_distance(&w1, &ExtensionSpec::Supremum, &tu, &tv)?,
                zeta * table_distance(&w1, &ExtensionSpec::Supremum, &u, &v)? + CONTRACTION_SLACK,
            ));
            for p in [1.0, 2.0] {
                let m = MetricSpec::wasserstein(p)?;
                let ext = ExtensionSpec::expectation(p, d.clone())?;
                let zeta = contraction_factor(&m, &ext, gamma)?;
                if (zeta - gamma.powf(1.0 - 0.5 / p)).abs() > 1e-15 {
                    return Err(Error::invalid("contraction factor disagrees with gamma^(1 - 1/(2p))"));
                }
                out.push((
                    format!("expectation W{p}"),
                    table_distance(&m, &ext, &tu, &tv)?,
                    zeta * table_distance(&m, &ext, &u, &v)? + CONTRACTION_SLACK,
                ));
            }
            Ok(out)
        })
        .collect::<Vec<_>>();
    let mut report = SuiteReport::new(Suite::Contraction, seed);
    for (case, r) in results.into_iter().enumerate() {
        for (check, lhs, rhs) in r? {
            report.le(case, check, lhs, rhs);
        }
    }
    Ok(report)
}

/// `r + gamma Z` for a mixture `Z`.
fn shift_mixture(z: &GaussianMixture1D, r: f64, gamma: f64, weight: f64) -> Vec<MixtureComponent> {
    z.components()
        .iter()
        .map(|c| MixtureComponent::new(weight * c.weight, r + gamma * c.mean, gamma * gamma * c.variance))
        .collect()
}

fn mixture_of(parts: Vec<MixtureComponent>) -> Result<GaussianMixture1D> {
    let total: f64 = parts.iter().map(|c| c.weight).sum();
    GaussianMixture1D::new(
        parts
            .into_iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| MixtureComponent::new(c.weight / total, c.mean, c.variance))
            .collect(),
    )
}

fn random_mixture(rng: &mut StreamRng, k: usize) -> Result<GaussianMixture1D> {
    let w = simplex(rng, k);
    mixture_of(
        w.into_iter()
            .map(|w| MixtureComponent::new(w, rng.random_range(-2.0..2.0), rng.random_range(0.3..1.5)))
            .collect(),
    )
}

fn mixture_divergence(spec: &DivergenceSpec, model: &GaussianMixture1D, target: &GaussianMixture1D) -> Result<f64> {
    match spec.kind {
        DivergenceKind::Kl => Ok(kl_gmm_quadrature(model, target)),
        _ => divergence_gmm_closed(spec, model, target),
    }
}

fn minimizer_specs() -> Vec<(&'static str, DivergenceSpec)> {
    vec![
        ("cramer", DivergenceSpec::cramer()),
        ("energy", DivergenceSpec::energy()),
        ("rbf", DivergenceSpec::mmd(KernelSpec::Rbf { bandwidth: 1.0 })),
        ("laplace", DivergenceSpec::mmd(KernelSpec::Laplace { bandwidth: 1.0 })),
        ("pdf_l2", DivergenceSpec::pdf_l2()),
        ("kl", DivergenceSpec::kl()),
    ]
}

/// Smallest gap between a competitor's population objective and that of the
/// Bellman target that still counts as a strict win.
const MINIMIZER_MARGIN: f64 = 1e-9;

/// On a 2-state, 2-action MDP with a Gaussian-mixture table, the exact population
/// objective `sum_{s,a} rho(s,a) E[d(U(s,a), Psi(r, s'))]` over a candidate set must be
/// smallest at `T^pi U~`, for every Bregman divergence.
pub fn minimizer_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = stream(seed, "minimizer", &[]);
    let (ns, na, gamma) = (2, 2, 0.8);
    let mdp = tabular_make_random(ns, na, 2, gamma, &mut rng)?;
    let pi = random_policy(&mut rng, ns, na)?;
    let tilde: Vec<GaussianMixture1D> = (0..ns * na).map(|_| random_mixture(&mut rng, 2)).collect::<Result<_>>()?;
    // backups per (s, a): (probability, Psi)
    let mut backups: Vec<Vec<(f64, GaussianMixture1D)>> = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            let row = mdp
                .outcomes(s, a)
                .iter()
                .filter(|o| o.prob > 0.0)
                .map(|o| {
                    let parts = (0..na)
                        .flat_map(|a2| shift_mixture(&tilde[o.next_state * na + a2], o.reward, gamma, pi.prob(o.next_state, a2)))
                        .collect();
                    Ok((o.prob, mixture_of(parts)?))
                })
                .collect::<Result<Vec<_>>>()?;
            backups.push(row);
        }
    }
    let target: Vec<GaussianMixture1D> = backups
        .iter()
        .map(|row| {
            mixture_of(
                row.iter()
                    .flat_map(|(p, m)| m.components().iter().map(move |c| MixtureComponent::new(p * c.weight, c.mean, c.variance)))
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;

    // competitor tables
    let map = |f: &dyn Fn(usize, &GaussianMixture1D) -> Result<GaussianMixture1D>| -> Result<Vec<GaussianMixture1D>> {
        target.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    };
    let mut candidates: Vec<(String, Vec<GaussianMixture1D>)> = vec![("previous table".into(), tilde.clone())];
    for delta in [-0.3, -0.05, 0.05, 0.3] {
        candidates.push((
            format!("shift {delta}"),
            map(&|_, t| mixture_of(shift_mixture(t, delta, 1.0, 1.0)))?,
        ));
    }
    for scale in [0.8, 1.25] {
        candidates.push((
            format!("variance x{scale}"),
            map(&|_, t| {
                mixture_of(
                    t.components()
                        .iter()
                        .map(|c| MixtureComponent::new(c.weight, c.mean, c.variance * scale))
                        .collect(),
                )
            })?,
        ));
    }
    candidates.push((
        "moment-matched Gaussian".into(),
        map(&|_, t| mixture_of(vec![MixtureComponent::new(1.0, t.mean(), t.variance())]))?,
    ));
    candidates.push((
        "most likely backup".into(),
        map(&|i, _| {
            Ok(backups[i]
                .iter()
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .expect("nonempty row")
                .1
                .clone())
        })?,
    ));
    candidates.push((
        "tilted outcome weights".into(),
        map(&|i, _| {
            let row = &backups[i];
            let parts = row
                .iter()
                .enumerate()
                .flat_map(|(k, (p, m))| {
                    let w = p * (1.0 + 0.5 * (k as f64 - 0.5 * (row.len() as f64 - 1.0)) / row.len() as f64);
                    m.components().iter().map(move |c| MixtureComponent::new(w * c.weight, c.mean, c.variance)).collect::<Vec<_>>()
                })
                .collect();
            mixture_of(parts)
        })?,
    ));
    candidates.push((
        "10% standard normal contamination".into(),
        map(&|_, t| {
            let mut parts: Vec<MixtureComponent> = t
                .components()
                .iter()
                .map(|c| MixtureComponent::new(0.9 * c.weight, c.mean, c.variance))
                .collect();
            parts.push(MixtureComponent::new(0.1, 0.0, 1.0));
            mixture_of(parts)
        })?,
    ));
    for k in 0..5 {
        let table = (0..ns * na).map(|_| random_mixture(&mut rng, 3)).collect::<Result<_>>()?;
        candidates.push((format!("random table {k}"), table));
    }

    let rho = 1.0 / (ns * na) as f64;
    let objective = |spec: &DivergenceSpec, table: &[GaussianMixture1D]| -> Result<f64> {
        let mut total = 0.0;
        for (i, row) in backups.iter().enumerate() {
            for (p, psi) in row {
                total += rho * p * mixture_divergence(spec, &table[i], psi)?;
            }
        }
        Ok(total)
    };
    let mut report = SuiteReport::new(Suite::Minimizer, seed);
    for (name, spec) in minimizer_specs() {
        let best = objective(&spec, &target)?;
        let mut margin = f64::INFINITY;
        for (label, table) in &candidates {
            let v = objective(&spec, table)?;
            margin = margin.min(v - best);
            // a competitor must be worse by a strict margin
            report.le(0, format!("{name} vs {label}"), best + MINIMIZER_MARGIN, v);
        }
        report.notes.push(format!("{name}: objective at target {best:.6e}, smallest margin {margin:.3e}"));
    }
    Ok(report)
}

/// Metric constants of the Wasserstein, energy-MMD and Cramér metrics; with
/// `negative_control` a Wasserstein metric is also checked with a wrong scale
/// exponent, which must produce counterexamples.
pub fn slc_suite(seed: u64, negative_control: bool) -> Result<SuiteReport> {
    let mut metrics = vec![
        ("W1", MetricSpec::wasserstein(1.0)?),
        ("W2", MetricSpec::wasserstein(2.0)?),
        ("energy MMD", MetricSpec::mmd(KernelSpec::energy())?),
        ("Cramer", MetricSpec::cramer()),
    ];
    if negative_control {
        metrics.push(("W1 with c = 2", MetricSpec::new(MetricKind::Wasserstein { p: 1.0 }, 2.0, 1.0)));
    }
    let mut report = SuiteReport::new(Suite::Slc, seed);
    for (i, (name, m)) in metrics.into_iter().enumerate() {
        let r = slc_property_check(&m, 200, &mut stream(seed, "slc", &[i as u64]))?;
        report.checks += 3 * r.trials;
        for v in r.violations {
            report.counterexamples.push(Counterexample {
                case: v.trial,
                check: format!("{name} {:?}", v.property),
                lhs: v.lhs,
                rhs: v.rhs,
            });
        }
    }
    Ok(report)
}

/// Independent Monte Carlo estimate and standard error of `d(P, Q)`.
fn gaussian_mc(spec: &DivergenceSpec, p: &Gaussian1D, q: &Gaussian1D, n: usize, seed: u64) -> (f64, f64) {
    const BLOCK: usize = 1 << 14;
    let blocks = n.div_ceil(BLOCK);
    let (sum, sum_sq) = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, "mc", &[b as u64]);
            let m = BLOCK.min(n - b * BLOCK);
            let draw = |g: &Gaussian1D, rng: &mut StreamRng| g.mean() + g.std_dev() * rng.sample::<f64, _>(StandardNormal);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let h = match spec.kind {
                    DivergenceKind::Mmd { .. } | DivergenceKind::Cramer => {
                        // Cramer is half the energy MMD^2
                        let (kernel, scale) = match spec.kind {
                            DivergenceKind::Mmd { kernel } => (kernel, 1.0),
                            _ => (KernelSpec::energy(), 0.5),
                        };
                        let (x, x2, y, y2) = (draw(p, &mut rng), draw(p, &mut rng), draw(q, &mut rng), draw(q, &mut rng));
                        let k = |a: f64, b: f64| kernel.at_distance((a - b).abs());
                        scale * (k(x, x2) + k(y, y2) - k(x, y2) - k(x2, y))
                    }
                    DivergenceKind::PdfL2 => {
                        let (x, y) = (draw(p, &mut rng), draw(q, &mut rng));
                        let diff = |z: f64| p.pdf(z) - q.pdf(z);
                        diff(x) - diff(y)
                    }
                    DivergenceKind::Kl => {
                        let y = draw(q, &mut rng);
                        gaussian_log_pdf(y, q.mean(), q.variance()) - gaussian_log_pdf(y, p.mean(), p.variance())
                    }
                    DivergenceKind::TvdMc => unreachable!("excluded from the suite"),
                };
                s += h;
                s2 += h * h;
            }
            (s, s2)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Closed-form Gaussian divergences against independent Monte Carlo estimates
/// (within 3 standard errors), plus two exact reference values.
pub fn closed_form_suite(seed: u64, pairs: usize, samples: usize) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::ClosedForms, seed);
    let kl = divergence_gaussian(&DivergenceSpec::kl(), &Gaussian1D::new(0.0, 1.0)?, &Gaussian1D::new(1.0, 1.0)?)?;
    report.le(0, "|KL(N(1,1) || N(0,1)) - 0.5|", (kl - 0.5).abs(), 1e-9);
    let e = divergence_gaussian(&DivergenceSpec::energy(), &Gaussian1D::new(0.0, 1.0)?, &Gaussian1D::new(2.0, 1.0)?)?;
    report.le(0, "|energy MMD^2(N(0,1), N(2,1)) - 1.94426|", (e - 1.94426).abs(), 1e-3);
    for (di, (name, spec)) in minimizer_specs().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for case in 0..pairs {
            let mut rng = stream(seed, "closed_forms", &[di as u64, case as u64]);
            let p = Gaussian1D::new(rng.random_range(-3.0..3.0), rng.random_range(0.25..4.0))?;
            let q = Gaussian1D::new(rng.random_range(-3.0..3.0), rng.random_range(0.25..4.0))?;
            let closed = divergence_gaussian(&spec, &p, &q)?;
            let (mc, se) = gaussian_mc(&spec, &p, &q, samples, rng.random());
            worst = worst.max((closed - mc).abs() / se);
            report.le(case, format!("{name}: |closed - MC| vs 3 SE"), (closed - mc).abs(), 3.0 * se);
        }
        report.notes.push(format!("{name}: largest |closed - MC| / SE = {worst:.2}"));
    }
    Ok(report)
}

const SANDWICH_SLACK: f64 = 1e-9;

/// `E <= 2 W_1 <= 2 W_p` and `2 W_p^{2p} / (b - a)^{2p-1} <= E` on random atomic pairs
/// supported in `[a, b]`, for `p` in {1, 2, 3}.
pub fn sandwich_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Sandwich, seed);
    for case in 0..cases {
        let mut rng = stream(seed, "sandwich", &[case as u64]);
        let lo = rng.random_range(-5.0..0.0);
        let hi = lo + rng.random_range(0.1..6.0);
        let (p, q): (Atomic, Atomic) = (random_atomic(&mut rng, 6, lo, hi), random_atomic(&mut rng, 6, lo, hi));
        let energy = energy_distance_atomic(&p, &q)?;
        let w1 = wasserstein_atomic(1.0, &p, &q)?;
        report.le(case, "E <= 2 W1", energy, 2.0 * w1 + SANDWICH_SLACK);
        for order in [1.0, 2.0, 3.0] {
            let wp = wasserstein_atomic(order, &p, &q)?;
            report.le(case, format!("2 W1 <= 2 W{order}"), 2.0 * w1, 2.0 * wp + SANDWICH_SLACK);
            let lower = 2.0 / (hi - lo).powf(2.0 * order - 1.0) * wp.powf(2.0 * order);
            report.le(case, format!("lower bound p={order}"), lower, energy + SANDWICH_SLACK);
        }
    }
    Ok(report)
}

const TELESCOPING_SLACK: f64 = 1e-6;

/// Certified approximation of the return table: iterate with grid compaction, then
/// bound the `sup W_1` distance to the true fixed point by `sup W_1(U, T U) / (1 - gamma)`
/// with `T U` computed without compaction.
fn certified_fixed_point(mdp: &TabularMDP, pi: &TabularPolicy, spacing: f64) -> Result<(ReturnTable, f64)> {
    let grid = Compaction::Grid { spacing };
    let mut u = ReturnTable::zeros(mdp.n_states(), mdp.n_actions());
    let mut best: Option<(ReturnTable, f64)> = None;
    for _ in 0..10_000 {
        let next = apply_bellman_with(&u, mdp, pi, grid)?;
        let step = next.sup_w1(&u)?;
        u = next;
        if step > 2.0 * spacing {
            continue;
        }
        let exact = apply_bellman_with(&u, mdp, pi, Compaction::None)?;
        let bound = u.sup_w1(&exact)? / (1.0 - mdp.gamma());
        match &best {
            // stalled at the compaction floor
            Some((_, b)) if bound > 0.9 * b => break,
            _ => best = Some((u.clone(), bound)),
        }
    }
    best.ok_or(Error::NonConvergence {
        iterations: 10_000,
        residual: f64::NAN,
    })
}

/// On random tabular FDE runs with the exact operator available,
/// `W(U_T, U_pi) <= sum_t zeta^{T-t} W(U_t, T U_{t-1}) + zeta^T W(U_0, U_pi)` for the
/// supremum and `d_pi`-weighted extensions of `W_1`. The reference table is
/// approximate with a certified error `eps`, which is charged against the bound:
/// the check is `W(U_T, U^) + eps <= ... + zeta^T (W(U_0, U^) - eps) + slack`.
pub fn telescoping_suite(seed: u64, runs: usize) -> Result<SuiteReport> {
    let results = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<(Vec<(String, f64, f64)>, f64)> {
            let mut rng = stream(seed, "telescoping", &[run as u64]);
            let ns = rng.random_range(2..=3);
            let na = 2;
            let gamma = rng.random_range(0.3..0.7);
            let mdp = tabular_make_random(ns, na, 2, gamma, &mut rng)?;
            let pi = random_policy(&mut rng, ns, na)?;
            let behavior = TabularPolicy::uniform(ns, na);
            let data = tabular_collect(&mdp, &behavior, 240, &mut rng)?;
            let t = 6;
            let folds = split_dataset(&data, t)?;
            let range = 1.0 / (1.0 - gamma);
            let iterates = tabular_fde_run(
                &folds,
                ReturnTable::zeros(ns, na),
                &pi,
                gamma,
                Compaction::Grid { spacing: 1e-4 * range },
            )?;
            let (truth, eps) = certified_fixed_point(&mdp, &pi, 1e-5 * range)?;
            let rho = crate::bellman::uniform_state_rho(ns, &behavior);
            let d = dpi_exact(&mdp, &pi, &rho)?;
            let w1 = MetricSpec::wasserstein(1.0)?;
            let mut out = Vec::new();
            for (label, ext) in [
                ("sup W1", ExtensionSpec::Supremum),
                ("d_pi-weighted W1", ExtensionSpec::expectation(1.0, d)?),
            ] {
                let zeta = contraction_factor(&w1, &ext, gamma)?;
                let dist = |a: &ReturnTable, b: &ReturnTable| table_distance(&w1, &ext, a, b);
                let mut rhs = 0.0;
                for k in 1..=t {
                    let exact = apply_bellman_with(&iterates[k - 1], &mdp, &pi, Compaction::None)?;
                    rhs += zeta.powi((t - k) as i32) * dist(&iterates[k], &exact)?;
                }
                rhs += zeta.powi(t as i32) * (dist(&iterates[0], &truth)? - eps);
                let lhs = dist(&iterates[t], &truth)? + eps;
                out.push((label.to_string(), lhs, rhs + TELESCOPING_SLACK));
            }
            Ok((out, eps))
        })
        .collect::<Vec<_>>();
    let mut report = SuiteReport::new(Suite::Telescoping, seed);
    let mut worst_eps: f64 = 0.0;
    for (run, r) in results.into_iter().enumerate() {
        let (checks, eps) = r?;
        worst_eps = worst_eps.max(eps);
        for (check, lhs, rhs) in checks {
            report.le(run, check, lhs, rhs);
        }
    }
    report.notes.push(format!("largest certified reference error {worst_eps:.2e}"));
    Ok(report)
}
