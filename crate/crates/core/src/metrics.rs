//! Evaluation metrics, their extensions over a finite state-action index set, and
//! randomized checks of scale sensitivity, location insensitivity and convexity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{Atomic, Distribution};
use crate::divergences::{cramer_atomic, divergence_gmm_closed, mmd_squared_atomic, DivergenceSpec, KernelSpec};
use crate::error::{Error, Result};
use crate::special::unit_interval_rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    Wasserstein { p: f64 },
    Mmd { kernel: KernelSpec },
    Cramer,
}

/// A probability metric together with its scale exponent `c` and convexity order `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub c: f64,
    pub q: f64,
}

impl MetricSpec {
    /// `W_p` with `c = 1`, `q = p`.
    pub fn wasserstein(p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::invalid(format!("Wasserstein order {p} must be finite and >= 1")));
        }
        Ok(Self {
            kind: MetricKind::Wasserstein { p },
            c: 1.0,
            q: p,
        })
    }

    /// Energy MMD with `c = beta/2`, `q = 1`. Other kernels are not scale sensitive.
    pub fn mmd(kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        match kernel {
            KernelSpec::Energy { beta } => Ok(Self {
                kind: MetricKind::Mmd { kernel },
                c: beta / 2.0,
                q: 1.0,
            }),
            other => Err(Error::unsupported(format!(
                "kernel {other:?} has no scale-sensitivity constant"
            ))),
        }
    }

    /// Cramér `l_2` with `c = 1/2`, `q = 2`.
    pub fn cramer() -> Self {
        Self {
            kind: MetricKind::Cramer,
            c: 0.5,
            q: 2.0,
        }
    }

    /// Arbitrary constants, e.g. to test that a wrong `c` is detected.
    pub fn new(kind: MetricKind, c: f64, q: f64) -> Self {
        Self { kind, c, q }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            MetricKind::Wasserstein { p } if !(p >= 1.0) || !p.is_finite() => {
                Err(Error::invalid(format!("Wasserstein order {p} must be finite and >= 1")))
            }
            MetricKind::Mmd { kernel } => kernel.validate(),
            _ => Ok(()),
        }
    }

    /// `eta(P, Q)` between two 1-D atomic laws, exact.
    pub fn between_atomic(&self, p: &Atomic, q: &Atomic) -> Result<f64> {
        self.validate()?;
        match self.kind {
            MetricKind::Wasserstein { p: order } => wasserstein_atomic(order, p, q),
            MetricKind::Mmd { kernel } => Ok(mmd_squared_atomic(&kernel, p, q)?.sqrt()),
            MetricKind::Cramer => Ok(cramer_atomic(p, q)?.sqrt()),
        }
    }

    /// `eta(P, Q)` for any pair of 1-D laws the metric can evaluate.
    pub fn between(&self, p: &Distribution, q: &Distribution) -> Result<f64> {
        self.validate()?;
        match self.kind {
            MetricKind::Wasserstein { p: order } => wasserstein_1d(order, p, q),
            _ => {
                if let (Some(a), Some(b)) = (as_atomic(p), as_atomic(q)) {
                    return self.between_atomic(&a, &b);
                }
                let spec = match self.kind {
                    MetricKind::Mmd { kernel } => DivergenceSpec::mmd(kernel),
                    _ => DivergenceSpec::cramer(),
                };
                let to_gmm = |d: &Distribution| match d {
                    Distribution::Gaussian(g) => Ok((*g).into()),
                    Distribution::Mixture(m) => Ok(m.clone()),
                    _ => Err(Error::unsupported(format!(
                        "metric between {} and {}",
                        p.family(),
                        q.family()
                    ))),
                };
                Ok(divergence_gmm_closed(&spec, &to_gmm(p)?, &to_gmm(q)?)?.sqrt())
            }
        }
    }
}

fn as_atomic(d: &Distribution) -> Option<Atomic> {
    match d {
        Distribution::Atomic(a) => Some(a.clone()),
        Distribution::Empirical(e) => Some(e.to_atomic()),
        _ => None,
    }
}

/// Exact `W_p` between 1-D atomic laws by the monotone (quantile) coupling.
pub fn wasserstein_atomic(p: f64, a: &Atomic, b: &Atomic) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::unsupported("Wasserstein distance between multi-dimensional laws"));
    }
    let (sa, sb) = (a.sorted_1d(), b.sorted_1d());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (sa[0].1, sb[0].1);
    let mut total = 0.0;
    loop {
        let m = ra.min(rb);
        let gap = (sa[i].0 - sb[j].0).abs();
        total += m * if p == 1.0 { gap } else { gap.powf(p) };
        ra -= m;
        rb -= m;
        if ra <= 0.0 {
            i += 1;
            if i == sa.len() {
                break;
            }
            ra = sa[i].1;
        }
        if rb <= 0.0 {
            j += 1;
            if j == sb.len() {
                break;
            }
            rb = sb[j].1;
        }
    }
    Ok(if p == 1.0 { total } else { total.powf(1.0 / p) })
}

/// `W_p` between 1-D laws.
///
/// Atomic and empirical pairs use the exact coupling; anything involving a
/// Gaussian or mixture integrates `|F_P^-1 - F_Q^-1|^p` on a Gauss-Legendre grid.
pub fn wasserstein_1d(p: f64, a: &Distribution, b: &Distribution) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("Wasserstein order {p} must be finite and >= 1")));
    }
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::unsupported("Wasserstein distance between multi-dimensional laws"));
    }
    if let (Some(x), Some(y)) = (as_atomic(a), as_atomic(b)) {
        return wasserstein_atomic(p, &x, &y);
    }
    let (nodes, weights) = unit_interval_rule();
    let mut total = 0.0;
    for (u, w) in nodes.iter().zip(weights) {
        let gap = (a.quantile(*u)? - b.quantile(*u)?).abs();
        total += w * gap.powf(p);
    }
    Ok(total.powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExtensionSpec {
    Supremum,
    Expectation { q: f64, weights: Vec<f64> },
}

impl ExtensionSpec {
    pub fn expectation(q: f64, weights: Vec<f64>) -> Result<Self> {
        let ext = ExtensionSpec::Expectation { q, weights };
        ext.validate()?;
        Ok(ext)
    }

    fn validate(&self) -> Result<()> {
        if let ExtensionSpec::Expectation { q, weights } = self {
            if !(*q >= 1.0) {
                return Err(Error::invalid(format!("extension order {q} must be >= 1")));
            }
            let total: f64 = weights.iter().sum();
            if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("extension weights sum to {total}, not 1")));
            }
        }
        Ok(())
    }
}

/// Aggregate per-index metric values: max, or `(sum w eta^{2q})^{1/(2q)}`.
pub fn extend_values(ext: &ExtensionSpec, values: &[f64]) -> Result<f64> {
    ext.validate()?;
    match ext {
        ExtensionSpec::Supremum => Ok(values.iter().copied().fold(0.0, f64::max)),
        ExtensionSpec::Expectation { q, weights } => {
            if weights.len() != values.len() {
                return Err(Error::invalid(format!(
                    "{} weights for {} index pairs",
                    weights.len(),
                    values.len()
                )));
            }
            let s: f64 = weights
                .iter()
                .zip(values)
                .map(|(w, v)| w * v.powf(2.0 * q))
                .sum();
            Ok(s.powf(1.0 / (2.0 * q)))
        }
    }
}

/// Extended metric between two tables indexed identically.
pub fn metric_extension(
    metric: &MetricSpec,
    ext: &ExtensionSpec,
    u1: &[Distribution],
    u2: &[Distribution],
) -> Result<f64> {
    if u1.len() != u2.len() {
        return Err(Error::invalid(format!(
            "tables have {} and {} entries",
            u1.len(),
            u2.len()
        )));
    }
    let values = u1
        .iter()
        .zip(u2)
        .map(|(a, b)| metric.between(a, b))
        .collect::<Result<Vec<_>>>()?;
    extend_values(ext, &values)
}

/// Contraction modulus of the extended metric under the distributional Bellman operator.
pub fn contraction_factor(metric: &MetricSpec, ext: &ExtensionSpec, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("discount {gamma} outside [0, 1)")));
    }
    ext.validate()?;
    match ext {
        ExtensionSpec::Supremum => Ok(gamma.powf(metric.c)),
        ExtensionSpec::Expectation { q, .. } => {
            if *q < metric.q {
                return Err(Error::invalid(format!(
                    "extension order {q} below the metric's convexity order {}",
                    metric.q
                )));
            }
            let exponent = metric.c - 1.0 / (2.0 * q);
            if exponent <= 0.0 {
                return Err(Error::invalid(format!(
                    "c - 1/(2q) = {exponent} <= 0: no contraction guaranteed"
                )));
            }
            Ok(gamma.powf(exponent))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlcProperty {
    ScaleSensitive,
    LocationInsensitive,
    Convex,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlcViolation {
    pub property: SlcProperty,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlcReport {
    pub trials: usize,
    pub violations: Vec<SlcViolation>,
}

impl SlcReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const SLC_SLACK: f64 = 1e-9;

pub(crate) fn random_atomic<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize, lo: f64, hi: f64) -> Atomic {
    let k = rng.random_range(1..=max_atoms);
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut masses: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let drift = 1.0 - masses.iter().sum::<f64>();
    masses[0] += drift;
    let locations = (0..k).map(|_| rng.random_range(lo..hi)).collect();
    Atomic::from_raw(1, locations, masses)
}

fn affine(a: &Atomic, shift: f64, scale: f64) -> Atomic {
    let locations = a.locations().iter().map(|x| shift + scale * x).collect();
    Atomic::from_raw(1, locations, a.masses().to_vec())
}

fn blend(a: &Atomic, b: &Atomic, lambda: f64) -> Atomic {
    let locations = a.locations().iter().chain(b.locations()).copied().collect();
    let masses = a
        .masses()
        .iter()
        .map(|m| lambda * m)
        .chain(b.masses().iter().map(|m| (1.0 - lambda) * m))
        .collect();
    Atomic::from_raw(1, locations, masses)
}

/// Randomized search for counterexamples to the metric's claimed constants.
///
/// A pass means no counterexample in `trials` trials, not a proof.
pub fn slc_property_check<R: Rng + ?Sized>(metric: &MetricSpec, trials: usize, rng: &mut R) -> Result<SlcReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let mut violations = Vec::new();
    for trial in 0..trials {
        let x = random_atomic(rng, 5, -5.0, 5.0);
        let y = random_atomic(rng, 5, -5.0, 5.0);
        let base = metric.between_atomic(&x, &y)?;

        let gamma = rng.random_range(0.05..0.95);
        let scaled = metric.between_atomic(&affine(&x, 0.0, gamma), &affine(&y, 0.0, gamma))?;
        let bound = gamma.powf(metric.c) * base;
        if scaled > bound + SLC_SLACK {
            violations.push(SlcViolation {
                property: SlcProperty::ScaleSensitive,
                trial,
                lhs: scaled,
                rhs: bound,
            });
        }

        let z = rng.random_range(-10.0..10.0);
        let shifted = metric.between_atomic(&affine(&x, z, 1.0), &affine(&y, z, 1.0))?;
        if shifted > base + SLC_SLACK {
            violations.push(SlcViolation {
                property: SlcProperty::LocationInsensitive,
                trial,
                lhs: shifted,
                rhs: base,
            });
        }

        let x2 = random_atomic(rng, 5, -5.0, 5.0);
        let y2 = random_atomic(rng, 5, -5.0, 5.0);
        let lambda = rng.random_range(0.0..1.0);
        let mixed = metric
            .between_atomic(&blend(&x, &x2, lambda), &blend(&y, &y2, lambda))?
            .powf(metric.q);
        let averaged = lambda * base.powf(metric.q)
            + (1.0 - lambda) * metric.between_atomic(&x2, &y2)?.powf(metric.q);
        if mixed > averaged + SLC_SLACK {
            violations.push(SlcViolation {
                property: SlcProperty::Convex,
                trial,
                lhs: mixed,
                rhs: averaged,
            });
        }
    }
    Ok(SlcReport { trials, violations })
}
