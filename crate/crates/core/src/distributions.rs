//! Return-distribution carriers and the push-forward / mixture primitives the
//! distributional Bellman operator is assembled from.
//!
//! Four representations are supported: a single Gaussian, a finite Gaussian
//! mixture, a finitely supported (atomic) law on `R^d`, and an empirical sample.
//! All values are immutable; operations build new values.


use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gaussian_log_pdf, gaussian_pdf, normal_cdf, normal_quantile};

const MASS_TOL: f64 = 1e-12;
const MIXTURE_WEIGHT_TOL: f64 = 1e-9;
const BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    mean: f64,
    variance: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance <= 0.0 {
            return Err(Error::invalid(format!(
                "Gaussian needs finite mean and positive variance, got N({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        normal_cdf((z - self.mean) / self.std_dev())
    }

    pub fn pdf(&self, z: f64) -> f64 {
        gaussian_pdf(z, self.mean, self.variance)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.mean + self.std_dev() * normal_quantile(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl MixtureComponent {
    pub fn new(weight: f64, mean: f64, variance: f64) -> Self {
        Self {
            weight,
            mean,
            variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture1D {
    components: Vec<MixtureComponent>,
}

impl GaussianMixture1D {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight >= 0.0) || !c.mean.is_finite() || !(c.variance > 0.0) || !c.variance.is_finite() {
                return Err(Error::invalid(format!("invalid mixture component {c:?}")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > MASS_TOL * components.len().max(1) as f64 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    /// Build from `(weight, mean, variance)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(w, m, v)| MixtureComponent::new(w, m, v))
                .collect(),
        )
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.variance + (c.mean - m).powi(2)))
            .sum()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_cdf((z - c.mean) / c.variance.sqrt()))
            .sum()
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * gaussian_pdf(z, c.mean, c.variance))
            .sum()
    }

    /// Log-density evaluated with a log-sum-exp over components.
    pub fn log_pdf(&self, z: f64) -> f64 {
        let logs: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight.ln() + gaussian_log_pdf(z, c.mean, c.variance))
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    /// The same mixture with `floor` added to every component variance.
    pub fn with_variance_floor(&self, floor: f64) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| MixtureComponent::new(c.weight, c.mean, c.variance + floor))
                .collect(),
        }
    }

    /// Inverse CDF by bisection to an absolute tolerance of 1e-10 on `z`.
    pub fn quantile(&self, u: f64) -> f64 {
        let max_sd = self
            .components
            .iter()
            .map(|c| c.variance.sqrt())
            .fold(0.0, f64::max);
        let lo_mean = self.components.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
        let hi_mean = self.components.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
        let mut lo = lo_mean - 12.0 * max_sd;
        let mut hi = hi_mean + 12.0 * max_sd;
        while self.cdf(lo) > u {
            lo -= 12.0 * max_sd;
        }
        while self.cdf(hi) < u {
            hi += 12.0 * max_sd;
        }
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl From<Gaussian1D> for GaussianMixture1D {
    fn from(g: Gaussian1D) -> Self {
        Self {
            components: vec![MixtureComponent::new(1.0, g.mean, g.variance)],
        }
    }
}

/// Finitely supported law on `R^d`; locations are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atomic {
    dim: usize,
    locations: Vec<f64>,
    masses: Vec<f64>,
}

impl Atomic {
    pub fn new(dim: usize, locations: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("atomic law needs dimension >= 1"));
        }
        if masses.is_empty() || locations.len() != dim * masses.len() {
            return Err(Error::invalid(format!(
                "atomic law with {} masses and {} coordinates in dimension {dim}",
                masses.len(),
                locations.len()
            )));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite())
            || locations.iter().any(|x| !x.is_finite())
        {
            return Err(Error::invalid("atomic law needs finite locations and nonnegative masses"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("atom masses sum to {total}, not 1")));
        }
        Ok(Self {
            dim,
            locations,
            masses,
        })
    }

    /// Internal constructor for operator outputs whose invariants hold by construction.
    pub(crate) fn from_raw(dim: usize, locations: Vec<f64>, masses: Vec<f64>) -> Self {
        debug_assert_eq!(locations.len(), dim * masses.len());
        Self {
            dim,
            locations,
            masses,
        }
    }

    /// One-dimensional law from `(location, mass)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            1,
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    /// Point mass at a one-dimensional location.
    pub fn point(x: f64) -> Self {
        Self::from_raw(1, vec![x], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn location(&self, i: usize) -> &[f64] {
        &self.locations[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.locations
            .chunks_exact(self.dim)
            .zip(self.masses.iter().copied())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.iter() {
            for (mi, xi) in m.iter_mut().zip(x) {
                *mi += w * xi;
            }
        }
        m
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `(location, mass)` pairs of a 1-D law, sorted by location, exact duplicates merged.
    pub fn sorted_1d(&self) -> Vec<(f64, f64)> {
        debug_assert_eq!(self.dim, 1);
        let mut pairs: Vec<(f64, f64)> = self
            .locations
            .iter()
            .copied()
            .zip(self.masses.iter().copied())
            .filter(|p| p.1 > 0.0)
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (x, m) in pairs {
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 += m,
                _ => out.push((x, m)),
            }
        }
        out
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.locations
            .iter()
            .zip(&self.masses)
            .filter(|(x, _)| **x <= z)
            .map(|(_, m)| m)
            .sum()
    }

    /// Merge atoms whose coordinates all lie within `tol` of a group's first atom.
    pub fn merge_close(&self, tol: f64) -> Self {
        let d = self.dim;
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| self.masses[i] > 0.0).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (self.location(i), self.location(j));
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut locations = Vec::with_capacity(order.len() * d);
        let mut masses: Vec<f64> = Vec::with_capacity(order.len());
        let mut anchor: Option<usize> = None;
        for i in order {
            let x = self.location(i);
            let merge = anchor.is_some_and(|a| {
                self.location(a)
                    .iter()
                    .zip(x)
                    .all(|(p, q)| (p - q).abs() <= tol)
            });
            if merge {
                *masses.last_mut().unwrap() += self.masses[i];
            } else {
                anchor = Some(i);
                locations.extend_from_slice(x);
                masses.push(self.masses[i]);
            }
        }
        if masses.is_empty() {
            return self.clone();
        }
        Self::from_raw(d, locations, masses)
    }

    /// Project a 1-D law onto the uniform grid `spacing * Z`, splitting each atom's
    /// mass between its two neighbouring grid points so the mean is preserved.
    pub fn project_to_grid(&self, spacing: f64) -> Self {
        debug_assert_eq!(self.dim, 1);
        let (lo, hi) = self
            .locations
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        let k0 = (lo / spacing).floor() as i64;
        let span = ((hi / spacing).floor() as i64 - k0 + 2) as usize;
        let mut grid = vec![0.0; span];
        for (&x, &m) in self.locations.iter().zip(&self.masses) {
            if m == 0.0 {
                continue;
            }
            let k = (x / spacing).floor();
            let frac = x / spacing - k;
            let i = (k as i64 - k0) as usize;
            if frac <= 0.0 {
                grid[i] += m;
            } else {
                grid[i] += m * (1.0 - frac);
                grid[i + 1] += m * frac;
            }
        }
        let (locations, masses) = grid
            .into_iter()
            .enumerate()
            .filter(|(_, m)| *m > 0.0)
            .map(|(i, m)| ((k0 + i as i64) as f64 * spacing, m))
            .unzip();
        Self::from_raw(1, locations, masses)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let sorted = self.sorted_1d();
        let mut cum = 0.0;
        for &(x, m) in &sorted {
            cum += m;
            if cum >= u - 1e-12 {
                return x;
            }
        }
        sorted.last().map(|p| p.0).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalSample {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "empirical sample needs a nonempty multiple of dimension {dim}, got {} values",
                points.len()
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn from_scalars(points: Vec<f64>) -> Result<Self> {
        Self::new(1, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (mi, xi) in m.iter_mut().zip(p) {
                *mi += xi;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Uniform-mass atomic law over the points.
    pub fn to_atomic(&self) -> Atomic {
        let n = self.len();
        Atomic::from_raw(self.dim, self.points.clone(), vec![1.0 / n as f64; n])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    Gaussian(Gaussian1D),
    Mixture(GaussianMixture1D),
    Atomic(Atomic),
    Empirical(EmpiricalSample),
}

impl From<Gaussian1D> for Distribution {
    fn from(g: Gaussian1D) -> Self {
        Distribution::Gaussian(g)
    }
}

impl From<GaussianMixture1D> for Distribution {
    fn from(g: GaussianMixture1D) -> Self {
        Distribution::Mixture(g)
    }
}

impl From<Atomic> for Distribution {
    fn from(a: Atomic) -> Self {
        Distribution::Atomic(a)
    }
}

impl From<EmpiricalSample> for Distribution {
    fn from(e: EmpiricalSample) -> Self {
        Distribution::Empirical(e)
    }
}

impl Distribution {
    pub fn dim(&self) -> usize {
        match self {
            Distribution::Gaussian(_) | Distribution::Mixture(_) => 1,
            Distribution::Atomic(a) => a.dim(),
            Distribution::Empirical(e) => e.dim(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Distribution::Gaussian(_) => "gaussian",
            Distribution::Mixture(_) => "gaussian-mixture",
            Distribution::Atomic(_) => "atomic",
            Distribution::Empirical(_) => "empirical",
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Distribution::Gaussian(g) => vec![g.mean()],
            Distribution::Mixture(m) => vec![m.mean()],
            Distribution::Atomic(a) => a.mean(),
            Distribution::Empirical(e) => e.mean(),
        }
    }

    /// Law of `shift + gamma * X` for `X` distributed as `self`.
    pub fn push_forward(&self, shift: &[f64], gamma: f64) -> Result<Distribution> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!("discount {gamma} outside [0, 1)")));
        }
        if shift.len() != self.dim() {
            return Err(Error::invalid(format!(
                "shift of dimension {} for a law of dimension {}",
                shift.len(),
                self.dim()
            )));
        }
        Ok(match self {
            Distribution::Gaussian(g) => {
                if gamma == 0.0 {
                    return Err(Error::invalid(
                        "gamma = 0 collapses a Gaussian to a point mass",
                    ));
                }
                Distribution::Gaussian(Gaussian1D::new(
                    shift[0] + gamma * g.mean(),
                    gamma * gamma * g.variance(),
                )?)
            }
            Distribution::Mixture(m) => {
                if gamma == 0.0 {
                    return Err(Error::invalid(
                        "gamma = 0 collapses a Gaussian mixture to a point mass",
                    ));
                }
                Distribution::Mixture(GaussianMixture1D {
                    components: m
                        .components()
                        .iter()
                        .map(|c| {
                            MixtureComponent::new(
                                c.weight,
                                shift[0] + gamma * c.mean,
                                gamma * gamma * c.variance,
                            )
                        })
                        .collect(),
                })
            }
            Distribution::Atomic(a) => Distribution::Atomic(push_forward_atomic(a, shift, gamma)),
            Distribution::Empirical(e) => {
                let d = e.dim();
                let points = e
                    .points()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| shift[i % d] + gamma * x)
                    .collect();
                Distribution::Empirical(EmpiricalSample { dim: d, points })
            }
        })
    }

    /// Inverse CDF `inf { z : F(z) >= u }` of a one-dimensional law.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("quantile level {u} outside (0, 1)")));
        }
        if self.dim() != 1 {
            return Err(Error::unsupported("quantiles of multi-dimensional laws"));
        }
        Ok(match self {
            Distribution::Gaussian(g) => g.quantile(u),
            Distribution::Mixture(m) => m.quantile(u),
            Distribution::Atomic(a) => a.quantile(u),
            Distribution::Empirical(e) => e.to_atomic().quantile(u),
        })
    }

    /// `n` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<EmpiricalSample> {
        if n == 0 {
            return Err(Error::invalid("sample size must be >= 1"));
        }
        let d = self.dim();
        let mut points = Vec::with_capacity(n * d);
        match self {
            Distribution::Gaussian(g) => {
                let sd = g.std_dev();
                for _ in 0..n {
                    let z: f64 = StandardNormal.sample(rng);
                    points.push(g.mean() + sd * z);
                }
            }
            Distribution::Mixture(m) => {
                let cum = cumulative(m.components().iter().map(|c| c.weight));
                for _ in 0..n {
                    let c = &m.components()[pick(&cum, rng)];
                    let z: f64 = StandardNormal.sample(rng);
                    points.push(c.mean + c.variance.sqrt() * z);
                }
            }
            Distribution::Atomic(a) => {
                let cum = cumulative(a.masses().iter().copied());
                for _ in 0..n {
                    points.extend_from_slice(a.location(pick(&cum, rng)));
                }
            }
            Distribution::Empirical(e) => {
                for _ in 0..n {
                    points.extend_from_slice(e.point(rng.random_range(0..e.len())));
                }
            }
        }
        Ok(EmpiricalSample { dim: d, points })
    }
}

fn push_forward_atomic(a: &Atomic, shift: &[f64], gamma: f64) -> Atomic {
    let d = a.dim();
    let locations = a
        .locations()
        .iter()
        .enumerate()
        .map(|(i, x)| shift[i % d] + gamma * x)
        .collect();
    Atomic::from_raw(d, locations, a.masses().to_vec())
}

/// Push-forward of a 1-D atomic law under `x -> r + gamma x`, without validation.
pub(crate) fn push_forward_atomic_1d(a: &Atomic, r: f64, gamma: f64) -> Atomic {
    push_forward_atomic(a, &[r], gamma)
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().unwrap();
    let u: f64 = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Weighted mixture of laws from the same representation family.
///
/// Atomic parts concatenate with rescaled masses; Gaussian and mixture parts
/// flatten into a single Gaussian mixture. Empirical samples carry no weights
/// and cannot be mixed.
pub fn mixture(parts: &[(f64, Distribution)]) -> Result<Distribution> {
    let Some(first) = parts.first() else {
        return Err(Error::invalid("mixture of zero parts"));
    };
    let total: f64 = parts.iter().map(|p| p.0).sum();
    if parts.iter().any(|p| !(p.0 >= 0.0)) || (total - 1.0).abs() > MIXTURE_WEIGHT_TOL {
        return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
    }
    let dim = first.1.dim();
    if parts.iter().any(|p| p.1.dim() != dim) {
        return Err(Error::invalid("mixture parts differ in dimension"));
    }
    match &first.1 {
        Distribution::Gaussian(_) | Distribution::Mixture(_) => {
            let mut components = Vec::new();
            for (w, d) in parts {
                match d {
                    Distribution::Gaussian(g) => {
                        components.push(MixtureComponent::new(*w, g.mean(), g.variance()))
                    }
                    Distribution::Mixture(m) => components.extend(
                        m.components()
                            .iter()
                            .map(|c| MixtureComponent::new(w * c.weight, c.mean, c.variance)),
                    ),
                    other => {
                        return Err(Error::invalid(format!(
                            "cannot mix {} with a Gaussian family",
                            other.family()
                        )))
                    }
                }
            }
            Ok(Distribution::Mixture(GaussianMixture1D { components }))
        }
        Distribution::Atomic(_) => {
            let mut locations = Vec::new();
            let mut masses = Vec::new();
            for (w, d) in parts {
                let Distribution::Atomic(a) = d else {
                    return Err(Error::invalid(format!("cannot mix {} with atomic", d.family())));
                };
                if *w == 0.0 {
                    continue;
                }
                locations.extend_from_slice(a.locations());
                masses.extend(a.masses().iter().map(|m| w * m));
            }
            Ok(Distribution::Atomic(Atomic::from_raw(dim, locations, masses)))
        }
        Distribution::Empirical(_) => Err(Error::unsupported("mixtures of empirical samples")),
    }
}
