//! Functional Bregman divergences used as the fitting objective.
//!
//! Argument order follows the fitting convention `d(model, target)`. For `Kl` this
//! means `d(P, Q) = KL(Q || P)`, so minimizing over the model `P` is maximum
//! likelihood under the target `Q`.
//!
//! Closed forms are available for Gaussian and Gaussian-mixture pairs (kernel MMDs,
//! Cramér, PDF-L2, and KL between single Gaussians); KL and TVD between mixtures use
//! Monte Carlo with an explicit generator. Exact finite sums cover atomic laws.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erf;

use crate::distributions::{Atomic, Distribution, EmpiricalSample, Gaussian1D, GaussianMixture1D, MixtureComponent};
use crate::error::{Error, Result};
use crate::special::{gauss_legendre, log_normal_cdf};

/// Translation-invariant kernel `k(x, y) = k0(||x - y||)`.
///
/// The energy kernel is used in its distance-induced form `k0(r) = -r^beta`; the
/// norm terms of `||x||^b + ||y||^b - ||x - y||^b` cancel inside an MMD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Energy { beta: f64 },
    Rbf { bandwidth: f64 },
    Laplace { bandwidth: f64 },
    Coulomb { dim: usize },
}

impl KernelSpec {
    pub fn energy() -> Self {
        KernelSpec::Energy { beta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KernelSpec::Energy { beta } => beta > 0.0 && beta < 2.0,
            KernelSpec::Rbf { bandwidth } | KernelSpec::Laplace { bandwidth } => {
                bandwidth > 0.0 && bandwidth.is_finite()
            }
            KernelSpec::Coulomb { dim } => dim >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("kernel parameters out of range: {self:?}")))
        }
    }

    /// Kernel value as a function of the distance `r = ||x - y||`.
    pub fn at_distance(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::Energy { beta } => {
                if beta == 1.0 {
                    -r
                } else {
                    -r.powf(beta)
                }
            }
            KernelSpec::Rbf { bandwidth } => (-r * r / (4.0 * bandwidth * bandwidth)).exp(),
            KernelSpec::Laplace { bandwidth } => (-r / bandwidth).exp(),
            KernelSpec::Coulomb { dim } => {
                if dim == 2 {
                    -r.ln()
                } else {
                    r.powi(2 - dim as i32)
                }
            }
        }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        self.at_distance(r)
    }

    fn is_unit_energy(&self) -> bool {
        matches!(self, KernelSpec::Energy { beta } if *beta == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivergenceKind {
    Cramer,
    Mmd { kernel: KernelSpec },
    PdfL2,
    Kl,
    TvdMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    /// Added to every mixture-component variance before evaluation.
    pub variance_floor: f64,
    /// Monte Carlo draws per target component for `Kl`/`TvdMc` on mixtures.
    pub mc_samples: usize,
}

impl DivergenceSpec {
    pub fn new(kind: DivergenceKind) -> Self {
        Self {
            kind,
            variance_floor: 0.0,
            mc_samples: 100,
        }
    }

    pub fn cramer() -> Self {
        Self::new(DivergenceKind::Cramer)
    }

    pub fn mmd(kernel: KernelSpec) -> Self {
        Self::new(DivergenceKind::Mmd { kernel })
    }

    pub fn energy() -> Self {
        Self::mmd(KernelSpec::energy())
    }

    pub fn pdf_l2() -> Self {
        Self::new(DivergenceKind::PdfL2)
    }

    pub fn kl() -> Self {
        Self::new(DivergenceKind::Kl)
    }

    pub fn tvd_mc() -> Self {
        Self::new(DivergenceKind::TvdMc)
    }

    pub fn with_variance_floor(mut self, floor: f64) -> Self {
        self.variance_floor = floor;
        self
    }

    pub fn with_mc_samples(mut self, b: usize) -> Self {
        self.mc_samples = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance_floor >= 0.0) {
            return Err(Error::invalid("variance floor must be >= 0"));
        }
        if let DivergenceKind::Mmd { kernel } = self.kind {
            kernel.validate()?;
        }
        Ok(())
    }

    /// Whether a Gaussian-pair closed form exists.
    pub fn has_gaussian_closed_form(&self) -> bool {
        match self.kind {
            DivergenceKind::Cramer | DivergenceKind::PdfL2 | DivergenceKind::Kl => true,
            DivergenceKind::Mmd { kernel } => match kernel {
                KernelSpec::Energy { beta } => beta == 1.0,
                KernelSpec::Rbf { .. } | KernelSpec::Laplace { .. } => true,
                KernelSpec::Coulomb { .. } => false,
            },
            DivergenceKind::TvdMc => false,
        }
    }
}

/// `E k0(Z)` for `Z ~ N(mu, var)`.
pub fn gaussian_k0(kernel: &KernelSpec, mu: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::invalid(format!("variance {var} must be positive")));
    }
    let sd = var.sqrt();
    match *kernel {
        KernelSpec::Energy { beta } if beta == 1.0 => {
            let m = mu.abs();
            Ok(-(sd * (2.0 / PI).sqrt() * (-mu * mu / (2.0 * var)).exp() + m * erf(m / (sd * SQRT_2))))
        }
        KernelSpec::Rbf { bandwidth } => {
            let s2 = bandwidth * bandwidth;
            Ok((-mu * mu / (4.0 * s2 + 2.0 * var)).exp() / (1.0 + var / (2.0 * s2)).sqrt())
        }
        KernelSpec::Laplace { bandwidth } => {
            let (pos, neg) = laplace_terms(bandwidth, mu, var);
            Ok(pos + neg)
        }
        other => Err(Error::unsupported(format!(
            "no Gaussian closed form for kernel {other:?}"
        ))),
    }
}

/// Derivative of [`gaussian_k0`] with respect to `mu`.
pub fn gaussian_k0_dmu(kernel: &KernelSpec, mu: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::invalid(format!("variance {var} must be positive")));
    }
    match *kernel {
        KernelSpec::Energy { beta } if beta == 1.0 => Ok(-erf(mu / (var.sqrt() * SQRT_2))),
        KernelSpec::Rbf { bandwidth } => {
            let denom = 4.0 * bandwidth * bandwidth + 2.0 * var;
            Ok(gaussian_k0(kernel, mu, var)? * (-2.0 * mu / denom))
        }
        KernelSpec::Laplace { bandwidth } => {
            let (pos, neg) = laplace_terms(bandwidth, mu, var);
            Ok((neg - pos) / bandwidth)
        }
        other => Err(Error::unsupported(format!(
            "no Gaussian closed form for kernel {other:?}"
        ))),
    }
}

// E[exp(-Z/s); Z > 0] and E[exp(Z/s); Z < 0], evaluated in log space.
fn laplace_terms(s: f64, mu: f64, var: f64) -> (f64, f64) {
    let sd = var.sqrt();
    let base = var / (2.0 * s * s);
    let pos = (base - mu / s + log_normal_cdf(mu / sd - sd / s)).exp();
    let neg = (base + mu / s + log_normal_cdf(-mu / sd - sd / s)).exp();
    (pos, neg)
}

fn overlap(delta: f64, var_sum: f64) -> f64 {
    (-delta * delta / (2.0 * var_sum)).exp() / (2.0 * PI * var_sum).sqrt()
}

fn triples(c: &[MixtureComponent]) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    c.iter().map(|c| (c.weight, c.mean, c.variance))
}

// Sum of w_i w_j f(mu_i - mu_j, v_i + v_j) over component pairs.
fn pair_sum(
    a: &[MixtureComponent],
    b: &[MixtureComponent],
    f: &impl Fn(f64, f64) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for (wa, ma, va) in triples(a) {
        for (wb, mb, vb) in triples(b) {
            total += wa * wb * f(ma - mb, va + vb)?;
        }
    }
    Ok(total)
}

fn mixture_closed_form(kind: &DivergenceKind, p: &[MixtureComponent], q: &[MixtureComponent]) -> Result<f64> {
    let value = match kind {
        DivergenceKind::Mmd { kernel } => {
            let k = |d: f64, v: f64| gaussian_k0(kernel, d, v);
            pair_sum(p, p, &k)? + pair_sum(q, q, &k)? - 2.0 * pair_sum(p, q, &k)?
        }
        DivergenceKind::Cramer => {
            let e = DivergenceKind::Mmd {
                kernel: KernelSpec::energy(),
            };
            0.5 * mixture_closed_form(&e, p, q)?
        }
        DivergenceKind::PdfL2 => {
            let k = |d: f64, v: f64| Ok(overlap(d, v));
            pair_sum(p, p, &k)? + pair_sum(q, q, &k)? - 2.0 * pair_sum(p, q, &k)?
        }
        _ => return Err(Error::unsupported(format!("no mixture closed form for {kind:?}"))),
    };
    Ok(value.max(0.0))
}

/// Closed-form `d(P, Q)` between two Gaussians.
pub fn divergence_gaussian(spec: &DivergenceSpec, p: &Gaussian1D, q: &Gaussian1D) -> Result<f64> {
    match spec.kind {
        DivergenceKind::Kl => {
            // KL(Q || P)
            let d = p.mean() - q.mean();
            let v = 0.5 * (p.variance() / q.variance()).ln() + (q.variance() + d * d) / (2.0 * p.variance()) - 0.5;
            Ok(v.max(0.0))
        }
        DivergenceKind::TvdMc => Err(Error::unsupported("tvd_mc has no closed form")),
        ref kind => {
            let pc = [MixtureComponent::new(1.0, p.mean(), p.variance())];
            let qc = [MixtureComponent::new(1.0, q.mean(), q.variance())];
            mixture_closed_form(kind, &pc, &qc)
        }
    }
}

/// Derivative of [`divergence_gaussian`] with respect to the mean of `P`.
pub fn divergence_gaussian_dmean(spec: &DivergenceSpec, p: &Gaussian1D, q: &Gaussian1D) -> Result<f64> {
    let d = p.mean() - q.mean();
    let vs = p.variance() + q.variance();
    match spec.kind {
        DivergenceKind::Kl => Ok(d / p.variance()),
        DivergenceKind::Mmd { kernel } => Ok(-2.0 * gaussian_k0_dmu(&kernel, d, vs)?),
        DivergenceKind::Cramer => Ok(-gaussian_k0_dmu(&KernelSpec::energy(), d, vs)?),
        DivergenceKind::PdfL2 => Ok(2.0 * overlap(d, vs) * d / vs),
        DivergenceKind::TvdMc => Err(Error::unsupported("tvd_mc has no closed form")),
    }
}

/// `d(P, Q)` between Gaussian mixtures.
///
/// MMD, Cramér and PDF-L2 are exact double sums over component pairs. KL and TVD
/// draw `mc_samples` points from every component of `Q`; the result is clamped at 0.
pub fn divergence_gmm<R: Rng + ?Sized>(
    spec: &DivergenceSpec,
    p: &GaussianMixture1D,
    q: &GaussianMixture1D,
    rng: &mut R,
) -> Result<f64> {
    spec.validate()?;
    let (p, q) = if spec.variance_floor > 0.0 {
        (p.with_variance_floor(spec.variance_floor), q.with_variance_floor(spec.variance_floor))
    } else {
        (p.clone(), q.clone())
    };
    match spec.kind {
        DivergenceKind::Kl | DivergenceKind::TvdMc => {
            if spec.mc_samples == 0 {
                return Err(Error::invalid("Monte Carlo divergence needs mc_samples >= 1"));
            }
            let b = spec.mc_samples;
            let mut total = 0.0;
            for c in q.components() {
                let sd = c.variance.sqrt();
                let mut acc = 0.0;
                for _ in 0..b {
                    let e: f64 = StandardNormal.sample(rng);
                    let z = c.mean + sd * e;
                    let (lp, lq) = (p.log_pdf(z), q.log_pdf(z));
                    acc += match spec.kind {
                        DivergenceKind::Kl => lq - lp,
                        // TV = E_Q (1 - p/q)_+ also counts P-mass outside the support of Q
                        _ => (1.0 - (lp - lq).exp()).max(0.0),
                    };
                }
                total += c.weight * acc / b as f64;
            }
            Ok(total.max(0.0))
        }
        ref kind => mixture_closed_form(kind, p.components(), q.components()),
    }
}

/// Exact MMD, Cramér or PDF-L2 between mixtures (variance floor applied).
pub fn divergence_gmm_closed(spec: &DivergenceSpec, p: &GaussianMixture1D, q: &GaussianMixture1D) -> Result<f64> {
    spec.validate()?;
    let (p, q) = (p.with_variance_floor(spec.variance_floor), q.with_variance_floor(spec.variance_floor));
    mixture_closed_form(&spec.kind, p.components(), q.components())
}

/// `KL(Q || P)` between mixtures by composite Gauss-Legendre quadrature.
pub fn kl_gmm_quadrature(p: &GaussianMixture1D, q: &GaussianMixture1D) -> f64 {
    let all: Vec<&MixtureComponent> = p.components().iter().chain(q.components()).collect();
    let min_sd = all.iter().map(|c| c.variance.sqrt()).fold(f64::INFINITY, f64::min);
    let max_sd = all.iter().map(|c| c.variance.sqrt()).fold(0.0, f64::max);
    let lo = q.components().iter().map(|c| c.mean).fold(f64::INFINITY, f64::min) - 14.0 * max_sd;
    let hi = q.components().iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max) + 14.0 * max_sd;
    let panels = (((hi - lo) / (0.25 * min_sd)).ceil() as usize).clamp(64, 40_000);
    let (x, w) = gauss_legendre(8);
    let h = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = lo + (k as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            let z = mid + 0.5 * h * xi;
            let lq = q.log_pdf(z);
            let dens = lq.exp();
            if dens > 0.0 {
                total += 0.5 * h * wi * dens * (lq - p.log_pdf(z));
            }
        }
    }
    total.max(0.0)
}

fn check_pair(x: &EmpiricalSample, y: &EmpiricalSample, kernel: &KernelSpec) -> Result<()> {
    kernel.validate()?;
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::invalid("MMD U-statistic needs at least two points per sample"));
    }
    if x.dim() != y.dim() {
        return Err(Error::invalid("samples differ in dimension"));
    }
    if let KernelSpec::Coulomb { dim } = *kernel {
        if x.dim() != dim {
            return Err(Error::invalid(format!(
                "Coulomb kernel for dimension {dim} applied to points of dimension {}",
                x.dim()
            )));
        }
        let mut pts: Vec<&[f64]> = x.iter().chain(y.iter()).collect();
        pts.sort_by(|a, b| {
            a.iter()
                .zip(*b)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if pts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DegenerateInput(
                "duplicate points make the Coulomb kernel infinite".into(),
            ));
        }
    }
    Ok(())
}

/// Unbiased U-statistic estimate of MMD² from two samples.
pub fn mmd_squared_mc(kernel: &KernelSpec, x: &EmpiricalSample, y: &EmpiricalSample) -> Result<f64> {
    check_pair(x, y, kernel)?;
    let (n, m) = (x.len() as f64, y.len() as f64);
    if kernel.is_unit_energy() && x.dim() == 1 {
        let sx = sorted(x.points());
        let sy = sorted(y.points());
        let xx = 2.0 * within_abs_sum(&sx) / (n * (n - 1.0));
        let yy = 2.0 * within_abs_sum(&sy) / (m * (m - 1.0));
        let xy = cross_abs_sum(&sx, &sy) / (n * m);
        return Ok(-xx - yy + 2.0 * xy);
    }
    let within = |s: &EmpiricalSample| -> f64 {
        let k = s.len();
        (0..k)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..k)
                    .map(|j| kernel.eval(s.point(i), s.point(j)))
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            * 2.0
            / (k as f64 * (k as f64 - 1.0))
    };
    let cross: f64 = (0..x.len())
        .into_par_iter()
        .map(|i| y.iter().map(|yj| kernel.eval(x.point(i), yj)).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        / (n * m);
    Ok(within(x) + within(y) - 2.0 * cross)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

// sum over i < j of |x_i - x_j| for sorted x
fn within_abs_sum(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(j, x)| x * (2.0 * j as f64 - n + 1.0))
        .sum()
}

// sum over all (i, j) of |x_i - y_j| for sorted inputs
fn cross_abs_sum(x: &[f64], y: &[f64]) -> f64 {
    let mut prefix = Vec::with_capacity(y.len() + 1);
    prefix.push(0.0);
    for v in y {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total = *prefix.last().unwrap();
    let m = y.len();
    x.iter()
        .map(|&xi| {
            let k = y.partition_point(|&v| v < xi);
            let below = xi * k as f64 - prefix[k];
            let above = (total - prefix[k]) - xi * (m - k) as f64;
            below + above
        })
        .sum()
}

/// Exact MMD² between two atomic laws: `sum m_i m_j k(x_i - x_j)` over each pair of laws.
pub fn mmd_squared_atomic(kernel: &KernelSpec, p: &Atomic, q: &Atomic) -> Result<f64> {
    kernel.validate()?;
    if p.dim() != q.dim() {
        return Err(Error::invalid("atomic laws differ in dimension"));
    }
    if matches!(kernel, KernelSpec::Coulomb { .. }) {
        return Err(Error::DegenerateInput(
            "Coulomb self-interaction of an atom is infinite".into(),
        ));
    }
    let expect = |a: &Atomic, b: &Atomic| -> f64 {
        a.iter()
            .map(|(x, wx)| wx * b.iter().map(|(y, wy)| wy * kernel.eval(x, y)).sum::<f64>())
            .sum()
    };
    Ok((expect(p, p) + expect(q, q) - 2.0 * expect(p, q)).max(0.0))
}

/// Energy distance `2E|X-Y| - E|X-X'| - E|Y-Y'|` between atomic laws.
pub fn energy_distance_atomic(p: &Atomic, q: &Atomic) -> Result<f64> {
    mmd_squared_atomic(&KernelSpec::energy(), p, q)
}

/// Squared Cramér distance `int (F_P - F_Q)^2` between 1-D atomic laws, exact.
pub fn cramer_atomic(p: &Atomic, q: &Atomic) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::unsupported("Cramér distance of multi-dimensional laws"));
    }
    let (sp, sq) = (p.sorted_1d(), q.sorted_1d());
    let mut breaks: Vec<f64> = sp.iter().chain(&sq).map(|a| a.0).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (mut i, mut j) = (0, 0);
    let (mut fp, mut fq) = (0.0, 0.0);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        while i < sp.len() && sp[i].0 <= w[0] {
            fp += sp[i].1;
            i += 1;
        }
        while j < sq.len() && sq[j].0 <= w[0] {
            fq += sq[j].1;
            j += 1;
        }
        total += (fp - fq).powi(2) * (w[1] - w[0]);
    }
    Ok(total)
}

/// Total variation `1/2 sum |p(x) - q(x)|` between atomic laws with exactly matching locations.
pub fn tvd_atomic(p: &Atomic, q: &Atomic) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::unsupported("TVD of multi-dimensional atomic laws"));
    }
    let mut all: Vec<(f64, f64)> = p
        .sorted_1d()
        .into_iter()
        .chain(q.sorted_1d().into_iter().map(|(x, m)| (x, -m)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut k = 0;
    while k < all.len() {
        let x = all[k].0;
        let mut diff = 0.0;
        while k < all.len() && all[k].0 == x {
            diff += all[k].1;
            k += 1;
        }
        total += diff.abs();
    }
    Ok(0.5 * total)
}

/// `d(P, Q)` between atomic laws (`TvdMc` is evaluated exactly here).
pub fn divergence_atomic(spec: &DivergenceSpec, p: &Atomic, q: &Atomic) -> Result<f64> {
    match spec.kind {
        DivergenceKind::Cramer => cramer_atomic(p, q),
        DivergenceKind::Mmd { kernel } => mmd_squared_atomic(&kernel, p, q),
        DivergenceKind::TvdMc => tvd_atomic(p, q),
        DivergenceKind::PdfL2 | DivergenceKind::Kl => Err(Error::unsupported(
            "density-based divergences need laws with densities",
        )),
    }
}

/// Dispatch on carrier pair.
pub fn divergence<R: Rng + ?Sized>(
    spec: &DivergenceSpec,
    p: &Distribution,
    q: &Distribution,
    rng: &mut R,
) -> Result<f64> {
    use Distribution::*;
    match (p, q) {
        (Gaussian(a), Gaussian(b)) if spec.variance_floor == 0.0 && spec.has_gaussian_closed_form() => {
            divergence_gaussian(spec, a, b)
        }
        (Gaussian(_) | Mixture(_), Gaussian(_) | Mixture(_)) => {
            let a = as_mixture(p);
            let b = as_mixture(q);
            divergence_gmm(spec, &a, &b, rng)
        }
        (Atomic(a), Atomic(b)) => divergence_atomic(spec, a, b),
        (Empirical(a), Empirical(b)) => match spec.kind {
            DivergenceKind::Mmd { kernel } => mmd_squared_mc(&kernel, a, b),
            DivergenceKind::Cramer => Ok(0.5 * mmd_squared_mc(&KernelSpec::energy(), a, b)?),
            _ => Err(Error::unsupported("only kernel divergences apply to samples")),
        },
        _ => Err(Error::unsupported(format!(
            "divergence between {} and {}",
            p.family(),
            q.family()
        ))),
    }
}

fn as_mixture(d: &Distribution) -> GaussianMixture1D {
    match d {
        Distribution::Gaussian(g) => (*g).into(),
        Distribution::Mixture(m) => m.clone(),
        _ => unreachable!(),
    }
}
