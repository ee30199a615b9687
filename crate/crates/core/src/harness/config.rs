use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::divergences::{DivergenceSpec, KernelSpec};
use crate::error::{Error, Result};
use crate::fde::TSelectionParams;
use crate::optim::OptimizerOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cramer,
    Energy,
    Rbf,
    Laplace,
    PdfL2,
    Kl,
    Fle,
    TvdMc,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Cramer,
        Method::Energy,
        Method::Rbf,
        Method::Laplace,
        Method::PdfL2,
        Method::Kl,
        Method::Fle,
        Method::TvdMc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cramer => "cramer",
            Method::Energy => "energy",
            Method::Rbf => "rbf",
            Method::Laplace => "laplace",
            Method::PdfL2 => "pdf_l2",
            Method::Kl => "kl",
            Method::Fle => "fle",
            Method::TvdMc => "tvd_mc",
        }
    }

    /// Divergence minimized by this method; `None` for the likelihood baseline.
    pub fn divergence(&self, p: &DivergenceParams) -> Option<DivergenceSpec> {
        let spec = match self {
            Method::Cramer => DivergenceSpec::cramer(),
            Method::Energy => DivergenceSpec::energy(),
            Method::Rbf => DivergenceSpec::mmd(KernelSpec::Rbf {
                bandwidth: p.rbf_bandwidth,
            }),
            Method::Laplace => DivergenceSpec::mmd(KernelSpec::Laplace {
                bandwidth: p.laplace_bandwidth,
            }),
            Method::PdfL2 => DivergenceSpec::pdf_l2(),
            Method::Kl => DivergenceSpec::kl(),
            Method::TvdMc => DivergenceSpec::tvd_mc().with_mc_samples(p.tvd_samples),
            Method::Fle => return None,
        };
        Some(spec.with_variance_floor(p.variance_floor))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lqr,
    Tabular,
    Properties,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceParams {
    pub rbf_bandwidth: f64,
    pub laplace_bandwidth: f64,
    pub variance_floor: f64,
    /// Backup draws per transition for the likelihood baseline.
    pub fle_samples: usize,
    /// Backup draws per transition for `tvd_mc`.
    pub tvd_samples: usize,
}

impl Default for DivergenceParams {
    fn default() -> Self {
        Self {
            rbf_bandwidth: 1.0,
            laplace_bandwidth: 1.0,
            variance_floor: 0.0,
            fle_samples: 1,
            tvd_samples: 100,
        }
    }
}

/// Random tabular instance used by `run-tabular`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub reward_support: usize,
    pub gamma: f64,
    /// FDE iterations per run.
    pub iterations: usize,
}

impl Default for TabularParams {
    fn default() -> Self {
        Self {
            n_states: 3,
            n_actions: 2,
            reward_support: 2,
            gamma: 0.7,
            iterations: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub methods: Vec<Method>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    /// Size of the occupancy sample used to weight the inaccuracy.
    pub dpi_points: usize,
    /// Tolerance of the ground-truth parameter iteration.
    pub truth_tol: f64,
    /// Record wall-clock time per cell; off gives byte-reproducible CSV.
    pub timing: bool,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    pub output: PathBuf,
    pub divergence: DivergenceParams,
    pub t_params: TSelectionParams,
    pub optimizer: OptimizerOptions,
    pub tabular: TabularParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Lqr,
            methods: vec![
                Method::Cramer,
                Method::Energy,
                Method::Rbf,
                Method::Laplace,
                Method::PdfL2,
                Method::Kl,
                Method::Fle,
            ],
            n_list: (300..=1000).step_by(50).collect(),
            reps: 50,
            master_seed: 0,
            dpi_points: 1000,
            truth_tol: 1e-12,
            timing: true,
            workers: None,
            output: PathBuf::from("results.csv"),
            divergence: DivergenceParams::default(),
            t_params: TSelectionParams::default(),
            optimizer: OptimizerOptions::default(),
            tabular: TabularParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be >= 1"));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::invalid("n_list must be nonempty and positive"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.dpi_points == 0 || !(self.truth_tol > 0.0) {
            return Err(Error::invalid("dpi_points and truth_tol must be positive"));
        }
        if self.tabular.iterations == 0 || !(0.0..1.0).contains(&self.tabular.gamma) {
            return Err(Error::invalid("tabular runs need iterations >= 1 and gamma in [0, 1)"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be >= 1"));
        }
        let d = &self.divergence;
        if d.fle_samples == 0 || d.tvd_samples == 0 || !(d.variance_floor >= 0.0) {
            return Err(Error::invalid("sample counts must be >= 1 and the variance floor >= 0"));
        }
        for m in &self.methods {
            if let Some(spec) = m.divergence(d) {
                spec.validate()?;
            }
        }
        self.t_params.validate()?;
        self.optimizer.validate()
    }
}

/// Comma-separated list parser for command-line overrides.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| Error::invalid(format!("'{p}': {e}"))))
        .collect()
}
