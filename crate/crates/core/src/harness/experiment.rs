use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind, Method};
use crate::bellman::{default_compaction, dpi_exact, solve_return_fixed_point_with, FixedPointOptions, ReturnTable, TabularPolicy};
use crate::divergences::DivergenceSpec;
use crate::envs::{estimate_dpi_lqr, lqr_collect, lqr_true_params, tabular_collect, tabular_make_random, LqrEnv, LqrTheta};
use crate::error::{Error, Result};
use crate::evaluation::{lqr_inaccuracy, tabular_inaccuracy, InaccuracyReport};
use crate::fde::{choose_t, fde_run, fle_run, split_dataset, tabular_fde_run, FdeConfig, IterationCount};
use crate::rng::{derive_seed, stream};

pub const CSV_HEADER: &str = "method,n,rep,seed,T,inaccuracy,runtime_ms,failed";

/// Checksum of the dataset one `(n, rep)` cell saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub checksum: String,
}

/// Everything written next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub ground_truth: serde_json::Value,
    pub occupancy_sampling: &'static str,
    pub datasets: Vec<DatasetRecord>,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub reports: Vec<InaccuracyReport>,
    pub metadata: Metadata,
}

/// Seed of the data of replication `rep` at size `n`; shared by all methods.
pub fn replication_seed(master: u64, n: usize, rep: usize) -> u64 {
    derive_seed(master, "replication", &[n as u64, rep as u64])
}

struct Cell {
    report: InaccuracyReport,
    checksum: String,
}

fn lqr_cell(cfg: &ExperimentConfig, env: &LqrEnv, star: &LqrTheta, method: Method, n: usize, rep: usize) -> Result<Cell> {
    let seed = replication_seed(cfg.master_seed, n, rep);
    let data = lqr_collect(env, n, &mut stream(seed, "data", &[]))?;
    let dpi = estimate_dpi_lqr(env, cfg.dpi_points, &mut stream(seed, "dpi", &[]))?;
    let checksum = data.checksum()?;
    let t_used = choose_t(n, env.gamma, &cfg.t_params)?;
    let fde_cfg = FdeConfig {
        divergence: method.divergence(&cfg.divergence).unwrap_or_else(DivergenceSpec::kl),
        iterations: IterationCount::Rule(cfg.t_params),
        optimizer: cfg.optimizer,
        warm_start: true,
        seed: derive_seed(seed, method.as_str(), &[]),
    };
    let start = Instant::now();
    let run = match method {
        Method::Fle => fle_run(&data, env, &fde_cfg, cfg.divergence.fle_samples),
        _ => fde_run(&data, env, &fde_cfg),
    };
    let runtime_ms = if cfg.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let (inaccuracy, failed) = match run {
        Ok(r) => (lqr_inaccuracy(&r.theta, star, &dpi, 1.0)?, false),
        Err(Error::OptimizationFailure { .. }) => (f64::NAN, true),
        Err(e) => return Err(e),
    };
    Ok(Cell {
        report: InaccuracyReport {
            method: method.to_string(),
            n,
            rep,
            seed,
            inaccuracy,
            t_used,
            runtime_ms,
            failed,
        },
        checksum,
    })
}

struct TabularSetup {
    mdp: crate::bellman::TabularMDP,
    target: TabularPolicy,
    behavior: TabularPolicy,
    truth: ReturnTable,
    weights: Vec<f64>,
}

/// Random MDP from the master seed; target always takes action 0, behavior is uniform.
fn tabular_setup(cfg: &ExperimentConfig) -> Result<TabularSetup> {
    let p = cfg.tabular;
    let mdp = tabular_make_random(
        p.n_states,
        p.n_actions,
        p.reward_support,
        p.gamma,
        &mut stream(cfg.master_seed, "mdp", &[]),
    )?;
    let target = TabularPolicy::deterministic(&vec![0; p.n_states], p.n_actions)?;
    let behavior = TabularPolicy::uniform(p.n_states, p.n_actions);
    let truth = solve_return_fixed_point_with(&mdp, &target, FixedPointOptions::new(1e-9, 100_000))?.table;
    let rho = crate::bellman::uniform_state_rho(p.n_states, &behavior);
    let weights = dpi_exact(&mdp, &target, &rho)?;
    Ok(TabularSetup {
        mdp,
        target,
        behavior,
        truth,
        weights,
    })
}

fn tabular_cell(cfg: &ExperimentConfig, setup: &TabularSetup, method: Method, n: usize, rep: usize) -> Result<Cell> {
    if method.divergence(&cfg.divergence).map_or(true, |s| !s.has_gaussian_closed_form()) {
        return Err(Error::invalid(format!("method {method} is not available for tabular runs")));
    }
    let seed = replication_seed(cfg.master_seed, n, rep);
    let data = tabular_collect(&setup.mdp, &setup.behavior, n, &mut stream(seed, "data", &[]))?;
    let checksum = data.checksum()?;
    let t_used = cfg.tabular.iterations.min(n);
    let start = Instant::now();
    let folds = split_dataset(&data, t_used)?;
    let (ns, na) = (setup.mdp.n_states(), setup.mdp.n_actions());
    let iterates = tabular_fde_run(
        &folds,
        ReturnTable::zeros(ns, na),
        &setup.target,
        setup.mdp.gamma(),
        default_compaction(&setup.mdp),
    )?;
    let runtime_ms = if cfg.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let last = iterates.last().expect("at least the initial table");
    let inaccuracy = tabular_inaccuracy(last, &setup.truth, &setup.weights, 1.0, 1.0)?;
    Ok(Cell {
        report: InaccuracyReport {
            method: method.to_string(),
            n,
            rep,
            seed,
            inaccuracy,
            t_used,
            runtime_ms,
            failed: false,
        },
        checksum,
    })
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs every `(method, n, rep)` cell and collects reports in canonical order
/// (method name, then `n`, then `rep`).
pub fn run_experiment_full(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cells: Vec<(Method, usize, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.n_list.iter().flat_map(move |&n| (0..cfg.reps).map(move |r| (m, n, r))))
        .collect();
    let (results, ground_truth, scheme) = match cfg.experiment {
        ExperimentKind::Lqr => {
            let env = LqrEnv::default();
            let star = lqr_true_params(&env, cfg.truth_tol)?;
            let results = in_pool(cfg.workers, || {
                cells
                    .par_iter()
                    .map(|&(m, n, r)| lqr_cell(cfg, &env, &star, m, n, r))
                    .collect::<Vec<_>>()
            })?;
            let truth = serde_json::json!({ "env": env, "theta_star": star });
            (
                results,
                truth,
                "geometric horizon H, then H-1 target steps from a behavior start; one sample per replication",
            )
        }
        ExperimentKind::Tabular => {
            let setup = tabular_setup(cfg)?;
            let results = in_pool(cfg.workers, || {
                cells
                    .par_iter()
                    .map(|&(m, n, r)| tabular_cell(cfg, &setup, m, n, r))
                    .collect::<Vec<_>>()
            })?;
            let truth = serde_json::json!({ "dpi_weights": setup.weights, "truth_means": setup.truth.means() });
            (results, truth, "exact normalized occupancy from a uniform-state, uniform-action start")
        }
        ExperimentKind::Properties => {
            return Err(Error::invalid("property suites run through `check`, not run_experiment"))
        }
    };
    let mut reports = Vec::with_capacity(results.len());
    let mut datasets: BTreeMap<(usize, usize), DatasetRecord> = BTreeMap::new();
    for r in results {
        let Cell { report, checksum } = r?;
        let key = (report.n, report.rep);
        let rec = DatasetRecord {
            n: report.n,
            rep: report.rep,
            seed: report.seed,
            checksum,
        };
        if let Some(prev) = datasets.get(&key) {
            if *prev != rec {
                return Err(Error::DegenerateInput(format!(
                    "dataset for n={} rep={} differs across methods",
                    key.0, key.1
                )));
            }
        } else {
            datasets.insert(key, rec);
        }
        reports.push(report);
    }
    reports.sort_by(|a, b| (&a.method, a.n, a.rep).cmp(&(&b.method, b.n, b.rep)));
    let failures = reports.iter().filter(|r| r.failed).count();
    Ok(ExperimentOutput {
        reports,
        metadata: Metadata {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg.clone(),
            ground_truth,
            occupancy_sampling: scheme,
            datasets: datasets.into_values().collect(),
            failures,
        },
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<InaccuracyReport>> {
    Ok(run_experiment_full(cfg)?.reports)
}

pub fn write_csv<W: Write>(reports: &[InaccuracyReport], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.method, r.n, r.rep, r.seed, r.t_used, r.inaccuracy, r.runtime_ms, r.failed as u8
        )?;
    }
    Ok(())
}

/// `results.csv` -> `results.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes the CSV and its JSON sidecar.
pub fn save(out: &ExperimentOutput, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_csv(&out.reports, &mut buf)?;
    std::fs::write(path, buf)?;
    let json = serde_json::to_string_pretty(&out.metadata).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Mean inaccuracy per `(method, n)`, ignoring failed cells.
pub fn summarize(reports: &[InaccuracyReport]) -> BTreeMap<(String, usize), (f64, usize)> {
    let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for r in reports.iter().filter(|r| !r.failed) {
        let e = acc.entry((r.method.clone(), r.n)).or_default();
        e.0 += r.inaccuracy;
        e.1 += 1;
    }
    for v in acc.values_mut() {
        v.0 /= v.1 as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            methods,
            n_list: vec![300],
            reps: 1,
            timing: false,
            dpi_points: 200,
            ..Default::default()
        }
    }

    #[test]
    fn one_row_and_header() {
        let reports = run_experiment(&small(vec![Method::Kl])).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].t_used, 28);
        let mut buf = Vec::new();
        write_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn reproducible_and_method_invariant_data() {
        let cfg = ExperimentConfig {
            reps: 2,
            ..small(vec![Method::PdfL2, Method::Kl])
        };
        let a = run_experiment_full(&cfg).unwrap();
        let b = run_experiment_full(&cfg).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_csv(&a.reports, &mut x).unwrap();
        write_csv(&b.reports, &mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.metadata.datasets.len(), 2);
        // canonical order: kl rows precede pdf_l2 rows
        assert_eq!(a.reports[0].method, "kl");
        assert_eq!(a.reports[0].seed, a.reports[2].seed);
    }

    #[test]
    fn adding_a_method_keeps_other_rows() {
        let one = run_experiment(&small(vec![Method::Kl])).unwrap();
        let two = run_experiment(&small(vec![Method::Energy, Method::Kl])).unwrap();
        assert_eq!(one[0], two.iter().find(|r| r.method == "kl").unwrap().clone());
    }

    #[test]
    fn tabular_sweep() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::Tabular,
            n_list: vec![200, 2000],
            reps: 2,
            ..small(vec![Method::Kl])
        };
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports.iter().all(|r| r.inaccuracy.is_finite() && r.inaccuracy >= 0.0));
        let bad = ExperimentConfig {
            methods: vec![Method::Fle],
            ..cfg
        };
        assert!(run_experiment(&bad).is_err());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/results.csv");
        let out = run_experiment_full(&small(vec![Method::Kl])).unwrap();
        save(&out, &path).unwrap();
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta["config"]["optimizer"]["max_evals"], 2000);
        assert!(meta["datasets"][0]["checksum"].as_str().unwrap().len() == 64);
    }
}
