//! Local unconstrained minimization with L-BFGS.
//!
//! Wraps argmin's L-BFGS with a More-Thuente line search. The wrapper counts
//! evaluations against a budget and remembers the best point seen, so budget
//! exhaustion or a failed line search still returns a point no worse than the start.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How gradients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GradientMode {
    /// Central differences with step `step`.
    FiniteDifference { step: f64 },
    Analytic,
}

impl Default for GradientMode {
    fn default() -> Self {
        GradientMode::FiniteDifference { step: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Budget of objective evaluations (a gradient call counts as one, a
    /// finite-difference gradient as `2 * dim`).
    pub max_evals: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    /// L-BFGS history length.
    pub memory: usize,
    pub gradient: GradientMode,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            tolerance: 1e-8,
            memory: 10,
            gradient: GradientMode::default(),
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("optimizer tolerance must be > 0"));
        }
        if let GradientMode::FiniteDifference { step } = self.gradient {
            if !(step > 0.0) {
                return Err(Error::invalid("finite-difference step must be > 0"));
            }
        }
        if self.max_evals == 0 || self.memory == 0 {
            return Err(Error::invalid("max_evals and memory must be >= 1"));
        }
        Ok(())
    }
}

/// A smooth function of a real vector.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Exact gradient, if the objective provides one.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Result of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn central_difference<O: Objective + ?Sized>(f: &O, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f.value(&y);
            y[i] = x[i] - h;
            let down = f.value(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Tracker {
    evals: usize,
    best: (f64, Vec<f64>),
}

struct Problem<'a, O: ?Sized> {
    f: &'a O,
    opts: OptimizerOptions,
    state: RefCell<Tracker>,
}

#[derive(Debug)]
struct BudgetExhausted;

impl std::fmt::Display for BudgetExhausted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("evaluation budget exhausted")
    }
}

impl std::error::Error for BudgetExhausted {}

impl<O: Objective + ?Sized> Problem<'_, O> {
    fn charge(&self, n: usize) -> std::result::Result<(), argmin::core::Error> {
        let mut s = self.state.borrow_mut();
        if s.evals + n > self.opts.max_evals {
            return Err(BudgetExhausted.into());
        }
        s.evals += n;
        Ok(())
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        gradient_of(self.f, x, &self.opts)
    }

    fn grad_cost(&self) -> usize {
        match self.opts.gradient {
            GradientMode::FiniteDifference { .. } => 2 * self.state.borrow().best.1.len(),
            GradientMode::Analytic => 1,
        }
    }
}

impl<O: Objective + ?Sized> CostFunction for Problem<'_, O> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.charge(1)?;
        let v = self.f.value(x);
        let mut s = self.state.borrow_mut();
        if v < s.best.0 {
            s.best = (v, x.clone());
        }
        // a non-finite trial point makes the line search back off
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    }
}

impl<O: Objective + ?Sized> Gradient for Problem<'_, O> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        self.charge(self.grad_cost())?;
        self.grad(x).map_err(Into::into)
    }
}

/// Minimizes `f` from `x0`.
///
/// The returned point never has a larger value than `x0`. A non-finite value at
/// `x0` is an [`Error::OptimizationFailure`] with iteration 0; callers running
/// several fits relabel the iteration.
pub fn minimize<O: Objective + ?Sized>(f: &O, x0: &[f64], opts: &OptimizerOptions) -> Result<Minimum> {
    opts.validate()?;
    let v0 = f.value(x0);
    if !v0.is_finite() {
        return Err(Error::OptimizationFailure {
            iteration: 0,
            reason: format!("objective is {v0} at the starting point"),
        });
    }
    let problem = Problem {
        f,
        opts: *opts,
        state: RefCell::new(Tracker {
            evals: 1,
            best: (v0, x0.to_vec()),
        }),
    };
    let g0 = problem.grad(x0)?;
    let mut converged = norm(&g0) <= opts.tolerance;
    if !converged {
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), opts.memory)
            .with_tolerance_grad(opts.tolerance)
            .and_then(|s| s.with_tolerance_cost(0.0))
            .map_err(|e| Error::invalid(e.to_string()))?;
        let x0 = x0.to_vec();
        let max_iters = opts.max_evals as u64;
        // Budget exhaustion and line-search breakdowns both surface as errors;
        // the tracker holds the best point either way.
        let _ = Executor::new(&problem, solver)
            .configure(|s| s.param(x0).max_iters(max_iters))
            .run();
    }
    let Tracker { evals, best } = problem.state.into_inner();
    let (value, x) = best;
    let g = gradient_of(f, &x, opts)?;
    let grad_norm = norm(&g);
    converged = converged || grad_norm <= opts.tolerance;
    Ok(Minimum {
        x,
        value,
        grad_norm,
        evals,
        converged,
    })
}

fn gradient_of<O: Objective + ?Sized>(f: &O, x: &[f64], opts: &OptimizerOptions) -> Result<Vec<f64>> {
    match opts.gradient {
        GradientMode::FiniteDifference { step } => Ok(central_difference(f, x, step)),
        GradientMode::Analytic => f
            .gradient(x)
            .ok_or_else(|| Error::unsupported("objective has no analytic gradient")),
    }
}

// argmin's problem wrapper needs an owned value; a shared reference is enough here.
impl<O: Objective + ?Sized> CostFunction for &Problem<'_, O> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        (**self).cost(x)
    }
}

impl<O: Objective + ?Sized> Gradient for &Problem<'_, O> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        (**self).gradient(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }

        fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
            Some(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        }
    }

    struct Quadratic(Vec<f64>);

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.0).map(|(a, b)| (a - b) * (a - b) * 3.0).sum()
        }
    }

    #[test]
    fn rosenbrock_analytic() {
        let opts = OptimizerOptions {
            gradient: GradientMode::Analytic,
            ..Default::default()
        };
        let m = minimize(&Rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
        assert!(m.converged);
    }

    #[test]
    fn quadratic_with_finite_differences() {
        let target = vec![1.0, -2.0, 3.5, 0.25];
        let m = minimize(&Quadratic(target.clone()), &[0.0; 4], &OptimizerOptions::default()).unwrap();
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(m.value < 1e-12);
    }

    #[test]
    fn budget_exhaustion_returns_best_point() {
        let opts = OptimizerOptions {
            max_evals: 5,
            gradient: GradientMode::Analytic,
            ..Default::default()
        };
        let x0 = [-1.2, 1.0];
        let m = minimize(&Rosenbrock, &x0, &opts).unwrap();
        assert!(m.value <= Rosenbrock.value(&x0));
        assert!(m.evals <= 5);
        assert!(!m.converged);
    }

    #[test]
    fn start_at_minimum_is_kept() {
        let m = minimize(&Quadratic(vec![2.0]), &[2.0], &OptimizerOptions::default()).unwrap();
        assert_eq!(m.x, vec![2.0]);
        assert!(m.converged);
    }

    #[test]
    fn nan_start_fails() {
        struct Bad;
        impl Objective for Bad {
            fn value(&self, _: &[f64]) -> f64 {
                f64::NAN
            }
        }
        let err = minimize(&Bad, &[0.0], &OptimizerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::OptimizationFailure { iteration: 0, .. }));
    }

    #[test]
    fn missing_analytic_gradient_is_unsupported() {
        let opts = OptimizerOptions {
            gradient: GradientMode::Analytic,
            ..Default::default()
        };
        let err = minimize(&Quadratic(vec![1.0]), &[0.0], &opts).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }
}
