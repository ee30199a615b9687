use rand::Rng;
use rand_distr::{Distribution as _, Exp1, Geometric};
use rayon::prelude::*;

use super::dataset::{Dataset, TabularTransition};
use crate::bellman::{Outcome, TabularMDP, TabularPolicy};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Equally or explicitly weighted draws from an occupancy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DpiSample<T> {
    pub points: Vec<T>,
    pub weights: Vec<f64>,
}

impl<T> DpiSample<T> {
    pub fn uniform(points: Vec<T>) -> Self {
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn dirichlet_uniform<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let drift = 1.0 - p.iter().sum::<f64>();
    let largest = (0..k).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap();
    p[largest] += drift;
    p
}

/// Random MDP: each `(s, a)` has `reward_support_size` rewards drawn `Unif[0, 1]`, and a
/// flat-Dirichlet law over the (reward, next state) cells.
pub fn tabular_make_random<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    reward_support_size: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<TabularMDP> {
    if n_states == 0 || n_actions == 0 || reward_support_size == 0 {
        return Err(Error::invalid("all counts must be >= 1"));
    }
    let rows = (0..n_states * n_actions)
        .map(|_| {
            let rewards: Vec<f64> = (0..reward_support_size).map(|_| rng.random::<f64>()).collect();
            let probs = dirichlet_uniform(reward_support_size * n_states, rng);
            rewards
                .iter()
                .enumerate()
                .flat_map(|(i, &reward)| {
                    let probs = &probs;
                    (0..n_states).map(move |s| Outcome {
                        prob: probs[i * n_states + s],
                        reward,
                        next_state: s,
                    })
                })
                .collect()
        })
        .collect();
    TabularMDP::new(n_states, n_actions, gamma, rows)
}

fn pick<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

/// `n` transitions with `s` uniform, `a ~ behavior(.|s)` and `(r, s')` from the MDP.
pub fn tabular_collect<R: Rng + ?Sized>(
    mdp: &TabularMDP,
    behavior: &TabularPolicy,
    n: usize,
    rng: &mut R,
) -> Result<Dataset<TabularTransition>> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    if behavior.n_states() != mdp.n_states() || behavior.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("behavior policy does not match the MDP"));
    }
    let base: u64 = rng.random();
    let records = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(base, "transition", &[i]);
            let s = r.random_range(0..mdp.n_states());
            let a = pick(behavior.row(s).iter().copied(), &mut r);
            let row = mdp.outcomes(s, a);
            let o = row[pick(row.iter().map(|o| o.prob), &mut r)];
            TabularTransition {
                s,
                a,
                r: o.reward,
                sp: o.next_state,
            }
        })
        .collect();
    Dataset::new(records)
}

/// Draws from the normalized discounted occupancy of `pi` started from `rho` over
/// state-action pairs (indexed `s * n_actions + a`).
pub fn estimate_dpi_tabular<R: Rng + ?Sized>(
    mdp: &TabularMDP,
    pi: &TabularPolicy,
    rho: &[f64],
    n_points: usize,
    rng: &mut R,
) -> Result<DpiSample<(usize, usize)>> {
    if n_points == 0 {
        return Err(Error::invalid("n_points must be >= 1"));
    }
    if rho.len() != mdp.n_pairs() || (rho.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("initial law is not a distribution over state-action pairs"));
    }
    let horizon = Geometric::new(1.0 - mdp.gamma()).map_err(|e| Error::invalid(e.to_string()))?;
    let na = mdp.n_actions();
    let points = (0..n_points)
        .map(|_| {
            let i = pick(rho.iter().copied(), rng);
            let (mut s, mut a) = (i / na, i % na);
            let h = horizon.sample(rng) + 1;
            for _ in 1..h {
                let row = mdp.outcomes(s, a);
                s = row[pick(row.iter().map(|o| o.prob), rng)].next_state;
                a = pick(pi.row(s).iter().copied(), rng);
            }
            (s, a)
        })
        .collect();
    Ok(DpiSample::uniform(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_mdp_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = tabular_make_random(1, 1, 1, 0.9, &mut rng).unwrap();
        let row = m.outcomes(0, 0);
        assert_eq!(row.len(), 1);
        assert_eq!((row[0].prob, row[0].next_state), (1.0, 0));

        let m = tabular_make_random(6, 3, 4, 0.9, &mut rng).unwrap();
        for s in 0..6 {
            for a in 0..3 {
                let total: f64 = m.outcomes(s, a).iter().map(|o| o.prob).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(m.outcomes(s, a).iter().all(|o| (0.0..1.0).contains(&o.reward)));
            }
        }
        let a = tabular_make_random(5, 2, 3, 0.9, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = tabular_make_random(5, 2, 3, 0.9, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collect_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = TabularMDP::single_loop(0.9).unwrap();
        let d = tabular_collect(&m, &TabularPolicy::uniform(1, 1), 3, &mut rng).unwrap();
        for t in d.iter() {
            assert_eq!(*t, TabularTransition { s: 0, a: 0, r: 1.0, sp: 0 });
        }

        let m = tabular_make_random(2, 2, 2, 0.9, &mut rng).unwrap();
        let n = 100_000;
        let d = tabular_collect(&m, &TabularPolicy::uniform(2, 2), n, &mut rng).unwrap();
        let zeros = d.iter().filter(|t| t.s == 0).count() as f64 / n as f64;
        assert!((zeros - 0.5).abs() < 0.01);
        for s in 0..2 {
            for a in 0..2 {
                let sub: Vec<_> = d.iter().filter(|t| t.s == s && t.a == a).collect();
                for sp in 0..2 {
                    let emp = sub.iter().filter(|t| t.sp == sp).count() as f64 / sub.len() as f64;
                    let truth: f64 = m.outcomes(s, a).iter().filter(|o| o.next_state == sp).map(|o| o.prob).sum();
                    assert!((emp - truth).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn occupancy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = tabular_make_random(3, 2, 2, 0.0, &mut rng).unwrap();
        let pi = TabularPolicy::uniform(3, 2);
        let rho = vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let s = estimate_dpi_tabular(&m, &pi, &rho, 500, &mut rng).unwrap();
        assert!(s.points.iter().all(|p| *p == (1, 0)));

        let m = TabularMDP::single_loop(0.7).unwrap();
        let s = estimate_dpi_tabular(&m, &TabularPolicy::uniform(1, 1), &[1.0], 100, &mut rng).unwrap();
        assert!(s.points.iter().all(|p| *p == (0, 0)));
    }

    #[test]
    fn occupancy_of_a_two_cycle() {
        let o = |next_state| vec![Outcome { prob: 1.0, reward: 0.0, next_state }];
        let m = TabularMDP::new(2, 1, 0.5, vec![o(1), o(0)]).unwrap();
        let pi = TabularPolicy::uniform(2, 1);
        let n = 1_000_000;
        let s = estimate_dpi_tabular(&m, &pi, &[1.0, 0.0], n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let f = s.points.iter().filter(|p| p.0 == 0).count() as f64 / n as f64;
        assert!((f - 2.0 / 3.0).abs() < 0.002);
        let exact = crate::bellman::dpi_exact(&m, &pi, &[1.0, 0.0]).unwrap();
        assert!((exact[0] - 2.0 / 3.0).abs() < 1e-12);
    }
}
