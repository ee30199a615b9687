//! Tabular MDPs and the exact distributional Bellman operator on atomic return tables.

use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{push_forward_atomic_1d, Atomic};
use crate::error::{Error, Result};
use crate::metrics::wasserstein_atomic;

const PROB_TOL: f64 = 1e-12;

/// One branch of a transition row: reward `reward` and next state `next_state` with probability `prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub prob: f64,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// Row `s * n_actions + a`.
    transitions: Vec<Vec<Outcome>>,
}

impl TabularMDP {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, transitions: Vec<Vec<Outcome>>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("MDP needs at least one state and one action"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!("discount {gamma} outside [0, 1)")));
        }
        if transitions.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "{} transition rows for {n_states} states x {n_actions} actions",
                transitions.len()
            )));
        }
        for (i, row) in transitions.iter().enumerate() {
            let total: f64 = row.iter().map(|o| o.prob).sum();
            if row.is_empty()
                || row.iter().any(|o| !(o.prob >= 0.0) || !o.reward.is_finite() || o.next_state >= n_states)
                || (total - 1.0).abs() > PROB_TOL
            {
                return Err(Error::invalid(format!("transition row {i} is not a valid distribution")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            transitions,
        })
    }

    /// One state, one action, reward 1, self-loop.
    pub fn single_loop(gamma: f64) -> Result<Self> {
        Self::new(
            1,
            1,
            gamma,
            vec![vec![Outcome {
                prob: 1.0,
                reward: 1.0,
                next_state: 0,
            }]],
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, gamma, self.transitions.clone())
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.transitions[self.index(s, a)]
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.transitions
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.reward), hi.max(o.reward)))
    }

    fn check_policy(&self, pi: &TabularPolicy) -> Result<()> {
        if pi.n_states() != self.n_states || pi.n_actions() != self.n_actions {
            return Err(Error::invalid("policy shape does not match the MDP"));
        }
        Ok(())
    }

    /// State-action transition matrix under `pi`: `P[(s,a), (s',a')] = p(s'|s,a) pi(a'|s')`.
    pub fn pair_transition_matrix(&self, pi: &TabularPolicy) -> Result<DMatrix<f64>> {
        self.check_policy(pi)?;
        let n = self.n_pairs();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for o in &self.transitions[i] {
                for a2 in 0..self.n_actions {
                    p[(i, self.index(o.next_state, a2))] += o.prob * pi.prob(o.next_state, a2);
                }
            }
        }
        Ok(p)
    }
}

/// Stochastic policy given by one probability row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = rows.first().map_or(0, |r| r.len());
        if n_actions == 0 {
            return Err(Error::invalid("policy needs at least one state and one action"));
        }
        for (s, row) in rows.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.len() != n_actions || row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
                return Err(Error::invalid(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self {
            n_actions,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let rows = actions
            .iter()
            .map(|&a| {
                if a >= n_actions {
                    return Err(Error::invalid(format!("action {a} out of range")));
                }
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Tabular(TabularPolicy),
    /// Deterministic linear policy `a = K x`.
    LqrLinear(Matrix2<f64>),
    /// Uniform over the five rotations `Rot(2 pi k / 5)` of the state.
    LqrRotationUniform,
}

impl Policy {
    pub fn as_tabular(&self) -> Result<&TabularPolicy> {
        match self {
            Policy::Tabular(p) => Ok(p),
            _ => Err(Error::invalid("a tabular policy is required")),
        }
    }
}

/// One atomic return law per state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTable {
    n_states: usize,
    n_actions: usize,
    entries: Vec<Atomic>,
}

impl ReturnTable {
    pub fn new(n_states: usize, n_actions: usize, entries: Vec<Atomic>) -> Result<Self> {
        if entries.len() != n_states * n_actions || entries.iter().any(|e| e.dim() != 1) {
            return Err(Error::invalid("return table does not cover every state-action pair"));
        }
        Ok(Self {
            n_states,
            n_actions,
            entries,
        })
    }

    pub fn constant(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            entries: vec![Atomic::point(value); n_states * n_actions],
        }
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, 0.0)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> &Atomic {
        &self.entries[s * self.n_actions + a]
    }

    pub fn entries(&self) -> &[Atomic] {
        &self.entries
    }

    pub fn means(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mean()[0]).collect()
    }

    fn same_shape(&self, other: &ReturnTable) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::invalid("return tables have different index sets"));
        }
        Ok(())
    }

    /// Per-pair `W_p` distances to another table.
    pub fn wasserstein_to(&self, other: &ReturnTable, p: f64) -> Result<Vec<f64>> {
        self.same_shape(other)?;
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| wasserstein_atomic(p, a, b))
            .collect()
    }

    /// Supremum-extended `W_1`.
    pub fn sup_w1(&self, other: &ReturnTable) -> Result<f64> {
        Ok(self.wasserstein_to(other, 1.0)?.into_iter().fold(0.0, f64::max))
    }
}

/// Atom-count control applied after each operator application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Compaction {
    None,
    Merge { tol: f64 },
    Grid { spacing: f64 },
}

impl Default for Compaction {
    fn default() -> Self {
        Compaction::Merge { tol: 1e-12 }
    }
}

impl Compaction {
    pub fn compact(&self, a: Atomic) -> Atomic {
        match *self {
            Compaction::None => a,
            Compaction::Merge { tol } => a.merge_close(tol),
            Compaction::Grid { spacing } => a.project_to_grid(spacing),
        }
    }

    /// Bound on the `W_1` change a single compaction can cause.
    pub fn w1_error_bound(&self) -> f64 {
        match *self {
            Compaction::None => 0.0,
            Compaction::Merge { tol } => tol,
            Compaction::Grid { spacing } => 0.5 * spacing,
        }
    }
}

/// Single-sample backup: the `pi(.|s')`-mixture of `r + gamma Z(s', a')`.
pub fn bellman_backup(r: f64, s_next: usize, table: &ReturnTable, pi: &TabularPolicy, gamma: f64) -> Result<Atomic> {
    if s_next >= table.n_states() || pi.n_states() != table.n_states() || pi.n_actions() != table.n_actions() {
        return Err(Error::invalid("backup indices do not match the table"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("discount {gamma} outside [0, 1)")));
    }
    let mut locations = Vec::new();
    let mut masses = Vec::new();
    for (a, &w) in pi.row(s_next).iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let z = push_forward_atomic_1d(table.get(s_next, a), r, gamma);
        locations.extend_from_slice(z.locations());
        masses.extend(z.masses().iter().map(|m| w * m));
    }
    Ok(Atomic::from_raw(1, locations, masses))
}

fn apply_entry(table: &ReturnTable, mdp: &TabularMDP, pi: &TabularPolicy, s: usize, a: usize) -> Atomic {
    let mut locations = Vec::new();
    let mut masses = Vec::new();
    for o in mdp.outcomes(s, a) {
        if o.prob == 0.0 {
            continue;
        }
        for (a2, &w) in pi.row(o.next_state).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let z = table.get(o.next_state, a2);
            locations.extend(z.locations().iter().map(|x| o.reward + mdp.gamma() * x));
            masses.extend(z.masses().iter().map(|m| o.prob * w * m));
        }
    }
    Atomic::from_raw(1, locations, masses)
}

/// `T^pi U` with the default merge compaction.
pub fn apply_bellman(table: &ReturnTable, mdp: &TabularMDP, pi: &TabularPolicy) -> Result<ReturnTable> {
    apply_bellman_with(table, mdp, pi, Compaction::default())
}

/// `T^pi U` followed by `compaction` on every entry; parallel over entries.
pub fn apply_bellman_with(
    table: &ReturnTable,
    mdp: &TabularMDP,
    pi: &TabularPolicy,
    compaction: Compaction,
) -> Result<ReturnTable> {
    mdp.check_policy(pi)?;
    if table.n_states() != mdp.n_states() || table.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("return table does not match the MDP"));
    }
    let na = mdp.n_actions();
    let entries = (0..mdp.n_pairs())
        .into_par_iter()
        .map(|i| compaction.compact(apply_entry(table, mdp, pi, i / na, i % na)))
        .collect();
    Ok(ReturnTable {
        n_states: table.n_states,
        n_actions: na,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// `None` selects a grid of `1e-4` times the return range (merge if the range is 0).
    pub compaction: Option<Compaction>,
}

impl FixedPointOptions {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            compaction: None,
        }
    }

    pub fn with_compaction(mut self, c: Compaction) -> Self {
        self.compaction = Some(c);
        self
    }
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub table: ReturnTable,
    /// `sup W_1(U_{k+1}, U_k)` for every iteration.
    pub residuals: Vec<f64>,
    pub compaction: Compaction,
}

/// Grid compaction at `1e-4` of the width of the return range, or exact merging if
/// all rewards coincide.
pub fn default_compaction(mdp: &TabularMDP) -> Compaction {
    let (lo, hi) = mdp.reward_range();
    let range = (hi - lo) / (1.0 - mdp.gamma());
    if range > 0.0 {
        Compaction::Grid { spacing: 1e-4 * range }
    } else {
        Compaction::default()
    }
}

/// Iterate `T^pi` from the zero table until the supremum-`W_1` change is at most `tol`.
pub fn solve_return_fixed_point(mdp: &TabularMDP, pi: &TabularPolicy, tol: f64, max_iters: usize) -> Result<ReturnTable> {
    Ok(solve_return_fixed_point_with(mdp, pi, FixedPointOptions::new(tol, max_iters))?.table)
}

pub fn solve_return_fixed_point_with(mdp: &TabularMDP, pi: &TabularPolicy, opts: FixedPointOptions) -> Result<FixedPoint> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let compaction = opts.compaction.unwrap_or_else(|| default_compaction(mdp));
    let mut table = ReturnTable::zeros(mdp.n_states(), mdp.n_actions());
    let mut residuals = Vec::new();
    for _ in 0..opts.max_iters {
        let next = apply_bellman_with(&table, mdp, pi, compaction)?;
        let r = next.sup_w1(&table)?;
        residuals.push(r);
        table = next;
        if r <= opts.tol {
            return Ok(FixedPoint {
                table,
                residuals,
                compaction,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Normalized discounted occupancy `d = (1 - gamma) sum_h gamma^{h-1} rho P^{h-1}` of
/// state-action pairs, by a dense linear solve.
pub fn dpi_exact(mdp: &TabularMDP, pi: &TabularPolicy, rho: &[f64]) -> Result<Vec<f64>> {
    let n = mdp.n_pairs();
    if rho.len() != n {
        return Err(Error::invalid(format!("initial law has {} entries, expected {n}", rho.len())));
    }
    let total: f64 = rho.iter().sum();
    if rho.iter().any(|r| !(*r >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("initial law is not a distribution"));
    }
    let p = mdp.pair_transition_matrix(pi)?;
    let g = mdp.gamma();
    let lhs = DMatrix::identity(n, n) - p.transpose() * g;
    let rhs = DVector::from_iterator(n, rho.iter().map(|r| (1.0 - g) * r));
    let d = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateInput("occupancy system is singular".into()))?;
    Ok(d.iter().map(|v| v.max(0.0)).collect())
}

/// Uniform-state times policy-action initial law.
pub fn uniform_state_rho(n_states: usize, pi: &TabularPolicy) -> Vec<f64> {
    (0..n_states)
        .flat_map(|s| pi.row(s).iter().map(move |p| p / n_states as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::tabular_make_random;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backup_examples() {
        let t = ReturnTable::new(1, 1, vec![Atomic::point(0.0)]).unwrap();
        let pi = TabularPolicy::deterministic(&[0], 1).unwrap();
        let b = bellman_backup(1.0, 0, &t, &pi, 0.5).unwrap();
        assert_eq!(b.sorted_1d(), vec![(1.0, 1.0)]);

        let t = ReturnTable::new(1, 2, vec![Atomic::point(0.0), Atomic::point(2.0)]).unwrap();
        let pi = TabularPolicy::uniform(1, 2);
        let b = bellman_backup(0.0, 0, &t, &pi, 0.5).unwrap();
        assert_eq!(b.sorted_1d(), vec![(0.0, 0.5), (1.0, 0.5)]);
    }

    #[test]
    fn backup_matches_enumeration_with_three_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entries: Vec<Atomic> = (0..6).map(|_| crate::metrics::random_atomic(&mut rng, 4, -2.0, 2.0)).collect();
        let t = ReturnTable::new(2, 3, entries).unwrap();
        let pi = TabularPolicy::new(vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.0, 0.4]]).unwrap();
        let (r, g) = (0.7, 0.8);
        let b = bellman_backup(r, 1, &t, &pi, g).unwrap();
        let mut brute = Vec::new();
        for a in 0..3 {
            for (x, m) in t.get(1, a).iter() {
                if pi.prob(1, a) > 0.0 {
                    brute.push((r + g * x[0], pi.prob(1, a) * m));
                }
            }
        }
        let brute = Atomic::from_raw(1, brute.iter().map(|p| p.0).collect(), brute.iter().map(|p| p.1).collect());
        assert_eq!(b.sorted_1d(), brute.sorted_1d());
        assert!((b.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_examples() {
        let mdp = TabularMDP::single_loop(0.5).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        let t = apply_bellman(&ReturnTable::zeros(1, 1), &mdp, &pi).unwrap();
        assert_eq!(t.get(0, 0).sorted_1d(), vec![(1.0, 1.0)]);
        let t = apply_bellman(&ReturnTable::constant(1, 1, 2.0), &mdp, &pi).unwrap();
        assert_eq!(t.get(0, 0).sorted_1d(), vec![(2.0, 1.0)]);
    }

    #[test]
    fn means_follow_the_scalar_bellman_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = tabular_make_random(4, 2, 3, 0.9, &mut rng).unwrap();
        let pi = TabularPolicy::new(
            (0..4)
                .map(|_| {
                    let p: f64 = rng.random();
                    vec![p, 1.0 - p]
                })
                .collect(),
        )
        .unwrap();
        let entries = (0..8).map(|_| crate::metrics::random_atomic(&mut rng, 3, 0.0, 5.0)).collect();
        let t = ReturnTable::new(4, 2, entries).unwrap();
        let q = t.means();
        let next = apply_bellman(&t, &mdp, &pi).unwrap().means();
        for s in 0..4 {
            for a in 0..2 {
                let scalar: f64 = mdp
                    .outcomes(s, a)
                    .iter()
                    .map(|o| {
                        o.prob
                            * (o.reward
                                + 0.9 * (0..2).map(|a2| pi.prob(o.next_state, a2) * q[o.next_state * 2 + a2]).sum::<f64>())
                    })
                    .sum();
                assert!((next[s * 2 + a] - scalar).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_loop_fixed_point() {
        let mdp = TabularMDP::single_loop(0.5).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        let t = solve_return_fixed_point(&mdp, &pi, 1e-10, 200).unwrap();
        let z = t.get(0, 0).sorted_1d();
        assert_eq!(z.len(), 1);
        assert!((z[0].0 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn episodic_chain_matches_enumeration() {
        // 0 -> 1 -> 2 -> 3 (absorbing, reward 0)
        let o = |prob, reward, next_state| Outcome {
            prob,
            reward,
            next_state,
        };
        let g = 0.5;
        let mdp = TabularMDP::new(
            4,
            1,
            g,
            vec![
                vec![o(0.5, 0.0, 1), o(0.5, 1.0, 1)],
                vec![o(1.0, 2.0, 2)],
                vec![o(0.25, 0.0, 3), o(0.75, 3.0, 3)],
                vec![o(1.0, 0.0, 3)],
            ],
        )
        .unwrap();
        let pi = TabularPolicy::uniform(4, 1);
        let opts = FixedPointOptions::new(1e-12, 50).with_compaction(Compaction::default());
        let t = solve_return_fixed_point_with(&mdp, &pi, opts).unwrap().table;
        let mut expected = Vec::new();
        for (p0, r0) in [(0.5, 0.0), (0.5, 1.0)] {
            for (p2, r2) in [(0.25, 0.0), (0.75, 3.0)] {
                expected.push((r0 + g * 2.0 + g * g * r2, p0 * p2));
            }
        }
        expected.sort_by(|a, b| a.0.total_cmp(&b.0));
        let got = t.get(0, 0).sorted_1d();
        assert_eq!(got.len(), expected.len());
        for (a, b) in got.iter().zip(&expected) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
        assert_eq!(t.get(3, 0).sorted_1d(), vec![(0.0, 1.0)]);
    }

    #[test]
    fn fixed_point_residuals_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mdp = tabular_make_random(5, 2, 2, 0.8, &mut rng).unwrap();
        let pi = TabularPolicy::uniform(5, 2);
        let fp = solve_return_fixed_point_with(&mdp, &pi, FixedPointOptions::new(1e-6, 500)).unwrap();
        // each step can add one compaction error on either side
        let slack = 2.0 * fp.compaction.w1_error_bound() + 1e-9;
        for w in fp.residuals.windows(2) {
            assert!(w[1] <= mdp.gamma() * w[0] + slack, "{} > {} * {}", w[1], mdp.gamma(), w[0]);
        }
        // distance to an exact application of the operator
        let exact = apply_bellman_with(&fp.table, &mdp, &pi, Compaction::None).unwrap();
        let bound = 1e-6 * (1.0 + mdp.gamma()) / (1.0 - mdp.gamma()) + fp.compaction.w1_error_bound() / (1.0 - mdp.gamma());
        assert!(fp.table.sup_w1(&exact).unwrap() <= bound);
    }

    #[test]
    fn fixed_point_reports_non_convergence() {
        let mdp = TabularMDP::single_loop(0.9).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        assert!(matches!(
            solve_return_fixed_point(&mdp, &pi, 1e-12, 3),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn occupancy_is_normalized_and_sub_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = tabular_make_random(4, 3, 2, 0.7, &mut rng).unwrap();
        let pi = TabularPolicy::uniform(4, 3);
        let rho = uniform_state_rho(4, &pi);
        let d = dpi_exact(&mdp, &pi, &rho).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = mdp.pair_transition_matrix(&pi).unwrap();
        for j in 0..d.len() {
            let flow: f64 = (0..d.len()).map(|i| d[i] * p[(i, j)]).sum();
            assert!(flow <= d[j] / 0.7 + 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(TabularMDP::new(1, 1, 0.5, vec![vec![Outcome { prob: 0.9, reward: 0.0, next_state: 0 }]]).is_err());
        assert!(TabularMDP::single_loop(1.0).is_err());
        assert!(TabularPolicy::new(vec![vec![0.5, 0.4]]).is_err());
        let t = ReturnTable::zeros(2, 1);
        let u = ReturnTable::zeros(1, 2);
        assert!(t.sup_w1(&u).is_err());
    }
}
