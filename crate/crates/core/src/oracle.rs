//! Truncated-grid reference computations.
//!
//! The chain is cut to `[0,N]²`; jumps that would leave the grid stay put.
//! The stationary distribution is found by block elimination over the
//! levels `n₁ = const`, and expected cumulative rewards by value iteration
//! on the uniformized chain, tracking the largest bias terms seen.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::errorbound::{error_bound, BiasBounds};
use crate::geomsum::Reward;
use crate::model::{Dir, RandomWalk, RateField, State};
use crate::perturb::PerturbedWalk;

pub const DEFAULT_TRUNCATION: u32 = 200;
pub const DEFAULT_HORIZON: usize = 5000;
pub const DEFAULT_WINDOW: u32 = 100;

const RESIDUAL_TARGET: f64 = 1e-12;
const GS_MAX_SWEEPS: usize = 200_000;
/// Absolute slack for solver rounding when comparing `|F̄ − F|` with a bound.
pub const NUMERICAL_SLACK: f64 = 1e-10;

/// A rate field restricted to `[0,N]²`.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    n: u32,
    /// Rates in `Dir::ALL` order; zero where the jump leaves the grid.
    rates: Vec<[f64; 8]>,
    /// Neighbour index in `Dir::ALL` order; the state itself where the jump leaves the grid.
    targets: Vec<[u32; 8]>,
    gamma_u: f64,
}

impl TruncatedChain {
    /// `gamma_u = None` uses the largest outflow on the grid.
    pub fn new<F: RateField + ?Sized>(field: &F, n: u32, gamma_u: Option<f64>) -> Result<Self> {
        let side = n as usize + 1;
        let mut rates = vec![[0.0; 8]; side * side];
        let mut targets = vec![[0u32; 8]; side * side];
        let mut max_out: f64 = 0.0;
        for n1 in 0..=n {
            for n2 in 0..=n {
                let s = State::new(n1, n2);
                let idx = n1 as usize * side + n2 as usize;
                targets[idx] = [idx as u32; 8];
                for (slot, &d) in Dir::ALL.iter().enumerate() {
                    if !s.neighborhood().contains(&d) {
                        continue;
                    }
                    let Some(t) = s.step(d) else { continue };
                    if t.n1 > n || t.n2 > n {
                        continue;
                    }
                    let rate = field.rate(s, d);
                    if !rate.is_finite() || rate < 0.0 {
                        return Err(Error::NegativeRate { state: s, dir: d, rate });
                    }
                    rates[idx][slot] = rate;
                    targets[idx][slot] = (t.n1 as usize * side + t.n2 as usize) as u32;
                }
                max_out = max_out.max(rates[idx].iter().sum());
            }
        }
        let gamma_u = match gamma_u {
            None => max_out.max(f64::MIN_POSITIVE),
            Some(g) if g >= max_out && g > 0.0 => g,
            Some(g) => {
                return Err(Error::InvalidWalk(format!(
                    "uniformization constant {g} below grid outflow {max_out}"
                )))
            }
        };
        Ok(TruncatedChain { n, rates, targets, gamma_u })
    }

    pub fn truncation(&self) -> u32 {
        self.n
    }

    pub fn gamma_u(&self) -> f64 {
        self.gamma_u
    }

    pub fn num_states(&self) -> usize {
        self.rates.len()
    }

    fn side(&self) -> usize {
        self.n as usize + 1
    }

    pub fn index(&self, s: State) -> usize {
        s.n1 as usize * self.side() + s.n2 as usize
    }

    pub fn state(&self, idx: usize) -> State {
        State::new((idx / self.side()) as u32, (idx % self.side()) as u32)
    }

    fn outflow(&self, idx: usize) -> f64 {
        self.rates[idx].iter().sum()
    }

    /// Largest deviation from one of a row sum of the uniformized operator,
    /// counting the self-loop as `1 − Σ p`, which must itself be a probability.
    pub fn row_sum_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.num_states() {
            let moves: f64 = self.rates[idx].iter().map(|r| r / self.gamma_u).sum();
            let stay = 1.0 - moves;
            let total = moves + stay.max(0.0);
            worst = worst.max((total - 1.0).abs());
        }
        worst
    }

    /// `max_s |(πQ)(s)|`.
    pub fn balance_residual(&self, pi: &[f64]) -> f64 {
        let mut flow = vec![0.0; self.num_states()];
        for (idx, (r, t)) in self.rates.iter().zip(&self.targets).enumerate() {
            for slot in 0..8 {
                if r[slot] > 0.0 {
                    flow[t[slot] as usize] += pi[idx] * r[slot];
                }
            }
            flow[idx] -= pi[idx] * self.outflow(idx);
        }
        flow.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Generator block from level `from` to level `to` (`|from − to| ≤ 1`).
    fn block(&self, from: usize, to: usize) -> DMatrix<f64> {
        let side = self.side();
        let mut a = DMatrix::zeros(side, side);
        for j in 0..side {
            let idx = from * side + j;
            for slot in 0..8 {
                let rate = self.rates[idx][slot];
                if rate == 0.0 {
                    continue;
                }
                let t = self.targets[idx][slot] as usize;
                if t / side == to {
                    a[(j, t % side)] += rate;
                }
            }
            if from == to {
                a[(j, j)] -= self.outflow(idx);
            }
        }
        a
    }

    /// Stationary distribution on the grid.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let mut pi = match self.block_solve() {
            Ok(pi) => pi,
            Err(Error::SingularSystem) => {
                let mut pi = vec![1.0 / self.num_states() as f64; self.num_states()];
                self.gauss_seidel(&mut pi, GS_MAX_SWEEPS)?;
                return Ok(pi);
            }
            Err(e) => return Err(e),
        };
        if self.balance_residual(&pi) > RESIDUAL_TARGET {
            self.gauss_seidel(&mut pi, GS_MAX_SWEEPS)?;
        }
        Ok(pi)
    }

    fn block_solve(&self) -> Result<Vec<f64>> {
        let side = self.side();
        let levels = side;
        // r[l] maps π_l to π_{l+1}
        let mut r: Vec<DMatrix<f64>> = Vec::with_capacity(levels.saturating_sub(1));
        let mut s = self.block(levels - 1, levels - 1);
        for l in (1..levels).rev() {
            let up = self.block(l - 1, l);
            let lu = s.transpose().lu();
            let rt = lu.solve(&(-up.transpose())).ok_or(Error::SingularSystem)?;
            let r_prev = rt.transpose();
            if !r_prev.iter().all(|x| x.is_finite()) {
                return Err(Error::SingularSystem);
            }
            let down = self.block(l, l - 1);
            s = self.block(l - 1, l - 1) + &r_prev * down;
            r.push(r_prev);
        }
        r.reverse();

        // left null vector of s, pinned at its first entry
        let mut m = s.transpose();
        for j in 0..side {
            m[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
        }
        let mut rhs = nalgebra::DVector::zeros(side);
        rhs[0] = 1.0;
        let x = m.lu().solve(&rhs).ok_or(Error::SingularSystem)?;

        let mut pi = Vec::with_capacity(side * side);
        let mut level = x.transpose();
        pi.extend(level.iter().copied());
        for rl in &r {
            level = &level * rl;
            pi.extend(level.iter().copied());
        }
        let total: f64 = pi.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::SingularSystem);
        }
        for p in &mut pi {
            *p /= total;
        }
        Ok(pi)
    }

    fn gauss_seidel(&self, pi: &mut [f64], max_sweeps: usize) -> Result<()> {
        let count = self.num_states();
        let mut incoming: Vec<Vec<(u32, f64)>> = vec![Vec::new(); count];
        for idx in 0..count {
            for slot in 0..8 {
                let rate = self.rates[idx][slot];
                if rate > 0.0 {
                    incoming[self.targets[idx][slot] as usize].push((idx as u32, rate));
                }
            }
        }
        let mut residual = f64::INFINITY;
        for sweep in 0..max_sweeps {
            for s in 0..count {
                let out = self.outflow(s);
                if out > 0.0 {
                    pi[s] = incoming[s].iter().map(|&(u, r)| pi[u as usize] * r).sum::<f64>() / out;
                }
            }
            let total: f64 = pi.iter().sum();
            for p in pi.iter_mut() {
                *p /= total;
            }
            if sweep % 20 == 19 {
                residual = self.balance_residual(pi);
                if residual <= RESIDUAL_TARGET {
                    return Ok(());
                }
            }
        }
        Err(Error::NotConverged { iterations: max_sweeps, residual })
    }

    /// Value iteration `F^t = F + P F^{t-1}` for `t ≤ horizon`, recording
    /// the largest `|F^t(s+d) − F^t(s)| / γ_u` on `[0,window]²`.
    pub fn value_iteration(&self, reward: &Reward, horizon: usize, window: u32) -> BiasTable {
        let count = self.num_states();
        let window = window.min(self.n);
        let wside = window as usize + 1;
        let r: Vec<f64> = (0..count).map(|i| reward.eval(self.state(i))).collect();
        let p: Vec<[f64; 8]> = self
            .rates
            .iter()
            .map(|row| row.map(|x| x / self.gamma_u))
            .collect();
        let tracked: Vec<usize> = (0..wside)
            .flat_map(|a| (0..wside).map(move |b| (a, b)))
            .map(|(a, b)| self.index(State::new(a as u32, b as u32)))
            .collect();
        let mut sup = vec![[0.0f64; 8]; tracked.len()];
        let mut sup_half = sup.clone();
        let mut old = vec![0.0; count];
        let mut new = vec![0.0; count];
        let origin = self.index(State::ORIGIN);
        let mut increments = vec![0.0; horizon + 1];
        for t in 1..=horizon {
            for s in 0..count {
                let f = old[s];
                let pr = &p[s];
                let tg = &self.targets[s];
                let mut acc = 0.0;
                for slot in 0..8 {
                    acc += pr[slot] * (old[tg[slot] as usize] - f);
                }
                new[s] = r[s] + f + acc;
            }
            for (k, &s) in tracked.iter().enumerate() {
                let f = new[s];
                let tg = &self.targets[s];
                let row = &mut sup[k];
                for slot in 0..8 {
                    let d = (new[tg[slot] as usize] - f).abs();
                    if d > row[slot] {
                        row[slot] = d;
                    }
                }
            }
            increments[t] = new[origin] - old[origin];
            std::mem::swap(&mut old, &mut new);
            if t == horizon / 2 {
                sup_half.clone_from(&sup);
            }
        }
        let scale = 1.0 / self.gamma_u;
        for row in sup.iter_mut().chain(sup_half.iter_mut()) {
            for x in row.iter_mut() {
                *x *= scale;
            }
        }
        let half = horizon / 2;
        BiasTable {
            horizon,
            window,
            sup,
            sup_half,
            gain: if horizon > 0 { old[origin] / horizon as f64 } else { 0.0 },
            gain_half: if half > 0 { increments[..=half].iter().sum::<f64>() / half as f64 } else { 0.0 },
            increment: increments[horizon],
            increment_half: increments[half],
            values: old,
        }
    }
}

/// Largest bias terms seen by value iteration.
#[derive(Debug, Clone)]
pub struct BiasTable {
    pub horizon: usize,
    pub window: u32,
    sup: Vec<[f64; 8]>,
    sup_half: Vec<[f64; 8]>,
    /// `F^T(0,0) / T`
    pub gain: f64,
    /// `F^{T/2}(0,0) / (T/2)`
    pub gain_half: f64,
    /// `F^T(0,0) − F^{T−1}(0,0)`
    pub increment: f64,
    /// `F^{T/2}(0,0) − F^{T/2−1}(0,0)`
    pub increment_half: f64,
    /// `F^T` on the whole grid.
    pub values: Vec<f64>,
}

impl BiasTable {
    fn slot(&self, s: State) -> Option<usize> {
        if s.n1 > self.window || s.n2 > self.window {
            return None;
        }
        Some(s.n1 as usize * (self.window as usize + 1) + s.n2 as usize)
    }

    /// `max_{t ≤ T} |D^t_d(s)| / γ_u`; `None` outside the window.
    pub fn sup_dir(&self, s: State, d: Dir) -> Option<f64> {
        let k = self.slot(s)?;
        let slot = Dir::ALL.iter().position(|&x| x == d)?;
        Some(self.sup[k][slot])
    }

    /// `max_{t ≤ T, d} |D^t_d(s)| / γ_u`.
    pub fn sup_abs(&self, s: State) -> Option<f64> {
        let k = self.slot(s)?;
        Some(self.sup[k].iter().copied().fold(0.0, f64::max))
    }

    /// Largest change of any tracked supremum between `T/2` and `T`.
    pub fn sup_drift(&self) -> f64 {
        self.sup
            .iter()
            .zip(&self.sup_half)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Whether the per-step gain has settled between `T/2` and `T`.
    pub fn gain_converged(&self) -> bool {
        (self.increment - self.increment_half).abs() < 1e-6
    }

    /// Largest tracked bias over states in the window, all directions.
    pub fn window_max(&self) -> f64 {
        self.sup.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Largest bias over the directions whose rates differ between the base and
/// the perturbed walk, per boundary state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasData {
    /// Index `n₁` for states `(n₁, 0)`, `1 ≤ n₁ ≤ window`; entry 0 unused.
    pub horizontal: Vec<f64>,
    /// Index `n₂` for states `(0, n₂)`.
    pub vertical: Vec<f64>,
    pub origin: f64,
}

fn active_dirs<'a>(base: &'a RandomWalk, walk: &'a PerturbedWalk, s: State) -> impl Iterator<Item = (Dir, f64)> + 'a {
    s.neighborhood()
        .iter()
        .map(move |&d| (d, (walk.rate(s, d) - base.rate(s, d)).abs()))
        .filter(|&(_, diff)| diff > 0.0)
}

/// Oracle quantities of a base walk shared by several perturbations.
#[derive(Debug, Clone)]
pub struct BaseOracle {
    base: RandomWalk,
    chain: TruncatedChain,
    pi: Vec<f64>,
    tables: Vec<(Reward, BiasTable)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub truncation: u32,
    pub horizon: usize,
    pub window: u32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { truncation: DEFAULT_TRUNCATION, horizon: DEFAULT_HORIZON, window: DEFAULT_WINDOW }
    }
}

/// Outcome of comparing `|F̄ − F|` with a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerificationReport {
    pub f_bar: f64,
    pub f_oracle: f64,
    pub bound: f64,
    pub allowance: f64,
    /// `|F̄ − F| − bound − allowance`; non-positive when the bound holds.
    pub margin: f64,
    pub passed: bool,
    /// Whether the bias bounds dominate the observed bias terms on the window
    /// (only meaningful when bias bounds were supplied).
    pub conditions_hold: Option<bool>,
    pub gain_converged: bool,
    pub sup_drift: f64,
}

impl BaseOracle {
    pub fn new(base: &RandomWalk, config: OracleConfig, rewards: &[Reward]) -> Result<Self> {
        let chain = TruncatedChain::new(base, config.truncation, Some(base.gamma()))?;
        let pi = chain.stationary()?;
        let tables = rewards
            .iter()
            .map(|r| (r.clone(), chain.value_iteration(r, config.horizon, config.window)))
            .collect();
        Ok(BaseOracle { base: base.clone(), chain, pi, tables })
    }

    pub fn chain(&self) -> &TruncatedChain {
        &self.chain
    }

    pub fn stationary(&self) -> &[f64] {
        &self.pi
    }

    pub fn expected(&self, reward: &Reward) -> f64 {
        self.pi
            .iter()
            .enumerate()
            .map(|(i, p)| p * reward.eval(self.chain.state(i)))
            .sum()
    }

    pub fn table(&self, reward: &Reward) -> Result<&BiasTable> {
        self.tables
            .iter()
            .find(|(r, _)| r == reward)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::UnsupportedReward(format!("{} was not evaluated", reward.name())))
    }

    /// Largest bias over directions with a rate difference, on each axis
    /// state of the window and at the origin.
    pub fn bias_data(&self, reward: &Reward, walk: &PerturbedWalk) -> Result<BiasData> {
        let table = self.table(reward)?;
        let w = table.window;
        let sup_over = |s: State| {
            active_dirs(&self.base, walk, s)
                .filter_map(|(d, _)| table.sup_dir(s, d))
                .fold(0.0, f64::max)
        };
        let mut horizontal = vec![0.0; w as usize + 1];
        let mut vertical = vec![0.0; w as usize + 1];
        for n in 1..=w {
            horizontal[n as usize] = sup_over(State::new(n, 0));
            vertical[n as usize] = sup_over(State::new(0, n));
        }
        Ok(BiasData { horizontal, vertical, origin: sup_over(State::ORIGIN) })
    }

    /// Truncation allowance for `|F̄ − F|` on this grid.
    pub fn allowance(&self, walk: &PerturbedWalk, reward: &Reward) -> f64 {
        let n = self.chain.truncation();
        let pi_bar = walk.pi_bar();
        let max_f = (0..self.chain.num_states())
            .map(|i| reward.eval(self.chain.state(i)).abs())
            .fold(0.0, f64::max);
        2.0 * (pi_bar.tail_mass(n) * max_f + reward.tail_under(pi_bar, n)) + NUMERICAL_SLACK
    }

    /// Compares `|F̄ − F|` with `bound`; with bias bounds also checks that
    /// they dominate the observed bias terms on the window.
    pub fn check(
        &self,
        walk: &PerturbedWalk,
        reward: &Reward,
        bound: f64,
        bias: Option<&BiasBounds>,
    ) -> Result<VerificationReport> {
        let f_bar = walk.pi_bar().expected_reward(reward)?;
        let f_oracle = self.expected(reward);
        let allowance = self.allowance(walk, reward);
        let margin = (f_bar - f_oracle).abs() - bound - allowance;
        let table = self.table(reward)?;
        let conditions_hold = bias.map(|b| self.conditions_hold(walk, table, b));
        Ok(VerificationReport {
            f_bar,
            f_oracle,
            bound,
            allowance,
            margin,
            passed: margin <= 0.0,
            conditions_hold,
            gain_converged: table.gain_converged(),
            sup_drift: table.sup_drift(),
        })
    }

    fn conditions_hold(&self, walk: &PerturbedWalk, table: &BiasTable, bias: &BiasBounds) -> bool {
        let tol = 1e-9;
        let weighted = |s: State, bound: f64| {
            let (mut seen, mut allowed) = (0.0, 0.0);
            for (d, diff) in active_dirs(&self.base, walk, s) {
                seen += diff * table.sup_dir(s, d).unwrap_or(0.0);
                allowed += diff * bound;
            }
            seen <= allowed + tol
        };
        (1..=table.window).all(|n| {
            weighted(State::new(n, 0), bias.horizontal(n)) && weighted(State::new(0, n), bias.vertical(n))
        }) && weighted(State::ORIGIN, bias.b3)
    }
}

/// Full check of one perturbation: oracle solve, bound, comparison.
pub fn verify_bound(
    base: &RandomWalk,
    walk: &PerturbedWalk,
    reward: &Reward,
    bias: &BiasBounds,
    config: OracleConfig,
) -> Result<VerificationReport> {
    let bound = error_bound(base, walk, bias)?.total;
    let oracle = BaseOracle::new(base, config, std::slice::from_ref(reward))?;
    let report = oracle.check(walk, reward, bound, Some(bias))?;
    if !report.passed {
        return Err(Error::BoundViolated { margin: report.margin });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errorbound::product_form_rho;
    use crate::geomsum::{GeometricSum, GeometricTerm};
    use crate::model::{intersect_q_with, Curve};
    use crate::perturb::build_perturbation;
    use approx::assert_abs_diff_eq;

    fn jd(mu_star: f64) -> RandomWalk {
        RandomWalk::joint_departures(0.2, 0.6, mu_star).unwrap()
    }

    fn two_term_walk(w: &RandomWalk) -> PerturbedWalk {
        let (r1, s1) = intersect_q_with(w, Curve::H).unwrap()[0];
        let (r2, s2) = intersect_q_with(w, Curve::V).unwrap()[0];
        let pi = GeometricSum::normalize(vec![
            GeometricTerm::new(r1, s1, 1.0),
            GeometricTerm::new(r2, s2, 1.0),
        ])
        .unwrap();
        build_perturbation(w, &pi, 0.2, 0.2).unwrap()
    }

    #[test]
    fn single_state_grid() {
        let chain = TruncatedChain::new(&jd(0.18), 0, None).unwrap();
        assert_eq!(chain.stationary().unwrap(), vec![1.0]);
    }

    #[test]
    fn stochastic_rows() {
        let w = jd(0.18);
        let chain = TruncatedChain::new(&w, 30, Some(w.gamma())).unwrap();
        assert!(chain.row_sum_error() < 1e-12);
        assert!(TruncatedChain::new(&w, 30, Some(0.5)).is_err());
    }

    #[test]
    fn product_form_recovered() {
        let w = jd(0.3);
        let rho = product_form_rho(0.2, 0.6);
        let pi_bar = GeometricSum::product_form(rho, rho).unwrap();
        let chain = TruncatedChain::new(&w, 60, None).unwrap();
        let pi = chain.stationary().unwrap();
        assert!(chain.balance_residual(&pi) < 1e-12);
        let tv: f64 = (0..chain.num_states())
            .map(|i| (pi[i] - pi_bar.evaluate(chain.state(i))).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1e-6, "tv {tv}");
    }

    #[test]
    fn perturbed_chain_matches_geometric_sum() {
        let w = jd(0.18);
        let p = two_term_walk(&w);
        let n = 80;
        let chain = TruncatedChain::new(&p, n, None).unwrap();
        let pi = chain.stationary().unwrap();
        let tail = p.pi_bar().tail_mass(n);
        let tv: f64 = (0..chain.num_states())
            .map(|i| (pi[i] - p.pi_bar().evaluate(chain.state(i))).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 2.0 * tail + 1e-10, "tv {tv} tail {tail}");
    }

    #[test]
    fn gauss_seidel_agrees_with_block_solve() {
        let w = jd(0.24);
        let chain = TruncatedChain::new(&w, 20, None).unwrap();
        let direct = chain.block_solve().unwrap();
        let mut iter = vec![1.0 / chain.num_states() as f64; chain.num_states()];
        chain.gauss_seidel(&mut iter, GS_MAX_SWEEPS).unwrap();
        for (a, b) in direct.iter().zip(&iter) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn value_iteration_basics() {
        let w = jd(0.18);
        let chain = TruncatedChain::new(&w, 15, None).unwrap();
        let zero = chain.value_iteration(&Reward::OriginIndicator, 0, 10);
        assert_eq!(zero.window_max(), 0.0);
        let constant = Reward::Polynomial(vec![crate::geomsum::Monomial { coeff: 2.5, a: 0, b: 0 }]);
        let t = chain.value_iteration(&constant, 40, 10);
        assert_eq!(t.window_max(), 0.0);
        assert!(t.values.iter().all(|&v| (v - 100.0).abs() < 1e-12));
    }

    #[test]
    fn bias_matches_explicit_recursion() {
        // compare with a direct evaluation of the recursion on a tiny grid
        let w = jd(0.18);
        let n = 4;
        let chain = TruncatedChain::new(&w, n, None).unwrap();
        let reward = Reward::queue_length();
        let horizon = 12;
        let table = chain.value_iteration(&reward, horizon, n);
        let states: Vec<State> = (0..=n).flat_map(|a| (0..=n).map(move |b| State::new(a, b))).collect();
        let mut f = vec![0.0; states.len()];
        let mut best = vec![0.0f64; states.len()];
        for _ in 0..horizon {
            let mut g = vec![0.0; states.len()];
            for (i, &s) in states.iter().enumerate() {
                let mut acc = reward.eval(s);
                let mut stay = 1.0;
                for &d in s.neighborhood() {
                    if let Some(t) = s.step(d).filter(|t| t.n1 <= n && t.n2 <= n) {
                        let p = w.rate(s, d) / w.gamma();
                        acc += p * f[chain.index(t)];
                        stay -= p;
                    }
                }
                g[i] = acc + stay * f[i];
            }
            f = g;
            for (i, &s) in states.iter().enumerate() {
                for &d in s.neighborhood() {
                    if let Some(t) = s.step(d).filter(|t| t.n1 <= n && t.n2 <= n) {
                        best[i] = best[i].max((f[chain.index(t)] - f[i]).abs());
                    }
                }
            }
        }
        for (i, &s) in states.iter().enumerate() {
            assert_abs_diff_eq!(table.sup_abs(s).unwrap(), best[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn verify_exact_case() {
        let w = jd(0.3);
        let rho = product_form_rho(0.2, 0.6);
        let pi = GeometricSum::product_form(rho, rho).unwrap();
        let p = build_perturbation(&w, &pi, 0.2, 0.2).unwrap();
        let cfg = OracleConfig { truncation: 60, horizon: 400, window: 30 };
        let report = verify_bound(&w, &p, &Reward::OriginIndicator, &BiasBounds::constant(5.0).unwrap(), cfg).unwrap();
        assert!((report.f_bar - report.f_oracle).abs() < 1e-6);
        assert!(report.bound.abs() < 1e-12);
    }

    #[test]
    fn verify_reports_violation() {
        let w = jd(0.18);
        let p = two_term_walk(&w);
        let cfg = OracleConfig { truncation: 60, horizon: 200, window: 30 };
        let tiny = BiasBounds::constant(1e-9).unwrap();
        assert!(matches!(
            verify_bound(&w, &p, &Reward::OriginIndicator, &tiny, cfg),
            Err(Error::BoundViolated { .. })
        ));
    }

    #[test]
    fn bias_data_uses_changed_directions() {
        let w = jd(0.18);
        let p = two_term_walk(&w);
        let cfg = OracleConfig { truncation: 40, horizon: 300, window: 20 };
        let oracle = BaseOracle::new(&w, cfg, &[Reward::OriginIndicator]).unwrap();
        let data = oracle.bias_data(&Reward::OriginIndicator, &p).unwrap();
        let table = oracle.table(&Reward::OriginIndicator).unwrap();
        for n in 1..=20 {
            let s = State::new(n, 0);
            assert_eq!(data.horizontal[n as usize], table.sup_dir(s, Dir::new(-1, 0)).unwrap());
        }
        // nothing changes at the origin here
        assert_eq!(data.origin, 0.0);
    }
}
