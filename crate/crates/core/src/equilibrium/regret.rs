//! No-regret dynamics for coarse correlated and correlated equilibria.
//!
//! Both solvers run deterministic full-information dynamics from uniform
//! strategies and return the time average of the per-round product
//! distributions. The incentive gap of that average is recomputed by the
//! certifier, and the run stops as soon as it is within tolerance.

use super::gaps::{stage_gap_ce, stage_gap_cce};
use super::nash::{compute_pure_nash, solve_linear};
use super::{EquilibriumKind, EquilibriumSolution, StageGame};

const WARMUP: usize = 64;

/// Certifier schedule: every round during warm-up, then every 8 rounds up to
/// 4096, then every 64.
fn should_check(t: usize, max_iters: usize) -> bool {
    t <= WARMUP || (t <= 4096 && t.is_multiple_of(8)) || t.is_multiple_of(64) || t == max_iters
}

/// Index tables shared by the learners of one stage game.
struct Tables {
    n: usize,
    sizes: Vec<usize>,
    // digits[a * n + j]: action of agent j in profile a
    digits: Vec<usize>,
    // per agent, joined[i][b * others + rest] = profile (b, rest)
    joined: Vec<Vec<usize>>,
    // per agent, payoff[i][b * others + rest]
    payoff: Vec<Vec<f64>>,
}

impl Tables {
    fn new(game: &StageGame) -> Self {
        let actions = game.actions();
        let n = actions.agent_count();
        let digits = (0..actions.total()).flat_map(|a| actions.decode(a)).collect();
        let joined: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let others = actions.others_total(i);
                (0..actions.size(i) * others)
                    .map(|k| actions.join(k / others, k % others, i))
                    .collect()
            })
            .collect();
        let payoff = (0..n)
            .map(|i| joined[i].iter().map(|&a| game.payoff(i)[a]).collect())
            .collect();
        Self {
            n,
            sizes: actions.sizes().to_vec(),
            digits,
            joined,
            payoff,
        }
    }

    /// Adds the product of `strategies` to `sum`.
    fn accumulate(&self, strategies: &[Vec<f64>], sum: &mut [f64]) {
        for (a, acc) in sum.iter_mut().enumerate() {
            let d = &self.digits[a * self.n..(a + 1) * self.n];
            let mut p = 1.0;
            for (j, s) in strategies.iter().enumerate() {
                p *= s[d[j]];
            }
            *acc += p;
        }
    }

    /// Payoff of each own action of `agent` against the others' product play.
    fn action_payoffs(&self, strategies: &[Vec<f64>], agent: usize, out: &mut [f64]) {
        let size = self.sizes[agent];
        let others = self.joined[agent].len() / size;
        out.iter_mut().for_each(|x| *x = 0.0);
        for rest in 0..others {
            let d = &self.digits[self.joined[agent][rest] * self.n..][..self.n];
            let mut q = 1.0;
            for (j, s) in strategies.iter().enumerate() {
                if j != agent {
                    q *= s[d[j]];
                }
            }
            if q == 0.0 {
                continue;
            }
            for (b, o) in out.iter_mut().enumerate() {
                *o += q * self.payoff[agent][b * others + rest];
            }
        }
    }
}

fn payoff_scale(game: &StageGame, agent: usize) -> f64 {
    let u = game.payoff(agent);
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn pure_shortcut(game: &StageGame, kind: EquilibriumKind) -> Option<EquilibriumSolution> {
    // a pure Nash profile is both a CE and a CCE with zero gap
    let mut sol = compute_pure_nash(game)?;
    sol.kind = kind;
    sol.factors = None;
    sol.iterations = 0;
    sol.certified_gap = match kind {
        EquilibriumKind::Ce => stage_gap_ce(game, &sol.dist),
        _ => stage_gap_cce(game, &sol.dist),
    };
    Some(sol)
}

/// Coarse correlated equilibrium by simultaneous multiplicative weights.
///
/// Each agent plays `x_t(b) ~ exp(eta_t * G_{t-1}(b))` where `G` is its
/// cumulative payoff (rescaled to `[0, 1]`) against the opponents' mixed
/// strategies and `eta_t = sqrt(8 ln |A_i| / t)`. Games with a pure
/// equilibrium return it directly.
pub fn compute_cce(game: &StageGame, tol: f64, max_iters: usize) -> EquilibriumSolution {
    if let Some(sol) = pure_shortcut(game, EquilibriumKind::Cce) {
        return sol;
    }
    let actions = game.actions();
    let n = game.agent_count();
    let scales: Vec<f64> = (0..n).map(|i| payoff_scale(game, i)).collect();
    let mut strategies: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![1.0 / actions.size(i) as f64; actions.size(i)])
        .collect();
    let mut cumulative: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; actions.size(i)]).collect();
    let tables = Tables::new(game);
    let mut payoffs: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; actions.size(i)]).collect();
    let mut sum = vec![0.0; actions.total()];
    let mut avg = vec![0.0; actions.total()];
    let mut gap = f64::INFINITY;
    let mut t = 0;

    while t < max_iters {
        t += 1;
        tables.accumulate(&strategies, &mut sum);
        for (i, out) in payoffs.iter_mut().enumerate() {
            tables.action_payoffs(&strategies, i, out);
        }
        for i in 0..n {
            let scale = if scales[i] > 0.0 { scales[i] } else { 1.0 };
            for (g, p) in cumulative[i].iter_mut().zip(&payoffs[i]) {
                *g += p / scale;
            }
            let size = actions.size(i);
            let eta = (8.0 * (size as f64).ln() / (t + 1) as f64).sqrt();
            let top = cumulative[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (x, g) in strategies[i].iter_mut().zip(&cumulative[i]) {
                *x = (eta * (g - top)).exp();
            }
            let total: f64 = strategies[i].iter().sum();
            strategies[i].iter_mut().for_each(|x| *x /= total);
        }
        if should_check(t, max_iters) {
            for (a, s) in avg.iter_mut().zip(&sum) {
                *a = s / t as f64;
            }
            gap = stage_gap_cce(game, &avg);
            if gap <= tol {
                break;
            }
        }
    }
    EquilibriumSolution {
        dist: avg,
        factors: None,
        certified_gap: gap,
        kind: EquilibriumKind::Cce,
        iterations: t,
        converged: gap <= tol,
    }
}

/// Stationary distribution `q = q M` of a row-stochastic matrix.
fn stationary(matrix: &[Vec<f64>], previous: &[f64]) -> Vec<f64> {
    let k = matrix.len();
    // (M^T - I) q = 0 with the last equation replaced by sum(q) = 1
    let mut a = vec![vec![0.0; k]; k];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = matrix[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    a[k - 1] = vec![1.0; k];
    let mut b = vec![0.0; k];
    b[k - 1] = 1.0;
    if let Some(q) = solve_linear(a, b) {
        if q.iter().all(|&x| x >= -1e-12) {
            let q: Vec<f64> = q.into_iter().map(|x| x.max(0.0)).collect();
            let total: f64 = q.iter().sum();
            if total > 0.0 {
                return q.into_iter().map(|x| x / total).collect();
            }
        }
    }
    // reducible chain: lazy power iteration from the previous strategy
    let mut q = previous.to_vec();
    for _ in 0..10_000 {
        let mut next = vec![0.0; k];
        for (j, &mass) in q.iter().enumerate() {
            for (c, &m) in matrix[j].iter().enumerate() {
                next[c] += 0.5 * mass * m;
            }
            next[j] += 0.5 * mass;
        }
        let change: f64 = next.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum();
        q = next;
        if change < 1e-15 {
            break;
        }
    }
    q
}

/// Correlated equilibrium by swap-regret minimization.
///
/// Each agent runs one regret-matching learner per recommended action; its
/// mixed strategy is the stationary distribution of the matrix whose row `j`
/// is learner `j`'s current distribution over replacement actions. Learner `j`
/// is charged its payoffs weighted by the probability of recommending `j`.
/// Games with a pure equilibrium return it directly.
pub fn compute_ce(game: &StageGame, tol: f64, max_iters: usize) -> EquilibriumSolution {
    if let Some(sol) = pure_shortcut(game, EquilibriumKind::Ce) {
        return sol;
    }
    let actions = game.actions();
    let n = game.agent_count();
    let mut strategies: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![1.0 / actions.size(i) as f64; actions.size(i)])
        .collect();
    // regret[i][j][k]: cumulative gain of playing k whenever j was recommended
    let mut regret: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| vec![vec![0.0; actions.size(i)]; actions.size(i)])
        .collect();
    let tables = Tables::new(game);
    let mut payoffs: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; actions.size(i)]).collect();
    let mut sum = vec![0.0; actions.total()];
    let mut avg = vec![0.0; actions.total()];
    let mut gap = f64::INFINITY;
    let mut t = 0;

    while t < max_iters {
        t += 1;
        tables.accumulate(&strategies, &mut sum);
        for (i, out) in payoffs.iter_mut().enumerate() {
            tables.action_payoffs(&strategies, i, out);
        }
        for i in 0..n {
            let size = actions.size(i);
            for j in 0..size {
                let weight = strategies[i][j];
                for k in 0..size {
                    regret[i][j][k] += weight * (payoffs[i][k] - payoffs[i][j]);
                }
            }
            let matrix: Vec<Vec<f64>> = (0..size)
                .map(|j| {
                    let positive: Vec<f64> = regret[i][j].iter().map(|r| r.max(0.0)).collect();
                    let total: f64 = positive.iter().sum();
                    if total > 0.0 {
                        positive.into_iter().map(|r| r / total).collect()
                    } else {
                        let mut stay = vec![0.0; size];
                        stay[j] = 1.0;
                        stay
                    }
                })
                .collect();
            strategies[i] = stationary(&matrix, &strategies[i]);
        }
        if should_check(t, max_iters) {
            for (a, s) in avg.iter_mut().zip(&sum) {
                *a = s / t as f64;
            }
            gap = stage_gap_ce(game, &avg);
            if gap <= tol {
                break;
            }
        }
    }
    EquilibriumSolution {
        dist: avg,
        factors: None,
        certified_gap: gap,
        kind: EquilibriumKind::Ce,
        iterations: t,
        converged: gap <= tol,
    }
}
