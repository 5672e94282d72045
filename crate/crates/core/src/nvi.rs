//! Robust equilibrium value iteration.
//!
//! Backward induction over `h = H-1..0`: robust Q tables from the TV dual
//! against the next layer of values, then one stage equilibrium per state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{self, EquilibriumKind, StageGame, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::error::{Result, RmgError};
use crate::game::{JointPolicy, QTensor, RobustMarkovGame, ValueTensor};
use crate::tv::SortedValues;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NviOptions {
    pub kind: EquilibriumKind,
    /// Target incentive gap of each stage equilibrium.
    pub sub_tol: f64,
    /// Iteration cap of the regret-based stage solvers.
    pub max_iters: usize,
    /// Worker threads; `0` uses the global rayon pool, `1` runs serially.
    pub workers: usize,
}

impl NviOptions {
    pub fn new(kind: EquilibriumKind) -> Self {
        Self {
            kind,
            sub_tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            workers: 1,
        }
    }

    pub fn sub_tol(mut self, sub_tol: f64) -> Self {
        self.sub_tol = sub_tol;
        self
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

#[derive(Debug, Clone)]
pub struct NviOutput {
    pub q: QTensor,
    pub values: ValueTensor,
    pub policy: JointPolicy,
    /// Certified stage gap per `(h, s)`, flattened `h * S + s`.
    pub stage_gaps: Vec<f64>,
    /// False if any regret-based stage solve stopped at its iteration cap.
    pub converged: bool,
}

impl NviOutput {
    pub fn max_stage_gap(&self) -> f64 {
        self.stage_gaps.iter().copied().fold(0.0, f64::max)
    }
}

struct StageResult {
    q: Vec<Vec<f64>>,
    dist: Vec<f64>,
    factors: Option<Vec<Vec<f64>>>,
    gap: f64,
    converged: bool,
}

/// Runs `f` on a pool with `workers` threads (`0` means the current pool).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RmgError::NumericalFailure(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Robust expectation of `next` under every joint profile at `(h, s)`, for one agent.
pub(crate) fn robust_continuations(
    game: &RobustMarkovGame,
    next: &SortedValues<'_>,
    sigma: f64,
    h: usize,
    s: usize,
) -> Vec<f64> {
    (0..game.actions().total())
        .map(|a| next.robust_expectation(game.kernel_row(h, s, a), sigma))
        .collect()
}

pub fn dr_nvi(game: &RobustMarkovGame, options: &NviOptions) -> Result<NviOutput> {
    if options.workers == 1 {
        run(game, options, false)
    } else {
        with_workers(options.workers, || run(game, options, true))?
    }
}

fn run(game: &RobustMarkovGame, options: &NviOptions, parallel: bool) -> Result<NviOutput> {
    let (horizon, states) = (game.horizon(), game.state_count());
    let n = game.agent_count();
    let actions = game.actions();
    let profiles = actions.total();
    let mut q = QTensor::zeros(n, horizon, states, profiles);
    let mut values = ValueTensor::zeros(n, horizon, states);
    let mut dist = vec![0.0; horizon * states * profiles];
    let mut factors = vec![Vec::new(); horizon * states * n];
    let mut stage_gaps = vec![0.0; horizon * states];
    let mut converged = true;

    for h in (0..horizon).rev() {
        let sorted: Vec<SortedValues<'_>> =
            (0..n).map(|i| SortedValues::new(values.layer(i, h + 1))).collect();
        let solve_state = |s: usize| -> Result<StageResult> {
            let q_rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let cont = robust_continuations(game, &sorted[i], game.sigma()[i], h, s);
                    cont.iter()
                        .enumerate()
                        .map(|(a, c)| game.reward(i, h, s, a) + c)
                        .collect()
                })
                .collect();
            let stage = StageGame::new(actions.clone(), q_rows.clone())?;
            let sol = equilibrium::solve(&stage, options.kind, options.sub_tol, options.max_iters)?;
            Ok(StageResult {
                q: q_rows,
                dist: sol.dist,
                factors: sol.factors,
                gap: sol.certified_gap,
                converged: sol.converged,
            })
        };
        let results: Vec<StageResult> = if parallel {
            (0..states).into_par_iter().map(solve_state).collect::<Result<_>>()?
        } else {
            (0..states).map(solve_state).collect::<Result<_>>()?
        };
        drop(sorted);

        for (s, res) in results.into_iter().enumerate() {
            for i in 0..n {
                let v: f64 = res.dist.iter().zip(&res.q[i]).map(|(p, x)| p * x).sum();
                values.set(i, h, s, v);
                q.row_mut(i, h, s).copy_from_slice(&res.q[i]);
            }
            let cell = h * states + s;
            dist[cell * profiles..(cell + 1) * profiles].copy_from_slice(&res.dist);
            if let Some(f) = res.factors {
                for (i, factor) in f.into_iter().enumerate() {
                    factors[cell * n + i] = factor;
                }
            }
            stage_gaps[cell] = res.gap;
            converged &= res.converged;
        }
    }

    let policy = match options.kind {
        EquilibriumKind::Nash => JointPolicy::product(actions.clone(), horizon, states, factors)?,
        _ => JointPolicy::correlated(actions.clone(), horizon, states, dist)?,
    };
    Ok(NviOutput {
        q,
        values,
        policy,
        stage_gaps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::JointActionSpace;
    use crate::instances::random::{random_game, RandomGameSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Standard finite-horizon optimal values by plain value iteration.
    fn plain_vi(game: &RobustMarkovGame) -> Vec<Vec<f64>> {
        let (horizon, states, acts) = (game.horizon(), game.state_count(), game.actions().total());
        let mut v = vec![vec![0.0; states]; horizon + 1];
        for h in (0..horizon).rev() {
            for s in 0..states {
                v[h][s] = (0..acts)
                    .map(|a| {
                        let row = game.kernel_row(h, s, a);
                        game.reward(0, h, s, a)
                            + row.iter().zip(&v[h + 1]).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        v
    }

    #[test]
    fn single_agent_without_uncertainty_matches_plain_vi() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let spec = RandomGameSpec::new(vec![3], 4, 5, vec![0.0]);
            let game = random_game(&spec, &mut rng).unwrap();
            let out = dr_nvi(&game, &NviOptions::new(EquilibriumKind::Nash)).unwrap();
            let oracle = plain_vi(&game);
            for h in 0..=game.horizon() {
                for s in 0..game.state_count() {
                    assert!((out.values.get(0, h, s) - oracle[h][s]).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn one_step_game_is_the_stage_equilibrium() {
        // matching pennies rewards on a single state, H = 1
        let actions = JointActionSpace::new(vec![2, 2]).unwrap();
        let reward = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let game =
            RobustMarkovGame::new(1, 1, actions, reward, vec![1.0; 4], vec![0.3, 0.3], (0.0, 1.0))
                .unwrap();
        let out = dr_nvi(&game, &NviOptions::new(EquilibriumKind::Nash)).unwrap();
        for p in out.policy.cell(0, 0) {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!((out.values.get(0, 0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_serial_runs_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = RandomGameSpec::new(vec![2, 2], 6, 4, vec![0.2, 0.1]);
        let game = random_game(&spec, &mut rng).unwrap();
        for kind in [EquilibriumKind::Cce, EquilibriumKind::Ce, EquilibriumKind::Nash] {
            let opts = NviOptions::new(kind).sub_tol(1e-4);
            let serial = dr_nvi(&game, &opts).unwrap();
            let parallel = dr_nvi(&game, &opts.workers(4)).unwrap();
            assert_eq!(serial.values, parallel.values);
            assert_eq!(serial.policy, parallel.policy);
            assert_eq!(serial.stage_gaps, parallel.stage_gaps);
        }
    }

    #[test]
    fn values_stay_within_reward_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = RandomGameSpec::new(vec![2, 3], 5, 4, vec![0.4, 0.05]);
        let game = random_game(&spec, &mut rng).unwrap();
        let out = dr_nvi(&game, &NviOptions::new(EquilibriumKind::Cce)).unwrap();
        for i in 0..2 {
            for h in 0..=4 {
                let steps = (4 - h) as f64;
                for s in 0..5 {
                    let v = out.values.get(i, h, s);
                    assert!(v >= -1e-12 && v <= steps + 1e-12);
                }
                let sigma = game.sigma()[i];
                assert!(out.values.span(i, h) <= (1.0 / sigma).min(steps) + 1e-9);
            }
        }
    }

    #[test]
    fn single_agent_values_decrease_in_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec = RandomGameSpec::new(vec![3], 5, 4, vec![0.0]);
        let game = random_game(&spec, &mut rng).unwrap();
        let mut previous: Option<ValueTensor> = None;
        for sigma in [0.0, 0.05, 0.1, 0.3, 0.6, 1.0] {
            let g = game.with_sigma(vec![sigma]).unwrap();
            let out = dr_nvi(&g, &NviOptions::new(EquilibriumKind::Nash)).unwrap();
            if let Some(prev) = &previous {
                for h in 0..=4 {
                    for s in 0..5 {
                        assert!(out.values.get(0, h, s) <= prev.get(0, h, s) + 1e-12);
                    }
                }
            }
            previous = Some(out.values);
        }
    }
}
