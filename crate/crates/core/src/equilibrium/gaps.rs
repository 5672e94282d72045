//! Incentive-gap certifiers for stage-game distributions.

use super::StageGame;
use crate::error::{Result, RmgError};
use crate::game::{marginal_excluding, product_deviation, MARGINAL_TOL};

/// Largest gain any agent obtains by committing to a fixed action instead of
/// following `x` (coarse correlated equilibrium gap).
pub fn stage_gap_cce(game: &StageGame, x: &[f64]) -> f64 {
    let actions = game.actions();
    (0..game.agent_count())
        .map(|agent| {
            let others = marginal_excluding(actions, x, agent);
            let best = game
                .deviation_payoffs(agent, &others)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            best - game.expected_payoff(agent, x)
        })
        .fold(0.0, f64::max)
}

/// Largest gain any agent obtains from a swap map `a_i -> b(a_i)` applied to
/// its recommendations (correlated equilibrium gap).
pub fn stage_gap_ce(game: &StageGame, x: &[f64]) -> f64 {
    let actions = game.actions();
    (0..game.agent_count())
        .map(|agent| {
            let size = actions.size(agent);
            let u = game.payoff(agent);
            // conditional[a_i][rest] = x(a_i, rest)
            let mut conditional = vec![vec![0.0; actions.others_total(agent)]; size];
            for (a, &mass) in x.iter().enumerate() {
                let (own, rest) = actions.split(a, agent);
                conditional[own][rest] = mass;
            }
            conditional
                .iter()
                .enumerate()
                .map(|(own, weights)| {
                    let follow: f64 = weights
                        .iter()
                        .enumerate()
                        .map(|(rest, &m)| m * u[actions.join(own, rest, agent)])
                        .sum();
                    (0..size)
                        .map(|b| {
                            weights
                                .iter()
                                .enumerate()
                                .map(|(rest, &m)| m * u[actions.join(b, rest, agent)])
                                .sum::<f64>()
                                - follow
                        })
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Unilateral deviation gap of a product distribution.
pub fn stage_gap_ne(game: &StageGame, x: &[f64]) -> Result<f64> {
    let deviation = product_deviation(game.actions(), x);
    if deviation > MARGINAL_TOL {
        return Err(RmgError::NotProductDistribution { deviation });
    }
    Ok(stage_gap_cce(game, x))
}
