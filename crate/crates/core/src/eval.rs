//! Robust policy evaluation, deviations and equilibrium gaps.
//!
//! Every routine is a backward induction against the TV dual of the next
//! layer. Deviations use smallest-index tie-breaking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::game::{product_deviation, JointPolicy, PolicyKind, RobustMarkovGame, ValueTensor};
use crate::nvi::robust_continuations;
use crate::tv::SortedValues;

/// A deterministic deviation of one agent: an action per `(h, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub agent: usize,
    /// Action at `h * S + s`.
    pub actions: Vec<usize>,
    /// Single-agent value tensor of the deviation.
    pub values: ValueTensor,
}

/// A strategy modification: a map from recommended to played action per `(h, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    pub agent: usize,
    /// `map[h * S + s][a_i]` is the action played when `a_i` is recommended.
    pub map: Vec<Vec<usize>>,
    pub values: ValueTensor,
}

fn check_shape(game: &RobustMarkovGame, policy: &JointPolicy) -> Result<()> {
    if policy.actions() != game.actions()
        || policy.horizon() != game.horizon()
        || policy.state_count() != game.state_count()
    {
        return Err(RmgError::ShapeMismatch(format!(
            "policy has H={}, S={}, actions {:?}; game has H={}, S={}, actions {:?}",
            policy.horizon(),
            policy.state_count(),
            policy.actions().sizes(),
            game.horizon(),
            game.state_count(),
            game.actions().sizes()
        )));
    }
    Ok(())
}

fn check_agent(game: &RobustMarkovGame, agent: usize) -> Result<()> {
    if agent >= game.agent_count() {
        return Err(RmgError::ShapeMismatch(format!(
            "agent {agent} out of range for {} agents",
            game.agent_count()
        )));
    }
    Ok(())
}

/// Robust value of `policy` for every agent.
pub fn robust_policy_eval(game: &RobustMarkovGame, policy: &JointPolicy) -> Result<ValueTensor> {
    check_shape(game, policy)?;
    let (horizon, states, n) = (game.horizon(), game.state_count(), game.agent_count());
    let mut values = ValueTensor::zeros(n, horizon, states);
    for i in 0..n {
        let sigma = game.sigma()[i];
        for h in (0..horizon).rev() {
            let next = SortedValues::new(values.layer(i, h + 1));
            let layer: Vec<f64> = (0..states)
                .into_par_iter()
                .map(|s| {
                    let cont = robust_continuations(game, &next, sigma, h, s);
                    policy
                        .cell(h, s)
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(a, &p)| p * (game.reward(i, h, s, a) + cont[a]))
                        .sum()
                })
                .collect();
            drop(next);
            values.layer_mut(i, h).copy_from_slice(&layer);
        }
    }
    Ok(values)
}

/// Robust best response of `agent` to the others' marginal play under `policy`.
pub fn robust_best_response(
    game: &RobustMarkovGame,
    policy: &JointPolicy,
    agent: usize,
) -> Result<BestResponse> {
    check_shape(game, policy)?;
    check_agent(game, agent)?;
    let (horizon, states) = (game.horizon(), game.state_count());
    let actions = game.actions();
    let sigma = game.sigma()[agent];
    let mut values = ValueTensor::zeros(1, horizon, states);
    let mut best = vec![0; horizon * states];
    for h in (0..horizon).rev() {
        let next = SortedValues::new(values.layer(0, h + 1));
        let layer: Vec<(usize, f64)> = (0..states)
            .into_par_iter()
            .map(|s| {
                let others = policy.marginal_excluding(h, s, agent);
                let cont = robust_continuations(game, &next, sigma, h, s);
                let mut choice = (0, f64::NEG_INFINITY);
                for b in 0..actions.size(agent) {
                    let value: f64 = others
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m != 0.0)
                        .map(|(rest, &m)| {
                            let a = actions.join(b, rest, agent);
                            m * (game.reward(agent, h, s, a) + cont[a])
                        })
                        .sum();
                    if value > choice.1 {
                        choice = (b, value);
                    }
                }
                choice
            })
            .collect();
        drop(next);
        for (s, (b, v)) in layer.into_iter().enumerate() {
            best[h * states + s] = b;
            values.set(0, h, s, v);
        }
    }
    Ok(BestResponse {
        agent,
        actions: best,
        values,
    })
}

/// Best strategy modification of `agent` against the correlated recommendations of `policy`.
///
/// Recommendations with zero probability keep the identity map.
pub fn best_strategy_modification(
    game: &RobustMarkovGame,
    policy: &JointPolicy,
    agent: usize,
) -> Result<Modification> {
    check_shape(game, policy)?;
    check_agent(game, agent)?;
    let (horizon, states) = (game.horizon(), game.state_count());
    let actions = game.actions();
    let size = actions.size(agent);
    let sigma = game.sigma()[agent];
    let mut values = ValueTensor::zeros(1, horizon, states);
    let mut map = vec![Vec::new(); horizon * states];
    for h in (0..horizon).rev() {
        let next = SortedValues::new(values.layer(0, h + 1));
        let layer: Vec<(Vec<usize>, f64)> = (0..states)
            .into_par_iter()
            .map(|s| {
                let cell = policy.cell(h, s);
                let cont = robust_continuations(game, &next, sigma, h, s);
                let mut f = (0..size).collect::<Vec<_>>();
                let mut total = 0.0;
                for (own, slot) in f.iter_mut().enumerate() {
                    let weights: Vec<(usize, f64)> = (0..actions.others_total(agent))
                        .map(|rest| (rest, cell[actions.join(own, rest, agent)]))
                        .filter(|&(_, m)| m != 0.0)
                        .collect();
                    if weights.is_empty() {
                        continue;
                    }
                    let mut choice = (own, f64::NEG_INFINITY);
                    for b in 0..size {
                        let value: f64 = weights
                            .iter()
                            .map(|&(rest, m)| {
                                let a = actions.join(b, rest, agent);
                                m * (game.reward(agent, h, s, a) + cont[a])
                            })
                            .sum();
                        if value > choice.1 {
                            choice = (b, value);
                        }
                    }
                    *slot = choice.0;
                    total += choice.1;
                }
                (f, total)
            })
            .collect();
        drop(next);
        for (s, (f, v)) in layer.into_iter().enumerate() {
            map[h * states + s] = f;
            values.set(0, h, s, v);
        }
    }
    Ok(Modification { agent, map, values })
}

/// Per-agent gaps `max_s [V_dev(s) - V_pi(s)]` at the first step, clamped at zero.
fn agent_gaps(
    game: &RobustMarkovGame,
    policy: &JointPolicy,
    deviation: impl Fn(usize) -> Result<ValueTensor>,
) -> Result<Vec<f64>> {
    let own = robust_policy_eval(game, policy)?;
    (0..game.agent_count())
        .map(|i| {
            let dev = deviation(i)?;
            Ok((0..game.state_count())
                .map(|s| dev.get(0, 0, s) - own.get(i, 0, s))
                .fold(0.0, f64::max))
        })
        .collect()
}

fn max_of(gaps: Vec<f64>) -> f64 {
    gaps.into_iter().fold(0.0, f64::max)
}

/// Unilateral best-response gap of each agent.
pub fn agent_gaps_cce(game: &RobustMarkovGame, policy: &JointPolicy) -> Result<Vec<f64>> {
    agent_gaps(game, policy, |i| Ok(robust_best_response(game, policy, i)?.values))
}

/// Strategy-modification gap of each agent.
pub fn agent_gaps_ce(game: &RobustMarkovGame, policy: &JointPolicy) -> Result<Vec<f64>> {
    agent_gaps(game, policy, |i| Ok(best_strategy_modification(game, policy, i)?.values))
}

/// Nash gap; rejects correlated policies.
pub fn gap_ne(game: &RobustMarkovGame, policy: &JointPolicy) -> Result<f64> {
    if policy.kind() != PolicyKind::Product {
        check_shape(game, policy)?;
        let deviation = (0..game.horizon())
            .flat_map(|h| (0..game.state_count()).map(move |s| (h, s)))
            .map(|(h, s)| product_deviation(policy.actions(), policy.cell(h, s)))
            .fold(0.0, f64::max);
        return Err(RmgError::NotProductDistribution { deviation });
    }
    Ok(max_of(agent_gaps_cce(game, policy)?))
}

pub fn gap_cce(game: &RobustMarkovGame, policy: &JointPolicy) -> Result<f64> {
    Ok(max_of(agent_gaps_cce(game, policy)?))
}

pub fn gap_ce(game: &RobustMarkovGame, policy: &JointPolicy) -> Result<f64> {
    Ok(max_of(agent_gaps_ce(game, policy)?))
}

/// Gap matching an equilibrium notion.
pub fn gap(
    game: &RobustMarkovGame,
    policy: &JointPolicy,
    kind: crate::equilibrium::EquilibriumKind,
) -> Result<f64> {
    use crate::equilibrium::EquilibriumKind::*;
    match kind {
        Nash => gap_ne(game, policy),
        Cce => gap_cce(game, policy),
        Ce => gap_ce(game, policy),
    }
}
