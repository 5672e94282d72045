//! One-shot (stage) game equilibria with certified incentive gaps.
//!
//! Every solver returns an [`EquilibriumSolution`] whose `certified_gap` is the
//! value of the matching certifier in [`gaps`] evaluated on the returned
//! distribution, never an a-priori bound.

pub mod gaps;
mod nash;
mod regret;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::game::JointActionSpace;

pub use gaps::{stage_gap_ce, stage_gap_cce, stage_gap_ne};
pub use nash::{compute_nash_2p, compute_pure_nash, pure_nash_profiles, PURE_NASH_TOL};
pub use regret::{compute_ce, compute_cce};

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumKind {
    Nash,
    Ce,
    Cce,
}

impl std::fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EquilibriumKind::Nash => "nash",
            EquilibriumKind::Ce => "ce",
            EquilibriumKind::Cce => "cce",
        })
    }
}

impl std::str::FromStr for EquilibriumKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nash" | "ne" => Ok(EquilibriumKind::Nash),
            "ce" => Ok(EquilibriumKind::Ce),
            "cce" => Ok(EquilibriumKind::Cce),
            other => Err(format!("unknown equilibrium kind `{other}` (expected nash, ce or cce)")),
        }
    }
}

/// Per-agent payoffs over encoded joint profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGame {
    actions: JointActionSpace,
    // [agent][profile]
    payoff: Vec<Vec<f64>>,
}

impl StageGame {
    pub fn new(actions: JointActionSpace, payoff: Vec<Vec<f64>>) -> Result<Self> {
        if payoff.len() != actions.agent_count()
            || payoff.iter().any(|u| u.len() != actions.total())
        {
            return Err(RmgError::ShapeMismatch(format!(
                "stage payoffs must have shape [{}][{}]",
                actions.agent_count(),
                actions.total()
            )));
        }
        if payoff.iter().flatten().any(|x| !x.is_finite()) {
            return Err(RmgError::NumericalFailure("stage payoffs must be finite".into()));
        }
        Ok(Self { actions, payoff })
    }

    /// Two-player game from row-major payoff matrices.
    pub fn bimatrix(rows: usize, cols: usize, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        Self::new(JointActionSpace::new(vec![rows, cols])?, vec![u1, u2])
    }

    pub fn actions(&self) -> &JointActionSpace {
        &self.actions
    }

    pub fn agent_count(&self) -> usize {
        self.actions.agent_count()
    }

    pub fn payoff(&self, agent: usize) -> &[f64] {
        &self.payoff[agent]
    }

    /// `sum_a x(a) u_i(a)`.
    pub fn expected_payoff(&self, agent: usize, x: &[f64]) -> f64 {
        self.payoff[agent].iter().zip(x).map(|(u, p)| u * p).sum()
    }

    /// Payoff of every own action `b` against a distribution over the other
    /// agents' profiles.
    pub fn deviation_payoffs(&self, agent: usize, others: &[f64]) -> Vec<f64> {
        let size = self.actions.size(agent);
        let u = &self.payoff[agent];
        (0..size)
            .map(|b| {
                others
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m != 0.0)
                    .map(|(rest, &m)| m * u[self.actions.join(b, rest, agent)])
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    /// Distribution over encoded joint profiles.
    pub dist: Vec<f64>,
    /// Per-agent mixed strategies, present when `dist` is their product.
    pub factors: Option<Vec<Vec<f64>>>,
    pub certified_gap: f64,
    pub kind: EquilibriumKind,
    pub iterations: usize,
    /// False when an iterative solver stopped at its iteration cap above tolerance.
    pub converged: bool,
}

/// Dispatches to the solver for `kind`.
///
/// Nash: pure enumeration first, then support enumeration for two players;
/// larger games without a pure equilibrium are rejected as intractable.
pub fn solve(
    game: &StageGame,
    kind: EquilibriumKind,
    tol: f64,
    max_iters: usize,
) -> Result<EquilibriumSolution> {
    match kind {
        EquilibriumKind::Nash => match compute_pure_nash(game) {
            Some(solution) => Ok(solution),
            None if game.agent_count() <= 2 => compute_nash_2p(game),
            None => Err(RmgError::NashIntractable {
                agents: game.agent_count(),
            }),
        },
        EquilibriumKind::Ce => Ok(compute_ce(game, tol, max_iters)),
        EquilibriumKind::Cce => Ok(compute_cce(game, tol, max_iters)),
    }
}
