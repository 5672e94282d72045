//! Two-player fishing-protection game.
//!
//! States `0..=100` count punishments; the license is revoked at 100. The
//! fisher (agent 0) fishes legally (0) or illegally (1); the officer (agent 1)
//! stays home (0) or patrols (1). Illegal fishing below state 100 advances the
//! state with probability `p`. Profiles are encoded as `2 * a_0 + a_1`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{pure_nash_profiles, StageGame};
use crate::error::{Result, RmgError};
use crate::game::{JointActionSpace, RobustMarkovGame, ValueTensor};

pub const STATES: usize = 101;
pub const REVOKED: usize = STATES - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FishingGame {
    pub p: f64,
    pub horizon: usize,
}

impl FishingGame {
    pub fn new(p: f64, horizon: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(RmgError::ParameterRegimeViolation(format!("p = {p} is not in [0, 1]")));
        }
        if horizon == 0 {
            return Err(RmgError::ParameterRegimeViolation("horizon must be at least 1".into()));
        }
        Ok(Self { p, horizon })
    }

    /// Stage payoffs `[u_0, u_1]` over encoded profiles.
    pub fn stage_payoffs(&self) -> [Vec<f64>; 2] {
        stage_payoffs(self.p)
    }

    /// Probability row of the next state.
    pub fn kernel_row(&self, s: usize, profile: usize) -> Vec<f64> {
        kernel_row(self.p, s, profile)
    }

    /// The game as a concrete tabular game with radii `sigma`.
    pub fn to_game(&self, sigma: [f64; 2]) -> Result<RobustMarkovGame> {
        let actions = JointActionSpace::new(vec![2, 2])?;
        let u = self.stage_payoffs();
        let cells = self.horizon * STATES;
        let mut reward = Vec::with_capacity(2 * cells * 4);
        for payoff in &u {
            for _ in 0..cells {
                reward.extend_from_slice(payoff);
            }
        }
        let mut kernel = Vec::with_capacity(cells * 4 * STATES);
        for _ in 0..self.horizon {
            for s in 0..STATES {
                for a in 0..4 {
                    kernel.extend(self.kernel_row(s, a));
                }
            }
        }
        let min = reward.iter().copied().fold(f64::INFINITY, f64::min);
        let max = reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        RobustMarkovGame::new(self.horizon, STATES, actions, reward, kernel, sigma.to_vec(), (min, max))
    }
}

fn stage_payoffs(p: f64) -> [Vec<f64>; 2] {
    [
        vec![-1.0, -1.0, -20.0 * p, -20.0 * p],
        vec![1.0, 0.0, 1.0, 3.0 - 2.0 * p],
    ]
}

fn kernel_row(p: f64, s: usize, profile: usize) -> Vec<f64> {
    let mut row = vec![0.0; STATES];
    if profile >= 2 && s < REVOKED {
        row[s] = 1.0 - p;
        row[s + 1] += p;
    } else {
        row[s] = 1.0;
    }
    row
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishingSolution {
    /// Parameter the recursion was solved at: `p`, or `min(p + sigma, 1)` when robust.
    pub effective_p: f64,
    pub horizon: usize,
    /// Unique pure equilibrium profile at `h * STATES + s`.
    pub profiles: Vec<usize>,
    pub values: ValueTensor,
}

impl FishingSolution {
    /// `(a_0, a_1)` if the same profile is played at every `(h, s)`.
    pub fn constant_profile(&self) -> Option<(usize, usize)> {
        let first = *self.profiles.first()?;
        self.profiles
            .iter()
            .all(|&a| a == first)
            .then_some((first / 2, first % 2))
    }
}

/// Solves the game by backward induction with one pure equilibrium per cell.
///
/// The robust variant lets `p` move within `[p - sigma, p + sigma]`; both
/// agents' stage payoffs are decreasing in `p` and the continuation values do
/// not depend on the state, so the worst case is `p + sigma` for both.
pub fn fishing_solve(p: f64, horizon: usize, robust: bool, sigma: f64) -> Result<FishingSolution> {
    if robust && !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(RmgError::SigmaOutOfRange { agent: None, sigma });
    }
    FishingGame::new(p, horizon)?;
    let effective_p = if robust { (p + sigma).min(1.0) } else { p };
    let u = stage_payoffs(effective_p);
    let actions = JointActionSpace::new(vec![2, 2])?;
    let mut values = ValueTensor::zeros(2, horizon, STATES);
    let mut profiles = vec![0; horizon * STATES];
    for h in (0..horizon).rev() {
        for s in 0..STATES {
            let q: Vec<Vec<f64>> = (0..2)
                .map(|i| {
                    let next = values.layer(i, h + 1);
                    (0..4)
                        .map(|a| {
                            let cont: f64 = kernel_row(effective_p, s, a)
                                .iter()
                                .zip(next)
                                .map(|(w, v)| w * v)
                                .sum();
                            u[i][a] + cont
                        })
                        .collect()
                })
                .collect();
            let stage = StageGame::new(actions.clone(), q.clone())?;
            let equilibria = pure_nash_profiles(&stage);
            if equilibria.len() != 1 {
                return Err(RmgError::NonUniqueEquilibrium {
                    h,
                    s,
                    count: equilibria.len(),
                });
            }
            let a = equilibria[0];
            profiles[h * STATES + s] = a;
            values.set(0, h, s, q[0][a]);
            values.set(1, h, s, q[1][a]);
        }
    }
    Ok(FishingSolution {
        effective_p,
        horizon,
        profiles,
        values,
    })
}

/// Simulates the chain from state 0 under `profiles[h * STATES + s]` and
/// returns the terminal state.
pub fn fishing_rollout(p: f64, horizon: usize, profiles: &[usize], seed: u64) -> Result<usize> {
    FishingGame::new(p, horizon)?;
    if profiles.len() != horizon * STATES {
        return Err(RmgError::ShapeMismatch(format!(
            "{} profiles given, expected {}",
            profiles.len(),
            horizon * STATES
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = 0;
    for h in 0..horizon {
        let illegal = profiles[h * STATES + s] >= 2;
        if illegal && s < REVOKED && rng.random_bool(p) {
            s += 1;
        }
    }
    Ok(s)
}
