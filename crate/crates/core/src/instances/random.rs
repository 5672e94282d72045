use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::{JointActionSpace, RobustMarkovGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardStructure {
    /// Every reward drawn independently from `U[0, 1]`.
    #[default]
    Independent,
    /// All agents share one reward table, so every stage game has a pure equilibrium.
    Common,
    /// Two-agent matching-pennies pattern plus noise, so stage equilibria tend to be mixed.
    Cyclic,
}

/// Shape and radii of a random game with rewards in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGameSpec {
    pub action_sizes: Vec<usize>,
    pub states: usize,
    pub horizon: usize,
    pub sigma: Vec<f64>,
    pub rewards: RewardStructure,
    /// Number of next states with positive probability in each row (`0` means all).
    pub support: usize,
}

impl RandomGameSpec {
    pub fn new(action_sizes: Vec<usize>, states: usize, horizon: usize, sigma: Vec<f64>) -> Self {
        Self {
            action_sizes,
            states,
            horizon,
            sigma,
            rewards: RewardStructure::Independent,
            support: 0,
        }
    }

    pub fn rewards(mut self, rewards: RewardStructure) -> Self {
        self.rewards = rewards;
        self
    }

    pub fn support(mut self, support: usize) -> Self {
        self.support = support;
        self
    }
}

/// Draws a normalized game. Kernel rows are normalized uniform weights on a
/// random support.
pub fn random_game(spec: &RandomGameSpec, rng: &mut impl Rng) -> Result<RobustMarkovGame> {
    let actions = JointActionSpace::new(spec.action_sizes.clone())?;
    let n = actions.agent_count();
    let (horizon, states, profiles) = (spec.horizon, spec.states, actions.total());
    let cells = horizon * states * profiles;

    let reward = match spec.rewards {
        RewardStructure::Independent => (0..n * cells).map(|_| rng.random::<f64>()).collect(),
        RewardStructure::Common => {
            let shared: Vec<f64> = (0..cells).map(|_| rng.random::<f64>()).collect();
            shared.iter().copied().cycle().take(n * cells).collect()
        }
        RewardStructure::Cyclic => {
            let mut r = vec![0.0; n * cells];
            for i in 0..n {
                for cell in 0..cells {
                    let profile = actions.decode(cell % profiles);
                    let matched = profile[0] == profile[(1).min(n - 1)];
                    let sign = if matched == (i % 2 == 0) { 1.0 } else { -1.0 };
                    let noise = rng.random::<f64>() - 0.5;
                    r[i * cells + cell] = (0.5 + 0.3 * sign + 0.3 * noise).clamp(0.0, 1.0);
                }
            }
            r
        }
    };

    let support = if spec.support == 0 { states } else { spec.support.min(states) };
    let mut kernel = Vec::with_capacity(cells * states);
    for _ in 0..cells {
        let mut chosen: Vec<usize> = (0..states).collect();
        for k in 0..support {
            let j = rng.random_range(k..states);
            chosen.swap(k, j);
        }
        let mut row = vec![0.0; states];
        for &s in &chosen[..support] {
            row[s] = rng.random::<f64>() + 1e-3;
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        kernel.extend(row);
    }
    RobustMarkovGame::new(horizon, states, actions, reward, kernel, spec.sigma.clone(), (0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_games_validate_and_repeat() {
        for structure in [RewardStructure::Independent, RewardStructure::Common, RewardStructure::Cyclic] {
            let spec = RandomGameSpec::new(vec![2, 3], 4, 3, vec![0.1, 0.2])
                .rewards(structure)
                .support(2);
            let a = random_game(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = random_game(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(a, b);
            assert!(a.normalized());
            for h in 0..3 {
                for s in 0..4 {
                    for p in 0..6 {
                        assert_eq!(a.kernel_row(h, s, p).iter().filter(|&&x| x > 0.0).count(), 2);
                    }
                }
            }
        }
    }
}
