//! JSON game files.
//!
//! ```json
//! {
//!   "horizon": 2, "state_count": 3, "action_sizes": [2, 2],
//!   "sigma": [0.1, 0.1], "reward_range": [0.0, 1.0],
//!   "reward": [[[[...]]]],   // [agent][h][s][a]
//!   "kernel": [[[[...]]]]    // [h][s][a][s']
//! }
//! ```
//!
//! `a` is the encoded joint profile (agent 0 most significant). Floats are
//! written with shortest round-trip formatting, so save/load is value-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::game::{JointActionSpace, RobustMarkovGame};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameFile {
    pub horizon: usize,
    pub state_count: usize,
    pub action_sizes: Vec<usize>,
    pub sigma: Vec<f64>,
    pub reward_range: (f64, f64),
    pub reward: Vec<Vec<Vec<Vec<f64>>>>,
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
}

impl GameFile {
    pub fn from_game(game: &RobustMarkovGame) -> Self {
        let (h_max, s_max, a_max) = (game.horizon(), game.state_count(), game.actions().total());
        let reward = (0..game.agent_count())
            .map(|i| {
                (0..h_max)
                    .map(|h| {
                        (0..s_max)
                            .map(|s| (0..a_max).map(|a| game.reward(i, h, s, a)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let kernel = (0..h_max)
            .map(|h| {
                (0..s_max)
                    .map(|s| (0..a_max).map(|a| game.kernel_row(h, s, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        Self {
            horizon: h_max,
            state_count: s_max,
            action_sizes: game.actions().sizes().to_vec(),
            sigma: game.sigma().to_vec(),
            reward_range: game.reward_range(),
            reward,
            kernel,
        }
    }

    pub fn into_game(self) -> Result<RobustMarkovGame> {
        let actions = JointActionSpace::new(self.action_sizes)?;
        let n = actions.agent_count();
        let (h_max, s_max, a_max) = (self.horizon, self.state_count, actions.total());
        if self.reward.len() != n
            || self.reward.iter().any(|r| {
                r.len() != h_max
                    || r.iter()
                        .any(|rh| rh.len() != s_max || rh.iter().any(|rs| rs.len() != a_max))
            })
        {
            return Err(RmgError::ShapeMismatch(format!(
                "reward must have shape [{n}][{h_max}][{s_max}][{a_max}]"
            )));
        }
        if self.kernel.len() != h_max
            || self.kernel.iter().any(|kh| {
                kh.len() != s_max
                    || kh
                        .iter()
                        .any(|ks| ks.len() != a_max || ks.iter().any(|row| row.len() != s_max))
            })
        {
            return Err(RmgError::ShapeMismatch(format!(
                "kernel must have shape [{h_max}][{s_max}][{a_max}][{s_max}]"
            )));
        }
        let reward = self.reward.into_iter().flatten().flatten().flatten().collect();
        let kernel = self.kernel.into_iter().flatten().flatten().flatten().collect();
        RobustMarkovGame::new(
            h_max,
            s_max,
            actions,
            reward,
            kernel,
            self.sigma,
            self.reward_range,
        )
    }
}

pub fn game_to_json(game: &RobustMarkovGame) -> Result<String> {
    Ok(serde_json::to_string(&GameFile::from_game(game))?)
}

pub fn game_from_json(text: &str) -> Result<RobustMarkovGame> {
    serde_json::from_str::<GameFile>(text)?.into_game()
}

pub fn load_game(path: impl AsRef<Path>) -> Result<RobustMarkovGame> {
    game_from_json(&fs::read_to_string(path)?)
}

pub fn save_game(game: &RobustMarkovGame, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, game_to_json(game)?)?;
    Ok(())
}
