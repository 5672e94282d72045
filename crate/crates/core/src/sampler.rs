//! Generative-model sampling and empirical kernels.
//!
//! Draws for cell `c = (h * S + s) * |A| + a` come from `ChaCha8Rng` seeded
//! with `seed` and switched to stream `c`, so a dataset does not depend on the
//! order or thread in which cells are sampled.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::game::RobustMarkovGame;

/// Next-state tallies with `per_cell` draws for every `(h, s, a)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDataset {
    pub horizon: usize,
    pub state_count: usize,
    pub profiles: usize,
    pub per_cell: usize,
    pub seed: u64,
    /// Flattened `[h][s][a][s']`.
    pub counts: Vec<u64>,
}

impl SampleDataset {
    pub fn cell_count(&self) -> usize {
        self.horizon * self.state_count * self.profiles
    }

    /// `N * H * S * |A|`.
    pub fn total_samples(&self) -> usize {
        self.per_cell * self.cell_count()
    }

    pub fn counts_row(&self, h: usize, s: usize, a: usize) -> &[u64] {
        let cell = (h * self.state_count + s) * self.profiles + a;
        &self.counts[cell * self.state_count..(cell + 1) * self.state_count]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let data: Self = serde_json::from_str(text)?;
        data.check()?;
        Ok(data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        if self.counts.len() != self.cell_count() * self.state_count {
            return Err(RmgError::ShapeMismatch(format!(
                "dataset holds {} counts, expected {}",
                self.counts.len(),
                self.cell_count() * self.state_count
            )));
        }
        for (cell, row) in self.counts.chunks(self.state_count.max(1)).enumerate() {
            let total: u64 = row.iter().sum();
            if total != self.per_cell as u64 {
                return Err(RmgError::ShapeMismatch(format!(
                    "cell {cell} holds {total} samples, expected {}",
                    self.per_cell
                )));
            }
        }
        Ok(())
    }
}

fn draw_cell(row: &[f64], per_cell: usize, seed: u64, cell: usize, out: &mut [u64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    let dist = WeightedIndex::new(row).expect("validated kernel row");
    for _ in 0..per_cell {
        out[dist.sample(&mut rng)] += 1;
    }
}

/// `per_cell` independent next-state draws from every nominal kernel row.
pub fn draw(game: &RobustMarkovGame, per_cell: usize, seed: u64) -> Result<SampleDataset> {
    if per_cell == 0 {
        return Err(RmgError::ShapeMismatch("at least one sample per cell is required".into()));
    }
    let states = game.state_count();
    let profiles = game.actions().total();
    let mut counts = vec![0u64; game.cell_count() * states];
    counts
        .par_chunks_mut(states)
        .enumerate()
        .for_each(|(cell, out)| {
            let (hs, a) = (cell / profiles, cell % profiles);
            let row = game.kernel_row(hs / states, hs % states, a);
            draw_cell(row, per_cell, seed, cell, out);
        });
    Ok(SampleDataset {
        horizon: game.horizon(),
        state_count: states,
        profiles,
        per_cell,
        seed,
        counts,
    })
}

/// Copy of `game` whose nominal kernel is the empirical frequency table.
pub fn empirical_game(game: &RobustMarkovGame, data: &SampleDataset) -> Result<RobustMarkovGame> {
    if data.horizon != game.horizon()
        || data.state_count != game.state_count()
        || data.profiles != game.actions().total()
    {
        return Err(RmgError::ShapeMismatch(format!(
            "dataset is shaped H={}, S={}, |A|={}; game is H={}, S={}, |A|={}",
            data.horizon,
            data.state_count,
            data.profiles,
            game.horizon(),
            game.state_count(),
            game.actions().total()
        )));
    }
    data.check()?;
    let n = data.per_cell as f64;
    let kernel = data.counts.iter().map(|&c| c as f64 / n).collect();
    game.with_kernel(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::JointActionSpace;

    fn two_state(row: [f64; 2]) -> RobustMarkovGame {
        let actions = JointActionSpace::new(vec![1]).unwrap();
        RobustMarkovGame::new(
            1,
            2,
            actions,
            vec![0.0, 0.0],
            vec![row[0], row[1], 0.0, 1.0],
            vec![0.1],
            (0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn point_mass_rows_are_reproduced() {
        let game = two_state([0.0, 1.0]);
        let data = draw(&game, 5, 3).unwrap();
        assert_eq!(data.counts_row(0, 0, 0), &[0, 5]);
        assert_eq!(data.total_samples(), 10);
        let emp = empirical_game(&game, &data).unwrap();
        assert_eq!(emp.kernel(), game.kernel());
    }

    #[test]
    fn frequencies_from_counts() {
        let game = two_state([0.5, 0.5]);
        let data = SampleDataset {
            horizon: 1,
            state_count: 2,
            profiles: 1,
            per_cell: 5,
            seed: 0,
            counts: vec![2, 3, 0, 5],
        };
        let emp = empirical_game(&game, &data).unwrap();
        assert_eq!(emp.kernel_row(0, 0, 0), &[0.4, 0.6]);
    }

    #[test]
    fn fair_row_at_large_n() {
        // frozen seed; a deviation of 0.01 is about 6 standard deviations
        let data = draw(&two_state([0.5, 0.5]), 100_000, 2024).unwrap();
        let freq = data.counts_row(0, 0, 0)[0] as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.01);
    }

    #[test]
    fn dataset_json_roundtrip_and_shape_check() {
        let data = draw(&two_state([0.3, 0.7]), 7, 9).unwrap();
        assert_eq!(SampleDataset::from_json(&data.to_json().unwrap()).unwrap(), data);
        let mut bad = data.clone();
        bad.counts[0] += 1;
        assert!(SampleDataset::from_json(&bad.to_json().unwrap()).is_err());
    }
}
