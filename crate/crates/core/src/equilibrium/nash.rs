use super::{gaps::stage_gap_ne, EquilibriumKind, EquilibriumSolution, StageGame};
use crate::error::{Result, RmgError};
use crate::game::product_distribution;

/// A pure deviation must improve by more than this to break a pure equilibrium.
pub const PURE_NASH_TOL: f64 = 1e-12;

/// Largest per-player action count accepted by support enumeration.
const MAX_SUPPORT_ACTIONS: usize = 6;
const NASH_2P_TOL: f64 = 1e-8;

fn is_pure_nash(game: &StageGame, profile: usize) -> bool {
    let actions = game.actions();
    (0..game.agent_count()).all(|agent| {
        let u = game.payoff(agent);
        let (_, rest) = actions.split(profile, agent);
        let current = u[profile];
        (0..actions.size(agent)).all(|b| u[actions.join(b, rest, agent)] <= current + PURE_NASH_TOL)
    })
}

/// All pure equilibria, in ascending encoded order.
pub fn pure_nash_profiles(game: &StageGame) -> Vec<usize> {
    (0..game.actions().total())
        .filter(|&a| is_pure_nash(game, a))
        .collect()
}

/// First pure equilibrium in lexicographic profile order, if any.
pub fn compute_pure_nash(game: &StageGame) -> Option<EquilibriumSolution> {
    let actions = game.actions();
    let profile = (0..actions.total()).find(|&a| is_pure_nash(game, a))?;
    let factors: Vec<Vec<f64>> = actions
        .decode(profile)
        .into_iter()
        .enumerate()
        .map(|(agent, own)| {
            let mut f = vec![0.0; actions.size(agent)];
            f[own] = 1.0;
            f
        })
        .collect();
    let mut dist = vec![0.0; actions.total()];
    dist[profile] = 1.0;
    let certified_gap = stage_gap_ne(game, &dist).expect("point mass is a product distribution");
    Some(EquilibriumSolution {
        dist,
        factors: Some(factors),
        certified_gap,
        kind: EquilibriumKind::Nash,
        iterations: profile + 1,
        converged: true,
    })
}

/// Mixed Nash equilibrium of a two-player game by support enumeration.
///
/// Supports are tried in order of total size, so pure equilibria come first.
/// For each pair the indifference system is solved by Gaussian elimination and
/// the candidate is accepted only if its certified gap is at most `1e-8`.
pub fn compute_nash_2p(game: &StageGame) -> Result<EquilibriumSolution> {
    let actions = game.actions();
    if actions.agent_count() != 2 {
        return Err(RmgError::ShapeMismatch(format!(
            "support enumeration needs two players, got {}",
            actions.agent_count()
        )));
    }
    let (rows, cols) = (actions.size(0), actions.size(1));
    if rows > MAX_SUPPORT_ACTIONS || cols > MAX_SUPPORT_ACTIONS {
        // beyond this size support enumeration is not attempted
        return Err(RmgError::NashIntractable { agents: 2 });
    }
    let u1 = |r: usize, c: usize| game.payoff(0)[r * cols + c];
    let u2 = |r: usize, c: usize| game.payoff(1)[r * cols + c];

    let mut tried = 0;
    for total in 2..=rows + cols {
        for row_size in 1..=rows.min(total - 1) {
            let col_size = total - row_size;
            if col_size > cols {
                continue;
            }
            for row_mask in masks_of_size(rows, row_size) {
                let support_r = members(row_mask);
                for col_mask in masks_of_size(cols, col_size) {
                    let support_c = members(col_mask);
                    tried += 1;
                    // column strategy makes every row in the row support indifferent
                    let Some(y) = indifferent_mix(&support_r, &support_c, u1) else {
                        continue;
                    };
                    let Some(x) = indifferent_mix(&support_c, &support_r, |c, r| u2(r, c)) else {
                        continue;
                    };
                    let x = expand(&x, &support_r, rows);
                    let y = expand(&y, &support_c, cols);
                    let dist = product_distribution(&[&x, &y]);
                    let gap = stage_gap_ne(game, &dist)?;
                    if gap <= NASH_2P_TOL {
                        return Ok(EquilibriumSolution {
                            dist,
                            factors: Some(vec![x, y]),
                            certified_gap: gap,
                            kind: EquilibriumKind::Nash,
                            iterations: tried,
                            converged: true,
                        });
                    }
                }
            }
        }
    }
    Err(RmgError::NumericalFailure(format!(
        "no support pair of the {rows}x{cols} game certified a Nash equilibrium"
    )))
}

fn masks_of_size(n: usize, k: usize) -> impl Iterator<Item = u32> {
    (1u32..(1 << n)).filter(move |m| m.count_ones() as usize == k)
}

fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|&i| mask & (1 << i) != 0).collect()
}

/// Mixture over `support` (the opponent's actions) that makes the player
/// indifferent among `own`: `sum_j payoff(i, j) m_j = v` for all `i` in `own`,
/// `sum_j m_j = 1`, `m >= 0`.
fn indifferent_mix(
    own: &[usize],
    support: &[usize],
    payoff: impl Fn(usize, usize) -> f64,
) -> Option<Vec<f64>> {
    let unknowns = support.len() + 1;
    let mut matrix = Vec::with_capacity(own.len() + 1);
    let mut rhs = Vec::with_capacity(own.len() + 1);
    for &i in own {
        let mut row: Vec<f64> = support.iter().map(|&j| payoff(i, j)).collect();
        row.push(-1.0);
        matrix.push(row);
        rhs.push(0.0);
    }
    let mut norm = vec![1.0; unknowns];
    norm[unknowns - 1] = 0.0;
    matrix.push(norm);
    rhs.push(1.0);

    let solution = solve_linear(matrix, rhs)?;
    let mut mix = solution[..support.len()].to_vec();
    if mix.iter().any(|&m| m < -1e-12) {
        return None;
    }
    for m in &mut mix {
        *m = m.max(0.0);
    }
    let total: f64 = mix.iter().sum();
    if total <= 0.0 {
        return None;
    }
    mix.iter_mut().for_each(|m| *m /= total);
    Some(mix)
}

fn expand(mix: &[f64], support: &[usize], size: usize) -> Vec<f64> {
    let mut full = vec![0.0; size];
    for (&m, &j) in mix.iter().zip(support) {
        full[j] = m;
    }
    full
}

/// Gaussian elimination with partial pivoting on a possibly rectangular
/// system. Free variables are set to zero; `None` if inconsistent.
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let eps = 1e-12 * scale;
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, mag) = (r..rows)
            .map(|i| (i, a[i][c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= eps {
            continue;
        }
        a.swap(r, best);
        b.swap(r, best);
        let pivot = a[r][c];
        for i in 0..rows {
            if i != r && a[i][c] != 0.0 {
                let factor = a[i][c] / pivot;
                for k in c..cols {
                    a[i][k] -= factor * a[r][k];
                }
                b[i] -= factor * b[r];
            }
        }
        pivots.push((r, c));
        r += 1;
    }
    if (r..rows).any(|i| b[i].abs() > 1e-9 * scale) {
        return None;
    }
    let mut x = vec![0.0; cols];
    for (row, col) in pivots {
        x[col] = b[row] / a[row][col];
    }
    Some(x)
}
