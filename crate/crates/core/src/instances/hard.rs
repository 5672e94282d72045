//! Lower-bound hard instances: single-agent two-action robust MDPs.
//!
//! With `W = S * A`, states `0..W` are `x_0..x_{W-1}` and `W..2W` are
//! `y_0..y_{W-1}`. Each `x_i` either stays or moves to `y_i`; every `y_i` is
//! absorbing and pays reward 1. The instance is indexed by the special state
//! `w` and a bit vector `theta` giving the better action at `x_w` per step.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::game::{JointActionSpace, RobustMarkovGame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c5: f64,
}

impl Default for HardConstants {
    fn default() -> Self {
        Self {
            c0: 0.25,
            c1: 0.125,
            c2: 0.25,
            c5: 0.125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub sigma: f64,
    pub eps: f64,
    pub constants: HardConstants,
    pub w: usize,
    pub theta: Vec<u8>,
    pub theta_base: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardParams {
    pub p: f64,
    pub delta: f64,
    pub q: f64,
    /// True in the small-radius regime `sigma <= c2 / (2H)`.
    pub small_sigma: bool,
}

impl HardInstanceSpec {
    /// Spec with default constants and `theta_base = 0^H`.
    pub fn new(
        states: usize,
        actions: usize,
        horizon: usize,
        sigma: f64,
        eps: f64,
        w: usize,
        theta: Vec<u8>,
    ) -> Self {
        Self {
            states,
            actions,
            horizon,
            sigma,
            eps,
            constants: HardConstants::default(),
            w,
            theta,
            theta_base: vec![0; horizon],
        }
    }

    pub fn width(&self) -> usize {
        self.states * self.actions
    }

    pub fn x(&self, i: usize) -> usize {
        i
    }

    pub fn y(&self, i: usize) -> usize {
        self.width() + i
    }

    /// Checks all constraints and returns `p`, `Delta` and `q`.
    pub fn params(&self) -> Result<HardParams> {
        let violation = |msg: String| Err(RmgError::ParameterRegimeViolation(msg));
        let HardConstants { c0, c1, c2, c5 } = self.constants;
        if !(c0 > 0.0 && c0 < 1.0) {
            return violation(format!("c0 = {c0} must lie in (0, 1)"));
        }
        if (c1 - c0 / 2.0).abs() > 1e-15 {
            return violation(format!("c1 = {c1} must equal c0 / 2 = {}", c0 / 2.0));
        }
        if !(c2 > 0.0 && c2 <= 0.25) {
            return violation(format!("c2 = {c2} must lie in (0, 1/4]"));
        }
        if c5 <= 0.0 {
            return violation(format!("c5 = {c5} must be positive"));
        }
        if self.states == 0 || self.actions == 0 {
            return violation("S and A must be positive".into());
        }
        if self.horizon < 2 {
            return violation(format!("horizon {} must be at least 2", self.horizon));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0 - c0) {
            return violation(format!("sigma = {} must lie in (0, 1 - c0 = {}]", self.sigma, 1.0 - c0));
        }
        if self.w >= self.width() {
            return violation(format!("w = {} must be below S * A = {}", self.w, self.width()));
        }
        for (name, bits) in [("theta", &self.theta), ("theta_base", &self.theta_base)] {
            if bits.len() != self.horizon || bits.iter().any(|&b| b > 1) {
                return violation(format!("{name} must be a 0/1 vector of length {}", self.horizon));
            }
        }
        let h = self.horizon as f64;
        let small_sigma = self.sigma <= c2 / (2.0 * h);
        let (p, delta, eps_cap, delta_cap) = if small_sigma {
            (c2 / h, c5 * self.eps / (h * h), c2 / h, c2 / (2.0 * h))
        } else {
            ((1.0 + c1 / h) * self.sigma, c5 * self.sigma * self.eps / h, 1.0, c1 * self.sigma / h)
        };
        if !(self.eps > 0.0 && self.eps <= eps_cap) {
            return violation(format!("eps = {} must lie in (0, {eps_cap}]", self.eps));
        }
        if delta > delta_cap * (1.0 + 1e-12) {
            return violation(format!("Delta = {delta} exceeds its cap {delta_cap}"));
        }
        let q = p - delta;
        if !(q >= self.sigma - 1e-12 && p + delta <= 1.0) {
            return violation(format!(
                "need sigma <= q <= p + Delta <= 1, got sigma = {}, q = {q}, p + Delta = {}",
                self.sigma,
                p + delta
            ));
        }
        Ok(HardParams {
            p,
            delta,
            q,
            small_sigma,
        })
    }
}

/// Builds the instance as a one-agent robust game with radius `sigma`.
pub fn build_hard_rmdp(spec: &HardInstanceSpec) -> Result<RobustMarkovGame> {
    let HardParams { p, delta, q, .. } = spec.params()?;
    let width = spec.width();
    let states = 2 * width;
    let horizon = spec.horizon;
    let actions = JointActionSpace::new(vec![2])?;
    let mut reward = vec![0.0; horizon * states * 2];
    let mut kernel = vec![0.0; horizon * states * 2 * states];
    for h in 0..horizon {
        for s in 0..states {
            for a in 0..2 {
                let cell = (h * states + s) * 2 + a;
                let row = &mut kernel[cell * states..(cell + 1) * states];
                if s >= width {
                    reward[cell] = 1.0;
                    row[s] = 1.0;
                    continue;
                }
                let up = if s == spec.w {
                    if a == spec.theta[h] as usize { p } else { q }
                } else if a == spec.theta_base[h] as usize {
                    p + delta
                } else {
                    p
                };
                row[spec.y(s)] = up;
                row[s] = 1.0 - up;
            }
        }
    }
    RobustMarkovGame::new(horizon, states, actions, reward, kernel, vec![spec.sigma], (0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardClosedForm {
    /// Optimal action at `h * 2W + s`.
    pub policy: Vec<usize>,
    /// Whether that action is the unique optimum.
    pub strict: Vec<bool>,
    /// `V*(y_w) - V*(x_w)` at each step `h = 0..H`.
    pub value_gap: Vec<f64>,
}

/// Optimal policy and value gap in closed form.
///
/// `theta_h` at `x_w` and `y_w`, `theta_base_h` at the other states. Actions
/// never matter at `Y`, and at the last step every action is optimal.
pub fn hard_rmdp_closed_form(spec: &HardInstanceSpec) -> Result<HardClosedForm> {
    let HardParams { p, .. } = spec.params()?;
    let width = spec.width();
    let states = 2 * width;
    let horizon = spec.horizon;
    let mut policy = vec![0; horizon * states];
    let mut strict = vec![false; horizon * states];
    for h in 0..horizon {
        for s in 0..states {
            let i = s % width;
            let bits = if i == spec.w { &spec.theta } else { &spec.theta_base };
            policy[h * states + s] = bits[h] as usize;
            strict[h * states + s] = s < width && h + 1 < horizon;
        }
    }
    let value_gap = (0..horizon)
        .map(|h| (0..horizon - h).map(|j| (1.0 - p).powi(j as i32)).sum())
        .collect();
    Ok(HardClosedForm {
        policy,
        strict,
        value_gap,
    })
}

/// Greedy lexicographic binary code of length `horizon` with pairwise Hamming
/// distance at least `ceil(H/8)`, stopped once it holds `ceil(e^{H/8})` words.
///
/// Words are read with `theta_0` as the most significant bit, so the first
/// word is all zeros.
pub fn build_theta_set(horizon: usize) -> Result<Vec<Vec<u8>>> {
    if horizon == 0 || horizon > 63 {
        return Err(RmgError::ParameterRegimeViolation(format!(
            "theta set supports horizons 1..=63, got {horizon}"
        )));
    }
    let distance = horizon.div_ceil(8) as u32;
    let required = (horizon as f64 / 8.0).exp().ceil() as usize;
    let mut words: Vec<u64> = Vec::with_capacity(required);
    for candidate in 0..(1u64 << horizon) {
        if words.iter().all(|&w| (w ^ candidate).count_ones() >= distance) {
            words.push(candidate);
            if words.len() >= required {
                break;
            }
        }
    }
    if words.len() < required {
        return Err(RmgError::ConstructionFailed {
            actual: words.len(),
            required,
        });
    }
    Ok(words
        .into_iter()
        .map(|w| (0..horizon).map(|h| ((w >> (horizon - 1 - h)) & 1) as u8).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hamming(a: &[u8], b: &[u8]) -> usize {
        a.iter().zip(b).filter(|(x, y)| x != y).count()
    }

    #[test]
    fn theta_set_for_sixteen_steps() {
        let set = build_theta_set(16).unwrap();
        assert!(set.len() >= 8);
        assert_eq!(set[0], vec![0; 16]);
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                assert!(hamming(&set[i], &set[j]) >= 2);
            }
        }
    }

    #[test]
    fn second_regime_parameters() {
        let spec = HardInstanceSpec::new(1, 2, 20, 0.01, 0.5, 0, vec![1; 20]);
        let params = spec.params().unwrap();
        assert!(!params.small_sigma);
        assert!((params.p - (1.0 + 0.125 / 20.0) * 0.01).abs() < 1e-15);
        assert!((params.delta - 0.125 * 0.01 * 0.5 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn first_regime_rejects_large_eps() {
        let spec = HardInstanceSpec::new(1, 2, 20, 0.001, 0.5, 0, vec![1; 20]);
        assert!(matches!(spec.params(), Err(RmgError::ParameterRegimeViolation(_))));
        let ok = HardInstanceSpec { eps: 0.01, ..spec };
        assert!(ok.params().unwrap().small_sigma);
    }

    #[test]
    fn sigma_above_cap_is_rejected() {
        let spec = HardInstanceSpec::new(1, 2, 4, 0.8, 0.5, 0, vec![1; 4]);
        assert!(spec.params().is_err());
    }

    #[test]
    fn kernel_rows_and_absorbing_y() {
        let spec = HardInstanceSpec::new(2, 2, 5, 0.05, 1.0, 2, vec![1, 0, 1, 1, 0]);
        let game = build_hard_rmdp(&spec).unwrap();
        for h in 0..5 {
            for s in 0..8 {
                for a in 0..2 {
                    let row = game.kernel_row(h, s, a);
                    assert_eq!(row.iter().sum::<f64>(), 1.0);
                    if s >= 4 {
                        assert_eq!(row[s], 1.0);
                        assert_eq!(game.reward(0, h, s, a), 1.0);
                    } else {
                        assert_eq!(game.reward(0, h, s, a), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_gap_is_a_geometric_sum() {
        // p = 0.1 needs sigma with (1 + c1/H) sigma = 0.1
        let h = 3.0;
        let sigma = 0.1 / (1.0 + 0.125 / h);
        let spec = HardInstanceSpec::new(1, 2, 3, sigma, 0.5, 0, vec![1, 1, 1]);
        let cf = hard_rmdp_closed_form(&spec).unwrap();
        assert!((cf.value_gap[0] - 2.71).abs() < 1e-12);
        assert_eq!(cf.value_gap[2], 1.0);
    }
}
