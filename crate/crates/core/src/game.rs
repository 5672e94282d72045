//! Tabular robust Markov games, joint policies and value tensors.
//!
//! Stages are indexed from zero: `h = 0` is the first decision step and
//! `h = horizon` is the terminal layer of a [`ValueTensor`], which is always
//! zero. Joint action profiles are encoded in mixed radix with agent 0 as the
//! most significant digit.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};

/// Tolerance for probability rows supplied at construction.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for probabilities derived from other quantities (marginals, products).
pub const MARGINAL_TOL: f64 = 1e-10;

/// The product `A_1 x ... x A_n` of per-agent action sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointActionSpace {
    sizes: Vec<usize>,
    // strides[i] = product of sizes[i+1..]
    strides: Vec<usize>,
    total: usize,
}

impl JointActionSpace {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(RmgError::ShapeMismatch("at least one agent is required".into()));
        }
        if sizes.contains(&0) {
            return Err(RmgError::ShapeMismatch(format!("action sizes must be positive: {sizes:?}")));
        }
        Ok(Self::build(sizes))
    }

    fn build(sizes: Vec<usize>) -> Self {
        let mut strides = vec![1; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let total = sizes.iter().product();
        Self { sizes, strides, total }
    }

    pub fn agent_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, agent: usize) -> usize {
        self.sizes[agent]
    }

    /// Number of joint profiles.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Number of profiles of all agents other than `agent`.
    pub fn others_total(&self, agent: usize) -> usize {
        self.total / self.sizes[agent]
    }

    pub fn encode(&self, profile: &[usize]) -> usize {
        debug_assert_eq!(profile.len(), self.sizes.len());
        profile
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&a, &k)| {
                debug_assert!(a < k);
                acc * k + a
            })
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.total);
        self.sizes
            .iter()
            .zip(&self.strides)
            .map(|(&k, &stride)| (index / stride) % k)
            .collect()
    }

    /// Action of `agent` inside encoded profile `index`.
    #[inline]
    pub fn action_of(&self, index: usize, agent: usize) -> usize {
        (index / self.strides[agent]) % self.sizes[agent]
    }

    /// Splits an encoded profile into `(a_i, a_{-i})`, where `a_{-i}` is encoded
    /// in the space returned by [`JointActionSpace::without`].
    #[inline]
    pub fn split(&self, index: usize, agent: usize) -> (usize, usize) {
        let stride = self.strides[agent];
        let block = stride * self.sizes[agent];
        let own = (index / stride) % self.sizes[agent];
        let rest = (index / block) * stride + index % stride;
        (own, rest)
    }

    /// Inverse of [`JointActionSpace::split`].
    #[inline]
    pub fn join(&self, own: usize, rest: usize, agent: usize) -> usize {
        let stride = self.strides[agent];
        let block = stride * self.sizes[agent];
        (rest / stride) * block + own * stride + rest % stride
    }

    /// The joint action space of every agent except `agent` (possibly with no agents,
    /// in which case it has exactly one empty profile).
    pub fn without(&self, agent: usize) -> JointActionSpace {
        let mut sizes = self.sizes.clone();
        sizes.remove(agent);
        Self::build(sizes)
    }
}

/// Outer product of per-agent distributions, encoded in mixed radix.
pub fn product_distribution(factors: &[&[f64]]) -> Vec<f64> {
    let mut dist = vec![1.0];
    for factor in factors {
        let mut next = Vec::with_capacity(dist.len() * factor.len());
        for &mass in &dist {
            next.extend(factor.iter().map(|&f| mass * f));
        }
        dist = next;
    }
    dist
}

/// A finite-horizon tabular Markov game with per-agent total-variation radii.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustMarkovGame {
    horizon: usize,
    state_count: usize,
    actions: JointActionSpace,
    // [i][h][s][a]
    reward: Vec<f64>,
    // [h][s][a][s']
    kernel: Vec<f64>,
    sigma: Vec<f64>,
    reward_range: (f64, f64),
}

impl RobustMarkovGame {
    /// Builds and validates a game. `reward` is flattened `[i][h][s][a]` and
    /// `kernel` is flattened `[h][s][a][s']`.
    pub fn new(
        horizon: usize,
        state_count: usize,
        actions: JointActionSpace,
        reward: Vec<f64>,
        kernel: Vec<f64>,
        sigma: Vec<f64>,
        reward_range: (f64, f64),
    ) -> Result<Self> {
        let game = Self {
            horizon,
            state_count,
            actions,
            reward,
            kernel,
            sigma,
            reward_range,
        };
        game.validate()?;
        Ok(game)
    }

    /// Checks every structural and numerical invariant of the game.
    pub fn validate(&self) -> Result<()> {
        let n = self.actions.agent_count();
        let (h_max, s_max, a_max) = (self.horizon, self.state_count, self.actions.total());
        if h_max == 0 || s_max == 0 {
            return Err(RmgError::ShapeMismatch("horizon and state count must be positive".into()));
        }
        if self.reward.len() != n * h_max * s_max * a_max {
            return Err(RmgError::ShapeMismatch(format!(
                "reward has {} entries, expected {}",
                self.reward.len(),
                n * h_max * s_max * a_max
            )));
        }
        if self.kernel.len() != h_max * s_max * a_max * s_max {
            return Err(RmgError::ShapeMismatch(format!(
                "kernel has {} entries, expected {}",
                self.kernel.len(),
                h_max * s_max * a_max * s_max
            )));
        }
        if self.sigma.len() != n {
            return Err(RmgError::ShapeMismatch(format!(
                "{} radii given for {n} agents",
                self.sigma.len()
            )));
        }
        let (lo, hi) = self.reward_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(RmgError::ShapeMismatch(format!("invalid reward range ({lo}, {hi})")));
        }
        for (agent, &sigma) in self.sigma.iter().enumerate() {
            if !(0.0..=1.0).contains(&sigma) {
                return Err(RmgError::SigmaOutOfRange {
                    agent: Some(agent),
                    sigma,
                });
            }
        }
        for h in 0..h_max {
            for s in 0..s_max {
                for a in 0..a_max {
                    let row = self.kernel_row(h, s, a);
                    if let Some((next, &value)) = row
                        .iter()
                        .enumerate()
                        .find(|(_, &p)| !(p.is_finite() && p >= 0.0))
                    {
                        return Err(RmgError::InvalidProbability { h, s, a, next, value });
                    }
                    let rowsum: f64 = row.iter().sum();
                    if (rowsum - 1.0).abs() > CONSTRUCTION_TOL {
                        return Err(RmgError::NonStochasticRow { h, s, a, rowsum });
                    }
                }
            }
        }
        for agent in 0..n {
            for h in 0..h_max {
                for s in 0..s_max {
                    for a in 0..a_max {
                        let value = self.reward(agent, h, s, a);
                        if !(value.is_finite() && value >= lo && value <= hi) {
                            return Err(RmgError::RewardOutOfRange {
                                agent,
                                h,
                                s,
                                a,
                                value,
                                min: lo,
                                max: hi,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn actions(&self) -> &JointActionSpace {
        &self.actions
    }

    pub fn agent_count(&self) -> usize {
        self.actions.agent_count()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.reward_range
    }

    /// True iff rewards are declared to lie in `[0, 1]`.
    pub fn normalized(&self) -> bool {
        self.reward_range == (0.0, 1.0)
    }

    #[inline]
    pub fn reward(&self, agent: usize, h: usize, s: usize, a: usize) -> f64 {
        let a_max = self.actions.total();
        self.reward[((agent * self.horizon + h) * self.state_count + s) * a_max + a]
    }

    #[inline]
    pub fn kernel_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = ((h * self.state_count + s) * self.actions.total() + a) * self.state_count;
        &self.kernel[start..start + self.state_count]
    }

    /// Flattened `[i][h][s][a]` rewards.
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Flattened `[h][s][a][s']` nominal kernel.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Number of `(h, s, a)` kernel rows.
    pub fn cell_count(&self) -> usize {
        self.horizon * self.state_count * self.actions.total()
    }

    /// Copy of this game with a different nominal kernel.
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        Self::new(
            self.horizon,
            self.state_count,
            self.actions.clone(),
            self.reward.clone(),
            kernel,
            self.sigma.clone(),
            self.reward_range,
        )
    }

    /// Copy of this game with different uncertainty radii.
    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self> {
        Self::new(
            self.horizon,
            self.state_count,
            self.actions.clone(),
            self.reward.clone(),
            self.kernel.clone(),
            sigma,
            self.reward_range,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    Product,
    Correlated,
}

/// A Markov joint policy: one distribution over joint profiles per `(h, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    actions: JointActionSpace,
    horizon: usize,
    state_count: usize,
    // [h][s][a]
    dist: Vec<f64>,
    kind: PolicyKind,
    // [h][s][i] -> distribution over A_i, present for product policies
    factors: Option<Vec<Vec<f64>>>,
}

impl JointPolicy {
    /// Product policy from per-agent factors, flattened in `(h, s, agent)` order.
    pub fn product(
        actions: JointActionSpace,
        horizon: usize,
        state_count: usize,
        factors: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = actions.agent_count();
        if factors.len() != horizon * state_count * n {
            return Err(RmgError::ShapeMismatch(format!(
                "{} factors given, expected {}",
                factors.len(),
                horizon * state_count * n
            )));
        }
        for (k, factor) in factors.iter().enumerate() {
            let agent = k % n;
            if factor.len() != actions.size(agent) {
                return Err(RmgError::ShapeMismatch(format!(
                    "factor for agent {agent} has {} entries, expected {}",
                    factor.len(),
                    actions.size(agent)
                )));
            }
            check_distribution(factor, CONSTRUCTION_TOL)
                .map_err(|msg| RmgError::InvalidPolicy(format!("factor {k}: {msg}")))?;
        }
        let mut dist = Vec::with_capacity(horizon * state_count * actions.total());
        for cell in factors.chunks(n) {
            let refs: Vec<&[f64]> = cell.iter().map(Vec::as_slice).collect();
            dist.extend(product_distribution(&refs));
        }
        Ok(Self {
            actions,
            horizon,
            state_count,
            dist,
            kind: PolicyKind::Product,
            factors: Some(factors),
        })
    }

    /// Correlated policy from a flattened `[h][s][a]` distribution tensor.
    pub fn correlated(
        actions: JointActionSpace,
        horizon: usize,
        state_count: usize,
        dist: Vec<f64>,
    ) -> Result<Self> {
        let policy = Self {
            actions,
            horizon,
            state_count,
            dist,
            kind: PolicyKind::Correlated,
            factors: None,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Deterministic product policy playing `profiles[h * S + s]` (encoded) at every cell.
    pub fn deterministic(
        actions: JointActionSpace,
        horizon: usize,
        state_count: usize,
        profiles: &[usize],
    ) -> Result<Self> {
        if profiles.len() != horizon * state_count {
            return Err(RmgError::ShapeMismatch("one profile per (h, s) is required".into()));
        }
        let mut factors = Vec::with_capacity(profiles.len() * actions.agent_count());
        for &profile in profiles {
            if profile >= actions.total() {
                return Err(RmgError::InvalidPolicy(format!("profile {profile} out of range")));
            }
            for (agent, own) in actions.decode(profile).into_iter().enumerate() {
                let mut f = vec![0.0; actions.size(agent)];
                f[own] = 1.0;
                factors.push(f);
            }
        }
        Self::product(actions, horizon, state_count, factors)
    }

    /// Every agent mixes uniformly everywhere.
    pub fn uniform(actions: JointActionSpace, horizon: usize, state_count: usize) -> Self {
        let n = actions.agent_count();
        let factors = (0..horizon * state_count * n)
            .map(|k| {
                let size = actions.size(k % n);
                vec![1.0 / size as f64; size]
            })
            .collect();
        Self::product(actions, horizon, state_count, factors).expect("uniform policy is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let a_max = self.actions.total();
        if self.dist.len() != self.horizon * self.state_count * a_max {
            return Err(RmgError::ShapeMismatch(format!(
                "policy has {} entries, expected {}",
                self.dist.len(),
                self.horizon * self.state_count * a_max
            )));
        }
        for (k, cell) in self.dist.chunks(a_max).enumerate() {
            check_distribution(cell, CONSTRUCTION_TOL).map_err(|msg| {
                RmgError::InvalidPolicy(format!(
                    "(h={}, s={}): {msg}",
                    k / self.state_count,
                    k % self.state_count
                ))
            })?;
        }
        if self.kind == PolicyKind::Product {
            for h in 0..self.horizon {
                for s in 0..self.state_count {
                    let deviation = product_deviation(&self.actions, self.cell(h, s));
                    if deviation > MARGINAL_TOL {
                        return Err(RmgError::NotProductDistribution { deviation });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> &JointActionSpace {
        &self.actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Distribution over joint profiles at `(h, s)`.
    #[inline]
    pub fn cell(&self, h: usize, s: usize) -> &[f64] {
        let a_max = self.actions.total();
        let start = (h * self.state_count + s) * a_max;
        &self.dist[start..start + a_max]
    }

    /// Flattened `[h][s][a]` distribution tensor.
    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    /// Stored per-agent factor at `(h, s)` for product policies.
    pub fn factor(&self, h: usize, s: usize, agent: usize) -> Option<&[f64]> {
        let n = self.actions.agent_count();
        self.factors
            .as_ref()
            .map(|f| f[(h * self.state_count + s) * n + agent].as_slice())
    }

    /// Marginal of agent `agent`'s own action at `(h, s)`.
    pub fn marginal(&self, h: usize, s: usize, agent: usize) -> Vec<f64> {
        if let Some(f) = self.factor(h, s, agent) {
            return f.to_vec();
        }
        let mut out = vec![0.0; self.actions.size(agent)];
        for (a, &mass) in self.cell(h, s).iter().enumerate() {
            out[self.actions.action_of(a, agent)] += mass;
        }
        out
    }

    /// Distribution over `A_{-i}` obtained by summing out agent `agent`'s action,
    /// encoded in the space returned by [`JointActionSpace::without`].
    pub fn marginal_excluding(&self, h: usize, s: usize, agent: usize) -> Vec<f64> {
        if self.factors.is_some() {
            let n = self.actions.agent_count();
            let others: Vec<&[f64]> = (0..n)
                .filter(|&j| j != agent)
                .map(|j| self.factor(h, s, j).expect("product policy stores factors"))
                .collect();
            return product_distribution(&others);
        }
        marginal_excluding(&self.actions, self.cell(h, s), agent)
    }
}

/// Sums agent `agent`'s coordinate out of a joint distribution.
pub fn marginal_excluding(actions: &JointActionSpace, dist: &[f64], agent: usize) -> Vec<f64> {
    let mut out = vec![0.0; actions.others_total(agent)];
    for (a, &mass) in dist.iter().enumerate() {
        let (_, rest) = actions.split(a, agent);
        out[rest] += mass;
    }
    out
}

/// Largest entrywise difference between `dist` and the product of its own marginals.
pub fn product_deviation(actions: &JointActionSpace, dist: &[f64]) -> f64 {
    let marginals: Vec<Vec<f64>> = (0..actions.agent_count())
        .map(|agent| {
            let mut m = vec![0.0; actions.size(agent)];
            for (a, &mass) in dist.iter().enumerate() {
                m[actions.action_of(a, agent)] += mass;
            }
            m
        })
        .collect();
    let refs: Vec<&[f64]> = marginals.iter().map(Vec::as_slice).collect();
    product_distribution(&refs)
        .iter()
        .zip(dist)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn check_distribution(dist: &[f64], tol: f64) -> std::result::Result<(), String> {
    if let Some(bad) = dist.iter().find(|&&p| !(p.is_finite() && p >= 0.0)) {
        return Err(format!("entry {bad} is negative or not finite"));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Per-agent state values `V[i][h][s]` for `h = 0..=H`; layer `H` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTensor {
    agents: usize,
    horizon: usize,
    states: usize,
    data: Vec<f64>,
}

impl ValueTensor {
    pub fn zeros(agents: usize, horizon: usize, states: usize) -> Self {
        Self {
            agents,
            horizon,
            states,
            data: vec![0.0; agents * (horizon + 1) * states],
        }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> usize {
        self.states
    }

    #[inline]
    pub fn get(&self, agent: usize, h: usize, s: usize) -> f64 {
        self.data[(agent * (self.horizon + 1) + h) * self.states + s]
    }

    #[inline]
    pub fn set(&mut self, agent: usize, h: usize, s: usize, value: f64) {
        self.data[(agent * (self.horizon + 1) + h) * self.states + s] = value;
    }

    /// Values of `agent` over all states at step `h`.
    pub fn layer(&self, agent: usize, h: usize) -> &[f64] {
        let start = (agent * (self.horizon + 1) + h) * self.states;
        &self.data[start..start + self.states]
    }

    pub fn layer_mut(&mut self, agent: usize, h: usize) -> &mut [f64] {
        let start = (agent * (self.horizon + 1) + h) * self.states;
        &mut self.data[start..start + self.states]
    }

    /// `max_s V - min_s V` at `(agent, h)`.
    pub fn span(&self, agent: usize, h: usize) -> f64 {
        let layer = self.layer(agent, h);
        let max = layer.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = layer.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn max_abs_diff(&self, other: &ValueTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-agent action values `Q[i][h][s][a]` for `h = 0..H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTensor {
    agents: usize,
    horizon: usize,
    states: usize,
    profiles: usize,
    data: Vec<f64>,
}

impl QTensor {
    pub fn zeros(agents: usize, horizon: usize, states: usize, profiles: usize) -> Self {
        Self {
            agents,
            horizon,
            states,
            profiles,
            data: vec![0.0; agents * horizon * states * profiles],
        }
    }

    #[inline]
    pub fn get(&self, agent: usize, h: usize, s: usize, a: usize) -> f64 {
        self.row(agent, h, s)[a]
    }

    /// Payoffs of `agent` over joint profiles at `(h, s)`.
    pub fn row(&self, agent: usize, h: usize, s: usize) -> &[f64] {
        let start = ((agent * self.horizon + h) * self.states + s) * self.profiles;
        &self.data[start..start + self.profiles]
    }

    pub fn row_mut(&mut self, agent: usize, h: usize, s: usize) -> &mut [f64] {
        let start = ((agent * self.horizon + h) * self.states + s) * self.profiles;
        &mut self.data[start..start + self.profiles]
    }
}
