//! Experiment commands behind the `rmg` binary.
//!
//! Each command returns a serializable report; the binary only parses flags,
//! writes files and maps errors to exit codes.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rmg_core::equilibrium::EquilibriumKind;
use rmg_core::eval::{agent_gaps_cce, agent_gaps_ce, gap, gap_ne};
use rmg_core::instances::fishing::{fishing_rollout, fishing_solve, FishingGame, STATES};
use rmg_core::instances::hard::{build_hard_rmdp, hard_rmdp_closed_form, HardInstanceSpec, HardParams};
use rmg_core::nvi::{dr_nvi, with_workers, NviOptions, NviOutput};
use rmg_core::sampler::{draw, empirical_game};
use rmg_core::{JointActionSpace, JointPolicy, PolicyKind, Result, RmgError, RobustMarkovGame};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Base seed used when `RMG_SOLVE_SEED` is unset.
pub const DEFAULT_SEED: u64 = 0;

/// `RMG_SOLVE_SEED` if set and numeric, else the default.
pub fn base_seed() -> u64 {
    std::env::var("RMG_SOLVE_SEED")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

/// `"K"` gives `K` consecutive seeds from `base`; a comma list (`"3,8"` or
/// `"7,"`) gives exactly those seeds.
pub fn parse_seeds(text: &str, base: u64) -> std::result::Result<Vec<u64>, String> {
    let text = text.trim();
    if text.contains(',') {
        let seeds: std::result::Result<Vec<u64>, _> = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        let seeds = seeds.map_err(|e| format!("bad seed list `{text}`: {e}"))?;
        if seeds.is_empty() {
            return Err("empty seed list".into());
        }
        return Ok(seeds);
    }
    let count: u64 = text.parse().map_err(|e| format!("bad seed count `{text}`: {e}"))?;
    if count == 0 {
        return Err("seed count must be positive".into());
    }
    Ok((0..count).map(|k| base.wrapping_add(k)).collect())
}

/// Header shared by every JSON report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Self {
            tool: "rmg".into(),
            version: VERSION.into(),
            command: command.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub kind: PolicyKind,
    pub action_sizes: Vec<usize>,
    /// `[h][s][a]` over encoded joint profiles.
    pub dist: Vec<Vec<Vec<f64>>>,
    /// `[h][s][agent][a_i]`, present for product policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl PolicyFile {
    pub fn from_policy(policy: &JointPolicy) -> Self {
        let (horizon, states, n) = (policy.horizon(), policy.state_count(), policy.actions().agent_count());
        let dist = (0..horizon)
            .map(|h| (0..states).map(|s| policy.cell(h, s).to_vec()).collect())
            .collect();
        let factors = (policy.kind() == PolicyKind::Product).then(|| {
            (0..horizon)
                .map(|h| {
                    (0..states)
                        .map(|s| (0..n).map(|i| policy.factor(h, s, i).unwrap_or_default().to_vec()).collect())
                        .collect()
                })
                .collect()
        });
        Self {
            kind: policy.kind(),
            action_sizes: policy.actions().sizes().to_vec(),
            dist,
            factors,
        }
    }

    pub fn into_policy(self) -> Result<JointPolicy> {
        let actions = JointActionSpace::new(self.action_sizes)?;
        let horizon = self.dist.len();
        let states = self.dist.first().map_or(0, Vec::len);
        match (self.kind, self.factors) {
            (PolicyKind::Product, Some(factors)) => {
                let flat = factors.into_iter().flatten().flatten().collect();
                JointPolicy::product(actions, horizon, states, flat)
            }
            (PolicyKind::Product, None) => Err(RmgError::InvalidPolicy("product policy without factors".into())),
            (PolicyKind::Correlated, _) => {
                let flat = self.dist.into_iter().flatten().flatten().collect();
                JointPolicy::correlated(actions, horizon, states, flat)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub game: String,
    pub kind: EquilibriumKind,
    pub sub_tol: f64,
    pub max_iters: usize,
    pub workers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub config: SolveConfig,
    pub converged: bool,
    pub max_stage_gap: f64,
    /// `[h][s]`
    pub stage_gaps: Vec<Vec<f64>>,
    /// `[agent][h][s]` for `h = 0..=H`
    pub values: Vec<Vec<Vec<f64>>>,
    pub policy: PolicyFile,
}

fn nested_values(out: &NviOutput) -> Vec<Vec<Vec<f64>>> {
    let v = &out.values;
    (0..v.agents())
        .map(|i| (0..=v.horizon()).map(|h| v.layer(i, h).to_vec()).collect())
        .collect()
}

pub fn solve(game: &RobustMarkovGame, config: SolveConfig) -> Result<SolveReport> {
    let options = NviOptions::new(config.kind)
        .sub_tol(config.sub_tol)
        .max_iters(config.max_iters)
        .workers(config.workers);
    let out = dr_nvi(game, &options)?;
    let states = game.state_count();
    Ok(SolveReport {
        provenance: Provenance::new("solve"),
        converged: out.converged,
        max_stage_gap: out.max_stage_gap(),
        stage_gaps: out.stage_gaps.chunks(states.max(1)).map(<[f64]>::to_vec).collect(),
        values: nested_values(&out),
        policy: PolicyFile::from_policy(&out.policy),
        config,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub game: String,
    pub policy_kind: PolicyKind,
    /// Absent for correlated policies.
    pub gap_ne: Option<f64>,
    pub gap_cce: f64,
    pub gap_ce: f64,
    pub agent_gaps_cce: Vec<f64>,
    pub agent_gaps_ce: Vec<f64>,
}

pub fn evaluate(game_name: &str, game: &RobustMarkovGame, policy: &JointPolicy) -> Result<EvalReport> {
    let gap_ne = match gap_ne(game, policy) {
        Ok(g) => Some(g),
        Err(RmgError::NotProductDistribution { .. }) => None,
        Err(e) => return Err(e),
    };
    let cce = agent_gaps_cce(game, policy)?;
    let ce = agent_gaps_ce(game, policy)?;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(EvalReport {
        provenance: Provenance::new("eval"),
        game: game_name.into(),
        policy_kind: policy.kind(),
        gap_ne,
        gap_cce: max(&cce),
        gap_ce: max(&ce),
        agent_gaps_cce: cce,
        agent_gaps_ce: ce,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub game: String,
    pub kind: EquilibriumKind,
    pub sub_tol: f64,
    pub max_iters: usize,
    /// Per-cell sample sizes for `sweep`; a single entry for `sigma-sweep`.
    pub n_list: Vec<usize>,
    /// Shared radius grid for `sigma-sweep`; empty for `sweep`.
    pub sigma_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub n: usize,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub gap: f64,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub command: String,
    pub config: SweepConfig,
    /// Sorted by `(sigma, N, seed)`.
    pub trials: Vec<Trial>,
    /// `(N or sigma, median gap)` per grid point.
    pub medians: Vec<(f64, f64)>,
    /// Least-squares slope of `ln median` against `ln N` (sweep only).
    pub slope: Option<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[m - 1] + values[m])
    } else {
        values[m]
    }
}

/// Least-squares slope of `ln y` against `ln x` over points with positive `y`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn trial(truth: &RobustMarkovGame, config: &SweepConfig, n: usize, sigma: Option<f64>, seed: u64) -> Result<Trial> {
    let start = Instant::now();
    let truth = match sigma {
        Some(s) => truth.with_sigma(vec![s; truth.agent_count()])?,
        None => truth.clone(),
    };
    let data = draw(&truth, n, seed)?;
    let model = empirical_game(&truth, &data)?;
    let options = NviOptions::new(config.kind).sub_tol(config.sub_tol).max_iters(config.max_iters);
    let out = dr_nvi(&model, &options)?;
    let g = gap(&truth, &out.policy, config.kind)?;
    Ok(Trial {
        n,
        sigma,
        seed,
        gap: g,
        wall_ms: config.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    })
}

fn run_trials(truth: &RobustMarkovGame, config: &SweepConfig, grid: Vec<(usize, Option<f64>, u64)>) -> Result<Vec<Trial>> {
    let mut trials = with_workers(config.workers, || {
        grid.par_iter()
            .map(|&(n, sigma, seed)| trial(truth, config, n, sigma, seed))
            .collect::<Result<Vec<_>>>()
    })??;
    trials.sort_by(|a, b| {
        a.sigma
            .unwrap_or(0.0)
            .total_cmp(&b.sigma.unwrap_or(0.0))
            .then(a.n.cmp(&b.n))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(trials)
}

/// Gap on the true game of policies solved on empirical models, per `(N, seed)`.
pub fn sweep(truth: &RobustMarkovGame, config: SweepConfig) -> Result<SweepResult> {
    if config.n_list.is_empty() || config.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RmgError::ShapeMismatch("--n-list must be non-empty and strictly ascending".into()));
    }
    let grid = config
        .n_list
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&seed| (n, None, seed)))
        .collect();
    let trials = run_trials(truth, &config, grid)?;
    let medians: Vec<(f64, f64)> = config
        .n_list
        .iter()
        .map(|&n| {
            let mut gaps: Vec<f64> = trials.iter().filter(|t| t.n == n).map(|t| t.gap).collect();
            (n as f64, median(&mut gaps))
        })
        .collect();
    Ok(SweepResult {
        command: "sweep".into(),
        slope: log_log_slope(&medians),
        medians,
        trials,
        config,
    })
}

/// Gaps at a fixed `N` over a grid of radii shared by all agents.
pub fn sigma_sweep(truth: &RobustMarkovGame, config: SweepConfig) -> Result<SweepResult> {
    let n = match config.n_list.as_slice() {
        [n] => *n,
        _ => return Err(RmgError::ShapeMismatch("sigma-sweep takes exactly one N".into())),
    };
    if config.sigma_list.is_empty() {
        return Err(RmgError::ShapeMismatch("--sigma-list must be non-empty".into()));
    }
    let grid = config
        .sigma_list
        .iter()
        .flat_map(|&s| config.seeds.iter().map(move |&seed| (n, Some(s), seed)))
        .collect();
    let trials = run_trials(truth, &config, grid)?;
    let mut sigmas = config.sigma_list.clone();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let medians = sigmas
        .iter()
        .map(|&s| {
            let mut gaps: Vec<f64> = trials.iter().filter(|t| t.sigma == Some(s)).map(|t| t.gap).collect();
            (s, median(&mut gaps))
        })
        .collect();
    Ok(SweepResult {
        command: "sigma-sweep".into(),
        slope: None,
        medians,
        trials,
        config,
    })
}

impl SweepResult {
    /// CSV with `#` provenance lines, one row per trial, then `median` rows
    /// and (for `sweep`) a `slope` row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# rmg {VERSION} {}\n", self.command);
        out += &format!(
            "# config {}\n",
            serde_json::to_string(&self.config).expect("config serializes")
        );
        let gap_col = format!("gap_{}", self.config.kind);
        let sigma_mode = self.command == "sigma-sweep";
        if sigma_mode {
            out += &format!("sigma,N,seed,{gap_col},wall_ms\n");
        } else {
            out += &format!("N,seed,{gap_col},wall_ms\n");
        }
        let ms = |t: &Trial| t.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default();
        for t in &self.trials {
            if sigma_mode {
                out += &format!("{},{},{},{},{}\n", t.sigma.unwrap_or(0.0), t.n, t.seed, t.gap, ms(t));
            } else {
                out += &format!("{},{},{},{}\n", t.n, t.seed, t.gap, ms(t));
            }
        }
        for (x, m) in &self.medians {
            if sigma_mode {
                out += &format!("median,{},,{m},\n", x);
            } else {
                out += &format!("median,{},{m},\n", *x as usize);
            }
        }
        if !sigma_mode {
            let slope = self.slope.map(|s| s.to_string()).unwrap_or_else(|| "nan".into());
            out += &format!("slope,,{slope},\n");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FishingMode {
    Standard,
    Robust,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FishingConfig {
    pub mode: FishingMode,
    pub p: f64,
    pub sigma: f64,
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FishingReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub config: FishingConfig,
    pub effective_p: f64,
    /// `[a_0, a_1]` when one profile is played at every `(h, s)`.
    pub constant_profile: Option<[usize; 2]>,
    /// Number of `(h, s)` cells per encoded profile `2 a_0 + a_1`.
    pub profile_counts: [usize; 4],
    /// `V_i` at `h = 0`, `s = 0`.
    pub initial_values: [f64; 2],
    pub rollout_terminal_state: usize,
    #[serde(skip)]
    pub profiles: Vec<usize>,
}

pub fn fishing(config: FishingConfig) -> Result<FishingReport> {
    let robust = config.mode == FishingMode::Robust;
    let sol = fishing_solve(config.p, config.horizon, robust, config.sigma)?;
    let mut counts = [0; 4];
    for &a in &sol.profiles {
        counts[a] += 1;
    }
    let terminal = fishing_rollout(config.p, config.horizon, &sol.profiles, config.seed)?;
    Ok(FishingReport {
        provenance: Provenance::new("fishing"),
        effective_p: sol.effective_p,
        constant_profile: sol.constant_profile().map(|(a, b)| [a, b]),
        profile_counts: counts,
        initial_values: [sol.values.get(0, 0, 0), sol.values.get(1, 0, 0)],
        rollout_terminal_state: terminal,
        profiles: sol.profiles,
        config,
    })
}

/// The fishing game with `p` replaced by the solved parameter, as a plain game.
pub fn fishing_export(report: &FishingReport) -> Result<RobustMarkovGame> {
    FishingGame::new(report.effective_p, report.config.horizon)?.to_game([0.0, 0.0])
}

/// Number of fishing states, re-exported for callers that index profiles.
pub const FISHING_STATES: usize = STATES;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub spec: HardInstanceSpec,
    pub params: HardParams,
    /// `V(y_w) - V(x_w)` per step from value iteration.
    pub value_gap: Vec<f64>,
    /// The geometric-sum prediction.
    pub closed_form_gap: Vec<f64>,
    pub max_gap_error: f64,
    /// Cells with a unique optimum where value iteration chose differently.
    pub policy_mismatches: usize,
    /// Largest `Q(other) - Q(closed form)` over all cells; positive means the
    /// closed-form action is beaten somewhere.
    pub max_q_excess: f64,
    pub agrees: bool,
}

pub fn hard_instance(spec: HardInstanceSpec) -> Result<HardReport> {
    let params = spec.params()?;
    let game = build_hard_rmdp(&spec)?;
    let cf = hard_rmdp_closed_form(&spec)?;
    let out = dr_nvi(&game, &NviOptions::new(EquilibriumKind::Nash))?;
    let states = 2 * spec.width();
    let (xw, yw) = (spec.x(spec.w), spec.y(spec.w));
    let value_gap: Vec<f64> = (0..spec.horizon)
        .map(|h| out.values.get(0, h, yw) - out.values.get(0, h, xw))
        .collect();
    let max_gap_error = value_gap
        .iter()
        .zip(&cf.value_gap)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut mismatches = 0;
    let mut excess = f64::NEG_INFINITY;
    for h in 0..spec.horizon {
        for s in 0..states {
            let k = h * states + s;
            let best = cf.policy[k];
            if cf.strict[k] && out.policy.cell(h, s)[best] != 1.0 {
                mismatches += 1;
            }
            let q = out.q.row(0, h, s);
            excess = excess.max(q[1 - best] - q[best]);
        }
    }
    Ok(HardReport {
        provenance: Provenance::new("hard-instance"),
        agrees: max_gap_error <= 1e-10 && mismatches == 0 && excess <= 1e-12,
        params,
        value_gap,
        closed_form_gap: cf.value_gap,
        max_gap_error,
        policy_mismatches: mismatches,
        max_q_excess: excess,
        spec,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub game: String,
    pub horizon: usize,
    pub state_count: usize,
    pub action_sizes: Vec<usize>,
    pub sigma: Vec<f64>,
    pub reward_range: (f64, f64),
    pub normalized: bool,
}

pub fn describe(game_name: &str, game: &RobustMarkovGame) -> ValidateReport {
    ValidateReport {
        provenance: Provenance::new("validate"),
        game: game_name.into(),
        horizon: game.horizon(),
        state_count: game.state_count(),
        action_sizes: game.actions().sizes().to_vec(),
        sigma: game.sigma().to_vec(),
        reward_range: game.reward_range(),
        normalized: game.normalized(),
    }
}

/// Process exit code for a library error.
pub fn exit_code(err: &RmgError) -> i32 {
    match err {
        RmgError::NashIntractable { .. } => 4,
        RmgError::NumericalFailure(_) | RmgError::NonUniqueEquilibrium { .. } | RmgError::ConstructionFailed { .. } => 3,
        RmgError::Io(_) => 1,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_counts() {
        assert_eq!(parse_seeds("3", 10).unwrap(), vec![10, 11, 12]);
        assert_eq!(parse_seeds("4, 9", 10).unwrap(), vec![4, 9]);
        assert_eq!(parse_seeds("7,", 0).unwrap(), vec![7]);
        assert!(parse_seeds("0", 0).is_err());
        assert!(parse_seeds("x", 0).is_err());
    }

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [64.0, 256.0, 1024.0].iter().map(|&n: &f64| (n, 3.0 / n.sqrt())).collect();
        assert!((log_log_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&[(1.0, 1.0)]), None);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&RmgError::NashIntractable { agents: 3 }), 4);
        assert_eq!(exit_code(&RmgError::NumericalFailure("x".into())), 3);
        assert_eq!(exit_code(&RmgError::ShapeMismatch("x".into())), 2);
    }
}
