use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum RmgError {
    #[error("kernel row (h={h}, s={s}, a={a}) is not stochastic: sum = {rowsum}")]
    NonStochasticRow {
        h: usize,
        s: usize,
        a: usize,
        rowsum: f64,
    },
    #[error("kernel entry (h={h}, s={s}, a={a}, s'={next}) is negative or not finite: {value}")]
    InvalidProbability {
        h: usize,
        s: usize,
        a: usize,
        next: usize,
        value: f64,
    },
    #[error("reward r[{agent}][{h}][{s}][{a}] = {value} outside declared range [{min}, {max}]")]
    RewardOutOfRange {
        agent: usize,
        h: usize,
        s: usize,
        a: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("uncertainty radius {sigma} outside [0, 1]{}", agent_suffix(.agent))]
    SigmaOutOfRange { agent: Option<usize>, sigma: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("distribution is not a product of its marginals (deviation {deviation:e})")]
    NotProductDistribution { deviation: f64 },
    #[error("mixed Nash equilibrium requested for a {agents}-agent stage game without a pure equilibrium")]
    NashIntractable { agents: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("stage game at (h={h}, s={s}) has {count} pure equilibria, expected exactly one")]
    NonUniqueEquilibrium { h: usize, s: usize, count: usize },
    #[error("greedy code construction reached {actual} vectors, {required} required")]
    ConstructionFailed { actual: usize, required: usize },
    #[error("parameter regime violation: {0}")]
    ParameterRegimeViolation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = RmgError> = std::result::Result<T, E>;

fn agent_suffix(agent: &Option<usize>) -> String {
    agent.map(|i| format!(" for agent {i}")).unwrap_or_default()
}
