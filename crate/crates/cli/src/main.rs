use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rmg_cli::*;
use rmg_core::equilibrium::{EquilibriumKind, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use rmg_core::instances::hard::{build_theta_set, HardInstanceSpec};
use rmg_core::instances::random::{random_game, RandomGameSpec, RewardStructure};
use rmg_core::io::{load_game, save_game};
use rmg_core::{RmgError, RobustMarkovGame};

#[derive(Parser)]
#[command(name = "rmg", version, about = "Robust Markov game solver and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Nash,
    Ce,
    Cce,
}

impl From<Kind> for EquilibriumKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Nash => EquilibriumKind::Nash,
            Kind::Ce => EquilibriumKind::Ce,
            Kind::Cce => EquilibriumKind::Cce,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Rewards {
    Independent,
    Common,
    Cyclic,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "nash")]
    kind: Kind,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    sub_tol: f64,
    /// Iteration cap of the regret-based stage solvers
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Worker threads (0 = all cores, 1 = serial)
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a game file by robust equilibrium value iteration
    Solve {
        #[arg(long)]
        game: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Equilibrium gaps of a policy on a game; solves first when no policy is given
    Eval {
        #[arg(long)]
        game: PathBuf,
        /// Output of `solve`
        #[arg(long)]
        policy: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gap versus per-cell sample size N
    Sweep {
        #[arg(long)]
        game: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Ascending comma-separated sample sizes
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        /// A count K (K seeds from the base seed) or an explicit comma list
        #[arg(long, default_value = "20")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave wall_ms blank so reruns are byte-identical
        #[arg(long)]
        no_timing: bool,
    },
    /// Gap versus a shared uncertainty radius at fixed N
    SigmaSweep {
        #[arg(long)]
        game: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma_list: Vec<f64>,
        #[arg(long, default_value = "20")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Fishing-protection example
    Fishing {
        #[arg(long, value_enum, default_value = "standard")]
        mode: Mode,
        #[arg(long, default_value_t = 0.049)]
        p: f64,
        #[arg(long, default_value_t = 0.005)]
        sigma: f64,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// Also write the game with the solved p as a plain game file
        #[arg(long)]
        export_game: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower-bound instance: value iteration against the closed form
    HardInstance {
        #[arg(long, default_value_t = 2)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        w: usize,
        /// Index into the greedy code; 0 is the base word
        #[arg(long, default_value_t = 1)]
        theta: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a game file and print its shape
    Validate {
        #[arg(long)]
        game: PathBuf,
    },
    /// Write a random normalized game
    Generate {
        /// Comma-separated action counts, one per agent
        #[arg(long, value_delimiter = ',', default_value = "2,2")]
        actions: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        states: usize,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        /// One radius for every agent, or one per agent
        #[arg(long, value_delimiter = ',', default_value = "0.2")]
        sigma: Vec<f64>,
        #[arg(long, value_enum, default_value = "independent")]
        rewards: Rewards,
        /// Next states per kernel row (0 = all)
        #[arg(long, default_value_t = 0)]
        support: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Standard,
    Robust,
}

fn read_game(path: &Path) -> anyhow::Result<RobustMarkovGame> {
    load_game(path).with_context(|| format!("loading {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(value: &impl Serialize, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(&text, out)
}

fn sweep_config(game: &Path, solver: &SolverArgs, seeds: &str, no_timing: bool) -> anyhow::Result<SweepConfig> {
    let seeds = parse_seeds(seeds, base_seed()).map_err(RmgError::ShapeMismatch)?;
    Ok(SweepConfig {
        game: game.display().to_string(),
        kind: solver.kind.into(),
        sub_tol: solver.sub_tol,
        max_iters: solver.max_iters,
        n_list: Vec::new(),
        sigma_list: Vec::new(),
        seeds,
        workers: solver.workers,
        timing: !no_timing,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Solve { game, solver, out } => {
            let g = read_game(&game)?;
            let config = SolveConfig {
                game: game.display().to_string(),
                kind: solver.kind.into(),
                sub_tol: solver.sub_tol,
                max_iters: solver.max_iters,
                workers: solver.workers,
                seed: base_seed(),
            };
            let report = solve(&g, config)?;
            if !report.converged {
                eprintln!("warning: some stage solves stopped at the iteration cap (max gap {:e})", report.max_stage_gap);
            }
            emit_json(&report, out.as_deref())
        }
        Command::Eval { game, policy, solver, out } => {
            let g = read_game(&game)?;
            let policy = match policy {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let report: SolveReport = serde_json::from_str(&text).map_err(RmgError::from)?;
                    report.policy.into_policy()?
                }
                None => {
                    let config = SolveConfig {
                        game: game.display().to_string(),
                        kind: solver.kind.into(),
                        sub_tol: solver.sub_tol,
                        max_iters: solver.max_iters,
                        workers: solver.workers,
                        seed: base_seed(),
                    };
                    solve(&g, config)?.policy.into_policy()?
                }
            };
            emit_json(&evaluate(&game.display().to_string(), &g, &policy)?, out.as_deref())
        }
        Command::Sweep { game, solver, n_list, seeds, out, no_timing } => {
            let g = read_game(&game)?;
            let mut config = sweep_config(&game, &solver, &seeds, no_timing)?;
            config.n_list = n_list;
            emit(&sweep(&g, config)?.to_csv(), out.as_deref())
        }
        Command::SigmaSweep { game, solver, n, sigma_list, seeds, out, no_timing } => {
            let g = read_game(&game)?;
            let mut config = sweep_config(&game, &solver, &seeds, no_timing)?;
            config.n_list = vec![n];
            config.sigma_list = sigma_list;
            emit(&sigma_sweep(&g, config)?.to_csv(), out.as_deref())
        }
        Command::Fishing { mode, p, sigma, horizon, export_game, out } => {
            let mode = match mode {
                Mode::Standard => FishingMode::Standard,
                Mode::Robust => FishingMode::Robust,
            };
            let report = fishing(FishingConfig { mode, p, sigma, horizon, seed: base_seed() })?;
            if let Some(path) = export_game {
                save_game(&fishing_export(&report)?, &path).with_context(|| format!("writing {}", path.display()))?;
            }
            emit_json(&report, out.as_deref())
        }
        Command::HardInstance { states, actions, horizon, sigma, eps, w, theta, out } => {
            let set = build_theta_set(horizon)?;
            if theta >= set.len() {
                bail!(RmgError::ParameterRegimeViolation(format!(
                    "theta index {theta} out of range, the code has {} words",
                    set.len()
                )));
            }
            let spec = HardInstanceSpec::new(states, actions, horizon, sigma, eps, w, set[theta].clone());
            let report = hard_instance(spec)?;
            emit_json(&report, out.as_deref())?;
            if !report.agrees {
                bail!(RmgError::NumericalFailure("value iteration disagrees with the closed form".into()));
            }
            Ok(())
        }
        Command::Validate { game } => {
            let g = read_game(&game)?;
            emit_json(&describe(&game.display().to_string(), &g), None)
        }
        Command::Generate { actions, states, horizon, sigma, rewards, support, out } => {
            let sigma = match sigma.as_slice() {
                [s] => vec![*s; actions.len()],
                _ => sigma,
            };
            let rewards = match rewards {
                Rewards::Independent => RewardStructure::Independent,
                Rewards::Common => RewardStructure::Common,
                Rewards::Cyclic => RewardStructure::Cyclic,
            };
            let spec = RandomGameSpec::new(actions, states, horizon, sigma).rewards(rewards).support(support);
            let g = random_game(&spec, &mut ChaCha8Rng::seed_from_u64(base_seed()))?;
            save_game(&g, &out).with_context(|| format!("writing {}", out.display()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<RmgError>().map_or(1, exit_code);
            ExitCode::from(code as u8)
        }
    }
}
