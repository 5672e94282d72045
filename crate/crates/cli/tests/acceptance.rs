//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmg_cli::{fishing, hard_instance, sweep, FishingConfig, FishingMode, SweepConfig};
use rmg_core::equilibrium::{
    compute_ce, compute_cce, compute_nash_2p, stage_gap_ce, stage_gap_cce, EquilibriumKind, StageGame,
};
use rmg_core::eval::{gap_ne, robust_policy_eval};
use rmg_core::instances::hard::{build_theta_set, HardInstanceSpec};
use rmg_core::instances::random::{random_game, RandomGameSpec, RewardStructure};
use rmg_core::nvi::{dr_nvi, NviOptions};
use rmg_core::tv::{dual_inf, worst_case_kernel};
use rmg_core::{JointActionSpace, JointPolicy, RobustMarkovGame};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_simplex(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn random_policy(rng: &mut impl Rng, actions: &JointActionSpace, horizon: usize, states: usize) -> JointPolicy {
    if rng.random_bool(0.5) {
        let dist = (0..horizon * states).flat_map(|_| random_simplex(rng, actions.total())).collect();
        JointPolicy::correlated(actions.clone(), horizon, states, dist).unwrap()
    } else {
        let n = actions.agent_count();
        let factors = (0..horizon * states * n).map(|k| random_simplex(rng, actions.size(k % n))).collect();
        JointPolicy::product(actions.clone(), horizon, states, factors).unwrap()
    }
}

fn fishing_example() -> Outcome {
    let start = Instant::now();
    let run = |mode, p| {
        fishing(FishingConfig { mode, p, sigma: 0.005, horizon: 100, seed: 0 })
            .map(|r| r.constant_profile)
            .ok()
            .flatten()
    };
    let found = [
        run(FishingMode::Standard, 0.049),
        run(FishingMode::Standard, 0.051),
        run(FishingMode::Robust, 0.049),
        run(FishingMode::Robust, 0.051),
    ];
    let expected = [Some([1, 1]), Some([0, 0]), Some([0, 0]), Some([0, 0])];
    let elapsed = start.elapsed();
    outcome(
        found == expected && elapsed < Duration::from_secs(1),
        format!("profiles {found:?}, {:.3}s for four H=100 solves", elapsed.as_secs_f64()),
    )
}

fn dual_primal() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..10_000 {
        let states = 1 + k % 20;
        let p0 = if k % 5 == 0 {
            // sparse rows exercise the boundary of the simplex
            let mut row = vec![0.0; states];
            row[rng.random_range(0..states)] = 1.0;
            row
        } else {
            random_simplex(&mut rng, states)
        };
        let v: Vec<f64> = (0..states).map(|_| (rng.random::<f64>() * 10.0).round() / 2.0).collect();
        let sigma = if k % 7 == 0 { 0.0 } else { rng.random::<f64>() };
        let dual = dual_inf(&p0, &v, sigma).unwrap().value;
        let primal: f64 = worst_case_kernel(&p0, &v, sigma).unwrap().iter().zip(&v).map(|(p, x)| p * x).sum();
        worst = worst.max((dual - primal).abs());
    }
    let mut endpoint_worst = 0.0f64;
    for _ in 0..10_000 {
        let p = rng.random::<f64>();
        let v = [rng.random::<f64>(), rng.random::<f64>()];
        let sigma = rng.random::<f64>();
        let lo = (p - sigma).max(0.0);
        let hi = (p + sigma).min(1.0);
        let enumerated = [lo, hi].map(|q| q * v[0] + (1.0 - q) * v[1]).into_iter().fold(f64::INFINITY, f64::min);
        let dual = dual_inf(&[p, 1.0 - p], &v, sigma).unwrap().value;
        endpoint_worst = endpoint_worst.max((dual - enumerated).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && endpoint_worst <= 1e-12 && elapsed < Duration::from_secs(5),
        format!(
            "max |dual - primal| = {worst:.1e}, two-state max |dual - endpoint| = {endpoint_worst:.1e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Non-robust evaluation of agent `i` under an explicit kernel.
fn evaluate_with_kernel(game: &RobustMarkovGame, policy: &JointPolicy, kernel: &[f64], i: usize) -> Vec<f64> {
    let (horizon, states, profiles) = (game.horizon(), game.state_count(), game.actions().total());
    let mut next = vec![0.0; states];
    for h in (0..horizon).rev() {
        let mut layer = vec![0.0; states];
        for (s, slot) in layer.iter_mut().enumerate() {
            for a in 0..profiles {
                let cell = (h * states + s) * profiles + a;
                let row = &kernel[cell * states..(cell + 1) * states];
                let cont: f64 = row.iter().zip(&next).map(|(p, v)| p * v).sum();
                *slot += policy.cell(h, s)[a] * (game.reward(i, h, s, a) + cont);
            }
        }
        next = layer;
    }
    next
}

/// Minimum over every combination of interval endpoints in a two-state game.
fn endpoint_oracle(game: &RobustMarkovGame, policy: &JointPolicy, i: usize) -> Vec<f64> {
    let sigma = game.sigma()[i];
    let cells = game.cell_count();
    let ends: Vec<[f64; 2]> = (0..cells)
        .map(|c| {
            let p = game.kernel()[2 * c];
            [(p - sigma).max(0.0), (p + sigma).min(1.0)]
        })
        .collect();
    let mut best = vec![f64::INFINITY; 2];
    let mut kernel = vec![0.0; 2 * cells];
    for mask in 0u32..(1 << cells) {
        for (c, end) in ends.iter().enumerate() {
            let p = end[((mask >> c) & 1) as usize];
            kernel[2 * c] = p;
            kernel[2 * c + 1] = 1.0 - p;
        }
        let v = evaluate_with_kernel(game, policy, &kernel, i);
        for s in 0..2 {
            best[s] = best[s].min(v[s]);
        }
    }
    best
}

fn evaluation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shapes: [(Vec<usize>, usize); 5] =
        [(vec![2], 3), (vec![3], 2), (vec![2, 2], 2), (vec![2, 2], 1), (vec![2, 1, 2], 1)];
    let mut worst = 0.0f64;
    for k in 0..100 {
        let (sizes, horizon) = shapes[k % shapes.len()].clone();
        let sigma = (0..sizes.len()).map(|_| rng.random::<f64>() * 0.7).collect();
        let game = random_game(&RandomGameSpec::new(sizes, 2, horizon, sigma), &mut rng).unwrap();
        let policy = random_policy(&mut rng, game.actions(), horizon, 2);
        let values = robust_policy_eval(&game, &policy).unwrap();
        for i in 0..game.agent_count() {
            let oracle = endpoint_oracle(&game, &policy, i);
            for s in 0..2 {
                worst = worst.max((values.get(i, 0, s) - oracle[s]).abs());
            }
        }
    }
    outcome(worst <= 1e-8, format!("100 policies, max deviation {worst:.1e}"))
}

/// Standard backward induction choosing the first profile with no profitable
/// unilateral deviation. Returns `v[i][h][s]`.
fn standard_nash_vi(game: &RobustMarkovGame) -> Vec<Vec<Vec<f64>>> {
    let (n, horizon, states) = (game.agent_count(), game.horizon(), game.state_count());
    let sizes = game.actions().sizes().to_vec();
    let total: usize = sizes.iter().product();
    let decode = |mut a: usize| {
        let mut d = vec![0; n];
        for j in (0..n).rev() {
            d[j] = a % sizes[j];
            a /= sizes[j];
        }
        d
    };
    let encode = |d: &[usize]| d.iter().zip(&sizes).fold(0, |acc, (x, m)| acc * m + x);
    let mut v = vec![vec![vec![0.0; states]; horizon + 1]; n];
    for h in (0..horizon).rev() {
        for s in 0..states {
            let q: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..total)
                        .map(|a| {
                            let next: f64 =
                                game.kernel_row(h, s, a).iter().zip(&v[i][h + 1]).map(|(p, x)| p * x).sum();
                            game.reward(i, h, s, a) + next
                        })
                        .collect()
                })
                .collect();
            let eq = (0..total)
                .find(|&a| {
                    let d = decode(a);
                    (0..n).all(|i| {
                        (0..sizes[i]).all(|b| {
                            let mut e = d.clone();
                            e[i] = b;
                            q[i][encode(&e)] <= q[i][a]
                        })
                    })
                })
                .expect("common-payoff stage games have a pure equilibrium");
            for i in 0..n {
                v[i][h][s] = q[i][eq];
            }
        }
    }
    v
}

fn zero_radius_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let sizes = if k % 2 == 0 { vec![2 + k % 3] } else { vec![2, 1 + k % 3] };
        let n = sizes.len();
        let spec = RandomGameSpec::new(sizes, 2 + k % 5, 1 + k % 6, vec![0.0; n])
            .rewards(RewardStructure::Common)
            .support(k % 3);
        let game = random_game(&spec, &mut rng).unwrap();
        let out = dr_nvi(&game, &NviOptions::new(EquilibriumKind::Nash)).unwrap();
        let v = standard_nash_vi(&game);
        for i in 0..n {
            for h in 0..=game.horizon() {
                for s in 0..game.state_count() {
                    worst = worst.max((out.values.get(i, h, s) - v[i][h][s]).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("50 games, max deviation {worst:.1e}"))
}

fn span_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_slack = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(1..=3usize);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..=3usize)).collect();
        let states = rng.random_range(2..=6usize);
        let horizon = rng.random_range(1..=8usize);
        let sigma: Vec<f64> = (0..n).map(|_| 0.01 + 0.99 * rng.random::<f64>()).collect();
        let game = random_game(&RandomGameSpec::new(sizes, states, horizon, sigma.clone()), &mut rng).unwrap();
        let policy = random_policy(&mut rng, game.actions(), horizon, states);
        let values = robust_policy_eval(&game, &policy).unwrap();
        for (i, s) in sigma.iter().enumerate() {
            for h in 0..horizon {
                // remaining steps from h (0-indexed) is horizon - h
                let bound = (1.0 / s).min((horizon - h) as f64);
                worst_slack = worst_slack.min(bound + 1e-9 - values.span(i, h));
            }
        }
    }
    outcome(worst_slack >= 0.0, format!("200 games, min slack {worst_slack:.3e}"))
}

fn hard_closed_form() -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for (states, actions) in [(1, 2), (2, 2), (1, 4), (4, 2), (2, 4), (1, 8)] {
        for horizon in [2, 5, 10, 16, 20] {
            for (sigma, eps) in [(0.002, 0.01), (0.05, 1.0), (0.3, 0.5), (0.75, 0.25)] {
                let set = build_theta_set(horizon).unwrap();
                let theta = if set.len() > 1 { set[set.len() / 2].clone() } else { vec![1; horizon] };
                let w = (horizon * 3 + states) % (states * actions);
                let spec = HardInstanceSpec::new(states, actions, horizon, sigma, eps, w, theta);
                if spec.params().is_err() {
                    continue;
                }
                let report = hard_instance(spec).unwrap();
                checked += 1;
                worst = worst.max(report.max_gap_error);
                if !report.agrees {
                    failures.push((states, actions, horizon, sigma));
                }
            }
        }
    }
    outcome(
        failures.is_empty() && checked > 0,
        format!("{checked} instances, max gap error {worst:.1e}, disagreements {failures:?}"),
    )
}

fn sample_scaling() -> Outcome {
    let start = Instant::now();
    let spec = RandomGameSpec::new(vec![2, 2], 4, 5, vec![0.2, 0.2]).rewards(RewardStructure::Cyclic);
    let game = random_game(&spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let config = SweepConfig {
        game: "cyclic-s4-a2-h5".into(),
        kind: EquilibriumKind::Cce,
        sub_tol: 1e-4,
        max_iters: 2_000_000,
        n_list: (6..=14).map(|k| 1usize << k).collect(),
        sigma_list: Vec::new(),
        seeds: (0..20).collect(),
        workers: 0,
        timing: false,
    };
    let result = sweep(&game, config).unwrap();
    let (n_min, n_max) = (1usize << 6, 1usize << 14);
    let gap_at = |n: usize, seed: u64| result.trials.iter().find(|t| t.n == n && t.seed == seed).unwrap().gap;
    let per_seed = (0..20).all(|seed| gap_at(n_max, seed) < gap_at(n_min, seed));
    let first = result.medians.first().unwrap().1;
    let last = result.medians.last().unwrap().1;
    let slope = result.slope.unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    outcome(
        (slope + 0.5).abs() <= 0.15 && per_seed && last < first && elapsed < Duration::from_secs(600),
        format!(
            "slope {slope:.3}, median gap {first:.2e} -> {last:.2e}, every seed decreases: {per_seed}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn random_stage_game(rng: &mut impl Rng, sizes: Vec<usize>) -> StageGame {
    let actions = JointActionSpace::new(sizes).unwrap();
    let payoff = (0..actions.agent_count())
        .map(|_| (0..actions.total()).map(|_| rng.random::<f64>()).collect())
        .collect();
    StageGame::new(actions, payoff).unwrap()
}

/// Row player's best guaranteed payoff over a simplex grid.
fn grid_maximin(a: &[f64], cols: usize, steps: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        for j in 0..=steps - i {
            let x = [i, j, steps - i - j].map(|t| t as f64 / steps as f64);
            let worst = (0..cols)
                .map(|c| (0..3).map(|r| x[r] * a[r * cols + c]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            best = best.max(worst);
        }
    }
    best
}

fn equilibrium_certification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_cce, mut worst_ce, mut mismatched) = (0.0f64, 0.0f64, 0);
    for _ in 0..500 {
        let n = rng.random_range(2..=3usize);
        let sizes = (0..n).map(|_| rng.random_range(2..=4usize)).collect();
        let game = random_stage_game(&mut rng, sizes);
        let cce = compute_cce(&game, 1e-3, 10_000_000);
        let ce = compute_ce(&game, 1e-3, 10_000_000);
        let (g1, g2) = (stage_gap_cce(&game, &cce.dist), stage_gap_ce(&game, &ce.dist));
        if g1 != cce.certified_gap || g2 != ce.certified_gap {
            mismatched += 1;
        }
        worst_cce = worst_cce.max(g1);
        worst_ce = worst_ce.max(g2);
    }
    let (mut worst_nash, mut worst_grid) = (0.0f64, 0.0f64);
    for k in 0..200 {
        let (rows, cols) = (1 + k % 4, 1 + (k / 4) % 4);
        if k % 4 == 0 {
            let a: Vec<f64> = (0..9).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let b = a.iter().map(|x| -x).collect();
            let game = StageGame::bimatrix(3, 3, a.clone(), b).unwrap();
            let sol = compute_nash_2p(&game).unwrap();
            worst_nash = worst_nash.max(sol.certified_gap);
            let value = game.expected_payoff(0, &sol.dist);
            worst_grid = worst_grid.max((value - grid_maximin(&a, 3, 1000)).abs());
        } else {
            let game = random_stage_game(&mut rng, vec![rows, cols]);
            worst_nash = worst_nash.max(compute_nash_2p(&game).unwrap().certified_gap);
        }
    }
    outcome(
        worst_cce <= 1e-3 && worst_ce <= 1e-3 && mismatched == 0 && worst_nash <= 1e-8 && worst_grid <= 2e-3,
        format!(
            "cce {worst_cce:.1e}, ce {worst_ce:.1e}, certificate mismatches {mismatched}, nash {worst_nash:.1e}, zero-sum vs grid {worst_grid:.1e}"
        ),
    )
}

fn nash_fixed_point() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for k in 0..60 {
        let sizes = match k % 3 {
            0 => vec![2, 3],
            1 => vec![3, 3],
            _ => vec![2, 2, 2],
        };
        let n = sizes.len();
        let sigma = (0..n).map(|_| rng.random::<f64>() * 0.8).collect();
        let spec = RandomGameSpec::new(sizes, 2 + k % 4, 1 + k % 6, sigma).rewards(RewardStructure::Common);
        let game = random_game(&spec, &mut rng).unwrap();
        let out = dr_nvi(&game, &NviOptions::new(EquilibriumKind::Nash)).unwrap();
        worst = worst.max(gap_ne(&game, &out.policy).unwrap());
    }
    outcome(worst <= 1e-8, format!("60 games, max gap_ne {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("fishing equilibria", fishing_example),
        ("dual equals greedy primal", dual_primal),
        ("robust evaluation vs endpoint enumeration", evaluation_oracle),
        ("zero radius is standard Nash value iteration", zero_radius_reduction),
        ("span bound", span_bound),
        ("hard instance closed form", hard_closed_form),
        ("sample-size scaling", sample_scaling),
        ("stage equilibrium certification", equilibrium_certification),
        ("Nash fixed point", nash_fixed_point),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.ends_with(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let result = check();
        println!("{label}: {} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
