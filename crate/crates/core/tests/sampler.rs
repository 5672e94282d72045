use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rmg_core::instances::random::{random_game, RandomGameSpec};
use rmg_core::nvi::with_workers;
use rmg_core::sampler::{draw, empirical_game};

fn max_row_l1(a: &[f64], b: &[f64], states: usize) -> f64 {
    a.chunks(states)
        .zip(b.chunks(states))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len().is_multiple_of(2) { 0.5 * (xs[m - 1] + xs[m]) } else { xs[m] }
}

#[test]
fn empirical_rows_sum_to_one() {
    let game = random_game(&RandomGameSpec::new(vec![2, 2], 5, 3, vec![0.1, 0.1]), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let emp = empirical_game(&game, &draw(&game, 37, 1).unwrap()).unwrap();
    for row in emp.kernel().chunks(5) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
    }
    assert_eq!(emp.rewards(), game.rewards());
    assert_eq!(emp.sigma(), game.sigma());
}

#[test]
fn same_seed_same_dataset_in_any_pool() {
    let game = random_game(&RandomGameSpec::new(vec![3], 6, 4, vec![0.2]), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let a = with_workers(1, || draw(&game, 50, 11)).unwrap().unwrap();
    let b = with_workers(4, || draw(&game, 50, 11)).unwrap().unwrap();
    assert_eq!(a, b);
    assert_ne!(a, draw(&game, 50, 12).unwrap());
}

#[test]
fn l1_error_halves_when_samples_quadruple() {
    let states = 6;
    let game = random_game(&RandomGameSpec::new(vec![2], states, 2, vec![0.1]), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let errors: Vec<f64> = [64, 256, 1024, 4096]
        .iter()
        .map(|&n| {
            median(
                (0..20)
                    .map(|seed| {
                        let emp = empirical_game(&game, &draw(&game, n, seed).unwrap()).unwrap();
                        max_row_l1(emp.kernel(), game.kernel(), states)
                    })
                    .collect(),
            )
        })
        .collect();
    for pair in errors.windows(2) {
        let ratio = pair[1] / pair[0];
        assert!((0.35..=0.65).contains(&ratio), "{errors:?}");
    }
}
