use selfshap_core::rng::Rng;
use selfshap_core::shapley::{exact_shapley, scalar_game, CoalitionMask, FnGame, EXACT_LIMIT};

/// Table-backed random game on `n` players, indexed by bitmask.
fn random_table(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..1usize << n).map(|_| rng.normal()).collect()
}

fn bits(m: &CoalitionMask) -> usize {
    m.iter().map(|i| 1usize << i).sum()
}

fn table_game(n: usize, table: Vec<f64>) -> FnGame<impl Fn(&CoalitionMask, &mut [f64])> {
    FnGame::new(n, 1, move |m: &CoalitionMask, out: &mut [f64]| out[0] = table[bits(m)])
}

/// Average marginal contribution over every ordering of the players.
fn permutation_shapley(n: usize, table: &[f64]) -> Vec<f64> {
    fn permute(order: &mut Vec<usize>, k: usize, table: &[f64], acc: &mut [f64], count: &mut f64) {
        if k == order.len() {
            let mut s = 0usize;
            for &i in order.iter() {
                acc[i] += table[s | 1 << i] - table[s];
                s |= 1 << i;
            }
            *count += 1.0;
            return;
        }
        for j in k..order.len() {
            order.swap(k, j);
            permute(order, k + 1, table, acc, count);
            order.swap(k, j);
        }
    }
    let mut acc = vec![0.0; n];
    let mut count = 0.0;
    permute(&mut (0..n).collect(), 0, table, &mut acc, &mut count);
    acc.iter().map(|a| a / count).collect()
}

#[test]
fn additive_game_returns_its_weights() {
    let w = [0.5, -1.25, 3.0, 0.0, 2.5];
    let phi = exact_shapley(&scalar_game(5, |m| m.iter().map(|i| w[i]).sum())).unwrap();
    for (p, w) in phi.iter().zip(w) {
        assert!((p - w).abs() <= 1e-10);
    }
}

#[test]
fn two_player_closed_form() {
    let v = [0.3, 1.7, -0.4, 2.2]; // ∅, {0}, {1}, {0,1}
    let phi = exact_shapley(&table_game(2, v.to_vec())).unwrap();
    let phi0 = 0.5 * (v[1] - v[0]) + 0.5 * (v[3] - v[2]);
    let phi1 = 0.5 * (v[2] - v[0]) + 0.5 * (v[3] - v[1]);
    assert!((phi[0] - phi0).abs() <= 1e-10 && (phi[1] - phi1).abs() <= 1e-10);
}

#[test]
fn symmetric_majority_splits_evenly() {
    for n in [3, 5, 8, 11] {
        let phi = exact_shapley(&scalar_game(n, move |m| f64::from(u8::from(2 * m.cardinality() > n)))).unwrap();
        for p in phi {
            assert!((p - 1.0 / n as f64).abs() <= 1e-10, "n={n}: {p}");
        }
    }
}

#[test]
fn matches_permutation_enumeration() {
    let mut rng = Rng::new(7);
    for n in 1..=6 {
        let table = random_table(n, &mut rng);
        let phi = exact_shapley(&table_game(n, table.clone())).unwrap();
        for (a, b) in phi.iter().zip(permutation_shapley(n, &table)) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn efficiency_over_random_games() {
    let mut rng = Rng::new(11);
    for _ in 0..100 {
        let n = 1 + rng.below(9);
        let table = random_table(n, &mut rng);
        let total = table[(1 << n) - 1] - table[0];
        let phi = exact_shapley(&table_game(n, table)).unwrap();
        assert!((phi.iter().sum::<f64>() - total).abs() <= 1e-10);
    }
}

#[test]
fn dummy_players_get_zero() {
    let mut rng = Rng::new(12);
    for _ in 0..100 {
        let n = 2 + rng.below(8);
        let dummy = rng.below(n);
        let mut table = random_table(n, &mut rng);
        for s in 0..table.len() {
            if s & (1 << dummy) != 0 {
                table[s] = table[s & !(1 << dummy)];
            }
        }
        let phi = exact_shapley(&table_game(n, table)).unwrap();
        assert!(phi[dummy].abs() <= 1e-10, "{}", phi[dummy]);
    }
}

#[test]
fn larger_marginal_contributions_never_lower_the_value() {
    let mut rng = Rng::new(13);
    for _ in 0..100 {
        let n = 2 + rng.below(8);
        let i = rng.below(n);
        let a = random_table(n, &mut rng);
        // b adds a non-negative amount to every marginal contribution of i
        let mut b = a.clone();
        for s in 0..a.len() {
            if s & (1 << i) == 0 {
                let extra = rng.uniform() * f64::from(u8::from(rng.below(2) == 0));
                b[s | 1 << i] += extra;
            }
        }
        let pa = exact_shapley(&table_game(n, a)).unwrap();
        let pb = exact_shapley(&table_game(n, b)).unwrap();
        assert!(pb[i] >= pa[i] - 1e-12, "{} < {}", pb[i], pa[i]);
    }
}

#[test]
fn symmetric_players_get_equal_values() {
    let mut rng = Rng::new(14);
    for _ in 0..100 {
        let n = 2 + rng.below(7);
        let base = random_table(n, &mut rng);
        // symmetrize players 0 and 1: v(S) depends on them only through |S ∩ {0,1}|
        let mut table = base.clone();
        for s in 0..table.len() {
            if s & 1 == 0 && s & 2 != 0 {
                table[s] = base[(s & !2) | 1];
            }
        }
        let phi = exact_shapley(&table_game(n, table)).unwrap();
        assert!((phi[0] - phi[1]).abs() <= 1e-10);
    }
}

#[test]
fn vector_games_are_per_output() {
    let game = FnGame::new(3, 2, |m: &CoalitionMask, out: &mut [f64]| {
        out[0] = m.cardinality() as f64;
        out[1] = f64::from(u8::from(m.contains(2)));
    });
    let phi = exact_shapley(&game).unwrap();
    assert_eq!(phi.len(), 6);
    for i in 0..3 {
        assert!((phi[i * 2] - 1.0).abs() <= 1e-12);
        assert!((phi[i * 2 + 1] - f64::from(u8::from(i == 2))).abs() <= 1e-12);
    }
}

#[test]
fn too_many_players_is_an_error() {
    assert!(exact_shapley(&scalar_game(EXACT_LIMIT + 1, |_| 0.0)).is_err());
}

#[test]
fn non_finite_values_name_the_coalition() {
    let err = exact_shapley(&scalar_game(3, |m| if m.cardinality() == 2 { f64::NAN } else { 1.0 })).unwrap_err();
    assert!(format!("{err}").contains('{'), "{err}");
}
