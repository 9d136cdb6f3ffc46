use statrs::distribution::{ChiSquared, ContinuousCDF};

use selfshap_core::rng::Rng;
use selfshap_core::shapley::{
    exact_shapley, scalar_game, shapley_kernel_weight, unbiased_kernelshap, CoalitionMask, KernelSampler, KernelShapOptions,
};

fn chi_square(observed: &[f64], expected: &[f64]) -> f64 {
    observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum()
}

fn critical(df: usize) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999)
}

#[test]
fn coalition_sizes_follow_the_kernel() {
    const DRAWS: usize = 1_000_000;
    for n in [2usize, 5, 16, 64] {
        let mut sampler = KernelSampler::new(n, Rng::new(n as u64)).unwrap();
        let mut counts = vec![0.0; n - 1];
        for _ in 0..DRAWS {
            counts[sampler.sample_size() - 1] += 1.0;
        }
        // the kernel puts weight ω(s) on each of the C(n, s) coalitions of size s
        let raw: Vec<f64> = (1..n)
            .map(|s| {
                let ln_count = statrs::function::factorial::ln_binomial(n as u64, s as u64);
                shapley_kernel_weight(n, s).unwrap() * ln_count.exp()
            })
            .collect();
        let z: f64 = raw.iter().sum();
        let expected: Vec<f64> = raw.iter().map(|r| r / z * DRAWS as f64).collect();
        if n == 2 {
            assert_eq!(counts, vec![DRAWS as f64]);
            continue;
        }
        let stat = chi_square(&counts, &expected);
        assert!(stat < critical(n - 2), "n={n}: chi2 {stat}");
    }
}

#[test]
fn coalitions_are_uniform_within_a_size() {
    const DRAWS: usize = 200_000;
    let n = 5;
    let mut sampler = KernelSampler::new(n, Rng::new(99)).unwrap();
    let mut counts = vec![0.0; 1 << n];
    for _ in 0..DRAWS {
        let m = sampler.sample();
        counts[m.iter().map(|i| 1usize << i).sum::<usize>()] += 1.0;
    }
    let z: f64 = (1..n).map(|s| 1.0 / (s * (n - s)) as f64).sum();
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    for (bits, &c) in counts.iter().enumerate() {
        let s = (bits as u32).count_ones() as usize;
        if s == 0 || s == n {
            assert_eq!(c, 0.0);
            continue;
        }
        let per_size = 1.0 / (s * (n - s)) as f64 / z;
        observed.push(c);
        expected.push(per_size / statrs::function::factorial::binomial(n as u64, s as u64) * DRAWS as f64);
    }
    let stat = chi_square(&observed, &expected);
    assert!(stat < critical(observed.len() - 1), "chi2 {stat}");
}

/// Linear terms plus a few pairwise interactions, the same family as the
/// synthetic classification task.
fn synthetic_game(n: usize, seed: u64) -> impl Fn(&CoalitionMask) -> f64 {
    let mut rng = Rng::new(seed);
    let w: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let pairs: Vec<(usize, usize, f64)> = (0..n / 2)
        .map(|_| {
            let a = rng.below(n);
            (a, (a + 1 + rng.below(n - 1)) % n, 0.5 * rng.normal())
        })
        .collect();
    move |m: &CoalitionMask| {
        let linear: f64 = m.iter().map(|i| w[i]).sum();
        linear + pairs.iter().filter(|(a, b, _)| m.contains(*a) && m.contains(*b)).map(|p| p.2).sum::<f64>()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn additive_games_converge_with_efficiency_at_every_checkpoint() {
    let n = 10;
    let options = KernelShapOptions {
        tolerance: 1e-4,
        max_samples: 200_000,
        ..KernelShapOptions::default()
    };
    let mut rel = Vec::new();
    for seed in 0..20 {
        let mut rng = Rng::new(500 + seed);
        let w: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let game = scalar_game(n, |m| m.iter().map(|i| w[i]).sum());
        let mut max_gap = 0.0f64;
        let est = unbiased_kernelshap(&game, &options, Rng::new(seed), |c| {
            max_gap = max_gap.max((c.values.iter().sum::<f64>() - c.total[0]).abs());
        })
        .unwrap();
        assert!(max_gap <= 1e-9, "seed {seed}: efficiency gap {max_gap}");
        assert_eq!(est.samples, 200_000);
        let err: Vec<f64> = est.values.iter().zip(&w).map(|(a, b)| a - b).collect();
        // the error is what the reported standard errors predict
        assert!(l2(&err) <= 3.0 * l2(&est.std_errors), "seed {seed}");
        rel.push(l2(&err) / l2(&w));
    }
    rel.sort_by(f64::total_cmp);
    eprintln!("relative L2 error: median {:.4}, worst {:.4}", rel[10], rel[19]);
    assert!(rel[10] <= 0.012, "median {}", rel[10]);
}

#[test]
fn standard_errors_shrink_with_the_square_root_of_samples() {
    let n = 8;
    let game = scalar_game(n, synthetic_game(n, 21));
    let options = KernelShapOptions {
        tolerance: 1e-9,
        max_samples: 256_000,
        batch: 512,
        ..KernelShapOptions::default()
    };
    let mut points = Vec::new();
    unbiased_kernelshap(&game, &options, Rng::new(2), |c| {
        if c.samples >= 4096 && (c.samples / 512).is_power_of_two() {
            points.push(((c.samples as f64).ln(), c.std_errors.iter().cloned().fold(0.0, f64::max).ln()));
        }
    })
    .unwrap();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((-0.6..=-0.4).contains(&slope), "slope {slope}");
}

#[test]
fn majority_game_converges_to_equal_shares() {
    let game = scalar_game(3, |m| f64::from(u8::from(m.cardinality() >= 2)));
    let est = unbiased_kernelshap(&game, &KernelShapOptions::default(), Rng::new(1), |_| {}).unwrap();
    for v in est.values {
        assert!((v - 1.0 / 3.0).abs() <= 0.01, "{v}");
    }
}

#[test]
fn standard_errors_cover_the_truth() {
    let n = 6;
    let game = scalar_game(n, synthetic_game(n, 77));
    let exact = exact_shapley(&game).unwrap();
    let options = KernelShapOptions {
        tolerance: 0.01,
        ..KernelShapOptions::default()
    };
    let est = unbiased_kernelshap(&game, &options, Rng::new(3), |_| {}).unwrap();
    assert!(est.converged);
    for i in 0..n {
        assert!((est.values[i] - exact[i]).abs() <= 5.0 * est.std_errors[i].max(1e-12), "player {i}");
    }
}

#[test]
fn unpaired_sampling_is_also_unbiased() {
    let n = 5;
    let game = scalar_game(n, synthetic_game(n, 5));
    let exact = exact_shapley(&game).unwrap();
    let options = KernelShapOptions {
        paired: false,
        tolerance: 0.005,
        max_samples: 400_000,
        ..KernelShapOptions::default()
    };
    let est = unbiased_kernelshap(&game, &options, Rng::new(4), |_| {}).unwrap();
    for i in 0..n {
        assert!((est.values[i] - exact[i]).abs() <= 5.0 * est.std_errors[i], "player {i}");
    }
}

#[test]
fn seeded_runs_repeat() {
    let game = scalar_game(7, synthetic_game(7, 1));
    let run = || unbiased_kernelshap(&game, &KernelShapOptions::default(), Rng::new(8), |_| {}).unwrap();
    assert_eq!(run(), run());
}
