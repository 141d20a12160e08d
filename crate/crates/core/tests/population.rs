use dwpp_core::population::{generate_population, marginal_truth, GroupSizeMode, PopulationConfig};
use dwpp_core::Error;

#[test]
fn mean_log_mu_without_effects() {
    let m2 = 2.5;
    let config = PopulationConfig {
        n_units: 100_000,
        n_groups: 25_000,
        sigma: [0.0, 0.0],
        size_mean: m2,
        seed: 11,
        ..Default::default()
    };
    let pop = generate_population(&config).unwrap();
    let logs: Vec<f64> = pop.units.iter().map(|u| u.log_mu).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - 0.5 * m2).abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn bit_identical_for_same_seed() {
    let config = PopulationConfig { seed: 42, ..Default::default() };
    let a = generate_population(&config).unwrap();
    let b = generate_population(&config).unwrap();
    assert_eq!(a, b);
    let c = generate_population(&PopulationConfig { seed: 43, ..config }).unwrap();
    assert_ne!(a.units[0].x1, c.units[0].x1);
}

#[test]
fn group_order_follows_mean_size() {
    for mode in [GroupSizeMode::Fixed, GroupSizeMode::Lognormal { log_variance: 0.5 }] {
        let config = PopulationConfig { group_sizes: mode, seed: 9, ..Default::default() };
        let pop = generate_population(&config).unwrap();
        assert_eq!(pop.group_sizes.iter().sum::<usize>(), config.n_units);
        let mut sums = vec![0.0; config.n_groups];
        for u in &pop.units {
            assert!(u.x2 > 0.0);
            sums[u.h] += u.x2;
        }
        let means: Vec<f64> = sums.iter().zip(&pop.group_sizes).map(|(s, n)| s / *n as f64).collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]), "{mode:?}");
    }
}

#[test]
fn lognormal_sizes_span() {
    let config = PopulationConfig { group_sizes: GroupSizeMode::Lognormal { log_variance: 0.5 }, seed: 2, ..Default::default() };
    let pop = generate_population(&config).unwrap();
    let min = *pop.group_sizes.iter().min().unwrap();
    let max = *pop.group_sizes.iter().max().unwrap();
    assert!(min >= 1 && min <= 2, "min {min}");
    assert!((15..=60).contains(&max), "max {max}");
}

#[test]
fn tabulated_truth_values() {
    for (g, v) in [(1250, 0.578), (500, 0.349), (200, 0.216), (100, 0.169), (50, 0.136)] {
        assert_eq!(marginal_truth(g).unwrap(), v);
    }
    assert_eq!(marginal_truth(300), Err(Error::UnsupportedTruth(300)));
}
