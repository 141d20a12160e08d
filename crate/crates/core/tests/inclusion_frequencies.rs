use dwpp_core::population::{generate_population, PopulationConfig};
use dwpp_core::rng::{stream, Purpose};
use dwpp_core::sampling::{draw_sample_with, unit_inclusion_probs, DesignKind};

const DRAWS: usize = 10_000;

fn within_three_se(count: usize, pi: f64) -> bool {
    let freq = count as f64 / DRAWS as f64;
    let se = (pi * (1.0 - pi) / DRAWS as f64).sqrt();
    (freq - pi).abs() <= 3.0 * se + 1e-12
}

fn small_population() -> dwpp_core::population::Population {
    generate_population(&PopulationConfig { n_units: 20, n_groups: 5, seed: 8, ..Default::default() }).unwrap()
}

#[test]
fn single_stage_pps() {
    let pop = small_population();
    let n = 6;
    let pi = unit_inclusion_probs(&pop, n).unwrap();
    let mut counts = [0usize; 20];
    let mut rng = stream(1, Purpose::Design, 0, 0);
    for _ in 0..DRAWS {
        let s = draw_sample_with(&pop, &DesignKind::SingleStagePps { n }, &mut rng).unwrap();
        assert_eq!(s.n_total(), n);
        for u in s.units() {
            counts[u.unit_id] += 1;
        }
    }
    for i in 0..20 {
        assert!(within_three_se(counts[i], pi[i]), "unit {i}: {} vs {}", counts[i], pi[i]);
    }
}

#[test]
fn two_stage_pps_both_stages() {
    let pop = small_population();
    let kind = DesignKind::TwoStageClusterPps { n: 4, f: 0.5 };
    let mut group_counts = [0usize; 5];
    let mut unit_counts = [0usize; 20];
    let mut pi_g = [f64::NAN; 5];
    let mut pi_marg = [f64::NAN; 20];
    let mut rng = stream(2, Purpose::Design, 0, 0);
    for _ in 0..DRAWS {
        let s = draw_sample_with(&pop, &kind, &mut rng).unwrap();
        assert_eq!(s.n_groups(), 2);
        for g in &s.groups {
            group_counts[g.h] += 1;
            pi_g[g.h] = g.pi_g.unwrap();
            for u in &g.units {
                unit_counts[u.unit_id] += 1;
                pi_marg[u.unit_id] = u.pi_marg;
            }
        }
    }
    for h in 0..5 {
        assert!(within_three_se(group_counts[h], pi_g[h]), "group {h}: {} vs {}", group_counts[h], pi_g[h]);
    }
    for i in 0..20 {
        assert!(within_three_se(unit_counts[i], pi_marg[i]), "unit {i}: {} vs {}", unit_counts[i], pi_marg[i]);
    }
}
