use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use dwpp_core::mcmc::{run_chain, split_rhat, summarize, summarize_column, McmcConfig, PosteriorDraws};
use dwpp_core::model::{ModelData, ModelSpec, WeightedModel};
use dwpp_core::montecarlo::mle_weights;
use dwpp_core::pairwise::{default_starts, fit_mle, mpml_objective, pairwise_objective, Objective};
use dwpp_core::population::{generate_population, PopulationConfig};
use dwpp_core::quadrature::QuadratureRule;
use dwpp_core::rng::{stream, Purpose};
use dwpp_core::sampling::{draw_sample, DesignKind, DesignSpec};
use dwpp_core::weights::{build_weights, GroupWeightScheme};

/// Random-intercept Poisson data with `groups` groups of `size` units.
fn simulate(groups: usize, size: usize, beta: [f64; 2], sigma: f64, seed: u64) -> ModelData {
    let mut rng = stream(seed, Purpose::Synthetic, 0, 0);
    let effect = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for _ in 0..groups {
        let u: f64 = if sigma > 0.0 { effect.sample(&mut rng) } else { 0.0 };
        for _ in 0..size {
            let x1: f64 = StandardNormal.sample(&mut rng);
            let mu = (beta[0] + beta[1] * x1 + u).exp();
            y.push(Poisson::new(mu).unwrap().sample(&mut rng));
            x.extend([1.0, x1]);
        }
    }
    ModelData::new(y, x, 2, &vec![size; groups], vec!["(Intercept)".into(), "x1".into()]).unwrap()
}

fn unweighted(data: &ModelData) -> WeightedModel<'_> {
    WeightedModel::from_parts(data, vec![1.0; data.n_units()], vec![1.0; data.n_groups()], ModelSpec::default()).unwrap()
}

#[test]
fn null_variance_is_recovered() {
    let data = simulate(250, 2, [1.0, 0.5], 0.0, 21);
    let model = unweighted(&data);
    let rule = QuadratureRule::default();
    let starts = default_starts(&model);
    for objective in [Objective::Mpml, Objective::Pairwise] {
        let fit = fit_mle(objective, &model, &rule, &starts).unwrap();
        assert!(fit.converged, "{objective:?}");
        assert!(fit.sigma_u2 < 0.05, "{objective:?}: {}", fit.sigma_u2);
        let f = |x: &[f64]| match objective {
            Objective::Mpml => mpml_objective(x, &model, &rule).unwrap(),
            Objective::Pairwise => pairwise_objective(x, &model, &rule).unwrap(),
        };
        for s in &starts {
            assert!(fit.objective >= f(s));
        }
    }
}

#[test]
fn mle_recovers_generating_values() {
    let data = simulate(250, 4, [0.5, 0.8], 0.7, 22);
    let model = unweighted(&data);
    let fit = fit_mle(Objective::Mpml, &model, &QuadratureRule::default(), &default_starts(&model)).unwrap();
    assert!((fit.beta[1] - 0.8).abs() < 0.1, "{:?}", fit.beta);
    assert!((fit.sigma_u2 - 0.49).abs() < 0.2, "{}", fit.sigma_u2);
}

#[test]
fn posterior_covers_generating_slope() {
    let data = simulate(100, 5, [0.5, 0.8], 0.7, 23);
    let draws = run_chain(&unweighted(&data), &McmcConfig { seed: 3, ..Default::default() }).unwrap();
    let s = summarize_column(&draws, 1);
    assert!((s.mean - 0.8).abs() < 3.0 * s.sd, "{s:?}");
    let sigma2 = summarize_column(&draws, draws.sigma_u2_index());
    assert!((sigma2.mean - 0.49).abs() < 3.0 * sigma2.sd, "{sigma2:?}");
    for a in &draws.acceptance {
        assert!((a.beta - 0.234).abs() <= 0.15, "{a:?}");
        assert!((a.effects - 0.44).abs() <= 0.15, "{a:?}");
        assert!((a.log_sigma - 0.44).abs() <= 0.15, "{a:?}");
    }
}

#[test]
fn no_signal_slope_is_centred_at_zero() {
    let sizes = vec![5; 40];
    let data = ModelData::new(vec![2.0; 200], (0..200).flat_map(|_| [1.0, 0.0]).collect(), 2, &sizes, vec!["(Intercept)".into(), "x1".into()]).unwrap();
    let draws = run_chain(&unweighted(&data), &McmcConfig { seed: 4, ..Default::default() }).unwrap();
    let s = summarize_column(&draws, 1);
    assert!(s.mean.abs() < 3.0 * s.sd / s.ess.sqrt(), "{s:?}");
    assert!(s.q025 < 0.0 && s.q975 > 0.0);
}

fn table1_model_data() -> (ModelData, dwpp_core::weights::WeightSet) {
    let config = PopulationConfig { n_groups: 5000, size_mean: 1.0, seed: 6, ..Default::default() };
    let pop = generate_population(&config).unwrap();
    let sample = draw_sample(&pop, &DesignSpec { kind: DesignKind::SingleStagePps { n: 500 }, seed: 6 }).unwrap();
    let data = ModelData::from_sample(&sample);
    let w = build_weights(&sample, GroupWeightScheme::SumProbabilities).unwrap();
    (data, w)
}

#[test]
fn chains_are_reproducible_and_agree() {
    let (data, w) = table1_model_data();
    let model = WeightedModel::new(&data, &w, ModelSpec::default()).unwrap();
    let a = run_chain(&model, &McmcConfig { seed: 9, ..Default::default() }).unwrap();
    let b = run_chain(&model, &McmcConfig { seed: 9, ..Default::default() }).unwrap();
    assert_eq!(a, b);
    let c = run_chain(&model, &McmcConfig { seed: 10, ..Default::default() }).unwrap();
    assert_ne!(a.chains[0][..10], c.chains[0][..10]);
    let merged = a.concat(c);
    for col in [0, 1, merged.sigma_u2_index()] {
        let per_chain: Vec<Vec<f64>> = (0..merged.chains.len()).map(|k| merged.chain_column(k, col)).collect();
        let rhat = split_rhat(&per_chain);
        assert!(rhat < 1.05, "{}: {rhat}", merged.names[col]);
    }
}

#[test]
fn mle_weights_are_normalized_per_group() {
    let config = PopulationConfig { n_groups: 500, seed: 7, ..Default::default() };
    let pop = generate_population(&config).unwrap();
    let sample = draw_sample(&pop, &DesignSpec { kind: DesignKind::TwoStageClusterPps { n: 500, f: 0.5 }, seed: 7 }).unwrap();
    let w = mle_weights(&sample).unwrap();
    for (ws, g) in w.unit_w.iter().zip(&sample.groups) {
        assert!((ws.iter().sum::<f64>() - g.units.len() as f64).abs() < 1e-9);
    }
}

fn synthetic_draws(chains: Vec<Vec<f64>>) -> PosteriorDraws {
    PosteriorDraws { names: vec!["a".into(), "b".into()], n_beta: 1, n_groups: 0, acceptance: Vec::new(), chains }
}

#[test]
fn constant_draws_summarize_exactly() {
    let draws = synthetic_draws(vec![[2.5, 1.0].repeat(50), [2.5, 1.0].repeat(50)]);
    let s = summarize_column(&draws, 0);
    assert_eq!(s.mean, 2.5);
    assert_eq!(s.sd, 0.0);
    assert_eq!((s.q025, s.q50, s.q975), (2.5, 2.5, 2.5));
}

#[test]
fn quantiles_match_sorting() {
    let mut rng = stream(5, Purpose::Oracle, 0, 0);
    let chains: Vec<Vec<f64>> = (0..3).map(|_| (0..402).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
    let draws = synthetic_draws(chains);
    let mut all = draws.column(1);
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let type7 = |p: f64| {
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        all[lo] + (h - lo as f64) * (all[(lo + 1).min(n - 1)] - all[lo])
    };
    let s = &summarize(&draws)[1];
    for (q, p) in [(s.q025, 0.025), (s.q25, 0.25), (s.q50, 0.5), (s.q75, 0.75), (s.q975, 0.975)] {
        assert!((q - type7(p)).abs() < 1e-12, "{p}");
    }
    let means: Vec<f64> = (0..3).map(|k| draws.chain_column(k, 1).iter().sum::<f64>() / 201.0).collect();
    assert!((s.mean - means.iter().sum::<f64>() / 3.0).abs() < 1e-12);
}
