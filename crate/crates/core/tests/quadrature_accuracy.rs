use dwpp_core::model::{ModelData, ModelSpec, WeightedModel};
use dwpp_core::montecarlo::mle_weights;
use dwpp_core::pairwise::{mpml_objective, pairwise_objective};
use dwpp_core::population::{generate_population, PopulationConfig};
use dwpp_core::quadrature::QuadratureRule;
use dwpp_core::sampling::{draw_sample, DesignKind, DesignSpec};

fn order_gap(config: PopulationConfig, kind: DesignKind, points: &[[f64; 3]]) {
    let pop = generate_population(&config).unwrap();
    let sample = draw_sample(&pop, &DesignSpec { kind, seed: 5 }).unwrap();
    let data = ModelData::from_sample(&sample);
    let w = mle_weights(&sample).unwrap();
    let model = WeightedModel::new(&data, &w, ModelSpec::default()).unwrap();
    let r21 = QuadratureRule::gauss_hermite(21).unwrap();
    let r41 = QuadratureRule::gauss_hermite(41).unwrap();
    for p in points {
        let d = mpml_objective(p, &model, &r21).unwrap() - mpml_objective(p, &model, &r41).unwrap();
        assert!(d.abs() < 1e-8, "mpml at {p:?}: {d}");
        let d = pairwise_objective(p, &model, &r21).unwrap() - pairwise_objective(p, &model, &r41).unwrap();
        assert!(d.abs() < 1e-8, "pairwise at {p:?}: {d}");
    }
}

#[test]
fn unit_indexed_sample() {
    let config = PopulationConfig { n_groups: 5000, size_mean: 1.0, seed: 3, ..Default::default() };
    order_gap(config, DesignKind::SingleStagePps { n: 500 }, &[[1.0, 0.5, 0.0], [1.2, 0.5, 0.3], [0.5, 1.0, -0.5]]);
}

#[test]
fn two_stage_sample() {
    let config = PopulationConfig { n_groups: 500, size_mean: 1.0, seed: 4, ..Default::default() };
    order_gap(config, DesignKind::TwoStageClusterPps { n: 500, f: 0.5 }, &[[1.0, 0.5, 0.0], [1.2, 0.5, 0.3]]);
}
