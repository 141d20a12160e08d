//! Monte Carlo studies: replicate populations, draw informative and control
//! samples, fit every method, aggregate bias and MSE against the marginal
//! truth.
//!
//! Replicate `r` draws its population from stream `(seed, Population, r)`,
//! the informative sample from `(seed, Design, r)` and the SRS control from
//! `(seed, ControlDesign, r)`. Method `k` of replicate `r` runs its sampler
//! with seed `derive_seed(seed, r, k)`. Results therefore do not depend on
//! the order in which replicates are evaluated.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{self, McmcConfig};
use crate::model::{ModelData, ModelSpec, WeightedModel};
use crate::pairwise::{self, Objective};
use crate::population::{self, generate_population_with, MarginalTruth, PopulationConfig};
use crate::quadrature::QuadratureRule;
use crate::rng::{self, Purpose};
use crate::sampling::{draw_sample_with, DesignKind, SurveySample};
use crate::stats;
use crate::weights::{self, GroupWeightScheme, UnitTarget, WeightSet};

/// Parameter names reported for every method.
pub const PARAMETERS: [&str; 3] = ["beta0", "beta1", "sigma_u2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Unweighted fit on the SRS control sample.
    SrsUnweighted,
    SingleWeighting,
    DoubleWeighting { scheme: GroupWeightScheme },
    Mpml,
    PairIntegrated,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::SrsUnweighted => "srs".into(),
            Method::SingleWeighting => "single_weighting".into(),
            Method::DoubleWeighting { scheme } => scheme.label().into(),
            Method::Mpml => "mpml".into(),
            Method::PairIntegrated => "pair_integrated".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TruthSource {
    /// All three values from one large population scaled by `scale`.
    Oracle { scale: usize },
    /// Tabulated `sigma_u^2`; `beta0` and `beta1` from the oracle.
    Tabulated { scale: usize },
    Explicit { beta0: f64, beta1: f64, sigma_u2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub population: PopulationConfig,
    pub design: DesignKind,
    /// Defaults to the equal-probability analog of `design`.
    #[serde(default)]
    pub control_design: Option<DesignKind>,
    pub methods: Vec<Method>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub truth: TruthSource,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub model: ModelSpec,
    /// Unit weights of indirect designs sum to `n` overall unless set.
    #[serde(default)]
    pub unit_target: Option<UnitTarget>,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    pub seed: u64,
}

fn default_replicates() -> usize {
    100
}

fn default_order() -> usize {
    QuadratureRule::DEFAULT_ORDER
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("scenario needs at least one method"));
        }
        self.population.validate()?;
        self.mcmc.validate()?;
        self.model.priors.validate()?;
        if let TruthSource::Tabulated { .. } = self.truth {
            population::marginal_truth(self.population.n_groups)?;
        }
        Ok(())
    }

    pub fn control(&self) -> DesignKind {
        self.control_design.unwrap_or(match self.design {
            DesignKind::SingleStagePps { n } | DesignKind::SrsSingleStage { n } => DesignKind::SrsSingleStage { n },
            DesignKind::TwoStageClusterPps { n, f } | DesignKind::SrsTwoStage { n, f } => DesignKind::SrsTwoStage { n, f },
        })
    }

    fn needs_control(&self) -> bool {
        self.methods.contains(&Method::SrsUnweighted)
    }
}

/// Resolve the truth the study compares against.
pub fn resolve_truth(scenario: &ScenarioSpec) -> Result<MarginalTruth> {
    match scenario.truth {
        TruthSource::Explicit { beta0, beta1, sigma_u2 } => Ok(MarginalTruth { beta0, beta1, sigma_u2 }),
        TruthSource::Oracle { scale } => population::marginal_truth_oracle(&scenario.population, scale, scenario.seed),
        TruthSource::Tabulated { scale } => {
            let mut t = population::marginal_truth_oracle(&scenario.population, scale, scenario.seed)?;
            t.sigma_u2 = population::marginal_truth(scenario.population.n_groups)?;
            Ok(t)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    /// Values in `PARAMETERS` order, or the failure reason.
    pub estimates: core::result::Result<[f64; 3], String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub groups_sampled: usize,
    pub outcomes: Vec<MethodOutcome>,
}

fn weights_for(sample: &SurveySample, scheme: GroupWeightScheme, unit_target: Option<UnitTarget>) -> Result<WeightSet> {
    let built = weights::build_weights(sample, scheme)?;
    match unit_target {
        Some(t) if t != built.unit_target => weights::normalize(built.group_raw, built.unit_raw, t),
        _ => Ok(built),
    }
}

/// Group and within-group weights for the likelihood baselines: design
/// group weights when groups were sampled directly, sum-probabilities
/// otherwise, with unit weights summing to `n_g` in each group.
pub fn mle_weights(sample: &SurveySample) -> Result<WeightSet> {
    let group_raw = if sample.is_direct() {
        weights::direct_group_weights(sample)?
    } else {
        weights::sum_probabilities_group_weights(sample)
    };
    let unit_raw = match sample.units().next().and_then(|u| u.pi_cond) {
        Some(_) => sample
            .groups
            .iter()
            .map(|g| g.units.iter().map(|u| 1.0 / u.pi_cond.unwrap_or(u.pi_marg)).collect())
            .collect(),
        None => weights::raw_unit_weights(sample),
    };
    weights::normalize(group_raw, unit_raw, UnitTarget::PerGroup)
}

fn posterior_estimates(data: &ModelData, ws: &WeightSet, spec: &ModelSpec, config: &McmcConfig) -> Result<[f64; 3]> {
    let model = WeightedModel::new(data, ws, spec.clone())?;
    let draws = mcmc::run_chain(&model, config)?;
    Ok([draws.column_mean(0), draws.column_mean(1), draws.column_mean(draws.sigma_u2_index())])
}

fn mle_estimates(objective: Objective, sample: &SurveySample, data: &ModelData, spec: &ModelSpec, order: usize) -> Result<[f64; 3]> {
    let ws = mle_weights(sample)?;
    let model = WeightedModel::new(data, &ws, spec.clone())?;
    let rule = QuadratureRule::gauss_hermite(order)?;
    let fit = pairwise::fit_mle(objective, &model, &rule, &pairwise::default_starts(&model))?;
    if !fit.converged {
        return Err(Error::NoConvergence(format!("{objective:?} optimizer stopped without meeting tolerances")));
    }
    Ok([fit.beta[0], fit.beta[1], fit.sigma_u2])
}

/// Fit one method and return its estimates in `PARAMETERS` order.
pub fn fit_method(
    scenario: &ScenarioSpec,
    method: Method,
    sample: &SurveySample,
    control: Option<&SurveySample>,
    seed: u64,
) -> Result<[f64; 3]> {
    let config = McmcConfig { seed, ..scenario.mcmc.clone() };
    match method {
        Method::SrsUnweighted => {
            let control = control.ok_or_else(|| Error::config("SRS method needs a control sample"))?;
            let data = ModelData::from_sample(control);
            posterior_estimates(&data, &WeightSet::ones(control), &scenario.model, &config)
        }
        Method::SingleWeighting => {
            let data = ModelData::from_sample(sample);
            let ws = weights_for(sample, GroupWeightScheme::SingleWeighting, scenario.unit_target)?;
            posterior_estimates(&data, &ws, &scenario.model, &config)
        }
        Method::DoubleWeighting { scheme } => {
            let data = ModelData::from_sample(sample);
            let ws = weights_for(sample, scheme, scenario.unit_target)?;
            posterior_estimates(&data, &ws, &scenario.model, &config)
        }
        Method::Mpml => mle_estimates(Objective::Mpml, sample, &ModelData::from_sample(sample), &scenario.model, scenario.quadrature_order),
        Method::PairIntegrated => {
            mle_estimates(Objective::Pairwise, sample, &ModelData::from_sample(sample), &scenario.model, scenario.quadrature_order)
        }
    }
}

/// Run one replicate. Errors in population generation or sampling fail
/// every method of the replicate.
pub fn run_replicate(scenario: &ScenarioSpec, replicate: usize) -> ReplicateResult {
    let r = replicate as u64;
    let fail_all = |reason: String| ReplicateResult {
        replicate,
        groups_sampled: 0,
        outcomes: scenario
            .methods
            .iter()
            .map(|m| MethodOutcome { method: m.label(), estimates: Err(reason.clone()) })
            .collect(),
    };
    let pop = match generate_population_with(&scenario.population, &mut rng::stream(scenario.seed, Purpose::Population, r, 0)) {
        Ok(p) => p,
        Err(e) => return fail_all(e.to_string()),
    };
    let sample = match draw_sample_with(&pop, &scenario.design, &mut rng::stream(scenario.seed, Purpose::Design, r, 0)) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let control = if scenario.needs_control() {
        match draw_sample_with(&pop, &scenario.control(), &mut rng::stream(scenario.seed, Purpose::ControlDesign, r, 0)) {
            Ok(s) => Some(s),
            Err(e) => return fail_all(e.to_string()),
        }
    } else {
        None
    };
    let outcomes = scenario
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let seed = rng::derive_seed(scenario.seed, r, k as u64);
            let estimates = fit_method(scenario, *m, &sample, control.as_ref(), seed).map_err(|e| e.to_string());
            MethodOutcome { method: m.label(), estimates }
        })
        .collect();
    ReplicateResult { replicate, groups_sampled: sample.n_groups(), outcomes }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mean: f64,
    pub bias: f64,
    pub mse: f64,
    /// Monte Carlo variance with divisor `n`, so `mse = bias^2 + variance`.
    pub variance: f64,
    pub relative_bias: f64,
    pub nrmse: f64,
}

/// Bias and MSE of `estimates` against `truth`.
pub fn error_stats(estimates: &[f64], truth: f64) -> ErrorStats {
    let n = estimates.len();
    let mean = stats::mean(estimates);
    let bias = mean - truth;
    let mse = estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / n as f64;
    let variance = stats::population_variance(estimates);
    ErrorStats {
        n,
        mean,
        bias,
        mse,
        variance,
        relative_bias: bias / truth,
        nrmse: mse.sqrt() / truth.abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub parameter: String,
    pub truth: f64,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub replicate: usize,
    pub method: String,
    pub parameter: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub replicate: usize,
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: String,
    pub replicates: usize,
    pub truth: MarginalTruth,
    pub summary: Vec<SummaryRow>,
    pub estimates: Vec<EstimateRow>,
    pub failures: Vec<FailureRow>,
    pub warnings: Vec<String>,
}

impl McReport {
    pub fn row(&self, method: &str, parameter: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method && r.parameter == parameter)
    }

    pub fn bias(&self, method: &str, parameter: &str) -> Option<f64> {
        self.row(method, parameter).map(|r| r.stats.bias)
    }
}

fn truth_value(truth: &MarginalTruth, parameter: usize) -> f64 {
    match parameter {
        0 => truth.beta0,
        1 => truth.beta1,
        _ => truth.sigma_u2,
    }
}

/// Aggregate replicate results, ordered by replicate index.
pub fn assemble(scenario: &ScenarioSpec, truth: MarginalTruth, mut results: Vec<ReplicateResult>) -> McReport {
    results.sort_by_key(|r| r.replicate);
    let labels: Vec<String> = scenario.methods.iter().map(|m| m.label()).collect();
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    let mut per_method: Vec<Vec<[f64; 3]>> = vec![Vec::new(); labels.len()];
    for r in &results {
        for (k, o) in r.outcomes.iter().enumerate() {
            match &o.estimates {
                Ok(v) => {
                    per_method[k].push(*v);
                    for (j, p) in PARAMETERS.iter().enumerate() {
                        estimates.push(EstimateRow {
                            replicate: r.replicate,
                            method: o.method.clone(),
                            parameter: (*p).into(),
                            estimate: v[j],
                        });
                    }
                }
                Err(reason) => failures.push(FailureRow { replicate: r.replicate, method: o.method.clone(), reason: reason.clone() }),
            }
        }
    }
    let mut summary = Vec::new();
    let mut warnings = Vec::new();
    for (k, label) in labels.iter().enumerate() {
        let ok = per_method[k].len();
        let failed = results.len() - ok;
        if failed as f64 > 0.05 * results.len() as f64 {
            warnings.push(format!("{label}: {failed} of {} replicates failed", results.len()));
        }
        if ok == 0 {
            continue;
        }
        for (j, p) in PARAMETERS.iter().enumerate() {
            let vals: Vec<f64> = per_method[k].iter().map(|v| v[j]).collect();
            let t = truth_value(&truth, j);
            summary.push(SummaryRow { method: label.clone(), parameter: (*p).into(), truth: t, stats: error_stats(&vals, t) });
        }
    }
    McReport { scenario: scenario.name.clone(), replicates: results.len(), truth, summary, estimates, failures, warnings }
}

/// Sequential study.
pub fn run_study(scenario: &ScenarioSpec) -> Result<McReport> {
    scenario.validate()?;
    let truth = resolve_truth(scenario)?;
    let results = (0..scenario.replicates).map(|r| run_replicate(scenario, r)).collect();
    Ok(assemble(scenario, truth, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_injected_estimates() {
        let s = error_stats(&[1.0, 3.0], 2.0);
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.mse, 1.0);
        let exact = error_stats(&[2.5; 4], 2.5);
        assert_eq!((exact.bias, exact.mse), (0.0, 0.0));
    }

    #[test]
    fn mse_decomposes() {
        let e = [0.3, 1.7, 2.2, -0.4, 0.9];
        let s = error_stats(&e, 0.5);
        assert!((s.mse - (s.bias * s.bias + s.variance)).abs() < 1e-12);
    }

    fn scenario() -> ScenarioSpec {
        ScenarioSpec {
            name: "t".into(),
            population: PopulationConfig { n_units: 400, n_groups: 100, ..Default::default() },
            design: DesignKind::TwoStageClusterPps { n: 100, f: 0.5 },
            control_design: None,
            methods: vec![Method::SingleWeighting, Method::SrsUnweighted],
            replicates: 2,
            truth: TruthSource::Explicit { beta0: 1.0, beta1: 1.0, sigma_u2: 1.0 },
            mcmc: McmcConfig { n_iter: 200, burn_in: 100, ..Default::default() },
            model: ModelSpec::default(),
            unit_target: None,
            quadrature_order: 21,
            seed: 5,
        }
    }

    #[test]
    fn empty_methods_rejected() {
        let mut s = scenario();
        s.methods.clear();
        assert!(run_study(&s).is_err());
    }

    #[test]
    fn replicate_order_does_not_matter() {
        let s = scenario();
        let truth = resolve_truth(&s).unwrap();
        let fwd: Vec<_> = (0..2).map(|r| run_replicate(&s, r)).collect();
        let rev: Vec<_> = (0..2).rev().map(|r| run_replicate(&s, r)).collect();
        assert_eq!(assemble(&s, truth, fwd), assemble(&s, truth, rev));
    }

    #[test]
    fn control_defaults_to_srs_analog() {
        let s = scenario();
        assert_eq!(s.control(), DesignKind::SrsTwoStage { n: 100, f: 0.5 });
    }
}
