//! Weights that exponentiate the unit likelihood terms (`w_gj`) and the
//! group random-effect prior terms (`w_g`).
//!
//! Raw unit weights are `1 / pi_marg`. Raw group weights depend on the
//! scheme:
//!
//! | scheme | raw `w_g` |
//! |---|---|
//! | single weighting | 1 |
//! | direct group | `1 / pi_g` |
//! | sum-weights | `sum_j w_gj / N_g` (known or estimated `N_g`) |
//! | sum-probabilities | `1 / sum_j v_j pi_j` with `v` normalized to 1 in the group |
//! | product-complement | `1 / (1 - (1 - sum_j v_j (1 - (1 - pi_j)^(1/n)))^n)` |
//!
//! After construction the group weights are scaled to sum to the number of
//! observed groups, and unit weights to the group sample size (two-stage
//! designs) or to the overall sample size (single-stage designs).

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SurveySample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgSource {
    /// Population group sizes carried by the sample.
    Known,
    /// `N_g` estimated from the sum-probabilities first pass.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum GroupWeightScheme {
    SingleWeighting,
    DirectGroup,
    SumWeights { ng_source: NgSource },
    SumProbabilities,
    ProductComplement,
}

impl GroupWeightScheme {
    pub fn label(&self) -> &'static str {
        match self {
            GroupWeightScheme::SingleWeighting => "single_weighting",
            GroupWeightScheme::DirectGroup => "double_weighting",
            GroupWeightScheme::SumWeights { ng_source: NgSource::Known } => "sum_weights_known",
            GroupWeightScheme::SumWeights { ng_source: NgSource::Estimated } => "sum_weights",
            GroupWeightScheme::SumProbabilities => "sum_probabilities",
            GroupWeightScheme::ProductComplement => "product_complement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitTarget {
    /// Each group's unit weights sum to its sample size `n_g`.
    PerGroup,
    /// All unit weights sum to the overall sample size `n`.
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub group_raw: Vec<f64>,
    pub group_w: Vec<f64>,
    pub unit_raw: Vec<Vec<f64>>,
    pub unit_w: Vec<Vec<f64>>,
    pub group_target: f64,
    pub unit_target: UnitTarget,
    pub group_scale: f64,
    /// One factor per group for `PerGroup`, a single factor for `Overall`.
    pub unit_scales: Vec<f64>,
    /// Groups whose product-complement probability was clamped to one.
    pub clamped_groups: usize,
}

impl WeightSet {
    /// All weights exactly one; the unweighted model.
    pub fn ones(sample: &SurveySample) -> WeightSet {
        let g = sample.n_groups();
        let unit: Vec<Vec<f64>> = sample.groups.iter().map(|gr| alloc::vec![1.0; gr.units.len()]).collect();
        WeightSet {
            group_raw: alloc::vec![1.0; g],
            group_w: alloc::vec![1.0; g],
            unit_raw: unit.clone(),
            unit_w: unit,
            group_target: g as f64,
            unit_target: UnitTarget::Overall,
            group_scale: 1.0,
            unit_scales: alloc::vec![1.0],
            clamped_groups: 0,
        }
    }

    /// Unit weights flattened in sample order.
    pub fn unit_w_flat(&self) -> Vec<f64> {
        self.unit_w.iter().flatten().copied().collect()
    }
}

/// Raw unit weights `1 / pi_marg` grouped like the sample.
pub fn raw_unit_weights(sample: &SurveySample) -> Vec<Vec<f64>> {
    sample
        .groups
        .iter()
        .map(|g| g.units.iter().map(|u| 1.0 / u.pi_marg).collect())
        .collect()
}

/// `w_g = 1 / pi_g`.
pub fn direct_group_weights(sample: &SurveySample) -> Result<Vec<f64>> {
    sample
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            group.pi_g.map(|p| 1.0 / p).ok_or_else(|| {
                Error::SchemeMismatch(alloc::format!(
                    "direct group weights need pi_g, missing for observed group {g}"
                ))
            })
        })
        .collect()
}

/// Within-group unit weights `1/pi_j` normalized to sum to one.
fn within_group_shares(pis: &[f64]) -> Vec<f64> {
    let total: f64 = pis.iter().map(|p| 1.0 / p).sum();
    pis.iter().map(|p| (1.0 / p) / total).collect()
}

/// Pseudo group inclusion probabilities of the sum-probabilities method.
/// Values above one are possible and kept.
pub fn sum_probabilities_pseudo_probs(sample: &SurveySample) -> Vec<f64> {
    sample
        .groups
        .iter()
        .map(|g| {
            let pis: Vec<f64> = g.units.iter().map(|u| u.pi_marg).collect();
            within_group_shares(&pis).iter().zip(&pis).map(|(v, p)| v * p).sum()
        })
        .collect()
}

pub fn sum_probabilities_group_weights(sample: &SurveySample) -> Vec<f64> {
    sum_probabilities_pseudo_probs(sample).into_iter().map(|p| 1.0 / p).collect()
}

/// Product-complement pseudo probability of one group for overall sample
/// size `n`. Returns the probability and whether it had to be clamped to one.
pub fn product_complement_prob(pis: &[f64], n: usize) -> (f64, bool) {
    if pis.iter().any(|&p| p >= 1.0) {
        return (1.0, false);
    }
    let n = n as f64;
    let shares = within_group_shares(pis);
    // 1 - (1 - p)^(1/n), computed as -expm1(ln1p(-p)/n) to keep precision
    // for small p and large n.
    let inner: f64 = shares
        .iter()
        .zip(pis)
        .map(|(v, &p)| v * -((-p).ln_1p() / n).exp_m1())
        .sum();
    if inner >= 1.0 {
        return (1.0, true);
    }
    let prob = -(n * (-inner).ln_1p()).exp_m1();
    if prob > 1.0 {
        (1.0, true)
    } else {
        (prob, false)
    }
}

/// Raw product-complement group weights and the number of clamped groups.
pub fn product_complement_group_weights(sample: &SurveySample, n: usize) -> (Vec<f64>, usize) {
    let mut clamped = 0;
    let w = sample
        .groups
        .iter()
        .map(|g| {
            let pis: Vec<f64> = g.units.iter().map(|u| u.pi_marg).collect();
            let (p, c) = product_complement_prob(&pis, n);
            clamped += c as usize;
            1.0 / p
        })
        .collect();
    (w, clamped)
}

/// Estimated group sizes `N_g = sum_j w_{j|g}` with `w_{j|g} = w_gj / w_g`
/// and `w_g` from the sum-probabilities pass.
pub fn estimated_group_sizes(sample: &SurveySample) -> Vec<f64> {
    let first_pass = sum_probabilities_pseudo_probs(sample);
    sample
        .groups
        .iter()
        .zip(first_pass)
        .map(|(g, pt)| g.units.iter().map(|u| (1.0 / u.pi_marg) * pt).sum())
        .collect()
}

/// `w_g = (1 / N_g) sum_j w_gj`.
pub fn sum_weights_group_weights(sample: &SurveySample, source: NgSource) -> Result<Vec<f64>> {
    let sizes: Vec<f64> = match source {
        NgSource::Known => sample
            .groups
            .iter()
            .enumerate()
            .map(|(g, group)| {
                group.pop_size.map(|s| s as f64).ok_or_else(|| {
                    Error::SchemeMismatch(alloc::format!(
                        "sum-weights with known N_g needs the population size of observed group {g}"
                    ))
                })
            })
            .collect::<Result<_>>()?,
        NgSource::Estimated => estimated_group_sizes(sample),
    };
    Ok(sample
        .groups
        .iter()
        .zip(sizes)
        .map(|(g, size)| g.units.iter().map(|u| 1.0 / u.pi_marg).sum::<f64>() / size)
        .collect())
}

/// Scale group weights to sum to the number of groups and unit weights to
/// the requested target.
pub fn normalize(group_raw: Vec<f64>, unit_raw: Vec<Vec<f64>>, target: UnitTarget) -> Result<WeightSet> {
    if group_raw.iter().any(|w| !(*w > 0.0) || !w.is_finite())
        || unit_raw.iter().flatten().any(|w| !(*w > 0.0) || !w.is_finite())
    {
        return Err(Error::config("raw weights must be finite and positive"));
    }
    let g = group_raw.len() as f64;
    let group_scale = g / group_raw.iter().sum::<f64>();
    let group_w = group_raw.iter().map(|w| w * group_scale).collect();
    let (unit_w, unit_scales) = match target {
        UnitTarget::PerGroup => {
            let scales: Vec<f64> = unit_raw
                .iter()
                .map(|ws| ws.len() as f64 / ws.iter().sum::<f64>())
                .collect();
            let w = unit_raw
                .iter()
                .zip(&scales)
                .map(|(ws, s)| ws.iter().map(|w| w * s).collect())
                .collect();
            (w, scales)
        }
        UnitTarget::Overall => {
            let n: usize = unit_raw.iter().map(|ws| ws.len()).sum();
            let s = n as f64 / unit_raw.iter().flatten().sum::<f64>();
            let w = unit_raw.iter().map(|ws| ws.iter().map(|w| w * s).collect()).collect();
            (w, alloc::vec![s])
        }
    };
    Ok(WeightSet {
        group_raw,
        group_w,
        unit_raw,
        unit_w,
        group_target: g,
        unit_target: target,
        group_scale,
        unit_scales,
        clamped_groups: 0,
    })
}

/// Build and normalize the weight set of `scheme` for `sample`.
pub fn build_weights(sample: &SurveySample, scheme: GroupWeightScheme) -> Result<WeightSet> {
    if sample.groups.is_empty() {
        return Err(Error::config("sample has no groups"));
    }
    let mut clamped = 0;
    let group_raw = match scheme {
        GroupWeightScheme::SingleWeighting => alloc::vec![1.0; sample.n_groups()],
        GroupWeightScheme::DirectGroup => direct_group_weights(sample)?,
        GroupWeightScheme::SumWeights { ng_source } => sum_weights_group_weights(sample, ng_source)?,
        GroupWeightScheme::SumProbabilities => sum_probabilities_group_weights(sample),
        GroupWeightScheme::ProductComplement => {
            let (w, c) = product_complement_group_weights(sample, sample.n_total());
            clamped = c;
            w
        }
    };
    let target = if sample.is_direct() { UnitTarget::PerGroup } else { UnitTarget::Overall };
    let mut set = normalize(group_raw, raw_unit_weights(sample), target)?;
    set.clamped_groups = clamped;
    Ok(set)
}
