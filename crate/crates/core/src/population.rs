//! Synthetic finite populations.
//!
//! Responses follow a Poisson model whose log mean depends on a standard
//! normal predictor `x1`, an exponential size variable `x2`, and a bivariate
//! group effect `(gamma_1, gamma_2)` entering as `gamma_1 + x2 * gamma_2`.
//! Units are sorted by `x2` and cut into contiguous groups, so groups are
//! homogeneous in size and the group effects become informative under any
//! design that samples proportional to `x2`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GroupSizeMode {
    /// Every group holds `N / G_U` units.
    Fixed,
    /// Group sizes drawn lognormal around `N / G_U` (mean matched on the
    /// natural scale), integerized and repaired to sum to `N`.
    Lognormal { log_variance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub n_units: usize,
    pub n_groups: usize,
    /// Coefficients of `x1` and `x2`. There is no intercept in the generator.
    pub beta: [f64; 2],
    /// Standard deviations of the two group-effect components.
    pub sigma: [f64; 2],
    /// Correlation matrix of the group effects.
    pub correlation: [[f64; 2]; 2],
    /// Mean of the exponential size variable.
    pub size_mean: f64,
    pub group_sizes: GroupSizeMode,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_units: 5000,
            n_groups: 1250,
            beta: [1.0, 0.5],
            sigma: [1.0, 0.5],
            correlation: [[1.0, 0.0], [0.0, 1.0]],
            size_mean: 2.5,
            group_sizes: GroupSizeMode::Fixed,
            seed: 1,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::config("n_units must be positive"));
        }
        if self.n_groups == 0 {
            return Err(Error::config("n_groups must be positive"));
        }
        if self.n_groups > self.n_units {
            return Err(Error::config(format!(
                "n_groups ({}) must not exceed n_units ({})",
                self.n_groups, self.n_units
            )));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::config("sigma components must be finite and >= 0"));
        }
        if !(self.size_mean > 0.0) || !self.size_mean.is_finite() {
            return Err(Error::config("size_mean must be finite and > 0"));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("beta must be finite"));
        }
        let r = self.correlation;
        if r[0][0] != 1.0 || r[1][1] != 1.0 || r[0][1] != r[1][0] || !(r[0][1].abs() < 1.0) {
            return Err(Error::config(
                "correlation must be symmetric with unit diagonal and |r| < 1",
            ));
        }
        match self.group_sizes {
            GroupSizeMode::Fixed => {
                if self.n_units % self.n_groups != 0 {
                    return Err(Error::config(format!(
                        "fixed group sizes require n_groups ({}) to divide n_units ({})",
                        self.n_groups, self.n_units
                    )));
                }
            }
            GroupSizeMode::Lognormal { log_variance } => {
                if !(log_variance >= 0.0) || !log_variance.is_finite() {
                    return Err(Error::config("log_variance must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub unit_id: usize,
    /// Count; integral-valued, stored as `f64` because large means exceed
    /// the `u64` range.
    pub y: f64,
    pub x1: f64,
    pub x2: f64,
    /// Zero-based group index.
    pub h: usize,
    /// Generating log mean, kept for truth computations.
    pub log_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub config: PopulationConfig,
    /// Units in ascending `x2` order; `unit_id` equals the position.
    pub units: Vec<Unit>,
    pub group_sizes: Vec<usize>,
    pub group_effects: Vec<[f64; 2]>,
}

impl Population {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// Unit index range of each group. Groups are contiguous.
    pub fn group_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.group_sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect()
    }
}

/// Generate a population from `config.seed`.
pub fn generate_population(config: &PopulationConfig) -> Result<Population> {
    let mut rng = rng::stream(config.seed, Purpose::Population, 0, 0);
    generate_population_with(config, &mut rng)
}

/// Generate a population from an explicit stream.
///
/// Draw order: `(x1, x2)` per unit, then group sizes (lognormal mode only),
/// then the group effects, then the responses in ascending `x2` order.
pub fn generate_population_with<R: Rng + ?Sized>(
    config: &PopulationConfig,
    rng: &mut R,
) -> Result<Population> {
    config.validate()?;
    let n = config.n_units;
    let g = config.n_groups;

    let size_dist = Exp::new(1.0 / config.size_mean)
        .map_err(|_| Error::config("size_mean must be finite and > 0"))?;
    let mut raw: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = StandardNormal.sample(rng);
        let x2: f64 = size_dist.sample(rng);
        raw.push((x1, x2));
    }
    raw.sort_by(|a, b| a.1.total_cmp(&b.1));

    let group_sizes = match config.group_sizes {
        GroupSizeMode::Fixed => vec![n / g; g],
        GroupSizeMode::Lognormal { log_variance } => lognormal_group_sizes(n, g, log_variance, rng),
    };

    let r = config.correlation[0][1];
    let chol_22 = (1.0 - r * r).sqrt();
    let group_effects: Vec<[f64; 2]> = (0..g)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            [config.sigma[0] * z1, config.sigma[1] * (r * z1 + chol_22 * z2)]
        })
        .collect();

    let mut units = Vec::with_capacity(n);
    let mut idx = 0;
    for (h, &size) in group_sizes.iter().enumerate() {
        let gamma = group_effects[h];
        for _ in 0..size {
            let (x1, x2) = raw[idx];
            let log_mu = x1 * config.beta[0] + x2 * config.beta[1] + gamma[0] + x2 * gamma[1];
            let y = draw_poisson(log_mu, rng)?;
            units.push(Unit { unit_id: idx, y, x1, x2, h, log_mu });
            idx += 1;
        }
    }

    Ok(Population { config: config.clone(), units, group_sizes, group_effects })
}

/// Largest mean drawn with the exact Poisson sampler.
const POISSON_EXACT_MAX: f64 = 1e18;

fn draw_poisson<R: Rng + ?Sized>(log_mu: f64, rng: &mut R) -> Result<f64> {
    let mu = log_mu.exp();
    if !mu.is_finite() {
        return Err(Error::config(format!("Poisson mean exp({log_mu:.3}) is not finite")));
    }
    if mu <= 0.0 {
        return Ok(0.0);
    }
    if mu > POISSON_EXACT_MAX {
        // relative error of the normal approximation is below 1e-9 here
        let z: f64 = StandardNormal.sample(rng);
        return Ok((mu + mu.sqrt() * z).round().max(0.0));
    }
    let dist = Poisson::new(mu).map_err(|_| Error::config(format!("Poisson mean exp({log_mu:.3}) is not supported")))?;
    Ok(dist.sample(rng))
}

/// Lognormal group sizes with natural-scale mean `n / g`.
///
/// Values are rounded half-up and floored at one, then the total is repaired
/// to `n` by adding or removing one unit at a time, cycling over groups in
/// descending size order (ties by index). Sizes are returned in descending
/// order so the groups holding the smallest-`x2` units get the most units.
pub fn lognormal_group_sizes<R: Rng + ?Sized>(
    n: usize,
    g: usize,
    log_variance: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mean = n as f64 / g as f64;
    let mu_log = mean.ln() - 0.5 * log_variance;
    let sd_log = log_variance.sqrt();
    let mut sizes: Vec<usize> = (0..g)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            let v = (mu_log + sd_log * z).exp();
            ((v + 0.5).floor() as usize).max(1)
        })
        .collect();
    repair_sizes(&mut sizes, n);
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

fn repair_sizes(sizes: &mut [usize], n: usize) {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut total: usize = sizes.iter().sum();
    let mut k = 0;
    while total < n {
        sizes[order[k % order.len()]] += 1;
        total += 1;
        k += 1;
    }
    k = 0;
    while total > n {
        let i = order[k % order.len()];
        if sizes[i] > 1 {
            sizes[i] -= 1;
            total -= 1;
        }
        k += 1;
    }
}

/// Population values of the random-intercept model
/// `log mu = beta0 + beta1 * x1 + u_h` that omits `x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalTruth {
    pub beta0: f64,
    pub beta1: f64,
    pub sigma_u2: f64,
}

/// Tabulated `sigma_u^2` of the random-intercept model for the
/// indirect-sampling settings (size mean 3.5, lognormal group sizes).
pub fn marginal_truth(n_groups: usize) -> Result<f64> {
    match n_groups {
        1250 => Ok(0.578),
        500 => Ok(0.349),
        200 => Ok(0.216),
        100 => Ok(0.169),
        50 => Ok(0.136),
        other => Err(Error::UnsupportedTruth(other)),
    }
}

/// Group-level intercepts of the random-intercept model in a population.
///
/// The intercept of group `h` is the value that reproduces the group's total
/// mean given the `x1` effect: `a_h = log(sum mu_i / sum exp(beta1 x1_i))`.
pub fn group_intercepts(pop: &Population) -> Vec<f64> {
    let beta1 = pop.config.beta[0];
    pop.group_ranges()
        .into_iter()
        .map(|range| {
            let units = &pop.units[range];
            let num: Vec<f64> = units.iter().map(|u| u.log_mu).collect();
            let den: Vec<f64> = units.iter().map(|u| beta1 * u.x1).collect();
            stats::log_sum_exp(&num) - stats::log_sum_exp(&den)
        })
        .collect()
}

/// Marginal-model truth of one population: mean and variance (1/G) of the
/// group intercepts, with `beta1` taken from the generator.
pub fn marginal_truth_of(pop: &Population) -> MarginalTruth {
    let a = group_intercepts(pop);
    MarginalTruth {
        beta0: stats::mean(&a),
        beta1: pop.config.beta[0],
        sigma_u2: stats::population_variance(&a),
    }
}

/// Recompute the marginal-model truth on one large population that scales
/// both the unit and group counts by `scale`, preserving the group structure.
pub fn marginal_truth_oracle(config: &PopulationConfig, scale: usize, seed: u64) -> Result<MarginalTruth> {
    if scale == 0 {
        return Err(Error::config("oracle scale must be positive"));
    }
    let mut big = config.clone();
    big.n_units = config.n_units * scale;
    big.n_groups = config.n_groups * scale;
    let mut rng = rng::stream(seed, Purpose::Oracle, 0, 0);
    let pop = generate_population_with(&big, &mut rng)?;
    Ok(marginal_truth_of(&pop))
}
