//! Weighted log pseudo-posterior of the Poisson random-intercept model
//!
//! ```text
//! log mu_gj = x_gj' beta + u_g,     u_g ~ N(0, sigma_u^2)
//! ```
//!
//! Each unit log-likelihood is multiplied by its weight `w_gj` and each
//! group prior term by `w_g`. The parameter vector is `(beta, u, log sigma_u)`;
//! the log-Jacobian of the scale transform is included. Poisson terms keep the
//! `-log(y!)` constant so values are comparable across implementations.
//!
//! Priors: independent `N(0, 10^2)` on `beta`, half-Student-t with 3 degrees
//! of freedom and scale 2 on `sigma_u`.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SurveySample;
use crate::weights::WeightSet;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub beta_sd: f64,
    pub sigma_df: f64,
    pub sigma_scale: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors { beta_sd: 10.0, sigma_df: 3.0, sigma_scale: 2.0 }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_sd > 0.0) || !(self.sigma_df > 0.0) || !(self.sigma_scale > 0.0) {
            return Err(Error::config("prior scales must be positive"));
        }
        Ok(())
    }

    pub fn log_beta(&self, beta: f64) -> f64 {
        let s = self.beta_sd;
        -0.5 * LN_2PI - s.ln() - beta * beta / (2.0 * s * s)
    }

    /// Half-Student-t log density of `sigma > 0`.
    pub fn log_sigma(&self, sigma: f64) -> f64 {
        let nu = self.sigma_df;
        let s = self.sigma_scale;
        let z = sigma / s;
        core::f64::consts::LN_2 + libm::lgamma(0.5 * (nu + 1.0))
            - libm::lgamma(0.5 * nu)
            - 0.5 * (nu * PI).ln()
            - s.ln()
            - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
    }

    /// Derivative of `log_sigma(exp(t))` with respect to `t`, excluding the
    /// Jacobian.
    fn dlog_sigma_dlog(&self, sigma: f64) -> f64 {
        let nu = self.sigma_df;
        let s2 = self.sigma_scale * self.sigma_scale;
        -(nu + 1.0) * sigma * sigma / (nu * s2 + sigma * sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub priors: Priors,
    /// Column of the design matrix holding the intercept, if any. Used by the
    /// sampler's location move.
    pub intercept: Option<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { priors: Priors::default(), intercept: Some(0) }
    }
}

/// Responses, design matrix and group layout of a sample. Units are stored
/// contiguously by observed group.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub y: Vec<f64>,
    pub log_factorial: Vec<f64>,
    /// Row-major `n x p`.
    pub x: Vec<f64>,
    pub p: usize,
    /// `group_start[g]..group_start[g + 1]` are the units of group `g`.
    pub group_start: Vec<usize>,
    pub column_names: Vec<String>,
}

impl ModelData {
    /// Design `[1, x1]` built from a sample.
    pub fn from_sample(sample: &SurveySample) -> ModelData {
        let mut x = Vec::with_capacity(2 * sample.n_total());
        let mut y = Vec::with_capacity(sample.n_total());
        let mut sizes = Vec::with_capacity(sample.n_groups());
        for g in &sample.groups {
            sizes.push(g.units.len());
            for u in &g.units {
                x.push(1.0);
                x.push(u.x1);
                y.push(u.y);
            }
        }
        ModelData::new(y, x, 2, &sizes, alloc::vec!["intercept".into(), "x1".into()])
            .expect("sample-derived design is consistent")
    }

    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize, group_sizes: &[usize], column_names: Vec<String>) -> Result<ModelData> {
        let n = y.len();
        if x.len() != n * p {
            return Err(Error::config(alloc::format!(
                "design matrix has {} entries, expected {} x {}",
                x.len(),
                n,
                p
            )));
        }
        if column_names.len() != p {
            return Err(Error::config("column name count does not match the design"));
        }
        if group_sizes.iter().sum::<usize>() != n {
            return Err(Error::config("group sizes do not add up to the number of units"));
        }
        if group_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("every observed group needs at least one unit"));
        }
        if y.iter().any(|v| !(*v >= 0.0) || v.fract() != 0.0) {
            return Err(Error::config("responses must be non-negative integers"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("design matrix has non-finite entries"));
        }
        let mut group_start = Vec::with_capacity(group_sizes.len() + 1);
        let mut acc = 0;
        group_start.push(0);
        for s in group_sizes {
            acc += s;
            group_start.push(acc);
        }
        let log_factorial = y.iter().map(|v| libm::lgamma(v + 1.0)).collect();
        Ok(ModelData { y, log_factorial, x, p, group_start, column_names })
    }

    pub fn n_units(&self) -> usize {
        self.y.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_start.len() - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn group_of_units(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_units());
        for g in 0..self.n_groups() {
            for _ in self.group_start[g]..self.group_start[g + 1] {
                out.push(g);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
    pub log_sigma_u: f64,
}

impl ParamState {
    pub fn sigma_u(&self) -> f64 {
        self.log_sigma_u.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
    pub log_sigma_u: f64,
}

/// Poisson log density with the `log(y!)` constant.
#[inline]
pub fn log_poisson(y: f64, log_factorial: f64, eta: f64) -> f64 {
    y * eta - eta.exp() - log_factorial
}

#[inline]
pub fn log_normal(u: f64, log_sigma: f64, sigma2: f64) -> f64 {
    -0.5 * LN_2PI - log_sigma - u * u / (2.0 * sigma2)
}

/// A sample with its weights attached, ready for evaluation.
#[derive(Debug, Clone)]
pub struct WeightedModel<'a> {
    pub data: &'a ModelData,
    pub unit_w: Vec<f64>,
    pub group_w: Vec<f64>,
    pub spec: ModelSpec,
}

impl<'a> WeightedModel<'a> {
    pub fn new(data: &'a ModelData, weights: &WeightSet, spec: ModelSpec) -> Result<Self> {
        Self::from_parts(data, weights.unit_w_flat(), weights.group_w.clone(), spec)
    }

    pub fn from_parts(data: &'a ModelData, unit_w: Vec<f64>, group_w: Vec<f64>, spec: ModelSpec) -> Result<Self> {
        spec.priors.validate()?;
        if unit_w.len() != data.n_units() || group_w.len() != data.n_groups() {
            return Err(Error::config("weights are not aligned with the sample"));
        }
        if let Some(c) = spec.intercept {
            if c >= data.p {
                return Err(Error::config("intercept column is out of range"));
            }
        }
        Ok(WeightedModel { data, unit_w, group_w, spec })
    }

    fn check_state(&self, state: &ParamState) -> Result<()> {
        if state.beta.len() != self.data.p || state.u.len() != self.data.n_groups() {
            return Err(Error::config(alloc::format!(
                "state has {} coefficients and {} effects, model expects {} and {}",
                state.beta.len(),
                state.u.len(),
                self.data.p,
                self.data.n_groups()
            )));
        }
        Ok(())
    }

    /// Weighted data log-likelihood `sum w_gj log f(y_gj | u_g, beta)`.
    pub fn data_log_likelihood(&self, state: &ParamState) -> f64 {
        let d = self.data;
        let mut total = 0.0;
        for g in 0..d.n_groups() {
            for i in d.group_start[g]..d.group_start[g + 1] {
                let eta = dot(d.row(i), &state.beta) + state.u[g];
                total += self.unit_w[i] * log_poisson(d.y[i], d.log_factorial[i], eta);
            }
        }
        total
    }

    /// Weighted random-effect term `sum w_g log N(u_g | 0, sigma_u^2)`.
    pub fn effects_log_density(&self, state: &ParamState) -> f64 {
        let s2 = (2.0 * state.log_sigma_u).exp();
        state
            .u
            .iter()
            .zip(&self.group_w)
            .map(|(u, w)| w * log_normal(*u, state.log_sigma_u, s2))
            .sum()
    }

    /// Complete-data weighted log pseudo-likelihood, no priors on
    /// `(beta, sigma_u)`.
    pub fn log_pseudo_likelihood(&self, state: &ParamState) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.data_log_likelihood(state) + self.effects_log_density(state))
    }

    pub fn log_prior(&self, state: &ParamState) -> f64 {
        let pr = &self.spec.priors;
        state.beta.iter().map(|b| pr.log_beta(*b)).sum::<f64>() + pr.log_sigma(state.sigma_u()) + state.log_sigma_u
    }

    pub fn log_pseudo_posterior(&self, state: &ParamState) -> Result<f64> {
        self.check_state(state)?;
        let data = self.data_log_likelihood(state);
        if !data.is_finite() {
            return Err(Error::NonFinite { component: "data log-likelihood" });
        }
        let effects = self.effects_log_density(state);
        if !effects.is_finite() {
            return Err(Error::NonFinite { component: "random-effect prior" });
        }
        let prior = self.log_prior(state);
        if !prior.is_finite() {
            return Err(Error::NonFinite { component: "parameter prior" });
        }
        Ok(data + effects + prior)
    }

    pub fn gradient(&self, state: &ParamState) -> Result<Gradient> {
        self.check_state(state)?;
        let d = self.data;
        let pr = &self.spec.priors;
        let sigma = state.sigma_u();
        let s2 = sigma * sigma;
        let mut g_beta: Vec<f64> = state.beta.iter().map(|b| -b / (pr.beta_sd * pr.beta_sd)).collect();
        let mut g_u = Vec::with_capacity(d.n_groups());
        let mut g_log_sigma = 0.0;
        for g in 0..d.n_groups() {
            let mut score = 0.0;
            for i in d.group_start[g]..d.group_start[g + 1] {
                let row = d.row(i);
                let eta = dot(row, &state.beta) + state.u[g];
                let r = self.unit_w[i] * (d.y[i] - eta.exp());
                score += r;
                for (gb, x) in g_beta.iter_mut().zip(row) {
                    *gb += r * x;
                }
            }
            let u = state.u[g];
            let w = self.group_w[g];
            g_u.push(score - w * u / s2);
            g_log_sigma += w * (u * u / s2 - 1.0);
        }
        g_log_sigma += pr.dlog_sigma_dlog(sigma) + 1.0;
        let finite = g_beta.iter().chain(&g_u).all(|v| v.is_finite()) && g_log_sigma.is_finite();
        if !finite {
            return Err(Error::NonFinite { component: "gradient" });
        }
        Ok(Gradient { beta: g_beta, u: g_u, log_sigma_u: g_log_sigma })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn log_pseudo_posterior(state: &ParamState, data: &ModelData, weights: &WeightSet, spec: &ModelSpec) -> Result<f64> {
    WeightedModel::new(data, weights, spec.clone())?.log_pseudo_posterior(state)
}

pub fn grad_log_pseudo_posterior(
    state: &ParamState,
    data: &ModelData,
    weights: &WeightSet,
    spec: &ModelSpec,
) -> Result<Gradient> {
    WeightedModel::new(data, weights, spec.clone())?.gradient(state)
}
