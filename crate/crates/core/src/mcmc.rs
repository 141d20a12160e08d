//! Adaptive Metropolis-within-Gibbs sampler for the weighted Poisson
//! random-intercept pseudo-posterior.
//!
//! One sweep updates, in order:
//!
//! 1. `beta` as one block given the effects, Gaussian random walk shaped by
//!    the inverse weighted Fisher information at the current state;
//! 2. `beta + d` jointly with `u_g - xbar_g'd`, where `xbar_g` is the
//!    weighted mean design row of group `g`, with a covariance learned from
//!    the chain's history;
//! 3. each `u_g` as a scalar random walk;
//! 4. `log sigma_u` as a scalar random walk;
//! 5. a scale move `(u, log sigma_u) -> (c u, log sigma_u + log c)`.
//!
//! Moves 2 and 5 are exact Metropolis steps that travel along the ridges a
//! centered parameterization creates between the intercept, the effects and
//! their scale. Step sizes adapt by Robbins-Monro toward the acceptance
//! targets during burn-in and are frozen afterwards.
//!
//! Per group the sampler caches `A_g = sum w y`, `L_g = log sum w exp(x'beta)`
//! and `C_g = sum w (y x'beta - log y!)`, so the data log-likelihood of a group
//! is `u A_g + C_g - exp(u + L_g)` and a scalar effect update costs O(1).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{dot, ParamState, WeightedModel};
use crate::rng::{self, Purpose, StreamRng};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub target_scalar: f64,
    pub target_block: f64,
    /// Iterations between refreshes of the block proposal covariance.
    pub adapt_window: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 3000,
            burn_in: 1500,
            thin: 1,
            chains: 2,
            seed: 1,
            target_scalar: 0.44,
            target_block: 0.234,
            adapt_window: 50,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::config("burn_in must be smaller than n_iter"));
        }
        if self.chains == 0 || self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::config("chains, thin and adapt_window must be positive"));
        }
        let ok = |t: f64| t > 0.0 && t < 1.0;
        if !ok(self.target_scalar) || !ok(self.target_block) {
            return Err(Error::config("acceptance targets must be in (0, 1)"));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

#[inline]
fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    // NaN compares false and is rejected.
    let u: f64 = rng.random::<f64>();
    u.ln() < log_ratio
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[inline]
fn gain(iteration: usize) -> f64 {
    ((iteration + 1) as f64).powf(-0.6)
}

/// Random-walk step size tuned toward a target acceptance rate.
#[derive(Debug, Clone)]
pub struct ScalarAdapter {
    pub log_step: f64,
    pub target: f64,
    pub tried: usize,
    pub accepted: usize,
}

impl ScalarAdapter {
    pub fn new(step: f64, target: f64) -> Self {
        ScalarAdapter { log_step: step.max(1e-12).ln(), target, tried: 0, accepted: 0 }
    }

    #[inline]
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.log_step.exp() * normal(rng)
    }

    /// Record an outcome; adapt when `adapt_at` holds the iteration number.
    #[inline]
    pub fn record(&mut self, accepted: bool, adapt_at: Option<usize>) {
        self.tried += 1;
        self.accepted += accepted as usize;
        if let Some(t) = adapt_at {
            self.log_step += gain(t) * (accepted as u8 as f64 - self.target);
            self.log_step = self.log_step.clamp(-30.0, 10.0);
        }
    }

    pub fn rate(&self) -> f64 {
        if self.tried == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }

    pub fn reset_counts(&mut self) {
        self.tried = 0;
        self.accepted = 0;
    }
}

/// Block random walk with covariance learned from the chain's own history.
#[derive(Debug, Clone)]
pub struct BlockAdapter {
    pub dim: usize,
    pub log_scale: f64,
    pub target: f64,
    chol: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: usize,
    pub tried: usize,
    pub accepted: usize,
}

impl BlockAdapter {
    /// `base_cov` is row-major `dim x dim`; falls back to the identity if it
    /// is not positive definite.
    pub fn new(base_cov: &[f64], dim: usize, target: f64) -> Self {
        let chol = linalg::cholesky(base_cov, dim).unwrap_or_else(|| identity(dim));
        BlockAdapter {
            dim,
            log_scale: (2.38 / (dim as f64).sqrt()).ln(),
            target,
            chol,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
            count: 0,
            tried: 0,
            accepted: 0,
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim).map(|_| normal(rng)).collect();
        let s = self.log_scale.exp();
        linalg::lower_mul(&self.chol, &z, self.dim).into_iter().map(|v| v * s).collect()
    }

    pub fn record(&mut self, accepted: bool, adapt_at: Option<usize>) {
        self.tried += 1;
        self.accepted += accepted as usize;
        if let Some(t) = adapt_at {
            self.log_scale += gain(t) * (accepted as u8 as f64 - self.target);
            self.log_scale = self.log_scale.clamp(-30.0, 10.0);
        }
    }

    /// Add a state to the running mean and covariance.
    pub fn observe(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m2[i * self.dim + j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    /// Replace the proposal shape by the empirical covariance, when enough
    /// states have been observed and it is positive definite.
    pub fn refresh(&mut self) {
        if self.count < 2 * self.dim + 20 {
            return;
        }
        let n = (self.count - 1) as f64;
        let mut cov: Vec<f64> = self.m2.iter().map(|v| v / n).collect();
        let scale = (0..self.dim).map(|i| cov[i * self.dim + i]).fold(0.0, f64::max);
        for i in 0..self.dim {
            cov[i * self.dim + i] += 1e-10 * scale.max(1e-300);
        }
        if let Some(l) = linalg::cholesky(&cov, self.dim) {
            self.chol = l;
        }
    }

    /// Replace the proposal shape by `cov` if it is positive definite.
    pub fn set_shape(&mut self, cov: &[f64]) {
        if let Some(l) = linalg::cholesky(cov, self.dim) {
            self.chol = l;
        }
    }

    pub fn rate(&self) -> f64 {
        if self.tried == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }

    pub fn reset_counts(&mut self) {
        self.tried = 0;
        self.accepted = 0;
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Post-burn-in acceptance rates of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub beta: f64,
    /// Coefficient moves that shift the effects to compensate.
    pub shift: f64,
    /// Mean over groups of the scalar effect acceptance rates.
    pub effects: f64,
    pub log_sigma: f64,
    pub scale: f64,
}

/// Retained draws. Each row is `(beta..., u..., sigma_u^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_beta: usize,
    pub n_groups: usize,
    /// One row-major matrix per chain.
    pub chains: Vec<Vec<f64>>,
    pub acceptance: Vec<AcceptanceRates>,
}

impl PosteriorDraws {
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map(|c| c.len() / self.n_params()).unwrap_or(0)
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.len() / self.n_params()).sum()
    }

    pub fn sigma_u2_index(&self) -> usize {
        self.n_params() - 1
    }

    /// Values of one parameter in one chain.
    pub fn chain_column(&self, chain: usize, col: usize) -> Vec<f64> {
        let p = self.n_params();
        self.chains[chain].chunks_exact(p).map(|row| row[col]).collect()
    }

    /// Values of one parameter, chains concatenated.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.chains.len()).flat_map(|c| self.chain_column(c, col)).collect()
    }

    pub fn column_mean(&self, col: usize) -> f64 {
        let p = self.n_params();
        let mut s = 0.0;
        let mut n = 0usize;
        for c in &self.chains {
            for row in c.chunks_exact(p) {
                s += row[col];
                n += 1;
            }
        }
        s / n as f64
    }

    /// Concatenate the chains of two runs over the same parameters.
    pub fn concat(mut self, other: PosteriorDraws) -> PosteriorDraws {
        self.chains.extend(other.chains);
        self.acceptance.extend(other.acceptance);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
    pub rhat: f64,
    pub ess: f64,
}

/// Per-parameter posterior summaries over all chains.
pub fn summarize(draws: &PosteriorDraws) -> Vec<ParamSummary> {
    (0..draws.n_params()).map(|col| summarize_column(draws, col)).collect()
}

pub fn summarize_column(draws: &PosteriorDraws, col: usize) -> ParamSummary {
    let per_chain: Vec<Vec<f64>> = (0..draws.chains.len()).map(|c| draws.chain_column(c, col)).collect();
    let all: Vec<f64> = per_chain.iter().flatten().copied().collect();
    let sorted = stats::sorted_copy(&all);
    ParamSummary {
        name: draws.names[col].clone(),
        mean: stats::mean(&all),
        sd: stats::sample_variance(&all).sqrt(),
        q025: stats::quantile_sorted(&sorted, 0.025),
        q25: stats::quantile_sorted(&sorted, 0.25),
        q50: stats::quantile_sorted(&sorted, 0.5),
        q75: stats::quantile_sorted(&sorted, 0.75),
        q975: stats::quantile_sorted(&sorted, 0.975),
        rhat: split_rhat(&per_chain),
        ess: effective_sample_size(&per_chain),
    }
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::new();
    for c in chains {
        let half = c.len() / 2;
        if half >= 2 {
            out.push(&c[..half]);
            out.push(&c[c.len() - half..]);
        }
    }
    out
}

/// Split-chain potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split_halves(chains);
    if parts.len() < 2 {
        return f64::NAN;
    }
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| stats::mean(p)).collect();
    let w = parts.iter().map(|p| stats::sample_variance(p)).sum::<f64>() / parts.len() as f64;
    let b = n * stats::sample_variance(&means);
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Multi-chain effective sample size with Geyer's initial positive sequence
/// on split chains.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let parts = split_halves(chains);
    if parts.len() < 2 {
        return f64::NAN;
    }
    let m = parts.len();
    let n = parts[0].len();
    let means: Vec<f64> = parts.iter().map(|p| stats::mean(p)).collect();
    let vars: Vec<f64> = parts.iter().map(|p| stats::sample_variance(p)).collect();
    let w = stats::mean(&vars);
    let b_over_n = stats::sample_variance(&means);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let autocov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for (p, mu) in parts.iter().zip(&means) {
            let mut s = 0.0;
            for t in 0..n - lag {
                s += (p[t] - mu) * (p[t + lag] - mu);
            }
            acc += s / n as f64;
        }
        acc / m as f64
    };
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / ((m * n) as f64).ln().max(1.0));
    (m * n) as f64 / tau
}

struct ChainState {
    beta: Vec<f64>,
    xb: Vec<f64>,
    u: Vec<f64>,
    log_sigma: f64,
    a: Vec<f64>,
    lb: Vec<f64>,
    c: Vec<f64>,
}

struct BetaWork {
    ratio: Vec<f64>,
    direct: Vec<f64>,
    dlb: Vec<f64>,
    dc: Vec<f64>,
}

struct Sampler<'m, 'd> {
    model: &'m WeightedModel<'d>,
    group_of: Vec<usize>,
    weight_sum: f64,
    location_ok: bool,
    /// Unit-weighted group means of the design rows, `G x p`.
    xbar: Vec<f64>,
}

impl<'m, 'd> Sampler<'m, 'd> {
    fn new(model: &'m WeightedModel<'d>) -> Self {
        let d = model.data;
        let location_ok = match model.spec.intercept {
            Some(c) => (0..d.n_units()).all(|i| d.row(i)[c] == 1.0),
            None => false,
        };
        let mut xbar = vec![0.0; d.n_groups() * d.p];
        for g in 0..d.n_groups() {
            let range = d.group_start[g]..d.group_start[g + 1];
            let wsum: f64 = model.unit_w[range.clone()].iter().sum();
            for i in range {
                let share = if wsum > 0.0 { model.unit_w[i] / wsum } else { 0.0 };
                for (k, x) in d.row(i).iter().enumerate() {
                    xbar[g * d.p + k] += share * x;
                }
            }
        }
        Sampler {
            model,
            group_of: d.group_of_units(),
            weight_sum: model.group_w.iter().sum(),
            location_ok,
            xbar,
        }
    }

    fn group_caches(&self, xb: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.model.data;
        let w = &self.model.unit_w;
        let g_n = d.n_groups();
        let mut lb = vec![f64::NEG_INFINITY; g_n];
        let mut c = vec![0.0; g_n];
        for i in 0..d.n_units() {
            let g = self.group_of[i];
            lb[g] = lb[g].max(xb[i]);
        }
        let mut s = vec![0.0; g_n];
        for i in 0..d.n_units() {
            let g = self.group_of[i];
            s[g] += w[i] * (xb[i] - lb[g]).exp();
            c[g] += w[i] * (d.y[i] * xb[i] - d.log_factorial[i]);
        }
        for g in 0..g_n {
            lb[g] += s[g].ln();
        }
        (lb, c)
    }

    /// Per-group changes of `L` and `C` when every linear predictor moves by
    /// `dxb`. `ratio` is `exp(L' - L) - 1`, summed without differencing large
    /// totals. Returns false when some group total underflows.
    fn coefficient_deltas(&self, st: &ChainState, dxb: &[f64], bw: &mut BetaWork) -> bool {
        let d = self.model.data;
        let w = &self.model.unit_w;
        bw.ratio.iter_mut().for_each(|v| *v = 0.0);
        bw.direct.iter_mut().for_each(|v| *v = 0.0);
        bw.dc.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d.n_units() {
            let g = self.group_of[i];
            let share = w[i] * (st.xb[i] - st.lb[g]).exp();
            bw.ratio[g] += share * dxb[i].exp_m1();
            bw.direct[g] += share * dxb[i].exp();
            bw.dc[g] += w[i] * d.y[i] * dxb[i];
        }
        for g in 0..bw.ratio.len() {
            bw.dlb[g] = if bw.ratio[g] > -0.5 { bw.ratio[g].ln_1p() } else { bw.direct[g].ln() };
            if !bw.dlb[g].is_finite() {
                return false;
            }
        }
        true
    }

    fn apply_deltas(&self, st: &mut ChainState, dxb: &[f64], bw: &BetaWork) {
        for (x, d) in st.xb.iter_mut().zip(dxb) {
            *x += d;
        }
        for g in 0..bw.dc.len() {
            st.lb[g] += bw.dlb[g];
            st.c[g] += bw.dc[g];
        }
    }

    fn data_ll(&self, u: &[f64], a: &[f64], lb: &[f64], c: &[f64]) -> f64 {
        let mut s = 0.0;
        for g in 0..u.len() {
            s += u[g] * a[g] + c[g] - (u[g] + lb[g]).exp();
        }
        s
    }

    /// Weighted Fisher information of `beta` given the effects, plus the
    /// prior precision.
    fn conditional_info(&self, st: &ChainState) -> Vec<f64> {
        let d = self.model.data;
        let p = d.p;
        let prior_prec = 1.0 / (self.model.spec.priors.beta_sd * self.model.spec.priors.beta_sd);
        let mut info = vec![0.0; p * p];
        for a in 0..p {
            info[a * p + a] = prior_prec;
        }
        for i in 0..d.n_units() {
            let row = d.row(i);
            let m = self.model.unit_w[i] * (st.xb[i] + st.u[self.group_of[i]]).exp();
            for a in 0..p {
                for b in 0..p {
                    info[a * p + b] += m * row[a] * row[b];
                }
            }
        }
        info
    }

    fn sigma_prior(&self, log_sigma: f64) -> f64 {
        self.model.spec.priors.log_sigma(log_sigma.exp()) + log_sigma
    }

    fn beta_prior(&self, beta: &[f64]) -> f64 {
        beta.iter().map(|b| self.model.spec.priors.log_beta(*b)).sum()
    }

    /// Weighted pooled Poisson fit by Newton steps, used for the start.
    fn pooled_fit(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.model.data;
        let w = &self.model.unit_w;
        let p = d.p;
        let n = d.n_units();
        let mut beta = vec![0.0; p];
        let wsum: f64 = w.iter().sum();
        let wy: f64 = w.iter().zip(&d.y).map(|(a, b)| a * b).sum();
        if let Some(ci) = self.model.spec.intercept {
            beta[ci] = ((wy + 0.5) / wsum).ln();
        }
        let prior_prec = 1.0 / (self.model.spec.priors.beta_sd * self.model.spec.priors.beta_sd);
        let mut info = vec![0.0; p * p];
        for _ in 0..25 {
            let mut grad: Vec<f64> = beta.iter().map(|b| -b * prior_prec).collect();
            info.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..p {
                info[i * p + i] = prior_prec;
            }
            for i in 0..n {
                let row = d.row(i);
                let mu = dot(row, &beta).exp();
                let r = w[i] * (d.y[i] - mu);
                for a in 0..p {
                    grad[a] += r * row[a];
                    for b in 0..p {
                        info[a * p + b] += w[i] * mu * row[a] * row[b];
                    }
                }
            }
            let Some(inv) = linalg::spd_inverse(&info, p) else { break };
            let step: Vec<f64> = (0..p).map(|a| linalg::dot(&inv[a * p..(a + 1) * p], &grad)).collect();
            let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            let damp = if max_step > 2.0 { 2.0 / max_step } else { 1.0 };
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + damp * s).collect();
            if candidate.iter().any(|v| !v.is_finite()) {
                break;
            }
            beta = candidate;
            if max_step < 1e-8 {
                break;
            }
        }
        (beta, info)
    }

    /// Joint mode of `(beta, u)` given `sigma_u` by damped Newton steps,
    /// eliminating the effects through the Schur complement. Returns the mode,
    /// the conditional precision of each effect and the covariance of `beta`
    /// with the effects integrated out.
    fn conditional_mode(&self, beta: &mut [f64], u: &mut [f64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.model.data;
        let w = &self.model.unit_w;
        let gw = &self.model.group_w;
        let p = d.p;
        let g_n = d.n_groups();
        let prior_prec = 1.0 / (self.model.spec.priors.beta_sd * self.model.spec.priors.beta_sd);
        let s2 = sigma * sigma;
        let objective = |beta: &[f64], u: &[f64]| -> f64 {
            let mut f = 0.0;
            for i in 0..d.n_units() {
                let eta = dot(d.row(i), beta) + u[self.group_of[i]];
                f += w[i] * (d.y[i] * eta - eta.exp());
            }
            for g in 0..g_n {
                f -= 0.5 * gw[g] * u[g] * u[g] / s2;
            }
            f - 0.5 * prior_prec * beta.iter().map(|b| b * b).sum::<f64>()
        };
        let mut huu = vec![0.0; g_n];
        let mut cov = identity(p);
        let mut f = objective(beta, u);
        for _ in 0..200 {
            let mut g_beta: Vec<f64> = beta.iter().map(|b| -prior_prec * b).collect();
            let mut g_u: Vec<f64> = (0..g_n).map(|g| -gw[g] * u[g] / s2).collect();
            let mut h_bb = vec![0.0; p * p];
            for a in 0..p {
                h_bb[a * p + a] = prior_prec;
            }
            let mut h_bu = vec![0.0; g_n * p];
            for g in 0..g_n {
                huu[g] = gw[g] / s2;
            }
            for i in 0..d.n_units() {
                let g = self.group_of[i];
                let row = d.row(i);
                let mu = (dot(row, beta) + u[g]).exp();
                let r = w[i] * (d.y[i] - mu);
                let m = w[i] * mu;
                g_u[g] += r;
                huu[g] += m;
                for a in 0..p {
                    g_beta[a] += r * row[a];
                    h_bu[g * p + a] += m * row[a];
                    for b in 0..p {
                        h_bb[a * p + b] += m * row[a] * row[b];
                    }
                }
            }
            let mut schur = h_bb;
            let mut rhs = g_beta;
            for g in 0..g_n {
                let hg = &h_bu[g * p..(g + 1) * p];
                for a in 0..p {
                    rhs[a] -= hg[a] * g_u[g] / huu[g];
                    for b in 0..p {
                        schur[a * p + b] -= hg[a] * hg[b] / huu[g];
                    }
                }
            }
            let Some(inv) = linalg::spd_inverse(&schur, p) else { break };
            cov = inv;
            let d_beta: Vec<f64> = (0..p).map(|a| linalg::dot(&cov[a * p..(a + 1) * p], &rhs)).collect();
            let d_u: Vec<f64> =
                (0..g_n).map(|g| (g_u[g] - linalg::dot(&h_bu[g * p..(g + 1) * p], &d_beta)) / huu[g]).collect();
            let largest = d_beta.iter().chain(&d_u).fold(0.0f64, |m, v| m.max(v.abs()));
            let mut t = if largest > 2.0 { 2.0 / largest } else { 1.0 };
            let mut moved = false;
            for _ in 0..40 {
                let b_new: Vec<f64> = beta.iter().zip(&d_beta).map(|(b, s)| b + t * s).collect();
                let u_new: Vec<f64> = u.iter().zip(&d_u).map(|(v, s)| v + t * s).collect();
                let f_new = objective(&b_new, &u_new);
                if f_new >= f {
                    beta.copy_from_slice(&b_new);
                    u.copy_from_slice(&u_new);
                    f = f_new;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved || largest * t < 1e-10 {
                break;
            }
        }
        (huu, cov)
    }

    /// Start at the conditional mode, returning the state and the covariance
    /// of `beta` with the effects integrated out.
    fn initial_state<R: Rng + ?Sized>(&self, pooled: &[f64], rng: &mut R, jitter: f64) -> (ChainState, Vec<f64>) {
        let d = self.model.data;
        let w = &self.model.unit_w;
        let beta = pooled.to_vec();
        let xb: Vec<f64> = (0..d.n_units()).map(|i| dot(d.row(i), &beta)).collect();
        let mut a = vec![0.0; d.n_groups()];
        for i in 0..d.n_units() {
            a[self.group_of[i]] += w[i] * d.y[i];
        }
        let (lb, _) = self.group_caches(&xb);
        let mut u: Vec<f64> = (0..d.n_groups())
            .map(|g| {
                let num = a[g] + 0.5 * (w[self.model.data.group_start[g]]).max(1e-3);
                (num.ln() - lb[g]).clamp(-10.0, 10.0)
            })
            .collect();
        // shrink toward the center so starts are not overdispersed
        let m = stats::mean(&u);
        for v in u.iter_mut() {
            *v = 0.5 * (*v - m) + jitter * 0.1 * normal(rng);
        }
        let mut beta = beta;
        if self.location_ok {
            // move the common level of the effects into the intercept
            beta[self.model.spec.intercept.unwrap()] += m * 0.5;
        }
        let wsum = self.weight_sum.max(1e-300);
        let mut sigma = stats::sample_variance(&u).sqrt().max(0.1);
        let mut mode = (Vec::new(), identity(d.p));
        for _ in 0..3 {
            mode = self.conditional_mode(&mut beta, &mut u, sigma);
            let wuu: f64 = u.iter().zip(&self.model.group_w).map(|(v, w)| w * v * v).sum();
            sigma = (wuu / wsum).sqrt().max(0.05);
        }
        let (huu, cov) = mode;
        if jitter > 0.0 {
            // Conditional spreads, not marginal ones: an effect with little
            // data and a small group weight has a near-flat conditional, and
            // its marginal inflates the intercept's, so a start drawn from
            // either lands far out on the intercept/effect ridge.
            let xb: Vec<f64> = (0..d.n_units()).map(|i| dot(d.row(i), &beta)).collect();
            let (lb, c) = self.group_caches(&xb);
            let at_mode = ChainState { beta: beta.clone(), xb, u: u.clone(), log_sigma: sigma.ln(), a: a.clone(), lb, c };
            let cond = linalg::spd_inverse(&self.conditional_info(&at_mode), d.p).unwrap_or_else(|| identity(d.p));
            let sd: Vec<f64> = (0..d.p)
                .map(|k| cond[k * d.p + k].sqrt())
                .chain(huu.iter().map(|h| (1.0 / h.sqrt()).min(sigma)))
                .collect();
            let z: Vec<f64> = sd.iter().map(|_| normal(rng)).collect();
            // A start far outside the bulk can take longer than the run to
            // come back from on strongly curved data, so shrink the jitter
            // until the start is within a few log units per parameter.
            let lp = |beta: &[f64], u: &[f64]| {
                let st = ParamState { beta: beta.to_vec(), u: u.to_vec(), log_sigma_u: sigma.ln() };
                self.model.log_pseudo_posterior(&st).unwrap_or(f64::NEG_INFINITY)
            };
            let floor = lp(&beta, &u) - 2.0 * sd.len() as f64;
            let mut scale = jitter;
            for _ in 0..30 {
                let b: Vec<f64> = beta.iter().zip(&sd).zip(&z).map(|((b, s), z)| b + scale * s * z).collect();
                let v: Vec<f64> = u.iter().zip(&sd[d.p..]).zip(&z[d.p..]).map(|((v, s), z)| v + scale * s * z).collect();
                if lp(&b, &v) >= floor {
                    beta = b;
                    u = v;
                    break;
                }
                scale *= 0.5;
            }
        }
        let xb: Vec<f64> = (0..d.n_units()).map(|i| dot(d.row(i), &beta)).collect();
        let (lb, c) = self.group_caches(&xb);
        let st = ChainState { beta, xb, u, log_sigma: sigma.ln(), a, lb, c };
        (st, cov)
    }

    fn run_one(&self, config: &McmcConfig, chain: usize) -> Result<(Vec<f64>, AcceptanceRates)> {
        let d = self.model.data;
        let p = d.p;
        let g_n = d.n_groups();
        let n_params = p + g_n + 1;
        let mut rng: StreamRng = rng::stream(config.seed, Purpose::Mcmc, 0, chain as u64);
        let (pooled, _) = self.pooled_fit();
        let (mut st, marginal_cov) = self.initial_state(&pooled, &mut rng, if chain == 0 { 0.0 } else { 1.0 });
        let base_cov = linalg::spd_inverse(&self.conditional_info(&st), p).unwrap_or_else(|| identity(p));

        let sigma0 = st.log_sigma.exp();
        let mut beta_ad = BlockAdapter::new(&base_cov, p, config.target_block);
        let mut shift_ad = BlockAdapter::new(&marginal_cov, p, config.target_block);
        let mut u_ad: Vec<ScalarAdapter> = (0..g_n)
            .map(|g| {
                let prec = (st.u[g] + st.lb[g]).exp() + self.model.group_w[g] / (sigma0 * sigma0);
                ScalarAdapter::new(2.4 / prec.max(1e-12).sqrt(), config.target_scalar)
            })
            .collect();
        let mut sig_ad = ScalarAdapter::new(2.4 / (2.0 * self.weight_sum).max(1.0).sqrt(), config.target_scalar);
        let mut scale_ad = ScalarAdapter::new(0.1, config.target_scalar);

        let mut ll = self.data_ll(&st.u, &st.a, &st.lb, &st.c);
        let mut wuu: f64 = st.u.iter().zip(&self.model.group_w).map(|(u, w)| w * u * u).sum();

        let keep = config.draws_per_chain();
        let mut out = Vec::with_capacity(keep * n_params);
        let collect_from = config.burn_in / 4;
        let mut dxb = vec![0.0; d.n_units()];
        let mut bw = BetaWork { ratio: vec![0.0; g_n], direct: vec![0.0; g_n], dlb: vec![0.0; g_n], dc: vec![0.0; g_n] };
        let mut shift = vec![0.0; g_n];

        for it in 0..config.n_iter {
            let adapting = it < config.burn_in;
            let adapt_at = if adapting { Some(it) } else { None };
            if it == config.burn_in {
                beta_ad.reset_counts();
                shift_ad.reset_counts();
                u_ad.iter_mut().for_each(|a| a.reset_counts());
                sig_ad.reset_counts();
                scale_ad.reset_counts();
            }

            // 1. coefficients given the effects
            {
                let step = beta_ad.propose(&mut rng);
                let beta_new: Vec<f64> = st.beta.iter().zip(&step).map(|(b, s)| b + s).collect();
                for i in 0..d.n_units() {
                    dxb[i] = dot(d.row(i), &step);
                }
                let mut d_ll = f64::NEG_INFINITY;
                if self.coefficient_deltas(&st, &dxb, &mut bw) {
                    d_ll = 0.0;
                    for g in 0..g_n {
                        d_ll += bw.dc[g] - (st.u[g] + st.lb[g]).exp() * bw.ratio[g];
                    }
                }
                let log_ratio = d_ll + self.beta_prior(&beta_new) - self.beta_prior(&st.beta);
                let ok = d_ll.is_finite() && metropolis_accept(log_ratio, &mut rng);
                if ok {
                    st.beta = beta_new;
                    self.apply_deltas(&mut st, &dxb, &bw);
                    ll += d_ll;
                }
                beta_ad.record(ok, adapt_at);
                if adapting && (it + 1) % config.adapt_window == 0 {
                    if let Some(cov) = linalg::spd_inverse(&self.conditional_info(&st), p) {
                        beta_ad.set_shape(&cov);
                    }
                }
            }

            let sigma2 = (2.0 * st.log_sigma).exp();

            // 2. coefficients with compensating effect shifts
            {
                let delta = shift_ad.propose(&mut rng);
                let beta_new: Vec<f64> = st.beta.iter().zip(&delta).map(|(b, s)| b + s).collect();
                for g in 0..g_n {
                    shift[g] = dot(&self.xbar[g * p..(g + 1) * p], &delta);
                }
                for i in 0..d.n_units() {
                    dxb[i] = dot(d.row(i), &delta);
                }
                let mut d_ll = f64::NEG_INFINITY;
                let mut d_wuu = 0.0;
                if self.coefficient_deltas(&st, &dxb, &mut bw) {
                    d_ll = 0.0;
                    for g in 0..g_n {
                        let du = -shift[g];
                        let mean = (st.u[g] + st.lb[g]).exp();
                        d_ll += du * st.a[g] + bw.dc[g] - mean * (du + bw.dlb[g]).exp_m1();
                        d_wuu += self.model.group_w[g] * du * (2.0 * st.u[g] + du);
                    }
                }
                let log_ratio = d_ll - d_wuu / (2.0 * sigma2) + self.beta_prior(&beta_new) - self.beta_prior(&st.beta);
                let ok = d_ll.is_finite() && metropolis_accept(log_ratio, &mut rng);
                if ok {
                    st.beta = beta_new;
                    self.apply_deltas(&mut st, &dxb, &bw);
                    for g in 0..g_n {
                        st.u[g] -= shift[g];
                    }
                    ll += d_ll;
                    wuu += d_wuu;
                }
                shift_ad.record(ok, adapt_at);
                if adapting && it >= collect_from {
                    shift_ad.observe(&st.beta);
                    if (it + 1) % config.adapt_window == 0 {
                        shift_ad.refresh();
                    }
                }
            }

            // 3. effects
            for g in 0..g_n {
                let du = u_ad[g].propose(&mut rng);
                let u_old = st.u[g];
                let wg = self.model.group_w[g];
                let d_ll = du * st.a[g] - (u_old + st.lb[g]).exp() * du.exp_m1();
                let d_q = wg * du * (2.0 * u_old + du);
                let ok = metropolis_accept(d_ll - d_q / (2.0 * sigma2), &mut rng);
                if ok {
                    st.u[g] = u_old + du;
                    ll += d_ll;
                    wuu += d_q;
                }
                u_ad[g].record(ok, adapt_at);
            }

            // 4. effect scale
            {
                let t_old = st.log_sigma;
                let t_new = t_old + sig_ad.propose(&mut rng);
                let eff = |t: f64| -self.weight_sum * t - wuu / (2.0 * (2.0 * t).exp());
                let log_ratio = eff(t_new) - eff(t_old) + self.sigma_prior(t_new) - self.sigma_prior(t_old);
                let ok = metropolis_accept(log_ratio, &mut rng);
                if ok {
                    st.log_sigma = t_new;
                }
                sig_ad.record(ok, adapt_at);
            }

            // 5. joint rescaling of effects and their scale
            {
                let eps = scale_ad.propose(&mut rng);
                let c = eps.exp();
                let mut d_ll = 0.0;
                for g in 0..g_n {
                    let du = st.u[g] * eps.exp_m1();
                    d_ll += du * st.a[g] - (st.u[g] + st.lb[g]).exp() * du.exp_m1();
                }
                // the quadratic effect term is invariant; -W log sigma shifts
                // by -W eps and the Jacobian contributes G eps
                let log_ratio = d_ll - self.weight_sum * eps + g_n as f64 * eps
                    + self.sigma_prior(st.log_sigma + eps)
                    - self.sigma_prior(st.log_sigma);
                let ok = d_ll.is_finite() && metropolis_accept(log_ratio, &mut rng);
                if ok {
                    for u in st.u.iter_mut() {
                        *u *= c;
                    }
                    st.log_sigma += eps;
                    ll += d_ll;
                    wuu *= c * c;
                }
                scale_ad.record(ok, adapt_at);
            }

            if !ll.is_finite() || !st.log_sigma.is_finite() {
                return Err(Error::Divergence {
                    iteration: it,
                    state: format!("chain {chain}: beta = {:?}, log_sigma_u = {}, data ll = {ll}", st.beta, st.log_sigma),
                });
            }

            // recompute cached sums now and then to bound drift
            if it % 100 == 99 {
                for i in 0..d.n_units() {
                    st.xb[i] = dot(d.row(i), &st.beta);
                }
                let (lb, c) = self.group_caches(&st.xb);
                st.lb = lb;
                st.c = c;
                ll = self.data_ll(&st.u, &st.a, &st.lb, &st.c);
                wuu = st.u.iter().zip(&self.model.group_w).map(|(u, w)| w * u * u).sum();
            }

            if it >= config.burn_in && (it - config.burn_in) % config.thin == 0 && out.len() < keep * n_params {
                out.extend_from_slice(&st.beta);
                out.extend_from_slice(&st.u);
                out.push((2.0 * st.log_sigma).exp());
            }
        }

        let rates = AcceptanceRates {
            beta: beta_ad.rate(),
            shift: shift_ad.rate(),
            effects: stats::mean(&u_ad.iter().map(|a| a.rate()).collect::<Vec<_>>()),
            log_sigma: sig_ad.rate(),
            scale: scale_ad.rate(),
        };
        Ok((out, rates))
    }
}

/// Run `config.chains` chains sequentially. Chain `k` draws from stream
/// `(config.seed, Mcmc, 0, k)`, so results depend only on the seed.
pub fn run_chain(model: &WeightedModel<'_>, config: &McmcConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let sampler = Sampler::new(model);
    let d = model.data;
    let mut names: Vec<String> = d.column_names.clone();
    names.extend((0..d.n_groups()).map(|g| format!("u[{g}]")));
    names.push("sigma_u2".into());
    let mut chains = Vec::with_capacity(config.chains);
    let mut acceptance = Vec::with_capacity(config.chains);
    for k in 0..config.chains {
        let (draws, rates) = sampler.run_one(config, k)?;
        chains.push(draws);
        acceptance.push(rates);
    }
    Ok(PosteriorDraws { names, n_beta: d.p, n_groups: d.n_groups(), chains, acceptance })
}

/// Generic adaptive Metropolis-within-Gibbs over a flat parameter vector.
///
/// `blocks` lists index sets updated jointly; single-index blocks use scalar
/// adaptation, larger ones the adaptive-covariance block proposal. Returns
/// retained draws row-major.
pub fn adaptive_metropolis<F>(log_density: F, init: &[f64], blocks: &[Vec<usize>], config: &McmcConfig, chain: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    config.validate()?;
    let mut rng = rng::stream(config.seed, Purpose::Mcmc, 0, chain as u64);
    let mut x = init.to_vec();
    let mut lp = log_density(&x);
    if !lp.is_finite() {
        return Err(Error::NonFinite { component: "initial log density" });
    }
    enum Adapter {
        Scalar(ScalarAdapter),
        Block(BlockAdapter),
    }
    let mut adapters: Vec<Adapter> = blocks
        .iter()
        .map(|b| {
            if b.len() == 1 {
                Adapter::Scalar(ScalarAdapter::new(1.0, config.target_scalar))
            } else {
                Adapter::Block(BlockAdapter::new(&identity(b.len()), b.len(), config.target_block))
            }
        })
        .collect();
    let mut out = Vec::with_capacity(config.draws_per_chain() * x.len());
    for it in 0..config.n_iter {
        let adapt_at = if it < config.burn_in { Some(it) } else { None };
        for (block, ad) in blocks.iter().zip(adapters.iter_mut()) {
            let mut prop = x.clone();
            match ad {
                Adapter::Scalar(a) => prop[block[0]] += a.propose(&mut rng),
                Adapter::Block(a) => {
                    for (i, s) in block.iter().zip(a.propose(&mut rng)) {
                        prop[*i] += s;
                    }
                }
            }
            let lp_new = log_density(&prop);
            let ok = lp_new.is_finite() && metropolis_accept(lp_new - lp, &mut rng);
            if ok {
                x = prop;
                lp = lp_new;
            }
            match ad {
                Adapter::Scalar(a) => a.record(ok, adapt_at),
                Adapter::Block(a) => {
                    a.record(ok, adapt_at);
                    if adapt_at.is_some() && it >= config.burn_in / 4 {
                        let sub: Vec<f64> = block.iter().map(|i| x[*i]).collect();
                        a.observe(&sub);
                        if (it + 1) % config.adapt_window == 0 {
                            a.refresh();
                        }
                    }
                }
            }
        }
        if it >= config.burn_in && (it - config.burn_in) % config.thin == 0 {
            out.extend_from_slice(&x);
        }
    }
    Ok(out)
}
