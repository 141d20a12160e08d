//! Frequentist baselines: the integrated marginal pseudo-likelihood (MPML),
//! which weights units inside each group integral, and the pair-integrated
//! composite likelihood, which integrates the effect out of every
//! within-group pair.
//!
//! Every integral has the form `log ∫ exp(u A + C - e^u B) N(u | 0, s^2) du`
//! for group totals `A = Σ w y`, `B = Σ w e^{x'β}`, `C = Σ w (y x'β - log y!)`.
//! The log integrand `f` is concave. Each integral is taken by Gauss-Hermite
//! quadrature in the variable `τ` defined by `f(u*) - f(u) = τ²/2` around the
//! mode `u*`, which leaves only the smooth Jacobian `du/dτ` for the rule to
//! integrate. A fixed rule on `u = √2 s t` loses accuracy once counts are
//! large, because the integrand then concentrates far from the prior's bulk;
//! plain mode-centred rules lose it for small counts, where the integrand is
//! skewed.
//!
//! Parameters are `(β..., log σ_u)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, WeightedModel};
use crate::optimize::{self, Tolerances};
use crate::quadrature::QuadratureRule;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log ∫ exp(u a + c - e^u b) N(u | 0, sigma^2) du`.
pub fn integrated_log_term(a: f64, b: f64, c: f64, sigma: f64, rule: &QuadratureRule) -> f64 {
    if !(sigma > 0.0) {
        return c - b;
    }
    let s2 = sigma * sigma;
    // mode of a strictly concave function by safeguarded Newton
    let mut u = if a > 0.0 && b > 0.0 { (a.ln() - b.ln()).clamp(-50.0, 50.0) } else { 0.0 };
    for _ in 0..200 {
        let eu = u.exp();
        let g = a - eu * b - u / s2;
        let hh = -eu * b - 1.0 / s2;
        let mut step = -g / hh;
        if step.abs() > 5.0 {
            step = 5.0 * step.signum();
        }
        u += step;
        if step.abs() <= 1e-12 * u.abs().max(1.0) {
            break;
        }
    }
    let eub = u.exp() * b;
    let g0 = a - eub - u / s2;
    let curvature = eub + 1.0 / s2;
    let peak = u * a + c - eub - u * u / (2.0 * s2) - 0.5 * (LN_2PI + s2.ln());
    // nodes run from the right tail to the left; each side is warm-started
    // from the solution at the neighbouring node
    let mut prev: Option<(f64, f64)> = None;
    let mut prev2: Option<(f64, f64)> = None;
    let mut total = 0.0;
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let tau = core::f64::consts::SQRT_2 * t;
        let jacobian = if tau == 0.0 {
            prev = None;
            prev2 = None;
            1.0 / curvature.sqrt()
        } else {
            let mut d = match (prev, prev2) {
                (Some((t1, d1)), Some((t2, d2))) if t1.signum() == tau.signum() && t2.signum() == tau.signum() => {
                    // d = alpha tau + beta tau^2 through both neighbours
                    let beta = (d1 / t1 - d2 / t2) / (t1 - t2);
                    let alpha = d1 / t1 - beta * t1;
                    let guess = alpha * tau + beta * tau * tau;
                    if guess.signum() == tau.signum() { guess } else { d1 * tau / t1 }
                }
                (Some((t1, d1)), _) if t1.signum() == tau.signum() => d1 * tau / t1,
                _ => tau / curvature.sqrt(),
            };
            // solve drop(d) = -tau^2 / 2, where
            // drop(d) = f(u* + d) - f(u*) = d g0 - eub (e^d - 1 - d) - d^2 / (2 s2);
            // -drop is convex, so Newton approaches the root from outside
            // without crossing to the other side of the mode
            let mut slope = 0.0;
            for _ in 0..100 {
                let em1 = d.exp_m1();
                let curved = if d.abs() < 1e-2 { expm1_minus_x(d) } else { em1 - d };
                let r = d * g0 - eub * curved - d * d / (2.0 * s2) + 0.5 * tau * tau;
                slope = g0 - eub * em1 - d / s2;
                let step = r / slope;
                d -= step;
                if step.abs() <= 1e-7 * d.abs() {
                    // first-order update of the slope to the accepted point
                    slope -= step * (-eub * (em1 + 1.0) - 1.0 / s2);
                    break;
                }
            }
            prev2 = prev;
            prev = Some((tau, d));
            -tau / slope
        };
        total += w * jacobian;
    }
    peak + 0.5 * core::f64::consts::LN_2 + total.ln()
}

/// `e^x - 1 - x` for small `x`, without cancellation.
fn expm1_minus_x(x: f64) -> f64 {
    let mut term = x * x / 2.0;
    let mut sum = term;
    for k in 3..10 {
        term *= x / k as f64;
        sum += term;
    }
    sum
}

fn split_params(params: &[f64], p: usize) -> Result<(&[f64], f64)> {
    if params.len() != p + 1 {
        return Err(Error::config(format!("expected {} parameters, got {}", p + 1, params.len())));
    }
    Ok((&params[..p], params[p].exp()))
}

fn check(value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { component: "integrated objective" })
    }
}

/// `Σ_g w_g log ∫ exp(Σ_j w_{j|g} ℓ(y_gj | u, θ)) N(u | 0, σ_u²) du`.
pub fn mpml_objective(params: &[f64], model: &WeightedModel<'_>, rule: &QuadratureRule) -> Result<f64> {
    let d = model.data;
    let (beta, sigma) = split_params(params, d.p)?;
    let mut total = 0.0;
    for g in 0..d.n_groups() {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for i in d.group_start[g]..d.group_start[g + 1] {
            let w = model.unit_w[i];
            let eta = dot(d.row(i), beta);
            a += w * d.y[i];
            b += w * eta.exp();
            c += w * (d.y[i] * eta - d.log_factorial[i]);
        }
        total += model.group_w[g] * integrated_log_term(a, b, c, sigma, rule);
    }
    check(total)
}

/// Within-group pair weights `∝ w_j w_k`, scaled so they sum to
/// `n_g (n_g - 1) / 2` in each group. Row-major upper triangle per group.
pub fn pair_weights(model: &WeightedModel<'_>) -> Vec<Vec<f64>> {
    let d = model.data;
    (0..d.n_groups())
        .map(|g| {
            let w = &model.unit_w[d.group_start[g]..d.group_start[g + 1]];
            let n = w.len();
            let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for j in 0..n {
                for k in j + 1..n {
                    out.push(w[j] * w[k]);
                }
            }
            let s: f64 = out.iter().sum();
            let target = (n * n.saturating_sub(1) / 2) as f64;
            if s > 0.0 {
                out.iter_mut().for_each(|v| *v *= target / s);
            }
            out
        })
        .collect()
}

/// Pair-integrated composite log-likelihood with explicit pair weights.
/// Groups with a single sampled unit contribute that unit's integrated
/// term.
pub fn pairwise_objective_with(params: &[f64], model: &WeightedModel<'_>, pair_w: &[Vec<f64>], rule: &QuadratureRule) -> Result<f64> {
    let d = model.data;
    let (beta, sigma) = split_params(params, d.p)?;
    if pair_w.len() != d.n_groups() {
        return Err(Error::config("pair weights do not match the number of groups"));
    }
    let mut total = 0.0;
    for g in 0..d.n_groups() {
        let range = d.group_start[g]..d.group_start[g + 1];
        let eta: Vec<f64> = range.clone().map(|i| dot(d.row(i), beta)).collect();
        let y = &d.y[range.clone()];
        let lf = &d.log_factorial[range];
        let n = eta.len();
        let mut group_sum = 0.0;
        if n == 1 {
            group_sum = integrated_log_term(y[0], eta[0].exp(), y[0] * eta[0] - lf[0], sigma, rule);
        } else {
            if pair_w[g].len() != n * (n - 1) / 2 {
                return Err(Error::config(format!("group {g}: wrong number of pair weights")));
            }
            let mut idx = 0;
            for j in 0..n {
                for k in j + 1..n {
                    let a = y[j] + y[k];
                    let b = eta[j].exp() + eta[k].exp();
                    let c = y[j] * eta[j] - lf[j] + y[k] * eta[k] - lf[k];
                    group_sum += pair_w[g][idx] * integrated_log_term(a, b, c, sigma, rule);
                    idx += 1;
                }
            }
        }
        total += model.group_w[g] * group_sum;
    }
    check(total)
}

pub fn pairwise_objective(params: &[f64], model: &WeightedModel<'_>, rule: &QuadratureRule) -> Result<f64> {
    pairwise_objective_with(params, model, &pair_weights(model), rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Mpml,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub beta: Vec<f64>,
    pub sigma_u2: f64,
    pub converged: bool,
    pub objective: f64,
    pub iterations: usize,
    /// Start points that failed, with reasons.
    pub diagnostics: Vec<String>,
}

/// Starting points: a pooled Poisson fit for β combined with three effect
/// scales.
pub fn default_starts(model: &WeightedModel<'_>) -> Vec<Vec<f64>> {
    let d = model.data;
    let mut beta = vec![0.0; d.p];
    if let Some(ci) = model.spec.intercept {
        let ws: f64 = model.unit_w.iter().sum();
        let wy: f64 = model.unit_w.iter().zip(&d.y).map(|(w, y)| w * y).sum();
        beta[ci] = ((wy + 0.5) / ws).ln();
    }
    [0.5f64, 0.1, 1.5]
        .iter()
        .map(|s| {
            let mut v = beta.clone();
            v.push(s.ln());
            v
        })
        .collect()
}

/// Run a coarse simplex search from each start and polish the best one.
pub fn fit_mle(objective: Objective, model: &WeightedModel<'_>, rule: &QuadratureRule, starts: &[Vec<f64>]) -> Result<MleResult> {
    if starts.is_empty() {
        return Err(Error::config("fit_mle needs at least one start point"));
    }
    let pair_w = pair_weights(model);
    let eval = |x: &[f64]| -> Result<f64> {
        if x[x.len() - 1] < -20.0 || x[x.len() - 1] > 5.0 {
            return Err(Error::NonFinite { component: "log sigma_u out of range" });
        }
        match objective {
            Objective::Mpml => mpml_objective(x, model, rule),
            Objective::Pairwise => pairwise_objective_with(x, model, &pair_w, rule),
        }
    };
    let neg = |x: &[f64]| eval(x).map(|v| -v).unwrap_or(f64::INFINITY);
    let tol = Tolerances::default();
    let mut best: Option<optimize::Minimum> = None;
    let mut diagnostics = Vec::new();
    for (k, start) in starts.iter().enumerate() {
        if let Err(e) = eval(start) {
            diagnostics.push(format!("start {k}: {e}"));
            continue;
        }
        // the simplex only needs to reach the basin; the polish sets convergence
        let nm = optimize::nelder_mead(neg, start, 0.3, Tolerances { x_tol: 1e-4, f_tol: 1e-8, max_iter: 1000 });
        if !nm.f.is_finite() {
            diagnostics.push(format!("start {k}: objective not finite at optimum"));
            continue;
        }
        if best.as_ref().is_none_or(|b| nm.f < b.f) {
            best = Some(nm);
        }
    }
    let Some(nm) = best else {
        return Err(Error::NoConvergence(diagnostics.join("; ")));
    };
    let polished = optimize::bfgs(neg, &nm.x, Tolerances { max_iter: 500, ..tol });
    let (m, converged) = if polished.f <= nm.f {
        let ok = polished.converged;
        (optimize::Minimum { iterations: nm.iterations + polished.iterations, ..polished }, ok)
    } else {
        let ok = nm.converged;
        (nm, ok)
    };
    let p = model.data.p;
    Ok(MleResult {
        beta: m.x[..p].to_vec(),
        sigma_u2: (2.0 * m.x[p]).exp(),
        converged,
        objective: -m.f,
        iterations: m.iterations,
        diagnostics,
    })
}
