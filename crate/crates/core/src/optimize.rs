//! Derivative-free simplex search and a BFGS polish with central-difference
//! gradients. Both minimize.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub x_tol: f64,
    /// Relative to `max(1, |f|)`.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { x_tol: 1e-7, f_tol: 1e-9, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder-Mead with adaptive coefficients.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], step: f64, tol: Tolerances) -> Minimum {
    let n = start.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += if v[i].abs() > 1.0 { step * v[i].abs() } else { step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(&mut f, v)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < tol.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
        simplex = order.iter().map(|i| simplex[*i].clone()).collect();
        values = order.iter().map(|i| values[*i]).collect();

        let f_spread = values[n] - values[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread.abs() < tol.f_tol * values[0].abs().max(1.0) && x_spread < tol.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(alpha, &simplex[n]);
        let fr = eval(&mut f, &xr);
        if fr < values[0] {
            let xe = along(gamma, &simplex[n]);
            let fe = eval(&mut f, &xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(rho, &simplex[n]);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        } else {
            let xc = along(-rho, &simplex[n]);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
            values[i] = eval(&mut f, &shrunk);
            simplex[i] = shrunk;
        }
    }
    let best = (0..=n).min_by(|a, b| values[*a].total_cmp(&values[*b])).unwrap();
    Minimum { x: simplex[best].clone(), f: values[best], iterations, converged }
}

pub fn central_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = eval(f, &xp);
        xp[i] = x[i] - h;
        let fm = eval(f, &xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// BFGS with backtracking line search and numerical gradients.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], tol: Tolerances) -> Minimum {
    let n = start.len();
    let mut x = start.to_vec();
    let mut fx = eval(&mut f, &x);
    let mut g = central_gradient(&mut f, &x);
    let mut h_inv = vec![0.0; n * n];
    for i in 0..n {
        h_inv[i * n + i] = 1.0;
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < tol.max_iter {
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h_inv[i * n + j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            // reset to steepest descent
            for i in 0..n {
                for j in 0..n {
                    h_inv[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
            if slope == 0.0 {
                converged = true;
                break;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let fnew = eval(&mut f, &xn);
            if fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no descent along a numerical gradient: at the noise floor
            converged = true;
            break;
        };
        let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let step_norm = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let df = fx - fnew;
        let gn = central_gradient(&mut f, &xn);
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        x = xn;
        fx = fnew;
        g = gn;
        if step_norm < tol.x_tol && df.abs() < tol.f_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        let sy: f64 = step.iter().zip(&yv).map(|(s, y)| s * y).sum();
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h_inv[i * n + j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(y, h)| y * h).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h_inv[i * n + j] += rho * ((1.0 + rho * yhy) * step[i] * step[j] - hy[i] * step[j] - step[i] * hy[j]);
                }
            }
        }
    }
    Minimum { x, f: fx, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], 0.5, Tolerances::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn bfgs_polishes_quadratic() {
        let q = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + x[0] * x[1];
        let m = bfgs(q, &[0.0, 0.0], Tolerances::default());
        // stationary point of the quadratic
        let (a, b) = (4.0, -2.0);
        assert!((m.x[0] - a).abs() < 1e-5 && (m.x[1] - b).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn nan_treated_as_infinite() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = nelder_mead(f, &[1.0], 0.5, Tolerances::default());
        assert!((m.x[0] - 2.0).abs() < 1e-6);
    }
}
