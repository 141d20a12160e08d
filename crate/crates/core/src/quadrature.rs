//! Gauss-Hermite rules for integrals against `exp(-t^2)`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods need std
use num_traits::Float;

use crate::error::{Error, Result};

const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub const DEFAULT_ORDER: usize = 21;

    pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
        if order == 0 || order > 200 {
            return Err(Error::config("quadrature order must be in 1..=200"));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.855_75 * (2.0 * n as f64 + 1.0).powf(-0.166_67),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                // orthonormal Hermite recurrence
                let mut p1 = PI_M4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = (j + 1) as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NoConvergence("Gauss-Hermite node iteration".into()));
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Weights for expectations under a standard normal, summing to one.
    pub fn normal_weights(&self) -> Vec<f64> {
        let s = core::f64::consts::PI.sqrt();
        self.weights.iter().map(|w| w / s).collect()
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn normal_expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let s2 = core::f64::consts::SQRT_2;
        self.nodes.iter().zip(self.normal_weights()).map(|(t, w)| w * f(s2 * t)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::gauss_hermite(Self::DEFAULT_ORDER).expect("default order is valid")
    }
}
