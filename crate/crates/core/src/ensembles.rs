//! The Gaussian prior `p(α) = (λ/π) exp(−λ|α|²)` over coherent amplitudes,
//! deterministic quadrature rules for it, and seeded sampling.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLaguerre};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RADIAL: usize = 24;
pub const DEFAULT_ANGULAR: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    lambda: f64,
}

impl GaussianPrior {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self { lambda })
        } else {
            Err(Error::InvalidInput(format!(
                "prior width lambda must be positive and finite, got {lambda}"
            )))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn density(&self, alpha: Complex64) -> f64 {
        self.lambda / PI * (-self.lambda * alpha.norm_sqr()).exp()
    }
}

/// Weighted nodes in the complex plane. Weights are positive and, for rules
/// built from a prior, sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
    pub resolution: String,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Complex64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn average<F: FnMut(Complex64) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(a, w)| w * f(a)).sum()
    }

    pub fn try_average<F: FnMut(Complex64) -> Result<f64>>(&self, mut f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (a, w) in self.iter() {
            acc += w * f(a)?;
        }
        Ok(acc)
    }

    /// Every node multiplied by `e^{iθ}`.
    pub fn rotated(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        Self {
            nodes: self.nodes.iter().map(|a| a * phase).collect(),
            weights: self.weights.clone(),
            resolution: format!("{}@rot{theta}", self.resolution),
        }
    }

    /// Drops nodes with weight below `threshold`; returns the reduced rule and the
    /// total weight that was removed.
    pub fn without_negligible(&self, threshold: f64) -> (Self, f64) {
        let mut dropped = 0.0;
        let mut nodes = Vec::with_capacity(self.len());
        let mut weights = Vec::with_capacity(self.len());
        for (a, w) in self.iter() {
            if w < threshold {
                dropped += w;
            } else {
                nodes.push(a);
                weights.push(w);
            }
        }
        let rule = Self {
            nodes,
            weights,
            resolution: self.resolution.clone(),
        };
        (rule, dropped)
    }

    pub fn max_abs_sqr(&self) -> f64 {
        self.nodes.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max)
    }
}

/// Gauss–Laguerre in `u = λ|α|²` times a uniform angular grid. Exact for
/// integrands that are polynomials in `|α|²` of degree `< 2·radial` with
/// angular frequencies below `angular`.
pub fn gauss_rule(prior: &GaussianPrior, radial: usize, angular: usize) -> Result<QuadratureRule> {
    if radial < 2 || angular < 4 {
        return Err(Error::InvalidInput(format!(
            "rule needs radial >= 2 and angular >= 4, got {radial} x {angular}"
        )));
    }
    Ok(radial_rule(prior, radial, angular))
}

/// Like [`gauss_rule`] but without the lower limits, for callers that know their
/// integrand is smooth enough for a one- or two-point radial rule.
pub fn radial_rule(prior: &GaussianPrior, radial: usize, angular: usize) -> QuadratureRule {
    let laguerre = GaussLaguerre::new(NonZeroUsize::new(radial.max(1)).unwrap(), 0.0.try_into().unwrap());
    let angular = angular.max(1);
    let mut nodes = Vec::with_capacity(radial * angular);
    let mut weights = Vec::with_capacity(radial * angular);
    for &(u, w) in laguerre.as_node_weight_pairs() {
        let r = (u / prior.lambda).sqrt();
        for k in 0..angular {
            let theta = 2.0 * PI * k as f64 / angular as f64;
            nodes.push(Complex64::from_polar(r, theta));
            weights.push(w / angular as f64);
        }
    }
    QuadratureRule {
        nodes,
        weights,
        resolution: format!("laguerre{radial}x{angular}@lambda={}", prior.lambda),
    }
}

/// Gauss–Hermite nodes and weights for the weight `e^{−x²}` (weights sum to `√π`).
pub fn hermite(points: usize) -> Vec<(f64, f64)> {
    GaussHermite::new(NonZeroUsize::new(points.max(1)).unwrap())
        .as_node_weight_pairs()
        .to_vec()
}

/// Tensor Gauss–Hermite rule for the complex normal `exp(−|z − center|²/σ²)/(πσ²)`.
pub fn complex_normal_rule(center: Complex64, sigma: f64, points: usize) -> QuadratureRule {
    let gh = hermite(points);
    let mut nodes = Vec::with_capacity(points * points);
    let mut weights = Vec::with_capacity(points * points);
    for &(x, wx) in &gh {
        for &(y, wy) in &gh {
            nodes.push(center + Complex64::new(x, y) * sigma);
            weights.push(wx * wy / PI);
        }
    }
    QuadratureRule {
        nodes,
        weights,
        resolution: format!("hermite{points}x{points}"),
    }
}

/// Seeded generator for stream `stream` of a run with seed `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` i.i.d. draws from the prior; identical for identical `seed`.
pub fn sample(prior: &GaussianPrior, count: usize, seed: u64) -> Vec<Complex64> {
    let normal = Normal::new(0.0, (0.5 / prior.lambda).sqrt()).expect("positive std");
    let mut rng = rng_for(seed, 0);
    (0..count)
        .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect()
}

/// Monte Carlo mean of `f` under the prior together with its standard error.
pub fn monte_carlo_average<F: FnMut(Complex64) -> f64>(
    prior: &GaussianPrior,
    count: usize,
    seed: u64,
    mut f: F,
) -> (f64, f64) {
    let values: Vec<f64> = sample(prior, count, seed).into_iter().map(&mut f).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
