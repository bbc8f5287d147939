//! Closed-form boundaries for the coherent-state task `|√N α⟩ → |√η α⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Task `{|√N α⟩} → {|√η α⟩}` under the prior `p(α) ∝ exp(−λ|α|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub eta: f64,
    pub lambda: f64,
    pub n_copies: u32,
}

impl TaskSpec {
    pub fn new(eta: f64, lambda: f64) -> Result<Self> {
        Self::with_copies(eta, lambda, 1)
    }

    pub fn with_copies(eta: f64, lambda: f64, n_copies: u32) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        if n_copies == 0 {
            return Err(Error::InvalidInput("n_copies must be at least 1".into()));
        }
        Ok(Self { eta, lambda, n_copies })
    }
}

/// `F(η, λ) = (1 + λ) / (1 + λ + η)`.
pub fn classical_fidelity(eta: f64, lambda: f64) -> f64 {
    (1.0 + lambda) / (1.0 + lambda + eta)
}

/// Best average fidelity reachable by any measure-and-prepare channel,
/// `F(η/N, λ/N)`.
pub fn classical_bound(task: &TaskSpec) -> f64 {
    let n = f64::from(task.n_copies);
    classical_fidelity(task.eta / n, task.lambda / n)
}

/// Average quadrature excess `δ̄` below which operation is certified:
/// `2(1 − F(η, λ)) = 2η / (1 + λ + η)`.
pub fn quadrature_threshold(task: &TaskSpec) -> Result<f64> {
    if task.n_copies != 1 {
        return Err(Error::Unsupported(format!(
            "quadrature criterion is defined for single-copy tasks, got N = {}",
            task.n_copies
        )));
    }
    Ok(2.0 * task.eta / (1.0 + task.lambda + task.eta))
}

/// Optimal CPTP fidelity `1/η` of the flat-prior amplification task, reached by
/// the quantum-limited amplifier.
pub fn quantum_amp_bound(eta: f64) -> Result<f64> {
    if !(eta.is_finite() && eta > 1.0) {
        return Err(Error::InvalidInput(format!(
            "quantum amplification bound needs eta > 1 (the task is physical otherwise), got {eta}"
        )));
    }
    Ok(1.0 / eta)
}
