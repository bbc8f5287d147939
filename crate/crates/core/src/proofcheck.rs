//! Numerical checks of the operator inequalities behind the classical bound:
//! circulant-matrix identities, the eigenvalues `χ_j`, and the single-mode
//! norm lemma `‖Â_φ‖_∞ ≤ F(η, λ) ⟨φ|ρ_λ|φ⟩`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::classical_fidelity;
use crate::ensembles::{self, GaussianPrior, QuadratureRule};
use crate::error::{Error, Result};
use crate::fock::{FockOperator, FockVector, LogFactorials, ThermalSpec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirculantSpec {
    pub p: usize,
    pub lambda: f64,
    pub eta: f64,
}

impl CirculantSpec {
    pub fn new(p: usize, lambda: f64, eta: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidInput(format!("replica count p must be >= 2, got {p}")));
        }
        if !(lambda.is_finite() && eta.is_finite()) {
            return Err(Error::InvalidInput("circulant parameters must be finite".into()));
        }
        Ok(Self { p, lambda, eta })
    }
}

/// `M_{λ,η} = λ E_p − η C` with `C` the cyclic shift, `C_{k,k+1 mod p} = 1`.
pub fn circulant_matrix(spec: &CirculantSpec) -> DMatrix<f64> {
    let p = spec.p;
    DMatrix::from_fn(p, p, |k, l| {
        let mut v = 0.0;
        if k == l {
            v += spec.lambda;
        }
        if l == (k + 1) % p {
            v -= spec.eta;
        }
        v
    })
}

pub fn circulant_determinant(spec: &CirculantSpec) -> f64 {
    circulant_matrix(spec).determinant()
}

/// `|det M_{λ,η} − (λ^p − η^p)|` relative to `|λ|^p + |η|^p`; the scale keeps the
/// comparison meaningful when `λ ≈ η`.
pub fn determinant_identity_error(spec: &CirculantSpec) -> f64 {
    let p = spec.p as i32;
    let expected = spec.lambda.powi(p) - spec.eta.powi(p);
    let scale = spec.lambda.abs().powi(p) + spec.eta.abs().powi(p);
    (circulant_determinant(spec) - expected).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Largest distance in an optimal-by-greedy pairing of two equally sized
/// multisets of complex numbers.
fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("multisets have equal size");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

fn product(values: impl Iterator<Item = Complex64>) -> Complex64 {
    values.fold(Complex64::new(1.0, 0.0), |acc, v| acc * v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiReport {
    pub spec: CirculantSpec,
    /// Eigenvalues of `M_{λ+η,η}` from the matrix.
    pub numeric: Vec<[f64; 2]>,
    /// Distance to `{λ + η(1 − ω^j)}`, the spectrum implied by `C`'s eigenvalues `ω^j`.
    pub shift_form_distance: f64,
    /// Distance to `{λ + η(1 + ω^j)}`. Equal as multisets only for even `p`.
    pub plus_form_distance: f64,
    pub plus_form_matches: bool,
    /// `|∏(1 + χ_j) − det M_{1+λ+η,η}|`, relative.
    pub product_identity_error: f64,
    /// `∏(1 + λ + η(1 + ω^j))`, for comparison with `(1+λ+η)^p − η^p`.
    pub plus_form_product: f64,
    pub min_abs_one_plus_chi: f64,
    /// `|∏ λ/(1 + χ_j) − λ^p/((1+λ+η)^p − η^p)|`, relative.
    pub prefactor_identity_error: f64,
    pub pass: bool,
}

pub const IDENTITY_TOL: f64 = 1e-10;

/// Eigenvalues `χ_j` of `M_{λ+η,η}` and the identities built on them. `pass`
/// requires agreement with the shift form, the product identity and
/// `|1 + χ_j| ≥ 1 + λ`; agreement with the plus form is reported separately.
pub fn chi_eigenvalues(spec: &CirculantSpec) -> ChiReport {
    let (p, lambda, eta) = (spec.p, spec.lambda, spec.eta);
    let shifted = CirculantSpec {
        p,
        lambda: lambda + eta,
        eta,
    };
    let numeric: Vec<Complex64> = circulant_matrix(&shifted)
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    let omega = |j: usize| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / p as f64);
    let shift_form: Vec<Complex64> = (0..p).map(|j| lambda + eta * (1.0 - omega(j))).collect();
    let plus_form: Vec<Complex64> = (0..p).map(|j| lambda + eta * (1.0 + omega(j))).collect();
    let scale = 1.0 + lambda.abs() + eta.abs();

    let pi = p as i32;
    let det_target = (1.0 + lambda + eta).powi(pi) - eta.powi(pi);
    let prod = product(numeric.iter().map(|c| 1.0 + c));
    let det_scale = (1.0 + lambda + eta).abs().powi(pi) + eta.abs().powi(pi);
    let product_identity_error = (prod - det_target).norm() / det_scale;

    let prefactor = product(numeric.iter().map(|c| lambda / (1.0 + c)));
    let prefactor_target = lambda.powi(pi) / det_target;
    let prefactor_identity_error =
        (prefactor - prefactor_target).norm() / prefactor_target.abs().max(f64::MIN_POSITIVE);

    let min_abs_one_plus_chi = numeric.iter().map(|c| (1.0 + c).norm()).fold(f64::INFINITY, f64::min);
    let shift_form_distance = multiset_distance(&numeric, &shift_form) / scale;
    let plus_form_distance = multiset_distance(&numeric, &plus_form) / scale;
    let pass = shift_form_distance <= IDENTITY_TOL
        && product_identity_error <= IDENTITY_TOL
        && (lambda == 0.0 || prefactor_identity_error <= IDENTITY_TOL)
        && min_abs_one_plus_chi >= 1.0 + lambda - 1e-12;
    ChiReport {
        spec: *spec,
        numeric: numeric.iter().map(|c| [c.re, c.im]).collect(),
        shift_form_distance,
        plus_form_distance,
        plus_form_matches: plus_form_distance <= IDENTITY_TOL,
        product_identity_error,
        plus_form_product: product(plus_form.iter().map(|c| 1.0 + c)).re,
        min_abs_one_plus_chi,
        prefactor_identity_error,
        pass,
    }
}

#[derive(Debug, Clone)]
pub struct AphiOperator {
    pub operator: FockOperator,
    pub eta: f64,
    pub lambda: f64,
    /// `"exact"` or the quadrature rule's resolution tag.
    pub construction: String,
    /// Upper bound on the trace outside the represented block.
    pub tail: f64,
}

fn check_params(eta: f64, lambda: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    GaussianPrior::new(lambda).map(|_| ())
}

fn check_phi(phi: &FockVector) -> Result<()> {
    if phi.norm_sqr() > 1.0 + 1e-12 {
        return Err(Error::InvalidInput("test vector norm exceeds 1".into()));
    }
    Ok(())
}

/// `⟨φ|ρ_λ|φ⟩`, which is also `Tr Â_φ`.
pub fn thermal_expectation(phi: &FockVector, lambda: f64) -> Result<f64> {
    let spec = ThermalSpec::new(lambda)?;
    Ok(phi
        .amplitudes
        .iter()
        .enumerate()
        .map(|(n, c)| spec.population(n) * c.norm_sqr())
        .sum())
}

/// `Â_φ = ∫ p(α) |⟨α|φ⟩|² |√η α⟩⟨√η α| d²α` realized on `rule`, on `output_cutoff` levels.
pub fn build_aphi(
    phi: &FockVector,
    eta: f64,
    lambda: f64,
    rule: &QuadratureRule,
    output_cutoff: usize,
) -> Result<AphiOperator> {
    check_params(eta, lambda)?;
    check_phi(phi)?;
    let n = phi.cutoff();
    let mut m = DMatrix::from_element(output_cutoff, output_cutoff, ZERO);
    for (alpha, w) in rule.iter() {
        let overlap = FockVector::coherent_unchecked(alpha, n)
            .amplitudes
            .dotc(&phi.amplitudes)
            .norm_sqr();
        let weight = w * overlap;
        if weight == 0.0 {
            continue;
        }
        let out = FockVector::coherent_unchecked(alpha * eta.sqrt(), output_cutoff).amplitudes;
        m += (&out * out.adjoint()) * Complex64::new(weight, 0.0);
    }
    let operator = FockOperator { matrix: m };
    let tail = (thermal_expectation(phi, lambda)? - operator.trace()).max(0.0);
    Ok(AphiOperator {
        operator,
        eta,
        lambda,
        construction: rule.resolution.clone(),
        tail,
    })
}

/// Exact matrix elements of `Â_φ` on `output_cutoff` levels:
///
/// `⟨k|Â|l⟩ = λ η^{(k+l)/2} / √(k! l!) Σₙ φₙ φ*ₘ (n+l)! / [√(n! m!) (1+λ+η)^{n+l+1}]`, `m = n + l − k`.
pub fn build_aphi_exact(phi: &FockVector, eta: f64, lambda: f64, output_cutoff: usize) -> Result<AphiOperator> {
    check_params(eta, lambda)?;
    check_phi(phi)?;
    let n_in = phi.cutoff();
    let lf = LogFactorials::new(output_cutoff + n_in + 1);
    let (ln_eta, ln_a) = (eta.ln(), (1.0 + lambda + eta).ln());
    let mut m = DMatrix::from_element(output_cutoff, output_cutoff, ZERO);
    for k in 0..output_cutoff {
        for l in k..output_cutoff {
            let base = lambda.ln() + 0.5 * (k + l) as f64 * ln_eta - 0.5 * (lf.ln_fact(k) + lf.ln_fact(l));
            let mut acc = ZERO;
            for n in k.saturating_sub(l)..n_in {
                let mi = n + l - k;
                if mi >= n_in {
                    break;
                }
                let ln = base - 0.5 * (lf.ln_fact(n) + lf.ln_fact(mi)) + lf.ln_fact(n + l) - (n + l + 1) as f64 * ln_a;
                acc += phi.amplitudes[n] * phi.amplitudes[mi].conj() * ln.exp();
            }
            m[(k, l)] = acc;
            m[(l, k)] = acc.conj();
        }
    }
    let operator = FockOperator { matrix: m };
    let tail = (thermal_expectation(phi, lambda)? - operator.trace()).max(0.0);
    Ok(AphiOperator {
        operator,
        eta,
        lambda,
        construction: "exact".into(),
        tail,
    })
}

pub const MAX_OUTPUT_CUTOFF: usize = 512;

/// [`build_aphi_exact`] with the output block doubled until the trace left
/// outside it drops below `tail_tolerance`.
pub fn build_aphi_converged(phi: &FockVector, eta: f64, lambda: f64, tail_tolerance: f64) -> Result<AphiOperator> {
    let mut size = 2 * phi.cutoff() + 16;
    loop {
        let a = build_aphi_exact(phi, eta, lambda, size)?;
        if a.tail <= tail_tolerance || size >= MAX_OUTPUT_CUTOFF {
            return Ok(a);
        }
        size = (2 * size).min(MAX_OUTPUT_CUTOFF);
    }
}

/// Bounds on `‖Â_φ‖_∞` from a truncated block: the block's top eigenvalue is a
/// lower bound and adding the omitted trace gives an upper bound, since the
/// norm of a positive block matrix is at most the sum of its diagonal blocks' norms.
pub fn norm_bounds(a: &AphiOperator) -> (f64, f64) {
    let top = a.operator.max_eigenvalue();
    (top, top + a.tail)
}

/// Haar-random unit vector on `cutoff` levels, stream `trial` of `seed`.
pub fn haar_vector(cutoff: usize, seed: u64, trial: u64) -> FockVector {
    let mut rng = ensembles::rng_for(seed, trial);
    let raw: Vec<Complex64> = (0..cutoff)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    FockVector {
        amplitudes: DVector::from_vec(raw.into_iter().map(|c| c / norm).collect()),
        truncated_weight: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormLemmaParams {
    pub eta: f64,
    pub lambda: f64,
    pub cutoff: usize,
    pub seed: u64,
    /// Multiplies `F(η, λ)` on the right-hand side; 1 except in self-tests.
    pub bound_scale: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaInstance {
    pub trial: u64,
    pub lhs: f64,
    pub lhs_lower: f64,
    pub rhs: f64,
    pub phi: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormLemmaReport {
    pub params: NormLemmaParams,
    pub trials: usize,
    /// `max(lhs − rhs)` where `lhs` is the certified upper bound on `‖Â_φ‖_∞`.
    pub max_violation: f64,
    pub max_ratio: f64,
    pub worst: Option<LemmaInstance>,
    pub pass: bool,
}

pub const LEMMA_TOLERANCE: f64 = 1e-8;
const LEMMA_TAIL: f64 = 1e-11;

fn lemma_instance(phi: &FockVector, trial: u64, params: &NormLemmaParams) -> Result<LemmaInstance> {
    let a = build_aphi_converged(phi, params.eta, params.lambda, LEMMA_TAIL)?;
    let (lower, upper) = norm_bounds(&a);
    let rhs =
        params.bound_scale * classical_fidelity(params.eta, params.lambda) * thermal_expectation(phi, params.lambda)?;
    Ok(LemmaInstance {
        trial,
        lhs: upper,
        lhs_lower: lower,
        rhs,
        phi: phi.amplitudes.iter().map(|c| [c.re, c.im]).collect(),
    })
}

fn summarize(params: NormLemmaParams, instances: Vec<LemmaInstance>) -> NormLemmaReport {
    let trials = instances.len();
    let mut worst: Option<LemmaInstance> = None;
    let mut max_ratio: f64 = 0.0;
    for inst in instances {
        max_ratio = max_ratio.max(inst.lhs_lower / inst.rhs);
        if worst.as_ref().is_none_or(|w| inst.lhs - inst.rhs > w.lhs - w.rhs) {
            worst = Some(inst);
        }
    }
    let max_violation = worst.as_ref().map_or(f64::NEG_INFINITY, |w| w.lhs - w.rhs);
    NormLemmaReport {
        pass: max_violation <= params.tolerance,
        params,
        trials,
        max_violation,
        max_ratio,
        worst,
    }
}

/// Random-vector test of `‖Â_φ‖_∞ ≤ F(η, λ) ⟨φ|ρ_λ|φ⟩`. Trials run in parallel
/// and are reduced in trial order.
pub fn norm_lemma_check(trials: usize, eta: f64, lambda: f64, cutoff: usize, seed: u64) -> Result<NormLemmaReport> {
    norm_lemma_check_scaled(trials, eta, lambda, cutoff, seed, 1.0)
}

pub fn norm_lemma_check_scaled(
    trials: usize,
    eta: f64,
    lambda: f64,
    cutoff: usize,
    seed: u64,
    bound_scale: f64,
) -> Result<NormLemmaReport> {
    check_params(eta, lambda)?;
    if cutoff < 20 {
        return Err(Error::InvalidInput(format!(
            "norm lemma check needs cutoff >= 20, got {cutoff}"
        )));
    }
    let params = NormLemmaParams {
        eta,
        lambda,
        cutoff,
        seed,
        bound_scale,
        tolerance: LEMMA_TOLERANCE,
    };
    let instances = (0..trials as u64)
        .into_par_iter()
        .map(|t| lemma_instance(&haar_vector(cutoff, seed, t), t, &params))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(params, instances))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationPoint {
    pub label: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationReport {
    pub eta: f64,
    pub lambda: f64,
    pub points: Vec<SaturationPoint>,
    pub best_ratio: f64,
    /// The lemma checked at every scanned vector.
    pub lemma: NormLemmaReport,
}

/// `‖Â_φ‖_∞ / (F ⟨φ|ρ_λ|φ⟩)` for coherent and noise-smeared coherent test
/// vectors; coherent vectors reach the bound.
pub fn saturation_scan(eta: f64, lambda: f64, cutoff: usize, seed: u64, bound_scale: f64) -> Result<SaturationReport> {
    check_params(eta, lambda)?;
    let params = NormLemmaParams {
        eta,
        lambda,
        cutoff,
        seed,
        bound_scale,
        tolerance: LEMMA_TOLERANCE,
    };
    let mut vectors = Vec::new();
    for beta in [0.0, 0.5, 1.0, 1.5] {
        let mut v = FockVector::coherent(Complex64::new(beta, 0.0), cutoff)?;
        v.amplitudes /= Complex64::new(v.norm_sqr().sqrt(), 0.0);
        vectors.push((format!("coherent {beta}"), v.clone()));
        for (i, eps) in [0.05, 0.2].into_iter().enumerate() {
            let noise = haar_vector(cutoff, seed, 1000 + 10 * (beta * 10.0) as u64 + i as u64);
            let mixed = &v.amplitudes * Complex64::new(1.0 - eps, 0.0) + noise.amplitudes * Complex64::new(eps, 0.0);
            let norm = mixed.norm();
            vectors.push((
                format!("coherent {beta} + {eps} noise"),
                FockVector {
                    amplitudes: mixed / Complex64::new(norm, 0.0),
                    truncated_weight: 0.0,
                },
            ));
        }
    }
    let instances = vectors
        .par_iter()
        .enumerate()
        .map(|(i, (_, v))| lemma_instance(v, i as u64, &params))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<SaturationPoint> = vectors
        .iter()
        .zip(&instances)
        .map(|((label, _), inst)| SaturationPoint {
            label: label.clone(),
            ratio: inst.lhs_lower / (inst.rhs / bound_scale),
        })
        .collect();
    let best_ratio = points.iter().map(|p| p.ratio).fold(0.0, f64::max);
    Ok(SaturationReport {
        eta,
        lambda,
        points,
        best_ratio,
        lemma: summarize(params, instances),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaReport {
    pub eta: f64,
    pub lambda: f64,
    pub cutoff: usize,
    /// `Tr(|φ⟩⟨φ|^{⊗2} B̂)` with `B̂` built on a quadrature rule.
    pub replica_value: f64,
    /// `Tr(Â_φ²)` from the exact `Â_φ`.
    pub direct_value: f64,
    pub relative_error: f64,
    pub pass: bool,
}

pub const MAX_REPLICA_CUTOFF: usize = 16;

/// `Tr(Â_φ²) = Tr(|φ⟩⟨φ|^{⊗2} B̂)` with
/// `B̂ = ∫∫ p(α₁) p(α₂) e^{−η|α₁−α₂|²} |α₁⟩⟨α₁| ⊗ |α₂⟩⟨α₂|`, where `B̂` is
/// assembled as a two-mode operator on `cutoff²` levels.
pub fn replica_identity_check_p2(
    phi: &FockVector,
    eta: f64,
    lambda: f64,
    rule: &QuadratureRule,
) -> Result<ReplicaReport> {
    check_params(eta, lambda)?;
    check_phi(phi)?;
    let n = phi.cutoff();
    if n > MAX_REPLICA_CUTOFF {
        return Err(Error::InvalidInput(format!(
            "replica check is limited to cutoff {MAX_REPLICA_CUTOFF}, got {n}"
        )));
    }
    let projectors: Vec<DMatrix<Complex64>> = rule
        .nodes
        .iter()
        .map(|&a| {
            let v = FockVector::coherent_unchecked(a, n).amplitudes;
            &v * v.adjoint()
        })
        .collect();
    let dim = n * n;
    let b = rule
        .nodes
        .par_iter()
        .enumerate()
        .map(|(i, &ai)| {
            let mut q = DMatrix::from_element(n, n, ZERO);
            for (j, &aj) in rule.nodes.iter().enumerate() {
                let w = rule.weights[i] * rule.weights[j] * (-eta * (ai - aj).norm_sqr()).exp();
                q += &projectors[j] * Complex64::new(w, 0.0);
            }
            projectors[i].kronecker(&q)
        })
        .reduce(|| DMatrix::from_element(dim, dim, ZERO), |a, b| a + b);
    let phi2 = phi.amplitudes.kronecker(&phi.amplitudes);
    let replica_value = phi2.dotc(&(&b * &phi2)).re;

    let a = build_aphi_converged(phi, eta, lambda, 1e-12)?;
    let direct_value = (&a.operator.matrix * &a.operator.matrix).trace().re;
    let relative_error = (replica_value - direct_value).abs() / direct_value.abs().max(f64::MIN_POSITIVE);
    Ok(ReplicaReport {
        eta,
        lambda,
        cutoff: n,
        replica_value,
        direct_value,
        relative_error,
        pass: relative_error < 1e-3,
    })
}

/// Default rule for [`replica_identity_check_p2`]. Nodes follow the weight
/// `exp(-(1+λ)|α|²)` that the coherent overlaps carry, so the rule stays sharp
/// for broad priors; the weights are rescaled back to the prior measure.
pub fn replica_rule(lambda: f64) -> Result<QuadratureRule> {
    GaussianPrior::new(lambda)?;
    let mut rule = ensembles::gauss_rule(&GaussianPrior::new(1.0 + lambda)?, 16, 24)?;
    for (w, a) in rule.weights.iter_mut().zip(&rule.nodes) {
        *w *= lambda / (1.0 + lambda) * a.norm_sqr().exp();
    }
    Ok(rule)
}
