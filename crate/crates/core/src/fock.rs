//! Truncated Fock-space oracle.
//!
//! Every constructor and channel keeps track of the weight that falls outside
//! the cutoff instead of renormalizing: [`FockVector::truncated_weight`] for
//! kets and [`FockOperator::deficit`] for density operators.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{self, GaussianPrior, QuadratureRule};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `ln n!` for `n < len`.
#[derive(Debug, Clone)]
pub struct LogFactorials(Vec<f64>);

impl LogFactorials {
    pub fn new(len: usize) -> Self {
        let mut table = Vec::with_capacity(len.max(1));
        let mut acc = 0.0;
        table.push(0.0);
        for n in 1..len.max(1) {
            acc += (n as f64).ln();
            table.push(acc);
        }
        Self(table)
    }

    pub fn ln_fact(&self, n: usize) -> f64 {
        self.0[n]
    }

    pub fn ln_binom(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// Amplitudes `e^{−|α|²/2} αⁿ / √n!` for `n < cutoff`, evaluated in log space.
fn coherent_amplitudes(alpha: Complex64, cutoff: usize) -> Vec<Complex64> {
    let r2 = alpha.norm_sqr();
    if r2 == 0.0 {
        let mut v = vec![ZERO; cutoff];
        v[0] = Complex64::new(1.0, 0.0);
        return v;
    }
    let (r, theta) = alpha.to_polar();
    let ln_r = r.ln();
    let mut ln_fact = 0.0;
    (0..cutoff)
        .map(|n| {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let ln_mag = -0.5 * r2 + n as f64 * ln_r - 0.5 * ln_fact;
            Complex64::from_polar(ln_mag.exp(), n as f64 * theta)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    pub amplitudes: DVector<Complex64>,
    /// Norm missing relative to the untruncated state (zero for states built exactly).
    pub truncated_weight: f64,
}

impl FockVector {
    /// Coherent ket `|α⟩` truncated to `cutoff` levels. Fails when `|α|²` exceeds
    /// the cutoff, where most of the state would be discarded.
    pub fn coherent(alpha: Complex64, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidInput("cutoff must be at least 1".into()));
        }
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite amplitude {alpha}")));
        }
        if alpha.norm_sqr() > cutoff as f64 {
            return Err(Error::CutoffTooSmall {
                cutoff,
                truncated_weight: 1.0,
                tolerance: 0.0,
            });
        }
        Ok(Self::coherent_unchecked(alpha, cutoff))
    }

    /// Like [`FockVector::coherent`] but also rejects a truncated weight above `tolerance`.
    pub fn coherent_within(alpha: Complex64, cutoff: usize, tolerance: f64) -> Result<Self> {
        let v = Self::coherent(alpha, cutoff)?;
        if v.truncated_weight > tolerance {
            return Err(Error::CutoffTooSmall {
                cutoff,
                truncated_weight: v.truncated_weight,
                tolerance,
            });
        }
        Ok(v)
    }

    pub(crate) fn coherent_unchecked(alpha: Complex64, cutoff: usize) -> Self {
        let amps = DVector::from_vec(coherent_amplitudes(alpha, cutoff));
        let kept: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        Self {
            amplitudes: amps,
            truncated_weight: (1.0 - kept).max(0.0),
        }
    }

    pub fn number_state(n: usize, cutoff: usize) -> Result<Self> {
        if n >= cutoff {
            return Err(Error::InvalidInput(format!("|{n}⟩ does not fit in cutoff {cutoff}")));
        }
        let mut amps = DVector::from_element(cutoff, ZERO);
        amps[n] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes: amps,
            truncated_weight: 0.0,
        })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("empty amplitude vector".into()));
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if !norm.is_finite() || norm > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("vector norm² {norm} exceeds 1")));
        }
        Ok(Self {
            amplitudes: DVector::from_vec(amplitudes),
            truncated_weight: 0.0,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &FockVector) -> Result<Complex64> {
        check_cutoffs(self.cutoff(), other.cutoff())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn outer(&self) -> FockOperator {
        FockOperator {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn mean_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }
}

fn check_cutoffs(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("cutoff mismatch: {a} vs {b}")))
    }
}

/// A value clipped into `[0, 1]`, with the amount that was clipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clipped {
    pub value: f64,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub matrix: DMatrix<Complex64>,
}

#[derive(Serialize)]
struct MatrixDump {
    cutoff: usize,
    data: Vec<Vec<[f64; 2]>>,
}

impl FockOperator {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput(
                "operator matrix must be square and non-empty".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn zeros(cutoff: usize) -> Self {
        Self {
            matrix: DMatrix::from_element(cutoff, cutoff, ZERO),
        }
    }

    pub fn cutoff(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Trace missing relative to a normalized state.
    pub fn deficit(&self) -> f64 {
        1.0 - self.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Checks the density-operator invariants. `max_deficit` is the trace loss
    /// the caller accepts from truncation.
    pub fn validate_density(&self, max_deficit: f64) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-12 {
            return Err(Error::InvalidInput(format!("not Hermitian (error {herm:.2e})")));
        }
        let min_ev = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min_ev < -1e-10 {
            return Err(Error::InvalidInput(format!("not positive (eigenvalue {min_ev:.2e})")));
        }
        let tr = self.trace();
        if tr > 1.0 + 1e-8 || 1.0 - tr > max_deficit.max(1e-8) {
            return Err(Error::InvalidInput(format!("trace {tr} outside allowed range")));
        }
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩`, clipped to `[0, 1]`.
    pub fn fidelity_pure(&self, psi: &FockVector) -> Result<Clipped> {
        check_cutoffs(self.cutoff(), psi.cutoff())?;
        let v = psi.amplitudes.dotc(&(&self.matrix * &psi.amplitudes));
        if v.im.abs() > 1e-12 * (1.0 + v.re.abs()) {
            return Err(Error::InvalidInput(format!("fidelity has imaginary part {:.2e}", v.im)));
        }
        let value = v.re.clamp(0.0, 1.0);
        Ok(Clipped {
            value,
            clip: value - v.re,
        })
    }

    pub fn expect(&self, op: &DMatrix<Complex64>) -> Complex64 {
        (&self.matrix * op).trace()
    }

    pub fn mean_number(&self) -> f64 {
        (0..self.cutoff()).map(|n| n as f64 * self.matrix[(n, n)].re).sum()
    }

    /// `⟨a⟩`.
    pub fn mean_amplitude(&self) -> Complex64 {
        (0..self.cutoff().saturating_sub(1))
            .map(|n| self.matrix[(n + 1, n)] * ((n + 1) as f64).sqrt())
            .sum()
    }

    /// `⟨a²⟩`.
    pub fn mean_amplitude_sq(&self) -> Complex64 {
        (0..self.cutoff().saturating_sub(2))
            .map(|n| self.matrix[(n + 2, n)] * (((n + 1) * (n + 2)) as f64).sqrt())
            .sum()
    }

    /// Mean vector and symmetrized covariance of `(x+, x-)`.
    pub fn quadrature_moments(&self) -> GaussianState {
        let a = self.mean_amplitude();
        let a2 = self.mean_amplitude_sq();
        let n = self.mean_number();
        let d = Vector2::new(a.re, a.im) * std::f64::consts::SQRT_2;
        let xx = a2.re + n + 0.5 - d[0] * d[0];
        let pp = -a2.re + n + 0.5 - d[1] * d[1];
        let xp = a2.im - d[0] * d[1];
        GaussianState {
            d,
            gamma: Matrix2::new(xx, xp, xp, pp),
        }
    }

    /// `Tr(ρ e^{i Rᵀz})`.
    pub fn characteristic_function(&self, z: &Vector2<f64>) -> Complex64 {
        let xi = Complex64::new(-z[1], z[0]) / std::f64::consts::SQRT_2;
        self.expect(&displacement_matrix(xi, self.cutoff()))
    }

    /// `½ ‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &FockOperator) -> Result<f64> {
        check_cutoffs(self.cutoff(), other.cutoff())?;
        let diff = FockOperator {
            matrix: &self.matrix - &other.matrix,
        };
        Ok(0.5 * diff.eigenvalues().iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Row-major JSON dump with complex entries as `[re, im]`.
    pub fn to_json(&self) -> String {
        let n = self.cutoff();
        let data = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| [self.matrix[(i, j)].re, self.matrix[(i, j)].im])
                    .collect()
            })
            .collect();
        serde_json::to_string(&MatrixDump { cutoff: n, data }).expect("matrix serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalSpec {
    lambda: f64,
}

impl ThermalSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self { lambda })
        } else {
            Err(Error::InvalidInput(format!(
                "thermal lambda must be positive, got {lambda}"
            )))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `[λ/(1+λ)] (1+λ)^{−n}`.
    pub fn population(&self, n: usize) -> f64 {
        let l = self.lambda;
        l / (1.0 + l) * (1.0 + l).powi(-(n as i32))
    }
}

/// `ρ_λ = [λ/(1+λ)] Σ (1+λ)^{−n} |n⟩⟨n|`, truncated.
pub fn thermal_state(spec: &ThermalSpec, cutoff: usize) -> FockOperator {
    let mut rho = FockOperator::zeros(cutoff);
    for n in 0..cutoff {
        rho.matrix[(n, n)] = Complex64::new(spec.population(n), 0.0);
    }
    rho
}

pub fn annihilation(cutoff: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(cutoff, cutoff, |i, j| {
        if j == i + 1 {
            Complex64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

/// Upper-left `cutoff × cutoff` block of `D(ξ) = exp(ξ a† − ξ* a)`.
///
/// Along the `k`-th subdiagonal `⟨n+k|D|n⟩ = e^{ikθ} fₙ` with
/// `fₙ = √(n!/(n+k)!) e^{−x/2} x^{k/2} Lₙ^{(k)}(x)`, `x = |ξ|²`. The Laguerre
/// recurrence is run directly on the bounded `fₙ`; iterating `a† − ξ*` on
/// columns instead loses all accuracy once `|ξ|` reaches a few units.
pub fn displacement_matrix(xi: Complex64, cutoff: usize) -> DMatrix<Complex64> {
    let mut d = DMatrix::from_element(cutoff, cutoff, ZERO);
    let x = xi.norm_sqr();
    if x == 0.0 {
        for n in 0..cutoff {
            d[(n, n)] = Complex64::new(1.0, 0.0);
        }
        return d;
    }
    let theta = xi.arg();
    let lf = LogFactorials::new(cutoff + 1);
    for k in 0..cutoff {
        let below = Complex64::from_polar(1.0, k as f64 * theta);
        let above = Complex64::from_polar(1.0, k as f64 * (std::f64::consts::PI - theta));
        let kf = k as f64;
        let mut prev = 0.0;
        let mut cur = (-0.5 * x + 0.5 * kf * x.ln() - 0.5 * lf.ln_fact(k)).exp();
        for n in 0..cutoff - k {
            d[(n + k, n)] = below * cur;
            if k > 0 {
                d[(n, n + k)] = above * cur;
            }
            let nf = n as f64;
            let next = ((2.0 * nf + 1.0 + kf - x) * cur - (nf * (nf + kf)).sqrt() * prev)
                / ((nf + 1.0) * (nf + kf + 1.0)).sqrt();
            prev = cur;
            cur = next;
        }
    }
    d
}

fn check_density_input(rho: &FockOperator) -> Result<()> {
    if rho.cutoff() == 0 {
        return Err(Error::InvalidInput("empty operator".into()));
    }
    if rho.matrix.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::InvalidInput("operator has non-finite entries".into()));
    }
    Ok(())
}

/// Kraus amplitudes `⟨m|A_k|m+k⟩ = √C(m+k,k) T^{m/2} (1−T)^{k/2}` of the attenuator.
fn loss_coefficient(lf: &LogFactorials, t: f64, m: usize, k: usize) -> f64 {
    if k > 0 && t == 1.0 {
        return 0.0;
    }
    let ln = 0.5 * lf.ln_binom(m + k, k)
        + if m > 0 { 0.5 * m as f64 * t.ln() } else { 0.0 }
        + if k > 0 { 0.5 * k as f64 * (1.0 - t).ln() } else { 0.0 };
    ln.exp()
}

/// Kraus amplitudes `⟨n+k|B_k|n⟩ = G^{−1/2} √C(n+k,k) (1−1/G)^{k/2} G^{−n/2}` of the
/// quantum-limited amplifier.
fn amp_coefficient(lf: &LogFactorials, g: f64, n: usize, k: usize) -> f64 {
    if k > 0 && g == 1.0 {
        return 0.0;
    }
    let ln = -0.5 * g.ln() + 0.5 * lf.ln_binom(n + k, k) - 0.5 * n as f64 * g.ln()
        + if k > 0 {
            0.5 * k as f64 * (1.0 - 1.0 / g).ln()
        } else {
            0.0
        };
    ln.exp()
}

fn check_transmission(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("transmission must lie in (0, 1], got {t}")))
    }
}

fn check_gain(g: f64) -> Result<()> {
    if g.is_finite() && g >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("amplifier gain must be >= 1, got {g}")))
    }
}

/// Pure-loss (beam-splitter) channel of transmission `t`.
pub fn apply_loss(rho: &FockOperator, t: f64) -> Result<FockOperator> {
    check_transmission(t)?;
    check_density_input(rho)?;
    let n = rho.cutoff();
    let lf = LogFactorials::new(2 * n + 1);
    let mut out = FockOperator::zeros(n);
    for k in 0..n {
        let coef: Vec<f64> = (0..n - k).map(|m| loss_coefficient(&lf, t, m, k)).collect();
        if coef.iter().all(|&c| c == 0.0) {
            continue;
        }
        for m in 0..n - k {
            for mp in 0..n - k {
                out.matrix[(m, mp)] += rho.matrix[(m + k, mp + k)] * (coef[m] * coef[mp]);
            }
        }
    }
    Ok(out)
}

/// Phase-insensitive quantum-limited amplifier of power gain `g`, output
/// truncated to the input cutoff.
pub fn apply_amp(rho: &FockOperator, g: f64) -> Result<FockOperator> {
    check_gain(g)?;
    check_density_input(rho)?;
    let n = rho.cutoff();
    let lf = LogFactorials::new(2 * n + 1);
    let mut out = FockOperator::zeros(n);
    for k in 0..n {
        let coef: Vec<f64> = (0..n - k).map(|m| amp_coefficient(&lf, g, m, k)).collect();
        if coef.iter().all(|&c| c == 0.0) {
            continue;
        }
        for m in 0..n - k {
            for mp in 0..n - k {
                out.matrix[(m + k, mp + k)] += rho.matrix[(m, mp)] * (coef[m] * coef[mp]);
            }
        }
    }
    Ok(out)
}

/// Weighted unnormalized kets `{(wᵢ, vᵢ)}` standing for `Σ wᵢ |vᵢ⟩⟨vᵢ|`.
pub type Images = Vec<(f64, DVector<Complex64>)>;

/// A channel realized on truncated Fock space.
pub trait FockChannel: Sync {
    fn apply(&self, rho: &FockOperator) -> Result<FockOperator>;

    /// Output on a pure input as a weighted set of kets, when the channel has a
    /// cheap Kraus-like decomposition.
    fn images(&self, _input: &FockVector) -> Option<Result<Images>> {
        None
    }

    /// `E†(|target⟩⟨target|)` as a weighted set of kets, when available.
    fn adjoint_images(&self, _target: &FockVector) -> Option<Result<Images>> {
        None
    }

    /// `⟨target| E(|input⟩⟨input|) |target⟩`.
    fn fidelity_on_pure(&self, input: &FockVector, target: &FockVector) -> Result<f64> {
        check_cutoffs(input.cutoff(), target.cutoff())?;
        if let Some(images) = self.images(input) {
            let total: f64 = images?
                .iter()
                .map(|(w, v)| w * target.amplitudes.dotc(v).norm_sqr())
                .sum();
            return Ok(total.clamp(0.0, 1.0));
        }
        let out = self.apply(&input.outer())?;
        Ok(out.fidelity_pure(target)?.value)
    }
}

fn images_to_operator(images: &Images, cutoff: usize) -> FockOperator {
    let mut out = DMatrix::from_element(cutoff, cutoff, ZERO);
    for (w, v) in images {
        out += (v * v.adjoint()) * Complex64::new(*w, 0.0);
    }
    FockOperator { matrix: out }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityChannel;

impl FockChannel for IdentityChannel {
    fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        Ok(rho.clone())
    }

    fn images(&self, input: &FockVector) -> Option<Result<Images>> {
        Some(Ok(vec![(1.0, input.amplitudes.clone())]))
    }

    fn adjoint_images(&self, target: &FockVector) -> Option<Result<Images>> {
        self.images(target)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossChannel {
    pub transmission: f64,
}

impl LossChannel {
    fn kraus(&self, psi: &FockVector, adjoint: bool) -> Result<Images> {
        check_transmission(self.transmission)?;
        let n = psi.cutoff();
        let lf = LogFactorials::new(2 * n + 1);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut v = DVector::from_element(n, ZERO);
            for m in 0..n - k {
                let c = loss_coefficient(&lf, self.transmission, m, k);
                if adjoint {
                    v[m + k] = psi.amplitudes[m] * c;
                } else {
                    v[m] = psi.amplitudes[m + k] * c;
                }
            }
            out.push((1.0, v));
        }
        Ok(out)
    }
}

impl FockChannel for LossChannel {
    fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        apply_loss(rho, self.transmission)
    }

    fn images(&self, input: &FockVector) -> Option<Result<Images>> {
        Some(self.kraus(input, false))
    }

    fn adjoint_images(&self, target: &FockVector) -> Option<Result<Images>> {
        Some(self.kraus(target, true))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AmpChannel {
    pub gain: f64,
}

impl AmpChannel {
    fn kraus(&self, psi: &FockVector, adjoint: bool) -> Result<Images> {
        check_gain(self.gain)?;
        let n = psi.cutoff();
        let lf = LogFactorials::new(2 * n + 1);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut v = DVector::from_element(n, ZERO);
            for m in 0..n - k {
                let c = amp_coefficient(&lf, self.gain, m, k);
                if adjoint {
                    v[m] = psi.amplitudes[m + k] * c;
                } else {
                    v[m + k] = psi.amplitudes[m] * c;
                }
            }
            out.push((1.0, v));
        }
        Ok(out)
    }
}

impl FockChannel for AmpChannel {
    fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        apply_amp(rho, self.gain)
    }

    fn images(&self, input: &FockVector) -> Option<Result<Images>> {
        Some(self.kraus(input, false))
    }

    fn adjoint_images(&self, target: &FockVector) -> Option<Result<Images>> {
        Some(self.kraus(target, true))
    }
}

/// Random displacement `ρ ↦ ∫ N(t; 0, C) D(ξ_t) ρ D(ξ_t)† dt` with `ξ_t = (t₊ + i t₋)/√2`,
/// which adds `C` to the quadrature covariance. Integrated with Gauss–Hermite
/// nodes along the principal axes of `C`.
#[derive(Debug, Clone)]
pub struct DisplacementNoise {
    nodes: Vec<(Complex64, f64)>,
}

impl DisplacementNoise {
    pub const DEFAULT_POINTS: usize = 40;

    pub fn new(covariance: Matrix2<f64>, points: usize) -> Result<Self> {
        let eig = covariance.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| !v.is_finite() || v < -1e-12) {
            return Err(Error::InvalidInput(
                "noise covariance must be positive semidefinite".into(),
            ));
        }
        let gh = ensembles::hermite(points);
        let norm = std::f64::consts::PI.sqrt();
        let axis = |i: usize| -> Vec<(Vector2<f64>, f64)> {
            let var = eig.eigenvalues[i].max(0.0);
            if var <= 1e-15 {
                return vec![(Vector2::zeros(), 1.0)];
            }
            let dir: Vector2<f64> = eig.eigenvectors.column(i).into();
            gh.iter()
                .map(|&(x, w)| (dir * ((2.0 * var).sqrt() * x), w / norm))
                .collect()
        };
        let (a0, a1) = (axis(0), axis(1));
        let mut nodes = Vec::with_capacity(a0.len() * a1.len());
        for (t0, w0) in &a0 {
            for (t1, w1) in &a1 {
                let t = t0 + t1;
                let xi = Complex64::new(t[0], t[1]) / std::f64::consts::SQRT_2;
                nodes.push((xi, w0 * w1));
            }
        }
        Ok(Self { nodes })
    }

    pub fn is_trivial(&self) -> bool {
        self.nodes.len() == 1 && self.nodes[0].0 == ZERO
    }

    fn shifted(&self, psi: &FockVector, sign: f64) -> Images {
        let n = psi.cutoff();
        self.nodes
            .iter()
            .map(|&(xi, w)| (w, displacement_matrix(xi * sign, n) * &psi.amplitudes))
            .collect()
    }
}

impl FockChannel for DisplacementNoise {
    fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        check_density_input(rho)?;
        let n = rho.cutoff();
        let mut out = DMatrix::from_element(n, n, ZERO);
        for &(xi, w) in &self.nodes {
            let d = displacement_matrix(xi, n);
            out += (&d * &rho.matrix * d.adjoint()) * Complex64::new(w, 0.0);
        }
        FockOperator::new(out)
    }

    fn images(&self, input: &FockVector) -> Option<Result<Images>> {
        Some(Ok(self.shifted(input, 1.0)))
    }

    fn adjoint_images(&self, target: &FockVector) -> Option<Result<Images>> {
        Some(Ok(self.shifted(target, -1.0)))
    }
}

/// Sequential composition, first stage applied first.
pub struct ComposedChannel {
    pub stages: Vec<Box<dyn FockChannel + Send>>,
}

impl ComposedChannel {
    fn forward(&self, stages: &[Box<dyn FockChannel + Send>], input: &FockVector) -> Option<Result<Images>> {
        let mut current = vec![(1.0, input.amplitudes.clone())];
        for stage in stages {
            let mut next = Vec::new();
            for (w, v) in current {
                let ket = FockVector {
                    amplitudes: v,
                    truncated_weight: 0.0,
                };
                match stage.images(&ket)? {
                    Ok(imgs) => next.extend(imgs.into_iter().map(|(u, x)| (w * u, x))),
                    Err(e) => return Some(Err(e)),
                }
            }
            current = next;
        }
        Some(Ok(current))
    }
}

impl FockChannel for ComposedChannel {
    fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        let mut cur = rho.clone();
        for stage in &self.stages {
            cur = stage.apply(&cur)?;
        }
        Ok(cur)
    }

    fn images(&self, input: &FockVector) -> Option<Result<Images>> {
        self.forward(&self.stages, input)
    }

    /// Pushes the input forward through all but the last stage and pulls the
    /// target back through the last one, which keeps the image count at the
    /// product of two stages rather than all of them.
    fn fidelity_on_pure(&self, input: &FockVector, target: &FockVector) -> Result<f64> {
        check_cutoffs(input.cutoff(), target.cutoff())?;
        let Some((last, init)) = self.stages.split_last() else {
            return Ok(input.inner(target)?.norm_sqr());
        };
        if let (Some(fwd), Some(back)) = (self.forward(init, input), last.adjoint_images(target)) {
            let (fwd, back) = (fwd?, back?);
            let mut total = 0.0;
            for (wb, b) in &back {
                for (wf, f) in &fwd {
                    total += wb * wf * b.dotc(f).norm_sqr();
                }
            }
            return Ok(total.clamp(0.0, 1.0));
        }
        let out = self.apply(&input.outer())?;
        Ok(out.fidelity_pure(target)?.value)
    }
}

/// Heterodyne measure-and-prepare: outcome `β` with density `⟨β|ρ|β⟩/π`, then
/// preparation of `|gβ⟩`.
///
/// The outcome integral uses a tensor Gauss–Hermite rule centred on the input's
/// mean amplitude, with the width of a Husimi function of the input's
/// covariance.
#[derive(Debug, Clone, Copy)]
pub struct MeasurePrepareChannel {
    pub gain: f64,
    pub points: usize,
}

/// Largest admissible gap between the outcome-rule mass and the input trace.
pub const MP_RULE_TOLERANCE: f64 = 1e-4;

impl MeasurePrepareChannel {
    pub const DEFAULT_POINTS: usize = 40;

    pub fn new(gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "preparation gain must be >= 0, got {gain}"
            )));
        }
        Ok(Self {
            gain,
            points: Self::DEFAULT_POINTS,
        })
    }

    /// Outcome grid matched to `rho`.
    pub fn outcome_grid(&self, rho: &FockOperator) -> OutcomeGrid {
        let moments = rho.quadrature_moments();
        // Husimi covariance is γ + E/2; σ² is twice its mean per-component variance
        OutcomeGrid {
            center: crate::gaussian::QuadConvention::amplitude_of(&moments.d),
            sigma: (0.5 * (moments.gamma.trace() + 1.0)).max(1.0).sqrt(),
            points: self.points,
        }
    }

    /// Outcomes `βᵢ` with their probabilities `⟨βᵢ|ρ|βᵢ⟩/π` folded into the
    /// grid weights.
    pub fn outcomes(&self, rho: &FockOperator, grid: &OutcomeGrid) -> Result<Vec<(Complex64, f64)>> {
        check_density_input(rho)?;
        if !(grid.sigma.is_finite() && grid.sigma > 0.0) || grid.points == 0 {
            return Err(Error::InvalidInput(
                "outcome grid needs sigma > 0 and points > 0".into(),
            ));
        }
        let n = rho.cutoff();
        let pi = std::f64::consts::PI;
        let s2 = grid.sigma * grid.sigma;
        let rule = ensembles::complex_normal_rule(grid.center, grid.sigma, grid.points);
        let mut out = Vec::with_capacity(rule.len());
        let mut mass = 0.0;
        for (beta, w) in rule.iter() {
            let ket = FockVector::coherent_unchecked(beta, n);
            let q = ket.amplitudes.dotc(&(&rho.matrix * &ket.amplitudes)).re / pi;
            let density = (-(beta - grid.center).norm_sqr() / s2).exp() / (pi * s2);
            let p = w * q / density;
            mass += p;
            out.push((beta, p));
        }
        let deficit = (rho.trace() - mass).abs();
        if deficit > MP_RULE_TOLERANCE {
            return Err(Error::Convergence {
                value: mass,
                error: deficit,
                bound: MP_RULE_TOLERANCE,
            });
        }
        Ok(out)
    }

    fn prepared(&self, outcomes: &[(Complex64, f64)], n: usize) -> Images {
        outcomes
            .iter()
            .map(|&(beta, p)| (p, FockVector::coherent_unchecked(beta * self.gain, n).amplitudes))
            .collect()
    }
}

/// Tensor Gauss–Hermite grid for the outcome `β`, built for the density
/// `exp(−|β − center|²/σ²)/(πσ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeGrid {
    pub center: Complex64,
    pub sigma: f64,
    pub points: usize,
}

/// `Σᵢ pᵢ |gβᵢ⟩⟨gβᵢ|` over `grid`, or over a grid matched to `rho` when `grid`
/// is `None`.
pub fn apply_mp_fock(
    scheme: &MeasurePrepareChannel,
    rho: &FockOperator,
    grid: Option<&OutcomeGrid>,
) -> Result<FockOperator> {
    let grid = grid.copied().unwrap_or_else(|| scheme.outcome_grid(rho));
    let outcomes = scheme.outcomes(rho, &grid)?;
    Ok(images_to_operator(
        &scheme.prepared(&outcomes, rho.cutoff()),
        rho.cutoff(),
    ))
}

impl FockChannel for MeasurePrepareChannel {
    fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        apply_mp_fock(self, rho, None)
    }

    fn images(&self, input: &FockVector) -> Option<Result<Images>> {
        let rho = input.outer();
        let grid = self.outcome_grid(&rho);
        Some(self.outcomes(&rho, &grid).map(|o| self.prepared(&o, input.cutoff())))
    }
}

/// Settings for [`average_fidelity_fock`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FockAverageConfig {
    pub radial: usize,
    pub angular: usize,
    /// Companion resolution whose result bounds the quadrature error.
    pub check_radial: usize,
    pub check_angular: usize,
    /// Fixed cutoff, or `None` to select one from the nodes.
    pub cutoff: Option<usize>,
    pub max_cutoff: usize,
    /// Largest truncated weight accepted for input and target kets.
    pub truncation_tolerance: f64,
    /// Nodes lighter than this are dropped; their weight joins the error estimate.
    pub negligible_weight: f64,
    /// Fail with a convergence error when the estimate exceeds this.
    pub max_error: Option<f64>,
}

impl Default for FockAverageConfig {
    fn default() -> Self {
        Self {
            radial: ensembles::DEFAULT_RADIAL,
            angular: ensembles::DEFAULT_ANGULAR,
            check_radial: 2 * ensembles::DEFAULT_RADIAL,
            check_angular: 2 * ensembles::DEFAULT_ANGULAR,
            cutoff: None,
            max_cutoff: 600,
            truncation_tolerance: 1e-10,
            negligible_weight: 1e-12,
            max_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FockAverage {
    pub value: f64,
    pub error_estimate: f64,
    pub check_value: f64,
    pub cutoff: usize,
    pub nodes: usize,
    pub dropped_weight: f64,
    pub max_truncated_weight: f64,
}

/// Smallest cutoff at which every coherent ket with `|α|² ≤ max_abs_sqr` keeps
/// all but `tolerance` of its weight.
pub fn select_cutoff(max_abs_sqr: f64, tolerance: f64, max_cutoff: usize) -> Result<usize> {
    let probe = Complex64::new(max_abs_sqr.max(0.0).sqrt(), 0.0);
    let weight = |c: usize| FockVector::coherent_unchecked(probe, c).truncated_weight;
    if weight(max_cutoff) > tolerance {
        return Err(Error::CutoffTooSmall {
            cutoff: max_cutoff,
            truncated_weight: weight(max_cutoff),
            tolerance,
        });
    }
    // the truncated weight decreases with the cutoff
    let (mut lo, mut hi) = (1, max_cutoff);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if weight(mid) <= tolerance {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

struct RuleAverage {
    value: f64,
    dropped: f64,
    max_trunc: f64,
    nodes: usize,
}

fn average_over_rule(
    channel: &dyn FockChannel,
    eta: f64,
    rule: &QuadratureRule,
    negligible: f64,
    cutoff: usize,
    tolerance: f64,
) -> Result<RuleAverage> {
    let (rule, dropped) = rule.without_negligible(negligible);
    let sqrt_eta = eta.sqrt();
    let per_node: Vec<Result<(f64, f64)>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(&alpha, &w)| {
            let input = FockVector::coherent_within(alpha, cutoff, tolerance)?;
            let target = FockVector::coherent_within(alpha * sqrt_eta, cutoff, tolerance)?;
            let f = channel.fidelity_on_pure(&input, &target)?;
            Ok((w * f, input.truncated_weight.max(target.truncated_weight)))
        })
        .collect();
    let mut value = 0.0;
    let mut max_trunc: f64 = 0.0;
    for r in per_node {
        let (wf, t) = r?;
        value += wf;
        max_trunc = max_trunc.max(t);
    }
    Ok(RuleAverage {
        value,
        dropped,
        max_trunc,
        nodes: rule.len(),
    })
}

/// Prior-averaged fidelity `∫ p(α) ⟨√η α| E(|α⟩⟨α|) |√η α⟩ d²α` computed in
/// Fock space, with an error estimate combining the difference to the companion
/// rule, the dropped node weight and the ket truncation.
pub fn average_fidelity_fock(
    channel: &dyn FockChannel,
    eta: f64,
    lambda: f64,
    config: &FockAverageConfig,
) -> Result<FockAverage> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let prior = GaussianPrior::new(lambda)?;
    let rule = ensembles::radial_rule(&prior, config.radial, config.angular);
    let check = ensembles::radial_rule(&prior, config.check_radial, config.check_angular);
    let cutoff = match config.cutoff {
        Some(c) => c,
        None => {
            let reach = |r: &QuadratureRule| r.without_negligible(config.negligible_weight).0.max_abs_sqr();
            let m = reach(&rule).max(reach(&check)) * eta.max(1.0);
            select_cutoff(m, config.truncation_tolerance, config.max_cutoff)?
        }
    };
    let main = average_over_rule(
        channel,
        eta,
        &rule,
        config.negligible_weight,
        cutoff,
        config.truncation_tolerance,
    )?;
    let companion = average_over_rule(
        channel,
        eta,
        &check,
        config.negligible_weight,
        cutoff,
        config.truncation_tolerance,
    )?;
    let error_estimate = (main.value - companion.value).abs()
        + main.dropped.max(companion.dropped)
        + 2.0 * main.max_trunc.max(companion.max_trunc);
    if let Some(bound) = config.max_error {
        if error_estimate > bound {
            return Err(Error::Convergence {
                value: main.value,
                error: error_estimate,
                bound,
            });
        }
    }
    Ok(FockAverage {
        value: main.value,
        error_estimate,
        check_value: companion.value,
        cutoff,
        nodes: main.nodes,
        dropped_weight: main.dropped,
        max_truncated_weight: main.max_trunc.max(companion.max_trunc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn coherent_examples() {
        let vac = FockVector::coherent(c(0.0, 0.0), 5).unwrap();
        assert_eq!(vac.amplitudes[0], c(1.0, 0.0));
        assert!(vac.amplitudes.iter().skip(1).all(|a| *a == ZERO));

        let a = FockVector::coherent(c(1.0, 0.0), 40).unwrap();
        let b = FockVector::coherent(c(0.0, 0.0), 40).unwrap();
        assert_abs_diff_eq!(a.inner(&b).unwrap().norm_sqr(), (-1.0f64).exp(), epsilon = 1e-12);

        let a = FockVector::coherent(c(1.0, 1.0), 60).unwrap();
        assert_abs_diff_eq!(a.mean_number(), 2.0, epsilon = 1e-10);
        assert!(a.truncated_weight < 1e-15);
    }

    #[test]
    fn coherent_guards() {
        assert!(matches!(
            FockVector::coherent(c(5.0, 0.0), 10),
            Err(Error::CutoffTooSmall { .. })
        ));
        assert!(FockVector::coherent(c(1.0, 0.0), 0).is_err());
        let err = FockVector::coherent_within(c(2.5, 0.0), 10, 1e-10).unwrap_err();
        assert!(matches!(err, Error::CutoffTooSmall { .. }));
        let v = FockVector::coherent(c(2.5, 0.0), 10).unwrap();
        assert!(v.truncated_weight > 1e-3);
    }

    #[test]
    fn coherent_overlap_rule() {
        let pairs = [(c(0.3, -0.7), c(1.1, 0.4)), (c(-1.5, 0.2), c(-1.0, -1.0))];
        for (a, b) in pairs {
            let va = FockVector::coherent(a, 50).unwrap();
            let vb = FockVector::coherent(b, 50).unwrap();
            assert_abs_diff_eq!(
                va.inner(&vb).unwrap().norm_sqr(),
                (-(a - b).norm_sqr()).exp(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn thermal_examples() {
        let rho = thermal_state(&ThermalSpec::new(1e6).unwrap(), 10);
        assert_abs_diff_eq!(rho.matrix[(0, 0)].re, 1.0, epsilon = 1e-5);
        let rho = thermal_state(&ThermalSpec::new(1.0).unwrap(), 50);
        assert_abs_diff_eq!(rho.matrix[(0, 0)].re, 0.5);
        assert_abs_diff_eq!(rho.matrix[(1, 1)].re, 0.25);
        let rho = thermal_state(&ThermalSpec::new(0.2).unwrap(), 200);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-10);
        assert!(ThermalSpec::new(0.0).is_err());
    }

    #[test]
    fn fidelity_pure_examples() {
        let vac = FockVector::number_state(0, 20).unwrap();
        assert_eq!(vac.outer().fidelity_pure(&vac).unwrap().value, 1.0);
        let beta = FockVector::coherent(c(1.0, 0.0), 20).unwrap();
        assert_abs_diff_eq!(
            vac.outer().fidelity_pure(&beta).unwrap().value,
            (-1.0f64).exp(),
            epsilon = 1e-12
        );
        let th = thermal_state(&ThermalSpec::new(1.0).unwrap(), 20);
        assert_abs_diff_eq!(th.fidelity_pure(&vac).unwrap().value, 0.5);
        let other = FockVector::number_state(0, 21).unwrap();
        assert!(th.fidelity_pure(&other).is_err());
    }

    #[test]
    fn loss_examples() {
        let alpha = FockVector::coherent(c(1.0, 0.0), 40).unwrap();
        let rho = alpha.outer();
        assert!(max_diff(&apply_loss(&rho, 1.0).unwrap().matrix, &rho.matrix) < 1e-15);

        let out = apply_loss(&rho, 0.5).unwrap();
        let target = FockVector::coherent(c(0.5f64.sqrt(), 0.0), 40).unwrap();
        assert_abs_diff_eq!(out.fidelity_pure(&target).unwrap().value, 1.0, epsilon = 1e-8);

        let vac = FockVector::number_state(0, 10).unwrap().outer();
        assert!(max_diff(&apply_loss(&vac, 0.3).unwrap().matrix, &vac.matrix) < 1e-15);

        assert!(apply_loss(&vac, 0.0).is_err());
        assert!(apply_loss(&vac, 1.2).is_err());
    }

    #[test]
    fn amp_examples() {
        let alpha = FockVector::coherent(c(0.5, 0.0), 60).unwrap();
        assert!(max_diff(&apply_amp(&alpha.outer(), 1.0).unwrap().matrix, &alpha.outer().matrix) < 1e-15);
        let out = apply_amp(&alpha.outer(), 2.0).unwrap();
        assert_abs_diff_eq!(out.mean_amplitude().re, 2f64.sqrt() * 0.5, epsilon = 1e-6);

        let vac = FockVector::number_state(0, 60).unwrap().outer();
        let out = apply_amp(&vac, 2.0).unwrap();
        assert_abs_diff_eq!(out.mean_number(), 1.0, epsilon = 1e-6);
        assert!(apply_amp(&vac, 0.9).is_err());
    }

    #[test]
    fn trace_preserved_up_to_reported_deficit() {
        let alpha = FockVector::coherent(c(1.2, -0.4), 50).unwrap();
        let rho = alpha.outer();
        for out in [apply_loss(&rho, 0.37).unwrap(), apply_amp(&rho, 1.8).unwrap()] {
            out.validate_density(1e-8).unwrap();
            assert!(out.deficit() >= -1e-12);
        }
        // a small cutoff makes the amplifier lose visible weight, which is reported
        let small = FockVector::coherent(c(1.2, -0.4), 8).unwrap().outer();
        let out = apply_amp(&small, 3.0).unwrap();
        assert!(out.deficit() > 1e-3);
    }

    #[test]
    fn pure_fast_paths_match_density_route() {
        let input = FockVector::coherent(c(0.8, 0.3), 40).unwrap();
        let target = FockVector::coherent(c(0.5, 0.1), 40).unwrap();
        let channels: Vec<Box<dyn FockChannel>> = vec![
            Box::new(LossChannel { transmission: 0.6 }),
            Box::new(AmpChannel { gain: 1.7 }),
            Box::new(DisplacementNoise::new(Matrix2::new(0.5, 0.0, 0.0, 0.0), 30).unwrap()),
            Box::new(DisplacementNoise::new(Matrix2::new(0.3, 0.1, 0.1, 0.2), 16).unwrap()),
        ];
        for ch in &channels {
            let slow = ch.apply(&input.outer()).unwrap().fidelity_pure(&target).unwrap().value;
            let fast = ch.fidelity_on_pure(&input, &target).unwrap();
            assert_abs_diff_eq!(slow, fast, epsilon = 1e-12);
        }
    }

    #[test]
    fn displacement_matrix_is_unitary_and_displaces() {
        for (xi, n) in [(c(1.3, -0.8), 120), (c(5.8, -1.0), 240), (c(-3.0, 9.0), 400)] {
            let d = displacement_matrix(xi, n);
            // columns whose displaced support still fits below the cutoff
            let block = ((n as f64).sqrt() - xi.norm() - 5.0).powi(2) as usize;
            assert!(block >= 5);
            let dd = d.adjoint() * &d;
            for i in 0..block {
                for j in 0..block {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dd[(i, j)] - expected).norm() < 1e-11, "{xi} ({i},{j}) {}", dd[(i, j)]);
                }
            }
            let shifted = d.column(0).into_owned();
            let coh = FockVector::coherent(xi, n).unwrap();
            assert_abs_diff_eq!(coh.amplitudes.dotc(&shifted).norm(), 1.0, epsilon = 1e-12);
            // D(ξ)|β⟩ = e^{i Im(ξβ*)} |ξ + β⟩
            let beta = c(0.4, 0.9);
            let moved = &d * FockVector::coherent(beta, n).unwrap().amplitudes;
            let expected = FockVector::coherent(xi + beta, n).unwrap();
            assert_abs_diff_eq!(expected.amplitudes.dotc(&moved).norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn displacement_noise_adds_covariance() {
        let cov = Matrix2::new(0.5, 0.0, 0.0, 0.0);
        let ch = DisplacementNoise::new(cov, DisplacementNoise::DEFAULT_POINTS).unwrap();
        let rho = FockVector::coherent(c(0.4, 0.2), 50).unwrap().outer();
        let m = ch.apply(&rho).unwrap().quadrature_moments();
        assert_abs_diff_eq!(m.gamma, Matrix2::new(1.0, 0.0, 0.0, 0.5), epsilon = 1e-9);
        assert_abs_diff_eq!(m.d, Vector2::new(0.4, 0.2) * 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn coherent_moments_match_convention() {
        let alpha = c(0.7, -1.1);
        let rho = FockVector::coherent(alpha, 8 * (1 + alpha.norm_sqr().ceil() as usize))
            .unwrap()
            .outer();
        let m = rho.quadrature_moments();
        let expected = GaussianState::coherent(alpha);
        assert_abs_diff_eq!(m.d, expected.d, epsilon = 1e-10);
        assert_abs_diff_eq!(m.gamma, expected.gamma, epsilon = 1e-10);
    }

    #[test]
    fn characteristic_function_matches_gaussian_form() {
        let alpha = c(1.0, 0.0);
        let rho = FockVector::coherent(alpha, 60).unwrap().outer();
        let state = GaussianState::coherent(alpha);
        for z in [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(-0.4, 0.9),
        ] {
            let fock = rho.characteristic_function(&z);
            let exact = crate::gaussian::characteristic_function(&state, &z);
            assert!((fock - exact).norm() < 1e-10, "z={z:?}: {fock} vs {exact}");
        }
    }

    #[test]
    fn average_examples() {
        let config = FockAverageConfig {
            radial: 6,
            angular: 8,
            check_radial: 8,
            check_angular: 8,
            ..Default::default()
        };
        let id = average_fidelity_fock(&IdentityChannel, 1.0, 0.7, &config).unwrap();
        assert_abs_diff_eq!(id.value, 1.0, epsilon = 1e-8);

        let loss = average_fidelity_fock(&LossChannel { transmission: 0.5 }, 0.5, 0.2, &config).unwrap();
        assert_abs_diff_eq!(loss.value, 1.0, epsilon = 1e-6);
        assert!(loss.error_estimate < 1e-6);

        assert!(average_fidelity_fock(&IdentityChannel, 1.0, 0.0, &config).is_err());
    }

    #[test]
    fn average_reports_convergence_failure() {
        // identity channel on the task η = 0.5 has an integrand that the
        // two-point rule resolves poorly at small λ
        let config = FockAverageConfig {
            radial: 2,
            angular: 4,
            check_radial: 3,
            check_angular: 4,
            max_error: Some(1e-12),
            ..Default::default()
        };
        let err = average_fidelity_fock(&IdentityChannel, 0.5, 0.05, &config).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }), "{err}");
    }

    #[test]
    fn operator_dump_is_row_major_pairs() {
        let mut rho = FockOperator::zeros(2);
        rho.matrix[(0, 1)] = c(0.25, -0.5);
        let json = rho.to_json();
        assert_eq!(
            json,
            r#"{"cutoff":2,"data":[[[0.0,0.0],[0.25,-0.5]],[[0.0,0.0],[0.0,0.0]]]}"#
        );
    }

    #[test]
    fn mp_examples() {
        let mp = MeasurePrepareChannel::new(1.0).unwrap();
        let alpha = c(0.6, -0.3);
        let out = mp.apply(&FockVector::coherent(alpha, 50).unwrap().outer()).unwrap();
        assert!((out.mean_amplitude() - alpha).norm() < 1e-6);
        assert!(out.deficit().abs() < 1e-6);

        let out = mp.apply(&FockVector::number_state(0, 50).unwrap().outer()).unwrap();
        assert_abs_diff_eq!(out.mean_number(), 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(
            out.quadrature_moments().gamma,
            Matrix2::identity() * 1.5,
            epsilon = 1e-5
        );
        assert!(MeasurePrepareChannel::new(-0.1).is_err());
    }

    #[test]
    fn mp_narrow_grid_is_reported() {
        let mp = MeasurePrepareChannel::new(1.0).unwrap();
        let rho = FockVector::coherent(c(1.0, 0.0), 40).unwrap().outer();
        let grid = OutcomeGrid {
            center: c(0.0, 0.0),
            sigma: 0.2,
            points: 4,
        };
        assert!(matches!(
            apply_mp_fock(&mp, &rho, Some(&grid)),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn composed_fast_path_matches_density_route() {
        let input = FockVector::coherent(c(0.4, 0.7), 40).unwrap();
        let target = FockVector::coherent(c(0.3, 0.6), 40).unwrap();
        let stages: Vec<Vec<Box<dyn FockChannel + Send>>> = vec![
            vec![
                Box::new(LossChannel { transmission: 0.5 }),
                Box::new(AmpChannel { gain: 2.0 }),
            ],
            vec![
                Box::new(AmpChannel { gain: 1.4 }),
                Box::new(DisplacementNoise::new(Matrix2::identity() * 0.2, 12).unwrap()),
            ],
            vec![
                Box::new(MeasurePrepareChannel::new(0.8).unwrap()),
                Box::new(LossChannel { transmission: 0.9 }),
            ],
        ];
        for st in stages {
            let ch = ComposedChannel { stages: st };
            let slow = ch.apply(&input.outer()).unwrap().fidelity_pure(&target).unwrap().value;
            let fast = ch.fidelity_on_pure(&input, &target).unwrap();
            assert_abs_diff_eq!(slow, fast, epsilon = 1e-10);
        }
    }

    #[test]
    fn cutoff_selection_is_minimal() {
        let c = select_cutoff(9.0, 1e-10, 500).unwrap();
        let probe = |n| FockVector::coherent_unchecked(Complex64::new(3.0, 0.0), n).truncated_weight;
        assert!(probe(c) <= 1e-10 && probe(c - 1) > 1e-10);
        assert!(matches!(
            select_cutoff(400.0, 1e-10, 100),
            Err(Error::CutoffTooSmall { .. })
        ));
    }
}
