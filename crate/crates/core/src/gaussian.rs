//! Exact calculus of one-mode Gaussian states and channels.
//!
//! Quadratures are `x+ = (a + a†)/√2` and `x- = (a - a†)/(√2 i)`, so the vacuum
//! covariance is `E/2` and a coherent state `|α⟩` has mean `√2 (Re α, Im α)`.
//! A channel `(K, M, c)` maps `d ↦ K d + c` and `γ ↦ K γ Kᵀ + M`.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensembles::QuadratureRule;
use crate::error::{ensure_finite, Error, Result};

/// Absolute tolerance used by the symmetry, positivity and uncertainty checks.
pub const CHECK_TOL: f64 = 1e-12;

/// Fixed conventions of the quadrature representation.
#[derive(Debug, Clone, Copy)]
pub struct QuadConvention;

impl QuadConvention {
    pub const VACUUM_VARIANCE: f64 = 0.5;

    pub fn vacuum_covariance() -> Matrix2<f64> {
        Matrix2::identity() * Self::VACUUM_VARIANCE
    }

    /// `(⟨α|x+|α⟩, ⟨α|x-|α⟩)`.
    pub fn coherent_mean(alpha: Complex64) -> Vector2<f64> {
        Vector2::new(alpha.re, alpha.im) * std::f64::consts::SQRT_2
    }

    /// Inverse of [`QuadConvention::coherent_mean`].
    pub fn amplitude_of(d: &Vector2<f64>) -> Complex64 {
        Complex64::new(d[0], d[1]) / std::f64::consts::SQRT_2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianState {
    #[serde(with = "vec2_serde")]
    pub d: Vector2<f64>,
    #[serde(with = "mat2_serde")]
    pub gamma: Matrix2<f64>,
}

impl GaussianState {
    pub fn new(d: Vector2<f64>, gamma: Matrix2<f64>) -> Result<Self> {
        ensure_finite("mean", d.as_slice())?;
        if !is_physical_state(&gamma)? {
            return Err(Error::InvalidInput(format!(
                "covariance {gamma:?} violates the uncertainty relation"
            )));
        }
        Ok(Self { d, gamma })
    }

    pub fn vacuum() -> Self {
        Self::coherent(Complex64::new(0.0, 0.0))
    }

    pub fn coherent(alpha: Complex64) -> Self {
        Self {
            d: QuadConvention::coherent_mean(alpha),
            gamma: QuadConvention::vacuum_covariance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianChannel {
    #[serde(rename = "K", with = "mat2_serde")]
    pub k: Matrix2<f64>,
    #[serde(rename = "M", with = "mat2_serde")]
    pub m: Matrix2<f64>,
    #[serde(default = "Vector2::zeros", with = "vec2_serde")]
    pub disp: Vector2<f64>,
}

impl GaussianChannel {
    pub fn new(k: Matrix2<f64>, m: Matrix2<f64>) -> Self {
        Self {
            k,
            m,
            disp: Vector2::zeros(),
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix2::identity(), Matrix2::zeros())
    }

    /// `K = g E`, `M = m E`.
    pub fn isotropic(g: f64, m: f64) -> Self {
        Self::new(Matrix2::identity() * g, Matrix2::identity() * m)
    }

    /// The channel that applies `self` first and `then` second.
    pub fn then(&self, then: &GaussianChannel) -> GaussianChannel {
        compose(then, self)
    }

    /// `Some(g)` when `K = g E` within tolerance.
    pub fn isotropic_gain(&self) -> Option<f64> {
        let k = &self.k;
        let g = k[(0, 0)];
        let iso = (k[(1, 1)] - g).abs() <= CHECK_TOL * (1.0 + g.abs())
            && k[(0, 1)].abs() <= CHECK_TOL
            && k[(1, 0)].abs() <= CHECK_TOL;
        iso.then_some(g)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("channel serializes")
    }

    fn check_finite(&self) -> Result<()> {
        ensure_finite("K", self.k.as_slice())?;
        ensure_finite("M", self.m.as_slice())?;
        ensure_finite("disp", self.disp.as_slice())
    }
}

fn is_symmetric(a: &Matrix2<f64>) -> bool {
    (a[(0, 1)] - a[(1, 0)]).abs() <= CHECK_TOL
}

/// `γ ≥ (i/2)Δ`, which for a symmetric 2×2 matrix is `γ > 0` and `det γ ≥ 1/4`.
pub fn is_physical_state(gamma: &Matrix2<f64>) -> Result<bool> {
    ensure_finite("gamma", gamma.as_slice())?;
    Ok(is_symmetric(gamma) && gamma[(0, 0)] > 0.0 && gamma[(1, 1)] > 0.0 && gamma.determinant() >= 0.25 - CHECK_TOL)
}

/// `M ≥ (i/2)(Δ − K Δ Kᵀ)`. Since `K Δ Kᵀ = (det K) Δ` for 2×2 matrices this
/// is `M ⪰ 0` together with `√det M ≥ |det K − 1| / 2`.
pub fn is_cp_channel(ch: &GaussianChannel) -> Result<bool> {
    ch.check_finite()?;
    let m = &ch.m;
    if !is_symmetric(m) {
        return Ok(false);
    }
    let det_m = m.determinant();
    let psd = m[(0, 0)] >= -CHECK_TOL && m[(1, 1)] >= -CHECK_TOL && det_m >= -CHECK_TOL;
    if !psd {
        return Ok(false);
    }
    let needed = (ch.k.determinant() - 1.0).abs() / 2.0;
    Ok(det_m.max(0.0).sqrt() >= needed - CHECK_TOL)
}

/// `compose(second, first)` applies `first` then `second`.
pub fn compose(second: &GaussianChannel, first: &GaussianChannel) -> GaussianChannel {
    GaussianChannel {
        k: second.k * first.k,
        m: second.k * first.m * second.k.transpose() + second.m,
        disp: second.k * first.disp + second.disp,
    }
}

pub fn apply_channel(ch: &GaussianChannel, s: &GaussianState) -> Result<GaussianState> {
    if !is_cp_channel(ch)? {
        return Err(Error::InvalidInput("channel is not completely positive".into()));
    }
    if !is_physical_state(&s.gamma)? {
        return Err(Error::InvalidInput("input covariance is unphysical".into()));
    }
    ensure_finite("mean", s.d.as_slice())?;
    Ok(GaussianState {
        d: ch.k * s.d + ch.disp,
        gamma: ch.k * s.gamma * ch.k.transpose() + ch.m,
    })
}

/// `φ(z) = exp(i dᵀz − zᵀγz / 2)`.
pub fn characteristic_function(s: &GaussianState, z: &Vector2<f64>) -> Complex64 {
    let phase = s.d.dot(z);
    let damping = 0.5 * (z.transpose() * s.gamma * z)[(0, 0)];
    Complex64::from_polar((-damping).exp(), phase)
}

/// `⟨β|ρ|β⟩` for a Gaussian `ρ`.
pub fn fidelity_to_coherent(s: &GaussianState, beta: Complex64) -> f64 {
    let sum = QuadConvention::vacuum_covariance() + s.gamma;
    let delta = s.d - QuadConvention::coherent_mean(beta);
    let det = sum.determinant();
    let inv = sum.try_inverse().expect("γ_c + γ is positive definite");
    let quad = (delta.transpose() * inv * delta)[(0, 0)];
    (det.powf(-0.5) * (-0.5 * quad).exp()).clamp(0.0, 1.0)
}

/// Prior-averaged fidelity of `ch` for the task `|α⟩ → |√η α⟩`, `p(α) = (λ/π) e^{−λ|α|²}`.
///
/// With `L = K − √η E` the mismatch `δ(α) = L d_α + c` is Gaussian with covariance
/// `L Lᵀ / λ`, so the average of the coherent overlap is
/// `det(B)^{−1/2} exp(−cᵀ B⁻¹ c / 2)` with `B = γ_c + γ′ + L Lᵀ / λ`.
/// For `K = √η E` the `λ`-dependence drops out; otherwise the `λ → 0` limit is zero.
pub fn average_fidelity_gaussian(ch: &GaussianChannel, eta: f64, lambda: f64) -> Result<f64> {
    if !is_cp_channel(ch)? {
        return Err(Error::InvalidInput("channel is not completely positive".into()));
    }
    check_task(eta, lambda)?;
    let vac = QuadConvention::vacuum_covariance();
    let out_cov = ch.k * vac * ch.k.transpose() + ch.m;
    let mismatch = ch.k - Matrix2::identity() * eta.sqrt();
    let matched = mismatch.iter().all(|v| v.abs() <= CHECK_TOL);

    let mut b = vac + out_cov;
    if !matched {
        if lambda == 0.0 {
            // the mismatch covariance grows without bound, so the overlap vanishes
            return Ok(0.0);
        }
        b += mismatch * mismatch.transpose() / lambda;
    }
    let inv = b
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular fidelity kernel".into()))?;
    let c = ch.disp;
    let quad = (c.transpose() * inv * c)[(0, 0)];
    Ok((b.determinant().powf(-0.5) * (-0.5 * quad).exp()).clamp(0.0, 1.0))
}

/// Same average evaluated by summing the coherent overlap over the nodes of `rule`.
pub fn average_fidelity_by_rule(ch: &GaussianChannel, eta: f64, rule: &QuadratureRule) -> Result<f64> {
    if !is_cp_channel(ch)? {
        return Err(Error::InvalidInput("channel is not completely positive".into()));
    }
    let sqrt_eta = eta.sqrt();
    rule.try_average(|alpha| {
        let out = apply_channel(ch, &GaussianState::coherent(alpha))?;
        Ok(fidelity_to_coherent(&out, alpha * sqrt_eta))
    })
}

pub(crate) fn check_task(eta: f64, lambda: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    Ok(())
}

pub(crate) mod mat2_serde {
    use nalgebra::Matrix2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix2<f64>, s: S) -> Result<S::Ok, S::Error> {
        [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix2<f64>, D::Error> {
        let rows = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok(Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]))
    }
}

pub(crate) mod vec2_serde {
    use nalgebra::Vector2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector2<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v[0], v[1]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector2<f64>, D::Error> {
        let v = <[f64; 2]>::deserialize(d)?;
        Ok(Vector2::new(v[0], v[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(a: f64, b: f64) -> Matrix2<f64> {
        Matrix2::new(a, 0.0, 0.0, b)
    }

    fn canonical_i() -> GaussianChannel {
        GaussianChannel::new(Matrix2::identity(), diag(0.5, 0.0))
    }

    fn canonical_ii(eta: f64, ntilde: f64) -> GaussianChannel {
        GaussianChannel::isotropic(eta.sqrt(), ntilde + (1.0 - eta).abs() / 2.0)
    }

    #[test]
    fn vacuum_covariance_determinant() {
        assert_abs_diff_eq!(QuadConvention::vacuum_covariance().determinant(), 0.25);
    }

    #[test]
    fn physical_state_examples() {
        assert!(is_physical_state(&diag(0.5, 0.5)).unwrap());
        assert!(!is_physical_state(&diag(0.25, 0.25)).unwrap());
        assert!(is_physical_state(&diag(1.5, 1.0)).unwrap());
        assert!(!is_physical_state(&Matrix2::new(1.0, 0.2, 0.0, 1.0)).unwrap());
        assert!(is_physical_state(&diag(f64::NAN, 1.0)).is_err());
    }

    #[test]
    fn cp_examples() {
        assert!(is_cp_channel(&GaussianChannel::identity()).unwrap());
        assert!(!is_cp_channel(&GaussianChannel::isotropic(2f64.sqrt(), 0.0)).unwrap());
        assert!(is_cp_channel(&canonical_ii(0.5, 0.2)).unwrap());
        assert!(is_cp_channel(&canonical_i()).unwrap());
        let mut bad = GaussianChannel::identity();
        bad.k[(0, 1)] = f64::INFINITY;
        assert!(is_cp_channel(&bad).is_err());
    }

    #[test]
    fn apply_examples() {
        let vac = GaussianState::vacuum();
        assert_eq!(apply_channel(&GaussianChannel::identity(), &vac).unwrap(), vac);

        let out = apply_channel(&canonical_i(), &vac).unwrap();
        assert_abs_diff_eq!(out.gamma, diag(1.0, 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(out.d, Vector2::zeros());

        let loss = GaussianChannel::isotropic(0.5f64.sqrt(), 0.25);
        let out = apply_channel(&loss, &GaussianState::coherent(Complex64::new(1.0, 0.0))).unwrap();
        assert_abs_diff_eq!(out.d, Vector2::new(1.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(out.gamma, diag(0.5, 0.5), epsilon = 1e-15);

        let unphysical = GaussianChannel::isotropic(2.0, 0.0);
        assert!(apply_channel(&unphysical, &vac).is_err());
    }

    #[test]
    fn characteristic_function_examples() {
        let vac = GaussianState::vacuum();
        assert_abs_diff_eq!(characteristic_function(&vac, &Vector2::zeros()).re, 1.0);
        let v = characteristic_function(&vac, &Vector2::new(1.0, 0.0));
        assert_abs_diff_eq!(v.re, (-0.25f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0);
        let coh = GaussianState::coherent(Complex64::new(1.0, 0.0));
        let v = characteristic_function(&coh, &Vector2::new(0.0, 1.0));
        // d = (√2, 0) so dᵀz = 0 for z = (0, 1)
        assert_abs_diff_eq!(v.re, (-0.25f64).exp(), epsilon = 1e-15);
        let v = characteristic_function(&coh, &Vector2::new(1.0, 0.0));
        let expected = Complex64::from_polar((-0.25f64).exp(), 2f64.sqrt());
        assert_abs_diff_eq!(v.re, expected.re, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, expected.im, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let vac = GaussianState::vacuum();
        assert_abs_diff_eq!(fidelity_to_coherent(&vac, Complex64::new(0.0, 0.0)), 1.0);
        assert_abs_diff_eq!(
            fidelity_to_coherent(&vac, Complex64::new(1.0, 0.0)),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        // thermal state with mean photon number 1/2: 1/(1 + n̄)
        let s = GaussianState::new(Vector2::zeros(), Matrix2::identity()).unwrap();
        assert_abs_diff_eq!(
            fidelity_to_coherent(&s, Complex64::new(0.0, 0.0)),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        // vacuum after one-quadrature noise of variance 1/2: det(γ + E/2) = 3/2
        let s = GaussianState::new(Vector2::zeros(), Matrix2::new(1.0, 0.0, 0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(
            fidelity_to_coherent(&s, Complex64::new(0.0, 0.0)),
            (2.0f64 / 3.0).sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn average_fidelity_examples() {
        let f = average_fidelity_gaussian(&canonical_i(), 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(f, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let f = average_fidelity_gaussian(&canonical_ii(0.5, 0.1), 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(f, 10.0 / 11.0, epsilon = 1e-14);
        let loss = GaussianChannel::isotropic(0.3f64.sqrt(), 0.35);
        for lambda in [0.0, 0.01, 1.0, 7.0] {
            assert_abs_diff_eq!(
                average_fidelity_gaussian(&loss, 0.3, lambda).unwrap(),
                1.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn flat_prior_with_gain_mismatch_vanishes() {
        assert_eq!(
            average_fidelity_gaussian(&GaussianChannel::identity(), 0.5, 0.0).unwrap(),
            0.0
        );
        let tiny = average_fidelity_gaussian(&GaussianChannel::identity(), 0.5, 1e-12).unwrap();
        assert!(tiny < 1e-10);
        assert!(average_fidelity_gaussian(&GaussianChannel::identity(), 0.5, 0.1).is_ok());
    }

    #[test]
    fn isotropic_closed_form_matches_scalar_formula() {
        // λ / (λ S + (g − √η)²) with S = 1/2 + g²/2 + m
        for &(g, m, eta, lambda) in &[(0.7, 0.6, 0.4, 0.3), (1.3, 0.5, 2.0, 0.05), (0.0, 0.5, 1.0, 1.0)] {
            let s = 0.5 + g * g / 2.0 + m;
            let expected = lambda / (lambda * s + (g - f64::sqrt(eta)).powi(2));
            let f = average_fidelity_gaussian(&GaussianChannel::isotropic(g, m), eta, lambda).unwrap();
            assert_abs_diff_eq!(f, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn matched_gain_is_lambda_independent() {
        let ch = canonical_ii(0.7, 0.3);
        let values: Vec<f64> = [0.01, 0.1, 1.0]
            .iter()
            .map(|&l| average_fidelity_gaussian(&ch, 0.7, l).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn json_layout_is_row_major() {
        let mut ch = GaussianChannel::new(Matrix2::new(1.0, 2.0, 3.0, 4.0), diag(5.0, 6.0));
        ch.disp = Vector2::new(0.5, -0.5);
        let json = ch.to_json();
        assert_eq!(
            json,
            r#"{"K":[[1.0,2.0],[3.0,4.0]],"M":[[5.0,0.0],[0.0,6.0]],"disp":[0.5,-0.5]}"#
        );
        assert_eq!(GaussianChannel::from_json(&json).unwrap(), ch);
        let no_disp = GaussianChannel::from_json(r#"{"K":[[1,0],[0,1]],"M":[[0,0],[0,0]]}"#).unwrap();
        assert_eq!(no_disp, GaussianChannel::identity());
        assert!(GaussianChannel::from_json(r#"{"K":[[1,0],[0,1]],"M":[[0,0],[0,0]],"x":1}"#).is_err());

        let s: GaussianState = serde_json::from_str(r#"{"d":[1,2],"gamma":[[1,0.1],[0.1,1]]}"#).unwrap();
        assert_eq!(s.gamma[(0, 1)], 0.1);
        assert_eq!(s.d[1], 2.0);
    }
}
