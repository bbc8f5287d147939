//! Concrete channel models, in Gaussian form and as Fock-space appliers, and
//! the heterodyne measure-and-prepare family.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensembles::QuadratureRule;
use crate::error::{Error, Result};
use crate::fock::{
    self, AmpChannel, ComposedChannel, DisplacementNoise, FockChannel, FockOperator, IdentityChannel, LossChannel,
    MeasurePrepareChannel, OutcomeGrid,
};
use crate::gaussian::{self, GaussianChannel};

/// Channel model as stored in JSON, e.g. `{"type": "pure_loss", "T": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModel {
    PureLoss {
        #[serde(rename = "T")]
        t: f64,
    },
    QuantumLimitedAmp {
        #[serde(rename = "G")]
        g: f64,
    },
    /// `K = E`, `M = diag(1/2, 0)`.
    CanonicalB1 {},
    /// `K = √η E`, `M = (ñ + |1 − η|/2) E`.
    CanonicalC { eta: f64, ntilde: f64 },
    #[serde(rename = "heterodyne_mp")]
    HeterodyneMp { g: f64 },
    /// Applied in list order.
    Compose { channels: Vec<ChannelModel> },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be non-negative, got {v}")))
    }
}

impl ChannelModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("channel model serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::PureLoss { t } => {
                positive("T", *t)?;
                if *t > 1.0 {
                    return Err(Error::InvalidInput(format!("T must not exceed 1, got {t}")));
                }
            }
            Self::QuantumLimitedAmp { g } => {
                if !(g.is_finite() && *g >= 1.0) {
                    return Err(Error::InvalidInput(format!("G must be >= 1, got {g}")));
                }
            }
            Self::CanonicalB1 {} => {}
            Self::CanonicalC { eta, ntilde } => {
                positive("eta", *eta)?;
                non_negative("ntilde", *ntilde)?;
            }
            Self::HeterodyneMp { g } => non_negative("g", *g)?,
            Self::Compose { channels } => {
                if channels.is_empty() {
                    return Err(Error::InvalidInput("compose needs at least one channel".into()));
                }
                channels.iter().try_for_each(Self::validate)?;
            }
        }
        Ok(())
    }

    pub fn to_gaussian(&self) -> Result<GaussianChannel> {
        self.validate()?;
        let e = Matrix2::identity();
        Ok(match *self {
            Self::PureLoss { t } => GaussianChannel::isotropic(t.sqrt(), (1.0 - t) / 2.0),
            Self::QuantumLimitedAmp { g } => GaussianChannel::isotropic(g.sqrt(), (g - 1.0) / 2.0),
            Self::CanonicalB1 {} => GaussianChannel::new(e, Matrix2::new(0.5, 0.0, 0.0, 0.0)),
            Self::CanonicalC { eta, ntilde } => {
                GaussianChannel::isotropic(eta.sqrt(), ntilde + (1.0 - eta).abs() / 2.0)
            }
            Self::HeterodyneMp { g } => GaussianChannel::isotropic(g, (1.0 + g * g) / 2.0),
            Self::Compose { ref channels } => {
                let mut acc = GaussianChannel::identity();
                for ch in channels {
                    acc = acc.then(&ch.to_gaussian()?);
                }
                // one square root for the whole chain instead of a product of roots
                if let Some(p) = self.power_gain() {
                    acc.k = e * p.sqrt();
                }
                acc
            }
        })
    }

    /// Intensity gain `K = √p E` for isotropic models, `None` otherwise.
    fn power_gain(&self) -> Option<f64> {
        match *self {
            Self::PureLoss { t } => Some(t),
            Self::QuantumLimitedAmp { g } => Some(g),
            Self::CanonicalB1 {} => None,
            Self::CanonicalC { eta, .. } => Some(eta),
            Self::HeterodyneMp { g } => Some(g * g),
            Self::Compose { ref channels } => channels.iter().map(Self::power_gain).product(),
        }
    }

    /// Whether the canonical parameters put the channel in the quantum domain:
    /// always for `CanonicalB1`, `ñ < min{1, η}` for `CanonicalC`. `None` for
    /// other models.
    pub fn quantum_domain_by_parameters(&self) -> Option<bool> {
        match *self {
            Self::CanonicalB1 {} => Some(true),
            Self::CanonicalC { eta, ntilde } => Some(ntilde < eta.min(1.0)),
            _ => None,
        }
    }

    /// Fock-space realization. Additive noise is integrated with `noise_points`
    /// Gauss–Hermite nodes per axis.
    pub fn to_fock(&self, noise_points: usize) -> Result<Box<dyn FockChannel + Send>> {
        self.validate()?;
        Ok(match *self {
            Self::PureLoss { t } => Box::new(LossChannel { transmission: t }),
            Self::QuantumLimitedAmp { g } => Box::new(AmpChannel { gain: g }),
            Self::CanonicalB1 {} => Box::new(DisplacementNoise::new(Matrix2::new(0.5, 0.0, 0.0, 0.0), noise_points)?),
            Self::CanonicalC { eta, ntilde } => {
                let gain: Box<dyn FockChannel + Send> = if eta <= 1.0 {
                    Box::new(LossChannel { transmission: eta })
                } else {
                    Box::new(AmpChannel { gain: eta })
                };
                if ntilde == 0.0 {
                    gain
                } else {
                    let noise = DisplacementNoise::new(Matrix2::identity() * ntilde, noise_points)?;
                    Box::new(ComposedChannel {
                        stages: vec![gain, Box::new(noise)],
                    })
                }
            }
            Self::HeterodyneMp { g } => Box::new(MeasurePrepareChannel::new(g)?),
            Self::Compose { ref channels } => {
                let stages = channels
                    .iter()
                    .map(|c| c.to_fock(noise_points))
                    .collect::<Result<Vec<_>>>()?;
                if stages.is_empty() {
                    Box::new(IdentityChannel)
                } else {
                    Box::new(ComposedChannel { stages })
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneMPScheme {
    pub g: f64,
}

impl HeterodyneMPScheme {
    pub fn new(g: f64) -> Result<Self> {
        non_negative("g", g)?;
        Ok(Self { g })
    }

    pub fn model(&self) -> ChannelModel {
        ChannelModel::HeterodyneMp { g: self.g }
    }
}

/// Applies the scheme to a Fock-space density operator; see
/// [`fock::apply_mp_fock`].
pub fn apply_mp_fock(
    scheme: &HeterodyneMPScheme,
    rho: &FockOperator,
    grid: Option<&OutcomeGrid>,
) -> Result<FockOperator> {
    fock::apply_mp_fock(&MeasurePrepareChannel::new(scheme.g)?, rho, grid)
}

/// `√η / (1 + λ)`.
pub fn optimal_mp_gain(eta: f64, lambda: f64) -> f64 {
    eta.sqrt() / (1.0 + lambda)
}

/// `D(g) = λ(1 + g²) + (g − √η)²`, the denominator of the heterodyne family's
/// average fidelity `λ / D(g)`.
fn mp_denominator(g: f64, eta: f64, lambda: f64) -> f64 {
    let d = g - eta.sqrt();
    lambda * (1.0 + g * g) + d * d
}

/// Average fidelity of the heterodyne scheme with re-preparation gain `g`.
/// At `λ = 0` this is the flat-prior limit: `1/(1 + η)` at `g = √η`, zero otherwise.
pub fn mp_average_fidelity(g: f64, eta: f64, lambda: f64) -> Result<f64> {
    non_negative("g", g)?;
    positive("eta", eta)?;
    non_negative("lambda", lambda)?;
    if lambda == 0.0 {
        return Ok(if g == eta.sqrt() { 1.0 / (1.0 + eta) } else { 0.0 });
    }
    let d = mp_denominator(g, eta, lambda);
    debug_assert!(d > 0.0);
    Ok(lambda / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpOptimum {
    pub gain: f64,
    pub fidelity: f64,
}

pub const MIN_GRID_POINTS: usize = 1000;

/// Grid search of `mp_average_fidelity` over `g ∈ [0, 3√η]`, refined by golden
/// section to `1e-10` in `g`.
///
/// Near the maximum the fidelity is flat to rounding, so the refinement
/// compares candidates through the exact difference
/// `D(a) − D(b) = (a − b)[(1 + λ)(a + b) − 2√η]` instead of subtracting
/// fidelity values.
pub fn optimize_mp_gain(eta: f64, lambda: f64, grid_points: usize) -> Result<MpOptimum> {
    positive("eta", eta)?;
    positive("lambda", lambda)?;
    if grid_points < MIN_GRID_POINTS {
        return Err(Error::InvalidInput(format!(
            "gain grid needs at least {MIN_GRID_POINTS} points, got {grid_points}"
        )));
    }
    let hi = 3.0 * eta.sqrt();
    let step = hi / (grid_points - 1) as f64;
    let mut best = 0;
    let mut best_f = f64::NEG_INFINITY;
    for i in 0..grid_points {
        let f = mp_average_fidelity(i as f64 * step, eta, lambda)?;
        if f > best_f {
            best_f = f;
            best = i;
        }
    }
    let (mut a, mut b) = (
        best.saturating_sub(1) as f64 * step,
        ((best + 1).min(grid_points - 1)) as f64 * step,
    );
    // true when D(x) < D(y), i.e. x has the higher fidelity
    let better = |x: f64, y: f64| (x - y) * ((1.0 + lambda) * (x + y) - 2.0 * eta.sqrt()) < 0.0;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while b - a > 1e-10 {
        if better(c, d) {
            b = d;
            d = c;
            c = b - inv_phi * (b - a);
        } else {
            a = c;
            c = d;
            d = a + inv_phi * (b - a);
        }
    }
    let gain = 0.5 * (a + b);
    Ok(MpOptimum {
        gain,
        fidelity: mp_average_fidelity(gain, eta, lambda)?,
    })
}

/// Phase-space rotation `R(θ)` acting on `(x₊, x₋)`; maps `|α⟩` to `|e^{iθ}α⟩`.
pub fn rotation(theta: f64) -> GaussianChannel {
    let (s, c) = theta.sin_cos();
    GaussianChannel::new(Matrix2::new(c, -s, s, c), Matrix2::zeros())
}

/// Average fidelity of `channel` on the rotated task
/// `{|e^{iθ_in} α⟩} → {|e^{iθ_out} √η α⟩}`, evaluated over `rule`.
///
/// The classical boundary is the same for every such task; this is the
/// invariance check used for phase rotations only.
pub fn rotated_task_fidelity(
    channel: &GaussianChannel,
    eta: f64,
    theta_in: f64,
    theta_out: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    positive("eta", eta)?;
    let (pin, pout) = (
        Complex64::from_polar(1.0, theta_in),
        Complex64::from_polar(1.0, theta_out),
    );
    rule.try_average(|alpha| {
        let input = gaussian::GaussianState::coherent(alpha * pin);
        let out = gaussian::apply_channel(channel, &input)?;
        Ok(gaussian::fidelity_to_coherent(&out, alpha * pout * eta.sqrt()))
    })
}

/// The optimal heterodyne scheme conjugated by phase rotations, which solves
/// the rotated task as well as the plain scheme solves the plain one.
pub fn rotated_optimal_mp(eta: f64, lambda: f64, theta_in: f64, theta_out: f64) -> GaussianChannel {
    let g = optimal_mp_gain(eta, lambda);
    let mp = GaussianChannel::isotropic(g, (1.0 + g * g) / 2.0);
    rotation(-theta_in).then(&mp).then(&rotation(theta_out))
}
