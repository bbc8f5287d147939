//! Quantum-domain verdicts from fidelities, from quadrature records and for
//! Gaussian channels.

use std::collections::HashMap;
use std::io::Read;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{classical_bound, classical_fidelity, quadrature_threshold, TaskSpec};
use crate::ensembles::rng_for;
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianChannel, GaussianState, CHECK_TOL};
use crate::schemes::ChannelModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadLabel {
    Plus,
    Minus,
}

impl QuadLabel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plus" => Some(Self::Plus),
            "minus" => Some(Self::Minus),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Plus => "plus",
            Self::Minus => "minus",
        }
    }

    /// The component of `α` whose scaled value `√2 α±` is the input quadrature mean.
    fn component(self, alpha: Complex64) -> f64 {
        match self {
            Self::Plus => alpha.re,
            Self::Minus => alpha.im,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRecord {
    pub alpha: Complex64,
    pub quad_label: QuadLabel,
    pub samples: Vec<f64>,
}

impl QuadratureRecord {
    fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Mean squared deviation about `center`.
    fn mean_square_about(&self, center: f64) -> f64 {
        self.samples.iter().map(|x| (x - center).powi(2)).sum::<f64>() / self.samples.len() as f64
    }
}

/// Records grouped by input amplitude: `(alpha, plus record index, minus record index)`.
type AlphaGroups = Vec<(Complex64, usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    pub records: Vec<QuadratureRecord>,
    pub lambda: f64,
    pub eta_declared: Option<f64>,
    /// One weight per distinct amplitude, in order of first appearance.
    pub weights: Option<Vec<f64>>,
}

impl ExperimentDataset {
    pub fn new(records: Vec<QuadratureRecord>, lambda: f64) -> Result<Self> {
        let ds = Self {
            records: merge_records(records),
            lambda,
            eta_declared: None,
            weights: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        self.eta_declared = Some(eta);
        self.validate()?;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidDataset(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if let Some(eta) = self.eta_declared {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidDataset(format!(
                    "declared eta must be positive, got {eta}"
                )));
            }
        }
        for r in &self.records {
            if r.samples.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "record at alpha {} has no samples",
                    r.alpha
                )));
            }
            if r.samples.iter().any(|x| !x.is_finite()) || !(r.alpha.re.is_finite() && r.alpha.im.is_finite()) {
                return Err(Error::InvalidDataset("non-finite value in records".into()));
            }
        }
        let groups = self.groups()?;
        if let Some(w) = &self.weights {
            if w.len() != groups.len() {
                return Err(Error::InvalidDataset(format!(
                    "{} weights for {} amplitudes",
                    w.len(),
                    groups.len()
                )));
            }
            if w.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(Error::InvalidDataset("weights must be positive".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDataset(format!("weights sum to {total}, not 1")));
            }
        }
        Ok(())
    }

    fn groups(&self) -> Result<AlphaGroups> {
        let mut order: Vec<Complex64> = Vec::new();
        let mut slots: HashMap<(u64, u64), (Option<usize>, Option<usize>)> = HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let key = (r.alpha.re.to_bits(), r.alpha.im.to_bits());
            let slot = slots.entry(key).or_insert_with(|| {
                order.push(r.alpha);
                (None, None)
            });
            match r.quad_label {
                QuadLabel::Plus => slot.0 = Some(i),
                QuadLabel::Minus => slot.1 = Some(i),
            }
        }
        if order.is_empty() {
            return Err(Error::InvalidDataset("dataset has no records".into()));
        }
        order
            .into_iter()
            .map(|a| match slots[&(a.re.to_bits(), a.im.to_bits())] {
                (Some(p), Some(m)) => Ok((a, p, m)),
                (None, _) => Err(Error::InvalidDataset(format!("alpha {a} has no plus record"))),
                (_, None) => Err(Error::InvalidDataset(format!("alpha {a} has no minus record"))),
            })
            .collect()
    }

    /// Distinct input amplitudes in order of first appearance.
    pub fn alphas(&self) -> Result<Vec<Complex64>> {
        Ok(self.groups()?.into_iter().map(|g| g.0).collect())
    }

    /// Explicit weights, or `p(αᵢ)` renormalized over the tested amplitudes.
    pub fn effective_weights(&self) -> Result<Vec<f64>> {
        if let Some(w) = &self.weights {
            return Ok(w.clone());
        }
        let raw: Vec<f64> = self
            .alphas()?
            .iter()
            .map(|a| (-self.lambda * a.norm_sqr()).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidDataset(
                "prior weights underflow on the tested amplitudes".into(),
            ));
        }
        Ok(raw.into_iter().map(|w| w / total).collect())
    }

    pub fn sample_count(&self) -> usize {
        self.records.iter().map(|r| r.samples.len()).sum()
    }

    /// CSV in the ingest format, one sample per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha_re,alpha_im,quad_label,value\n");
        for r in &self.records {
            for x in &r.samples {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    r.alpha.re,
                    r.alpha.im,
                    r.quad_label.as_str(),
                    x
                ));
            }
        }
        out
    }
}

/// Joins records that share amplitude and label, keeping first-appearance order.
fn merge_records(records: Vec<QuadratureRecord>) -> Vec<QuadratureRecord> {
    let mut index: HashMap<(u64, u64, QuadLabel), usize> = HashMap::new();
    let mut out: Vec<QuadratureRecord> = Vec::new();
    for r in records {
        let key = (r.alpha.re.to_bits(), r.alpha.im.to_bits(), r.quad_label);
        match index.get(&key) {
            Some(&i) => out[i].samples.extend(r.samples),
            None => {
                index.insert(key, out.len());
                out.push(r);
            }
        }
    }
    out
}

pub const CSV_HEADER: [&str; 4] = ["alpha_re", "alpha_im", "quad_label", "value"];

/// Parses the ingest CSV. Errors carry the 1-based line number.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<QuadratureRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CSV_HEADER {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header {}, got {}", CSV_HEADER.join(","), names.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Csv { line, message };
        let num = |i: usize, name: &str| -> Result<f64> {
            let text = row[i].trim();
            let v: f64 = text
                .parse()
                .map_err(|_| bad(format!("{name} is not a number: {text:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{name} is not finite")))
            }
        };
        let (re, im) = (num(0, "alpha_re")?, num(1, "alpha_im")?);
        let label = row[2].trim();
        let quad_label = QuadLabel::parse(label).ok_or_else(|| {
            bad(if label.is_empty() {
                "missing quad_label".into()
            } else {
                format!("quad_label must be plus or minus, got {label:?}")
            })
        })?;
        let value = num(3, "value")?;
        records.push(QuadratureRecord {
            alpha: Complex64::new(re, im),
            quad_label,
            samples: vec![value],
        });
    }
    if records.is_empty() {
        return Err(Error::Csv {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(merge_records(records))
}

/// `count` amplitudes on two rings of radius `0.5/√λ` and `1/√λ`, alternating,
/// at equally spaced phases.
pub fn alpha_grid(lambda: f64, count: usize) -> Result<Vec<Complex64>> {
    if !(lambda.is_finite() && lambda > 0.0) || count < 3 {
        return Err(Error::InvalidInput(
            "alpha grid needs lambda > 0 and at least 3 points".into(),
        ));
    }
    let scale = lambda.sqrt().recip();
    Ok((0..count)
        .map(|k| {
            let r = if k % 2 == 0 { 0.5 } else { 1.0 } * scale;
            Complex64::from_polar(r, 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64)
        })
        .collect())
}

/// Homodyne records of `channel` acting on each `|α⟩`: samples drawn from the
/// marginals of the Gaussian output state.
pub fn synthesize_dataset(
    channel: &GaussianChannel,
    alphas: &[Complex64],
    samples_per_record: usize,
    lambda: f64,
    seed: u64,
) -> Result<ExperimentDataset> {
    if samples_per_record == 0 {
        return Err(Error::InvalidInput("need at least one sample per record".into()));
    }
    let mut records = Vec::with_capacity(2 * alphas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        let out = gaussian::apply_channel(channel, &GaussianState::coherent(alpha))?;
        for (j, label) in [QuadLabel::Plus, QuadLabel::Minus].into_iter().enumerate() {
            let normal =
                Normal::new(out.d[j], out.gamma[(j, j)].sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut rng = rng_for(seed, (2 * i + j) as u64);
            records.push(QuadratureRecord {
                alpha,
                quad_label: label,
                samples: (0..samples_per_record).map(|_| normal.sample(&mut rng)).collect(),
            });
        }
    }
    ExperimentDataset::new(records, lambda)
}

/// Least-squares gain through the origin: `s = Σ x ȳ / Σ x²` over all records,
/// with `x = √2 α±` and `ȳ` the record mean; returns `s²`.
pub fn estimate_gain(ds: &ExperimentDataset) -> Result<f64> {
    let groups = ds.groups()?;
    if groups.len() < 3 {
        return Err(Error::Estimation(format!(
            "need at least 3 distinct amplitudes, got {}",
            groups.len()
        )));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in &ds.records {
        let x = std::f64::consts::SQRT_2 * r.quad_label.component(r.alpha);
        sxy += x * r.mean();
        sxx += x * x;
    }
    if sxx <= 1e-12 {
        return Err(Error::Estimation("amplitudes carry no signal (all near zero)".into()));
    }
    let slope = sxy / sxx;
    if slope.is_nan() || slope <= 0.0 {
        return Err(Error::Estimation(format!("fitted slope {slope} is not positive")));
    }
    Ok(slope * slope)
}

fn delta_bar_from(groups: &AlphaGroups, weights: &[f64], eta: f64, records: &[QuadratureRecord]) -> f64 {
    let s = (2.0 * eta).sqrt();
    let v_bar: f64 = groups
        .iter()
        .zip(weights)
        .map(|(&(alpha, p, m), w)| {
            w * (records[p].mean_square_about(s * alpha.re) + records[m].mean_square_about(s * alpha.im))
        })
        .sum();
    v_bar - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyOptions {
    /// Standard errors by which the statistic must beat the bound.
    pub k: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            k: 3.0,
            bootstrap: 1000,
            seed: 0,
        }
    }
}

/// `δ̄ = Σᵢ wᵢ (V₊ + V₋)(αᵢ) − 1`, with `V±` the mean squared deviation of the
/// samples about `√(2η) α±`, and its bootstrap standard error.
pub fn delta_bar(ds: &ExperimentDataset, eta: f64, options: &CertifyOptions) -> Result<(f64, f64)> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    ds.validate()?;
    let groups = ds.groups()?;
    let weights = ds.effective_weights()?;
    let value = delta_bar_from(&groups, &weights, eta, &ds.records);
    if options.bootstrap < 2 {
        return Ok((value, 0.0));
    }
    let replicas: Vec<f64> = (0..options.bootstrap as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(options.seed, b);
            let resampled: Vec<QuadratureRecord> = ds
                .records
                .iter()
                .map(|r| {
                    let n = r.samples.len();
                    QuadratureRecord {
                        alpha: r.alpha,
                        quad_label: r.quad_label,
                        samples: (0..n).map(|_| r.samples[rng.random_range(0..n)]).collect(),
                    }
                })
                .collect();
            delta_bar_from(&groups, &weights, eta, &resampled)
        })
        .collect();
    let n = replicas.len() as f64;
    let mean = replicas.iter().sum::<f64>() / n;
    let var = replicas.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((value, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    QuantumDomain,
    NotCertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Variance,
    Fidelity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSource {
    Declared,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub method: Method,
    pub eta_used: f64,
    pub eta_source: EtaSource,
    pub eta_estimated: Option<f64>,
    pub lambda: f64,
    /// `δ̄` for the variance method, `F̄` for the fidelity method.
    pub statistic: f64,
    /// `2η/(1+λ+η)` or `F(η, λ)`.
    pub bound: f64,
    /// Amount by which the statistic beats the bound; positive is favourable.
    pub margin: f64,
    pub standard_error: f64,
    pub k: f64,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

/// Slack below which a margin counts as zero, so that a scheme sitting exactly
/// on the bound is never certified through rounding.
pub const MARGIN_TOL: f64 = 1e-12;

fn verdict(margin: f64, se: f64, k: f64) -> Verdict {
    if margin > k * se + MARGIN_TOL {
        Verdict::QuantumDomain
    } else {
        Verdict::NotCertified
    }
}

const GAIN_MISMATCH: f64 = 0.05;

fn resolve_eta(ds: &ExperimentDataset, eta: Option<f64>) -> Result<(f64, EtaSource, Option<f64>, Vec<String>)> {
    let declared = eta.or(ds.eta_declared);
    let estimated = estimate_gain(ds);
    let mut warnings = Vec::new();
    match (declared, estimated) {
        (Some(d), Ok(e)) => {
            if (e - d).abs() > GAIN_MISMATCH * d {
                warnings.push(format!(
                    "declared eta {d} differs from the estimated gain {e:.6} by more than {}%",
                    GAIN_MISMATCH * 100.0
                ));
            }
            Ok((d, EtaSource::Declared, Some(e), warnings))
        }
        (Some(d), Err(e)) => {
            warnings.push(format!("gain not estimable: {e}"));
            Ok((d, EtaSource::Declared, None, warnings))
        }
        (None, Ok(e)) => Ok((e, EtaSource::Estimated, Some(e), warnings)),
        (None, Err(e)) => Err(e),
    }
}

const GRID_NOTE: &str =
    "averages use weights over the tested amplitudes, which approximate the continuous prior average";

/// Verdict from the quadrature criterion `δ̄ < 2η/(1+λ+η)`.
pub fn certify_by_variance(
    ds: &ExperimentDataset,
    eta: Option<f64>,
    lambda: f64,
    options: &CertifyOptions,
) -> Result<CertificationReport> {
    let (eta_used, eta_source, eta_estimated, warnings) = resolve_eta(ds, eta)?;
    let bound = quadrature_threshold(&TaskSpec::new(eta_used, lambda)?)?;
    let (statistic, se) = delta_bar(ds, eta_used, options)?;
    let margin = bound - statistic;
    Ok(CertificationReport {
        method: Method::Variance,
        eta_used,
        eta_source,
        eta_estimated,
        lambda,
        statistic,
        bound,
        margin,
        standard_error: se,
        k: options.k,
        verdict: verdict(margin, se, options.k),
        warnings,
        notes: vec![GRID_NOTE.into()],
    })
}

/// Verdict from the fidelity criterion on recorded data, using the lower
/// bound `F̄ ≥ 1 − δ̄/2` that holds for every state.
pub fn certify_by_fidelity_data(
    ds: &ExperimentDataset,
    eta: Option<f64>,
    lambda: f64,
    options: &CertifyOptions,
) -> Result<CertificationReport> {
    let (eta_used, eta_source, eta_estimated, warnings) = resolve_eta(ds, eta)?;
    let bound = classical_bound(&TaskSpec::new(eta_used, lambda)?);
    let (delta, se) = delta_bar(ds, eta_used, options)?;
    let statistic = 1.0 - delta / 2.0;
    let margin = statistic - bound;
    Ok(CertificationReport {
        method: Method::Fidelity,
        eta_used,
        eta_source,
        eta_estimated,
        lambda,
        statistic,
        bound,
        margin,
        standard_error: se / 2.0,
        k: options.k,
        verdict: verdict(margin, se / 2.0, options.k),
        warnings,
        notes: vec![
            GRID_NOTE.into(),
            "statistic is the lower bound 1 - delta_bar/2 on the average fidelity".into(),
        ],
    })
}

/// Verdict for a known average fidelity `f` with standard error `se`.
pub fn certify_fidelity_value(f: f64, se: f64, eta: f64, lambda: f64, k: f64) -> Result<CertificationReport> {
    if !(0.0..=1.0).contains(&f) || !(se.is_finite() && se >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "fidelity {f} with error {se} is out of range"
        )));
    }
    let bound = classical_bound(&TaskSpec::new(eta, lambda)?);
    let margin = f - bound;
    Ok(CertificationReport {
        method: Method::Fidelity,
        eta_used: eta,
        eta_source: EtaSource::Declared,
        eta_estimated: None,
        lambda,
        statistic: f,
        bound,
        margin,
        standard_error: se,
        k,
        verdict: verdict(margin, se, k),
        warnings: vec![],
        notes: vec![],
    })
}

/// Verdict for a channel model, with `F̄` from the closed-form Gaussian engine.
pub fn certify_by_fidelity(model: &ChannelModel, eta: f64, lambda: f64, k: f64) -> Result<CertificationReport> {
    let f = gaussian::average_fidelity_gaussian(&model.to_gaussian()?, eta, lambda)?;
    certify_fidelity_value(f, 0.0, eta, lambda, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum GaussianCase {
    /// `K = E`, `M` of rank one with trace 1/2.
    UnitGainOneQuadrature,
    /// `K = √η E`, `M = (ñ + |1 − η|/2) E`.
    Isotropic { ntilde: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianDetectionReport {
    pub case: GaussianCase,
    pub eta: f64,
    pub lambda: f64,
    pub fidelity: f64,
    pub bound: f64,
    pub margin: f64,
    /// Margin of the `λ → 0` limits, `F̄(0) − 1/(1 + η)`.
    pub flat_limit_margin: f64,
    pub quantum_domain_by_parameters: bool,
    pub detected: bool,
}

fn is_scalar_multiple_of_identity(m: &nalgebra::Matrix2<f64>) -> Option<f64> {
    let scale = 1.0 + m.abs().max();
    let tol = CHECK_TOL * scale;
    if (m[(0, 0)] - m[(1, 1)]).abs() <= tol && m[(0, 1)].abs() <= tol && m[(1, 0)].abs() <= tol {
        Some(0.5 * (m[(0, 0)] + m[(1, 1)]))
    } else {
        None
    }
}

/// Classifies `ch` into one of the two canonical families and tests whether
/// the fidelity criterion detects it at prior width `lambda`.
pub fn detect_gaussian_qd(ch: &GaussianChannel, lambda: f64) -> Result<GaussianDetectionReport> {
    if !gaussian::is_cp_channel(ch)? {
        return Err(Error::InvalidInput("channel is not completely positive".into()));
    }
    if ch.disp.norm() > CHECK_TOL {
        return Err(Error::Unsupported(
            "channels with a fixed displacement are not classified".into(),
        ));
    }
    let g = is_scalar_multiple_of_identity(&ch.k)
        .filter(|g| *g > 0.0)
        .ok_or_else(|| Error::Unsupported("only isotropic gains K = g E are classified".into()))?;
    let m = &ch.m;
    let (case, eta, flat_fidelity) =
        if (g - 1.0).abs() <= CHECK_TOL && m.determinant().abs() <= CHECK_TOL && (m.trace() - 0.5).abs() <= CHECK_TOL {
            (GaussianCase::UnitGainOneQuadrature, 1.0, (2.0f64 / 3.0).sqrt())
        } else if let Some(mv) = is_scalar_multiple_of_identity(m) {
            let eta = g * g;
            let ntilde = (mv - (1.0 - eta).abs() / 2.0).max(0.0);
            let flat = 2.0 / (1.0 + eta + (1.0 - eta).abs() + 2.0 * ntilde);
            (GaussianCase::Isotropic { ntilde }, eta, flat)
        } else {
            return Err(Error::Unsupported(
                "noise matrix is neither isotropic nor a unit-gain single-quadrature term".into(),
            ));
        };
    let quantum_domain_by_parameters = match case {
        GaussianCase::UnitGainOneQuadrature => true,
        // η and ñ are recovered from K and M, so the boundary carries rounding
        GaussianCase::Isotropic { ntilde } => ntilde < eta.min(1.0) - CHECK_TOL,
    };
    let fidelity = if lambda == 0.0 {
        flat_fidelity
    } else {
        gaussian::average_fidelity_gaussian(ch, eta, lambda)?
    };
    let bound = classical_fidelity(eta, lambda);
    let margin = fidelity - bound;
    Ok(GaussianDetectionReport {
        case,
        eta,
        lambda,
        fidelity,
        bound,
        margin,
        flat_limit_margin: flat_fidelity - 1.0 / (1.0 + eta),
        quantum_domain_by_parameters,
        detected: margin > MARGIN_TOL,
    })
}
