//! `cvbench` command line: bound tables, channel simulation, certification,
//! parameter sweeps and proof checks.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::bounds::{classical_bound, quadrature_threshold, quantum_amp_bound, TaskSpec};
use crate::certifier::{self, CertifyOptions, ExperimentDataset, Verdict};
use crate::error::Error;
use crate::fock::{average_fidelity_fock, FockAverageConfig};
use crate::gaussian::{self, GaussianChannel};
use crate::proofcheck::{self, CirculantSpec};
use crate::schemes::{mp_average_fidelity, ChannelModel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod exit {
    pub const OK: i32 = 0;
    /// NOT_CERTIFIED, or a failed proof check.
    pub const NEGATIVE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NOT_CP: i32 = 3;
    pub const BAD_CSV: i32 = 4;
    /// Engines disagree or a numerical method did not converge.
    pub const NUMERICS: i32 = 5;
}

/// Prior width used when a command given `--lambda 0` needs a quadrature.
pub const FLAT_PROXY_LAMBDA: f64 = 1e-3;
pub const MAX_SWEEP_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Gaussian,
    Fock,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CertifyMethod {
    Variance,
    Fidelity,
}

#[derive(Debug, Parser)]
#[command(
    name = "cvbench",
    version,
    about = "Fidelity benchmarks for coherent-state channels with non-unit gain"
)]
pub struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write output here (atomically) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Numerical tolerance; its meaning depends on the command.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// JSON file with defaults for any flag; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classical boundary, quadrature threshold and quantum amplifier optimum.
    Bound(BoundArgs),
    /// Average fidelity of a channel for a task.
    Simulate(SimulateArgs),
    /// Quantum-domain verdict from homodyne records.
    Certify(CertifyArgs),
    /// Cartesian parameter sweep written as a table.
    Sweep(SweepArgs),
    /// Numerical checks of the operator inequalities behind the bound.
    Proofcheck(ProofcheckArgs),
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    n_copies: Option<u32>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Channel JSON: a file path, or inline text starting with `{`.
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    engine: Option<Engine>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    radial: Option<usize>,
    #[arg(long)]
    angular: Option<usize>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<CertifyMethod>,
    /// Standard errors required between statistic and bound.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    /// JSON array of per-amplitude weights, in order of first appearance.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Grid JSON: a file path, or inline text starting with `{`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct ProofcheckArgs {
    /// Largest replica count for the circulant identities.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    /// Also run the two-replica identity.
    #[arg(long)]
    replica: bool,
    /// Replace the bound by 0.9 of itself; the run must then fail.
    #[arg(long)]
    self_test_corrupt: bool,
}

/// Contents of `--config`. Every key is optional; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    format: Option<Format>,
    out: Option<PathBuf>,
    tolerance: Option<f64>,
    eta: Option<f64>,
    lambda: Option<f64>,
    n_copies: Option<u32>,
    channel: Option<Value>,
    engine: Option<Engine>,
    cutoff: Option<usize>,
    radial: Option<usize>,
    angular: Option<usize>,
    csv: Option<PathBuf>,
    method: Option<CertifyMethod>,
    k: Option<f64>,
    bootstrap: Option<usize>,
    weights: Option<Vec<f64>>,
    grid: Option<Value>,
    p: Option<usize>,
    trials: Option<usize>,
    replica: Option<bool>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
    detail: Option<Value>,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: exit::USAGE,
            message: message.into(),
            detail: None,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Csv { .. } => exit::BAD_CSV,
            Error::Convergence { .. } | Error::CutoffTooSmall { .. } => exit::NUMERICS,
            _ => exit::USAGE,
        };
        Self {
            code,
            message: e.to_string(),
            detail: None,
        }
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Finished command output before formatting.
struct Outcome {
    command: &'static str,
    config: Value,
    result: Value,
    /// Table form for CSV output; `None` flattens `result` into one row.
    table: Option<(Vec<String>, Vec<Vec<Value>>)>,
    warnings: Vec<String>,
    code: i32,
}

fn need<T>(name: &str, v: Option<T>) -> CmdResult<T> {
    v.ok_or_else(|| Failure::usage(format!("missing required --{name}")))
}

fn read_source(text_or_path: &str) -> CmdResult<String> {
    if text_or_path.trim_start().starts_with('{') {
        Ok(text_or_path.to_string())
    } else {
        std::fs::read_to_string(text_or_path).map_err(|e| Failure::usage(format!("cannot read {text_or_path}: {e}")))
    }
}

fn value_source(flag: Option<String>, config: Option<Value>, name: &str) -> CmdResult<String> {
    match (flag, config) {
        (Some(f), _) => read_source(&f),
        (None, Some(Value::String(s))) => read_source(&s),
        (None, Some(v)) => Ok(v.to_string()),
        (None, None) => Err(Failure::usage(format!("missing required --{name}"))),
    }
}

fn cmd_bound(args: BoundArgs, cfg: &RunConfig) -> CmdResult<Outcome> {
    let eta = need("eta", args.eta.or(cfg.eta))?;
    let lambda = need("lambda", args.lambda.or(cfg.lambda))?;
    let n = args.n_copies.or(cfg.n_copies).unwrap_or(1);
    let task = TaskSpec::with_copies(eta, lambda, n)?;
    let result = json!({
        "eta": eta,
        "lambda": lambda,
        "n_copies": n,
        "classical_bound": classical_bound(&task),
        "quadrature_threshold": quadrature_threshold(&task).ok(),
        "quantum_amp_bound": quantum_amp_bound(eta).ok(),
    });
    Ok(Outcome {
        command: "bound",
        config: json!({"eta": eta, "lambda": lambda, "n_copies": n}),
        result,
        table: None,
        warnings: vec![],
        code: exit::OK,
    })
}

enum ChannelInput {
    Model(ChannelModel),
    Raw(GaussianChannel),
}

fn parse_channel(text: &str) -> CmdResult<ChannelInput> {
    let v: Value = serde_json::from_str(text).map_err(|e| Failure::usage(format!("channel JSON: {e}")))?;
    if v.get("type").is_some() {
        Ok(ChannelInput::Model(ChannelModel::from_json(text)?))
    } else {
        Ok(ChannelInput::Raw(GaussianChannel::from_json(text)?))
    }
}

fn cmd_simulate(args: SimulateArgs, cfg: &RunConfig, tolerance: Option<f64>) -> CmdResult<Outcome> {
    let text = value_source(args.channel, cfg.channel.clone(), "channel")?;
    let input = parse_channel(&text)?;
    let eta = need("eta", args.eta.or(cfg.eta))?;
    let lambda = need("lambda", args.lambda.or(cfg.lambda))?;
    let engine = args.engine.or(cfg.engine).unwrap_or(Engine::Gaussian);
    let tolerance = tolerance.unwrap_or(1e-3);
    let mut warnings = Vec::new();

    let (gaussian_form, model) = match &input {
        ChannelInput::Model(m) => (m.to_gaussian()?, Some(m.clone())),
        ChannelInput::Raw(ch) => (ch.clone(), None),
    };
    if !gaussian::is_cp_channel(&gaussian_form)? {
        return Err(Failure {
            code: exit::NOT_CP,
            message: "channel is not completely positive".into(),
            detail: Some(json!({"channel": serde_json::from_str::<Value>(&gaussian_form.to_json()).ok()})),
        });
    }
    let task = TaskSpec::new(eta, lambda)?;

    let gaussian_value = if matches!(engine, Engine::Gaussian | Engine::Both) {
        Some(gaussian::average_fidelity_gaussian(&gaussian_form, eta, lambda)?)
    } else {
        None
    };

    let mut fock_json = Value::Null;
    let mut fock_value = None;
    let mut fock_lambda = lambda;
    if matches!(engine, Engine::Fock | Engine::Both) {
        let Some(model) = &model else {
            return Err(Failure::usage(
                "the fock engine needs a channel model with a \"type\" field",
            ));
        };
        if lambda == 0.0 {
            fock_lambda = FLAT_PROXY_LAMBDA;
            warnings.push(format!(
                "lambda = 0 needs a quadrature in the fock engine; using lambda = {FLAT_PROXY_LAMBDA}"
            ));
        }
        let radial = args.radial.or(cfg.radial).unwrap_or(8);
        let angular = args.angular.or(cfg.angular).unwrap_or(8);
        let fcfg = FockAverageConfig {
            radial,
            angular,
            check_radial: radial + 4,
            check_angular: angular,
            cutoff: args.cutoff.or(cfg.cutoff),
            max_cutoff: 400,
            ..Default::default()
        };
        let channel = model.to_fock(40)?;
        let avg = average_fidelity_fock(channel.as_ref(), eta, fock_lambda, &fcfg).map_err(|e| {
            let hint = matches!(e, Error::CutoffTooSmall { .. });
            let mut f = Failure::from(e);
            if hint {
                f.message
                    .push_str("; the prior is too wide for the Fock engine, try a larger --lambda");
            }
            f
        })?;
        fock_value = Some(avg.value);
        fock_json = serde_json::to_value(&avg).expect("serializable");
    }

    let mut difference = None;
    if let (Some(g), Some(f)) = (gaussian_value, fock_value) {
        let gf = if fock_lambda == lambda {
            g
        } else {
            gaussian::average_fidelity_gaussian(&gaussian_form, eta, fock_lambda)?
        };
        let d = (gf - f).abs();
        difference = Some(d);
        if d > tolerance {
            return Err(Failure {
                code: exit::NUMERICS,
                message: format!("engines disagree by {d:.3e} (tolerance {tolerance:.1e})"),
                detail: Some(json!({"gaussian": gf, "fock": fock_json, "lambda": fock_lambda})),
            });
        }
    }
    let value = gaussian_value.or(fock_value).expect("an engine ran");
    let bound = classical_bound(&task);
    let result = json!({
        "channel": serde_json::from_str::<Value>(&gaussian_form.to_json()).expect("valid json"),
        "average_fidelity": value,
        "gaussian": gaussian_value,
        "fock": fock_json,
        "engine_difference": difference,
        "classical_bound": bound,
        "margin": value - bound,
    });
    let config = json!({
        "channel": serde_json::from_str::<Value>(&text).ok(),
        "eta": eta,
        "lambda": lambda,
        "engine": engine,
        "tolerance": tolerance,
    });
    Ok(Outcome {
        command: "simulate",
        config,
        result,
        table: None,
        warnings,
        code: exit::OK,
    })
}

fn cmd_certify(args: CertifyArgs, cfg: &RunConfig, seed: u64) -> CmdResult<Outcome> {
    let path = need("csv", args.csv.or(cfg.csv.clone()))?;
    let bytes = std::fs::read(&path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let lambda = need("lambda", args.lambda.or(cfg.lambda))?;
    let eta = args.eta.or(cfg.eta);
    let method = args.method.or(cfg.method).unwrap_or(CertifyMethod::Variance);
    let options = CertifyOptions {
        k: args.k.or(cfg.k).unwrap_or(3.0),
        bootstrap: args.bootstrap.or(cfg.bootstrap).unwrap_or(1000),
        seed,
    };
    let weights = match args.weights {
        Some(p) => Some(
            serde_json::from_str::<Vec<f64>>(&read_source(&p.to_string_lossy())?)
                .map_err(|e| Failure::usage(format!("weights JSON: {e}")))?,
        ),
        None => cfg.weights.clone(),
    };
    let mut ds = ExperimentDataset::new(certifier::parse_csv(bytes.as_slice())?, lambda)?;
    if let Some(w) = weights.clone() {
        ds = ds.with_weights(w)?;
    }
    let report = match method {
        CertifyMethod::Variance => certifier::certify_by_variance(&ds, eta, lambda, &options)?,
        CertifyMethod::Fidelity => certifier::certify_by_fidelity_data(&ds, eta, lambda, &options)?,
    };
    let code = match report.verdict {
        Verdict::QuantumDomain => exit::OK,
        Verdict::NotCertified => exit::NEGATIVE,
    };
    let mut result = serde_json::to_value(&report).expect("serializable");
    result["input_sha256"] = json!(digest);
    result["records"] = json!(ds.records.len());
    result["samples"] = json!(ds.sample_count());
    let config = json!({
        "csv": path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "eta": eta,
        "lambda": lambda,
        "method": method,
        "k": options.k,
        "bootstrap": options.bootstrap,
        "weights": weights,
    });
    Ok(Outcome {
        command: "certify",
        config,
        result,
        table: None,
        warnings: report.warnings.clone(),
        code,
    })
}

/// A list of values, or `{"start", "stop", "num"}` for an evenly spaced range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Axis {
    List(Vec<f64>),
    Range { start: f64, stop: f64, num: usize },
}

impl Axis {
    fn values(&self) -> CmdResult<Vec<f64>> {
        let v = match self {
            Axis::List(v) => v.clone(),
            Axis::Range { start, stop, num } => match num {
                0 => vec![],
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Failure::usage("sweep axes must be non-empty lists of finite numbers"));
        }
        Ok(v)
    }

    fn len(&self) -> usize {
        match self {
            Axis::List(v) => v.len(),
            Axis::Range { num, .. } => *num,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Grid {
    eta: Axis,
    lambda: Axis,
    g: Option<Axis>,
    ntilde: Option<Axis>,
}

fn opt_cell(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

fn cmd_sweep(args: SweepArgs, cfg: &RunConfig) -> CmdResult<Outcome> {
    let text = value_source(args.grid, cfg.grid.clone(), "grid")?;
    let grid: Grid = serde_json::from_str(&text).map_err(|e| Failure::usage(format!("grid JSON: {e}")))?;
    let size = [
        Some(&grid.eta),
        Some(&grid.lambda),
        grid.g.as_ref(),
        grid.ntilde.as_ref(),
    ]
    .into_iter()
    .flatten()
    .try_fold(1usize, |acc, a| acc.checked_mul(a.len()))
    .unwrap_or(usize::MAX);
    if size > MAX_SWEEP_POINTS {
        return Err(Failure::usage(format!(
            "grid has {size} points, more than {MAX_SWEEP_POINTS}; split it into several sweeps or use coarser axes"
        )));
    }
    let etas = grid.eta.values()?;
    let lambdas = grid.lambda.values()?;
    let gs = grid.g.as_ref().map(Axis::values).transpose()?;
    let ntildes = grid.ntilde.as_ref().map(Axis::values).transpose()?;

    let mut header: Vec<String> = vec!["eta".into(), "lambda".into()];
    if gs.is_some() {
        header.push("g".into());
    }
    if ntildes.is_some() {
        header.push("ntilde".into());
    }
    header.extend(["classical_bound", "quadrature_threshold"].map(String::from));
    if gs.is_some() {
        header.extend(["f_mp", "mp_margin"].map(String::from));
    }
    if ntildes.is_some() {
        header.extend(
            [
                "f_canonical_c",
                "detection_margin",
                "flat_limit_margin",
                "qd_by_parameters",
            ]
            .map(String::from),
        );
    }

    let g_axis: Vec<Option<f64>> = gs.map_or(vec![None], |v| v.into_iter().map(Some).collect());
    let n_axis: Vec<Option<f64>> = ntildes.map_or(vec![None], |v| v.into_iter().map(Some).collect());
    let mut rows = Vec::with_capacity(size);
    for &eta in &etas {
        for &lambda in &lambdas {
            let task = TaskSpec::new(eta, lambda)?;
            let bound = classical_bound(&task);
            for &g in &g_axis {
                for &nt in &n_axis {
                    let mut row = vec![json!(eta), json!(lambda)];
                    if let Some(g) = g {
                        row.push(json!(g));
                    }
                    if let Some(nt) = nt {
                        row.push(json!(nt));
                    }
                    row.push(json!(bound));
                    row.push(opt_cell(quadrature_threshold(&task).ok()));
                    if let Some(g) = g {
                        let f = mp_average_fidelity(g, eta, lambda)?;
                        row.push(json!(f));
                        row.push(json!(f - bound));
                    }
                    if let Some(nt) = nt {
                        let ch = ChannelModel::CanonicalC { eta, ntilde: nt }.to_gaussian()?;
                        let det = certifier::detect_gaussian_qd(&ch, lambda)?;
                        row.push(json!(det.fidelity));
                        row.push(json!(det.margin));
                        row.push(json!(det.flat_limit_margin));
                        row.push(json!(det.quantum_domain_by_parameters));
                    }
                    rows.push(row);
                }
            }
        }
    }
    let result = Value::Array(
        rows.iter()
            .map(|r| Value::Object(header.iter().cloned().zip(r.iter().cloned()).collect::<Map<_, _>>()))
            .collect(),
    );
    Ok(Outcome {
        command: "sweep",
        config: json!({"grid": serde_json::from_str::<Value>(&text).ok()}),
        result,
        table: Some((header, rows)),
        warnings: vec![],
        code: exit::OK,
    })
}

fn cmd_proofcheck(args: ProofcheckArgs, cfg: &RunConfig, seed: u64) -> CmdResult<Outcome> {
    use rand::Rng;

    let p_max = args.p.or(cfg.p).unwrap_or(8);
    let eta = args.eta.or(cfg.eta).unwrap_or(1.0);
    let mut lambda = args.lambda.or(cfg.lambda).unwrap_or(0.1);
    let trials = args.trials.or(cfg.trials).unwrap_or(200);
    let cutoff = args.cutoff.or(cfg.cutoff).unwrap_or(20);
    let replica = args.replica || cfg.replica.unwrap_or(false);
    let scale = if args.self_test_corrupt { 0.9 } else { 1.0 };
    let mut warnings = Vec::new();
    if p_max < 2 {
        return Err(Failure::usage("--p must be at least 2"));
    }
    if lambda == 0.0 {
        lambda = FLAT_PROXY_LAMBDA;
        warnings.push(format!(
            "lambda = 0 needs a quadrature; using lambda = {FLAT_PROXY_LAMBDA}"
        ));
    }

    let mut rng = crate::ensembles::rng_for(seed, u64::MAX);
    let mut circulant = Vec::new();
    for p in 2..=p_max {
        for _ in 0..20 {
            let (l, e) = (rng.random_range(0.01..3.0), rng.random_range(0.01..3.0));
            let spec = CirculantSpec::new(p, l, e)?;
            let chi = proofcheck::chi_eigenvalues(&spec);
            let det_err = proofcheck::determinant_identity_error(&spec);
            circulant.push((spec, det_err, chi));
        }
    }
    let circulant_pass = circulant
        .iter()
        .all(|(_, d, chi)| *d <= proofcheck::IDENTITY_TOL && chi.pass);
    let worst_circulant = circulant
        .iter()
        .filter(|(_, d, chi)| *d > proofcheck::IDENTITY_TOL || !chi.pass)
        .map(|(s, d, chi)| json!({"spec": s, "determinant_error": d, "chi": chi}))
        .next();
    let plus_form_odd_mismatches = circulant
        .iter()
        .filter(|(s, _, chi)| s.p % 2 == 1 && !chi.plus_form_matches)
        .count();

    let lemma = proofcheck::norm_lemma_check_scaled(trials, eta, lambda, cutoff, seed, scale)?;
    let saturation = proofcheck::saturation_scan(eta, lambda, cutoff, seed, scale)?;
    let mut all_pass = circulant_pass && lemma.pass && saturation.lemma.pass;

    let replica_json = if replica {
        let rule = proofcheck::replica_rule(lambda)?;
        let small = 8;
        let phis = vec![
            ("vacuum".to_string(), crate::fock::FockVector::number_state(0, small)?),
            (
                "one photon".to_string(),
                crate::fock::FockVector::number_state(1, small)?,
            ),
            ("random".to_string(), proofcheck::haar_vector(small, seed, 7)),
        ];
        let mut reports = Vec::new();
        for (label, phi) in phis {
            let r = proofcheck::replica_identity_check_p2(&phi, eta, lambda, &rule)?;
            all_pass &= r.pass;
            reports.push(json!({"phi": label, "report": r}));
        }
        Value::Array(reports)
    } else {
        Value::Null
    };

    let result = json!({
        "pass": all_pass,
        "circulant": {
            "instances": circulant.len(),
            "pass": circulant_pass,
            "max_determinant_error": circulant.iter().map(|c| c.1).fold(0.0, f64::max),
            "max_product_identity_error": circulant.iter().map(|c| c.2.product_identity_error).fold(0.0, f64::max),
            "plus_form_mismatches_odd_p": plus_form_odd_mismatches,
            "failure": worst_circulant,
        },
        "norm_lemma": lemma,
        "saturation": saturation,
        "replica": replica_json,
    });
    let config = json!({
        "p": p_max,
        "eta": eta,
        "lambda": lambda,
        "trials": trials,
        "cutoff": cutoff,
        "replica": replica,
        "self_test_corrupt": args.self_test_corrupt,
    });
    Ok(Outcome {
        command: "proofcheck",
        config,
        result,
        table: None,
        warnings,
        code: if all_pass { exit::OK } else { exit::NEGATIVE },
    })
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| format!("{x}")),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn render(o: &Outcome, format: Format, seed: u64) -> String {
    match format {
        Format::Json => {
            let doc = json!({
                "tool": "cvbench",
                "version": VERSION,
                "command": o.command,
                "seed": seed,
                "config": o.config,
                "result": o.result,
                "warnings": o.warnings,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
            s.push('\n');
            s
        }
        Format::Csv => {
            let (header, rows) = match &o.table {
                Some((h, r)) => (h.clone(), r.clone()),
                None => {
                    let mut cells = Vec::new();
                    flatten("", &o.result, &mut cells);
                    let (h, r): (Vec<String>, Vec<Value>) = cells.into_iter().unzip();
                    (h, vec![r])
                }
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).expect("in-memory write");
            for r in &rows {
                w.write_record(r.iter().map(csv_cell)).expect("in-memory write");
            }
            let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
            let mut s = format!(
                "# cvbench {VERSION} command={} seed={seed}\n# config={}\n",
                o.command, o.config
            );
            for warning in &o.warnings {
                s.push_str(&format!("# warning: {warning}\n"));
            }
            s.push_str(&body);
            s
        }
    }
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn load_config(path: &Path) -> CmdResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
}

fn execute(cli: Cli) -> CmdResult<(String, Option<PathBuf>, i32)> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let out = cli.out.clone().or(cfg.out.clone());
    let tolerance = cli.tolerance.or(cfg.tolerance);
    if let Some(t) = tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::usage("--tolerance must be positive"));
        }
    }
    let (outcome, default_format) = match cli.command {
        Command::Bound(a) => (cmd_bound(a, &cfg)?, Format::Json),
        Command::Simulate(a) => (cmd_simulate(a, &cfg, tolerance)?, Format::Json),
        Command::Certify(a) => (cmd_certify(a, &cfg, seed)?, Format::Json),
        Command::Sweep(a) => (cmd_sweep(a, &cfg)?, Format::Csv),
        Command::Proofcheck(a) => (cmd_proofcheck(a, &cfg, seed)?, Format::Json),
    };
    let format = cli.format.or(cfg.format).unwrap_or(default_format);
    Ok((render(&outcome, format, seed), out, outcome.code))
}

/// Runs the command line given by `args` (including the program name) and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(cli) {
        Ok((text, out, code)) => {
            let written = match out {
                Some(path) => write_atomic(&path, &text),
                None => std::io::stdout().write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return exit::USAGE;
            }
            code
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            if let Some(d) = f.detail {
                eprintln!("{}", serde_json::to_string_pretty(&d).expect("serializable"));
            }
            f.code
        }
    }
}
