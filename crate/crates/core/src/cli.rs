//! Command-line front end.
//!
//! Every command computes its outputs in memory and writes them, together
//! with a `manifest.txt`, in one pass at the end. If any write fails the
//! files written so far are removed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::baselines::{EmConfig, DEFAULT_EM_XI};
use crate::dictionary::{Dictionary, GramMatrix};
use crate::error::{invalid, CsdeError};
use crate::io::{self, fmt_f64, KeyValues};
use crate::simgen::{
    family_config, preset_params, run_replications, Channel, EstimatorSpec, ExperimentConfig,
    Family, ReplicationReport, RunOptions, Tuning,
};
use crate::solver::{
    empirical_moments, fit, kkt_check, FitOptions, Problem, Variant, VariantParams, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::theory::{diagnose, DiagnoseParams};
use crate::tuning::{tune, TuneConfig, DEFAULT_LAMBDA1_RANGE, DEFAULT_LAMBDA2_RANGE, DEFAULT_XI};
use crate::weights::{csde_weights, DEFAULT_B, DEFAULT_DELTA};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const THREADS_ENV: &str = "CSDE_THREADS";
const HIGH_DIM_WS: [usize; 4] = [81, 131, 211, 321];
const LOWDIM_XI: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Csde(#[from] CsdeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: CsdeError },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "csde", version, about = "Sparse mixture density estimation with adaptive weights")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit mixture weights to a sample.
    Fit(FitArgs),
    /// Run a Monte-Carlo experiment from a config file.
    Simulate(SimulateArgs),
    /// Report coherence conditions and oracle bounds for a coefficient vector.
    Diagnose(DiagnoseArgs),
    /// Select (lambda1, lambda2) by split-sample validation.
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long, default_value = "csde")]
    pub variant: Variant,
    /// Omit for csde to use concentration weights at level --delta.
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda2: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long = "B", default_value_t = DEFAULT_B)]
    pub b: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rescale the coefficients to sum to one.
    #[arg(long)]
    pub renormalize: bool,
    /// Also write the fitted density on a grid.
    #[arg(long)]
    pub curve: bool,
    #[arg(long, default_value_t = io::default_curve_points())]
    pub curve_points: usize,
    /// True coefficients, added as a column to the curve file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub renormalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub beta: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub approx_error: f64,
    /// Largest contamination bias, for the support-recovery bound.
    #[arg(long)]
    pub max_eps: Option<f64>,
    /// Directory for the report; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long, default_value = "csde")]
    pub variant: Variant,
    #[arg(long, value_parser = parse_range, default_value = "0,0.5")]
    pub lambda1_range: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "0,0.1")]
    pub lambda2_range: (f64, f64),
    #[arg(long, default_value_t = DEFAULT_XI)]
    pub xi: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected 'lo,hi', got '{s}'"))?;
    let lo = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok((lo, hi))
}

/// Files produced by a command, plus messages for stderr.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    /// Printed instead of written when the command has no output directory.
    pub stdout: Option<String>,
}

/// Manifest lines shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub out: String,
    pub params: Vec<(String, String)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "config = {}", self.config);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "timestamp = {}", timestamp());
        for (k, v) in &self.params {
            let _ = writeln!(s, "param.{k} = {v}");
        }
        s
    }
}

// SOURCE_DATE_EPOCH pins the timestamp for reproducible manifests
fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn in_file<T>(path: &Path, r: crate::error::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn load_dict(path: &Path) -> CliResult<Dictionary> {
    let text = read(path)?;
    in_file(path, io::parse_dictionary_spec(&text))
}

/// Writes `files` and the manifest into `dir`. On failure, removes what was
/// written and the directory itself if this call created it.
pub fn commit(dir: &Path, files: &[(String, String)], manifest: &Manifest) -> CliResult<()> {
    let created = !dir.exists();
    let io_err = |path: &Path, source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let all = files
        .iter()
        .cloned()
        .chain(std::iter::once((MANIFEST_NAME.to_string(), manifest.render())));
    for (name, body) in all {
        let path = dir.join(&name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if created {
                let _ = fs::remove_dir_all(dir);
            }
            return Err(io_err(&path, e));
        }
        written.push(path);
    }
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<Outputs> {
    let dict = load_dict(&args.dict)?;
    let sample = in_file(&args.sample, io::parse_sample(&read(&args.sample)?, dict.domain()))?;
    let gram = dict.gram()?;
    let options = FitOptions {
        max_iter: args.max_iter,
        tol: args.tol,
        record_objective: false,
    };
    let weights = match (args.lambda1, args.variant) {
        (Some(l1), v) => v.weights(&dict, l1, args.lambda2, args.b)?,
        (None, Variant::Csde) => csde_weights(&dict, sample.len(), args.delta, args.lambda2, args.b)?,
        (None, v) => return Err(invalid(format!("--lambda1 is required for {v}")).into()),
    };
    let problem = Problem::new(empirical_moments(&dict, &sample)?, &gram, weights)?;
    let result = fit(&problem, &options)?;
    let kkt = kkt_check(&result, &problem, 1e-6)?;
    let beta = if args.renormalize {
        result.renormalized()
    } else {
        result.beta_hat.clone()
    };

    let mut out = Outputs::default();
    if result.support.is_empty() {
        out.warnings
            .push("all coefficients are zero; lambda1 shrinks every atom out".to_string());
    }
    if !result.converged {
        out.warnings.push(format!(
            "solver stopped after {} sweeps without converging",
            result.iterations
        ));
    }
    let mut report = String::new();
    let _ = writeln!(report, "converged = {}", result.converged);
    let _ = writeln!(report, "iterations = {}", result.iterations);
    let _ = writeln!(report, "objective = {}", fmt_f64(result.objective));
    let _ = writeln!(report, "max_kkt_residual = {}", fmt_f64(kkt.max_residual));
    let _ = writeln!(
        report,
        "kkt_violations = {}",
        kkt.violations.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",")
    );
    let _ = writeln!(report, "support_size = {}", result.support.len());
    out.files.push(("coefficients.csv".into(), io::write_coefficients(&beta)));
    out.files.push(("kkt.txt".into(), report));
    if args.curve {
        let truth = match &args.truth {
            Some(p) => {
                let t = in_file(p, io::parse_beta(&read(p)?))?;
                if t.len() != dict.len() {
                    return Err(CsdeError::LengthMismatch {
                        expected: dict.len(),
                        got: t.len(),
                    }
                    .into());
                }
                Some(t)
            }
            None => None,
        };
        out.files.push((
            "curve.csv".into(),
            io::write_curve(&dict, &beta, truth.as_deref(), args.curve_points)?,
        ));
    }
    Ok(out)
}

fn fit_manifest(args: &FitArgs) -> Manifest {
    Manifest {
        command: "fit".into(),
        config: args.dict.display().to_string(),
        seed: args.seed,
        out: args.out.display().to_string(),
        params: vec![
            ("sample".into(), args.sample.display().to_string()),
            ("variant".into(), args.variant.to_string()),
            ("lambda1".into(), args.lambda1.map_or("concentration".into(), fmt_f64)),
            ("lambda2".into(), fmt_f64(args.lambda2)),
            ("delta".into(), fmt_f64(args.delta)),
            ("B".into(), fmt_f64(args.b)),
            ("renormalize".into(), args.renormalize.to_string()),
            ("tol".into(), fmt_f64(args.tol)),
            ("max_iter".into(), args.max_iter.to_string()),
        ],
    }
}

/// Experiments expanded from a simulation config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub experiments: Vec<(ExperimentConfig, Vec<EstimatorSpec>)>,
    pub options: RunOptions,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanOverrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub xi: Option<f64>,
    pub renormalize: bool,
}

const PLAN_KEYS: &[&str] = &[
    "family",
    "W",
    "n",
    "reps",
    "N_reps",
    "seed",
    "base_seed",
    "channel",
    "estimators",
    "tuning",
    "lambda1",
    "lambda2",
    "lambda1.*",
    "lambda2.*",
    "B",
    "xi",
    "lambda1_range",
    "lambda2_range",
    "em_xi",
    "renormalize",
    "tol",
    "max_iter",
];

fn alias<T: std::str::FromStr>(kv: &KeyValues, a: &str, b: &str) -> crate::error::Result<Option<T>> {
    match kv.parse_value(a)? {
        Some(v) => Ok(Some(v)),
        None => kv.parse_value(b),
    }
}

fn per_w(kv: &KeyValues, key: &str, variant: Variant, idx: usize, nw: usize) -> crate::error::Result<Option<f64>> {
    let specific = format!("{key}.{}", variant.name());
    let list: Option<Vec<f64>> = match kv.parse_list(&specific)? {
        Some(v) => Some(v),
        None => kv.parse_list(key)?,
    };
    match list {
        None => Ok(None),
        Some(v) if v.len() == 1 => Ok(Some(v[0])),
        Some(v) if v.len() == nw => Ok(Some(v[idx])),
        Some(v) => Err(invalid(format!(
            "{key} for {variant} has {} values, expected 1 or {nw}",
            v.len()
        ))),
    }
}

/// Parses a simulation config (flat `key = value`).
///
/// ```text
/// family = gaussian-4.2          # or poisson-4.3, lowdim-4.4, lowdim-4.4-s1, lowdim-4.4-s2
/// W = 81, 131, 211, 321
/// n = 100
/// reps = 100
/// seed = 1
/// channel = variance-inflated:1.1
/// estimators = lasso, enet, adalasso, csde, em
/// tuning = fixed                 # or cv
/// lambda1.csde = 0.053, 0.056, 0.058, 0.061
/// lambda2.csde = 0.027
/// ```
///
/// Missing fixed λs fall back to the built-in presets for the
/// high-dimensional families.
pub fn parse_simulation_plan(text: &str, ov: &PlanOverrides) -> crate::error::Result<SimulationPlan> {
    let kv = KeyValues::parse(text)?;
    kv.check_keys(PLAN_KEYS)?;
    let fam_name = kv.require("family")?;
    let families: Vec<Family> = match fam_name {
        "lowdim-4.4" | "lowdim" => vec![Family::LowDim1, Family::LowDim2],
        other => vec![other.parse()?],
    };
    let lowdim = families[0].is_lowdim();
    let ws: Vec<usize> = if lowdim {
        vec![0]
    } else {
        kv.parse_list("W")?.unwrap_or_else(|| HIGH_DIM_WS.to_vec())
    };
    let n: Option<usize> = kv.parse_value("n")?;
    let reps: Option<usize> = ov.reps.map_or_else(|| alias(&kv, "reps", "N_reps"), |r| Ok(Some(r)))?;
    let seed: u64 = match ov.seed {
        Some(s) => s,
        None => alias(&kv, "seed", "base_seed")?.unwrap_or(0),
    };
    let channel: Option<Channel> = kv.parse_value("channel")?;
    let estimator_names: Vec<String> = kv.parse_list("estimators")?.unwrap_or_else(|| {
        if lowdim {
            vec!["em".into(), "csde".into()]
        } else {
            Variant::ALL.iter().map(|v| v.name().to_string()).collect()
        }
    });
    let cv = match kv.get("tuning").unwrap_or(if lowdim { "cv" } else { "fixed" }) {
        "cv" => true,
        "fixed" => false,
        other => return Err(invalid(format!("tuning must be 'fixed' or 'cv', got '{other}'"))),
    };
    let b: f64 = kv.parse_value("B")?.unwrap_or(DEFAULT_B);
    let xi = match ov.xi {
        Some(x) => x,
        None => kv
            .parse_value("xi")?
            .unwrap_or(if lowdim { LOWDIM_XI } else { DEFAULT_XI }),
    };
    let range = |key: &str, default: (f64, f64)| -> crate::error::Result<(f64, f64)> {
        match kv.parse_list::<f64>(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok((v[0], v[1])),
            Some(_) => Err(invalid(format!("{key} needs two values 'lo, hi'"))),
        }
    };
    let tune_cfg = TuneConfig {
        lambda1_range: range("lambda1_range", DEFAULT_LAMBDA1_RANGE)?,
        lambda2_range: range("lambda2_range", DEFAULT_LAMBDA2_RANGE)?,
        xi,
        seed,
        ..TuneConfig::default()
    };
    if cv {
        tune_cfg.validate()?;
    }
    let em = EmConfig {
        xi: kv.parse_value("em_xi")?.unwrap_or(DEFAULT_EM_XI),
        ..EmConfig::default()
    };
    let options = RunOptions {
        fit: FitOptions {
            tol: kv.parse_value("tol")?.unwrap_or(DEFAULT_TOL),
            max_iter: kv.parse_value("max_iter")?.unwrap_or(DEFAULT_MAX_ITER),
            record_objective: false,
        },
        renormalize: ov.renormalize || kv.parse_bool("renormalize")?.unwrap_or(false),
    };

    let mut experiments = Vec::new();
    for &family in &families {
        for (wi, &w) in ws.iter().enumerate() {
            let mut config = family_config(family, w)?;
            config.base_seed = seed;
            if let Some(n) = n {
                config.n = n;
            }
            if let Some(r) = reps {
                config.n_reps = r;
            }
            if let Some(c) = channel {
                config.channel = c;
            }
            config.validate()?;
            let mut specs = Vec::new();
            for name in &estimator_names {
                if name == "em" {
                    specs.push(EstimatorSpec::Em(em.clone()));
                    continue;
                }
                let variant: Variant = name.parse()?;
                let tuning = if cv {
                    Tuning::Cv(tune_cfg)
                } else {
                    let preset = preset_params(family, w, variant);
                    let l1 = per_w(&kv, "lambda1", variant, wi, ws.len())?.or(preset.map(|p| p.lambda1));
                    let l2 = per_w(&kv, "lambda2", variant, wi, ws.len())?.or(preset.map(|p| p.lambda2));
                    let l1 = l1.ok_or_else(|| invalid(format!("no lambda1 for {variant} at W = {w}")))?;
                    let l2 = match variant {
                        Variant::Lasso | Variant::AdaLasso => 0.0,
                        _ => l2.ok_or_else(|| invalid(format!("no lambda2 for {variant} at W = {w}")))?,
                    };
                    Tuning::Fixed(VariantParams { lambda1: l1, lambda2: l2, b })
                };
                specs.push(EstimatorSpec::Penalized { variant, tuning });
            }
            experiments.push((config, specs));
        }
    }
    Ok(SimulationPlan { experiments, options })
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Outputs> {
    let text = read(&args.config)?;
    let ov = PlanOverrides {
        seed: args.seed,
        reps: args.reps,
        xi: args.xi,
        renormalize: args.renormalize,
    };
    let plan = in_file(&args.config, parse_simulation_plan(&text, &ov))?;
    let reports = plan
        .experiments
        .iter()
        .map(|(cfg, specs)| run_replications(cfg, specs, &plan.options))
        .collect::<crate::error::Result<Vec<ReplicationReport>>>()?;
    let mut out = Outputs::default();
    for r in &reports {
        for e in &r.estimators {
            if e.failures > 0 {
                out.warnings.push(format!(
                    "{} W={} {}: {} of {} replications failed",
                    r.family, r.w, e.label, e.failures, r.n_reps
                ));
            }
        }
    }
    out.files.push(("report.csv".into(), io::write_report(&reports)));
    out.files.push(("replications.csv".into(), io::write_replications(&reports)));
    Ok(out)
}

fn simulate_manifest(args: &SimulateArgs) -> Manifest {
    let mut params = Vec::new();
    if let Some(r) = args.reps {
        params.push(("reps".into(), r.to_string()));
    }
    if let Some(x) = args.xi {
        params.push(("xi".into(), fmt_f64(x)));
    }
    params.push(("renormalize".into(), args.renormalize.to_string()));
    Manifest {
        command: "simulate".into(),
        config: args.config.display().to_string(),
        seed: args.seed.unwrap_or(0),
        out: args.out.display().to_string(),
        params,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "not applicable".to_string(), |x| x.to_string())
}

fn opt_f(v: Option<f64>) -> String {
    v.map_or_else(|| "not applicable".to_string(), fmt_f64)
}

/// Flat `key = value` rendering of the theory diagnostics.
pub fn render_diagnostics(d: &crate::theory::OracleDiagnostics) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("W", d.w.to_string());
    kv("n", d.n.to_string());
    kv("delta", fmt_f64(d.delta));
    kv("gamma", fmt_f64(d.gamma));
    kv("v_half_delta", fmt_f64(d.v_half));
    kv("v_half_delta_over_W", fmt_f64(d.v_dw));
    kv("W_beta", d.w_beta.to_string());
    kv("H", fmt_f64(d.h));
    kv("F", fmt_f64(d.f));
    kv("rho_max", fmt_f64(d.rho_max));
    kv("rho_star", fmt_f64(d.rho_star));
    kv("sparse_index", d.sparse_index.to_string());
    kv("lambda_W", fmt_f64(d.lambda_w));
    kv("G_star", fmt_f64(d.g_star));
    kv("L", fmt_f64(d.l));
    kv("L_min", fmt_f64(d.l_min));
    kv("coherence_condition_lhs", fmt_f64(d.gamma_condition_lhs));
    kv("coherence_condition", d.gamma_condition_holds.to_string());
    kv("alpha_opt1", opt_f(d.alpha_opt1));
    kv("bound_t1", opt_f(d.bound_t1));
    kv("alpha_opt2", opt_f(d.alpha_opt2));
    kv("bound_t2", opt_f(d.bound_t2));
    kv("bound_c1", opt_f(d.bound_c1));
    kv("bound_c2", opt_f(d.bound_c2));
    kv("condition_a", opt(d.condition_a));
    kv("condition_b", d.condition_b.to_string());
    kv("support_probability", opt_f(d.theorem3_probability));
    kv("support_probability_vacuous", d.theorem3_vacuous.to_string());
    s
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<Outputs> {
    let dict = load_dict(&args.dict)?;
    let beta = in_file(&args.beta, io::parse_beta(&read(&args.beta)?))?;
    let gram: GramMatrix = dict.gram()?;
    let params = DiagnoseParams {
        n: args.n,
        delta: args.delta,
        gamma: args.gamma,
        approx_error: args.approx_error,
        max_eps: args.max_eps,
    };
    let d = diagnose(&dict, &gram, &beta, &params)?;
    let text = render_diagnostics(&d);
    let mut out = Outputs::default();
    if args.out.is_some() {
        out.files.push(("diagnostics.txt".into(), text));
    } else {
        out.stdout = Some(text);
    }
    Ok(out)
}

fn diagnose_manifest(args: &DiagnoseArgs, out: &Path) -> Manifest {
    Manifest {
        command: "diagnose".into(),
        config: args.dict.display().to_string(),
        seed: 0,
        out: out.display().to_string(),
        params: vec![
            ("beta".into(), args.beta.display().to_string()),
            ("n".into(), args.n.to_string()),
            ("delta".into(), fmt_f64(args.delta)),
            ("gamma".into(), fmt_f64(args.gamma)),
            ("approx_error".into(), fmt_f64(args.approx_error)),
            ("max_eps".into(), opt_f(args.max_eps)),
        ],
    }
}

pub fn cmd_tune(args: &TuneArgs) -> CliResult<Outputs> {
    let config = TuneConfig {
        lambda1_range: args.lambda1_range,
        lambda2_range: args.lambda2_range,
        xi: args.xi,
        seed: args.seed,
        ..TuneConfig::default()
    };
    config.validate()?;
    let dict = load_dict(&args.dict)?;
    let sample = in_file(&args.sample, io::parse_sample(&read(&args.sample)?, dict.domain()))?;
    let gram = dict.gram()?;
    let r = tune(&config, &sample, &dict, &gram, args.variant)?;
    let mut s = String::new();
    let _ = writeln!(s, "variant = {}", args.variant);
    let _ = writeln!(s, "lambda1 = {}", fmt_f64(r.lambda1));
    let _ = writeln!(s, "lambda2 = {}", fmt_f64(r.lambda2));
    let _ = writeln!(s, "score = {}", fmt_f64(r.score));
    let _ = writeln!(s, "rounds = {}", r.rounds);
    let _ = writeln!(s, "converged = {}", r.converged);
    let mut out = Outputs::default();
    if !r.converged {
        out.warnings.push(format!("tuning stopped after {} rounds", r.rounds));
    }
    out.files.push(("tune.txt".into(), s));
    Ok(out)
}

fn tune_manifest(args: &TuneArgs) -> Manifest {
    Manifest {
        command: "tune".into(),
        config: args.dict.display().to_string(),
        seed: args.seed,
        out: args.out.display().to_string(),
        params: vec![
            ("sample".into(), args.sample.display().to_string()),
            ("variant".into(), args.variant.to_string()),
            (
                "lambda1_range".into(),
                format!("{},{}", fmt_f64(args.lambda1_range.0), fmt_f64(args.lambda1_range.1)),
            ),
            (
                "lambda2_range".into(),
                format!("{},{}", fmt_f64(args.lambda2_range.0), fmt_f64(args.lambda2_range.1)),
            ),
            ("xi".into(), fmt_f64(args.xi)),
        ],
    }
}

/// Runs a parsed command line, writing its outputs. Warnings go to stderr.
pub fn run(cli: &Cli) -> CliResult<()> {
    let (outputs, target) = match &cli.command {
        Command::Fit(a) => (cmd_fit(a)?, Some((a.out.clone(), fit_manifest(a)))),
        Command::Simulate(a) => (cmd_simulate(a)?, Some((a.out.clone(), simulate_manifest(a)))),
        Command::Diagnose(a) => {
            let o = cmd_diagnose(a)?;
            let t = a.out.as_ref().map(|p| (p.clone(), diagnose_manifest(a, p)));
            (o, t)
        }
        Command::Tune(a) => (cmd_tune(a)?, Some((a.out.clone(), tune_manifest(a)))),
    };
    for w in &outputs.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(text) = &outputs.stdout {
        print!("{text}");
    }
    if let Some((dir, manifest)) = target {
        commit(&dir, &outputs.files, &manifest)?;
    }
    Ok(())
}

/// Caps the global rayon pool at `CSDE_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(invalid(format!("{THREADS_ENV} must be >= 1")).into());
        }
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
